"""Long-lived bridge process: handshake, then one response line per
request line.  Malformed requests and handler failures produce error
responses and the process stays alive; end of input exits cleanly."""
from __future__ import annotations

import argparse
import json
import sys
import traceback

from .mock import mock_reconstruct
from .protocol import BridgeRequest, ProtocolError, error_response, handshake


def serve(handler, stdin=None, stdout=None, default_scratch=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    emit(handshake())
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            emit(error_response(f"malformed request line: {exc}"))
            continue
        try:
            if default_scratch and not payload.get("scratch"):
                payload = dict(payload, scratch=default_scratch)
            request = BridgeRequest.from_dict(payload)
            emit(handler(request))
        except ProtocolError as exc:
            emit(error_response(str(exc)))
        except Exception as exc:  # handler bug: report and keep serving
            summary = traceback.format_exception_only(type(exc), exc)[-1].strip()
            emit(error_response(f"handler failed: {summary}"))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="recon-bridge-mock", description=__doc__)
    parser.add_argument("--scratch", default=None,
                        help="directory for response tensors when requests name none")
    args = parser.parse_args(argv)
    return serve(mock_reconstruct, default_scratch=args.scratch)


if __name__ == "__main__":
    sys.exit(main())
