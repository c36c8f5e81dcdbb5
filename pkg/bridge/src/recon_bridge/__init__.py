"""Out-of-process scene-reconstruction bridge speaking protocol v1."""

from .mock import mock_reconstruct
from .protocol import PROTOCOL_NAME, PROTOCOL_VERSION, BridgeRequest, error_response
from .server import serve
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"
