"""Length-prefixed wire protocol shared by the server and external clients.

Frame layout: a 4-byte big-endian payload length, then the payload, which is
a UTF-8 JSON header terminated by a single newline byte, optionally followed
by raw bytes (row-major 8-bit RGB pixels for observation-carrying responses).
The JSON encoding is canonical (sorted keys, no whitespace) so that encoding
is deterministic and round-trips byte for byte.

Requests: ``hello {version}``, ``make {task, preset|config, dynamic, seed}``,
``reset {}``, ``step {action}``, ``close {}``.  Responses: ``hello``,
``spec`` (after make), ``timestep`` (+pixel payload), ``error``, ``bye``.
"""

from __future__ import annotations

import json
import struct

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024
_LENGTH = struct.Struct(">I")

REQUEST_TYPES = ("hello", "make", "reset", "step", "close")
RESPONSE_TYPES = ("hello", "spec", "timestep", "error", "bye")


class ProtocolError(RuntimeError):
    """Malformed frame, header, or protocol-state violation."""


def encode_message(header: dict, payload: bytes = b"") -> bytes:
    """Frame a header dict (and optional raw payload) for the wire."""
    body = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body += b"\n" + payload
    if len(body) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(body)} bytes exceeds the {MAX_PAYLOAD} limit")
    return _LENGTH.pack(len(body)) + body


def decode_message(frame: bytes) -> tuple[dict, bytes]:
    """Inverse of :func:`encode_message` on a complete frame (prefix included)."""
    if len(frame) < _LENGTH.size:
        raise ProtocolError("truncated frame: missing length prefix")
    (length,) = _LENGTH.unpack(frame[:_LENGTH.size])
    body = frame[_LENGTH.size:]
    if len(body) != length:
        raise ProtocolError(f"truncated frame: header promises {length} bytes, got {len(body)}")
    return split_body(body)


def split_body(body: bytes) -> tuple[dict, bytes]:
    newline = body.find(b"\n")
    if newline < 0:
        raise ProtocolError("malformed frame: missing header terminator")
    try:
        header = json.loads(body[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON header: {exc}") from None
    if not isinstance(header, dict) or "type" not in header:
        raise ProtocolError("malformed header: expected a JSON object with a 'type' field")
    return header, body[newline + 1:]


def read_message(stream) -> tuple[dict, bytes]:
    """Read one framed message from a blocking binary stream.

    Raises ``EOFError`` on a clean end-of-stream before any bytes,
    :class:`ProtocolError` on truncation or malformed content.
    """
    prefix = _read_exact(stream, _LENGTH.size, allow_eof=True)
    if prefix is None:
        raise EOFError("end of stream")
    (length,) = _LENGTH.unpack(prefix)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds the {MAX_PAYLOAD} limit")
    body = _read_exact(stream, length)
    return split_body(body)


def write_message(stream, header: dict, payload: bytes = b"") -> None:
    stream.write(encode_message(header, payload))
    stream.flush()


def _read_exact(stream, n: int, allow_eof: bool = False):
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            if allow_eof and remaining == n:
                return None
            raise ProtocolError(f"truncated frame: expected {n} bytes, stream ended early")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


# -- message builders ---------------------------------------------------------

def hello_request(version: int = PROTOCOL_VERSION) -> dict:
    return {"type": "hello", "version": int(version)}


def make_request(task: str, preset: str | None = None, config: dict | None = None,
                 dynamic: bool = False, seed: int = 0) -> dict:
    header = {"type": "make", "task": task, "dynamic": bool(dynamic), "seed": int(seed)}
    if (preset is None) == (config is None):
        raise ProtocolError("make requires exactly one of preset or config")
    if preset is not None:
        header["preset"] = preset
    else:
        header["config"] = config
    return header


def step_request(action) -> dict:
    return {"type": "step", "action": [float(a) for a in action]}


def timestep_response(reward: float, discount: float, last: bool, frame) -> tuple[dict, bytes]:
    height, width, channels = frame.shape
    header = {
        "type": "timestep",
        "reward": float(reward),
        "discount": float(discount),
        "last": bool(last),
        "width": int(width),
        "height": int(height),
        "channels": int(channels),
    }
    return header, frame.tobytes()


def error_response(message: str) -> dict:
    return {"type": "error", "message": str(message)}
