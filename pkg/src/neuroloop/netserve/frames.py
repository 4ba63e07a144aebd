"""Length-prefixed binary framing for the stream plane.

Frame layout (little-endian): magic "SSP1" (4 bytes), version (1), type (1),
flags (2), payload length (4), payload. SAMPLES payloads carry raw
channel-major float32 samples; control frames carry UTF-8 JSON.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..sigcore import SampleBlock

MAGIC = b"SSP1"
VERSION = 1
MAX_PAYLOAD = 1 << 20

_HEADER = struct.Struct("<4sBBHI")
HEADER_SIZE = _HEADER.size  # 12
_SAMPLES_HEAD = struct.Struct("<QHH")


class FrameType(IntEnum):
    HELLO = 0x01
    CONFIG = 0x02
    SAMPLES = 0x03
    FEATURES = 0x04
    STATE = 0x05
    COMMAND = 0x06
    ACK = 0x07
    ERROR = 0x08


class ProtocolError(Exception):
    """Unrecoverable framing fault (bad magic/version/length); close the
    connection."""


class FrameSizeError(ValueError):
    """Payload exceeds MAX_PAYLOAD."""


class UnknownFrameTypeError(Exception):
    """Valid framing with an unknown type byte; the frame is consumable.

    ``consumed`` tells the caller how many bytes to skip.
    """

    def __init__(self, frame_type: int, consumed: int):
        self.frame_type = frame_type
        self.consumed = consumed
        super().__init__(f"unknown frame type 0x{frame_type:02x}")


@dataclass(frozen=True)
class Frame:
    type: FrameType
    payload: bytes
    flags: int = 0


def encode_frame(frame_type, payload: bytes, flags: int = 0) -> bytes:
    """Serialize one frame."""
    payload = bytes(payload)
    if len(payload) > MAX_PAYLOAD:
        raise FrameSizeError(
            f"payload of {len(payload)} bytes exceeds limit {MAX_PAYLOAD}"
        )
    return _HEADER.pack(MAGIC, VERSION, int(frame_type), flags, len(payload)) + payload


def decode_frame(buffer) -> tuple[Frame, int] | None:
    """Decode the first frame of ``buffer``; None while incomplete.

    Returns (frame, bytes_consumed). Never consumes partial frames: when the
    buffer holds less than header+payload, the caller keeps every byte.
    Corrupt magic/version/length raise ProtocolError (fatal); an unknown type
    with valid framing raises UnknownFrameTypeError carrying the skippable
    byte count.
    """
    if len(buffer) < HEADER_SIZE:
        return None
    magic, version, ftype, flags, length = _HEADER.unpack_from(buffer)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"declared payload of {length} bytes exceeds limit")
    total = HEADER_SIZE + length
    if len(buffer) < total:
        return None
    try:
        frame_type = FrameType(ftype)
    except ValueError:
        raise UnknownFrameTypeError(ftype, total) from None
    payload = bytes(buffer[HEADER_SIZE:total])
    return Frame(type=frame_type, payload=payload, flags=flags), total


class FrameDecoder:
    """Incremental decoder for a TCP byte stream.

    ``feed`` buffers bytes and yields complete frames; unknown-type frames
    are skipped and counted. ProtocolError propagates (the connection is no
    longer trustworthy).
    """

    def __init__(self):
        self._buf = bytearray()
        self.skipped_unknown = 0

    def feed(self, chunk: bytes) -> list[Frame]:
        self._buf.extend(chunk)
        frames = []
        while True:
            try:
                decoded = decode_frame(self._buf)
            except UnknownFrameTypeError as exc:
                del self._buf[:exc.consumed]
                self.skipped_unknown += 1
                continue
            if decoded is None:
                return frames
            frame, consumed = decoded
            del self._buf[:consumed]
            frames.append(frame)

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


def pack_samples(first_sample_index: int, samples) -> bytes:
    """SAMPLES payload: first index (u64), channels (u16), samples (u16),
    then float32 channel-major sample data."""
    samples = np.asarray(samples)
    n_ch, n_samp = samples.shape
    head = _SAMPLES_HEAD.pack(first_sample_index, n_ch, n_samp)
    return head + np.ascontiguousarray(samples, dtype="<f4").tobytes()


def pack_samples_block(block: SampleBlock) -> bytes:
    return pack_samples(block.first_sample_index, block.samples)


def unpack_samples(payload: bytes) -> tuple[int, np.ndarray]:
    """Inverse of pack_samples: (first_sample_index, float64 array)."""
    if len(payload) < _SAMPLES_HEAD.size:
        raise ProtocolError("SAMPLES payload shorter than its header")
    first, n_ch, n_samp = _SAMPLES_HEAD.unpack_from(payload)
    expected = _SAMPLES_HEAD.size + 4 * n_ch * n_samp
    if len(payload) != expected:
        raise ProtocolError(
            f"SAMPLES payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4", offset=_SAMPLES_HEAD.size)
    return first, data.reshape(n_ch, n_samp).astype(np.float64)


def encode_json_frame(frame_type, doc: dict) -> bytes:
    return encode_frame(frame_type, json.dumps(doc).encode("utf-8"))


def decode_json_payload(frame: Frame) -> dict:
    try:
        return json.loads(frame.payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON payload in {frame.type.name}") from exc
