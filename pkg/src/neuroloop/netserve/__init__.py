"""Framed wire protocol, persistence, and the session service."""

from .frames import (Frame, FrameDecoder, FrameSizeError, FrameType,
                     ProtocolError, UnknownFrameTypeError, decode_frame,
                     encode_frame, pack_samples, pack_samples_block,
                     unpack_samples)
from .store import LessonNotFoundError, SessionNotFoundError, SessionStore

__all__ = [
    "Frame", "FrameDecoder", "FrameSizeError", "FrameType", "ProtocolError",
    "UnknownFrameTypeError", "decode_frame", "encode_frame", "pack_samples",
    "pack_samples_block", "unpack_samples",
    "LessonNotFoundError", "SessionNotFoundError", "SessionStore",
]
