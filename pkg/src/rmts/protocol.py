"""Framed binary wire protocol for the streaming layer.

Every message is::

    magic 'RMTS' (4 bytes) | version u8 = 1 | type u8 | body length u32 | body

with all integers big-endian and all reals 32-bit IEEE-754 big-endian.
Bodies by type:

    HELLO, HEARTBEAT   (empty)
    STREAM_OPEN        stream_id u32
    STREAM_CLOSE, ACK  stream_id u32 | frame_no u64
    ERROR              stream_id u32 | frame_no u64 | text_len u16 | utf-8 text
    FRAME              stream_id u32 | frame_no u64 | det_count u16 |
                       per detection: left, top, width, height, score f32 |
                       class u16 | emb_dim u16 | emb_dim f32 |
                       cmc_flag u8 | if 1: m00, m01, m10, m11, t0, t1 f32
    TRACK_RESULT       stream_id u32 | frame_no u64 | count u16 |
                       per track: id u32 | box 4 x f32 | score f32 | class u16

Type code 9 is reserved for a future raw pixel-frame payload and has no
defined body.  Encoded messages never exceed 16 MiB.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from .core import AffineTransform, BBox, Detection
from .errors import NeedMoreData, ProtocolError
from .tracker import OutputTrack

MAGIC = b"RMTS"
VERSION = 1
MAX_BODY = 16 * 1024 * 1024 - 10
_HEADER = struct.Struct(">4sBBI")


class MessageType(IntEnum):
    HELLO = 1
    STREAM_OPEN = 2
    FRAME = 3
    STREAM_CLOSE = 4
    ACK = 5
    TRACK_RESULT = 6
    ERROR = 7
    HEARTBEAT = 8
    PIXEL_FRAME = 9  # reserved, body undefined


@dataclass(frozen=True)
class Message:
    msg_type: MessageType
    stream_id: int = 0
    frame_no: int = 0
    detections: tuple[Detection, ...] = field(default_factory=tuple)
    camera_motion: Optional[AffineTransform] = None
    tracks: tuple[OutputTrack, ...] = field(default_factory=tuple)
    error_text: str = ""


def frame_message(
    stream_id: int,
    frame_no: int,
    detections,
    camera_motion: Optional[AffineTransform] = None,
) -> Message:
    return Message(
        MessageType.FRAME,
        stream_id=stream_id,
        frame_no=frame_no,
        detections=tuple(detections),
        camera_motion=camera_motion,
    )


def _require_u16(value: int, what: str) -> int:
    if not 0 <= value <= 0xFFFF:
        raise ProtocolError(f"{what} out of u16 range: {value}")
    return value


def _encode_body(msg: Message) -> bytes:
    t = msg.msg_type
    if t in (MessageType.HELLO, MessageType.HEARTBEAT):
        return b""
    if t == MessageType.STREAM_OPEN:
        return struct.pack(">I", msg.stream_id)
    if t in (MessageType.STREAM_CLOSE, MessageType.ACK):
        return struct.pack(">IQ", msg.stream_id, msg.frame_no)
    if t == MessageType.ERROR:
        text = msg.error_text.encode("utf-8")
        _require_u16(len(text), "error text length")
        return struct.pack(">IQH", msg.stream_id, msg.frame_no, len(text)) + text
    if t == MessageType.FRAME:
        parts = [
            struct.pack(
                ">IQH",
                msg.stream_id,
                msg.frame_no,
                _require_u16(len(msg.detections), "detection count"),
            )
        ]
        for det in msg.detections:
            box = det.bbox
            emb = det.embedding
            dim = 0 if emb is None else _require_u16(emb.shape[0], "embedding dim")
            parts.append(
                struct.pack(
                    ">5fHH",
                    box.left,
                    box.top,
                    box.width,
                    box.height,
                    det.score,
                    _require_u16(det.class_id, "class id"),
                    dim,
                )
            )
            if dim:
                parts.append(struct.pack(f">{dim}f", *emb.tolist()))
        cm = msg.camera_motion
        if cm is None:
            parts.append(b"\x00")
        else:
            m, tr = cm.linear, cm.translation
            parts.append(
                b"\x01"
                + struct.pack(">6f", m[0, 0], m[0, 1], m[1, 0], m[1, 1], tr[0], tr[1])
            )
        return b"".join(parts)
    if t == MessageType.TRACK_RESULT:
        parts = [
            struct.pack(
                ">IQH",
                msg.stream_id,
                msg.frame_no,
                _require_u16(len(msg.tracks), "track count"),
            )
        ]
        for tr in msg.tracks:
            box = tr.bbox
            parts.append(
                struct.pack(
                    ">I5fH",
                    tr.track_id,
                    box.left,
                    box.top,
                    box.width,
                    box.height,
                    tr.score,
                    _require_u16(tr.class_id, "class id"),
                )
            )
        return b"".join(parts)
    raise ProtocolError(f"cannot encode reserved/unknown message type {t!r}")


def encode_message(msg: Message) -> bytes:
    body = _encode_body(msg)
    if len(body) > MAX_BODY:
        raise ProtocolError(f"message body of {len(body)} bytes exceeds the 16 MiB cap")
    return _HEADER.pack(MAGIC, VERSION, int(msg.msg_type), len(body)) + body


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.pos = offset

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.data):
            raise ProtocolError("body shorter than its declared fields")
        out = s.unpack_from(self.data, self.pos)
        self.pos += s.size
        return out


def _decode_body(msg_type: MessageType, body: bytes) -> Message:
    r = _Reader(body, 0)
    if msg_type in (MessageType.HELLO, MessageType.HEARTBEAT):
        msg = Message(msg_type)
    elif msg_type == MessageType.STREAM_OPEN:
        (stream_id,) = r.take(">I")
        msg = Message(msg_type, stream_id=stream_id)
    elif msg_type in (MessageType.STREAM_CLOSE, MessageType.ACK):
        stream_id, frame_no = r.take(">IQ")
        msg = Message(msg_type, stream_id=stream_id, frame_no=frame_no)
    elif msg_type == MessageType.ERROR:
        stream_id, frame_no, n = r.take(">IQH")
        if r.pos + n > len(body):
            raise ProtocolError("error text truncated")
        text = body[r.pos : r.pos + n].decode("utf-8")
        r.pos += n
        msg = Message(msg_type, stream_id=stream_id, frame_no=frame_no, error_text=text)
    elif msg_type == MessageType.FRAME:
        stream_id, frame_no, count = r.take(">IQH")
        dets = []
        for _ in range(count):
            left, top, width, height, score, cls, dim = r.take(">5fHH")
            emb = None
            if dim:
                emb = np.array(r.take(f">{dim}f"), dtype=np.float32)
            dets.append(
                Detection(
                    bbox=BBox(left, top, width, height),
                    score=min(1.0, max(0.0, score)),
                    class_id=cls,
                    embedding=emb,
                )
            )
        (flag,) = r.take(">B")
        cm = None
        if flag == 1:
            m00, m01, m10, m11, t0, t1 = r.take(">6f")
            cm = AffineTransform(
                np.array([[m00, m01], [m10, m11]], dtype=np.float64),
                np.array([t0, t1], dtype=np.float64),
            )
        elif flag != 0:
            raise ProtocolError(f"bad camera-motion flag {flag}")
        msg = Message(
            msg_type,
            stream_id=stream_id,
            frame_no=frame_no,
            detections=tuple(dets),
            camera_motion=cm,
        )
    elif msg_type == MessageType.TRACK_RESULT:
        stream_id, frame_no, count = r.take(">IQH")
        tracks = []
        for _ in range(count):
            tid, left, top, width, height, score, cls = r.take(">I5fH")
            tracks.append(OutputTrack(tid, BBox(left, top, width, height), score, cls))
        msg = Message(
            msg_type, stream_id=stream_id, frame_no=frame_no, tracks=tuple(tracks)
        )
    else:
        raise ProtocolError(f"unsupported message type {int(msg_type)}")
    if r.pos != len(body):
        raise ProtocolError(
            f"{msg_type.name} body has {len(body) - r.pos} undecoded trailing bytes"
        )
    return msg


def decode_message(data: bytes) -> tuple[Message, int]:
    """Decode one message from the head of ``data``.

    Returns the message and the number of bytes consumed; trailing bytes are
    untouched.  Raises NeedMoreData when the buffer is incomplete and
    ProtocolError (connection fatal) on bad magic, version, type or body.
    """
    if len(data) < _HEADER.size:
        if MAGIC.startswith(bytes(data[: len(MAGIC)])):
            raise NeedMoreData()
        raise ProtocolError("bad magic")
    magic, version, type_code, length = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unknown protocol version {version}")
    if length > MAX_BODY:
        raise ProtocolError(f"declared body of {length} bytes exceeds the 16 MiB cap")
    try:
        msg_type = MessageType(type_code)
    except ValueError:
        raise ProtocolError(f"unknown message type {type_code}") from None
    if msg_type == MessageType.PIXEL_FRAME:
        raise ProtocolError("pixel-frame payload is reserved and not defined")
    end = _HEADER.size + length
    if len(data) < end:
        raise NeedMoreData()
    msg = _decode_body(msg_type, bytes(data[_HEADER.size : end]))
    return msg, end


class StreamDecoder:
    """Incremental decoder: feed arbitrary chunks, get complete messages.

    Byte-by-byte feeding yields exactly the same messages as decoding a whole
    buffer at once.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out = []
        while True:
            try:
                msg, consumed = decode_message(bytes(self._buf))
            except NeedMoreData:
                break
            del self._buf[:consumed]
            out.append(msg)
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
