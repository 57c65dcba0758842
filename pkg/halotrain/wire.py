"""
Byte layout of worker-to-worker messages.

    tag u8 | epoch u32 | layer u16 | src u16 | dst u16 | rows u32 | payload

All integers are little-endian; the payload is row-major. Index sets travel
as u32 ids, everything else as f32/f64 scalars.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ProtocolError

HEADER = np.dtype([
    ("tag", "u1"),
    ("epoch", "<u4"),
    ("layer", "<u2"),
    ("src", "<u2"),
    ("dst", "<u2"),
    ("rows", "<u4"),
])
INDEX_DTYPE = np.dtype("<u4")


class MessageTag(IntEnum):
    INDEX_SETS = 1
    LAYER_FEATURES = 2
    LAYER_GRADS = 3
    REDUCE_CHUNK = 4


@dataclass(eq=False)
class WireMessage:
    tag: MessageTag
    epoch: int
    layer: int
    src: int
    dst: int
    payload: np.ndarray

    @property
    def rows(self) -> int:
        return int(self.payload.shape[0]) if self.payload.ndim else 1

    @property
    def cols(self) -> int:
        return int(self.payload.shape[1]) if self.payload.ndim == 2 else 1

    def __str__(self) -> str:
        return (f"{self.tag.name}(epoch={self.epoch}, layer={self.layer}, "
                f"{self.src}->{self.dst}, shape={self.payload.shape})")


def payload_dtype(tag: MessageTag, scalar: np.dtype) -> np.dtype:
    return INDEX_DTYPE if tag is MessageTag.INDEX_SETS else np.dtype(scalar).newbyteorder("<")


def encoded_size(msg: WireMessage, width: int) -> int:
    """Bytes on the wire for ``msg`` when scalars are ``width`` bytes wide."""
    if msg.tag is MessageTag.INDEX_SETS:
        width = INDEX_DTYPE.itemsize
    return HEADER.itemsize + int(msg.payload.size) * width


def encode(msg: WireMessage) -> bytes:
    header = np.zeros(1, dtype=HEADER)
    header["tag"] = int(msg.tag)
    header["epoch"] = msg.epoch
    header["layer"] = msg.layer
    header["src"] = msg.src
    header["dst"] = msg.dst
    header["rows"] = msg.rows
    body = np.ascontiguousarray(msg.payload, dtype=payload_dtype(msg.tag, msg.payload.dtype))
    return header.tobytes() + body.tobytes()


def decode(buf: bytes, dtype: np.dtype, cols: int = 1) -> WireMessage:
    """
    Parse one message. ``dtype`` is the scalar type of feature/gradient
    payloads; ``cols`` is the row width (1 for index sets and flat chunks).
    """
    if len(buf) < HEADER.itemsize:
        raise ProtocolError(f"truncated message: {len(buf)} bytes, header needs {HEADER.itemsize}")
    header = np.frombuffer(buf, dtype=HEADER, count=1)[0]
    try:
        tag = MessageTag(int(header["tag"]))
    except ValueError:
        raise ProtocolError(f"unknown message tag {int(header['tag'])}")

    rows = int(header["rows"])
    body_dtype = payload_dtype(tag, dtype)
    width = 1 if tag is MessageTag.INDEX_SETS else cols
    expected = HEADER.itemsize + rows * width * body_dtype.itemsize
    if len(buf) != expected:
        raise ProtocolError(f"{tag.name} message is {len(buf)} bytes, expected {expected}")

    payload = np.frombuffer(buf, dtype=body_dtype, offset=HEADER.itemsize).copy()
    if tag is MessageTag.INDEX_SETS:
        payload = payload.astype(np.int64)
    else:
        payload = payload.astype(np.dtype(dtype).type, copy=False)
        if tag is not MessageTag.REDUCE_CHUNK:
            payload = payload.reshape(rows, cols)
    return WireMessage(
        tag=tag,
        epoch=int(header["epoch"]),
        layer=int(header["layer"]),
        src=int(header["src"]),
        dst=int(header["dst"]),
        payload=payload,
    )
