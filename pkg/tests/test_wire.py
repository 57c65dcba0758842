import numpy as np
import pytest

from halotrain.errors import ProtocolError
from halotrain.wire import HEADER, MessageTag, WireMessage, decode, encode, encoded_size


class TestWire:
    def test_header_width(self):
        assert HEADER.itemsize == 15

    def test_feature_rows(self):
        rows = np.array([[1.0, 2.0, 3.0], [-4.5, 0.0, 1e-300]])
        buf = encode(WireMessage(MessageTag.LAYER_FEATURES, 7, 2, 1, 3, rows))
        assert len(buf) == encoded_size(WireMessage(MessageTag.LAYER_FEATURES, 7, 2, 1, 3, rows), 8) == 15 + 48
        msg = decode(buf, np.float64, cols=3)
        assert (msg.tag, msg.epoch, msg.layer, msg.src, msg.dst) == (MessageTag.LAYER_FEATURES, 7, 2, 1, 3)
        assert np.array_equal(msg.payload, rows)

    def test_index_sets_are_u32(self):
        msg = WireMessage(MessageTag.INDEX_SETS, 0, 0, 0, 1, np.array([5, 9, 70000]))
        buf = encode(msg)
        assert len(buf) == 15 + 12
        assert decode(buf, np.float32).payload.tolist() == [5, 9, 70000]

    def test_empty_index_set(self):
        buf = encode(WireMessage(MessageTag.INDEX_SETS, 1, 0, 2, 0, np.empty(0, dtype=np.int64)))
        assert decode(buf, np.float64).payload.size == 0

    def test_single_precision(self):
        rows = np.array([[0.5, 0.25]], dtype=np.float32)
        buf = encode(WireMessage(MessageTag.LAYER_GRADS, 0, 0, 0, 1, rows))
        assert len(buf) == 15 + 8
        assert decode(buf, np.float32, cols=2).payload.dtype == np.float32

    def test_reduce_chunk_stays_flat(self):
        buf = encode(WireMessage(MessageTag.REDUCE_CHUNK, 0, 3, 0, 1, np.arange(6.0)))
        assert decode(buf, np.float64).payload.shape == (6,)

    def test_truncated(self):
        with pytest.raises(ProtocolError, match="truncated"):
            decode(b"\x01\x00", np.float64)

    def test_unknown_tag(self):
        buf = bytearray(encode(WireMessage(MessageTag.INDEX_SETS, 0, 0, 0, 1, np.array([1]))))
        buf[0] = 9
        with pytest.raises(ProtocolError, match="unknown message tag"):
            decode(bytes(buf), np.float64)

    def test_size_mismatch(self):
        buf = encode(WireMessage(MessageTag.LAYER_FEATURES, 0, 0, 0, 1, np.ones((2, 2))))
        with pytest.raises(ProtocolError):
            decode(buf, np.float64, cols=3)
