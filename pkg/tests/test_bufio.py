import json

import numpy as np
import pytest

from tcoarsen.bufio import read_buffers, write_buffers
from tcoarsen.interp import BufferSet


def test_round_trip(tmp_path):
    bufs = BufferSet({"a": np.arange(5, dtype=np.float32) / 3,
                      "b": np.array([-1, 7], dtype=np.int32),
                      "c": np.array([2**32 - 1], dtype=np.uint32)},
                     {"N": 5, "s": 0.25}, {"tile": 16})
    manifest = write_buffers(bufs, tmp_path / "m.json")
    assert [e["offset"] for e in manifest["arrays"]] == [0, 20, 28]
    assert (tmp_path / "m.bin").stat().st_size == 32
    back = read_buffers(tmp_path / "m.json")
    for k, v in bufs.arrays.items():
        assert back.arrays[k].dtype == v.dtype and np.array_equal(back.arrays[k], v)
    assert back.scalars == {"N": 5, "s": 0.25} and back.local_sizes == {"tile": 16}


def test_rejects_foreign_and_truncated(tmp_path):
    write_buffers(BufferSet({"a": np.zeros(4, dtype=np.float32)}, {}), tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    data["arrays"][0]["length"] = 8
    (tmp_path / "m.json").write_text(json.dumps(data))
    with pytest.raises(ValueError):
        read_buffers(tmp_path / "m.json")
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        read_buffers(tmp_path / "x.json")


def test_unsupported_dtype(tmp_path):
    with pytest.raises(ValueError):
        write_buffers(BufferSet({"a": np.zeros(2)}, {}), tmp_path / "m.json")
