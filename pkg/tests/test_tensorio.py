"""Binary dump format and weight snapshots."""

import io
import struct

import numpy as np
import pytest
import torch
import torch.nn as nn

from promptvos.nn.tensorio import load_weights, read_array, save_weights, write_array


def test_dump_roundtrip_preserves_bits():
    rng = np.random.default_rng(0)
    arrays = [rng.standard_normal(s) for s in [(3, 4), (2, 2, 2), (7,)]]
    buf = io.BytesIO()
    for a in arrays:
        write_array(buf, a)
    buf.seek(0)
    for a in arrays:
        b = read_array(buf)
        assert b.shape == a.shape
        assert np.array_equal(a, b)


def test_dump_header_layout():
    buf = io.BytesIO()
    write_array(buf, np.zeros((2, 3)))
    raw = buf.getvalue()
    assert raw[:4] == b"VRT0"
    assert struct.unpack("<I", raw[4:8]) == (2,)
    assert struct.unpack("<II", raw[8:16]) == (2, 3)
    assert len(raw) == 16 + 6 * 8


def test_dump_bad_magic_rejected():
    with pytest.raises(ValueError):
        read_array(io.BytesIO(b"XXXX" + b"\x00" * 16))


class _Toy(nn.Module):
    def __init__(self):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(3, 2))
        self.frozen = nn.Parameter(torch.randn(4), requires_grad=False)


def test_snapshot_roundtrip(tmp_path):
    torch.manual_seed(0)
    source = _Toy()
    save_weights(tmp_path / "snap", source)
    manifest = (tmp_path / "snap" / "manifest.txt").read_text().splitlines()
    assert manifest == ["weight 0 2 3 2", "frozen 1 1 4"]

    torch.manual_seed(1)
    target = _Toy()
    assert not torch.equal(target.weight, source.weight)
    load_weights(tmp_path / "snap", target)
    assert torch.equal(target.weight, source.weight)
    assert torch.equal(target.frozen, source.frozen)
    assert not target.frozen.requires_grad


def test_snapshot_shape_mismatch_rejected(tmp_path):
    torch.manual_seed(0)
    save_weights(tmp_path / "snap", _Toy())

    class Other(nn.Module):
        def __init__(self):
            super().__init__()
            self.weight = nn.Parameter(torch.randn(3, 3))
            self.frozen = nn.Parameter(torch.randn(4), requires_grad=False)

    with pytest.raises(ValueError):
        load_weights(tmp_path / "snap", Other())
