import struct

import numpy as np
import pytest
from PIL import Image

from nrhdr.core import HdrImage
from nrhdr.io import PfmError, UnsupportedFormatError, read_pfm, to_bytes, write_pfm, write_png


def test_round_trip_bit_exact(tmp_path):
    img = HdrImage.from_flat(2, 2, [0.0, 0.5, 1.0, 2.0])
    for little in (True, False):
        p = tmp_path / f"rt{little}.pfm"
        write_pfm(img, p, little_endian=little)
        assert np.array_equal(read_pfm(p).data, img.data)


def test_random_float32_round_trip(tmp_path):
    a = (np.random.default_rng(0).random((5, 7)) * 100).astype(np.float32).astype(np.float64)
    write_pfm(HdrImage(a), tmp_path / "r.pfm")
    assert np.array_equal(read_pfm(tmp_path / "r.pfm").data, a)


def test_reference_little_endian_file(tmp_path):
    # hand-built per the format: bottom row first, little-endian float32
    payload = struct.pack("<4f", 1.0, 2.0, 0.0, 0.5)
    p = tmp_path / "ref.pfm"
    p.write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
    assert read_pfm(p).data.tolist() == [[0.0, 0.5], [1.0, 2.0]]
    write_pfm(read_pfm(p), tmp_path / "out.pfm")
    assert (tmp_path / "out.pfm").read_bytes() == p.read_bytes()


def test_big_endian(tmp_path):
    p = tmp_path / "be.pfm"
    p.write_bytes(b"Pf\n1 1\n1.0\n" + struct.pack(">f", 3.25))
    assert read_pfm(p).data[0, 0] == 3.25


def test_colour_rejected(tmp_path):
    p = tmp_path / "c.pfm"
    p.write_bytes(b"PF\n1 1\n-1.0\n" + b"\0" * 12)
    with pytest.raises(UnsupportedFormatError, match="grayscale"):
        read_pfm(p)


@pytest.mark.parametrize("blob", [b"P6\n1 1\n255\n\0\0\0", b"Pf\n2 2\n", b"Pf\nx 2\n-1.0\n" + b"\0" * 16,
                                  b"Pf\n2 2\n-1.0\n" + b"\0" * 15, b"Pf\n2 2\n0\n" + b"\0" * 16])
def test_malformed(tmp_path, blob):
    p = tmp_path / "bad.pfm"
    p.write_bytes(blob)
    with pytest.raises(PfmError):
        read_pfm(p)


def test_png_rounding(tmp_path):
    assert to_bytes([0.5])[0] == 128
    assert to_bytes([0.0, 1.0, 2.0, -1.0]).tolist() == [0, 255, 255, 0]
    write_png(np.zeros((3, 4)), tmp_path / "z.png")
    with Image.open(tmp_path / "z.png") as im:
        assert im.mode == "L" and not np.asarray(im).any()


def test_png_colour(tmp_path):
    rgb = np.zeros((2, 2, 3))
    rgb[0, 0] = (1, 0, 0)
    write_png(rgb, tmp_path / "c.png")
    with Image.open(tmp_path / "c.png") as im:
        px = np.asarray(im)
    assert im.mode == "RGB" and px[0, 0].tolist() == [255, 0, 0]
    with pytest.raises(ValueError):
        write_png(np.zeros((2, 2, 4)), tmp_path / "x.png")
