import math
import warnings

import numpy as np
import pytest

from core.errors import DomainError
from core.image_io import (
    ellipse_table,
    load_maps,
    read_grid,
    read_image,
    save_maps,
    write_grid,
    write_image,
    write_table,
)
from core.types import Image, ParamMaps


@pytest.fixture
def ramp():
    """Horizontal intensity ramp on [0, 1]."""
    return Image(data=np.tile(np.linspace(0.0, 1.0, 12), (7, 1)))


def test_pgm_round_trip_8_bit(tmp_path, ramp):
    """Test that 8-bit PGM keeps values to within half a grey level."""
    path = write_image(ramp, tmp_path / "ramp.pgm")
    image, depth = read_image(path)
    assert depth == 8
    assert image.shape == (7, 12)
    np.testing.assert_allclose(image.data, ramp.data, atol=0.5 / 255 + 1e-12)
    assert path.read_bytes().startswith(b"P5")


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_round_trip_16_bit(tmp_path, ramp, suffix):
    """Test 16-bit files in both formats."""
    path = write_image(ramp, tmp_path / f"ramp{suffix}", bit_depth=16)
    image, depth = read_image(path)
    assert depth == 16
    np.testing.assert_allclose(image.data, ramp.data, atol=0.5 / 65535 + 1e-12)


def test_16_bit_png_writes_without_deprecation(tmp_path, ramp):
    """Test that 16-bit PNG output raises no Pillow deprecation warning."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", DeprecationWarning)
        path = write_image(ramp, tmp_path / "ramp16.png", bit_depth=16)
    image, depth = read_image(path)
    assert depth == 16
    assert image.data.max() == 1.0


def test_write_image_clips_and_validates(tmp_path):
    """Test clipping to [0, 1] and rejection of unknown formats and depths."""
    path = write_image(Image(data=np.array([[-0.5, 1.5]])), tmp_path / "clip.png")
    image, _ = read_image(path)
    np.testing.assert_array_equal(image.data, [[0.0, 1.0]])
    with pytest.raises(DomainError):
        write_image(Image(data=np.zeros((2, 2))), tmp_path / "x.jpg")
    with pytest.raises(DomainError):
        write_image(Image(data=np.zeros((2, 2))), tmp_path / "x.png", bit_depth=12)


def test_read_image_missing_or_corrupt(tmp_path):
    """Test that unreadable files raise DomainError."""
    with pytest.raises(DomainError):
        read_image(tmp_path / "missing.pgm")
    bad = tmp_path / "bad.png"
    bad.write_text("not an image")
    with pytest.raises(DomainError):
        read_image(bad)


def test_grid_header_and_round_trip(tmp_path, rng):
    """Test the width,height header and exact float round trip."""
    values = rng.standard_normal((3, 5))
    path = write_grid(values, tmp_path / "grid.csv")
    assert path.read_text().splitlines()[0] == "5,3"
    np.testing.assert_array_equal(read_grid(path), values)


def test_grid_header_mismatch(tmp_path):
    """Test that a header disagreeing with the data is rejected."""
    path = tmp_path / "grid.csv"
    path.write_text("4,2\n1,2,3\n4,5,6\n")
    with pytest.raises(DomainError):
        read_grid(path)


def test_maps_save_and_load(tmp_path):
    """Test that saved maps reload with the same p, e1, theta and m."""
    shape = (4, 3)
    maps = ParamMaps.from_geometry(
        np.full(shape, 0.8), np.full(shape, 1.3), np.full(shape, math.pi / 3), np.full(shape, 0.2)
    )
    paths = save_maps(maps, tmp_path, prefix="maps_")
    assert sorted(p.name for p in paths.values()) == ["maps_e1.csv", "maps_m.csv", "maps_p.csv", "maps_theta.csv"]
    loaded = load_maps(tmp_path, prefix="maps_")
    np.testing.assert_allclose(loaded.p, maps.p)
    np.testing.assert_allclose(loaded.e1, maps.e1)
    np.testing.assert_allclose(loaded.theta, maps.theta, atol=1e-12)
    np.testing.assert_allclose(loaded.m, maps.m)


def test_ellipse_table(tmp_path):
    """Test the ellipse columns, stride and orientation in degrees."""
    shape = (4, 4)
    maps = ParamMaps.from_geometry(np.ones(shape), np.full(shape, 1.4), np.full(shape, math.pi / 4))
    table = ellipse_table(maps, stride=2)
    assert list(table.columns) == ["x", "y", "a", "b", "eccentricity", "theta"]
    assert len(table) == 4
    assert table["theta"].iloc[0] == pytest.approx(45.0)
    assert table["a"].iloc[0] == pytest.approx(math.sqrt(1.4))
    path = write_table(table, tmp_path / "ellipses.csv")
    assert path.read_text().splitlines()[0] == "x,y,a,b,eccentricity,theta"
    with pytest.raises(DomainError):
        ellipse_table(maps, stride=0)
