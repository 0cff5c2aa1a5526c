import numpy as np
import pytest

from bzkplate.planar import (
    ConvexOffset,
    Difference,
    Disk,
    EmptySet,
    HalfPlane,
    Intersection,
    Polygon,
    Union,
    is_empty,
    segment_intervals,
)
from bzkplate.norms import Norm2


def test_disk_perimeter_and_area():
    D = Disk((0.5, 0.5), 0.25)
    assert D.perimeter() == pytest.approx(2 * np.pi * 0.25, rel=1e-6)
    assert D.area() == pytest.approx(np.pi / 16, rel=1e-9)


def test_boundary_normals_are_unit_and_outward():
    shapes = [Disk((0, 0), 1.0), Polygon([(0, 0), (2, 0), (1, 1.5)]), ConvexOffset([(0, 0), (1, 0)], 0.3)]
    t = np.linspace(0.01, 0.99, 17)
    for S in shapes:
        for piece in S.boundary():
            tt = piece.t0 + t * (piece.t1 - piece.t0)
            p = piece.points(tt)
            n = piece.normals(tt)
            assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
            assert np.all(S.level(p + 1e-6 * n) > 0)
            assert np.all(S.level(p - 1e-6 * n) < 0)


def test_csg_perimeters():
    sq = Polygon.rectangle((0, 0), (1, 1))
    half = Intersection([sq, HalfPlane((0.0, 1.0), 0.5)])
    assert half.area() == pytest.approx(0.5, rel=1e-9)
    assert half.perimeter() == pytest.approx(3.0, rel=1e-9)
    holed = Difference(sq, Disk((0.5, 0.5), 0.25))
    assert holed.perimeter() == pytest.approx(4 + np.pi / 2, rel=1e-8)
    two = Union([Disk((0, 0), 1.0), Disk((3, 0), 1.0)])
    assert two.perimeter() == pytest.approx(4 * np.pi, rel=1e-8)


def test_perimeter_restricted_to_region():
    D = Disk((0.5, 0.0), 0.25)
    sq = Polygon.rectangle((0, 0), (1, 1))
    assert D.perimeter(where=sq.contains_open) == pytest.approx(np.pi * 0.25, rel=1e-6)


def test_anisotropic_perimeter_of_square():
    sq = Polygon.rectangle((0, 0), (1, 1))
    N = Norm2("weighted_l1", {"w": [2.0, 1.0]})
    # normals (+-1, 0) on vertical sides weigh 2, horizontal sides weigh 1
    assert sq.perimeter(norm=N) == pytest.approx(6.0, rel=1e-12)


def test_stadium_area():
    S = ConvexOffset([(0, 0), (1, 0)], 0.1)
    assert S.area() == pytest.approx(0.2 + np.pi * 0.01, rel=1e-8)


def test_segment_intervals_against_dense_sampling():
    D = Polygon.rectangle((0, 0), (1, 0.5))
    iv = segment_intervals((0.5, 0), (0.5, 1), lambda p: ~D.contains(p))
    assert sum(b - a for a, b in iv) == pytest.approx(0.5, abs=1e-9)


def test_empty_set():
    assert is_empty(None) and is_empty(EmptySet())
    assert EmptySet().boundary() == []
    assert not is_empty(Disk((0, 0), 1.0))
