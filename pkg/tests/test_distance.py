import itertools
import struct

import numpy as np
import pytest

from bzkplate import distance
from bzkplate.distance import DistanceField, Grid, distance_transform
from bzkplate.norms import Norm3

BACKENDS = ["python"] + (["compiled"] if distance.BACKEND == "compiled" else [])


def _center_source(n=11, spacing=0.1):
    grid = Grid((0, 0, 0), (spacing,) * 3, (n, n, n))
    mask = np.zeros(grid.dims, bool)
    mask[n // 2, n // 2, n // 2] = True
    return grid, mask


@pytest.mark.parametrize("backend", BACKENDS)
def test_axis_offset_is_exact(backend):
    grid, mask = _center_source()
    f = distance_transform(Norm3.euclidean(), mask, grid, backend=backend)
    for k in range(6):
        assert f.values[5 + k, 5, 5] == pytest.approx(0.1 * k, abs=1e-12)


@pytest.mark.parametrize("mode", ["feature", "stencil"])
def test_linf_edge_costs_on_diagonal(mode):
    # the dual of l1 is l-infinity; a diagonal step costs one spacing
    grid, mask = _center_source()
    f = distance_transform(Norm3.weighted_l1([1.0, 1.0, 1.0]).dual(), mask, grid, mode=mode)
    for k in range(6):
        assert f.values[5 + k, 5 + k, 5] == pytest.approx(0.1 * k, abs=1e-12)


def _stencil_oracle(grid, mask, norm):
    # Bellman-Ford on a small grid over the 26-neighbour graph
    d = np.where(mask, 0.0, np.inf)
    s = np.asarray(grid.spacing)
    offs = [o for o in itertools.product((-1, 0, 1), repeat=3) if any(o)]
    n = grid.dims
    for _ in range(sum(n)):
        new = d.copy()
        for o in offs:
            cost = norm(np.asarray(o) * s)
            src = tuple(slice(max(0, -k), n[i] - max(0, k)) for i, k in enumerate(o))
            dst = tuple(slice(max(0, k), n[i] - max(0, -k)) for i, k in enumerate(o))
            new[dst] = np.minimum(new[dst], d[src] + cost)
        if np.array_equal(new, d):
            break
        d = new
    return d


@pytest.mark.parametrize("backend", BACKENDS)
def test_stencil_mode_matches_graph_oracle(backend, rng):
    grid = Grid((0, 0, 0), (0.1, 0.2, 0.15), (6, 5, 7))
    mask = rng.random(grid.dims) < 0.04
    mask[0, 0, 0] = True
    norm = Norm3.ellipsoidal(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]]))
    f = distance_transform(norm, mask, grid, mode="stencil", backend=backend)
    assert np.allclose(f.values, _stencil_oracle(grid, mask, norm), atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ball_source_far_query(backend):
    grid = Grid.covering((0, 0, 0), (1, 1, 1), 1 / 40)
    c = grid.centers()
    rho = 0.15
    r = np.linalg.norm(c - 0.5, axis=-1)
    mask = r <= rho
    f = distance_transform(Norm3.euclidean(), mask, grid, backend=backend)
    far = r > 0.35
    err = np.abs(f.values[far] - (r[far] - rho))
    assert err.max() <= 1.5 * np.sqrt(3) * grid.spacing[0]


def test_feature_mode_bounds_stencil_from_below():
    grid = Grid.covering((0, 0, 0), (1, 1, 1), 1 / 16)
    mask = np.linalg.norm(grid.centers() - 0.3, axis=-1) <= 0.2
    norm = Norm3.weighted_linf([1.0, 2.0, 0.5])
    feat = distance_transform(norm, mask, grid, mode="feature")
    sten = distance_transform(norm, mask, grid, mode="stencil")
    assert np.all(feat.values <= sten.values + 1e-12)


def test_field_is_lipschitz_and_zero_on_source():
    grid = Grid.covering((0, 0, 0), (1, 1, 1), 1 / 20)
    mask = np.linalg.norm(grid.centers() - [0.4, 0.5, 0.6], axis=-1) <= 0.25
    norm = Norm3.ellipsoidal(np.diag([1.0, 3.0, 0.5]))
    f = distance_transform(norm, mask, grid)
    v = f.values
    assert np.all(v[mask] == 0)
    for axis in range(3):
        step = norm(np.eye(3)[axis] * grid.spacing[axis])
        assert np.all(np.abs(np.diff(v, axis=axis)) <= step + 1e-12)


def test_sublevels_are_monotone():
    grid, mask = _center_source()
    f = distance_transform(Norm3.euclidean(), mask, grid)
    for r1, r2 in [(0.1, 0.2), (0.2, 0.35), (0.0, 0.5)]:
        assert np.all(~f.sublevel(r1) | f.sublevel(r2))


def test_backends_agree():
    if distance.BACKEND != "compiled":
        pytest.skip("compiled kernel not built")
    grid = Grid.covering((0, 0, 0), (1, 1, 1), 1 / 12)
    mask = np.linalg.norm(grid.centers() - 0.5, axis=-1) <= 0.2
    norm = Norm3.weighted_l1([1.0, 1.5, 0.7]).dual()
    a = distance_transform(norm, mask, grid, backend="python")
    b = distance_transform(norm, mask, grid, backend="compiled")
    assert np.array_equal(a.values, b.values)


def test_empty_source_rejected():
    grid = Grid((0, 0, 0), (1, 1, 1), (3, 3, 3))
    with pytest.raises(ValueError, match="empty source set"):
        distance_transform(Norm3.euclidean(), np.zeros(grid.dims, bool), grid)


def test_binary_layout_round_trip(tmp_path):
    grid = Grid((0.5, -1.0, 2.0), (0.1, 0.2, 0.3), (4, 3, 2))
    vals = np.arange(24, dtype=float).reshape(grid.dims)
    f = DistanceField(grid, vals)
    data = f.to_bytes()
    assert data[:8] == b"BZKVOX01"
    dims = struct.unpack("<3q", data[8:32])
    assert dims == (4, 3, 2)
    payload = np.frombuffer(data[80:], "<f8")
    # x varies fastest
    assert payload[1] == vals[1, 0, 0] and payload[4] == vals[0, 1, 0]
    path = tmp_path / "field.bin"
    f.save(path)
    g = DistanceField.load(path)
    assert g.grid == grid and np.array_equal(g.values, vals)


def test_truncated_payload_rejected():
    f = DistanceField(Grid((0, 0, 0), (1, 1, 1), (2, 2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        DistanceField.from_bytes(f.to_bytes()[:-8])
