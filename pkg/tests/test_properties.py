"""Property-based checks over small random grids and datasets."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fluorocal import io
from fluorocal.cost import CostFunction, Hyperparams, sample_weight
from fluorocal.dataset import Dataset
from fluorocal.grid import SuperpixelGrid, bin_image, neighbor_edges
from fluorocal.model import BetaMap, estimate_jz, estimate_n
from fluorocal.oracle import assemble, solve

grids = st.builds(
    lambda r, c, b: SuperpixelGrid(rows=r, cols=c, block_size=b),
    st.integers(1, 4),
    st.integers(2, 5),
    st.integers(1, 4),
)


@given(grid=grids, data=st.data())
def test_binning_conserves_counts(grid, data):
    pixels = data.draw(arrays(np.float64, grid.pixel_shape, elements=st.floats(0, 1e6)))
    out = bin_image(pixels, grid)
    assert out.shape == (grid.n,)
    np.testing.assert_allclose(out.sum(), pixels.sum(), rtol=1e-12)


@given(grid=grids)
def test_edge_count_formula(grid):
    edges = neighbor_edges(grid)
    assert len(edges) == grid.rows * (grid.cols - 1) + grid.cols * (grid.rows - 1)
    assert (grid.signs < 0).sum() == grid.left_cols * grid.rows


@given(
    value=st.floats(-1e4, 1e4, allow_nan=False),
    cutoff=st.floats(0, 1e4, allow_nan=False),
)
def test_heaviside_convention(value, cutoff):
    assert sample_weight(value, cutoff) == (1.0 if abs(value) >= cutoff else 0.0)


@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_float_text_round_trip(x):
    assert float(io.format_value(x)) == x


@given(seed=st.integers(0, 2**32 - 1), k=st.floats(0.01, 100))
def test_scaling_counts_and_weights(seed, k):
    rng = np.random.default_rng(seed)
    grid = SuperpixelGrid(rows=2, cols=4)
    values = rng.uniform(0.1, 2.0, grid.n)
    counts = rng.uniform(0, 1e3, grid.n)
    a = BetaMap(1.5, values, grid)
    b = BetaMap(1.5, values / k, grid)
    np.testing.assert_allclose(estimate_n(b, counts * k), estimate_n(a, counts), rtol=1e-10)
    np.testing.assert_allclose(estimate_jz(b, counts * k) - 1.5, estimate_jz(a, counts) - 1.5, rtol=1e-9, atol=1e-9)


def random_problem(seed, rows, cols, m):
    rng = np.random.default_rng(seed)
    grid = SuperpixelGrid(rows=rows, cols=cols)
    ds = Dataset(
        grid=grid,
        shot_ids=np.arange(m),
        cavity_jz=rng.normal(0, 400, m),
        freq_factor=rng.normal(0, 1e-3, m),
        counts=rng.uniform(10, 100, (m, grid.n)),
    )
    hyper = Hyperparams(float(rng.uniform(0.1, 50)), float(rng.uniform(0, 300)), bool(rng.integers(2)))
    return rng, grid, ds, hyper


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(1, 3), cols=st.integers(2, 4))
def test_gradient_against_central_differences(seed, rows, cols):
    rng, grid, ds, hyper = random_problem(seed, rows, cols, 30)
    if not (np.abs(ds.cavity_jz) >= hyper.jz_cutoff).any():
        return
    fn = CostFunction(ds, hyper, neighbor_edges(grid))
    p = rng.normal(1.0, 0.4, grid.n + 1)
    value, grad = fn(p)
    for j in range(len(p)):
        h = 1e-6 * max(1.0, abs(p[j]))
        e = np.zeros_like(p)
        e[j] = h
        fd = (fn(p + e)[0] - fn(p - e)[0]) / (2 * h)
        # G is quadratic, so the only difference error is rounding, ~eps |G| / h
        rounding = 10 * np.finfo(float).eps * abs(value) / h
        assert abs(fd - grad[j]) <= 1e-6 * abs(grad[j]) + rounding


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_oracle_minimum_beats_perturbations(seed):
    rng, grid, ds, hyper = random_problem(seed, 2, 3, 40)
    hyper = Hyperparams(hyper.lam, 0.0, hyper.normalize)
    edges = neighbor_edges(grid)
    p = solve(assemble(ds, hyper, grid, edges))
    fn = CostFunction(ds, hyper, edges)
    best = fn(p)[0]
    for _ in range(10):
        assert fn(p + rng.normal(0, 1e-2, p.shape))[0] >= best
