"""Synthetic instance generation, corruption sampling, and parameter sweeps."""

import numpy as np
import pytest

from oracles import oracle_fiber_fraction
from trpca.rpca import SolverConfig, solve, solve_orderN
from trpca.synth import SweepCell, SweepSpec, gen_truth, run_sweep, sample_support
from trpca.tucker import reconstruct


# ---------------------------------------------------------------------------
# gen_truth


def test_zero_alpha_means_no_corruption():
    truth = gen_truth((10, 10, 10), 2, kappa=3.0, alpha=0.0, seed=0)
    assert np.all(truth.s_star == 0)
    assert truth.entry_fraction == 0.0
    assert np.array_equal(truth.y, truth.x_star)


def test_unit_kappa_core_is_flat():
    truth = gen_truth((10, 10, 10), 3, kappa=1.0, alpha=0.0, seed=1)
    diag = truth.factors.core[np.arange(3), np.arange(3), np.arange(3)]
    assert np.array_equal(diag, np.ones(3))
    assert truth.diagnostics.kappa == pytest.approx(1.0, rel=1e-10)


def test_requested_parameters_are_realized():
    truth = gen_truth((30, 30, 30), 2, kappa=10.0, alpha=0.1, seed=7)
    assert truth.diagnostics.kappa == pytest.approx(10.0, rel=1e-6)
    assert truth.entry_fraction == pytest.approx(0.1, abs=0.002)
    assert truth.diagnostics.alpha == pytest.approx(0.1, rel=1e-12)
    # n=30, alpha=0.1 saturates every per-fiber cap, so the fraction is exact
    counts = (truth.s_star != 0).sum(axis=0)
    assert counts.min() == counts.max() == 3


def test_factors_orthonormal_and_reconstruction_consistent():
    truth = gen_truth((12, 12, 12), 2, kappa=5.0, alpha=0.1, seed=2)
    for u in truth.factors.factors:
        assert np.abs(u.T @ u - np.eye(2)).max() < 1e-10
    assert np.array_equal(reconstruct(truth.factors), truth.x_star)
    assert np.array_equal(truth.y, truth.x_star + truth.s_star)


def test_determinism_and_seed_sensitivity():
    a = gen_truth((8, 8, 8), 2, kappa=4.0, alpha=0.125, seed=3)
    b = gen_truth((8, 8, 8), 2, kappa=4.0, alpha=0.125, seed=3)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.s_star, b.s_star)
    c = gen_truth((8, 8, 8), 2, kappa=4.0, alpha=0.125, seed=4)
    assert not np.array_equal(a.y, c.y)
    d = gen_truth((8, 8, 8), 2, kappa=4.0, alpha=0.125,
                  seed=np.random.SeedSequence(3))
    assert np.array_equal(a.y, d.y)


def test_corruption_scale_variants():
    truth = gen_truth((10, 10, 10), 2, kappa=3.0, alpha=0.1, seed=5,
                      corruption_scale=0.3)
    nz = truth.s_star[truth.s_star != 0]
    assert nz.size > 0 and np.abs(nz).max() <= 0.3
    truth = gen_truth((10, 10, 10), 2, kappa=3.0, alpha=0.1, seed=5)
    bound = np.abs(truth.x_star).mean()
    nz = truth.s_star[truth.s_star != 0]
    assert np.abs(nz).max() <= bound
    with pytest.raises(ValueError):
        gen_truth((10, 10, 10), 2, kappa=3.0, alpha=0.1, seed=5,
                  corruption_scale=-1.0)
    with pytest.raises(ValueError):
        gen_truth((10, 10, 10), 2, kappa=3.0, alpha=0.1, seed=5,
                  corruption_scale="bogus")


def test_gen_truth_validation():
    with pytest.raises(ValueError):
        gen_truth((10, 10), 2, kappa=2.0, alpha=0.0, seed=0)
    with pytest.raises(ValueError):
        gen_truth((4, 10, 10), 5, kappa=2.0, alpha=0.0, seed=0)
    with pytest.raises(ValueError):
        gen_truth((10, 10, 10), 2, kappa=0.5, alpha=0.0, seed=0)
    with pytest.raises(ValueError):
        gen_truth((10, 10, 10), 2, kappa=2.0, alpha=1.5, seed=0)


def test_order_four_generation():
    truth = gen_truth((6, 6, 6, 6), 2, kappa=2.0, alpha=1 / 6, seed=6)
    assert truth.x_star.shape == (6, 6, 6, 6)
    assert oracle_fiber_fraction(truth.s_star) <= 1 / 6 + 1e-12


# ---------------------------------------------------------------------------
# sample_support


def test_support_respects_caps_across_shapes():
    rng = np.random.default_rng(8)
    for _ in range(30):
        dims = tuple(rng.integers(5, 13, size=3))
        alpha = rng.uniform(1 / min(dims), 0.5)
        mask = sample_support(dims, alpha, rng)
        for k in range(3):
            caps = int(np.floor(alpha * dims[k] + 1e-9))
            assert mask.sum(axis=k).max() <= caps


def test_support_extremes():
    rng = np.random.default_rng(9)
    assert not sample_support((6, 6, 6), 0.0, rng).any()
    assert sample_support((6, 6, 6), 1.0, rng).all()
    with pytest.raises(ValueError):
        sample_support((6, 6, 6), 0.05, rng)  # floor(0.3) = 0 per fiber
    with pytest.raises(ValueError):
        sample_support((6, 6, 6), -0.1, rng)


def test_support_saturated_equal_dims_is_exact():
    rng = np.random.default_rng(10)
    mask = sample_support((15, 15, 15), 0.2, rng)
    for k in range(3):
        counts = mask.sum(axis=k)
        assert counts.min() == counts.max() == 3


def test_support_unequal_dims_near_target():
    rng = np.random.default_rng(11)
    mask = sample_support((8, 10, 12), 0.25, rng)
    # caps (2, 2, 3) make 0.2 the feasible fraction; target 192 of 960
    assert abs(int(mask.sum()) - 192) <= 1
    assert mask.sum(axis=1).max() <= 2


# ---------------------------------------------------------------------------
# solver behaviour on generated instances


def test_iterations_insensitive_to_kappa():
    iters = []
    for kappa in (1.0, 5.0, 10.0):
        truth = gen_truth((30, 30, 30), 2, kappa=kappa, alpha=0.05, seed=12)
        cfg = SolverConfig(rank=(2, 2, 2), max_iters=200)
        trace = solve(truth.y, cfg, reference=truth).trace
        t = trace.iterations_to(1e-4)
        assert t is not None
        iters.append(t)
    assert max(iters) <= 2 * min(iters)


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_single_clean_cell():
    spec = SweepSpec(n_grid=(12,), rank_grid=(2,), alpha_grid=(0.0,),
                     kappa_grid=(3.0,), trials=2, max_iters=80)
    cells = run_sweep(spec)
    assert len(cells) == 1
    cell = cells[0]
    assert cell.failures == 0
    assert cell.median_rel_error <= 1e-9


def test_sweep_separates_easy_from_hopeless():
    spec = SweepSpec(n_grid=(20,), rank_grid=(2,), alpha_grid=(0.05, 0.8),
                     kappa_grid=(5.0,), trials=1, max_iters=150)
    easy, hopeless = run_sweep(spec)
    assert easy.median_rel_error < 1e-6
    assert hopeless.median_rel_error > 1e-2


def test_sweep_deterministic():
    spec = SweepSpec(n_grid=(10,), rank_grid=(1, 2), alpha_grid=(0.1,),
                     kappa_grid=(2.0,), trials=2, max_iters=30)
    a = run_sweep(spec)
    b = run_sweep(spec)
    for ca, cb in zip(a, b):
        assert (ca.median_rel_error, ca.median_iterations, ca.failures) == (
            cb.median_rel_error, cb.median_iterations, cb.failures)


def test_sweep_counts_infeasible_cells_as_failures():
    spec = SweepSpec(n_grid=(10,), rank_grid=(2,), alpha_grid=(0.05,),
                     kappa_grid=(2.0,), trials=3, max_iters=30)
    cell = run_sweep(spec)[0]
    assert cell.failures == 3
    assert np.isnan(cell.median_rel_error)
    assert np.isnan(cell.median_iterations)


def test_sweep_cell_matches_direct_run():
    spec = SweepSpec(n_grid=(12,), rank_grid=(2,), alpha_grid=(1 / 12,),
                     kappa_grid=(4.0,), trials=1, max_iters=40, seed=5)
    cell = run_sweep(spec)[0]
    truth = gen_truth((12, 12, 12), 2, kappa=4.0, alpha=1 / 12,
                      seed=np.random.SeedSequence((5, 0, 0, 0, 0, 0)))
    cfg = SolverConfig(rank=(2, 2, 2), max_iters=40)
    result = solve_orderN(truth.y, cfg, reference=truth)
    assert cell.median_rel_error == result.trace.final.rel_fro_error
    assert cell.median_iterations == result.trace.final.iteration
    assert cell.failures == 0


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(n_grid=(), rank_grid=(2,), alpha_grid=(0.1,), kappa_grid=(1.0,))
    with pytest.raises(ValueError):
        SweepSpec(n_grid=(10,), rank_grid=(2,), alpha_grid=(0.1,),
                  kappa_grid=(1.0,), trials=0)
