import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzsense.estimate import (
    BudgetExceededError,
    ConvergenceWarning,
    EstimationError,
    PipelineConfig,
    RankDeficiencyWarning,
    TargetPrior,
    brute_force_multi,
    brute_force_single,
    kkt_violation,
    lasso,
    omp,
    per_range_pipeline,
    soft_threshold,
)
from thzsense.geometry import NearFieldWarning, TargetPlacement, s1_from_range
from thzsense.model import AngleGrid
from thzsense.wavefield import NoiseSpec, multi_target_echo

warnings.filterwarnings("ignore", category=NearFieldWarning)


def _target(scene, deg, s1, rcs=1.0):
    return TargetPlacement.from_polar(scene, math.radians(deg), s1, rcs)


def _echo(grid, scene, surfaces, targets, snr=math.inf, seed=0):
    return multi_target_echo(grid, scene, surfaces, targets, NoiseSpec(snr, seed))


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def one_degree():
    return AngleGrid.from_step(1.0)


# ---------------------------------------------------------------- brute force, one target


def test_brute_single_noise_free_exact(grid, scene, surfaces, fmodel, half_degree):
    tg = _target(scene, 40.0, 2.41, 0.7)
    m = _echo(grid, scene, surfaces, [tg])
    res = brute_force_single(m, TargetPrior(tg.p, 0.7), half_degree, fmodel)
    assert res.best_angles[0] == pytest.approx(math.radians(40.0), abs=1e-12)
    assert res.best_loss <= 1e-9 * np.linalg.norm(m.samples)
    assert res.evaluations == int(np.isfinite(res.loss_surface).sum())


def test_brute_single_twenty_db(grid, scene, surfaces, fmodel, half_degree):
    tg = _target(scene, 40.0, 2.41)
    prior = TargetPrior(tg.p, 1.0)
    cols = fmodel.vectors(grid.wavenumbers, half_degree.angles, tg.p)
    y0 = _echo(grid, scene, surfaces, [tg]).samples
    hits = 0
    for seed in range(100):
        m = _echo(grid, scene, surfaces, [tg], 20.0, seed)
        assert np.linalg.norm(m.noise_free - y0) == 0
        est = brute_force_single(m, prior, half_degree, fmodel, columns=cols).best_angles[0]
        hits += abs(math.degrees(est) - 40.0) <= 0.5 + 1e-9
    assert hits >= 95


def test_brute_single_wrong_rcs_prior(grid, scene, surfaces, fmodel, half_degree):
    # the prior RCS is twice the truth; with the amplitude refit on the
    # minimizer never moves, without it the loss prefers angles whose
    # model amplitude matches the wrong prior
    moved = []
    for deg, s1 in [(40, 2.41), (58, 1.41), (128, 2.0), (75, 3.0), (15, 3.0)]:
        tg = _target(scene, deg, s1, 0.5)
        m = _echo(grid, scene, surfaces, [tg])
        prior = TargetPrior(tg.p, 1.0)
        fixed = math.degrees(brute_force_single(m, prior, half_degree, fmodel).best_angles[0])
        refit = math.degrees(brute_force_single(m, prior, half_degree, fmodel, refit=True).best_angles[0])
        assert refit == pytest.approx(deg, abs=1e-9)
        moved.append(abs(fixed - deg) > 1e-9)
    assert not moved[0]
    assert any(moved)


def test_brute_single_infeasible_range(grid, scene, fmodel):
    m = np.ones(grid.wavenumbers.size, complex)
    with pytest.raises(EstimationError):
        brute_force_single(m, TargetPrior(0.5), np.deg2rad([5.0, 10.0]), fmodel, grid=grid)


def test_brute_single_needs_grid_for_arrays(fmodel):
    with pytest.raises(ValueError):
        brute_force_single(np.ones(4, complex), TargetPrior(2.0), np.deg2rad([40.0, 50.0]), fmodel)


# ---------------------------------------------------------------- brute force, several targets


def test_brute_multi_two_targets_at_twenty_db(grid, scene, surfaces, fmodel, one_degree):
    rcs = np.random.default_rng([0, 1]).uniform(0, 1, 2)
    tgs = [_target(scene, 40.0, 2.41, rcs[0]), _target(scene, 140.0, 2.34, rcs[1])]
    m = _echo(grid, scene, surfaces, tgs, 20.0, 0)
    res = brute_force_multi(m, [TargetPrior(t.p, t.rcs) for t in tgs], one_degree, fmodel)
    np.testing.assert_allclose(np.rad2deg(res.best_angles), [40.0, 140.0], atol=1e-9)
    assert res.loss_surface.shape == (len(one_degree),) * 2
    assert res.best_loss == np.min(res.loss_surface)


def test_brute_multi_noise_free_zero_loss(grid, scene, surfaces, fmodel, one_degree):
    tgs = [_target(scene, 58.0, 1.41, 0.3), _target(scene, 128.0, 2.0, 0.9)]
    m = _echo(grid, scene, surfaces, tgs)
    res = brute_force_multi(m, [TargetPrior(t.p, t.rcs) for t in tgs], one_degree, fmodel)
    np.testing.assert_allclose(np.rad2deg(res.best_angles), [58.0, 128.0], atol=1e-9)
    assert res.best_loss <= 1e-9 * np.linalg.norm(m.samples)


def test_brute_multi_permutation_symmetry(grid, scene, surfaces, fmodel):
    # equal priors make the two axes interchangeable
    tgs = [_target(scene, 40.0, 2.41), _target(scene, 140.0, 2.34)]
    p = tgs[0].p
    angles = np.deg2rad(np.arange(20.0, 161.0, 2.0))
    m = _echo(grid, scene, surfaces, tgs, 20.0, 3)
    res = brute_force_multi(m, [TargetPrior(p, 0.5), TargetPrior(p, 0.5)], angles, fmodel)
    L = res.loss_surface
    fin = np.isfinite(L)
    np.testing.assert_array_equal(fin, fin.T)
    np.testing.assert_allclose(L[fin], L.T[fin], rtol=1e-12)


def test_brute_multi_matches_direct_sum(grid, scene, surfaces, fmodel):
    # three targets on a coarse grid against a plain loop over tuples
    tgs = [_target(scene, 40.0, 2.41, 0.4), _target(scene, 90.0, 2.0, 0.8), _target(scene, 140.0, 2.34, 0.6)]
    priors = [TargetPrior(t.p, t.rcs) for t in tgs]
    angles = np.deg2rad(np.arange(30.0, 151.0, 10.0))
    m = _echo(grid, scene, surfaces, tgs, 10.0, 5)
    res = brute_force_multi(m, priors, angles, fmodel)
    cols = [fmodel.vectors(grid.wavenumbers, angles, pr.p) for pr in priors]
    n = angles.size
    for idx in np.ndindex(n, n, n):
        if not all(np.isfinite(cols[q][1][i]) for q, i in enumerate(idx)):
            assert np.isinf(res.loss_surface[idx])
            continue
        r = m.samples - sum(pr.sigma * cols[q][0][:, i] for q, (pr, i) in enumerate(zip(priors, idx)))
        assert res.loss_surface[idx] == pytest.approx(np.linalg.norm(r), rel=1e-10)
    np.testing.assert_allclose(np.rad2deg(res.best_angles), [40.0, 90.0, 140.0], atol=1e-9)


def test_brute_multi_budget(grid, fmodel, half_degree):
    y = np.zeros(grid.wavenumbers.size, complex)
    priors = [TargetPrior(2.0)] * 3
    with pytest.raises(BudgetExceededError) as info:
        brute_force_multi(y, priors, half_degree, fmodel, grid=grid)
    assert info.value.required == len(half_degree) ** 3
    assert info.value.budget == 5_000_000
    with pytest.raises(ValueError):
        brute_force_multi(y, [], half_degree, fmodel, grid=grid)


# ---------------------------------------------------------------- LASSO


def test_soft_threshold_values():
    assert soft_threshold(3.0, 1.0) == pytest.approx(2.0)
    assert soft_threshold(0.5j, 1.0) == 0
    assert soft_threshold(-4.0, 1.0) == pytest.approx(-3.0)
    z = 3 + 4j
    assert soft_threshold(z, 1.0) == pytest.approx(z * 0.8)
    assert soft_threshold(0.0, 0.0) == 0


def test_lasso_zero_data(rng):
    V = _cplx(rng, 16, 8)
    res = lasso(V, np.zeros(16, complex), lam=0.3)
    assert not np.any(res.coefficients)
    assert res.support.size == 0


def test_lasso_large_lambda_gives_zero(rng):
    V = _cplx(rng, 20, 30)
    y = _cplx(rng, 20)
    lam_max = np.max(np.abs(V.conj().T @ y))
    assert not np.any(lasso(V, y, lam=lam_max).coefficients)
    assert not np.any(lasso(V, y, lam=2 * lam_max).coefficients)
    assert np.any(lasso(V, y, lam=0.9 * lam_max).coefficients)


def test_lasso_rejects_nonpositive_lambda(rng):
    V = _cplx(rng, 8, 4)
    with pytest.raises(ValueError):
        lasso(V, _cplx(rng, 8), lam=0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 24), ratio=st.floats(0.01, 0.95))
def test_lasso_orthonormal_closed_form(seed, n, ratio):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(_cplx(rng, 32, n))
    y = _cplx(rng, 32)
    lam = ratio * np.max(np.abs(Q.conj().T @ y))
    res = lasso(Q, y, lam=lam, tol=1e-14, kkt_tol=1e-9)
    assert res.converged
    expect = soft_threshold(Q.conj().T @ y, lam)
    np.testing.assert_allclose(res.coefficients, expect, atol=1e-8 * max(1.0, np.linalg.norm(y)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shape=st.sampled_from([(16, 8), (24, 48), (64, 128)]), ratio=st.floats(0.05, 0.9))
def test_lasso_kkt_and_monotone(seed, shape, ratio):
    rng = np.random.default_rng(seed)
    V = _cplx(rng, *shape)
    V /= np.linalg.norm(V, axis=0)
    y = _cplx(rng, shape[0])
    res = lasso(V, y, lam_ratio=ratio, max_iter=50000, tol=1e-12, kkt_tol=1e-7)
    assert res.converged
    assert kkt_violation(V, y, res.coefficients, res.lam) <= 1e-6
    trace = np.array(res.objective_trace)
    assert np.all(np.diff(trace) <= 1e-12 * trace[0])


def test_lasso_plain_and_accelerated_agree(rng):
    V = _cplx(rng, 40, 60)
    V /= np.linalg.norm(V, axis=0)
    y = V[:, [3, 17]] @ np.array([1.0, -0.5j]) + 0.01 * _cplx(rng, 40)
    fast = lasso(V, y, lam_ratio=0.2, tol=1e-12, max_iter=50000, kkt_tol=1e-9)
    slow = lasso(V, y, lam_ratio=0.2, tol=1e-12, max_iter=50000, kkt_tol=1e-9, accelerate=False)
    assert fast.converged and slow.converged
    np.testing.assert_allclose(fast.coefficients, slow.coefficients, atol=1e-6)
    assert np.all(np.diff(slow.objective_trace) <= 1e-12 * slow.objective_trace[0])
    assert set(fast.support) >= {3, 17}


def test_lasso_reports_non_convergence(rng):
    V = _cplx(rng, 40, 80)
    y = _cplx(rng, 40)
    with pytest.warns(ConvergenceWarning):
        res = lasso(V, y, lam_ratio=0.01, max_iter=3, tol=1e-15)
    assert not res.converged
    assert res.iterations == 3


def test_lasso_accepts_precomputed_gram(rng):
    V = _cplx(rng, 20, 30)
    y = _cplx(rng, 20)
    G = V.conj().T @ V
    a = lasso(V, y, lam_ratio=0.3)
    b = lasso(V, y, lam_ratio=0.3, gram=(G, None))
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-12)


# ---------------------------------------------------------------- OMP


def test_omp_single_column(rng):
    V = _cplx(rng, 30, 50)
    V /= np.linalg.norm(V, axis=0)
    y = (2 - 1j) * V[:, 11]
    res = omp(V, y, max_support=5, residual_tol=1e-10)
    assert list(res.support) == [11]
    assert res.iterations == 1
    assert res.coefficients[11] == pytest.approx(2 - 1j)
    assert res.residual_norm <= 1e-10 * np.linalg.norm(y)


@pytest.mark.parametrize("seed", range(5))
def test_omp_exact_sparse_recovery(seed):
    rng = np.random.default_rng(seed)
    V = _cplx(rng, 64, 256)
    V /= np.linalg.norm(V, axis=0)
    cols = rng.choice(256, 3, replace=False)
    amp = (1 + rng.uniform(0, 1, 3)) * np.exp(2j * np.pi * rng.uniform(size=3))
    y = V[:, cols] @ amp
    res = omp(V, y, max_support=3)
    assert sorted(res.support) == sorted(cols)
    np.testing.assert_allclose(res.coefficients[cols], amp, atol=1e-10)
    assert res.residual_norm <= 1e-10


def test_omp_trace_strictly_decreasing_and_no_reselection(rng):
    V = _cplx(rng, 32, 100)
    V /= np.linalg.norm(V, axis=0)
    y = _cplx(rng, 32)
    res = omp(V, y, max_support=20)
    assert len(set(res.support)) == len(res.support) == 20
    assert np.all(np.diff(res.residual_trace) < 0)


def test_omp_rank_deficiency():
    # the part of y along the third axis is orthogonal to every column, so
    # after two atoms the only remaining candidate is dependent on them
    e1, e2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    V = np.column_stack([e1, e2, (e1 + e2) / math.sqrt(2)]).astype(complex)
    y = np.array([1.0, 0.3j, 0.5])
    with pytest.warns(RankDeficiencyWarning):
        res = omp(V, y, max_support=3)
    assert res.support.size == 2


def test_omp_rejects_empty_support(rng):
    with pytest.raises(ValueError):
        omp(_cplx(rng, 4, 4), _cplx(rng, 4), max_support=0)


def test_omp_one_atom_picks_stronger_target(grid, scene, surfaces, fmodel, half_degree):
    # both targets share one range so a single dictionary covers them
    p = 3.0
    tgs = [_target(scene, d, s1_from_range(scene, p, math.radians(d)), r) for d, r in [(58.0, 0.9), (110.0, 0.2)]]
    m = _echo(grid, scene, surfaces, tgs)
    sm = fmodel.sensing_matrix(grid, half_degree, p)
    res = omp(sm.entries, m.samples, max_support=1)
    assert math.degrees(sm.angles[res.support[0]]) == pytest.approx(58.0)


# ---------------------------------------------------------------- cross-method agreement


@pytest.mark.parametrize("deg,s1", [(40.0, 2.41), (58.0, 1.41), (128.0, 2.0), (143.0, 2.34)])
def test_single_target_methods_agree(grid, scene, surfaces, fmodel, half_degree, deg, s1):
    tg = _target(scene, deg, s1, 0.6)
    m = _echo(grid, scene, surfaces, [tg])
    sm = fmodel.sensing_matrix(grid, half_degree, tg.p)
    brute = brute_force_single(m, TargetPrior(tg.p, 0.6), half_degree, fmodel).best_angles[0]
    o = sm.angles[omp(sm.entries, m.samples, max_support=1).support[0]]
    # smallest lambda on a descending sweep that still returns one atom
    lam_max = np.max(np.abs(sm.entries.conj().T @ m.samples))
    picked = None
    for ratio in np.geomspace(0.99, 1e-3, 25):
        res = lasso(sm.entries, m.samples, lam=ratio * lam_max)
        if res.support.size == 1:
            picked = sm.angles[res.support[0]]
        elif res.support.size > 1:
            break
    assert picked is not None
    assert brute == pytest.approx(math.radians(deg), abs=1e-12)
    assert o == pytest.approx(brute, abs=1e-12)
    assert picked == pytest.approx(brute, abs=1e-12)


# ---------------------------------------------------------------- per-range pipeline


def test_pipeline_empty(grid, fmodel, half_degree):
    res = per_range_pipeline(np.zeros(grid.wavenumbers.size, complex), [], half_degree, fmodel, grid=grid)
    assert res.estimates == [] and res.solver_results == []
    assert res.angles().size == 0


def test_pipeline_needs_grid_for_arrays(fmodel, half_degree):
    with pytest.raises(ValueError):
        per_range_pipeline(np.zeros(8, complex), [2.0], half_degree, fmodel)
    with pytest.raises(ValueError):
        PipelineConfig(solver="cvx")
    with pytest.raises(ValueError):
        PipelineConfig(mode="both")


def test_pipeline_three_targets_twenty_db(grid, scene, surfaces, fmodel, half_degree):
    rcs = [0.8, 0.6, 0.9]
    tgs = [_target(scene, d, s, r) for (d, s), r in zip([(58, 1.41), (128, 2.0), (143, 2.34)], rcs)]
    m = _echo(grid, scene, surfaces, tgs, 20.0, 0)
    res = per_range_pipeline(m, [t.p for t in tgs], half_degree, fmodel)
    assert all(e.ok for e in res.estimates)
    np.testing.assert_allclose(np.rad2deg(res.angles()), [58.0, 128.0, 143.0], atol=0.5 + 1e-9)
    for e, t in zip(res.estimates, tgs):
        assert e.p == t.p
        assert e.spectrum.shape == e.angles.shape
        assert e.rcs_estimate == pytest.approx(t.rcs, rel=0.3)


@pytest.mark.parametrize("solver", ["lasso", "omp"])
@pytest.mark.parametrize("mode", ["joint", "independent"])
def test_pipeline_single_target_matches_brute(grid, scene, surfaces, fmodel, half_degree, solver, mode):
    tg = _target(scene, 128.0, 2.0, 0.4)
    m = _echo(grid, scene, surfaces, [tg])
    res = per_range_pipeline(m, [tg.p], half_degree, fmodel, PipelineConfig(solver=solver, mode=mode))
    brute = brute_force_single(m, TargetPrior(tg.p), half_degree, fmodel, refit=True).best_angles[0]
    assert res.estimates[0].ok
    assert res.estimates[0].theta == pytest.approx(brute, abs=1e-12)
    assert res.estimates[0].rcs_estimate == pytest.approx(0.4, rel=1e-6)


def test_pipeline_repeated_range(grid, scene, surfaces, fmodel, half_degree):
    p = 3.0
    tgs = [_target(scene, d, s1_from_range(scene, p, math.radians(d)), r) for d, r in [(60.0, 0.9), (120.0, 0.5)]]
    assert tgs[1].p == pytest.approx(p)
    m = _echo(grid, scene, surfaces, tgs)
    res = per_range_pipeline(m, [tgs[1].p, tgs[0].p], half_degree, fmodel)
    # strongest atom is reported first for a shared range
    np.testing.assert_allclose(np.rad2deg(res.angles()), [60.0, 120.0], atol=1e-9)
    assert len(res.solver_results) == 1


def test_pipeline_reports_failure_per_range(grid, scene, surfaces, fmodel):
    angles = np.deg2rad(np.arange(20.0, 70.0, 0.5))
    tg = _target(scene, 40.0, 2.41)
    m = _echo(grid, scene, surfaces, [tg])
    for mode in ("joint", "independent"):
        res = per_range_pipeline(m, [0.5, tg.p], angles, fmodel, PipelineConfig(mode=mode))
        bad, good = res.estimates
        assert not bad.ok and "0.5" in bad.error and math.isnan(bad.theta)
        assert good.ok and math.degrees(good.theta) == pytest.approx(40.0)


def test_pipeline_all_ranges_infeasible(grid, fmodel):
    y = np.ones(grid.wavenumbers.size, complex)
    res = per_range_pipeline(y, [0.5, 0.6], np.deg2rad([5.0, 10.0]), fmodel, grid=grid)
    assert [e.ok for e in res.estimates] == [False, False]
    assert res.solver_results == []


def test_model_caches(grid, scene, surfaces, half_degree):
    from thzsense.estimate import ForwardModel
    from thzsense.model import EmptySensingMatrixError

    fm = ForwardModel(scene, surfaces)
    a = fm.sensing_matrix(grid, half_degree, 2.0)
    assert fm.sensing_matrix(grid, half_degree.angles, 2.0) is a
    for _ in range(2):
        with pytest.raises(EmptySensingMatrixError):
            fm.sensing_matrix(grid, np.deg2rad([5.0, 10.0]), 0.5)
    g1 = fm.gram("x", a.entries)
    assert fm.gram("x", a.entries) is g1
    fm.clear_cache()
    assert fm.sensing_matrix(grid, half_degree, 2.0) is not a
