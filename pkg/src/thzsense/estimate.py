"""Angle recovery: exhaustive search and sparse reconstruction."""
from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .array import Surface
from .geometry import SceneGeometry
from .model import EmptySensingMatrixError, SensingMatrix, build_sensing_matrix, model_vectors
from .wavefield import FrequencyGrid, Measurement


class EstimationError(RuntimeError):
    pass


class BudgetExceededError(EstimationError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"brute-force search needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


class ConvergenceWarning(UserWarning):
    pass


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ForwardModel:
    """Everything the estimators need besides the data: scene, surfaces, root branch.

    Sensing matrices and Gram matrices are memoized per instance, so
    Monte-Carlo loops over noise draws build them once.
    """

    scene: SceneGeometry
    surfaces: tuple[Surface, Surface]
    branch: str = "near"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def vectors(self, k, thetas, p):
        return model_vectors(k, self.scene, self.surfaces, thetas, p, self.branch)

    def sensing_matrix(self, grid: FrequencyGrid, angles, p: float) -> SensingMatrix:
        ang = np.ascontiguousarray(getattr(angles, "angles", angles), dtype=float)
        key = ("sm", np.asarray(grid.wavenumbers).tobytes(), ang.tobytes(), float(p))
        hit = self._cache.get(key)
        if hit is None:
            try:
                hit = build_sensing_matrix(grid, self.scene, self.surfaces, ang, p, self.branch)
            except EmptySensingMatrixError as exc:
                hit = str(exc)
            self._cache[key] = hit
        if isinstance(hit, str):
            raise EmptySensingMatrixError(hit)
        return hit

    def gram(self, key, A: np.ndarray):
        """``(A^H A, L)`` for a dictionary identified by ``key``."""
        hit = self._cache.get(("gram", key))
        if hit is None:
            G = A.conj().T @ A
            hit = (G, power_iteration(G))
            self._cache[("gram", key)] = hit
        return hit

    def clear_cache(self) -> None:
        self._cache.clear()


@dataclass(frozen=True)
class TargetPrior:
    p: float
    sigma: float = 1.0


@dataclass
class BruteForceResult:
    best_angles: np.ndarray
    best_indices: tuple[int, ...]
    loss_surface: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)
    runtime_s: float = 0.0
    evaluations: int = 0

    @property
    def best_loss(self) -> float:
        return float(self.loss_surface[self.best_indices])


@dataclass
class SparseResult:
    coefficients: np.ndarray = field(repr=False)
    support: np.ndarray
    residual_norm: float
    objective_trace: list[float] = field(default_factory=list, repr=False)
    residual_trace: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0
    converged: bool = True
    lam: float = float("nan")


def _samples(y) -> np.ndarray:
    return np.asarray(y.samples if isinstance(y, Measurement) else y, dtype=complex)


def _wavenumbers(y, grid) -> np.ndarray:
    if grid is not None:
        return np.asarray(getattr(grid, "wavenumbers", grid), dtype=float)
    if isinstance(y, Measurement):
        return y.grid.wavenumbers
    raise ValueError("a frequency grid is required when y is a bare array")


def _angles(angle_grid) -> np.ndarray:
    return np.asarray(getattr(angle_grid, "angles", angle_grid), dtype=float).ravel()


# ---------------------------------------------------------------- brute force


def brute_force_single(
    y, prior: TargetPrior, angle_grid, model: ForwardModel, grid=None, refit: bool = False, columns=None
) -> BruteForceResult:
    """Grid search of ``||y - sigma * v(theta)||`` over candidate angles.

    With ``refit`` the amplitude is re-estimated per angle by least squares
    instead of using the prior RCS.  ``columns`` may hold a precomputed
    ``(V, s)`` pair for the prior's range.
    """
    t0 = time.perf_counter()
    yv = _samples(y)
    ang = _angles(angle_grid)
    V, s = columns if columns is not None else model.vectors(_wavenumbers(y, grid), ang, prior.p)
    ok = np.isfinite(s)
    if not ok.any():
        raise EstimationError(f"no feasible angle for range {prior.p:.6g} m")
    loss = np.full(ang.size, np.inf)
    Vf = V[:, ok]
    if refit:
        num = np.abs(Vf.conj().T @ yv) ** 2
        den = np.sum(np.abs(Vf) ** 2, axis=0)
        loss[ok] = np.sqrt(np.maximum(np.vdot(yv, yv).real - num / den, 0.0))
    else:
        loss[ok] = np.linalg.norm(yv[:, None] - prior.sigma * Vf, axis=0)
    i = int(np.argmin(loss))
    return BruteForceResult(np.array([ang[i]]), (i,), loss, ang, time.perf_counter() - t0, int(ok.sum()))


def brute_force_multi(
    y,
    priors: Sequence[TargetPrior],
    angle_grid,
    model: ForwardModel,
    grid=None,
    budget: int = 5_000_000,
    columns=None,
) -> BruteForceResult:
    """Exhaustive residual over every M-tuple of candidate angles.

    The returned surface has one axis per target; infeasible entries are
    ``inf``.  ``columns`` may hold precomputed ``(V, s)`` pairs per prior
    (Monte-Carlo runs reuse them across noise draws).
    """
    t0 = time.perf_counter()
    M = len(priors)
    if M < 1:
        raise ValueError("at least one prior required")
    ang = _angles(angle_grid)
    required = ang.size**M
    if required > budget:
        raise BudgetExceededError(required, budget)
    yv = _samples(y)
    k = _wavenumbers(y, grid)
    if columns is None:
        columns = [model.vectors(k, ang, pr.p) for pr in priors]
    feas = [np.flatnonzero(np.isfinite(s)) for _, s in columns]
    for pr, f in zip(priors, feas):
        if f.size == 0:
            raise EstimationError(f"no feasible angle for range {pr.p:.6g} m")
    cols = [pr.sigma * V[:, f] for pr, (V, _), f in zip(priors, columns, feas)]

    surface = np.full((ang.size,) * M, np.inf)
    if M == 1:
        sq = np.sum(np.abs(yv[:, None] - cols[0]) ** 2, axis=0)
        surface[feas[0]] = np.sqrt(sq)
    else:
        A = np.ascontiguousarray(cols[-2])
        B = np.ascontiguousarray(cols[-1])
        for head in itertools.product(*(range(f.size) for f in feas[:-2])):
            r = yv.copy()
            for m, j in enumerate(head):
                r -= cols[m][:, j]
            sq = kernels.pair_loss_surface(np.ascontiguousarray(r), A, B)
            idx = tuple(feas[m][j] for m, j in enumerate(head))
            surface[idx + np.ix_(feas[-2], feas[-1])] = np.sqrt(sq)
    best = np.unravel_index(int(np.argmin(surface)), surface.shape)
    best = tuple(int(b) for b in best)
    evals = int(np.prod([f.size for f in feas]))
    return BruteForceResult(ang[list(best)], best, surface, ang, time.perf_counter() - t0, evals)


# ---------------------------------------------------------------- LASSO


def soft_threshold(z, t):
    """Complex soft threshold ``z * max(1 - t/|z|, 0)``."""
    z = np.asarray(z, dtype=complex)
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(mag > t, 1.0 - t / np.where(mag > 0, mag, 1.0), 0.0)
    return z * shrink


def power_iteration(G: np.ndarray, n_iter: int = 20, tol: float = 1e-6) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix."""
    n = G.shape[0]
    v = np.ones(n, dtype=complex) / math.sqrt(n)
    lam = 0.0
    for _ in range(n_iter):
        w = G @ v
        new = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return max(lam, float(np.linalg.norm(G @ v)))


def _matrix(V) -> np.ndarray:
    return np.asarray(V.entries if isinstance(V, SensingMatrix) else V, dtype=complex)


def lasso(
    V,
    y,
    lam: float | None = None,
    max_iter: int = 5000,
    tol: float = 1e-10,
    lam_ratio: float = 0.1,
    accelerate: bool = True,
    gram=None,
    kkt_tol: float | None = None,
) -> SparseResult:
    """Minimize ``0.5*||y - V x||^2 + lam*||x||_1`` over complex ``x``.

    Proximal gradient with complex soft thresholding.  ``accelerate``
    switches on the monotone variant of FISTA; the objective trace is
    non-increasing either way.  The step is 1/L with L from power
    iteration on ``V^H V``, doubled whenever the quadratic upper bound
    fails.  ``lam`` defaults to ``lam_ratio * ||V^H y||_inf``.
    ``gram`` may pass a precomputed ``(V^H V, L)`` pair.

    Convergence means a relative objective change below ``tol``.  That
    pins the iterate down only to about the square root of the objective's
    rounding error, so ``kkt_tol`` optionally also requires
    :func:`kkt_violation` to drop below it before stopping.
    """
    A = _matrix(V)
    yv = _samples(y)
    n = A.shape[1]
    Aty = A.conj().T @ yv
    if lam is None:
        lam = lam_ratio * float(np.max(np.abs(Aty))) if n else 0.0
    if not lam > 0:
        if np.any(Aty):
            raise ValueError("lam must be > 0")
        lam = 1.0  # y orthogonal to every column: the solution is zero for any lam

    scale = float(np.linalg.norm(yv))
    if scale == 0:
        return SparseResult(np.zeros(n, complex), np.array([], int), 0.0, [0.0], [0.0], 0, True, lam)
    ys = yv / scale
    lam_s = lam / scale
    if gram is not None:
        L = gram[1]
        if L is None:
            L = power_iteration(gram[0])
    else:
        L = power_iteration(A.conj().T @ A)
    if L <= 0:
        L = 1.0

    # the residual is tracked explicitly; expanding 0.5*||y - A x||^2 through
    # the Gram matrix loses the digits the stopping rule relies on
    def smooth(Ax):
        r = ys - Ax
        return 0.5 * float(np.vdot(r, r).real)

    def objective(x, Ax):
        return smooth(Ax) + lam_s * float(np.sum(np.abs(x)))

    x = np.zeros(n, dtype=complex)
    Ax = np.zeros(A.shape[0], dtype=complex)
    F = objective(x, Ax)
    obj = [F * scale**2]
    res = [math.sqrt(2 * smooth(Ax)) * scale]
    w, Aw = x, Ax
    tk = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rw = Aw - ys
        fw = 0.5 * float(np.vdot(rw, rw).real)
        grad = A.conj().T @ rw
        while True:
            z = soft_threshold(w - grad / L, lam_s / L)
            Az = A @ z
            dz = z - w
            bound = fw + float(np.vdot(grad, dz).real) + 0.5 * L * float(np.vdot(dz, dz).real)
            if smooth(Az) <= bound + 1e-14 * max(1.0, abs(bound)):
                break
            L *= 2.0
        Fz = objective(z, Az)
        accepted = Fz <= F
        # a rejected step within rounding of F also counts as no change
        stalled = abs(F - Fz) <= tol * max(F, 1e-300)
        if not accelerate:
            if not accepted:
                # the bound guarantees descent; failing it means rounding-level stagnation
                converged = True
                break
            x_new, Ax_new, F_new = z, Az, Fz
            w, Aw = z, Az
        else:
            x_new, Ax_new, F_new = (z, Az, Fz) if accepted else (x, Ax, F)
            t_next = 0.5 * (1 + math.sqrt(1 + 4 * tk * tk))
            w = x_new + (tk / t_next) * (z - x_new) + ((tk - 1) / t_next) * (x_new - x)
            Aw = Ax_new + (tk / t_next) * (Az - Ax_new) + ((tk - 1) / t_next) * (Ax_new - Ax)
            tk = t_next
        x, Ax, F = x_new, Ax_new, F_new
        obj.append(F * scale**2)
        res.append(math.sqrt(2 * smooth(Ax)) * scale)
        if stalled:
            if kkt_tol is None or _kkt_scaled(A, ys, x, Ax, lam_s) <= kkt_tol:
                converged = True
                break
    if not converged:
        warnings.warn(f"LASSO did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2)
    x = x * scale
    return SparseResult(x, np.flatnonzero(x), res[-1], obj, res, it, converged, lam)


def _kkt_scaled(A, ys, x, Ax, lam_s):
    g = A.conj().T @ (Ax - ys)
    mag = np.abs(x)
    act = mag > 0
    v_act = np.abs(g[act] + lam_s * x[act] / mag[act])
    v_in = np.abs(g[~act]) - lam_s
    return float(max(np.max(v_act, initial=0.0), np.max(v_in, initial=0.0))) / lam_s


def kkt_violation(V, y, x, lam: float) -> float:
    """Largest optimality-condition violation, relative to ``lam``.

    Active entries need ``V^H (V x - y) = -lam * x/|x|``; inactive ones
    need ``|V^H (V x - y)| <= lam``.
    """
    A = _matrix(V)
    x = np.asarray(x, dtype=complex)
    g = A.conj().T @ (A @ x - _samples(y))
    act = np.abs(x) > 0
    v_act = np.abs(g[act] + lam * x[act] / np.abs(x[act])) if act.any() else np.zeros(0)
    v_in = np.maximum(np.abs(g[~act]) - lam, 0.0)
    return float(np.max(np.concatenate([v_act, v_in, [0.0]])) / lam)


# ---------------------------------------------------------------- OMP


def omp(V, y, max_support: int, residual_tol: float = 0.0) -> SparseResult:
    """Orthogonal matching pursuit with a least-squares refit per step.

    Stops at ``max_support`` atoms or once ``||r|| <= residual_tol * ||y||``.
    """
    if max_support < 1:
        raise ValueError("max_support must be >= 1")
    A = _matrix(V)
    yv = _samples(y)
    n = A.shape[1]
    ynorm = float(np.linalg.norm(yv))
    support: list[int] = []
    coef = np.zeros(0, complex)
    r = yv.copy()
    trace = [ynorm]
    while len(support) < min(max_support, n):
        if np.linalg.norm(r) <= residual_tol * ynorm:
            break
        c = np.abs(A.conj().T @ r)
        c[support] = -1.0
        j = int(np.argmax(c))
        trial = support + [j]
        As = A[:, trial]
        if np.linalg.matrix_rank(As) < len(trial):
            warnings.warn("OMP active set became rank deficient", RankDeficiencyWarning, stacklevel=2)
            break
        coef, *_ = np.linalg.lstsq(As, yv, rcond=None)
        support = trial
        r = yv - As @ coef
        trace.append(float(np.linalg.norm(r)))
    x = np.zeros(n, complex)
    x[support] = coef[: len(support)]
    return SparseResult(x, np.array(support, int), trace[-1], [], trace, len(support), True, float("nan"))


# ---------------------------------------------------------------- per-range pipeline


@dataclass(frozen=True)
class PipelineConfig:
    solver: str = "lasso"  # "lasso" | "omp"
    mode: str = "joint"  # "joint" | "independent"
    lam_ratio: float = 0.1
    max_iter: int = 5000
    tol: float = 1e-10
    refine: bool = True
    accelerate: bool = True

    def __post_init__(self):
        if self.solver not in ("lasso", "omp"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.mode not in ("joint", "independent"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class RangeEstimate:
    p: float
    theta: float = float("nan")
    column: int = -1
    coefficient: complex = 0j
    rcs_estimate: float = float("nan")
    ok: bool = False
    error: str = ""
    spectrum: np.ndarray | None = field(default=None, repr=False)
    angles: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PipelineResult:
    estimates: list[RangeEstimate]
    solver_results: list[SparseResult]

    def angles(self) -> np.ndarray:
        return np.array([e.theta for e in self.estimates])


def _pick(mag: np.ndarray, count: int, fallback: np.ndarray, exclude=()) -> list[int]:
    """Top-``count`` indices by ``mag`` (nonzero only), topped up from ``fallback``."""
    order = [int(i) for i in np.argsort(-mag, kind="stable") if mag[i] > 0 and i not in exclude]
    picks = order[:count]
    if len(picks) < count:
        for i in np.argsort(-fallback, kind="stable"):
            i = int(i)
            if i not in picks and i not in exclude:
                picks.append(i)
            if len(picks) == count:
                break
    return picks


def _refine(A: np.ndarray, y: np.ndarray, blocks: list[np.ndarray], picks: list[list[int]], max_sweeps: int = 10):
    """Block coordinate descent on ``||y - A_S c||`` with a fixed number of atoms per block.

    Each atom in turn is replaced by the column of its own block that
    most reduces the least-squares residual given all other atoms.
    """
    slots = [(b, q) for b, pb in enumerate(picks) for q in range(len(pb))]
    for _ in range(max_sweeps):
        changed = False
        for b, q in slots:
            others = [c for bb, pb in enumerate(picks) for qq, c in enumerate(pb) if (bb, qq) != (b, q)]
            if others:
                Q, _ = np.linalg.qr(A[:, others])
                r = y - Q @ (Q.conj().T @ y)
                cols = A[:, blocks[b]]
                P = cols - Q @ (Q.conj().T @ cols)
            else:
                r, P = y, A[:, blocks[b]]
            den = np.sum(np.abs(P) ** 2, axis=0)
            gain = np.where(den > 1e-12, np.abs(P.conj().T @ r) ** 2 / np.where(den > 0, den, 1.0), -1.0)
            for qq, c in enumerate(picks[b]):
                if qq != q:
                    gain[np.searchsorted(blocks[b], c)] = -1.0
            best = int(blocks[b][int(np.argmax(gain))])
            if best != picks[b][q]:
                picks[b][q] = best
                changed = True
        if not changed:
            break
    return picks


def per_range_pipeline(
    y,
    ranges: Sequence[float],
    angle_grid,
    model: ForwardModel,
    config: PipelineConfig = PipelineConfig(),
    grid: FrequencyGrid | None = None,
) -> PipelineResult:
    """Angle estimate for each known range.

    ``mode="joint"`` stacks the sensing matrices of all ranges into one
    dictionary so each echo is explained by its own range block;
    ``"independent"`` solves each range on its own matrix.  Repeated
    ranges share one block and get one atom per occurrence.
    """
    yv = _samples(y)
    if grid is None:
        if not isinstance(y, Measurement):
            raise ValueError("grid required for bare sample arrays")
        grid = y.grid
    ang = _angles(angle_grid)
    if len(ranges) == 0:
        return PipelineResult([], [])

    uniq: list[float] = []
    slot_of: list[int] = []
    for p in ranges:
        for u, q in enumerate(uniq):
            if abs(q - p) <= 1e-9 * max(1.0, abs(p)):
                slot_of.append(u)
                break
        else:
            uniq.append(float(p))
            slot_of.append(len(uniq) - 1)
    need = [slot_of.count(u) for u in range(len(uniq))]

    mats: list[SensingMatrix | None] = []
    errors: list[str] = []
    for p in uniq:
        try:
            mats.append(model.sensing_matrix(grid, ang, p))
            errors.append("")
        except EmptySensingMatrixError as exc:
            mats.append(None)
            errors.append(str(exc))

    live = [u for u, m in enumerate(mats) if m is not None]
    picks: dict[int, list[int]] = {}
    spectra: dict[int, np.ndarray] = {}
    solver_results: list[SparseResult] = []

    def solve(A, count, key):
        if config.solver == "lasso":
            return lasso(
                A,
                yv,
                lam_ratio=config.lam_ratio,
                max_iter=config.max_iter,
                tol=config.tol,
                accelerate=config.accelerate,
                gram=model.gram(key, A),
            )
        return omp(A, yv, max_support=count)

    gkey = (np.asarray(grid.wavenumbers).tobytes(), ang.tobytes())

    if live and config.mode == "joint":
        A = np.hstack([mats[u].entries for u in live])
        offsets = np.cumsum([0] + [mats[u].entries.shape[1] for u in live])
        blocks = [np.arange(offsets[i], offsets[i + 1]) for i in range(len(live))]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            res = solve(A, sum(need[u] for u in live), gkey + tuple(uniq[u] for u in live))
        solver_results.append(res)
        mag = np.abs(res.coefficients)
        corr = np.abs(A.conj().T @ (yv - A @ res.coefficients))
        plist = [
            [int(blocks[i][j]) for j in _pick(mag[blocks[i]], need[u], corr[blocks[i]])] for i, u in enumerate(live)
        ]
        if config.refine:
            plist = _refine(A, yv, blocks, plist)
        coef, *_ = np.linalg.lstsq(A[:, [c for pb in plist for c in pb]], yv, rcond=None)
        flat = iter(coef)
        for i, u in enumerate(live):
            picks[u] = [(c - offsets[i], next(flat)) for c in plist[i]]
            spectra[u] = mag[blocks[i]]
    else:
        for u in live:
            A = mats[u].entries
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                res = solve(A, need[u], gkey + (uniq[u],))
            solver_results.append(res)
            mag = np.abs(res.coefficients)
            corr = np.abs(A.conj().T @ (yv - A @ res.coefficients))
            cols = _pick(mag, need[u], corr)
            if config.refine:
                cols = _refine(A, yv, [np.arange(A.shape[1])], [cols])[0]
            coef, *_ = np.linalg.lstsq(A[:, cols], yv, rcond=None)
            picks[u] = list(zip(cols, coef))
            spectra[u] = mag

    used = {u: 0 for u in range(len(uniq))}
    estimates = []
    for p, u in zip(ranges, slot_of):
        if mats[u] is None:
            estimates.append(RangeEstimate(float(p), error=errors[u]))
            continue
        sm = mats[u]
        # strongest atom first for repeated ranges
        ordered = sorted(picks[u], key=lambda t: -abs(t[1]))
        j, c = ordered[used[u]]
        used[u] += 1
        estimates.append(
            RangeEstimate(
                float(p),
                theta=float(sm.angles[j]),
                column=int(sm.column_index[j]),
                coefficient=complex(c),
                rcs_estimate=float(abs(c) / sm.column_norms[j]),
                ok=True,
                spectrum=spectra[u],
                angles=sm.angles,
            )
        )
    return PipelineResult(estimates, solver_results)
