"""Turning a validated config into runtime objects and seeded experiment runs.

Seed layout for one realization with seed ``s``:

* noise: ``default_rng(s)`` (see :func:`wavefield.add_noise`)
* targets with ``rcs = "uniform"``: ``default_rng([s, 1]).uniform(0, 1, M)``,
  one draw per target in config order (fixed targets still consume a draw)

Monte-Carlo trial ``i`` uses seed ``base + i``.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .array import ConfigurationError, Surface, UlaSpec, beamform_profile
from .config import ConfigError, ScenarioConfig, config_hash
from .estimate import (
    BruteForceResult,
    EstimationError,
    ForwardModel,
    PipelineConfig,
    PipelineResult,
    TargetPrior,
    brute_force_multi,
    brute_force_single,
    per_range_pipeline,
)
from .geometry import (
    SPEED_OF_LIGHT,
    DegenerateGeometryError,
    NearFieldWarning,
    Point2,
    SceneGeometry,
    TargetPlacement,
    exact_path_lengths,
)
from .model import AngleGrid
from .wavefield import FrequencyGrid, Measurement, NoiseSpec, WaveformSpec, multi_target_echo


class ZeroRcsWarning(UserWarning):
    pass


@dataclass
class Scenario:
    """Runtime view of a :class:`ScenarioConfig`; construction validates it."""

    config: ScenarioConfig
    waveform: WaveformSpec = field(init=False)
    scene: SceneGeometry = field(init=False)
    surfaces: tuple[Surface, Surface] = field(init=False)
    model: ForwardModel = field(init=False)
    angle_grid: AngleGrid = field(init=False)

    def __post_init__(self):
        c = self.config
        try:
            self.waveform = WaveformSpec(c.waveform.f_c_hz, c.waveform.bandwidth_hz, c.waveform.chirp_s, c.waveform.n_freq)
            self.scene = SceneGeometry(Point2(*c.scene.radar), Point2(*c.scene.surface1), Point2(*c.scene.surface2))
            self.surfaces = build_surfaces(c, self.waveform, self.scene)
            self.angle_grid = AngleGrid.from_step(c.estimation.angle_step_deg)
            self._placements = [self._place(i, t) for i, t in enumerate(c.targets)]
        except (ValueError, DegenerateGeometryError) as exc:
            raise ConfigError(str(exc)) from None
        self.model = ForwardModel(self.scene, self.surfaces, c.estimation.branch)
        for i, t in enumerate(c.targets):
            if t.rcs == 0.0:
                warnings.warn(f"target {i} has rcs 0 and contributes no echo", ZeroRcsWarning, stacklevel=2)

    def _place(self, i, t) -> TargetPlacement:
        if t.theta_deg is not None:
            if not 0 < t.theta_deg < 180:
                raise ValueError(f"targets.{i}.theta_deg must lie in (0, 180)")
            tp = TargetPlacement.from_polar(self.scene, math.radians(t.theta_deg), t.s1_m)
        else:
            tp = TargetPlacement(self.scene, Point2(t.x_m, t.y_m))
        try:
            exact_path_lengths(self.scene, tp.position)
        except DegenerateGeometryError as exc:
            raise ValueError(f"targets.{i}: {exc}") from None
        return tp

    @cached_property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @cached_property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.from_waveform(self.waveform)

    @property
    def seed(self) -> int:
        return self.config.noise.seed

    @property
    def n_targets(self) -> int:
        return len(self._placements)

    def rcs_values(self, seed: int) -> np.ndarray:
        draws = np.random.default_rng([seed, 1]).uniform(0.0, 1.0, self.n_targets)
        return np.array([d if t.rcs == "uniform" else float(t.rcs) for d, t in zip(draws, self.config.targets)])

    def targets(self, seed: int | None = None) -> list[TargetPlacement]:
        seed = self.seed if seed is None else seed
        return [dataclasses.replace(tp, rcs=float(r)) for tp, r in zip(self._placements, self.rcs_values(seed))]

    def measurement(self, seed: int | None = None) -> Measurement:
        seed = self.seed if seed is None else seed
        if not self._placements:
            raise ConfigError("the config has no targets")
        noise = NoiseSpec(self.config.noise.snr, seed)
        return multi_target_echo(self.grid, self.scene, self.surfaces, self.targets(seed), noise)

    def pipeline_config(self) -> PipelineConfig:
        e = self.config.estimation
        return PipelineConfig(e.solver, e.mode, e.lambda_ratio, e.max_iter, e.tol, e.refine)

    def with_changes(self, **paths) -> "Scenario":
        """Copy with dotted-path overrides, e.g. ``waveform__bandwidth_hz=60e9``."""
        data = self.config.model_dump()
        for key, value in paths.items():
            node = data
            parts = key.split("__")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = "inf" if isinstance(value, float) and value == math.inf else value
        return Scenario(ScenarioConfig.model_validate(data))


def build_surfaces(c: ScenarioConfig, waveform: WaveformSpec, scene: SceneGeometry) -> tuple[Surface, Surface]:
    s = c.surfaces
    f_design = s.design_freq_hz if s.design_freq_hz is not None else waveform.f_c
    if not f_design > 0:
        raise ConfigurationError("design_freq_hz must be > 0")
    k_design = 2 * math.pi * f_design / SPEED_OF_LIGHT
    ula = UlaSpec(s.n_elements, s.spacing_m) if s.spacing_m is not None else UlaSpec.half_wavelength(s.n_elements, k_design)
    out = []
    for steer in s.steer_deg:
        if not 0 < steer < 180:
            raise ConfigurationError(f"steer angle {steer} deg outside (0, 180)")
        out.append(Surface(ula, beamform_profile(ula, k_design, math.radians(steer), scene.theta_in)))
    return tuple(out)


# ---------------------------------------------------------------- single runs


@dataclass
class TrialOutcome:
    seed: int
    true_deg: np.ndarray
    est_deg: np.ndarray
    rcs: np.ndarray
    success: bool
    runtime_s: float = 0.0
    failed: bool = False

    @property
    def abs_err_deg(self) -> np.ndarray:
        return np.abs(self.est_deg - self.true_deg)


def run_sparse(sc: Scenario, m: Measurement, targets: Sequence[TargetPlacement]) -> PipelineResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearFieldWarning)
        return per_range_pipeline(m, [t.p for t in targets], sc.angle_grid, sc.model, sc.pipeline_config())


def run_brute(sc: Scenario, m: Measurement, targets: Sequence[TargetPlacement]) -> BruteForceResult:
    priors = [TargetPrior(t.p, t.rcs) for t in targets]
    if len(priors) == 1:
        return brute_force_single(
            m, priors[0], sc.angle_grid, sc.model, refit=sc.config.estimation.amplitude_refit, columns=_columns(sc, priors)[0]
        )
    return brute_force_multi(m, priors, sc.angle_grid, sc.model, budget=sc.config.estimation.brute_budget, columns=_columns(sc, priors))


def _columns(sc: Scenario, priors):
    # raw model vectors depend only on geometry: memoize them on the model
    out = []
    for pr in priors:
        key = ("cols", sc.grid.wavenumbers.tobytes(), sc.angle_grid.angles.tobytes(), float(pr.p))
        hit = sc.model._cache.get(key)
        if hit is None:
            hit = sc.model.vectors(sc.grid.wavenumbers, sc.angle_grid.angles, pr.p)
            sc.model._cache[key] = hit
        out.append(hit)
    return out


def run_trial(sc: Scenario, seed: int, method: str = "sparse") -> TrialOutcome:
    import time

    t0 = time.perf_counter()
    targets = sc.targets(seed)
    m = sc.measurement(seed)
    true = np.array([math.degrees(t.theta) for t in targets])
    failed = False
    if method == "sparse":
        res = run_sparse(sc, m, targets)
        est = np.rad2deg(res.angles())
        failed = not all(e.ok for e in res.estimates)
    elif method == "brute":
        try:
            est = np.rad2deg(run_brute(sc, m, targets).best_angles)
        except EstimationError:
            est, failed = np.full(true.size, np.nan), True
    else:
        raise ValueError(f"unknown method {method!r}")
    tol = sc.config.estimation.angle_step_deg + 1e-9
    ok = bool(np.all(np.abs(est - true) <= tol))
    return TrialOutcome(seed, true, est, np.array([t.rcs for t in targets]), ok, time.perf_counter() - t0, failed)


# ---------------------------------------------------------------- Monte Carlo


@dataclass
class SweepPoint:
    variable: str
    value: float
    trials: list[TrialOutcome]

    @property
    def success_rate(self) -> float:
        return sum(t.success for t in self.trials) / len(self.trials)

    def _errors(self) -> np.ndarray:
        e = np.concatenate([t.abs_err_deg for t in self.trials])
        return e[np.isfinite(e)]

    @property
    def rmse_deg(self) -> float:
        e = self._errors()
        return float(np.sqrt(np.mean(e**2))) if e.size else float("nan")

    @property
    def median_abs_err_deg(self) -> float:
        e = self._errors()
        return float(np.median(e)) if e.size else float("nan")


SWEEPS = {
    "snr": "noise__snr_db",
    "bandwidth": "waveform__bandwidth_hz",
}


def monte_carlo(
    sc: Scenario,
    trials: int,
    method: str = "sparse",
    sweep: str | None = None,
    values: Sequence[float] = (),
    threads: int = 1,
    seed: int | None = None,
) -> list[SweepPoint]:
    """Seeded trials ``seed + i``; results come back in trial order regardless of ``threads``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = sc.seed if seed is None else seed
    if sweep is None:
        points = [("none", math.nan, sc)]
    else:
        if sweep not in SWEEPS:
            raise ValueError(f"unknown sweep {sweep!r}")
        if not values:
            raise ValueError("a sweep needs at least one value")
        points = [(sweep, float(v), sc.with_changes(**{SWEEPS[sweep]: float(v)})) for v in values]
    out = []
    for name, value, s in points:
        seeds = [base + i for i in range(trials)]
        # the first trial warms the per-model caches before any fan-out
        first = run_trial(s, seeds[0], method)
        if threads > 1 and trials > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rest = list(pool.map(lambda q: run_trial(s, q, method), seeds[1:]))
        else:
            rest = [run_trial(s, q, method) for q in seeds[1:]]
        out.append(SweepPoint(name, value, [first] + rest))
    return out
