"""Model vectors, sensing matrices and coherence diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import csvio
from .array import Surface, gain_table
from .geometry import InfeasibleRangeError, SceneGeometry, s1_from_range
from .wavefield import FrequencyGrid, WaveformSpec, bounce_field


class EmptySensingMatrixError(ValueError):
    pass


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class AngleGrid:
    angles: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.angles, dtype=float).ravel()
        if a.size < 2:
            raise ValueError("angle grid needs at least two angles (pass a plain array for a single column)")
        if np.any(np.diff(a) <= 0):
            raise ValueError("angle grid must be strictly increasing")
        if a[0] <= 0 or a[-1] >= math.pi:
            raise ValueError("angles must lie in (0, pi)")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @classmethod
    def from_step(cls, step_deg: float = 0.5, lo_deg: float = 0.0, hi_deg: float = 180.0) -> "AngleGrid":
        n = int(round((hi_deg - lo_deg) / step_deg))
        deg = lo_deg + step_deg * np.arange(1, n)
        deg = deg[(deg > lo_deg) & (deg < hi_deg)]
        return cls(np.deg2rad(deg))

    @property
    def degrees(self) -> np.ndarray:
        return np.rad2deg(self.angles)

    def __len__(self):
        return self.angles.size


@dataclass(frozen=True)
class SensingMatrix:
    """Unit-norm model vectors for the feasible angles at one range.

    ``feasible`` masks the full candidate list; ``column_index`` maps
    each stored column back into it.
    """

    entries: np.ndarray = field(repr=False)
    wavenumbers: np.ndarray = field(repr=False)
    candidate_angles: np.ndarray = field(repr=False)
    feasible: np.ndarray = field(repr=False)
    column_norms: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    range_p: float = 0.0

    @property
    def column_index(self) -> np.ndarray:
        return np.flatnonzero(self.feasible)

    @property
    def angles(self) -> np.ndarray:
        return self.candidate_angles[self.feasible]

    @property
    def shape(self):
        return self.entries.shape

    def raw(self) -> np.ndarray:
        return self.entries * self.column_norms[None, :]


@dataclass(frozen=True)
class CoherenceReport:
    mu: float
    argmax_pair: tuple[float, float]
    gram_magnitudes: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)


def model_vectors(k, scene: SceneGeometry, surfaces: Sequence[Surface], thetas, p: float, branch: str = "near"):
    """Raw model vectors (sigma = 1) for every candidate angle.

    Returns ``(V, s)``; columns at infeasible angles are NaN.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    s = s1_from_range(scene, p, thetas, branch=branch)
    ok = np.isfinite(s)
    V = np.full((np.size(k), thetas.size), np.nan + 0j)
    if ok.any():
        V[:, ok] = bounce_field(k, scene, surfaces, thetas[ok], s[ok], p)
    return V, s


def model_vector(grid: FrequencyGrid, scene, surfaces, theta: float, p: float, sigma: float = 1.0, branch: str = "near"):
    s = s1_from_range(scene, p, float(theta), branch=branch)
    return bounce_field(grid.wavenumbers, scene, surfaces, theta, s, p, sigma)[:, 0]


def build_sensing_matrix(grid: FrequencyGrid, scene, surfaces, angles, p: float, branch: str = "near") -> SensingMatrix:
    cand = np.asarray(getattr(angles, "angles", angles), dtype=float).ravel()
    V, s = model_vectors(grid.wavenumbers, scene, surfaces, cand, p, branch)
    ok = np.isfinite(s)
    if not ok.any():
        raise EmptySensingMatrixError(f"no candidate angle is feasible at range {p:.6g} m")
    raw = V[:, ok]
    norms = np.linalg.norm(raw, axis=0)
    # the tiny absolute scale (~1e-27) is fine for float64 but zero columns are not
    if np.any(norms == 0):
        raise EmptySensingMatrixError("zero-energy model vector")
    entries = raw / norms
    for a in (entries, norms):
        a.setflags(write=False)
    return SensingMatrix(entries, np.asarray(grid.wavenumbers), cand, ok, norms, s[ok], float(p))


def mutual_coherence(V, mask=None) -> CoherenceReport:
    """Largest normalized inner product between distinct columns.

    ``V`` is a :class:`SensingMatrix` or a plain 2-D array (columns are
    normalized here).  ``mask`` selects a subset of columns.
    """
    if isinstance(V, SensingMatrix):
        A, angles = V.entries, V.angles
    else:
        A = np.asarray(V, dtype=complex)
        nrm = np.linalg.norm(A, axis=0)
        A = A / np.where(nrm > 0, nrm, 1.0)
        angles = np.arange(A.shape[1], dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        A, angles = A[:, mask], angles[mask]
    if A.shape[1] < 2:
        raise DiagnosticsError("coherence needs at least two columns")
    G = np.abs(A.conj().T @ A)
    off = G.copy()
    np.fill_diagonal(off, -1.0)
    flat = int(np.argmax(off))
    i, j = divmod(flat, off.shape[1])
    mu = float(min(off[i, j], 1.0))
    return CoherenceReport(mu, (float(angles[i]), float(angles[j])), G, np.asarray(angles))


def gain_region(scene: SceneGeometry, surfaces: Sequence[Surface], k: float, thetas, drop_db: float = 3.0) -> np.ndarray:
    """Angles where either surface's gain at ``k`` is within ``drop_db`` of its peak."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    ratio = 10 ** (-drop_db / 20)
    mask = np.zeros(thetas.size, dtype=bool)
    for srf in surfaces:
        g = np.abs(gain_table(srf, [k], scene.theta_in, thetas)[0])
        if g.max() > 0:
            mask |= g >= ratio * g.max()
    return mask


@dataclass(frozen=True)
class SweepEntry:
    bandwidth: float
    matrix: SensingMatrix
    report: CoherenceReport
    region_report: CoherenceReport | None


def squint_sweep(
    scene: SceneGeometry,
    surfaces: Sequence[Surface],
    angles,
    bandwidths: Sequence[float],
    waveform: WaveformSpec,
    p: float,
    region_db: float | None = 3.0,
    branch: str = "near",
) -> list[SweepEntry]:
    """Coherence of the sensing matrix as the sweep bandwidth changes.

    The carrier, sample count and surface profiles stay fixed; only the
    swept band ``[f_c, f_c + B]`` changes.  The gain region is fixed at
    the carrier so every bandwidth is scored on the same columns.
    """
    cand = np.asarray(getattr(angles, "angles", angles), dtype=float)
    out = []
    region = None
    if region_db is not None:
        region = gain_region(scene, surfaces, waveform.k_carrier, cand, region_db)
    for bw in bandwidths:
        wf = WaveformSpec(waveform.f_c, float(bw), waveform.T, waveform.n_freq)
        sm = build_sensing_matrix(FrequencyGrid.from_waveform(wf), scene, surfaces, cand, p, branch)
        rep = mutual_coherence(sm)
        rrep = None
        if region is not None:
            sub = region[sm.feasible]
            if sub.sum() >= 2:
                rrep = mutual_coherence(sm, sub)
        out.append(SweepEntry(float(bw), sm, rep, rrep))
    return out


def write_grid_csv(path, meta: dict, row_label: str, row_values, col_values, grid) -> None:
    """Grid export: first column holds the row axis, header row the column axis."""
    header = [row_label] + [csvio.fmt(float(c)) for c in col_values]
    rows = ([float(r)] + [float(v) for v in row] for r, row in zip(row_values, np.asarray(grid)))
    csvio.write_csv(path, meta, header, rows)


def export_sensing_matrix(prefix, sm: SensingMatrix, meta: dict) -> list[str]:
    """Write ``<prefix>_magnitude.csv`` and ``<prefix>_phase.csv`` (rows: k, columns: angle in deg)."""
    raw = sm.raw()
    deg = np.rad2deg(sm.angles)
    paths = []
    for name, data in (("magnitude", np.abs(raw)), ("phase", np.angle(raw))):
        path = f"{prefix}_{name}.csv"
        write_grid_csv(path, meta, "k_radpm", sm.wavenumbers, deg, data)
        paths.append(path)
    return paths


def export_gram(path, report: CoherenceReport, meta: dict, degrees: bool = True) -> None:
    ax = np.rad2deg(report.angles) if degrees else report.angles
    write_grid_csv(path, meta, "angle_deg", ax, ax, report.gram_magnitudes)


__all__ = [
    "AngleGrid",
    "CoherenceReport",
    "DiagnosticsError",
    "EmptySensingMatrixError",
    "InfeasibleRangeError",
    "SensingMatrix",
    "SweepEntry",
    "build_sensing_matrix",
    "export_gram",
    "export_sensing_matrix",
    "gain_region",
    "model_vector",
    "model_vectors",
    "mutual_coherence",
    "squint_sweep",
]
