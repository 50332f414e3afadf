"""FMCW waveform and the frequency-domain echo synthesizer.

Dechirped samples are indexed by wavenumber ``k_i = 2*pi*f_i/c`` with
``f_i`` swept uniformly over ``[f_c, f_c + beta]``.  A path of total
length ``R`` contributes ``exp(-1j * k_i * R)``; ``R`` is the summed
length of every leg, no factor of two is applied anywhere.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import csvio
from .array import Surface, gain_table
from .geometry import (
    SPEED_OF_LIGHT,
    NearFieldWarning,
    SceneGeometry,
    TargetPlacement,
    far_field_angles,
)


@dataclass(frozen=True)
class WaveformSpec:
    f_c: float
    beta: float
    T: float = 100e-6
    n_freq: int = 128

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError("f_c must be > 0")
        if not 0 < self.beta < self.f_c:
            raise ValueError("beta must satisfy 0 < beta < f_c")
        if not self.T > 0:
            raise ValueError("T must be > 0")
        if int(self.n_freq) != self.n_freq or self.n_freq < 2:
            raise ValueError("n_freq must be an integer >= 2")

    @property
    def chirp_rate(self) -> float:
        return self.beta / self.T

    @property
    def fast_time(self) -> np.ndarray:
        return np.linspace(0.0, self.T, int(self.n_freq))

    @property
    def k_carrier(self) -> float:
        return 2 * math.pi * self.f_c / SPEED_OF_LIGHT


@dataclass(frozen=True)
class FrequencyGrid:
    wavenumbers: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.array(self.wavenumbers, dtype=float)
        if k.ndim != 1 or k.size < 1:
            raise ValueError("wavenumbers must be a non-empty 1-D array")
        if k.size > 1 and np.any(np.diff(k) <= 0):
            raise ValueError("wavenumbers must be strictly increasing")
        k.setflags(write=False)
        object.__setattr__(self, "wavenumbers", k)

    @classmethod
    def from_waveform(cls, spec: WaveformSpec) -> "FrequencyGrid":
        f = spec.f_c + spec.chirp_rate * spec.fast_time
        return cls(2 * math.pi * f / SPEED_OF_LIGHT)

    def __len__(self):
        return self.wavenumbers.size


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = math.inf
    seed: int = 0


@dataclass(frozen=True)
class Measurement:
    samples: np.ndarray = field(repr=False)
    grid: FrequencyGrid
    snr_db: float
    noise_seed: int
    noise_free: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (len(self.samples) == len(self.noise_free) == len(self.grid)):
            raise ValueError("measurement arrays and grid disagree in length")

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.grid.wavenumbers, self.samples, self.noise_free):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def fmcw_tx(tau, spec: WaveformSpec):
    tau = np.asarray(tau, dtype=float)
    return np.exp(1j * (2 * math.pi * spec.f_c * tau + math.pi * spec.chirp_rate * tau**2))


def fmcw_echo(tau, R0: float, sigma: float, spec: WaveformSpec):
    """Point-target echo written as the transmit chirp times the delay terms."""
    if not R0 > 0:
        raise ValueError("R0 must be > 0")
    tau = np.asarray(tau, dtype=float)
    tau0 = R0 / SPEED_OF_LIGHT
    mu = spec.chirp_rate
    k = 2 * math.pi * (spec.f_c + mu * tau) / SPEED_OF_LIGHT
    rho = sigma / (4 * k**2 * R0**2)
    delay = np.exp(
        -1j * 2 * math.pi * spec.f_c * tau0 - 1j * 2 * math.pi * mu * tau0 * tau + 1j * math.pi * mu * tau0**2
    )
    return rho * fmcw_tx(tau, spec) * delay


def dechirp_validate(spec: WaveformSpec, R0: float, sigma: float = 1.0) -> float:
    """Max phase error between the dechirped echo and ``exp(-1j k R0)``.

    The echo is synthesized as a genuinely delayed copy of the transmit
    chirp, mixed with the conjugate chirp, and the residual video phase
    ``pi * mu * tau0**2`` is removed before comparing.
    """
    tau = spec.fast_time
    tau0 = R0 / SPEED_OF_LIGHT
    rx = fmcw_tx(tau - tau0, spec)
    beat = rx * np.conj(fmcw_tx(tau, spec))
    beat *= np.exp(-1j * math.pi * spec.chirp_rate * tau0**2)
    k = 2 * math.pi * (spec.f_c + spec.chirp_rate * tau) / SPEED_OF_LIGHT
    model = np.exp(-1j * k * R0)
    return float(np.max(np.abs(np.angle(beat * np.conj(model)))))


def direct_echo(grid: FrequencyGrid, p: float, sigma: float) -> np.ndarray:
    if not p > 0:
        raise ValueError("p must be > 0")
    k = grid.wavenumbers
    return sigma / (4 * k**2 * p**2) * np.exp(-1j * k * p)


def bounce_field(
    k: np.ndarray,
    scene: SceneGeometry,
    surfaces: Sequence[Surface],
    thetas,
    s,
    p: float,
    sigma=1.0,
) -> np.ndarray:
    """Radar -> surface pair -> target -> radar field, shape ``(K, len(thetas))``.

    ``s`` is the midpoint-to-target distance for each angle.  This is the
    single generator behind both the synthesizer and the estimation-side
    model vectors.
    """
    k = np.asarray(k, dtype=float)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    s = np.broadcast_to(np.asarray(s, dtype=float), thetas.shape)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), thetas.shape)
    s1, s2 = surfaces
    th_in = scene.theta_in
    g1 = gain_table(s1, k, th_in, thetas)
    g2 = gain_table(s2, k, th_in, thetas)
    kk = k[:, None]
    half_delta = 0.5 * scene.d * (math.cos(th_in) - np.cos(thetas))[None, :]
    rho = sigma[None, :] / (64 * kk**6 * scene.t**2 * s[None, :] ** 2 * p**2)
    pair = g1 * np.exp(1j * kk * half_delta) + g2 * np.exp(-1j * kk * half_delta)
    return rho * pair * np.exp(-1j * kk * (scene.t + s[None, :] + p))


def twopath_echo(grid: FrequencyGrid, scene: SceneGeometry, surfaces: Sequence[Surface], target: TargetPlacement) -> np.ndarray:
    far_field_angles(scene, target.position)
    return bounce_field(grid.wavenumbers, scene, surfaces, target.theta, target.s1_ref, target.p, target.rcs)[:, 0]


def add_noise(y0: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    """Circular complex white Gaussian noise at ``snr_db`` relative to mean ``|y0|^2``."""
    if math.isinf(noise.snr_db) and noise.snr_db > 0:
        return y0.copy()
    power = float(np.mean(np.abs(y0) ** 2))
    var = power / 10 ** (noise.snr_db / 10)
    rng = np.random.default_rng(noise.seed)
    n = rng.standard_normal(y0.size) + 1j * rng.standard_normal(y0.size)
    return y0 + math.sqrt(var / 2) * n


def multi_target_echo(
    grid: FrequencyGrid,
    scene: SceneGeometry,
    surfaces: Sequence[Surface],
    targets: Sequence[TargetPlacement],
    noise: NoiseSpec = NoiseSpec(),
) -> Measurement:
    if len(targets) < 1:
        raise ValueError("at least one target required")
    y0 = np.zeros(len(grid), dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearFieldWarning)
        for tg in targets:  # fixed order keeps the sum bit-reproducible
            y0 += twopath_echo(grid, scene, surfaces, tg)
    return Measurement(add_noise(y0, noise), grid, noise.snr_db, noise.seed, y0)


MEASUREMENT_COLUMNS = ["k_radpm", "re_y", "im_y", "re_noise_free", "im_noise_free"]


def write_measurement_csv(path, m: Measurement, config_hash: str = ""):
    rows = zip(m.grid.wavenumbers, m.samples.real, m.samples.imag, m.noise_free.real, m.noise_free.imag)
    meta = {"config_hash": config_hash, "seed": m.noise_seed, "snr_db": float(m.snr_db)}
    return csvio.write_csv(path, meta, MEASUREMENT_COLUMNS, rows)


def read_measurement_csv(path) -> Measurement:
    meta, header, rows = csvio.read_csv(path)
    if header != MEASUREMENT_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    a = np.array(rows, dtype=float).reshape(-1, 5)
    return Measurement(
        samples=a[:, 1] + 1j * a[:, 2],
        grid=FrequencyGrid(a[:, 0]),
        snr_db=float(meta.get("snr_db", "inf")),
        noise_seed=int(meta.get("seed", 0)),
        noise_free=a[:, 3] + 1j * a[:, 4],
    )
