"""Uniform linear arrays and fixed (preconfigured) phase profiles.

Element ``m`` sits at ``(m - (N-1)/2) * spacing`` along the surface axis,
so the surface center is the phase reference.  The steering vector is
``a(theta)[m] = exp(-1j * k * x_m * cos(theta))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class UlaSpec:
    n_elements: int
    spacing: float

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise ConfigurationError(f"n_elements must be a positive integer, got {self.n_elements}")
        if not self.spacing > 0:
            raise ConfigurationError(f"spacing must be > 0, got {self.spacing}")

    @property
    def positions(self) -> np.ndarray:
        n = self.n_elements
        return (np.arange(n) - (n - 1) / 2.0) * self.spacing

    @classmethod
    def half_wavelength(cls, n_elements: int, k: float) -> "UlaSpec":
        return cls(n_elements, math.pi / k)


@dataclass(frozen=True)
class PhaseProfile:
    """Diagonal of the surface phase response, in radians."""

    phases: np.ndarray = field(repr=False)
    steer_angle: float = math.pi / 2
    design_wavenumber: float = float("nan")

    def __post_init__(self):
        ph = np.array(self.phases, dtype=float)
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    def __len__(self):
        return self.phases.size

    @property
    def phasors(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    @classmethod
    def identity(cls, n: int) -> "PhaseProfile":
        return cls(np.zeros(n))


@dataclass(frozen=True)
class Surface:
    """A preconfigured surface: geometry of its array plus its profile.

    ``amplitude`` scales the whole reflection and lets a test switch one
    surface off without changing the geometry.
    """

    ula: UlaSpec
    profile: PhaseProfile
    amplitude: float = 1.0

    def __post_init__(self):
        if len(self.profile) != self.ula.n_elements:
            raise ConfigurationError(
                f"profile has {len(self.profile)} phases for {self.ula.n_elements} elements"
            )


def steering_vector(ula: UlaSpec, k: float, theta: float) -> np.ndarray:
    if not k > 0:
        raise ValueError("k must be > 0")
    return np.exp(-1j * k * ula.positions * math.cos(theta))


def beamform_profile(ula: UlaSpec, k_design: float, steer: float, theta_in: float = math.pi / 2) -> PhaseProfile:
    """Profile that reflects a wave arriving at ``theta_in`` towards ``steer``.

    At ``k_design`` the gain ``a(steer)^H Psi a(theta_in)`` equals N.
    For broadside illumination (the default) this is the phase of
    ``a(steer)`` itself.
    """
    if not k_design > 0:
        raise ValueError("k_design must be > 0")
    phases = -k_design * ula.positions * (math.cos(steer) - math.cos(theta_in))
    return PhaseProfile(phases, steer_angle=float(steer), design_wavenumber=float(k_design))


def effective_response(profile: PhaseProfile, ula: UlaSpec, k: float, theta_in: float) -> np.ndarray:
    if len(profile) != ula.n_elements:
        raise ConfigurationError(f"profile length {len(profile)} != {ula.n_elements} elements")
    return profile.phasors * steering_vector(ula, k, theta_in)


def pattern_gain(profile: PhaseProfile, ula: UlaSpec, k: float, theta_in: float, theta_out: float) -> complex:
    a_out = steering_vector(ula, k, theta_out)
    return complex(np.vdot(a_out, effective_response(profile, ula, k, theta_in)))


def gain_table(surface: Surface, wavenumbers, theta_in: float, thetas) -> np.ndarray:
    """``pattern_gain`` over a (K, Theta) grid, scaled by the surface amplitude."""
    k = np.ascontiguousarray(np.atleast_1d(wavenumbers), dtype=float)
    c = np.ascontiguousarray(np.cos(np.atleast_1d(thetas)), dtype=float)
    g = kernels.gain_table(
        k,
        np.ascontiguousarray(surface.ula.positions),
        np.ascontiguousarray(surface.profile.phases),
        c,
        math.cos(theta_in),
    )
    return surface.amplitude * g


def squint_angle(steer: float, k_design: float, k: float, theta_in: float = math.pi / 2) -> float:
    """Main-lobe direction at ``k`` for a profile designed at ``k_design``.

    For broadside illumination this is ``cos(peak) * k = cos(steer) * k_design``.
    Returns NaN when the lobe leaves visible space.
    """
    ci = math.cos(theta_in)
    c = ci + (math.cos(steer) - ci) * k_design / k
    return math.acos(c) if abs(c) <= 1 else float("nan")
