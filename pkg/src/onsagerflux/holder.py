"""Hoelder-seminorm estimation, structure-function exponents, moduli of
continuity, time-integrability functionals, and the splitting-exponent
threshold logic.

Seminorm estimates scan exact lattice shifts: every displacement with
|d|_inf <= 2 plus thirteen directions rounded onto each dyadic shell
r = L/4 * 2^-j.  Estimates are deterministic lower bounds of the continuum
supremum; the shell profile doubles as the structure-function sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .fields import PERIODIC, GridField

#: structure-function proxy below which a field is reported as rough noise
ROUGH_ZETA2 = 0.2

_DIRECTIONS = [
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (1, -1, 0), (1, 0, -1), (0, 1, -1),
    (1, 1, 1), (1, 1, -1), (1, -1, 1), (-1, 1, 1),
]


# ---------------------------------------------------------------------------
# moduli of continuity


@dataclass(frozen=True)
class Modulus:
    """Named non-decreasing modulus with omega(0+) = 0 (constant is the
    degenerate member used to recover the plain Hoelder scale)."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where(s > 0.0, self.fn(np.maximum(s, 1e-300)), 0.0)
        return float(out) if out.ndim == 0 else out


def power_modulus(theta: float) -> Modulus:
    if theta <= 0:
        raise ValueError("power modulus needs theta > 0")
    return Modulus(f"power[{theta:g}]", lambda s: s**theta)


def log_modulus() -> Modulus:
    return Modulus("log", lambda s: 1.0 / np.log(np.e + 1.0 / s))


def constant_modulus() -> Modulus:
    return Modulus("constant", lambda s: np.ones_like(s))


_MODULUS_FACTORIES = {"power": power_modulus, "log": log_modulus, "constant": constant_modulus}


def modulus_from_name(kind: str, theta: float | None = None) -> Modulus:
    if kind == "power":
        return power_modulus(0.5 if theta is None else theta)
    if kind in _MODULUS_FACTORIES:
        return _MODULUS_FACTORIES[kind]()
    raise ValueError(f"unknown modulus family {kind!r}; choose power|log|constant")


# ---------------------------------------------------------------------------
# displacement scan


@lru_cache(maxsize=64)
def _displacement_set(dims, spacing, max_radius):
    """Integer lattice displacements (up to sign) covering fine + dyadic shells."""
    spacing = np.asarray(spacing)
    h_max = spacing.max()
    disps = set()
    for d1 in range(-2, 3):
        for d2 in range(-2, 3):
            for d3 in range(-2, 3):
                d = (d1, d2, d3)
                if (d3 > 0) or (d3 == 0 and d2 > 0) or (d3 == 0 and d2 == 0 and d1 > 0):
                    disps.add(d)
    r = max_radius
    while r >= h_max * 0.999:
        for direction in _DIRECTIONS:
            n = np.asarray(direction, dtype=float)
            n /= np.linalg.norm(n)
            d = tuple(int(round(c)) for c in (r * n / spacing))
            if any(d):
                disps.add(d)
        r /= 2.0
    out = []
    for d in sorted(disps):
        radius = float(np.linalg.norm(np.asarray(d) * spacing))
        if 0.0 < radius <= max_radius * 1.45:
            out.append((d, radius))
    return tuple(out)


@dataclass(frozen=True)
class ShellProfile:
    """Increment statistics per exact lattice displacement plus dyadic bins."""

    radii: np.ndarray       # actual |y| per displacement
    sup_inc: np.ndarray     # sup_x |u(x+y)-u(x)| per displacement
    mean_sq: np.ndarray     # mean_x |u(x+y)-u(x)|^2 per displacement
    shell_r: np.ndarray     # dyadic bin radii (ascending)
    shell_sup: np.ndarray   # max sup_inc per bin
    max_radius: float

    def check_monotone(self, tol: float = 0.05) -> None:
        """Dyadic sup-increments must be non-decreasing up to lattice slack."""
        s = self.shell_sup
        if len(s) >= 2 and np.any(s[1:] < s[:-1] * (1.0 - tol)):
            raise AssertionError(f"shell sup-increments decrease beyond {tol:.0%}: {s}")


def scan_increments(u: GridField, max_radius: float | None = None) -> ShellProfile:
    if u.geometry != PERIODIC:
        raise ValueError("increment scan requires periodic3 geometry")
    L_min = min(u.lengths)
    if max_radius is None:
        max_radius = L_min / 4.0
    if max_radius > L_min / 4.0 + 1e-12:
        raise ValueError("max_radius must not exceed the quarter period")
    disps = _displacement_set(u.dims, u.spacing, float(max_radius))
    radii, sups, means = [], [], []
    for d, radius in disps:
        du = np.roll(u.data, shift=d, axis=(1, 2, 3)) - u.data
        mag2 = np.einsum("cijl,cijl->ijl", du, du)
        radii.append(radius)
        sups.append(math.sqrt(float(mag2.max())))
        means.append(float(mag2.mean()))
    radii = np.array(radii)
    sups = np.array(sups)
    means = np.array(means)
    n_shell = max(1, int(round(np.log2(max_radius / u.spacing[0]))) + 1)
    shell_r = max_radius / 2.0 ** np.arange(n_shell)[::-1]
    idx = np.clip(np.round(np.log2(max_radius / radii)).astype(int), 0, n_shell - 1)
    shell_sup = np.zeros(n_shell)
    np.maximum.at(shell_sup, n_shell - 1 - idx, sups)
    keep = shell_sup > 0
    return ShellProfile(radii, sups, means, shell_r[keep], shell_sup[keep], float(max_radius))


# ---------------------------------------------------------------------------
# seminorms and structure functions


@dataclass(frozen=True)
class HolderEstimate:
    alpha: float
    seminorm: float
    profile: ShellProfile
    zeta2: float
    omega_name: str = "constant"

    @property
    def shell_data(self):
        return self.profile.shell_r, self.profile.shell_sup

    @property
    def is_rough(self) -> bool:
        return bool(self.zeta2 < ROUGH_ZETA2)

    def shell_ratios(self, alpha: float | None = None) -> np.ndarray:
        """Per-shell sup-increment over r^alpha; growth toward r -> 0 flags
        that the field lies outside the analysed class."""
        a = self.alpha if alpha is None else alpha
        return self.profile.shell_sup / self.profile.shell_r**a

    @property
    def diverging(self) -> bool:
        r = self.shell_ratios()
        return bool(len(r) >= 2 and r[0] > 1.5 * r[-1])


def estimate_seminorm(u: GridField, alpha: float, max_radius: float | None = None) -> HolderEstimate:
    """[u]_alpha = max over sampled exact shifts of sup_x|du| / |y|^alpha."""
    return estimate_seminorm_omega(u, constant_modulus(), alpha, max_radius=max_radius)


def estimate_seminorm_omega(
    u: GridField, omega: Modulus, alpha: float, max_radius: float | None = None
) -> HolderEstimate:
    """Omega-weighted variant with divisor omega(|y|) |y|^alpha."""
    profile = scan_increments(u, max_radius)
    profile.check_monotone()
    divisor = omega(profile.radii) * profile.radii**alpha
    seminorm = float((profile.sup_inc / divisor).max())
    zeta2 = _fit_zeta2(profile, min(u.lengths))
    return HolderEstimate(alpha, seminorm, profile, zeta2, omega_name=omega.name)


def _fit_zeta2(profile: ShellProfile, length: float, r_lo: float | None = None, r_hi: float | None = None) -> float:
    """Least-squares slope of log S2 vs log r over the inertial band.

    Default band [2*h, L/4]: the smallest shell bends toward the smooth r^2
    regime once the synthesis band is exhausted, so it is excluded.
    """
    if r_lo is None:
        r_lo = 2.0 * profile.radii.min() * 0.999
    if r_hi is None:
        r_hi = length / 4.0 * 1.001
    keep = (profile.radii >= r_lo) & (profile.radii <= r_hi) & (profile.mean_sq > 0)
    n_shells = len({int(round(np.log2(profile.max_radius / r))) for r in profile.radii[keep]})
    if n_shells < 4:
        return float("nan")
    lr = np.log(profile.radii[keep])
    ls = np.log(profile.mean_sq[keep])
    a = np.vstack([lr, np.ones_like(lr)]).T
    sol, *_ = np.linalg.lstsq(a, ls, rcond=None)
    return float(sol[0])


def estimate_zeta2(u: GridField, max_radius: float | None = None) -> float:
    """Second-order structure-function exponent; zeta2/2 proxies the Hoelder
    exponent.  Rejects grids too small to populate four dyadic shells."""
    profile = scan_increments(u, max_radius)
    z = _fit_zeta2(profile, min(u.lengths))
    if math.isnan(z):
        raise ValueError("fewer than 4 dyadic shells in the inertial band; grid too small")
    return z


# ---------------------------------------------------------------------------
# time integrability


@dataclass(frozen=True)
class TimeSeminormSeries:
    times: np.ndarray
    f_alpha: np.ndarray
    beta: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.f_alpha, dtype=float)
        if t.size == 0:
            raise ValueError("empty series")
        if t.shape != f.shape:
            raise ValueError("times and f_alpha must have matching shapes")
        if not (np.all(np.isfinite(f)) and np.all(f >= 0)):
            raise ValueError("f_alpha entries must be finite and non-negative")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.beta < 1.0:
            raise ValueError("integrability exponent beta must be >= 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "f_alpha", f)


@dataclass(frozen=True)
class TimeIntegrability:
    value: float
    beta: float
    reference: dict

    def __float__(self):
        return self.value


def _lbeta_norm(t: np.ndarray, f: np.ndarray, beta: float) -> float:
    return float(np.trapezoid(f**beta, t) ** (1.0 / beta))


def time_integrability(series: TimeSeminormSeries, alpha: float | None = None, delta: float = 0.1) -> TimeIntegrability:
    """Trapezoid value of (int f_alpha^beta dt)^(1/beta).

    With ``alpha`` given, also reports the three threshold exponents
    1/alpha + delta, 1/alpha, and 2/(1+alpha) (the last is the viscous one).
    """
    value = _lbeta_norm(series.times, series.f_alpha, series.beta)
    reference = {}
    if alpha is not None:
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        for name, beta in (
            ("1/alpha+delta", 1.0 / alpha + delta),
            ("1/alpha", 1.0 / alpha),
            ("2/(1+alpha)", 2.0 / (1.0 + alpha)),
        ):
            reference[name] = {"beta": beta, "norm": _lbeta_norm(series.times, series.f_alpha, beta)}
    return TimeIntegrability(value, series.beta, reference)


# ---------------------------------------------------------------------------
# splitting-exponent threshold


@dataclass(frozen=True)
class EtaInterval:
    """Admissible splitting exponents ((1-alpha)/alpha, 2]; empty iff alpha <= 1/3."""

    lower: float
    upper: float

    @property
    def empty(self) -> bool:
        return self.lower >= self.upper

    def contains(self, eta: float) -> bool:
        return (not self.empty) and self.lower < eta <= self.upper


def gamma_exponent(alpha: float, eta: float) -> float:
    """Decay exponent alpha*eta + alpha - 1 of the mollified flux bound."""
    return alpha * eta + alpha - 1.0


def admissible_eta(alpha: float) -> EtaInterval:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return EtaInterval((1.0 - alpha) / alpha, 2.0)
