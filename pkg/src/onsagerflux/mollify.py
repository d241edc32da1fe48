"""Friedrichs mollification on the torus and the convolution calculus checks.

The kernel is the radial bump rho(x) = c * exp(-1/(1-|x|^2)) on |x|<1,
normalised to unit mass.  Mollification is realised spectrally: the kernel
has no closed-form transform, so rho_hat is tabulated once on a radial grid
and applied as a Fourier multiplier rho_hat(eps*|k|).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.special import j0

from . import holder
from .fields import (
    PERIODIC,
    GridField,
    SpectralField,
    energy,
    forward_transform,
    gradient_tensor,
    inverse_transform,
    wavenumber_magnitude,
)

#: Radial transform table: node count and upper limit of xi = eps*|k|.
#: 32768 nodes keep the cubic-interpolation error < 1e-12, which the exact
#: commutator-identity tolerance requires; values beyond XI_MAX (where
#: |rho_hat| < 2e-9) are treated as zero.
TABLE_NODES = 32768
XI_MAX = 64.0 * np.pi
_QUAD_NODES = 2048


def _bump(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _gauss_from_measure(x: np.ndarray, w: np.ndarray, n: int):
    """Gauss nodes/weights for the discrete measure sum_i w_i delta(x_i).

    Lanczos tridiagonalisation with full reorthogonalisation; the returned
    rule integrates polynomials of degree 2n-1 exactly against the measure.
    """
    v = np.sqrt(w)
    m0 = float(v @ v)
    v = v / np.sqrt(m0)
    basis = [v]
    alphas, betas = [], []
    v_prev = np.zeros_like(v)
    beta = 0.0
    for k in range(n):
        u = x * v - beta * v_prev
        alpha = float(v @ u)
        u = u - alpha * v
        for q in basis:
            u -= (q @ u) * q
        beta_next = float(np.linalg.norm(u))
        alphas.append(alpha)
        if k < n - 1:
            betas.append(beta_next)
            v_prev = v
            v = u / beta_next
            basis.append(v)
            beta = beta_next
    ev, evec = eigh_tridiagonal(np.array(alphas), np.array(betas))
    return ev, m0 * evec[0, :] ** 2


@dataclass(frozen=True)
class _RadialTable:
    dim: int
    normalisation: float      # c making the kernel unit mass
    xi: np.ndarray
    rho_hat: np.ndarray
    spline: CubicSpline
    grad_l1: float            # integral of |grad rho| over R^dim
    quad_r: np.ndarray        # Gauss-Legendre nodes on [0,1]
    quad_w: np.ndarray
    mass_defect: float        # |quadrature mass - adaptive-quadrature mass|


@lru_cache(maxsize=4)
def _radial_table(dim: int) -> _RadialTable:
    if dim not in (2, 3):
        raise ValueError("mollifier kernels are 2-D or 3-D")
    x, w = np.polynomial.legendre.leggauss(_QUAD_NODES)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w
    surface = 4.0 * np.pi if dim == 3 else 2.0 * np.pi
    radial = r ** (dim - 1) * _bump(r)
    mass_raw = surface * float(np.sum(wr * radial))
    mass_quad, _ = quad(lambda t: surface * t ** (dim - 1) * np.exp(-1.0 / (1.0 - t * t)), 0.0, 1.0)
    c = 1.0 / mass_quad
    mass_defect = abs(mass_raw / mass_quad - 1.0)
    if mass_defect > 1e-10:
        raise RuntimeError(f"kernel mass quadrature defect {mass_defect:.2e} exceeds 1e-10")
    xi = np.linspace(0.0, XI_MAX, TABLE_NODES)
    if dim == 3:
        osc = np.sinc(np.outer(xi, r) / np.pi)
    else:
        osc = j0(np.outer(xi, r))
    rho_hat = np.clip(surface * c * (osc * (wr * radial)).sum(axis=1), -1.0, 1.0)
    if abs(rho_hat[0] - 1.0) > 1e-10:
        raise RuntimeError(f"rho_hat(0) = {rho_hat[0]} deviates from 1 beyond 1e-10")
    # |grad rho| = c * bump(r) * 2r/(1-r^2)^2 pointwise (Euclidean norm)
    grad_l1, _ = quad(
        lambda t: surface * c * t ** (dim - 1) * np.exp(-1.0 / (1.0 - t * t)) * 2.0 * t / (1.0 - t * t) ** 2,
        0.0,
        1.0,
    )
    return _RadialTable(dim, c, xi, rho_hat, CubicSpline(xi, rho_hat), grad_l1, r, wr, mass_defect)


@dataclass(frozen=True)
class MollifierKernel:
    """Radial bump mollifier at scale epsilon with its tabulated transform."""

    epsilon: float
    dim: int = 3

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        _radial_table(self.dim)  # build/validate the shared table eagerly

    @property
    def _table(self) -> _RadialTable:
        return _radial_table(self.dim)

    @property
    def grad_l1(self) -> float:
        """C = integral |grad rho| (the constant in the gradient estimate)."""
        return self._table.grad_l1

    @property
    def normalisation(self) -> float:
        return self._table.normalisation

    def profile(self, r) -> np.ndarray:
        """Unit-scale kernel rho(r) (radial)."""
        return self._table.normalisation * _bump(np.asarray(r, dtype=float))

    def scaled_profile(self, r) -> np.ndarray:
        """rho_eps(r) = eps^-dim rho(r/eps)."""
        return self.epsilon ** (-self.dim) * self.profile(np.asarray(r) / self.epsilon)

    def fourier_factor(self, kmag: np.ndarray) -> np.ndarray:
        """rho_hat(eps*|k|), clipped into [-1, 1]; exactly 1 at k = 0."""
        t = self._table
        xi = self.epsilon * np.asarray(kmag, dtype=float)
        fac = np.where(xi <= XI_MAX, np.clip(t.spline(np.minimum(xi, XI_MAX)), -1.0, 1.0), 0.0)
        return np.where(xi == 0.0, 1.0, fac)

    def radial_rule(self, n: int):
        """Gauss rule for int_0^1 f(r) r^(dim-1) rho(r) dr (weights absorb the kernel)."""
        t = self._table
        measure = t.quad_w * t.quad_r ** (self.dim - 1) * t.normalisation * _bump(t.quad_r)
        return _gauss_from_measure(t.quad_r, measure, n)


def mollify_spectral(F: SpectralField, kernel: MollifierKernel) -> SpectralField:
    if kernel.dim != 3:
        raise ValueError("periodic mollification needs a 3-D kernel")
    if kernel.epsilon >= min(F.lengths) / 2.0:
        raise ValueError("epsilon must be below the smallest half-period")
    kmag = wavenumber_magnitude(F.dims, F.lengths)
    fac = kernel.fourier_factor(kmag)
    return SpectralField(F.coeffs * fac, F.lengths, divergence_free=F.divergence_free)


def mollify(u: GridField, kernel: MollifierKernel) -> GridField:
    """rho_eps * u as a Fourier multiplier; non-expansive and mean-preserving."""
    if u.geometry != PERIODIC:
        raise ValueError("mollify requires periodic3 geometry; see the channel module for horizontal smoothing")
    out = inverse_transform(mollify_spectral(forward_transform(u), kernel))
    e_in, e_out = energy(u), energy(out)
    if e_out > e_in * (1.0 + 1e-12) + 1e-300:
        raise AssertionError(f"mollification expanded the L2 norm ({e_out} > {e_in})")
    return out


@dataclass
class ConvEstimateTable:
    """Per-epsilon sup-norm checks of the convolution calculus estimates."""

    alpha: float
    seminorm: float
    grad_bound_constant: float
    eps: np.ndarray = field(default_factory=lambda: np.empty(0))
    sup_diff: np.ndarray = field(default_factory=lambda: np.empty(0))
    sup_grad: np.ndarray = field(default_factory=lambda: np.empty(0))
    ratio1: np.ndarray = field(default_factory=lambda: np.empty(0))
    ratio2: np.ndarray = field(default_factory=lambda: np.empty(0))
    slope_so_far: np.ndarray = field(default_factory=lambda: np.empty(0))
    omega_name: str | None = None

    @property
    def grad_slope(self) -> float:
        """Final running slope of log sup_grad vs log eps."""
        return float(self.slope_so_far[-1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("eps,sup_diff,sup_grad,ratio1,ratio2,slope_so_far\n")
            for row in zip(self.eps, self.sup_diff, self.sup_grad, self.ratio1, self.ratio2, self.slope_so_far):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _sup_norm(u: GridField) -> float:
    return float(np.sqrt(np.einsum("cijl,cijl->ijl", u.data, u.data).max()))


def _sup_grad(u: GridField) -> float:
    g = gradient_tensor(u)
    return float(np.sqrt(np.einsum("abijl,abijl->ijl", g, g).max()))


def _running_slope(eps, vals) -> float:
    e = np.asarray(eps, dtype=float)
    v = np.asarray(vals, dtype=float)
    keep = v > 1e-300
    e, v = e[keep], v[keep]
    if len(e) < 2 or np.ptp(np.log(e)) == 0:
        return float("nan")
    a = np.vstack([np.log(e), np.ones_like(e)]).T
    sol, *_ = np.linalg.lstsq(a, np.log(v), rcond=None)
    return float(sol[0])


def check_conv_estimates(
    u: GridField,
    alpha: float,
    eps_list,
    *,
    seminorm: float | None = None,
    max_radius: float | None = None,
) -> ConvEstimateTable:
    """Ratios of sup|u - u_eps| and sup|grad u_eps| against the Hoelder bounds.

    ratio1 = sup|u-u_eps] / ([u]_a eps^a) must stay O(1) (theory: <= 1);
    ratio2 = sup|grad u_eps| / ([u]_a eps^(a-1)) must stay below the kernel
    constant C = int |grad rho|.
    """
    return _conv_table(u, alpha, eps_list, holder.constant_modulus(), seminorm, max_radius, omega_name=None)


def check_conv_estimates_omega(
    u: GridField,
    alpha: float,
    omega,
    eps_list,
    *,
    seminorm: float | None = None,
    max_radius: float | None = None,
) -> ConvEstimateTable:
    """Same checks against the omega-refined bounds [u]_{w,a} w(eps) eps^a."""
    return _conv_table(u, alpha, eps_list, omega, seminorm, max_radius, omega_name=omega.name)


def _conv_table(u, alpha, eps_list, omega, seminorm, max_radius, omega_name):
    eps_arr = np.asarray(list(eps_list), dtype=float)
    if eps_arr.size == 0:
        raise ValueError("eps_list must not be empty")
    if seminorm is None:
        est = holder.estimate_seminorm_omega(u, omega, alpha, max_radius=max_radius)
        seminorm = est.seminorm
    table = _radial_table(3)
    sup_diff, sup_grad, r1, r2, slopes = [], [], [], [], []
    for eps in eps_arr:
        kernel = MollifierKernel(float(eps))
        ue = mollify(u, kernel)
        diff = GridField(u.data - ue.data, u.lengths)
        sd = _sup_norm(diff)
        sg = _sup_grad(ue)
        denom = seminorm * float(omega(eps)) * eps**alpha
        sup_diff.append(sd)
        sup_grad.append(sg)
        r1.append(sd / denom if denom > 0 else np.inf if sd > 0 else 0.0)
        r2.append(sg / (denom / eps) if denom > 0 else np.inf if sg > 0 else 0.0)
        slopes.append(_running_slope(eps_arr[: len(sup_grad)], sup_grad))
    return ConvEstimateTable(
        alpha=alpha,
        seminorm=float(seminorm),
        grad_bound_constant=table.grad_l1,
        eps=eps_arr,
        sup_diff=np.array(sup_diff),
        sup_grad=np.array(sup_grad),
        ratio1=np.array(r1),
        ratio2=np.array(r2),
        slope_so_far=np.array(slopes),
        omega_name=omega_name,
    )
