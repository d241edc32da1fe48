"""Channel geometry: wall-bounded fields with horizontal-only smoothing.

Fields are periodic in the wall-parallel plane and pinned to zero on both
walls.  Synthesis takes the curl of an enveloped horizontal potential, so the
discrete divergence (spectral horizontal + 4th-order FD vertical) vanishes to
round-off: the envelope is a quartic polynomial, which the FD stencils
differentiate exactly.

Horizontal mollification smooths each height independently with a 2-D radial
bump multiplier; it preserves wall values exactly, commutes with the discrete
divergence, and contracts increments by the horizontal modulus of continuity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .commutator import IDENTITY_RTOL, IdentityError
from .fields import (
    CHANNEL,
    GridField,
    SynthesisSpec,
    _horizontal_wavevectors,
    _vertical_weights,
    energy,
    grad_norm_sq,
    gradient_tensor,
    integrate_scalar,
    vertical_derivative,
)
from .holder import Modulus
from .mollify import MollifierKernel, _gauss_from_measure

logger = logging.getLogger(__name__)

_DIRECTIONS_2D = [(1, 0), (0, 1), (1, 1), (1, -1)]


@dataclass(frozen=True)
class ChannelField:
    field: GridField
    spec: SynthesisSpec | None
    envelope: np.ndarray
    envelope_prime: np.ndarray

    @property
    def data(self) -> np.ndarray:
        return self.field.data


def envelope_profile(z: np.ndarray, length: float) -> tuple[np.ndarray, np.ndarray]:
    """E(z) = (z (L - z))^2 / (L/2)^4 and its derivative; E = E' = 0 at both walls."""
    norm = (length / 2.0) ** 4
    q = z * (length - z)
    return q**2 / norm, 2.0 * q * (length - 2.0 * z) / norm


def _synthesize_potential(spec: SynthesisSpec, dims2, lengths2) -> np.ndarray:
    """Three horizontally band-limited random scalar potentials (2-D synthesis
    with coefficient magnitudes |k_h|^-(alpha+1))."""
    n1, n2 = dims2
    nyquist = min(n1, n2) // 2
    k_max = spec.k_max if spec.k_max is not None else max(spec.k_min, int(0.45 * min(n1, n2)))
    if k_max > nyquist:
        raise ValueError(f"horizontal k_max={k_max} exceeds Nyquist {nyquist}")
    kx, ky = _horizontal_wavevectors(dims2, lengths2)
    scale = 2.0 * np.pi / min(lengths2)
    kmag = np.sqrt(kx * kx + ky * ky) / scale
    band = (kmag >= spec.k_min - 1e-9) & (kmag <= k_max + 1e-9)
    half = (ky > 0) | ((ky == 0) & (kx > 0))
    sel = band & half
    if not sel.any():
        raise ValueError(f"empty horizontal band [{spec.k_min}, {k_max}] for dims {dims2}")
    rng = np.random.default_rng(spec.seed)
    amp = np.zeros(dims2)
    amp[sel] = kmag[sel] ** (-(spec.target_alpha + 1.0))
    coeffs = amp * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(3,) + tuple(dims2)))
    coeffs += np.conj(np.roll(coeffs[..., ::-1, ::-1], 1, axis=(-2, -1)))
    pot = _fft.ifftn(coeffs, axes=(1, 2)).real
    rms = np.sqrt(np.mean(pot**2) * 3.0)
    return pot / rms


def channel_field_from_potential(potential: np.ndarray, n3: int, lengths) -> ChannelField:
    """v = curl(E(x3) A(x_h)): exactly zero on the walls, solenoidal to round-off."""
    lengths = tuple(float(v) for v in lengths)
    n1, n2 = potential.shape[1:]
    z = np.linspace(0.0, lengths[2], n3)
    env, env_p = envelope_profile(z, lengths[2])
    kx, ky = _horizontal_wavevectors((n1, n2), lengths[:2])
    pot_h = _fft.fftn(potential, axes=(1, 2))
    d1 = _fft.ifftn(1j * kx * pot_h, axes=(1, 2)).real
    d2 = _fft.ifftn(1j * ky * pot_h, axes=(1, 2)).real
    data = np.empty((3, n1, n2, n3))
    data[0] = env * d2[2][..., None] - env_p * potential[1][..., None]
    data[1] = env_p * potential[0][..., None] - env * d1[2][..., None]
    data[2] = env * (d1[1] - d2[0])[..., None]
    field = GridField(data, lengths, CHANNEL)
    return ChannelField(field, None, env, env_p)


def synthesize_channel_field(spec: SynthesisSpec, dims, lengths=(2 * np.pi, 2 * np.pi, 2 * np.pi)) -> ChannelField:
    dims = tuple(int(n) for n in dims)
    pot = _synthesize_potential(spec, dims[:2], lengths[:2])
    out = channel_field_from_potential(pot, dims[2], lengths)
    rms = np.sqrt(np.mean(out.data**2) * 3.0)
    data = out.data * (spec.rms / rms)
    field = GridField(data, out.field.lengths, CHANNEL)
    div = divergence_max(field)
    if div > 1e-10:
        raise AssertionError(f"channel synthesis divergence {div:.2e} exceeds 1e-10")
    return ChannelField(field, spec, out.envelope, out.envelope_prime)


def divergence_max(f: GridField) -> float:
    """max |div v| with spectral horizontal and FD vertical derivatives."""
    fh = _fft.fftn(f.data[:2], axes=(1, 2))
    kx, ky = _horizontal_wavevectors(f.dims[:2], f.lengths[:2])
    div_h = _fft.ifftn(
        1j * kx[:, :, None] * fh[0] + 1j * ky[:, :, None] * fh[1], axes=(0, 1)
    ).real
    div = div_h + vertical_derivative(f.data[2], f.spacing[2])
    return float(np.abs(div).max())


def _horizontal_factor(kernel: MollifierKernel, f: GridField) -> np.ndarray:
    kx, ky = _horizontal_wavevectors(f.dims[:2], f.lengths[:2])
    return kernel.fourier_factor(np.sqrt(kx * kx + ky * ky))


def horizontal_mollify(
    v: GridField,
    kernel: MollifierKernel,
    *,
    omega: Modulus | None = None,
    hor_seminorm: float | None = None,
) -> GridField:
    """Per-height 2-D mollification.

    Asserts the three structural properties: wall values stay exactly zero,
    the discrete divergence is not increased (the multiplier commutes with
    every derivative in the discrete divergence), and, when a modulus and its
    seminorm are supplied, sup|v - v_eps| <= [v]_omega,hor * omega(eps).
    """
    if v.geometry != CHANNEL:
        raise ValueError("horizontal_mollify expects channel geometry")
    if kernel.dim != 2:
        raise ValueError("horizontal mollification needs a 2-D kernel")
    if kernel.epsilon >= min(v.lengths[0], v.lengths[1]) / 4.0:
        raise ValueError("epsilon must be below the horizontal quarter-period")
    fac = _horizontal_factor(kernel, v)
    out_data = _fft.ifftn(_fft.fftn(v.data, axes=(1, 2)) * fac[:, :, None], axes=(1, 2)).real
    out = GridField(out_data, v.lengths, CHANNEL)
    if np.abs(out.data[:, :, :, [0, -1]]).max() != 0.0:
        raise AssertionError("horizontal mollification perturbed the wall values")
    div_in, div_out = divergence_max(v), divergence_max(out)
    if div_out > div_in + 1e-10:
        raise AssertionError(f"horizontal mollification increased the divergence ({div_out:.2e} > {div_in:.2e})")
    if omega is not None and hor_seminorm is not None:
        sup = float(np.sqrt(np.einsum("cijl,cijl->ijl", v.data - out.data, v.data - out.data).max()))
        bound = hor_seminorm * float(omega(kernel.epsilon))
        if sup > bound * (1.0 + 1e-9):
            raise AssertionError(f"sup|v - v_eps| = {sup:.3e} exceeds modulus bound {bound:.3e}")
    return out


# ---------------------------------------------------------------------------
# horizontal increments and the modulus class


@lru_cache(maxsize=32)
def _displacements_2d(dims2, spacing2, max_radius):
    spacing = np.asarray(spacing2)
    h_max = spacing.max()
    disps = set()
    for d1 in range(-2, 3):
        for d2 in range(-2, 3):
            if (d2 > 0) or (d2 == 0 and d1 > 0):
                disps.add((d1, d2))
    r = max_radius
    while r >= h_max * 0.999:
        for direction in _DIRECTIONS_2D:
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
class HorizontalModulus:
    """Horizontal sup-increment profile and the modulus-normalised seminorm."""

    omega_name: str
    radii: np.ndarray
    sup_inc: np.ndarray
    shell_r: np.ndarray
    shell_sup: np.ndarray
    seminorm: float

    def check_monotone(self, tol: float = 0.05) -> None:
        s = self.shell_sup
        if len(s) >= 2 and np.any(s[1:] < s[:-1] * (1.0 - tol)):
            raise AssertionError(f"horizontal sup-increments decrease beyond {tol:.0%}: {s}")


def estimate_horizontal_modulus(v: GridField, omega: Modulus, max_radius: float | None = None) -> HorizontalModulus:
    """[v]_omega,hor = sup over horizontal shifts and heights of |du| / omega(|y_h|)."""
    if v.geometry != CHANNEL:
        raise ValueError("horizontal modulus estimation expects channel geometry")
    L_min = min(v.lengths[0], v.lengths[1])
    if max_radius is None:
        max_radius = L_min / 4.0
    disps = _displacements_2d(v.dims[:2], v.spacing[:2], float(max_radius))
    radii, sups = [], []
    for d, radius in disps:
        du = np.roll(v.data, shift=d, axis=(1, 2)) - v.data
        radii.append(radius)
        sups.append(float(np.sqrt(np.einsum("cijl,cijl->ijl", du, du).max())))
    radii = np.array(radii)
    sups = np.array(sups)
    n_shell = max(1, int(round(np.log2(max_radius / v.spacing[0]))) + 1)
    shell_r = max_radius / 2.0 ** np.arange(n_shell)[::-1]
    idx = np.clip(np.round(np.log2(max_radius / radii)).astype(int), 0, n_shell - 1)
    shell_sup = np.zeros(n_shell)
    np.maximum.at(shell_sup, n_shell - 1 - idx, sups)
    keep = shell_sup > 0
    seminorm = float((sups / omega(radii)).max())
    hm = HorizontalModulus(omega.name, radii, sups, shell_r[keep], shell_sup[keep], seminorm)
    hm.check_monotone()
    return hm


# ---------------------------------------------------------------------------
# flux decomposition with horizontal increments


@lru_cache(maxsize=32)
def _disk_rule_cached(n_r: int, n_phi: int):
    kernel = MollifierKernel(1.0, dim=2)
    r, wr = kernel.radial_rule(n_r)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    w_phi = 2.0 * np.pi / n_phi
    nodes = np.stack([np.outer(r, np.cos(phi)), np.outer(r, np.sin(phi))], axis=-1).reshape(-1, 2)
    weights = (wr[:, None] * np.full(n_phi, w_phi)).reshape(-1)
    return nodes, weights


def disk_rule(n_r: int, n_phi: int | None = None):
    if n_phi is None:
        n_phi = n_r
    if min(n_r, n_phi) < 3:
        raise ValueError("disk quadrature needs at least 3 nodes per axis")
    return _disk_rule_cached(int(n_r), int(n_phi))


def _auto_disk_rule(omega_max: float):
    n_r = max(7, int(np.ceil(0.75 * omega_max)) + 4)
    n_phi = max(7, int(np.ceil(1.4 * omega_max)) + 12)
    return disk_rule(n_r, n_phi)


def _active_horizontal_wavenumber(v: GridField) -> float:
    fh = _fft.fftn(v.data, axes=(1, 2))
    kx, ky = _horizontal_wavevectors(v.dims[:2], v.lengths[:2])
    kmag = np.sqrt(kx * kx + ky * ky)
    mag = np.abs(fh).max(axis=(0, 3))
    peak = mag.max()
    if peak == 0.0:
        return 0.0
    return float(kmag[mag > 1e-13 * peak].max())


@dataclass
class ChannelFluxRow:
    eps: float
    pi_total: float
    pi_smooth: float
    pi_remainder: float
    pi_rough: float
    rough_ratio: float
    remainder_ratio: float
    smooth_split: float
    identity_residual: float


@dataclass
class ChannelFluxReport:
    omega_name: str
    norm_l2: float
    norm_grad: float
    rows: list[ChannelFluxRow]

    @property
    def rough_bound(self) -> float:
        return max(r.rough_ratio for r in self.rows)

    @property
    def remainder_bound(self) -> float:
        return max(r.remainder_ratio for r in self.rows)

    def to_csv(self, path) -> None:
        cols = ["eps", "pi_total", "pi_smooth", "pi_remainder", "pi_rough",
                "rough_ratio", "remainder_ratio", "smooth_split"]
        with open(path, "w") as fh:
            fh.write("geometry," + ",".join(cols) + "\n")
            for row in self.rows:
                fh.write("channel," + ",".join(f"{getattr(row, c):.17g}" for c in cols) + "\n")

    def as_dict(self) -> dict:
        return {
            "geometry": "channel",
            "omega": self.omega_name,
            "norm_l2": self.norm_l2,
            "norm_grad": self.norm_grad,
            "rough_ratio_bound": self.rough_bound,
            "remainder_ratio_bound": self.remainder_bound,
            "rows": [vars(r) for r in self.rows],
        }


def channel_flux_bound(v: GridField, omega: Modulus, eps_list, *, rule=None) -> ChannelFluxReport:
    """Commutator decomposition with horizontal-only increments, plus the
    modulus-normalised boundedness ratios |term| / (omega(eps) ||v|| ||grad v||).

    The decomposition identity is asserted at the same relative tolerance as
    the periodic case; the smooth term is also evaluated through the split
    nonlinearity (horizontal transport + vertical transport) and reported,
    its integral being zero up to vertical FD truncation.
    """
    if v.geometry != CHANNEL:
        raise ValueError("channel_flux_bound expects channel geometry")
    div = divergence_max(v)
    if div > 1e-8:
        raise ValueError(f"channel flux needs a solenoidal field (divergence {div:.2e})")
    norm_l2 = np.sqrt(2.0 * energy(v))
    norm_grad = np.sqrt(grad_norm_sq(v))
    dims = v.dims
    n_h = dims[0] * dims[1]
    cell = v.cell_volume
    wz = _vertical_weights(dims[2])
    kx, ky = _horizontal_wavevectors(dims[:2], v.lengths[:2])
    k_active = _active_horizontal_wavenumber(v)
    k1 = [np.fft.fftfreq(n, d=1.0 / n) * (2.0 * np.pi / L) for n, L in zip(dims[:2], v.lengths[:2])]

    rows = []
    for eps in sorted(float(e) for e in eps_list)[::-1]:
        kernel = MollifierKernel(eps, dim=2)
        ve = horizontal_mollify(v, kernel)
        g = gradient_tensor(ve)
        fac = _horizontal_factor(kernel, v)[None, :, :, None]

        prods = np.einsum("aijl,bijl->abijl", v.data, v.data).reshape((9,) + dims)
        ph = _fft.fftn(prods, axes=(1, 2))
        prods_eps = _fft.ifftn(ph * fac, axes=(1, 2)).real
        g_flat = g.reshape((9,) + dims)
        pi_total = cell * float(np.einsum("cijl,l->", prods_eps * g_flat, wz))
        pi_smooth = cell * float(np.einsum("aijl,bijl,abijl,l->", ve.data, ve.data, g, wz))
        w = v.data - ve.data
        pi_rough = cell * float(np.einsum("aijl,bijl,abijl,l->", w, w, g, wz))

        # split nonlinearity: horizontal transport + vertical transport
        s_h = cell * float(np.einsum("ijl,l->", np.einsum(
            "aijl,aijl->ijl", ve.data[0] * g[:, 0] + ve.data[1] * g[:, 1], ve.data), wz))
        s_v = cell * float(np.einsum("ijl,l->", np.einsum(
            "aijl,aijl->ijl", ve.data[2] * g[:, 2], ve.data), wz))
        smooth_split = s_h + s_v

        # remainder via horizontal correlations: I(y_h) is a 2-D trig polynomial
        gh = _fft.fftn(g_flat, axes=(2, 3))
        q = np.einsum("bijl,abijl->aijl", v.data, g) + np.einsum("bijl,baijl->aijl", v.data, g)
        qh = _fft.fftn(q, axes=(1, 2))
        vh = _fft.fftn(v.data, axes=(1, 2))
        corr = (
            np.einsum("cijl,cijl,l->ij", ph, np.conj(gh), wz)
            - np.einsum("aijl,aijl,l->ij", vh, np.conj(qh), wz)
        ) * (cell / n_h)
        t_const = cell * float(np.einsum("cijl,l->", prods * g_flat, wz))

        nodes, weights = rule if rule is not None else _auto_disk_rule(eps * k_active)
        pi_remainder = 0.0
        for y, wgt in zip(nodes, weights):
            px = np.exp(-1j * k1[0] * (eps * y[0]))
            py = np.exp(-1j * k1[1] * (eps * y[1]))
            inner = float(np.einsum("ij,i,j->", corr, px, py).real) + t_const
            pi_remainder += wgt * inner

        residual = abs(pi_total - (pi_smooth + pi_remainder - pi_rough))
        max_term = max(abs(pi_total), abs(pi_smooth), abs(pi_remainder), abs(pi_rough))
        if max_term > 0.0 and residual > IDENTITY_RTOL * max_term:
            raise IdentityError(
                f"channel decomposition residual {residual:.3e} exceeds {IDENTITY_RTOL:.0e} * {max_term:.3e} at eps={eps}"
            )
        denom = float(omega(eps)) * norm_l2 * norm_grad
        rows.append(ChannelFluxRow(
            eps=eps,
            pi_total=pi_total,
            pi_smooth=pi_smooth,
            pi_remainder=pi_remainder,
            pi_rough=pi_rough,
            rough_ratio=abs(pi_rough) / denom if denom > 0 else 0.0,
            remainder_ratio=abs(pi_remainder) / denom if denom > 0 else 0.0,
            smooth_split=smooth_split,
            identity_residual=residual,
        ))
    return ChannelFluxReport(omega.name, float(norm_l2), float(norm_grad), rows)
