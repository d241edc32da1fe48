"""Velocity fields on uniform lattices: spectral transforms, Leray projection,
and synthesis of divergence-free random fields with prescribed small-scale
regularity.

Conventions
-----------
A field stores its three components in a single ``(3, N1, N2, N3)`` float64
array; index ``[c, i, j, l]`` is component ``c`` sampled at
``x = (i*h1, j*h2, l*h3)``.  Spectral coefficients follow the unnormalised
numpy DFT, ``uhat(k) = sum_x u(x) exp(-i k.x)``, on integer-multiple physical
wavevectors ``k_i = (2*pi/L_i) * n_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

logger = logging.getLogger(__name__)

PERIODIC = "periodic3"
CHANNEL = "channel"

TWO_PI = 2.0 * np.pi

#: |k . uhat(k)| <= DIV_FREE_TOL * ||uhat|| qualifies as divergence-free.
DIV_FREE_TOL = 1e-12


def _as_lengths(lengths) -> tuple[float, float, float]:
    out = tuple(float(v) for v in lengths)
    if len(out) != 3 or any(v <= 0 for v in out):
        raise ValueError(f"lengths must be three positive floats, got {lengths!r}")
    return out


@dataclass(frozen=True)
class GridField:
    """Sampled vector field on a uniform lattice (periodic box or channel).

    For ``geometry="channel"`` the field is periodic in (x1, x2) and sampled
    on x3 nodes ``j*L3/(N3-1)`` including both walls, where all three
    components must vanish exactly.
    """

    data: np.ndarray
    lengths: tuple[float, float, float] = (TWO_PI, TWO_PI, TWO_PI)
    geometry: str = PERIODIC

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 4 or data.shape[0] != 3 or min(data.shape[1:]) < 2:
            raise ValueError(f"field data must have shape (3, N1, N2, N3), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite samples")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "lengths", _as_lengths(self.lengths))
        if self.geometry not in (PERIODIC, CHANNEL):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == CHANNEL:
            walls = np.abs(data[:, :, :, [0, -1]])
            if walls.max() != 0.0:
                raise ValueError("channel field must vanish exactly on both walls")
        data.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def spacing(self) -> tuple[float, float, float]:
        n1, n2, n3 = self.dims
        h3 = self.lengths[2] / (n3 - 1) if self.geometry == CHANNEL else self.lengths[2] / n3
        return (self.lengths[0] / n1, self.lengths[1] / n2, h3)

    @property
    def cell_volume(self) -> float:
        h1, h2, h3 = self.spacing
        return h1 * h2 * h3

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        if self.geometry == CHANNEL and axis == 2:
            return np.linspace(0.0, self.lengths[2], n)
        return np.arange(n) * (self.lengths[axis] / n)

    def component_means(self) -> np.ndarray:
        if self.geometry == CHANNEL:
            w = _vertical_weights(self.dims[2])
            return np.einsum("cijl,l->c", self.data, w) / w.sum() / (self.dims[0] * self.dims[1])
        return self.data.mean(axis=(1, 2, 3))


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a periodic GridField (full complex fftn layout)."""

    coeffs: np.ndarray
    lengths: tuple[float, float, float] = (TWO_PI, TWO_PI, TWO_PI)
    divergence_free: bool = False

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.ndim != 4 or coeffs.shape[0] != 3:
            raise ValueError(f"coefficients must have shape (3, N1, N2, N3), got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "lengths", _as_lengths(self.lengths))
        if self.divergence_free:
            defect = divergence_defect(self)
            if defect > DIV_FREE_TOL:
                raise ValueError(f"divergence-free flag set but defect {defect:.2e} exceeds {DIV_FREE_TOL}")
        coeffs.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.coeffs.shape[1:]

    def hermitian_defect(self) -> float:
        """Max |uhat(k) - conj(uhat(-k))| relative to the largest coefficient."""
        mirrored = np.conj(_flip_k(self.coeffs))
        scale = np.abs(self.coeffs).max()
        if scale == 0.0:
            return 0.0
        return float(np.abs(self.coeffs - mirrored).max() / scale)


def _flip_k(coeffs: np.ndarray) -> np.ndarray:
    """Index map k -> -k on the fftn layout (last three axes)."""
    return np.roll(coeffs[..., ::-1, ::-1, ::-1], shift=1, axis=(-3, -2, -1))


@lru_cache(maxsize=32)
def _wavevectors_cached(dims, lengths):
    axes = [TWO_PI / L * np.fft.fftfreq(n, d=1.0 / n) for n, L in zip(dims, lengths)]
    return np.meshgrid(*axes, indexing="ij")


def wavevectors(dims, lengths=(TWO_PI, TWO_PI, TWO_PI)):
    """Physical wavevector grids (KX, KY, KZ) for the fftn layout."""
    return _wavevectors_cached(tuple(int(n) for n in dims), _as_lengths(lengths))


def wavenumber_magnitude(dims, lengths=(TWO_PI, TWO_PI, TWO_PI)) -> np.ndarray:
    kx, ky, kz = wavevectors(dims, lengths)
    return np.sqrt(kx * kx + ky * ky + kz * kz)


def forward_transform(f: GridField) -> SpectralField:
    """DFT of all three components.  Periodic geometry only."""
    if f.geometry != PERIODIC:
        raise ValueError("forward_transform requires periodic3 geometry (channel fields transform horizontally only)")
    coeffs = _fft.fftn(f.data, axes=(1, 2, 3))
    return SpectralField(coeffs, f.lengths)


def inverse_transform(F: SpectralField) -> GridField:
    """Inverse DFT; asserts the imaginary residue of a Hermitian spectrum is tiny."""
    u = _fft.ifftn(F.coeffs, axes=(1, 2, 3))
    scale = np.abs(u.real).max()
    imag = np.abs(u.imag).max()
    if imag > 1e-10 * max(scale, 1e-300):
        raise ValueError(f"inverse transform not real (imag {imag:.2e} vs scale {scale:.2e}); coefficients are not Hermitian")
    return GridField(np.ascontiguousarray(u.real), F.lengths)


def divergence_defect(F: SpectralField) -> float:
    """max_k |k . uhat(k)| / ||uhat||_2 (zero for an exactly solenoidal spectrum)."""
    kx, ky, kz = wavevectors(F.dims, F.lengths)
    dot = kx * F.coeffs[0] + ky * F.coeffs[1] + kz * F.coeffs[2]
    norm = np.linalg.norm(F.coeffs)
    if norm == 0.0:
        return 0.0
    return float(np.abs(dot).max() / norm)


def leray_project(F: SpectralField) -> SpectralField:
    """Project onto divergence-free, zero-mean fields: uhat <- (I - k k^T/|k|^2) uhat."""
    kx, ky, kz = wavevectors(F.dims, F.lengths)
    k2 = kx * kx + ky * ky + kz * kz
    k2_safe = np.where(k2 == 0.0, 1.0, k2)
    dot = (kx * F.coeffs[0] + ky * F.coeffs[1] + kz * F.coeffs[2]) / k2_safe
    out = np.stack([F.coeffs[0] - kx * dot, F.coeffs[1] - ky * dot, F.coeffs[2] - kz * dot])
    mean = np.abs(out[:, 0, 0, 0]).max()
    if mean > 0.0:
        logger.info("leray_project: removing nonzero mean (|uhat(0)| = %.3e)", mean)
    out[:, 0, 0, 0] = 0.0
    return SpectralField(out, F.lengths, divergence_free=True)


@dataclass(frozen=True)
class SynthesisSpec:
    """Random divergence-free field with coefficient magnitudes |k|^-(alpha+3/2).

    The amplitude law places the realisation (a posteriori, see the structure
    function estimator) close to small-scale regularity ``target_alpha``.
    """

    target_alpha: float
    seed: int
    k_min: int = 1
    k_max: int | None = None
    rms: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.target_alpha < 1.0:
            raise ValueError(f"target_alpha must lie in (0,1), got {self.target_alpha}")
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        if self.k_max is not None and self.k_max < self.k_min:
            raise ValueError("k_max must be >= k_min")
        if self.rms <= 0:
            raise ValueError("rms must be positive")

    def resolved_band(self, dims) -> tuple[int, int]:
        nyquist = min(dims) // 2
        k_max = self.k_max if self.k_max is not None else max(self.k_min, int(0.45 * min(dims)))
        if k_max > nyquist:
            raise ValueError(f"k_max={k_max} exceeds Nyquist {nyquist} for dims {dims}")
        return self.k_min, k_max


def _half_space_mask(dims, lengths):
    kx, ky, kz = wavevectors(dims, lengths)
    return (kz > 0) | ((kz == 0) & (ky > 0)) | ((kz == 0) & (ky == 0) & (kx > 0))


def synthesize_holder_field(spec: SynthesisSpec, dims, lengths=(TWO_PI, TWO_PI, TWO_PI)) -> GridField:
    """Divergence-free zero-mean random field with the spec's spectral amplitude law.

    Coefficients carry magnitude |k|^-(alpha+3/2) and independent uniform
    phases on one half of k-space, mirrored Hermitian on the other; the result
    is Leray-projected and scaled to the requested rms.
    """
    dims = tuple(int(n) for n in dims)
    lengths = _as_lengths(lengths)
    k_min, k_max = spec.resolved_band(dims)
    kmag = wavenumber_magnitude(dims, lengths) / (TWO_PI / min(lengths))  # integer-scale magnitude
    band = (kmag >= k_min - 1e-9) & (kmag <= k_max + 1e-9)
    sel = band & _half_space_mask(dims, lengths)
    if not sel.any():
        raise ValueError(f"empty synthesis band [{k_min}, {k_max}] for dims {dims}")
    rng = np.random.default_rng(spec.seed)
    amp = np.zeros(dims)
    amp[sel] = kmag[sel] ** (-(spec.target_alpha + 1.5))
    phases = rng.uniform(0.0, TWO_PI, size=(3,) + dims)
    coeffs = amp * np.exp(1j * phases)
    coeffs += np.conj(_flip_k(coeffs))
    projected = leray_project(SpectralField(coeffs, lengths))
    u = inverse_transform(projected)
    rms = np.sqrt(np.mean(u.data**2) * 3.0)
    if rms == 0.0:
        raise ValueError("synthesis produced a null field; band too small after projection")
    data = u.data * (spec.rms / rms)
    return GridField(data, lengths)


def _vertical_weights(n3: int) -> np.ndarray:
    """Trapezoid weights in the wall-normal direction (cell units)."""
    w = np.ones(n3)
    w[0] = w[-1] = 0.5
    return w


def _quadrature_weights(f: GridField) -> np.ndarray | float:
    if f.geometry == CHANNEL:
        return _vertical_weights(f.dims[2])
    return 1.0


def integrate_scalar(f: GridField, values: np.ndarray) -> float:
    """Integral of a scalar sample array over the field's domain."""
    if f.geometry == CHANNEL:
        w = _vertical_weights(f.dims[2])
        return float(np.einsum("ijl,l->", values, w) * f.cell_volume)
    return float(values.sum() * f.cell_volume)


def energy(f: GridField) -> float:
    """(1/2) integral |u|^2 dx with the uniform/trapezoid rule."""
    return 0.5 * integrate_scalar(f, np.einsum("cijl,cijl->ijl", f.data, f.data))


def spectral_energy(F: SpectralField) -> float:
    """Energy evaluated from coefficients (Parseval); periodic geometry."""
    n_total = np.prod(F.dims)
    volume = np.prod(F.lengths)
    return 0.5 * volume / n_total**2 * float(np.sum(np.abs(F.coeffs) ** 2))


def gradient_tensor(f: GridField) -> np.ndarray:
    """G[a, b] = d_b u_a sampled on the grid.

    Periodic geometry differentiates spectrally in all directions; channel
    geometry uses spectral horizontal derivatives and 4th-order finite
    differences (one-sided closures at the walls) vertically.
    """
    if f.geometry == PERIODIC:
        F = forward_transform(f)
        kx, ky, kz = wavevectors(f.dims, f.lengths)
        ks = (kx, ky, kz)
        gh = np.empty((3, 3) + f.dims, dtype=np.complex128)
        for b in range(3):
            gh[:, b] = 1j * ks[b] * F.coeffs
        n = f.dims
        g = _fft.ifftn(gh.reshape((9,) + n), axes=(1, 2, 3)).real
        return np.ascontiguousarray(g.reshape((3, 3) + n))
    # channel: horizontal spectral, vertical FD
    gh2 = _fft.fftn(f.data, axes=(1, 2))
    kx, ky = _horizontal_wavevectors(f.dims[:2], f.lengths[:2])
    out = np.empty((3, 3) + f.dims)
    out[:, 0] = _fft.ifftn(1j * kx[None, :, :, None] * gh2, axes=(1, 2)).real
    out[:, 1] = _fft.ifftn(1j * ky[None, :, :, None] * gh2, axes=(1, 2)).real
    out[:, 2] = vertical_derivative(f.data, f.spacing[2])
    return out


@lru_cache(maxsize=32)
def _horizontal_wavevectors_cached(dims2, lengths2):
    axes = [TWO_PI / L * np.fft.fftfreq(n, d=1.0 / n) for n, L in zip(dims2, lengths2)]
    return np.meshgrid(*axes, indexing="ij")


def _horizontal_wavevectors(dims2, lengths2):
    return _horizontal_wavevectors_cached(tuple(int(n) for n in dims2), tuple(float(v) for v in lengths2))


def vertical_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """4th-order first derivative along the last axis, one-sided at the ends."""
    n = values.shape[-1]
    if n < 5:
        raise ValueError("vertical derivative needs at least 5 nodes")
    v = values
    out = np.empty_like(v)
    out[..., 2:-2] = (v[..., :-4] - 8 * v[..., 1:-3] + 8 * v[..., 3:-1] - v[..., 4:]) / (12 * h)
    out[..., 0] = (-25 * v[..., 0] + 48 * v[..., 1] - 36 * v[..., 2] + 16 * v[..., 3] - 3 * v[..., 4]) / (12 * h)
    out[..., 1] = (-3 * v[..., 0] - 10 * v[..., 1] + 18 * v[..., 2] - 6 * v[..., 3] + v[..., 4]) / (12 * h)
    out[..., -2] = (3 * v[..., -1] + 10 * v[..., -2] - 18 * v[..., -3] + 6 * v[..., -4] - v[..., -5]) / (12 * h)
    out[..., -1] = (25 * v[..., -1] - 48 * v[..., -2] + 36 * v[..., -3] - 16 * v[..., -4] + 3 * v[..., -5]) / (12 * h)
    return out


def grad_norm_sq(f: GridField) -> float:
    """Integral |grad u|^2 dx (Frobenius norm of the velocity gradient)."""
    g = gradient_tensor(f)
    return integrate_scalar(f, np.einsum("abijl,abijl->ijl", g, g))


def shift(f: GridField, y) -> GridField:
    """u(. - y) realised as an exact spectral phase shift (periodic geometry)."""
    if f.geometry != PERIODIC:
        raise ValueError("spectral shift requires periodic3 geometry")
    F = forward_transform(f)
    return inverse_transform(spectral_shift(F, y))


def spectral_shift(F: SpectralField, y) -> SpectralField:
    y = np.asarray(y, dtype=float)
    kx, ky, kz = wavevectors(F.dims, F.lengths)
    phase = np.exp(-1j * (kx * y[0] + ky * y[1] + kz * y[2]))
    return SpectralField(F.coeffs * phase, F.lengths, divergence_free=F.divergence_free)


def dealias_mask(dims, lengths=(TWO_PI, TWO_PI, TWO_PI)) -> np.ndarray:
    """Two-thirds-rule mask: keep integer modes with |n_i| <= ceil(N_i/3) - 1."""
    masks = []
    for n in dims:
        cut = int(np.ceil(n / 3)) - 1
        ints = np.fft.fftfreq(n, d=1.0 / n)
        masks.append(np.abs(ints) <= cut + 1e-9)
    mx, my, mz = np.meshgrid(*masks, indexing="ij")
    return mx & my & mz
