"""Periodic lattice geometry and Fourier analysis on the two-torus.

Conventions
-----------
The lattice has odd side ``N`` and mesh ``epsilon = 2*pi/N``.  Sites are
``epsilon * l`` with ``l`` in ``{-(N-1)/2, ..., (N-1)/2}**2`` and Fourier
modes ``k`` range over the same index box.  Every array indexed by sites or
modes is a centred ``(L, L)`` array (``L`` odd) whose entry ``[i1, i2]``
belongs to ``(i1 - (L-1)/2, i2 - (L-1)/2)``; flattening it row-major gives
the canonical ordering used in all serialisation.

Fourier coefficients follow the continuum normalisation

    F u(k) = int_{T^2} u(x) exp(-i<k,x>) dx,
    u(x)   = (2 pi)^-2 sum_k F u(k) exp(i<k,x>),

and the lattice transform is ``F_N phi(k) = eps^2 sum_l phi(eps l) exp(-i<k,eps l>)``,
so that the trigonometric extension ``E_N phi`` has ``F E_N phi = F_N phi``
on the mode box.

A :class:`SpectralField` whose coefficient box is wider than ``N`` stores a
trigonometric polynomial on the continuum torus (for instance an un-folded
product of two lattice extensions).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.fft as sfft

from .errors import InvalidInput

TWO_PI = 2.0 * np.pi
FOUR_PI2 = TWO_PI**2
TOL_FP = 1e-9


def centered_axis(L):
    """Integer frequencies ``-(L-1)/2 .. (L-1)/2`` of a centred box of side ``L``."""
    h = (L - 1) // 2
    return np.arange(-h, h + 1)


def _check_odd(L, what="size"):
    if L < 1 or L % 2 == 0:
        raise InvalidInput(f"{what} must be a positive odd integer, got {L}")


@dataclass(frozen=True)
class GridSpec:
    """Periodic lattice of odd side ``N`` embedded in the torus ``[0, 2pi)^2``."""

    N: int

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            raise InvalidInput(f"N must be an integer, got {self.N!r}")
        if self.N < 3 or self.N % 2 == 0:
            raise InvalidInput(f"N must be odd and >= 3, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def epsilon(self):
        return TWO_PI / self.N

    @property
    def half(self):
        return (self.N - 1) // 2

    @property
    def axis(self):
        return centered_axis(self.N)

    @property
    def modes(self):
        return ModeSet(self.N)

    def sites(self):
        """Integer site labels ``l`` as an ``(N*N, 2)`` array in row-major order."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1).reshape(-1, 2)

    def points(self):
        """Physical lattice points ``eps * l`` with the same ordering as :meth:`sites`."""
        return self.epsilon * self.sites()

    def site_index(self, site):
        """Row-major flat index of an integer site ``(l1, l2)`` (taken mod ``N``)."""
        l1, l2 = (int(s) for s in site)
        i1 = (l1 + self.half) % self.N
        i2 = (l2 + self.half) % self.N
        return i1 * self.N + i2


@dataclass(frozen=True)
class ModeSet:
    """All ``k`` with ``|k|_inf < N/2`` in canonical row-major order."""

    N: int

    def __post_init__(self):
        _check_odd(self.N, "N")

    @property
    def modes(self):
        a = centered_axis(self.N)
        return np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1).reshape(-1, 2)

    def __len__(self):
        return self.N * self.N

    def __contains__(self, k):
        return max(abs(int(k[0])), abs(int(k[1]))) < self.N / 2


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Complex values on the lattice, stored as a centred ``(N, N)`` array."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1 and v.size == self.grid.N**2:
            v = v.reshape(self.grid.N, self.grid.N)
        if v.shape != (self.grid.N, self.grid.N):
            raise InvalidInput(
                f"lattice field needs shape ({self.grid.N}, {self.grid.N}), got {v.shape}"
            )
        v = np.array(v, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(x1, x2)`` at the lattice points."""
        x = grid.epsilon * grid.axis
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return cls(grid, func(X1, X2))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full((grid.N, grid.N), c, dtype=complex))

    def is_real(self, tol=TOL_FP):
        scale = max(np.abs(self.values).max(), 1.0)
        return bool(np.abs(self.values.imag).max() <= tol * scale)

    @property
    def flat(self):
        return self.values.reshape(-1)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients on a centred ``(L, L)`` mode box.

    ``L == grid.N`` for lattice extensions; products of extensions live on
    wider boxes until they are folded back with :func:`pi_N` or truncated
    with :func:`projector_PK`.
    """

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim == 1:
            L = int(round(np.sqrt(c.size)))
            if L * L != c.size:
                raise InvalidInput(f"cannot reshape {c.size} coefficients to a square box")
            c = c.reshape(L, L)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidInput(f"coefficients must form a square box, got {c.shape}")
        _check_odd(c.shape[0], "coefficient box side")
        c = np.array(c, dtype=complex)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def size(self):
        return self.coeffs.shape[0]

    @property
    def in_modeset(self):
        return self.size <= self.grid.N

    @classmethod
    def zeros(cls, grid, L=None):
        L = grid.N if L is None else L
        return cls(grid, np.zeros((L, L), dtype=complex))

    @classmethod
    def single_mode(cls, grid, k, coeff=1.0):
        c = np.zeros((grid.N, grid.N), dtype=complex)
        c[k[0] + grid.half, k[1] + grid.half] = coeff
        return cls(grid, c)

    def coeff(self, k):
        h = (self.size - 1) // 2
        if max(abs(k[0]), abs(k[1])) > h:
            return 0.0j
        return self.coeffs[k[0] + h, k[1] + h]

    def padded(self, L):
        return SpectralField(self.grid, pad_box(self.coeffs, L))

    def hermitian_error(self):
        """``max |F(-k) - conj F(k)|``; zero for real-valued functions."""
        c = self.coeffs
        return float(np.abs(c[::-1, ::-1] - np.conj(c)).max())

    def is_real(self, tol=TOL_FP):
        scale = max(np.abs(self.coeffs).max(), 1.0)
        return self.hermitian_error() <= tol * scale

    def values_on_grid(self, M):
        """Function values on the uniform ``M x M`` grid ``2 pi m / M``."""
        return to_grid(self.coeffs, M)

    def _binary(self, other, op):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid:
            raise InvalidInput("spectral fields live on different grids")
        L = max(self.size, other.size)
        return SpectralField(self.grid, op(pad_box(self.coeffs, L), pad_box(other.coeffs, L)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


# ---------------------------------------------------------------------------
# centred-box helpers
# ---------------------------------------------------------------------------

def pad_box(c, L):
    """Embed a centred box into a larger centred box of side ``L`` (or crop it)."""
    n = c.shape[-1]
    if L == n:
        return c
    if L > n:
        out = np.zeros(c.shape[:-2] + (L, L), dtype=c.dtype)
        o = (L - n) // 2
        out[..., o:o + n, o:o + n] = c
        return out
    o = (n - L) // 2
    return c[..., o:o + L, o:o + L]


def to_grid(c, M):
    """Evaluate ``(2pi)^-2 sum_k c_k e^{i<k,x>}`` on the uniform ``M x M`` grid.

    Exact as long as ``M >= L``; leading axes of ``c`` are batch axes.
    """
    L = c.shape[-1]
    if M < L:
        raise InvalidInput(f"grid of side {M} cannot resolve a mode box of side {L}")
    idx = centered_axis(L) % M
    arr = np.zeros(c.shape[:-2] + (M, M), dtype=complex)
    arr[..., idx[:, None], idx[None, :]] = c
    return sfft.ifft2(arr, axes=(-2, -1)) * (M * M / FOUR_PI2)


def from_grid(values, L):
    """Coefficients on the centred box of side ``L`` from samples on an ``M x M`` grid.

    Inverse of :func:`to_grid` whenever the sampled function has no modes
    outside the box.
    """
    M = values.shape[-1]
    if M < L:
        raise InvalidInput(f"grid of side {M} cannot resolve a mode box of side {L}")
    full = sfft.fft2(values, axes=(-2, -1)) * (FOUR_PI2 / (M * M))
    idx = centered_axis(L) % M
    return full[..., idx[:, None], idx[None, :]]


def product_coeffs(a, b):
    """Exact coefficients of the pointwise product of two trigonometric polynomials."""
    L = a.shape[-1] + b.shape[-1] - 1
    M = sfft.next_fast_len(L)
    return from_grid(to_grid(a, M) * to_grid(b, M), L)


# ---------------------------------------------------------------------------
# random walk measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkMeasure:
    """Finitely supported signed measure ``mu`` on ``Z^2`` defining ``Delta_rw``."""

    atoms: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for j, m in dict(self.atoms).items():
            j = (int(j[0]), int(j[1]))
            clean[j] = clean.get(j, 0.0) + float(m)
        object.__setattr__(self, "atoms", clean)

    @classmethod
    def nearest_neighbor(cls):
        return cls({(1, 0): 1.0, (-1, 0): 1.0, (0, 1): 1.0, (0, -1): 1.0, (0, 0): -4.0})

    @classmethod
    def range_two(cls, a, b):
        """Radial walk with masses ``a`` on ``+-e_r`` and ``b`` on ``+-2 e_r``."""
        atoms = {(0, 0): -4.0 * a - 4.0 * b}
        for s in (1, -1):
            atoms[(s, 0)] = a
            atoms[(0, s)] = a
            atoms[(2 * s, 0)] = b
            atoms[(0, 2 * s)] = b
        return cls(atoms)

    def arrays(self):
        """Support points and masses as ``(n, 2)`` int and ``(n,)`` float arrays."""
        js = np.array(sorted(self.atoms), dtype=int).reshape(-1, 2)
        ms = np.array([self.atoms[tuple(j)] for j in js], dtype=float)
        return js, ms

    def jumps(self):
        """Nonzero support points and their masses."""
        js, ms = self.arrays()
        keep = np.any(js != 0, axis=1) & (ms != 0)
        return js[keep], ms[keep]

    @property
    def jump_rate(self):
        """Total jump rate ``lambda = -mu({0})`` of the unscaled walk."""
        return -self.atoms.get((0, 0), 0.0)


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def failures(self):
        return [name for name, ok, _ in self.checks if not ok]

    def require(self):
        if not self.passed:
            raise InvalidInput("walk measure fails checks: " + ", ".join(self.failures()))
        return self

    def as_dict(self):
        return {name: {"passed": ok, "value": val} for name, ok, val in self.checks}


def validate_walk_measure(mu, tol=TOL_FP):
    """Check every moment and symmetry condition required of ``mu``.

    Parameters
    ----------
    mu : WalkMeasure
    tol : float
        Absolute tolerance on the moment identities.

    Returns
    -------
    ValidationReport
        One entry per condition with the computed value.
    """
    if not mu.atoms:
        raise InvalidInput("walk measure has no atoms")
    js, ms = mu.arrays()
    j1, j2 = js[:, 0].astype(float), js[:, 1].astype(float)
    off = np.any(js != 0, axis=1)
    checks = []
    neg = ms[off].min() if off.any() else 0.0
    checks.append(("nonnegative_off_origin", bool(neg >= -tol), float(neg)))
    mass = ms.sum()
    checks.append(("total_mass_zero", abs(mass) <= tol, float(mass)))
    first = (float(j1 @ ms), float(j2 @ ms))
    checks.append(("first_moments_zero", max(map(abs, first)) <= tol, first))
    mixed = float((j1 * j2) @ ms)
    checks.append(("mixed_second_moment_zero", abs(mixed) <= tol, mixed))
    second = (float((j1**2) @ ms), float((j2**2) @ ms))
    checks.append(("second_moments_two", max(abs(s - 2.0) for s in second) <= tol, second))
    sixth = float((np.hypot(j1, j2) ** 6) @ np.abs(ms))
    checks.append(("finite_sixth_moment", bool(np.isfinite(sixth)), sixth))
    radial_dev = 0.0
    r2 = js[:, 0] ** 2 + js[:, 1] ** 2
    for r in np.unique(r2):
        # every lattice point on the circle must carry the same mass, including unlisted ones
        R = int(np.ceil(np.sqrt(r)))
        circle = [(a, b) for a in range(-R, R + 1) for b in range(-R, R + 1) if a * a + b * b == r]
        masses = [mu.atoms.get(p, 0.0) for p in circle]
        radial_dev = max(radial_dev, max(masses) - min(masses))
    checks.append(("radial", radial_dev <= tol, radial_dev))
    unit = mu.atoms.get((0, 1), 0.0)
    checks.append(("positive_unit_step", unit > tol, unit))
    return ValidationReport(checks)


# ---------------------------------------------------------------------------
# Fourier transforms and extension
# ---------------------------------------------------------------------------

def dft_lattice(phi):
    """Lattice Fourier transform ``eps^2 sum_l phi(eps l) e^{-i<k, eps l>}`` on the mode box."""
    std = np.fft.ifftshift(phi.values)
    return SpectralField(phi.grid, from_grid(std, phi.grid.N))


def idft_lattice(phi_hat):
    """Inverse of :func:`dft_lattice`: lattice values of the extension."""
    if not phi_hat.in_modeset:
        raise InvalidInput("idft_lattice needs coefficients supported in the mode set")
    c = pad_box(phi_hat.coeffs, phi_hat.grid.N)
    return LatticeField(phi_hat.grid, np.fft.fftshift(to_grid(c, phi_hat.grid.N)))


def dft_lattice_naive(phi):
    """Direct O(N^4) summation; test oracle for small ``N``."""
    g = phi.grid
    pts = g.points()
    ks = g.sites()
    phase = np.exp(-1j * ks @ pts.T)
    c = g.epsilon**2 * phase @ phi.flat
    return SpectralField(g, c.reshape(g.N, g.N))


def extension_eval(phi_hat, x):
    """Evaluate the trigonometric extension at arbitrary points.

    Parameters
    ----------
    phi_hat : SpectralField
    x : array_like, shape (2,) or (n, 2)
        Points of the torus; reduced modulo ``2 pi`` internally.

    Returns
    -------
    complex or ndarray of complex
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.mod(np.atleast_2d(x), TWO_PI)
    ks = centered_axis(phi_hat.size)
    E1 = np.exp(1j * x[:, :1] * ks[None, :])
    E2 = np.exp(1j * x[:, 1:] * ks[None, :])
    vals = np.einsum("pa,ab,pb->p", E1, phi_hat.coeffs, E2) / FOUR_PI2
    return vals[0] if single else vals


def fold_mode(k, N):
    """Representative of ``k`` modulo ``N`` in ``(-N/2, N/2)`` componentwise."""
    k = np.asarray(k)
    h = (N - 1) // 2
    return (k + h) % N - h


def _fold_matrix(L, N):
    ks = centered_axis(L)
    rows = fold_mode(ks, N) + (N - 1) // 2
    F = np.zeros((N, L))
    F[rows, np.arange(L)] = 1.0
    return F


def pi_N(phi_hat, grid=None):
    """Fold all modes into the mode box of ``grid`` (aliasing operator ``Pi_N``).

    The output coefficient at ``m`` is the sum of input coefficients over all
    ``k`` whose folded representative is ``m``.
    """
    grid = phi_hat.grid if grid is None else grid
    F = _fold_matrix(phi_hat.size, grid.N)
    return SpectralField(grid, F @ phi_hat.coeffs @ F.T)


def projector_PK(phi_hat, K):
    """Keep only modes with ``|k|_inf < K/2`` (Fourier truncation ``P_K``)."""
    if K < 1:
        raise InvalidInput(f"K must be positive, got {K}")
    if K > phi_hat.grid.N:
        raise InvalidInput(f"K={K} exceeds the lattice side N={phi_hat.grid.N}")
    # the kept modes |k|_inf <= (K-1)//2 fit in a box of side 2*((K-1)//2) + 1
    L = min(phi_hat.size, 2 * ((K - 1) // 2) + 1)
    return SpectralField(phi_hat.grid, pad_box(phi_hat.coeffs, L))


# ---------------------------------------------------------------------------
# random-walk Laplacian
# ---------------------------------------------------------------------------

def multiplier_f(x, mu):
    """Symbol of the walk generator relative to the Laplacian.

    ``f(x) = sum_{j != 0} mu(j) (1 - cos<x, j>) / |x|^2`` with ``f(0) = 1``.
    Accepts a single point or an array of points with trailing axis 2.
    """
    x = np.asarray(x, dtype=float)
    js, ms = mu.jumps()
    dots = x @ js.T
    num = (2.0 * np.sin(dots / 2.0) ** 2) @ ms
    r2 = np.sum(x * x, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(r2 > 0, num / np.where(r2 > 0, r2, 1.0), 1.0)
    return out if out.ndim else float(out)


def laplacian_symbol(grid, mu, L=None):
    """``-|k|^2 f(eps k)`` on the centred box of side ``L`` (default ``N``)."""
    L = grid.N if L is None else L
    ks = centered_axis(L)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    js, ms = mu.jumps()
    eps = grid.epsilon
    phase = eps * (K1[..., None] * js[:, 0] + K2[..., None] * js[:, 1])
    return -(2.0 * np.sin(phase / 2.0) ** 2) @ ms / eps**2


def apply_discrete_laplacian(phi_hat, mu):
    """Apply ``Delta_rw^N`` as the Fourier multiplier ``-|k|^2 f(eps k)``."""
    sym = laplacian_symbol(phi_hat.grid, mu, phi_hat.size)
    return SpectralField(phi_hat.grid, sym * phi_hat.coeffs)


def apply_stencil_laplacian(phi, mu):
    """Direct lattice stencil ``eps^-2 sum_j mu(j) phi(x + eps j)``; test oracle."""
    out = np.zeros_like(phi.values)
    for j, m in mu.atoms.items():
        out = out + m * np.roll(phi.values, shift=(-j[0], -j[1]), axis=(0, 1))
    return LatticeField(phi.grid, out / phi.grid.epsilon**2)


def heat_semigroup(phi_hat, t, mu):
    """``exp(t Delta_rw^N)`` applied coefficient-wise."""
    if t < 0:
        raise InvalidInput(f"heat semigroup needs t >= 0, got {t}")
    sym = laplacian_symbol(phi_hat.grid, mu, phi_hat.size)
    return SpectralField(phi_hat.grid, np.exp(t * sym) * phi_hat.coeffs)
