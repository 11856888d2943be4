"""Littlewood-Paley blocks, Besov norms and Bony's paraproduct decomposition.

All operators act as radial Fourier multipliers on :class:`SpectralField`
boxes.  Products of blocks are formed on a grid large enough that no
aliasing occurs, so the output of :func:`bony_decomposition` is the exact
coefficient box of the continuum product.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import InvalidInput
from .torus import FOUR_PI2, SpectralField, centered_axis, from_grid, product_coeffs, to_grid

DEFAULT_RADII = (1.0, 8.0 / 3.0, 4.0 / 3.0)


def smooth_step(s):
    """C-infinity step: 1 for ``s <= 0``, 0 for ``s >= 1``, built from ``exp(-1/t)``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s < 1, np.exp(-1.0 / np.clip(1.0 - s, 1e-300, None)), 0.0)
        b = np.where(s > 0, np.exp(-1.0 / np.clip(s, 1e-300, None)), 0.0)
        out = a / (a + b)
    out = np.where(s <= 0, 1.0, np.where(s >= 1, 0.0, out))
    return out


@dataclass(frozen=True)
class DyadicPartition:
    """Radial dyadic partition of unity ``chi + sum_j rho(2^-j .) = 1``.

    ``chi`` equals one on ``|x| <= a`` and vanishes for ``|x| >= c``;
    ``rho = chi(./2) - chi`` is supported in the annulus ``a <= |x| <= b``
    with ``b = 2c``.
    """

    a: float = DEFAULT_RADII[0]
    b: float = DEFAULT_RADII[1]
    c: float = DEFAULT_RADII[2]

    def chi(self, r):
        return smooth_step((np.asarray(r, dtype=float) - self.a) / (self.c - self.a))

    def rho(self, r):
        r = np.asarray(r, dtype=float)
        return self.chi(r / 2.0) - self.chi(r)

    def rho_j(self, j, r):
        if j == -1:
            return self.chi(r)
        return self.rho(np.asarray(r, dtype=float) / 2.0**j)

    def j_max(self, L):
        """Largest block index that meets the centred box of side ``L``."""
        rmax = np.sqrt(2.0) * (L - 1) / 2
        j = -1
        while self.a * 2.0 ** (j + 1) < rmax:
            j += 1
        return j

    def weights(self, L):
        """Array ``(J, L, L)`` of block multipliers for ``j = -1 .. j_max(L)``."""
        return _weights(self.a, self.b, self.c, L)


@lru_cache(maxsize=64)
def _weights(a, b, c, L):
    part = DyadicPartition(a, b, c)
    ks = centered_axis(L)
    r = np.hypot(ks[:, None], ks[None, :])
    w = np.stack([part.rho_j(j, r) for j in range(-1, part.j_max(L) + 1)])
    w.setflags(write=False)
    return w


def build_partition(radii=None, n_samples=10_000):
    """Construct and numerically certify a dyadic partition.

    Parameters
    ----------
    radii : tuple (a, b, c), optional
        Inner radius of the annulus, outer radius of the annulus and radius
        of the ball carrying ``chi``.  Must satisfy ``a < c < 2a`` and
        ``b = 2c``.  Defaults to ``(1, 8/3, 4/3)``.
    n_samples : int
        Number of radial samples used for the partition-of-unity check.
    """
    a, b, c = DEFAULT_RADII if radii is None else (float(v) for v in radii)
    if not a > 0:
        raise InvalidInput("partition radii: need a > 0")
    if not a < c:
        raise InvalidInput("partition radii: need a < c so chi can decay smoothly")
    if abs(b - 2 * c) > 1e-12 * max(1.0, b):
        raise InvalidInput("partition radii: annulus outer radius must be b = 2c for rho = chi(./2) - chi")
    if not c < 2 * a:
        raise InvalidInput(
            "partition radii: supp chi meets supp rho(2^-j .) for j >= 1 "
            "(and adjacent-but-one annuli overlap) unless c < 2a"
        )
    part = DyadicPartition(a, b, c)
    r = np.linspace(0.0, 2.0**12 * a, n_samples)
    dev = partition_of_unity_error(part, r)
    if dev > 1e-8:
        raise InvalidInput(f"partition of unity fails by {dev:.2e}")
    return part


def partition_of_unity_error(part, r, j_top=None):
    """``max |chi + sum_j rho_j - 1|`` over radii ``r``."""
    r = np.asarray(r, dtype=float)
    if j_top is None:
        j_top = int(np.ceil(np.log2(max(r.max(), 1.0) / part.a))) + 1
    total = part.chi(r) + sum(part.rho_j(j, r) for j in range(0, j_top + 1))
    return float(np.abs(total - 1.0).max())


def _check_block(part, j, L):
    jm = part.j_max(L)
    if not -1 <= j <= jm:
        raise InvalidInput(f"block index {j} outside [-1, {jm}]")


def block(j, phi_hat, partition=None):
    """Littlewood-Paley block ``Delta_j phi``."""
    part = DyadicPartition() if partition is None else partition
    _check_block(part, j, phi_hat.size)
    w = part.weights(phi_hat.size)[j + 1]
    return SpectralField(phi_hat.grid, w * phi_hat.coeffs)


def blocks(phi_hat, partition=None):
    """All blocks as an array ``(J, L, L)`` of coefficients, ``j = -1 .. j_max``."""
    part = DyadicPartition() if partition is None else partition
    return part.weights(phi_hat.size) * phi_hat.coeffs


def quadrature_size(L):
    """Side of the uniform grid used for ``L^p`` quadrature of a box of side ``L``.

    At least ``2L + 1``, rounded up to a length with small prime factors.
    """
    return sfft.next_fast_len(2 * L + 1)


def _lp(values, p):
    M = values.shape[-1]
    a = np.abs(values)
    if np.isinf(p):
        return a.max(axis=(-2, -1))
    return (FOUR_PI2 / (M * M) * np.sum(a**p, axis=(-2, -1))) ** (1.0 / p)


def _check_pq(p, q=1.0):
    if not (p >= 1 and q >= 1):
        raise InvalidInput(f"Besov indices need p, q >= 1 (got p={p}, q={q})")


def lp_norm(phi_hat, p):
    """``L^p(T^2)`` norm by quadrature on a uniform grid of side ``>= 2L+1`` (grid max for ``p = inf``)."""
    _check_pq(p)
    return float(_lp(to_grid(phi_hat.coeffs, quadrature_size(phi_hat.size)), p))


def block_norms(phi_hat, p, partition=None):
    """``||Delta_j phi||_{L^p}`` for ``j = -1 .. j_max``."""
    _check_pq(p)
    b = blocks(phi_hat, partition)
    return _lp(to_grid(b, quadrature_size(phi_hat.size)), p)


def besov_norm(phi_hat, alpha, p, q, partition=None):
    """``|| (2^{j alpha} ||Delta_j phi||_{L^p})_j ||_{l^q}``.

    ``p`` and ``q`` may be ``numpy.inf``.  For ``p = inf`` the block sup-norms
    are grid maxima and therefore slight underestimates.
    """
    _check_pq(p, q)
    norms = block_norms(phi_hat, p, partition)
    j = np.arange(-1, norms.size - 1)
    seq = 2.0 ** (j * alpha) * norms
    if np.isinf(q):
        return float(seq.max())
    return float(np.sum(seq**q) ** (1.0 / q))


def holder_besov_norm(phi_hat, alpha, p=np.inf, partition=None):
    """Shorthand for the ``C^alpha_p = B^alpha_{p, inf}`` norm."""
    return besov_norm(phi_hat, alpha, p, np.inf, partition)


# ---------------------------------------------------------------------------
# paraproducts
# ---------------------------------------------------------------------------

def _check_same_grid(f, g):
    if f.grid != g.grid:
        raise InvalidInput("paraproduct operands live on different grids")


def _stacked_blocks(phi_hat, part, J):
    b = blocks(phi_hat, part)
    if b.shape[0] < J:
        b = np.concatenate([b, np.zeros((J - b.shape[0],) + b.shape[1:], dtype=b.dtype)])
    return b


def bony_decomposition(f_hat, g_hat, partition=None, parts=("lt", "gt", "res")):
    """Return ``{name: SpectralField}`` for ``f<g``, ``f>g`` and ``f o g``.

    Every output lives on the box of side ``Lf + Lg - 1`` that holds the
    exact product.
    """
    _check_same_grid(f_hat, g_hat)
    part = DyadicPartition() if partition is None else partition
    L = f_hat.size + g_hat.size - 1
    M = sfft.next_fast_len(L)
    J = part.j_max(max(f_hat.size, g_hat.size)) + 2
    vf = to_grid(_stacked_blocks(f_hat, part, J), M)
    vg = to_grid(_stacked_blocks(g_hat, part, J), M)
    zero = np.zeros((1, M, M), dtype=complex)
    # low-pass S_{j-2} for block j (index j+1): sum of blocks -1..j-2
    cf = np.concatenate([zero, zero, np.cumsum(vf, axis=0)[:-2]])[:J] if J > 2 else np.zeros_like(vf)
    cg = np.concatenate([zero, zero, np.cumsum(vg, axis=0)[:-2]])[:J] if J > 2 else np.zeros_like(vg)
    out = {}
    if "lt" in parts:
        out["lt"] = np.sum(cf * vg, axis=0)
    if "gt" in parts:
        out["gt"] = np.sum(vf * cg, axis=0)
    if "res" in parts:
        res = np.sum(vf * vg, axis=0)
        res += np.sum(vf[1:] * vg[:-1], axis=0) + np.sum(vf[:-1] * vg[1:], axis=0)
        out["res"] = res
    return {k: SpectralField(f_hat.grid, from_grid(v, L)) for k, v in out.items()}


def paraproduct_lt(f_hat, g_hat, partition=None):
    """``f < g = sum_j Delta_{<= j-2} f Delta_j g``."""
    return bony_decomposition(f_hat, g_hat, partition, parts=("lt",))["lt"]


def paraproduct_gt(f_hat, g_hat, partition=None):
    """``f > g = g < f``."""
    return bony_decomposition(f_hat, g_hat, partition, parts=("gt",))["gt"]


def resonant(f_hat, g_hat, partition=None):
    """``f o g = sum_{|i-j| <= 1} Delta_i f Delta_j g``."""
    return bony_decomposition(f_hat, g_hat, partition, parts=("res",))["res"]


def product(f_hat, g_hat):
    """Exact pointwise product (no folding)."""
    _check_same_grid(f_hat, g_hat)
    return SpectralField(f_hat.grid, product_coeffs(f_hat.coeffs, g_hat.coeffs))


def bony_ratio(f_hat, g_hat, beta, p, partition=None):
    """``||f < g||_{C^beta_p} / (||f||_{L^p} ||g||_{C^beta_inf})``; finite-sample Bony constant."""
    lt = paraproduct_lt(f_hat, g_hat, partition)
    num = holder_besov_norm(lt, beta, p, partition)
    den = lp_norm(f_hat, p) * holder_besov_norm(g_hat, beta, np.inf, partition)
    return num / den if den > 0 else np.nan


@dataclass
class EmbeddingReport:
    max_ratio: float
    ratios: list
    excluded: int


def besov_embedding_check(fields, p1, p2, alpha, partition=None):
    """Empirical embedding constant of ``B^alpha_{p1,inf}`` into ``B^{alpha - 2(1/p1 - 1/p2)}_{p2,inf}``.

    Zero fields are skipped and counted in ``excluded``.
    """
    if p2 < p1:
        raise InvalidInput(f"embedding needs p1 <= p2 (got p1={p1}, p2={p2})")
    _check_pq(p1)
    shift = 2.0 * (1.0 / p1 - (0.0 if np.isinf(p2) else 1.0 / p2))
    ratios, excluded = [], 0
    for phi in fields:
        den = holder_besov_norm(phi, alpha, p1, partition)
        if den == 0:
            excluded += 1
            continue
        ratios.append(holder_besov_norm(phi, alpha - shift, p2, partition) / den)
    return EmbeddingReport(max(ratios) if ratios else float("nan"), ratios, excluded)
