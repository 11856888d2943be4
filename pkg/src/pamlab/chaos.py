"""Discrete multiple stochastic integrals of order one and two.

``I_1(f) = sum_k f(k) eta(k)`` and ``I_2(f) = sum_{k1 != k2} f(k1, k2) eta(k1) eta(k2)``
for kernels indexed by lattice sites (flattened row-major).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInput
from .noise import build_xi, disorder_values
from .rng import make_rng
from .torus import FOUR_PI2


@dataclass(frozen=True, eq=False)
class ChaosKernel:
    """Off-diagonal kernel of order 1 or 2 (complex coefficients allowed)."""

    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if self.order not in (1, 2):
            raise InvalidInput(f"only orders 1 and 2 are supported, got {self.order}")
        if c.ndim != self.order or (self.order == 2 and c.shape[0] != c.shape[1]):
            raise InvalidInput(f"order-{self.order} kernel has incompatible shape {c.shape}")
        if self.order == 2 and np.any(np.diag(c) != 0):
            raise InvalidInput("order-2 kernel must vanish on the diagonal k1 == k2")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_sites(self):
        return self.coeffs.shape[0]

    @cached_property
    def symmetrized(self):
        if self.order == 1:
            return self
        return ChaosKernel(2, 0.5 * (self.coeffs + self.coeffs.T))

    def l2_norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    @property
    def real(self):
        return ChaosKernel(self.order, self.coeffs.real)

    @property
    def imag(self):
        return ChaosKernel(self.order, self.coeffs.imag)


def _as_batch(eta, n):
    v = getattr(eta, "values", eta)
    v = np.asarray(v, dtype=float)
    single = v.size == n
    v = v.reshape(-1, n)
    return v, single


def multiple_integral(f, eta):
    """Evaluate ``I_n(f)`` for one disorder sample or a batch ``(B, n_sites)``."""
    v, single = _as_batch(eta, f.n_sites)
    if f.order == 1:
        out = v @ f.coeffs
    else:
        out = np.einsum("bi,ij,bj->b", v, f.coeffs, v)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# exact moment oracles
# ---------------------------------------------------------------------------

def pairings(items):
    """All perfect matchings of an even-length sequence."""
    items = list(items)
    if not items:
        yield []
        return
    a = items[0]
    for i in range(1, len(items)):
        rest = items[1:i] + items[i + 1:]
        for p in pairings(rest):
            yield [(a, items[i])] + p


_LETTERS = "abcdefghijklmnop"


def wick_moment(mats):
    """``E prod_m (eta^T A_m eta)`` for standard Gaussian ``eta`` by Wick's theorem.

    Sums over all ``(2r-1)!!`` pairings of the ``2r`` indices; every term is a
    full tensor contraction.
    """
    r = len(mats)
    total = 0.0j
    for p in pairings(range(2 * r)):
        label = [None] * (2 * r)
        for n, (i, j) in enumerate(p):
            label[i] = label[j] = _LETTERS[n]
        subs = ",".join(label[2 * m] + label[2 * m + 1] for m in range(r))
        total += np.einsum(subs + "->", *mats)
    return total


def gaussian_quadratic_fourth_moment(A):
    """Cumulant formula ``E Q^4`` for ``Q = eta^T A eta``, real symmetric ``A``, zero diagonal.

    ``kappa_r = 2^{r-1} (r-1)! tr(A^r)`` and ``E Q^4 = kappa_4 + 3 kappa_2^2`` since ``kappa_1 = 0``.
    """
    A = np.asarray(A, dtype=float)
    A2 = A @ A
    k2 = 2.0 * np.trace(A2)
    k4 = 48.0 * np.trace(A2 @ A2)
    return k4 + 3.0 * k2**2


def enumerated_moment(f, p, values, probs):
    """Exact ``E|I_n(f)|^p`` for a discrete i.i.d. law by enumerating all configurations."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = f.n_sites
    if len(values) ** n > 2**20:
        raise InvalidInput("configuration space too large for exact enumeration")
    idx = np.array(list(itertools.product(range(len(values)), repeat=n)))
    w = np.prod(probs[idx], axis=1)
    vals = multiple_integral(f, values[idx])
    return float(np.sum(w * np.abs(vals) ** p))


def second_moment_exact(f):
    """``E|I_n(f)|^2`` for i.i.d. unit-variance disorder: ``||f||^2`` or ``2 ||f~||^2``."""
    if f.order == 1:
        return f.l2_norm() ** 2
    return 2.0 * f.symmetrized.l2_norm() ** 2


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------

def bootstrap_mean_ci(x, n_boot=1000, level=0.95, rng=None):
    """Percentile bootstrap interval of the mean of ``x``."""
    rng = make_rng(rng)
    x = np.asarray(x, dtype=float)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    means = x[idx].mean(axis=1)
    a = (1 - level) / 2
    lo, hi = np.quantile(means, [a, 1 - a])
    return float(lo), float(hi)


@dataclass
class MomentReport:
    n: int
    p: float
    lhs: float
    rhs: float
    ratio: float
    ci_low: float
    ci_high: float
    se: float
    samples: int
    seed: object
    expected: float | None = None

    def as_dict(self):
        return dict(self.__dict__)


def moment_bound_check(f, spec, p, samples, seed=None, n_boot=1000, expected=None):
    """Monte Carlo ``E|I_n(f)|^p`` against ``||f||^p M^n``.

    The ratio ``lhs / rhs`` is the run's empirical constant.  When ``p = 2``
    and no ``expected`` is given, the exact second moment is filled in.
    """
    if p < 2:
        raise InvalidInput(f"moment order must be at least 2, got {p}")
    if samples < 500:
        raise InvalidInput(f"need at least 500 samples, got {samples}")
    rng = make_rng(seed)
    eta = disorder_values(spec, f.n_sites, rng, batch=samples)
    vals = np.abs(multiple_integral(f, eta)) ** p
    lhs = float(vals.mean())
    rhs = f.l2_norm() ** p * spec.M**f.order
    lo, hi = bootstrap_mean_ci(vals, n_boot, rng=rng)
    if expected is None and p == 2:
        expected = second_moment_exact(f)
    return MomentReport(
        n=f.order, p=p, lhs=lhs, rhs=rhs, ratio=lhs / rhs if rhs > 0 else float("nan"),
        ci_low=lo, ci_high=hi, se=float(vals.std(ddof=1) / np.sqrt(samples)),
        samples=samples, seed=seed, expected=expected,
    )


def _fourier_basis(grid):
    # F xi(k) = sum_l b[k, l] eta(l)
    ks = grid.sites()
    return grid.epsilon * np.exp(-1j * ks @ grid.points().T)


def fourier_chaos_check(f, spec, grid, p, samples, seed=None):
    """Mode-indexed functional of ``F xi`` against its site-indexed chaos expansion.

    Parameters
    ----------
    f : ndarray
        ``(N, N)`` for order 1 or ``(N, N, N, N)`` / ``(N^2, N^2)`` for order 2,
        indexed by centred modes.
    p : float
        Moment order; the report compares ``E|F|^{p/n}`` with ``(sum |f|^2)^{p/(2n)} M``.

    Returns
    -------
    dict
        Direct values, the two chaos parts, the per-sample decomposition
        error, the moment estimate and the bound.
    """
    f = np.asarray(f, dtype=complex)
    n2 = grid.N**2
    order = 1 if f.size == n2 else 2
    if order == 2 and f.size != n2 * n2:
        raise InvalidInput(f"kernel size {f.size} matches neither order 1 nor order 2 on N={grid.N}")
    rng = make_rng(seed)
    eta = disorder_values(spec, n2, rng, batch=samples)
    b = _fourier_basis(grid)
    # direct evaluation through the FFT-based xi coefficients
    xi = np.stack([build_xi(_Pot(grid, e)).coeffs.reshape(-1) for e in eta])
    if order == 1:
        fk = f.reshape(-1)
        direct = xi @ fk
        g = b.T @ fk
        off, diag = eta @ g, np.zeros(samples, dtype=complex)
        mean = 0.0
    else:
        F = f.reshape(n2, n2)
        ks = grid.sites()
        # E[F xi(k1) F xi(k2)] = 4 pi^2 1{k1 + k2 = 0}
        opp = np.all(ks[:, None, :] + ks[None, :, :] == 0, axis=-1)
        mean = FOUR_PI2 * np.sum(F[opp])
        direct = np.einsum("bi,ij,bj->b", xi, F, xi) - mean
        g = b.T @ F @ b
        gd = np.diag(g)
        g_off = g - np.diag(gd)
        off = np.einsum("bi,ij,bj->b", eta, g_off, eta)
        diag = (eta**2 - 1.0) @ gd
    err = np.abs(direct - (off + diag))
    lhs = float(np.mean(np.abs(direct) ** (p / order)))
    rhs = float(np.sum(np.abs(f) ** 2) ** (p / (2 * order)) * spec.M)
    return {
        "n": order, "p": p, "direct": direct, "offdiagonal": off, "diagonal": diag,
        "decomposition_error": float(err.max()), "subtracted_mean": complex(mean),
        "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else float("nan"),
        "samples": samples, "seed": seed,
    }


@dataclass(frozen=True)
class _Pot:
    grid: object
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values).reshape(self.grid.N, self.grid.N))
