"""Lattice disorder, the enhanced noise triple and the random operator.

The potential ``eta`` lives on lattice sites.  Its rescaled version
``xi = eps^-1 eta`` has Fourier coefficients ``eps sum_l e^{-i<k, eps l>} eta(l)``;
``X`` solves ``-Delta_rw X = xi - mean`` in Fourier space and the area term is
the resonant product ``X o xi`` with the constant ``c_tilde`` removed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import besov
from .errors import InvalidInput, UnreliableEstimate
from .rng import make_rng
from .torus import (
    FOUR_PI2,
    GridSpec,
    LatticeField,
    SpectralField,
    WalkMeasure,
    centered_axis,
    dft_lattice,
    idft_lattice,
    laplacian_symbol,
    pi_N,
    projector_PK,
    validate_walk_measure,
)

DISTRIBUTIONS = ("gaussian", "rademacher", "uniform", "tabulated")


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

def absolute_moment(distribution, p, table=None):
    """``E|eta|^p`` of a standardised base law."""
    if distribution == "gaussian":
        return float(2.0 ** (p / 2) * special.gamma((p + 1) / 2) / np.sqrt(np.pi))
    if distribution == "rademacher":
        return 1.0
    if distribution == "uniform":
        return float(3.0 ** (p / 2) / (p + 1))
    if distribution == "tabulated":
        vals, probs = table
        return float(np.dot(np.abs(vals) ** p, probs))
    raise InvalidInput(f"unknown base distribution {distribution!r}; choose from {DISTRIBUTIONS}")


@dataclass(frozen=True)
class PotentialSpec:
    """Law of the disorder.

    Parameters
    ----------
    kind : {"iid", "martingale"}
        ``martingale`` applies the sign-flip scheme: each value along the
        enumeration is multiplied by the sign of its predecessor, which keeps
        conditional mean zero and conditional variance one.
    distribution : {"gaussian", "rademacher", "uniform", "tabulated"}
    table : (values, probabilities), optional
        Required for ``tabulated``; must have mean 0 and variance 1.
    enumeration : sequence of int, optional
        Permutation of the row-major site indices giving the filling order.
    p : float
        Declared moment order, must exceed 6.
    M : float, optional
        Moment bound, defaults to ``E|eta|^p``.
    """

    kind: str = "iid"
    distribution: str = "gaussian"
    table: tuple | None = None
    enumeration: tuple | None = None
    p: float = 8.0
    M: float | None = None

    def __post_init__(self):
        if self.kind not in ("iid", "martingale"):
            raise InvalidInput(f"potential kind must be 'iid' or 'martingale', got {self.kind!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidInput(f"unknown base distribution {self.distribution!r}; choose from {DISTRIBUTIONS}")
        if not self.p > 6:
            raise InvalidInput(f"moment order p must exceed 6, got {self.p}")
        if self.distribution == "tabulated":
            if self.table is None:
                raise InvalidInput("tabulated distribution needs a (values, probabilities) table")
            vals, probs = (np.asarray(a, dtype=float) for a in self.table)
            if vals.shape != probs.shape or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
                raise InvalidInput("tabulated probabilities must be nonnegative and sum to 1")
            if abs(vals @ probs) > 1e-9 or abs((vals**2) @ probs - 1) > 1e-9:
                raise InvalidInput("tabulated law must have mean 0 and variance 1")
            object.__setattr__(self, "table", (tuple(vals), tuple(probs)))
        moment = absolute_moment(self.distribution, self.p, self._table_arrays())
        if self.M is None:
            object.__setattr__(self, "M", moment)
        elif moment > self.M * (1 + 1e-12):
            raise InvalidInput(f"E|eta|^p = {moment:.4g} exceeds the declared bound M = {self.M}")
        if self.enumeration is not None:
            object.__setattr__(self, "enumeration", tuple(int(i) for i in self.enumeration))

    def _table_arrays(self):
        if self.table is None:
            return None
        return tuple(np.asarray(a, dtype=float) for a in self.table)

    def as_dict(self):
        return {
            "kind": self.kind,
            "distribution": self.distribution,
            "table": None if self.table is None else [list(t) for t in self.table],
            "p": self.p,
            "M": self.M,
        }


def draw_standardized(spec, rng, size):
    """Draw i.i.d. values from the base law of ``spec``."""
    d = spec.distribution
    if d == "gaussian":
        return rng.standard_normal(size)
    if d == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=size)
    if d == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=size)
    vals, probs = spec._table_arrays()
    return rng.choice(vals, size=size, p=probs)


def _sign_flip(draws):
    # sigma_k = sign of the previous value (+1 at the start): predictable, |sigma| = 1
    prev = np.concatenate([np.ones(draws.shape[:-1] + (1,)), draws[..., :-1]], axis=-1)
    return np.where(prev >= 0, 1.0, -1.0) * draws


def disorder_values(spec, n_sites, rng, batch=None):
    """Values along the enumeration, shape ``(n_sites,)`` or ``(batch, n_sites)``."""
    size = n_sites if batch is None else (batch, n_sites)
    draws = draw_standardized(spec, rng, size)
    if spec.kind == "martingale":
        draws = _sign_flip(draws)
    return draws


@dataclass(frozen=True, eq=False)
class Potential:
    """Disorder values ``eta(l)`` on the lattice (centred ``(N, N)`` real array)."""

    grid: GridSpec
    values: np.ndarray
    seed: object = None
    spec: PotentialSpec | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.N, self.grid.N)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def sample_mean(self):
        return float(self.values.mean())

    @property
    def sample_variance(self):
        return float(self.values.var(ddof=1))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full((grid.N, grid.N), float(c)))


def sample_potential(spec, grid, seed=None):
    """Draw one disorder realisation; reproducible from ``(spec, seed)``."""
    n = grid.N**2
    draws = disorder_values(spec, n, make_rng(seed))
    flat = np.empty(n)
    order = np.arange(n) if spec.enumeration is None else np.asarray(spec.enumeration)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise InvalidInput(f"enumeration must be a permutation of 0..{n - 1}")
    flat[order] = draws
    return Potential(grid, flat.reshape(grid.N, grid.N), seed=seed, spec=spec)


def build_xi(eta):
    """Fourier coefficients of ``xi = eps^-1 eta``."""
    phi_hat = dft_lattice(LatticeField(eta.grid, eta.values))
    return SpectralField(eta.grid, phi_hat.coeffs / eta.grid.epsilon)


def white_noise_pairing(etas, grid, phi):
    """``eps sum_l phi(eps l) eta(l)`` for a batch of disorder arrays ``(B, N, N)``."""
    vals = LatticeField.from_function(grid, phi).values.real
    return grid.epsilon * np.einsum("bij,ij->b", np.asarray(etas, dtype=float).reshape(-1, grid.N, grid.N), vals)


# ---------------------------------------------------------------------------
# renormalisation constants
# ---------------------------------------------------------------------------

def _inverse_square_sum(K, weight=None):
    ks = centered_axis(K if K % 2 else K - 1)
    ks = ks[np.abs(ks) < K / 2]
    r2 = (ks[:, None] ** 2 + ks[None, :] ** 2).astype(float)
    r2[r2 == 0] = np.inf
    w = 1.0 / r2 if weight is None else weight(ks) / r2
    return float(np.sum(w) / FOUR_PI2)


def renorm_constant_cN(N):
    """``c_N = (2 pi)^-2 sum_{0 < |k|_inf < N/2} |k|^-2``."""
    if N < 1 or N % 2 == 0:
        raise InvalidInput(f"N must be a positive odd integer, got {N}")
    return _inverse_square_sum(N)


def renorm_constant_cK(K):
    """Same sum truncated at ``|k|_inf < K/2`` for any positive integer ``K``."""
    if K < 1:
        raise InvalidInput(f"K must be positive, got {K}")
    return _inverse_square_sum(K)


def renorm_constant_tilde(N, mu, K=None):
    """``(2 pi)^-2 sum 1 / (f(eps k) |k|^2)`` over ``0 < |k|_inf < min(N, K)/2``."""
    grid = GridSpec(N)
    sym = -laplacian_symbol(grid, mu)
    ks = grid.axis
    keep = np.abs(ks) < (N if K is None else min(N, K)) / 2
    mask = keep[:, None] & keep[None, :]
    mask[grid.half, grid.half] = False
    return float(np.sum(1.0 / sym[mask]) / FOUR_PI2)


# ---------------------------------------------------------------------------
# enhanced noise
# ---------------------------------------------------------------------------

def _add_constant(phi_hat, c):
    coeffs = np.array(phi_hat.coeffs)
    h = (phi_hat.size - 1) // 2
    coeffs[h, h] += FOUR_PI2 * c
    return SpectralField(phi_hat.grid, coeffs)


def solve_poisson(xi_hat, mu):
    """``F X(k) = F xi(k) / (f(eps k) |k|^2)`` for ``k != 0`` and ``F X(0) = 0``."""
    sym = -laplacian_symbol(xi_hat.grid, mu, xi_hat.size)
    h = (xi_hat.size - 1) // 2
    sym[h, h] = np.inf
    return SpectralField(xi_hat.grid, xi_hat.coeffs / sym)


@dataclass(frozen=True, eq=False)
class EnhancedNoise:
    """``(xi, X, X <> xi)`` together with ``c_N`` and ``c_tilde_N``.

    ``resonant`` is the raw ``X o xi`` and ``area = resonant - c_tilde_N``;
    both are stored on the unaliased box of side ``2N - 1``.
    """

    grid: GridSpec
    mu: WalkMeasure
    xi: SpectralField
    X: SpectralField
    resonant: SpectralField
    area: SpectralField
    c_N: float
    c_tilde_N: float
    potential: Potential | None = None
    partition: besov.DyadicPartition = field(default_factory=besov.DyadicPartition)

    def xi_lattice(self):
        """Real lattice values of ``xi``."""
        return idft_lattice(self.xi).values.real

    def sidecar(self):
        pot = self.potential
        return {
            "N": self.grid.N,
            "seed": None if pot is None else pot.seed,
            "c_N": self.c_N,
            "c_tilde_N": self.c_tilde_N,
            "spec": None if pot is None or pot.spec is None else pot.spec.as_dict(),
        }


def enhanced_noise(eta, mu=None, partition=None):
    """Assemble the enhanced noise of one disorder sample.

    Parameters
    ----------
    eta : Potential
    mu : WalkMeasure, optional
        Defaults to the nearest-neighbour walk; validated before use.
    partition : DyadicPartition, optional
    """
    mu = WalkMeasure.nearest_neighbor() if mu is None else mu
    validate_walk_measure(mu).require()
    part = besov.DyadicPartition() if partition is None else partition
    N = eta.grid.N
    xi = build_xi(eta)
    X = solve_poisson(xi, mu)
    res = besov.resonant(X, xi, part)
    c_tilde = renorm_constant_tilde(N, mu)
    return EnhancedNoise(
        grid=eta.grid,
        mu=mu,
        xi=xi,
        X=X,
        resonant=res,
        area=_add_constant(res, -c_tilde),
        c_N=renorm_constant_cN(N),
        c_tilde_N=c_tilde,
        potential=eta,
        partition=part,
    )


def coarse_resonant(en, K, partition=None):
    """``P_K X o P_K xi - c_K``; flagged when ``N < K^2``."""
    part = en.partition if partition is None else partition
    if K > en.grid.N:
        raise InvalidInput(f"K={K} exceeds N={en.grid.N}")
    if en.grid.N < K * K:
        warnings.warn(f"N={en.grid.N} < K^2={K * K}: outside the quantitative regime", UnreliableEstimate)
    res = besov.resonant(projector_PK(en.X, K), projector_PK(en.xi, K), part)
    return _add_constant(res, -renorm_constant_cK(K))


def cauchy_diagnostic(en, K, gamma, partition=None):
    """``C^gamma_inf`` distance between the area term and its ``P_K`` truncation."""
    part = en.partition if partition is None else partition
    diff = en.area - coarse_resonant(en, K, part)
    return besov.holder_besov_norm(diff, gamma, np.inf, part)


def block_values_at(phi_hat, x, partition=None):
    """``Delta_q phi(x)`` for every block ``q = -1 .. j_max``; ``x`` a torus point."""
    b = besov.blocks(phi_hat, partition)
    ks = centered_axis(phi_hat.size)
    e1 = np.exp(1j * ks * x[0])
    e2 = np.exp(1j * ks * x[1])
    return np.einsum("a,qab,b->q", e1, b, e2).real / FOUR_PI2


def resonant_quadratic_form(grid, mu, x, partition=None):
    """Matrix ``Q`` with ``(X o xi)(x) = eta^T Q eta`` (dense; small ``N`` only).

    Brute-force oracle built site-by-site from the Fourier sums, independent
    of the FFT-based product code.
    """
    part = besov.DyadicPartition() if partition is None else partition
    eps = grid.epsilon
    ks = grid.sites()
    pts = grid.points()
    sym = -laplacian_symbol(grid, mu).reshape(-1)
    inv = np.where(sym > 0, 1.0 / np.where(sym > 0, sym, 1.0), 0.0)
    b = eps * np.exp(-1j * ks @ pts.T)  # F xi(k) = sum_l b[k, l] eta(l)
    ph = np.exp(1j * ks @ np.asarray(x, dtype=float))
    W = part.weights(grid.N).reshape(-1, grid.N**2)
    J = W.shape[0]
    band = (np.abs(np.subtract.outer(np.arange(J), np.arange(J))) <= 1).astype(float)
    psi = W.T @ band @ W  # psi_o(k1, k2)
    left = (ph * inv)[:, None] * b
    right = ph[:, None] * b
    Q = left.T @ psi @ right / FOUR_PI2**2
    return 0.5 * (Q + Q.T)


# ---------------------------------------------------------------------------
# random operator
# ---------------------------------------------------------------------------

def random_operator_apply(u, en, partition=None):
    """``Pi_N[(Pi_N(u < X)) o xi] - P_N[(u < X) o xi]`` with unaliased products."""
    if not u.in_modeset:
        raise InvalidInput("random operator input must be supported in the mode set")
    if u.grid != en.grid:
        raise InvalidInput("input field and noise live on different grids")
    part = en.partition if partition is None else partition
    N = en.grid.N
    ux = besov.paraproduct_lt(u.padded(N), en.X, part)
    folded = pi_N(besov.resonant(pi_N(ux), en.xi, part))
    direct = projector_PK(besov.resonant(ux, en.xi, part), N)
    return folded - direct


def regular_test_field(grid, alpha, rng, partition=None):
    """Real Gaussian field with block ``j`` scaled by ``2^{-j alpha}``, unit ``C^alpha_1`` norm."""
    part = besov.DyadicPartition() if partition is None else partition
    g = dft_lattice(LatticeField(grid, rng.standard_normal((grid.N, grid.N))))
    w = part.weights(grid.N)
    scale = 2.0 ** (-alpha * np.arange(-1, w.shape[0] - 1))
    phi = SpectralField(grid, np.einsum("j,jab->ab", scale, w) * g.coeffs)
    nrm = besov.holder_besov_norm(phi, alpha, 1.0, part)
    return phi * (1.0 / nrm)


def random_operator_norm_estimate(en, alpha, trials, seed=None, partition=None):
    """Max of ``||A_N u||_{C^{2 alpha - 2}_1}`` over random unit test fields.

    A lower bound on the operator norm ``C^alpha_1 -> C^{2 alpha - 2}_1``.
    """
    if not 0.5 < alpha < 1:
        raise InvalidInput(f"alpha must lie in (1/2, 1), got {alpha}")
    part = en.partition if partition is None else partition
    rng = make_rng(seed)
    best = 0.0
    for _ in range(trials):
        u = regular_test_field(en.grid, alpha, rng, part)
        best = max(best, besov.holder_besov_norm(random_operator_apply(u, en, part), 2 * alpha - 2, 1.0, part))
    return best


def clt_variance_se(samples):
    """Sample variance and its standard error ``sqrt((m4 - s^4) / n)``."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    c = x - x.mean()
    s2 = float(np.mean(c**2) * n / (n - 1))
    m4 = float(np.mean(c**4))
    return s2, math.sqrt(max(m4 - s2**2, 0.0) / n)
