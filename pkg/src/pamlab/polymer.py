"""Continuous-time random walks, polymer weights and the polymer transition kernel.

The kernel ``K(s, t) f(x) = u^{f, T-t}(t - s, x) / u^1(T - s, x)`` is built
from two solves of the lattice equation with the eigendecomposition
propagator, so Chapman-Kolmogorov holds to round-off.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .chaos import bootstrap_mean_ci
from .errors import DegenerateMeasure, InvalidInput, UnreliableEstimate
from .rng import make_rng
from .solver import ExactPropagator, InitialCondition, simulate_walks, solve_pam
from .torus import GridSpec, LatticeField, WalkMeasure


@dataclass(frozen=True, eq=False)
class CtrwPath:
    """Rescaled walk on the lattice: start site, jump times and displacements."""

    grid: GridSpec
    start: tuple
    times: np.ndarray
    jumps: np.ndarray
    T: float

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInput("jump times must be strictly increasing")

    def sites(self):
        """Centred site after each jump (periodically wrapped), starting point first."""
        N, h = self.grid.N, self.grid.half
        pos = np.asarray(self.start) + np.vstack([np.zeros((1, 2), dtype=int), np.cumsum(self.jumps, axis=0)])
        return (pos + h) % N - h

    def position(self, t):
        i = int(np.searchsorted(self.times, t, side="right"))
        return tuple(self.sites()[i])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "site1", "site2"])
            for t, s in zip(np.concatenate([[0.0], self.times]), self.sites()):
                w.writerow([repr(float(t)), int(s[0]), int(s[1])])


def sample_ctrw(mu, x0, T, seed=None, grid=None, N=None):
    """One rescaled walk: holding times of rate ``eps^-2 lambda``, jumps ``j`` with law ``mu(j)/lambda``."""
    grid = GridSpec(N) if grid is None else grid
    if T < 0:
        raise InvalidInput(f"horizon must be nonnegative, got {T}")
    rng = make_rng(seed)
    js, ms = mu.jumps()
    rate = mu.jump_rate / grid.epsilon**2
    probs = ms / ms.sum()
    times = []
    t = rng.exponential(1.0 / rate) if rate > 0 else np.inf
    while t < T:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    steps = js[rng.choice(len(js), size=len(times), p=probs)] if times else np.zeros((0, 2), dtype=int)
    return CtrwPath(grid, tuple(int(a) for a in x0), np.array(times), steps, float(T))


def path_weight(path, xi):
    """``exp(int_0^T xi(path(s)) ds)`` with ``xi`` given as centred lattice values."""
    xi = np.asarray(getattr(xi, "values", xi)).real
    h = path.grid.half
    edges = np.concatenate([[0.0], path.times, [path.T]])
    sites = path.sites()
    vals = xi[sites[:, 0] + h, sites[:, 1] + h]
    return float(np.exp(np.dot(vals, np.diff(edges))))


@dataclass(frozen=True)
class PolymerKernelQuery:
    s: float
    t: float
    T: float
    f: object = None

    def __post_init__(self):
        if not 0 <= self.s <= self.t <= self.T:
            raise InvalidInput(f"need 0 <= s <= t <= T, got s={self.s}, t={self.t}, T={self.T}")


def _one_solution(en, horizon):
    if horizon == 0:
        return np.ones((en.grid.N, en.grid.N))
    return solve_pam(en, InitialCondition(), horizon, scheme="exact").final.real


def transition_kernel(en, query):
    """``K_T(s, t) f`` as a lattice field, from two exact solves."""
    grid = en.grid
    f = query.f
    fv = np.ones((grid.N, grid.N)) if f is None else np.asarray(getattr(f, "values", f))
    den = _one_solution(en, query.T - query.s)
    if np.any(den <= 0):
        raise DegenerateMeasure(f"u^1(T - s) has nonpositive values (min {den.min():.3e})")
    start = fv * _one_solution(en, query.T - query.t)
    span = query.t - query.s
    if span == 0:
        num = start
    else:
        ic = InitialCondition("custom", field=LatticeField(grid, start))
        num = solve_pam(en, ic, span, scheme="exact").final
    return LatticeField(grid, num / den)


class KernelFamily:
    """Dense kernel matrices ``K_T(s, t)[x, y]`` for one noise and horizon; rows sum to one."""

    def __init__(self, en, T, renormalize=True):
        self.grid = en.grid
        self.T = T
        xi = en.xi_lattice()
        self.prop = ExactPropagator(en.grid, en.mu, xi - (en.c_N if renormalize else 0.0))

    def one(self, tau):
        return self.prop.matrix(tau).sum(axis=1)

    def matrix(self, s, t):
        PolymerKernelQuery(s, t, self.T)
        den = self.one(self.T - s)
        if np.any(den <= 0):
            raise DegenerateMeasure("u^1 has nonpositive values")
        return self.prop.matrix(t - s) * self.one(self.T - t)[None, :] / den[:, None]


def mc_vs_kernel_check(en, x, T, times, n_paths, seed=None, n_boot=200, level=0.95):
    """Importance-weighted walk marginals against exact kernel marginals.

    Returns
    -------
    dict
        Per time: total-variation distance, its bootstrap percentile
        interval and width; the effective sample size of the weights.
    """
    grid = en.grid
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times <= 0) or np.any(times > T):
        raise InvalidInput("marginal times must lie in (0, T]")
    rng = make_rng(seed)
    xi = en.xi_lattice()
    _, integral, snaps = simulate_walks(grid, en.mu, x, T, n_paths, rng, xi, record=times)
    logw = integral - integral.max()
    w = np.exp(logw)
    ess = float(w.sum() ** 2 / np.sum(w**2))
    if ess < 50:
        warnings.warn(f"effective sample size {ess:.1f} < 50", UnreliableEstimate)
    fam = KernelFamily(en, T)
    x_idx = grid.site_index(x)
    n2 = grid.N**2
    flat = (snaps[..., 0] + grid.half) * grid.N + snaps[..., 1] + grid.half
    report = {"times": times.tolist(), "tv": [], "ci_low": [], "ci_high": [], "ci_width": [],
              "ess": ess, "n_paths": n_paths, "z_estimate": float(np.mean(np.exp(integral)))}
    boot = rng.integers(0, n_paths, size=(n_boot, n_paths))
    a = (1 - level) / 2
    for r, t in enumerate(times):
        exact = fam.matrix(0.0, t)[x_idx]
        emp = np.bincount(flat[r], weights=w, minlength=n2) / w.sum()
        tv = 0.5 * float(np.abs(emp - exact).sum())
        bt = np.empty(n_boot)
        for b in range(n_boot):
            ib = boot[b]
            e = np.bincount(flat[r, ib], weights=w[ib], minlength=n2) / w[ib].sum()
            bt[b] = 0.5 * np.abs(e - exact).sum()
        lo, hi = np.quantile(bt, [a, 1 - a])
        report["tv"].append(tv)
        report["ci_low"].append(float(lo))
        report["ci_high"].append(float(hi))
        report["ci_width"].append(float(hi - lo))
    report["within_3_widths"] = all(tv <= 3 * wd for tv, wd in zip(report["tv"], report["ci_width"]))
    return report


def sequential_kernel_sample(en, x, T, times, n_paths, seed=None):
    """Sample polymer positions on a time grid by chaining kernel rows."""
    grid = en.grid
    fam = KernelFamily(en, T)
    rng = make_rng(seed)
    cur = np.full(n_paths, grid.site_index(x))
    out = []
    prev = 0.0
    for t in np.asarray(times, dtype=float):
        K = fam.matrix(prev, t)
        K = np.clip(K, 0, None)
        cdf = np.cumsum(K / K.sum(axis=1, keepdims=True), axis=1)
        u = rng.random(n_paths)
        cur = np.minimum((cdf[cur] < u[:, None]).sum(axis=1), grid.N**2 - 1)
        out.append(cur.copy())
        prev = t
    sites = grid.sites()
    return np.stack([sites[c] for c in out])
