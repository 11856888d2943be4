"""Time integration of the renormalised lattice parabolic Anderson model.

On lattice points the extension equation reduces to the linear ODE

    d/dt v = Delta_rw^N v + (xi - c) v,

because folding the unaliased product of two extensions gives back the
pointwise lattice product.  The ``strang`` scheme applies the Fourier
diagonal exactly and the potential as an exact pointwise exponential; the
``exact`` scheme diagonalises the dense symmetric generator once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import besov
from .errors import BlowUpError, InvalidInput
from .noise import disorder_values, renorm_constant_cN
from .rng import make_rng, sample_seed
from .torus import (
    GridSpec,
    LatticeField,
    SpectralField,
    WalkMeasure,
    dft_lattice,
    idft_lattice,
    laplacian_symbol,
)

DEFAULT_CAP = 1e12


@dataclass(frozen=True)
class InitialCondition:
    """Initial datum ``u0_N = eps^theta v0_N``.

    ``constant`` uses ``theta = 0``; ``kronecker_delta`` is ``v0 = delta_{l, 0}``
    with ``theta = -2``; ``custom`` takes a :class:`LatticeField` or a
    :class:`SpectralField` supported in the mode set.
    """

    kind: str = "constant"
    c: float = 1.0
    field: object = None
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "kronecker_delta", "custom"):
            raise InvalidInput(f"unknown initial condition {self.kind!r}")
        if self.theta is None:
            object.__setattr__(self, "theta", -2.0 if self.kind == "kronecker_delta" else 0.0)
        if self.kind == "custom" and self.field is None:
            raise InvalidInput("custom initial condition needs a field")
        if isinstance(self.field, SpectralField) and not self.field.in_modeset:
            raise InvalidInput("initial condition must be spectrally supported in the mode set")

    def lattice_values(self, grid):
        eps = grid.epsilon
        if self.kind == "constant":
            v = np.full((grid.N, grid.N), complex(self.c))
        elif self.kind == "kronecker_delta":
            v = np.zeros((grid.N, grid.N), dtype=complex)
            v[grid.half, grid.half] = 1.0
        else:
            fld = self.field
            if fld.grid != grid:
                raise InvalidInput("initial field lives on a different grid")
            v = idft_lattice(fld).values if isinstance(fld, SpectralField) else fld.values
        return eps**self.theta * np.asarray(v, dtype=complex)


@dataclass(frozen=True, eq=False)
class PamTrajectory:
    """Lattice values ``(n_times, N, N)`` of the solution at increasing ``times``."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    noise: object = None

    @property
    def states(self):
        return [self.state(i) for i in range(len(self.times))]

    def state(self, i):
        return dft_lattice(LatticeField(self.grid, self.values[i]))

    def lattice(self, i):
        return LatticeField(self.grid, self.values[i])

    @property
    def final(self):
        return self.values[-1]

    def manifest(self):
        return {"N": self.grid.N, "T": float(self.times[-1]), "times": [float(t) for t in self.times], **self.meta}


# ---------------------------------------------------------------------------
# propagators
# ---------------------------------------------------------------------------

def _std_symbol(grid, mu):
    # Fourier symbol in the 0-based FFT layout of ifftshift(lattice)
    return np.fft.ifftshift(laplacian_symbol(grid, mu))


def stencil_matrix(grid, mu):
    """Dense ``N^2 x N^2`` matrix of ``Delta_rw^N`` on row-major lattice vectors."""
    N = grid.N
    n = N * N
    idx = np.arange(n).reshape(N, N)
    A = np.zeros((n, n))
    for j, m in mu.atoms.items():
        tgt = np.roll(idx, shift=(-j[0], -j[1]), axis=(0, 1))
        np.add.at(A, (idx.reshape(-1), tgt.reshape(-1)), m)
    return A / grid.epsilon**2


class ExactPropagator:
    """``exp(t (Delta_rw^N + diag(V)))`` by symmetric eigendecomposition."""

    def __init__(self, grid, mu, potential):
        self.grid = grid
        G = stencil_matrix(grid, mu) + np.diag(np.asarray(potential, dtype=float).reshape(-1))
        G = 0.5 * (G + G.T)
        self.evals, self.evecs = np.linalg.eigh(G)

    def matrix(self, t):
        return (self.evecs * np.exp(t * self.evals)) @ self.evecs.T

    def apply(self, v, t):
        shape = v.shape
        flat = v.reshape(-1, self.grid.N**2)
        out = ((flat @ self.evecs) * np.exp(t * self.evals)) @ self.evecs.T
        return out.reshape(shape)


def _potential_of(en, renormalize, c):
    xi = en.xi_lattice()
    if c is None:
        c = en.c_N if renormalize else 0.0
    return xi, float(c)


def default_dt(xi, T):
    """Largest ``dt <= T`` with ``dt * ||xi||_inf <= 0.1``."""
    s = float(np.max(np.abs(xi)))
    return T if s == 0 else min(T, 0.1 / s)


def _strang_steps(v, sym_std, V, dt, n_steps, cap, t0):
    half = np.exp(0.5 * dt * sym_std)
    pot = np.exp(dt * V)
    for step in range(n_steps):
        v = np.fft.ifft2(half * np.fft.fft2(v))
        v = v * pot
        v = np.fft.ifft2(half * np.fft.fft2(v))
        nrm = float(np.max(np.abs(v)))
        if not nrm <= cap:
            raise BlowUpError(t0 + (step + 1) * dt, nrm, cap)
    return v


def evolve_lattice(v0, grid, mu, V, times, dt=None, scheme="strang", cap=DEFAULT_CAP):
    """Integrate ``v' = Delta_rw v + V v`` from ``t = 0`` and return values at ``times``.

    ``v0`` and ``V`` are centred lattice arrays with optional leading batch
    axes; ``V`` broadcasts against ``v0``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InvalidInput("output times must be nonnegative and strictly increasing")
    if dt is not None and not dt > 0:
        raise InvalidInput(f"dt must be positive, got {dt}")
    v = np.fft.ifftshift(np.asarray(v0, dtype=complex), axes=(-2, -1))
    Vs = np.fft.ifftshift(np.asarray(V, dtype=float), axes=(-2, -1))
    out = []
    t = 0.0
    if scheme == "exact":
        V = np.asarray(V, dtype=float)
        if V.ndim > 2 and V.shape[0] > 1:
            raise InvalidInput("exact scheme supports a single potential")
        prop = ExactPropagator(grid, mu, V.reshape(grid.N, grid.N))
        v0c = np.asarray(v0, dtype=complex)
        for tk in times:
            vk = prop.apply(v0c, tk)
            nrm = float(np.max(np.abs(vk)))
            if not nrm <= cap:
                raise BlowUpError(tk, nrm, cap)
            out.append(vk)
        return np.stack(out), {"scheme": "exact", "dt": None}
    if scheme != "strang":
        raise InvalidInput(f"unknown scheme {scheme!r}")
    sym = _std_symbol(grid, mu)
    used = []
    for tk in times:
        span = tk - t
        if span > 0:
            step = default_dt(Vs, span) if dt is None else min(dt, span)
            n = max(1, math.ceil(span / step - 1e-12))
            h = span / n
            used.append(h)
            v = _strang_steps(v, sym, Vs, h, n, cap, t)
        out.append(np.fft.fftshift(v, axes=(-2, -1)))
        t = tk
    return np.stack(out), {"scheme": "strang", "dt": max(used) if used else None}


def solve_pam(en, u0, T, dt=None, scheme="strang", times=None, renormalize=True, c=None,
              cap=DEFAULT_CAP):
    """Solve ``du = Delta_rw u + Pi_N(u xi) - c_N u`` up to time ``T``.

    Parameters
    ----------
    en : EnhancedNoise
    u0 : InitialCondition
    T : float
    dt : float, optional
        Time step; by default the largest step with ``dt ||xi||_inf <= 0.1``
        that divides each output interval evenly.
    scheme : {"strang", "exact"}
    times : array_like, optional
        Output times in ``(0, T]``; ``0`` and ``T`` are always included.
    renormalize : bool
        Subtract ``c_N`` (ignored when ``c`` is given explicitly).

    Returns
    -------
    PamTrajectory
    """
    if not T > 0:
        raise InvalidInput(f"T must be positive, got {T}")
    grid = en.grid
    xi, cc = _potential_of(en, renormalize, c)
    grid_t = {0.0, float(T)} | ({float(t) for t in times} if times is not None else set())
    out_t = np.array(sorted(t for t in grid_t if 0 <= t <= T))
    if dt is None and scheme == "strang":
        dt = default_dt(xi, T)
    vals, meta = evolve_lattice(u0.lattice_values(grid), grid, en.mu, xi - cc, out_t, dt, scheme, cap)
    meta.update({"c": cc, "seed": None if en.potential is None else en.potential.seed})
    return PamTrajectory(grid, out_t, vals, meta, en)


# ---------------------------------------------------------------------------
# Feynman-Kac
# ---------------------------------------------------------------------------

def simulate_walks(grid, mu, x0, t, n_paths, rng, xi=None, record=None):
    """Vectorised rescaled walks on the lattice.

    Jumps arrive at rate ``eps^-2 lambda`` and move by ``j`` with probability
    ``mu(j) / lambda``.  Returns the final site indices ``(n, 2)`` (centred),
    the time integral of ``xi`` along each path and, if ``record`` lists
    times, the positions at those times ``(len(record), n, 2)``.
    """
    js, ms = mu.jumps()
    lam = mu.jump_rate
    rate = lam / grid.epsilon**2
    probs = ms / ms.sum()
    N, h = grid.N, grid.half
    pos = np.tile(np.asarray(x0, dtype=int) + h, (n_paths, 1)) % N
    integral = np.zeros(n_paths)
    clock = np.zeros(n_paths)
    rec_t = np.asarray(record if record is not None else [], dtype=float)
    snaps = np.zeros((rec_t.size, n_paths, 2), dtype=int)
    alive = np.ones(n_paths, dtype=bool)
    while alive.any():
        idx = np.nonzero(alive)[0]
        hold = rng.exponential(1.0 / rate, size=idx.size)
        end = np.minimum(clock[idx] + hold, t)
        if xi is not None:
            integral[idx] += xi[pos[idx, 0], pos[idx, 1]] * (end - clock[idx])
        for r, tr in enumerate(rec_t):
            hit = (clock[idx] <= tr) & (tr < end) | ((tr == t) & (end == t))
            snaps[r, idx[hit]] = pos[idx[hit]]
        jumped = clock[idx] + hold < t
        moving = idx[jumped]
        step = js[rng.choice(len(js), size=moving.size, p=probs)]
        pos[moving] = (pos[moving] + step) % N
        clock[idx] = end
        alive[idx[~jumped]] = False
    return pos - h, integral, snaps - h


def feynman_kac_estimate(en, u0, t, x, n_paths, seed=None, renormalize=True, c=None):
    """``E[u0(B_t) exp(int_0^t xi(B_s) ds)] e^{-c t}`` by Monte Carlo.

    Returns
    -------
    dict with ``mean`` and ``se``
    """
    if n_paths < 2:
        raise InvalidInput(f"need at least 2 paths, got {n_paths}")
    if not t > 0:
        raise InvalidInput(f"t must be positive, got {t}")
    grid = en.grid
    xi, cc = _potential_of(en, renormalize, c)
    rng = make_rng(seed)
    end, integral, _ = simulate_walks(grid, en.mu, x, t, n_paths, rng, xi)
    u0v = u0.lattice_values(grid)
    vals = u0v[end[:, 0] + grid.half, end[:, 1] + grid.half] * np.exp(integral - cc * t)
    return {"mean": complex(vals.mean()), "se": float(np.std(vals, ddof=1) / np.sqrt(n_paths)), "n_paths": n_paths}


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

OBSERVABLES = ("mean", "center", "besov_norm")


def _observables(vals, grid, which, partition):
    out = {}
    if "mean" in which:
        # (2 pi)^-2 int E_N u = mean of the lattice values
        out["mean"] = vals.real.mean(axis=(-2, -1))
    if "center" in which:
        out["center"] = vals[:, grid.half, grid.half].real
    if "besov_norm" in which:
        out["besov_norm"] = np.array([
            besov.besov_norm(dft_lattice(LatticeField(grid, v)), 0.0, 1.0, np.inf, partition) for v in vals
        ])
    return out


def observable_samples(spec, N, T=0.5, samples=500, seed=0, observables=OBSERVABLES, mu=None,
                       u0=None, experiment="pam-convergence", partition=None, batch=100, dt=None):
    """Scalar observables of ``u_N(T)`` for ``samples`` independent disorders (``spec=None``: none)."""
    mu = WalkMeasure.nearest_neighbor() if mu is None else mu
    u0 = InitialCondition() if u0 is None else u0
    part = besov.DyadicPartition() if partition is None else partition
    grid = GridSpec(N)
    cN = renorm_constant_cN(N)
    etas = np.stack([
        np.zeros(N * N) if spec is None
        else disorder_values(spec, N * N, make_rng(sample_seed(seed, experiment, N, i)))
        for i in range(samples)
    ]).reshape(samples, N, N)
    # one step size for the whole ensemble so results do not depend on the batching
    dt = default_dt(etas / grid.epsilon, T) if dt is None else dt
    obs = {k: [] for k in observables}
    for s in range(0, samples, batch):
        V = etas[s:s + batch] / grid.epsilon - cN
        v0 = np.broadcast_to(u0.lattice_values(grid), V.shape)
        vals, _ = evolve_lattice(v0, grid, mu, V, [T], dt=dt)
        for k, v in _observables(vals[-1], grid, observables, part).items():
            obs[k].append(v)
    return {k: np.concatenate(v) for k, v in obs.items()}


def ks_chain(samples_by_n, Ns):
    """KS distances between consecutive ``N`` and whether they never increase."""
    d = [float(stats.ks_2samp(samples_by_n[a], samples_by_n[b]).statistic) for a, b in zip(Ns, Ns[1:])]
    return {"distances": d, "nonincreasing": all(y <= x for x, y in zip(d, d[1:]))}


def convergence_study(spec, Ns, T=0.5, samples=500, seed=0, observables=OBSERVABLES, mu=None,
                      u0=None, experiment="pam-convergence", partition=None, batch=100):
    """Empirical laws of scalar observables of ``u_N(T)`` across ``Ns``.

    Returns per-``N`` samples and means, and Kolmogorov-Smirnov distances
    between consecutive ``N`` with a non-increasing-trend flag per observable.
    ``spec=None`` means zero disorder.
    """
    Ns = [int(n) for n in Ns]
    if len(Ns) < 3:
        raise InvalidInput("convergence study needs at least three grid sizes")
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise InvalidInput("grid sizes must increase")
    per_n = {
        N: observable_samples(spec, N, T, samples, seed, observables, mu, u0, experiment, partition, batch)
        for N in Ns
    }
    ks = {k: ks_chain({N: per_n[N][k] for N in Ns}, Ns) for k in observables}
    return {
        "Ns": Ns,
        "T": T,
        "samples": samples,
        "seed": seed,
        "ks": ks,
        "means": {k: [float(per_n[N][k].mean()) for N in Ns] for k in observables},
        "values": per_n,
    }
