"""Lattice Anderson Hamiltonian ``H = -Delta_rw + eps diag(eta)`` and its low spectrum.

``Delta_rw`` here is the unscaled stencil ``sum_j mu(j) (v(x + j) - v(x))``;
the shifted values ``eps^-2 Lambda + c_N`` carry the continuum scale.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse import linalg as spla

from .errors import InvalidInput, SolverFailure
from .noise import disorder_values, renorm_constant_cN
from .rng import make_rng, sample_seed
from .torus import GridSpec, WalkMeasure, validate_walk_measure

DENSE_MAX_N = 15


class Hamiltonian:
    """Matrix-free symmetric operator on row-major lattice vectors."""

    def __init__(self, grid, eta, mu):
        self.grid = grid
        self.mu = mu
        self.eta = np.asarray(getattr(eta, "values", eta), dtype=float).reshape(grid.N, grid.N)
        self.n = grid.N**2

    def apply(self, v):
        N = self.grid.N
        V = np.asarray(v).reshape((N, N) + np.shape(v)[1:])
        out = np.zeros_like(V, dtype=np.result_type(V, float))
        for j, m in self.mu.atoms.items():
            out -= m * np.roll(V, shift=(-j[0], -j[1]), axis=(0, 1))
        pot = (self.grid.epsilon * self.eta).reshape((N, N) + (1,) * (V.ndim - 2))
        out += pot * V
        return out.reshape(np.shape(v))

    def operator(self):
        return spla.LinearOperator((self.n, self.n), matvec=self.apply, matmat=self.apply, dtype=float)

    def sparse(self):
        N = self.grid.N
        idx = np.arange(self.n).reshape(N, N)
        rows, cols, vals = [], [], []
        for j, m in self.mu.atoms.items():
            tgt = np.roll(idx, shift=(-j[0], -j[1]), axis=(0, 1))
            rows.append(idx.reshape(-1))
            cols.append(tgt.reshape(-1))
            vals.append(np.full(self.n, -m))
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n, self.n)).tocsr()
        return H + sp.diags(self.grid.epsilon * self.eta.reshape(-1))

    def dense(self):
        return self.sparse().toarray()


def assemble_hamiltonian(eta, mu=None, grid=None):
    """Build ``H`` for a :class:`Potential` (or raw lattice array with ``grid``)."""
    grid = getattr(eta, "grid", grid)
    if grid is None:
        raise InvalidInput("a raw potential array needs its grid")
    mu = WalkMeasure.nearest_neighbor() if mu is None else mu
    validate_walk_measure(mu).require()
    return Hamiltonian(grid, eta, mu)


def _residuals(H, lam, vecs):
    R = H.apply(vecs) - vecs * lam[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vecs, axis=0)


def _block_shift_invert(H, k, tol, maxiter, rng):
    # LOBPCG preconditioned by an exact sparse solve of (H - sigma); a block
    # method, so degenerate eigenspaces are resolved in full
    A = H.sparse().tocsc()
    sigma = H.grid.epsilon * H.eta.min() - 0.05
    lu = spla.splu((A - sigma * sp.identity(H.n, format="csc")).tocsc())
    M = spla.LinearOperator(A.shape, matvec=lu.solve, matmat=lu.solve, dtype=float)
    X = rng.standard_normal((H.n, min(H.n, k + 4)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        lam, vecs = spla.lobpcg(A, X, M=M, largest=False, tol=tol * 0.1, maxiter=maxiter)
    return lam, vecs


def lowest_eigenvalues(H, k, tol=1e-8, method="auto", return_vectors=False, seed=0):
    """The ``k`` smallest eigenvalues, ascending, with residual certificates.

    Parameters
    ----------
    method : {"auto", "dense", "block", "shift-invert", "lanczos"}
        ``auto`` uses dense diagonalisation for ``N <= 15`` and ``block``
        otherwise.  ``block`` is LOBPCG with a sparse shift-invert
        preconditioner.  ``shift-invert`` and ``lanczos`` are single-vector
        ARPACK runs; they can miss copies of exactly degenerate eigenvalues.
    """
    if k < 1 or k > H.n:
        raise InvalidInput(f"k must lie in [1, {H.n}], got {k}")
    if method not in ("auto", "dense", "block", "shift-invert", "lanczos"):
        raise InvalidInput(f"unknown eigensolver method {method!r}")
    if method == "auto":
        method = "dense" if H.grid.N <= DENSE_MAX_N else "block"
    if method != "dense" and 5 * (k + 4) >= H.n:
        method = "dense"
    maxiter = 10 * H.n
    try:
        if method == "dense":
            lam, vecs = np.linalg.eigh(H.dense())
        elif method == "block":
            lam, vecs = _block_shift_invert(H, k, tol, maxiter, make_rng(seed))
        elif method == "shift-invert":
            sigma = H.grid.epsilon * H.eta.min() - 1.0
            lam, vecs = spla.eigsh(H.sparse().tocsc(), k=k, sigma=sigma, which="LM", tol=tol * 1e-2,
                                   maxiter=maxiter)
        else:
            lam, vecs = spla.eigsh(H.operator(), k=k, which="SA", tol=tol * 1e-2, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        res = _residuals(H, exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else None
        raise SolverFailure(f"eigensolver did not converge within {maxiter} iterations", res) from exc
    order = np.argsort(lam)[:k]
    lam, vecs = lam[order], vecs[:, order]
    res = _residuals(H, lam, vecs)
    if np.any(res > tol):
        raise SolverFailure(f"residual {res.max():.2e} exceeds tolerance {tol:.1e}", res)
    if return_vectors:
        return lam, vecs, res
    return lam


@dataclass(frozen=True)
class SpectrumSample:
    N: int
    seed: object
    raw: np.ndarray
    shifted: np.ndarray

    def rows(self):
        seed = self.seed if np.isscalar(self.seed) else "-".join(str(s) for s in self.seed)
        return [(self.N, seed, j + 1, float(a), float(b)) for j, (a, b) in enumerate(zip(self.raw, self.shifted))]


def spectrum_sample(grid, eta, k, mu=None, seed=None, tol=1e-8, method="auto"):
    H = assemble_hamiltonian(eta, mu, grid)
    raw = lowest_eigenvalues(H, k, tol, method)
    return SpectrumSample(grid.N, seed, raw, raw / grid.epsilon**2 + renorm_constant_cN(grid.N))


def spectrum_statistics(spec, Ns, k, samples, seed=0, mu=None, tol=1e-8, experiment="spectrum",
                        min_samples=200):
    """Shifted low spectrum across disorder for each ``N``.

    Reports KS distances between consecutive ``N`` for every coordinate,
    the mean unshifted ``eps^-2 Lambda_1`` (expected to drift like ``-c_N``)
    and the mean shifted values.  ``spec=None`` means zero disorder.
    """
    Ns = [int(n) for n in Ns]
    if len(Ns) < 3:
        raise InvalidInput("spectrum statistics need at least three grid sizes")
    if samples < min_samples:
        raise InvalidInput(f"need at least {min_samples} samples, got {samples}")
    per_n = {}
    for N in Ns:
        grid = GridSpec(N)
        rows = []
        for i in range(samples):
            s = sample_seed(seed, experiment, N, i)
            eta = np.zeros(N * N) if spec is None else disorder_values(spec, N * N, make_rng(s))
            rows.append(spectrum_sample(grid, eta, k, mu, s, tol))
        per_n[N] = rows
    shifted = {N: np.array([r.shifted for r in per_n[N]]) for N in Ns}
    unshifted = {N: np.array([r.raw for r in per_n[N]]) / GridSpec(N).epsilon**2 for N in Ns}
    ks = []
    for j in range(k):
        d = [float(stats.ks_2samp(shifted[a][:, j], shifted[b][:, j]).statistic) for a, b in zip(Ns, Ns[1:])]
        ks.append({"distances": d, "nonincreasing": all(y <= x for x, y in zip(d, d[1:]))})
    m1 = [float(unshifted[N][:, 0].mean()) for N in Ns]
    cN = [renorm_constant_cN(N) for N in Ns]
    return {
        "Ns": Ns, "k": k, "samples": samples, "seed": seed,
        "ks": ks,
        "mean_unshifted_first": m1,
        "unshifted_decreasing": all(b < a for a, b in zip(m1, m1[1:])),
        "c_N": cN,
        "mean_shifted": [shifted[N].mean(axis=0).tolist() for N in Ns],
        "samples_by_N": per_n,
    }
