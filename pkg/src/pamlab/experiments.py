"""Experiment configuration, orchestration and report emission.

Every disorder sample of every grid size is an independent job keyed by
``(N, index)``; its random stream comes from ``(master seed, experiment, N,
index)``, so results do not depend on scheduling.  Outputs are sorted
before they are written.
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, noise, polymer, solver, spectrum
from .chaos import ChaosKernel, moment_bound_check
from .errors import InvalidInput
from .io import write_csv, write_json
from .rng import make_rng, sample_seed
from .solver import ks_chain
from .torus import GridSpec, WalkMeasure, extension_eval, validate_walk_measure

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("noise-diagnostics", "pam-convergence", "operator-norm", "chaos-moments", "polymer", "spectrum")


class ConfigError(InvalidInput):
    """Invalid configuration; ``errors`` maps field names to messages."""

    def __init__(self, errors):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {v}" for k, v in errors.items()))


@dataclass
class ExperimentConfig:
    experiment: str
    Ns: list = field(default_factory=lambda: [9, 27, 81])
    samples: int = 100
    seed: int = 0
    kind: str = "iid"
    distribution: str = "gaussian"
    walk: object = "nearest-neighbor"
    T: float = 0.5
    dt: float | None = None
    k: int = 3
    alpha: float = 0.75
    trials: int = 50
    K: list = field(default_factory=lambda: [3, 5, 9])
    gamma: float = -0.5
    p: float = 4.0
    n_paths: int = 100_000
    times: list = field(default_factory=lambda: [0.25, 0.5])
    x: list = field(default_factory=lambda: [0, 0])
    out: str = "pamlab-out"

    def as_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps({k: v for k, v in self.as_dict().items() if k != "out"}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def potential_spec(self):
        return noise.PotentialSpec(kind=self.kind, distribution=self.distribution)

    def walk_measure(self):
        return parse_walk(self.walk)


def parse_walk(walk):
    """``"nearest-neighbor"``, ``{"range_two": [a, b]}`` or ``{"atoms": [[j1, j2, mass], ...]}``."""
    if walk in (None, "nearest-neighbor", "nn"):
        return WalkMeasure.nearest_neighbor()
    if isinstance(walk, dict) and "range_two" in walk:
        a, b = walk["range_two"]
        return WalkMeasure.range_two(float(a), float(b))
    if isinstance(walk, dict) and "atoms" in walk:
        return WalkMeasure({(int(a), int(b)): float(m) for a, b, m in walk["atoms"]})
    raise InvalidInput(f"unrecognised walk description {walk!r}")


def validate_config(raw):
    """Build an :class:`ExperimentConfig`, collecting every field-level error first."""
    errors = {}
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    for u in sorted(unknown):
        errors[u] = "unknown field"
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        errors["experiment"] = f"must be one of {', '.join(EXPERIMENTS)}"
    try:
        cfg = ExperimentConfig(**{k: v for k, v in raw.items() if k in known and k != "experiment"},
                               experiment=exp)
    except TypeError as exc:
        errors["config"] = str(exc)
        raise ConfigError(errors)

    def check(name, ok, msg):
        if not ok:
            errors.setdefault(name, msg)

    Ns = cfg.Ns
    check("Ns", isinstance(Ns, list) and len(Ns) >= 1 and all(isinstance(n, int) and n >= 3 and n % 2 for n in Ns),
          "grid sizes must be odd integers >= 3")
    if "Ns" not in errors:
        check("Ns", all(b > a for a, b in zip(Ns, Ns[1:])), "grid sizes must be strictly increasing")
    check("samples", isinstance(cfg.samples, int) and cfg.samples >= 1, "must be a positive integer")
    check("seed", isinstance(cfg.seed, int) and cfg.seed >= 0, "must be a nonnegative integer")
    check("T", isinstance(cfg.T, (int, float)) and cfg.T > 0, "must be positive")
    check("dt", cfg.dt is None or (isinstance(cfg.dt, (int, float)) and cfg.dt > 0), "must be positive")
    check("k", isinstance(cfg.k, int) and cfg.k >= 1, "must be a positive integer")
    if "Ns" not in errors and "k" not in errors:
        check("k", cfg.k <= min(Ns) ** 2, "exceeds the number of lattice sites")
    check("alpha", isinstance(cfg.alpha, (int, float)) and 0.5 < cfg.alpha < 1, "must lie in (1/2, 1)")
    check("trials", isinstance(cfg.trials, int) and cfg.trials >= 1, "must be a positive integer")
    check("K", isinstance(cfg.K, list) and all(isinstance(v, int) and v >= 1 for v in cfg.K), "must be positive integers")
    check("p", isinstance(cfg.p, (int, float)) and cfg.p >= 2, "must be at least 2")
    check("n_paths", isinstance(cfg.n_paths, int) and cfg.n_paths >= 2, "must be at least 2")
    check("times", isinstance(cfg.times, list) and len(cfg.times) >= 1
          and all(isinstance(t, (int, float)) and t > 0 for t in cfg.times), "must be positive times")
    if cfg.experiment == "polymer" and "times" not in errors and "T" not in errors:
        check("times", all(t <= cfg.T for t in cfg.times), "must be times in (0, T]")
    check("x", isinstance(cfg.x, list) and len(cfg.x) == 2 and all(isinstance(v, int) for v in cfg.x),
          "must be an integer site [l1, l2]")
    try:
        cfg.potential_spec()
    except InvalidInput as exc:
        errors["distribution" if "distribution" in str(exc) else "kind"] = str(exc)
    try:
        report = validate_walk_measure(cfg.walk_measure())
        if not report.passed:
            errors["walk"] = "walk measure fails checks: " + ", ".join(report.failures())
    except InvalidInput as exc:
        errors["walk"] = str(exc)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path):
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        return json.loads(text)
    return tomllib.loads(text.decode("utf-8"))


# ---------------------------------------------------------------------------
# jobs
# ---------------------------------------------------------------------------

def _potential(cfg, N, index):
    grid = GridSpec(N)
    seed = sample_seed(cfg.seed, cfg.experiment, N, index)
    return noise.sample_potential(cfg.potential_spec(), grid, seed)


def _white_noise_test(x1, x2):
    return np.exp(np.cos(x1) + np.sin(x2))


def _job_noise(cfg, N, index):
    eta = _potential(cfg, N, index)
    en = noise.enhanced_noise(eta, cfg.walk_measure())
    origin = np.zeros(2)
    row = {
        "resonant_at_0": float(np.real(extension_eval(en.resonant, origin))),
        "white_noise_pairing": float(noise.white_noise_pairing(eta.values[None], eta.grid, _white_noise_test)[0]),
        "blocks": noise.block_values_at(en.area, origin, en.partition).tolist(),
    }
    cauchy = {}
    for K in cfg.K:
        if K <= N and K * K <= N:
            cauchy[K] = noise.cauchy_diagnostic(en, K, cfg.gamma)
    row["cauchy"] = cauchy
    return row


def _job_operator(cfg, N, index):
    en = noise.enhanced_noise(_potential(cfg, N, index), cfg.walk_measure())
    seed = sample_seed(cfg.seed + 1, cfg.experiment, N, index)
    return {"estimate": noise.random_operator_norm_estimate(en, cfg.alpha, cfg.trials, seed)}


def _job_spectrum(cfg, N, index):
    eta = _potential(cfg, N, index)
    s = spectrum.spectrum_sample(eta.grid, eta, cfg.k, cfg.walk_measure(), eta.seed)
    return {"raw": s.raw.tolist(), "shifted": s.shifted.tolist()}


def _job_polymer(cfg, N, index):
    en = noise.enhanced_noise(_potential(cfg, N, index), cfg.walk_measure())
    seed = sample_seed(cfg.seed + 1, cfg.experiment, N, index)
    rep = polymer.mc_vs_kernel_check(en, tuple(cfg.x), cfg.T, cfg.times, cfg.n_paths, seed)
    return rep


JOBS = {
    "noise-diagnostics": _job_noise,
    "operator-norm": _job_operator,
    "spectrum": _job_spectrum,
    "polymer": _job_polymer,
}


def _run_job(args):
    name, cfg, N, index = args
    return (N, index), JOBS[name](cfg, N, index)


def worker_count():
    env = os.environ.get("PAMLAB_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise InvalidInput(f"PAMLAB_THREADS must be an integer, got {env!r}")
    return n


def run_jobs(cfg, n_samples=None):
    """Run every ``(N, index)`` job; returns results sorted by key."""
    n_samples = cfg.samples if n_samples is None else n_samples
    jobs = [(cfg.experiment, cfg, N, i) for N in cfg.Ns for i in range(n_samples)]
    workers = worker_count()
    if workers <= 1 or len(jobs) <= 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return dict(sorted(results))


# ---------------------------------------------------------------------------
# experiment drivers: each returns {filename: (kind, payload)}
# ---------------------------------------------------------------------------

def run_noise(cfg):
    res = run_jobs(cfg)
    mu = cfg.walk_measure()
    rows, plot, summary = [], [], {}
    for N in cfg.Ns:
        recs = [res[(N, i)] for i in range(cfg.samples)]
        r0 = np.array([r["resonant_at_0"] for r in recs])
        wn = np.array([r["white_noise_pairing"] for r in recs])
        J = min(len(r["blocks"]) for r in recs)
        B = np.array([r["blocks"][:J] for r in recs])
        ct = noise.renorm_constant_tilde(N, mu)
        var, var_se = noise.clt_variance_se(wn) if len(wn) > 2 else (float("nan"), float("nan"))
        block_var = [noise.clt_variance_se(B[:, q]) for q in range(J)] if len(recs) > 2 else []
        summary[str(N)] = {
            "c_N": noise.renorm_constant_cN(N),
            "c_tilde_N": ct,
            "resonant_mean": float(r0.mean()),
            "resonant_se": float(r0.std(ddof=1) / np.sqrt(len(r0))) if len(r0) > 1 else float("nan"),
            "block_variance": [v for v, _ in block_var],
            "block_variance_se": [s for _, s in block_var],
            "white_noise_variance": var,
            "white_noise_variance_se": var_se,
            "white_noise_normality_p": float(stats.normaltest(wn).pvalue) if len(wn) >= 20 else float("nan"),
            "cauchy_mean": {str(K): float(np.mean([r["cauchy"][K] for r in recs])) for K in recs[0]["cauchy"]},
        }
        for i, r in enumerate(recs):
            rows.append((N, i, r["resonant_at_0"], r["white_noise_pairing"]))
        for q, (v, _) in enumerate(block_var):
            plot.append((q - 1, v, f"block_variance_N{N}"))
        for K, m in summary[str(N)]["cauchy_mean"].items():
            plot.append((int(K), m, f"cauchy_distance_N{N}"))
    return {
        "noise_samples.csv": ("csv", (["N", "sample", "resonant_at_origin", "white_noise_pairing"], rows)),
        "noise_summary.json": ("json", summary),
        "plot.csv": ("csv", (["x", "y", "series"], plot)),
    }


def run_pam(cfg):
    Ns = cfg.Ns
    values = {
        N: solver.observable_samples(cfg.potential_spec(), N, cfg.T, cfg.samples, cfg.seed,
                                     mu=cfg.walk_measure(), experiment=cfg.experiment, dt=cfg.dt)
        for N in Ns
    }
    rep = {
        "values": values,
        "ks": {k: ks_chain({N: values[N][k] for N in Ns}, Ns) for k in solver.OBSERVABLES},
        "means": {k: [float(values[N][k].mean()) for N in Ns] for k in solver.OBSERVABLES},
    }
    rows, plot = [], []
    for N in Ns:
        for k in solver.OBSERVABLES:
            for i, v in enumerate(rep["values"][N][k]):
                rows.append((N, i, k, float(v)))
            plot.append((N, float(np.mean(rep["values"][N][k])), f"mean_{k}"))
    summary = {"ks": rep["ks"], "means": rep["means"], "Ns": Ns, "T": cfg.T}
    return {
        "pam_observables.csv": ("csv", (["N", "sample", "observable", "value"], rows)),
        "pam_summary.json": ("json", summary),
        "plot.csv": ("csv", (["x", "y", "series"], plot)),
    }


def run_operator(cfg):
    res = run_jobs(cfg)
    rows, plot = [], []
    med = {}
    for N in cfg.Ns:
        est = [res[(N, i)]["estimate"] for i in range(cfg.samples)]
        med[N] = float(np.median(est))
        rows.extend((N, i, e) for i, e in enumerate(est))
        plot.append((N, med[N], "median_estimate"))
    summary = {"median": {str(N): m for N, m in med.items()}, "alpha": cfg.alpha,
               "reference_rate_exponent": cfg.alpha - 1.0}
    if len(cfg.Ns) >= 2 and all(m > 0 for m in med.values()):
        slope = np.polyfit(np.log(cfg.Ns), np.log([med[N] for N in cfg.Ns]), 1)[0]
        summary["loglog_slope"] = float(slope)
    summary["strictly_decreasing"] = all(med[b] < med[a] for a, b in zip(cfg.Ns, cfg.Ns[1:]))
    return {
        "operator_norm.csv": ("csv", (["N", "sample", "estimate"], rows)),
        "operator_norm_summary.json": ("json", summary),
        "plot.csv": ("csv", (["x", "y", "series"], plot)),
    }


def _chaos_kernels(n_sites, rng):
    A = rng.standard_normal((n_sites, n_sites))
    A = A + A.T
    np.fill_diagonal(A, 0)
    band = np.zeros((n_sites, n_sites))
    i = np.arange(n_sites - 1)
    band[i, i + 1] = band[i + 1, i] = 1.0
    v = rng.standard_normal(n_sites)
    rank1 = np.outer(v, v)
    np.fill_diagonal(rank1, 0)
    return {
        "order1_gaussian": ChaosKernel(1, rng.standard_normal(n_sites)),
        "order2_gaussian": ChaosKernel(2, A),
        "order2_band": ChaosKernel(2, band),
        "order2_rank1": ChaosKernel(2, rank1),
    }


def run_chaos(cfg):
    spec = cfg.potential_spec()
    rows, reports = [], {}
    for N in cfg.Ns:
        n_sites = min(N * N, 81)
        kernels = _chaos_kernels(n_sites, make_rng(sample_seed(cfg.seed, cfg.experiment, N, 0)))
        for j, (name, f) in enumerate(sorted(kernels.items())):
            rep = moment_bound_check(f, spec, cfg.p, max(cfg.samples, 500),
                                     sample_seed(cfg.seed, cfg.experiment, N, j + 1))
            reports[f"N{N}_{name}"] = rep.as_dict()
            rows.append((N, name, rep.n, rep.p, rep.lhs, rep.rhs, rep.ratio, rep.ci_low, rep.ci_high))
    return {
        "chaos_reports.json": ("json", reports),
        "chaos_reports.csv": ("csv", (["N", "kernel", "n", "p", "lhs", "rhs", "ratio", "ci_low", "ci_high"], rows)),
    }


def run_polymer(cfg):
    res = run_jobs(cfg)
    rows, plot = [], []
    for N in cfg.Ns:
        for i in range(cfg.samples):
            r = res[(N, i)]
            for t, tv, lo, hi in zip(r["times"], r["tv"], r["ci_low"], r["ci_high"]):
                rows.append((N, i, t, tv, lo, hi, r["ess"]))
                plot.append((t, tv, f"tv_N{N}_sample{i}"))
    return {
        "polymer_tv.csv": ("csv", (["N", "sample", "t", "tv", "ci_low", "ci_high", "ess"], rows)),
        "plot.csv": ("csv", (["x", "y", "series"], plot)),
    }


def run_spectrum(cfg):
    res = run_jobs(cfg)
    rows, plot = [], []
    shifted = {}
    for N in cfg.Ns:
        shifted[N] = np.array([res[(N, i)]["shifted"] for i in range(cfg.samples)])
        for i in range(cfg.samples):
            seed = "-".join(str(s) for s in sample_seed(cfg.seed, cfg.experiment, N, i))
            r = res[(N, i)]
            for j, (a, b) in enumerate(zip(r["raw"], r["shifted"])):
                rows.append((N, seed, j + 1, a, b))
        for j in range(cfg.k):
            plot.append((N, float(shifted[N][:, j].mean()), f"mean_shifted_{j + 1}"))
    summary = {"Ns": cfg.Ns, "k": cfg.k}
    if len(cfg.Ns) >= 2:
        summary["ks"] = [ks_chain({N: shifted[N][:, j] for N in cfg.Ns}, cfg.Ns) for j in range(cfg.k)]
    summary["mean_unshifted_first"] = [
        float(np.mean([res[(N, i)]["raw"][0] for i in range(cfg.samples)]) / GridSpec(N).epsilon**2) for N in cfg.Ns
    ]
    return {
        "spectrum.csv": ("csv", (["N", "seed", "j", "lambda_raw", "lambda_shifted"], rows)),
        "spectrum_summary.json": ("json", summary),
        "plot.csv": ("csv", (["x", "y", "series"], plot)),
    }


DRIVERS = {
    "noise-diagnostics": ("noise", "enhanced_noise", run_noise),
    "pam-convergence": ("solver", "convergence_study", run_pam),
    "operator-norm": ("noise", "random_operator_norm_estimate", run_operator),
    "chaos-moments": ("chaos", "moment_bound_check", run_chaos),
    "polymer": ("polymer", "mc_vs_kernel_check", run_polymer),
    "spectrum": ("spectrum", "lowest_eigenvalues", run_spectrum),
}


def run(cfg):
    """Execute one experiment and write its artifacts plus ``MANIFEST.json``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    module, operation, driver = DRIVERS[cfg.experiment]
    t0 = time.time()
    artifacts = driver(cfg)
    files = {}
    for name, (kind, payload) in sorted(artifacts.items()):
        if kind == "csv":
            write_csv(out / name, *payload)
        else:
            write_json(out / name, payload)
        files[name] = {"module": module, "operation": operation}
    manifest = {
        "software": "pamlab",
        "version": __version__,
        "experiment": cfg.experiment,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "master_seed": cfg.seed,
        "seed_rule": "per-sample seed = (master, crc32(experiment), N, sample index)",
        "files": files,
        "wall_clock_seconds": time.time() - t0,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    write_json(out / "MANIFEST.json", manifest)
    return manifest
