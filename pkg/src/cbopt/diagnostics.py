"""Parameter health checks and convergence diagnostics.

The solver contracts pairwise particle distances at a geometric rate when
its parameters satisfy three conditions:

* ``sigma > 0``
* ``2*lam > sigma**2``                     (drift dominates the noise)
* ``0 < h < (2*lam - sigma**2) / lam**2``  (step small enough)

The associated decay rate is ``m = 2*lam - lam**2*h - sigma**2``; a
positive ``m`` makes ``exp(-n*h*m)`` an upper envelope for the mean
squared pairwise distance.  ``check_params`` classifies a parameter set as
Satisfied / Boundary (``2*lam == sigma**2`` exactly) / Violated, and never
blocks a run: callers decide what to do with the verdict.

``decay_experiment`` measures the envelope empirically over many seeded
runs; ``laplace_sweep`` measures how fast the consensus point concentrates
on the best particle as beta grows; ``error_trace`` attaches per-iteration
distances to a reference point onto an existing run trace.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    CboParams,
    Ensemble,
    RunTrace,
    _advance,
    consensus_point,
    init_ensemble,
    mean_pairwise_sq,
)
from .errors import ConfigurationError
from .metaio import fmt_float

__all__ = [
    "Verdict",
    "ParamReport",
    "check_params",
    "pairwise_step_factor",
    "summary_text",
    "DecayReport",
    "decay_experiment",
    "LaplacePoint",
    "laplace_sweep",
    "write_laplace_csv",
    "error_trace",
    "write_error_csv",
]


class Verdict(enum.Enum):
    SATISFIED = "satisfied"
    BOUNDARY = "boundary"
    VIOLATED = "violated"


@dataclass(frozen=True)
class ParamReport:
    """Decay-rate and condition checks for one parameter set."""

    m: float
    cond_sigma: bool
    cond_drift: bool
    cond_h: bool
    verdict: Verdict


def check_params(params: CboParams) -> ParamReport:
    """Classify parameters against the contraction conditions.

    ``m`` is evaluated as ``(2*lam - sigma**2) - lam**2*h``: grouping the
    cancellation-prone pair first keeps the boundary case ``2*lam ==
    sigma**2`` exact in floating point (the result is then exactly
    ``-lam**2*h``).
    """
    two_lam = 2.0 * params.lam
    sig_sq = params.sigma**2
    m = (two_lam - sig_sq) - params.lam**2 * params.h
    cond_sigma = params.sigma > 0
    cond_drift = two_lam > sig_sq
    cond_h = bool(cond_drift and 0 < params.h < (two_lam - sig_sq) / params.lam**2)
    if cond_sigma and cond_drift and cond_h:
        verdict = Verdict.SATISFIED
    elif two_lam == sig_sq:
        verdict = Verdict.BOUNDARY
    else:
        verdict = Verdict.VIOLATED
    return ParamReport(m, cond_sigma, cond_drift, cond_h, verdict)


def pairwise_step_factor(params: CboParams) -> float:
    """Exact one-step factor for the pre-projection pairwise second moment
    under shared per-step noise: ``1 - 2*lam*h + lam**2*h**2 + sigma**2*h``."""
    lam, sig, h = params.lam, params.sigma, params.h
    return 1.0 - 2.0 * lam * h + lam**2 * h**2 + sig**2 * h


def summary_text(report: ParamReport) -> str:
    """Human-readable condition summary with explicit warnings."""
    lines = [
        f"m={fmt_float(report.m)}",
        f"condition_sigma_positive={'true' if report.cond_sigma else 'false'}",
        f"condition_drift_dominates={'true' if report.cond_drift else 'false'}",
        f"condition_step_small={'true' if report.cond_h else 'false'}",
        f"verdict={report.verdict.value}",
    ]
    if report.verdict is Verdict.BOUNDARY:
        lines.append(
            "WARNING Boundary: 2λ = σ² exactly; decay rate "
            f"m={fmt_float(report.m)} is not positive and the geometric "
            "contraction envelope does not apply."
        )
    elif report.verdict is Verdict.VIOLATED:
        failed = []
        if not report.cond_sigma:
            failed.append("sigma > 0")
        if not report.cond_drift:
            failed.append("2λ > σ²")
        if not report.cond_h:
            failed.append("h < (2λ - σ²)/λ²")
        lines.append(
            "WARNING Violated: failed condition(s): " + "; ".join(failed) + "."
        )
    return "\n".join(lines) + "\n"


@dataclass
class DecayReport:
    """Empirical pairwise/consensus decay against the geometric envelope.

    Arrays are indexed by iteration 0..horizon.  ``*_bound`` columns carry
    the envelope ``initial * exp(-n*h*m)`` (with the empirical initial
    level), ``*_ok`` the per-iteration comparison with multiplicative slack
    ``1 + 5/sqrt(runs)``.  ``applicable`` is False unless the parameter
    verdict is Satisfied; the report is still produced so callers can look
    at boundary or violating configurations.
    """

    iterations: np.ndarray
    mean_pairwise_sq: np.ndarray
    pairwise_bound: np.ndarray
    pairwise_ok: np.ndarray
    mean_consensus_sq: np.ndarray
    consensus_bound: np.ndarray
    consensus_ok: np.ndarray
    m: float
    verdict: Verdict
    applicable: bool
    slack: float
    runs: int
    n_particles: int
    initial_variance: float

    def write_csv(self, path) -> None:
        header = (
            "n,mean_pairwise_sq,pairwise_bound,pairwise_ok,"
            "mean_consensus_sq,consensus_bound,consensus_ok"
        )
        lines = [header]
        for i in range(len(self.iterations)):
            lines.append(
                ",".join(
                    [
                        str(int(self.iterations[i])),
                        fmt_float(self.mean_pairwise_sq[i]),
                        fmt_float(self.pairwise_bound[i]),
                        "true" if self.pairwise_ok[i] else "false",
                        fmt_float(self.mean_consensus_sq[i]),
                        fmt_float(self.consensus_bound[i]),
                        "true" if self.consensus_ok[i] else "false",
                    ]
                )
            )
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _decay_one_run(
    objective, projector, params: CboParams, horizon: int, child_seed, init_mean, init_std
):
    init_ss, noise_ss = child_seed.spawn(2)
    ens = init_ensemble(
        projector.dim, params, init_mean, init_std, projector, objective, seed=init_ss
    )
    rng = np.random.default_rng(noise_ss)
    pair = np.empty(horizon + 1)
    cons_sq = np.empty(horizon + 1)
    w0 = ens.positions
    sum_w0 = w0.sum(axis=0)
    sum_sq0 = float((w0 * w0).sum())
    for n in range(horizon + 1):
        pair[n] = mean_pairwise_sq(ens.positions)
        cons = consensus_point(ens, params.beta)
        dev = ens.positions - cons
        cons_sq[n] = float((dev * dev).sum(axis=1).mean())
        if n < horizon:
            ens, _ = _advance(ens, cons, params, projector, objective, rng)
    return pair, cons_sq, sum_w0, sum_sq0


def decay_experiment(
    objective,
    projector,
    params: CboParams,
    runs: int,
    horizon: int,
    seed: int,
    init_mean=None,
    init_std: float = 1.0,
    workers: int = 1,
) -> DecayReport:
    """Average pairwise and particle-to-consensus squared distances over
    ``runs`` independent seeded trajectories and compare them with the
    geometric envelope.

    Aggregation order is fixed by run index, and every run draws from its
    own spawned seed, so the report is identical for any ``workers``.
    """
    if int(runs) != runs or runs < 1:
        raise ConfigurationError("runs must be a positive integer")
    if int(horizon) != horizon or horizon < 0:
        raise ConfigurationError("horizon must be a nonnegative integer")
    if int(workers) != workers or workers < 1:
        raise ConfigurationError("workers must be a positive integer")
    report = check_params(params)
    children = np.random.SeedSequence(seed).spawn(runs)

    def one(i: int):
        return _decay_one_run(
            objective, projector, params, horizon, children[i], init_mean, init_std
        )

    if workers == 1:
        results = [one(i) for i in range(runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(runs)))

    pair = np.zeros(horizon + 1)
    cons_sq = np.zeros(horizon + 1)
    sum_w0 = np.zeros(projector.dim)
    sum_sq0 = 0.0
    for p, c, sw, ss in results:
        pair += p
        cons_sq += c
        sum_w0 += sw
        sum_sq0 += ss
    pair /= runs
    cons_sq /= runs
    total_particles = runs * params.n_particles
    mean_w0 = sum_w0 / total_particles
    initial_variance = sum_sq0 / total_particles - float(mean_w0 @ mean_w0)

    ratio = math.exp(-params.h * report.m)
    n_idx = np.arange(horizon + 1)
    factors = np.concatenate([[1.0], np.cumprod(np.full(horizon, ratio))])
    pairwise_bound = pair[0] * factors
    n = params.n_particles
    consensus_bound = 2.0 * ((n - 1) / n) ** 2 * initial_variance * factors
    slack = 1.0 + 5.0 / math.sqrt(runs)
    pairwise_ok = pair <= pairwise_bound * slack
    consensus_ok = cons_sq <= consensus_bound * slack
    return DecayReport(
        iterations=n_idx,
        mean_pairwise_sq=pair,
        pairwise_bound=pairwise_bound,
        pairwise_ok=pairwise_ok,
        mean_consensus_sq=cons_sq,
        consensus_bound=consensus_bound,
        consensus_ok=consensus_ok,
        m=report.m,
        verdict=report.verdict,
        applicable=report.verdict is Verdict.SATISFIED,
        slack=slack,
        runs=int(runs),
        n_particles=params.n_particles,
        initial_variance=initial_variance,
    )


@dataclass(frozen=True)
class LaplacePoint:
    """Consensus point and its gap to the best particle at one beta."""

    beta: float
    consensus: np.ndarray
    gap: float


def laplace_sweep(ensemble: Ensemble, betas) -> list[LaplacePoint]:
    """Gap between the consensus point and the best particle for each beta.

    ``betas`` must be nonnegative and strictly ascending (0 is allowed and
    yields the arithmetic mean).  As beta grows the consensus point
    concentrates on the minimizing particle, so the gap decays to zero;
    ties among best particles make it converge to their midpoint instead.
    """
    betas = [float(b) for b in betas]
    if not betas:
        raise ConfigurationError("betas must be nonempty")
    if any(not (b >= 0) or not math.isfinite(b) for b in betas):
        raise ConfigurationError("betas must be finite and >= 0")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ConfigurationError("betas must be strictly ascending")
    best = ensemble.positions[int(np.argmin(ensemble.objective_values))]
    out = []
    for beta in betas:
        cons = consensus_point(ensemble, beta)
        gap = float(np.linalg.norm(cons - best))
        out.append(LaplacePoint(beta, cons, gap))
    return out


def write_laplace_csv(points: list[LaplacePoint], path) -> None:
    if not points:
        raise ConfigurationError("no laplace points to write")
    dim = points[0].consensus.shape[0]
    header = "beta,gap," + ",".join(f"consensus_{i}" for i in range(dim))
    lines = [header]
    for p in points:
        fields = [fmt_float(p.beta), fmt_float(p.gap)]
        fields += [fmt_float(c) for c in p.consensus]
        lines.append(",".join(fields))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def error_trace(trace: RunTrace, reference) -> np.ndarray:
    """L2 distance of each recorded center of mass to a reference point.

    Mutates the trace records' ``err_ref`` fields in place and returns the
    error array in record order.
    """
    ref = np.asarray(getattr(reference, "weights", reference), dtype=float)
    if not trace.records:
        raise ConfigurationError("trace has no records")
    dim = trace.records[0].center_of_mass.shape[0]
    if ref.shape != (dim,):
        raise ConfigurationError(
            f"reference dimension {ref.shape} does not match trace dimension {dim}"
        )
    errs = np.empty(len(trace.records))
    for i, rec in enumerate(trace.records):
        err = float(np.linalg.norm(rec.center_of_mass - ref))
        rec.err_ref = err
        errs[i] = err
    return errs


def write_error_csv(iterations, errors, path) -> None:
    lines = ["iter,err_ref"]
    for n, e in zip(iterations, errors):
        lines.append(f"{int(n)},{fmt_float(e)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
