"""Predictor-corrector consensus ensemble iteration.

N particles evolve toward their Boltzmann-weighted consensus point: an
explicit Euler drift plus multiplicative noise proposes new positions (the
predictor), and projection onto the feasible set repairs them (the
corrector), so iterates never leave the constraint set.

Consensus weights are computed as ``exp(-beta * (L_i - min_j L_j))``; the
shift keeps the weight of the best particle at exactly 1, so the weight
vector never underflows to all zeros even for beta around 1e6.

Noise modes:

* ``COMMON`` (default): one standard-normal d-vector per iteration shared
  by every particle.  Pairwise coordinate differences then contract by the
  same random factor each step, which is what the decay diagnostics check.
* ``INDEPENDENT``: a fresh d-vector per particle per iteration.

All randomness flows through numpy ``Generator`` streams seeded from one
``SeedSequence``, so runs are bit-reproducible for a given seed and do not
depend on how the surrounding code schedules work.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericDomainError
from .metaio import fmt_float

__all__ = [
    "NoiseMode",
    "CboParams",
    "StepNoise",
    "Ensemble",
    "StepRecord",
    "TraceRecord",
    "RunTrace",
    "RunResult",
    "init_ensemble",
    "consensus_point",
    "draw_step_noise",
    "predictor_step",
    "corrector_step",
    "cbo_step",
    "run",
    "mean_pairwise_sq",
    "write_trace_csv",
]


class NoiseMode(enum.Enum):
    COMMON = "common"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class CboParams:
    """Solver parameters.

    Construction validates basic ranges only (positivity and the like);
    whether the parameters also satisfy the contraction conditions is the
    diagnostics module's job, and intentionally never blocks a run.

    Fields
    ------
    lam : drift rate toward the consensus point, > 0
    sigma : noise intensity, >= 0
    beta : Boltzmann concentration parameter, > 0
    h : Euler step size, > 0
    n_particles : ensemble size, >= 2
    noise_mode : COMMON (shared per-step vector) or INDEPENDENT
    seed : master seed for initialization and the noise stream
    max_iters : hard iteration cap (0 means "do not step at all")
    residual_tol : stop once max_i ||w_i - consensus|| drops below this
    """

    lam: float
    sigma: float
    beta: float
    h: float
    n_particles: int
    noise_mode: NoiseMode = NoiseMode.COMMON
    seed: int = 0
    max_iters: int = 10_000
    residual_tol: float = 1e-8

    def __post_init__(self):
        if not (float(self.lam) > 0) or not math.isfinite(self.lam):
            raise ConfigurationError("lam must be finite and > 0")
        if not (float(self.sigma) >= 0) or not math.isfinite(self.sigma):
            raise ConfigurationError("sigma must be finite and >= 0")
        if not (float(self.beta) > 0) or not math.isfinite(self.beta):
            raise ConfigurationError("beta must be finite and > 0")
        if not (float(self.h) > 0) or not math.isfinite(self.h):
            raise ConfigurationError("h must be finite and > 0")
        if int(self.n_particles) != self.n_particles or self.n_particles < 2:
            raise ConfigurationError("n_particles must be an integer >= 2")
        if not isinstance(self.noise_mode, NoiseMode):
            raise ConfigurationError("noise_mode must be a NoiseMode")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ConfigurationError("max_iters must be an integer >= 0")
        # NaN fails this comparison too; +inf is allowed (stop immediately).
        if not (float(self.residual_tol) >= 0):
            raise ConfigurationError("residual_tol must be >= 0")


@dataclass(frozen=True)
class StepNoise:
    """Noise drawn for one predictor step.

    ``values`` has shape ``(d,)`` in COMMON mode (broadcast over particles)
    and ``(N, d)`` in INDEPENDENT mode.
    """

    mode: NoiseMode
    values: np.ndarray


@dataclass
class Ensemble:
    """Particle ensemble with a coherent objective-value cache."""

    positions: np.ndarray
    objective_values: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        vals = np.asarray(self.objective_values, dtype=float)
        if pos.ndim != 2 or pos.shape[0] < 2:
            raise ConfigurationError("positions must be an (N, d) array with N >= 2")
        if vals.shape != (pos.shape[0],):
            raise ConfigurationError("objective_values must have one entry per particle")
        if not np.all(np.isfinite(pos)):
            raise NumericDomainError("ensemble positions must be finite")
        self.positions = pos
        self.objective_values = vals

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class StepRecord:
    """Snapshot of the ensemble state at one iteration."""

    iteration: int
    consensus: np.ndarray
    dispersion: float
    residual: float
    best_value: float
    center_of_mass: np.ndarray


@dataclass
class TraceRecord:
    """One persisted trace row: a snapshot plus the running path sums.

    ``a_n`` accumulates the mean particle-to-consensus distance through the
    current iterate; ``b_n`` accumulates the mean norm of the noise term
    ``(w_i - consensus) * eta`` over all steps taken so far (the current
    step's noise is drawn after the record, so ``b_n`` covers p < n).
    ``err_ref`` stays ``None`` until an error trace against a reference
    point is attached.
    """

    iteration: int
    consensus: np.ndarray
    dispersion: float
    residual: float
    best_value: float
    center_of_mass: np.ndarray
    a_n: float
    b_n: float
    err_ref: float | None = None


@dataclass
class RunTrace:
    """Ordered, strictly-increasing-in-iteration trace records."""

    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def iterations(self) -> np.ndarray:
        return np.array([r.iteration for r in self.records], dtype=np.int64)

    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records], dtype=float)

    def dispersions(self) -> np.ndarray:
        return np.array([r.dispersion for r in self.records], dtype=float)

    def best_values(self) -> np.ndarray:
        return np.array([r.best_value for r in self.records], dtype=float)

    def consensus_points(self) -> np.ndarray:
        return np.array([r.consensus for r in self.records], dtype=float)

    def centers_of_mass(self) -> np.ndarray:
        return np.array([r.center_of_mass for r in self.records], dtype=float)

    def a_values(self) -> np.ndarray:
        return np.array([r.a_n for r in self.records], dtype=float)

    def b_values(self) -> np.ndarray:
        return np.array([r.b_n for r in self.records], dtype=float)

    def ref_errors(self) -> np.ndarray:
        """Reference errors with NaN where no reference was attached."""
        return np.array(
            [math.nan if r.err_ref is None else r.err_ref for r in self.records],
            dtype=float,
        )


@dataclass(frozen=True)
class RunResult:
    """Outcome of :func:`run`.

    ``point`` is the final consensus point projected onto the feasible set;
    ``best_point``/``best_value`` track the best particle ever observed.
    """

    ensemble: Ensemble
    trace: RunTrace
    point: np.ndarray
    best_point: np.ndarray
    best_value: float


def mean_pairwise_sq(positions) -> float:
    """Mean of ``||w_i - w_j||^2`` over unordered particle pairs.

    Uses the center-of-mass identity
    ``sum_{i<j} ||w_i - w_j||^2 = N * sum_i ||w_i - com||^2``,
    so the cost is O(N d) instead of O(N^2 d).
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if n < 2:
        raise ConfigurationError("need at least two particles")
    dev = pos - pos.mean(axis=0)
    return 2.0 * float((dev * dev).sum()) / (n - 1)


def init_ensemble(
    dim: int,
    params: CboParams,
    init_mean=None,
    init_std: float = 1.0,
    projector=None,
    objective=None,
    seed=None,
) -> Ensemble:
    """Draw N Gaussian rows and project each onto the feasible set.

    ``init_mean`` defaults to the projection of the origin onto the set
    (for the simplex that is the barycenter).  ``seed`` accepts anything
    ``numpy.random.default_rng`` does; it defaults to ``params.seed``.
    """
    if projector is None or objective is None:
        raise ConfigurationError("init_ensemble requires a projector and an objective")
    if projector.dim != dim:
        raise ConfigurationError(
            f"projector dimension {projector.dim} does not match dim={dim}"
        )
    if not (float(init_std) > 0) or not math.isfinite(init_std):
        raise ConfigurationError("init_std must be finite and > 0")
    if init_mean is None:
        init_mean = projector.project(np.zeros(dim))
    mean = np.asarray(init_mean, dtype=float)
    if mean.shape != (dim,) or not np.all(np.isfinite(mean)):
        raise ConfigurationError(f"init_mean must be a finite {dim}-vector")
    rng = np.random.default_rng(params.seed if seed is None else seed)
    raw = mean + init_std * rng.standard_normal((params.n_particles, dim))
    positions = projector.project_rows(raw)
    values = objective.eval_many(positions)
    if not np.all(np.isfinite(values)):
        raise NumericDomainError("non-finite objective value at iteration 0")
    return Ensemble(positions, values, iteration=0)


def consensus_point(ensemble: Ensemble, beta: float) -> np.ndarray:
    """Boltzmann-weighted ensemble average with underflow-safe weights.

    Weights are ``exp(-beta * (L_i - min_j L_j))``: the best particle always
    has weight 1, so the normalizer is >= 1 for any beta.  ``beta = 0``
    yields the plain arithmetic mean.  The result is a convex combination
    of particle positions and therefore lies in their convex hull.
    """
    beta = float(beta)
    if not (beta >= 0) or not math.isfinite(beta):
        raise ConfigurationError("beta must be finite and >= 0")
    values = ensemble.objective_values
    if not np.all(np.isfinite(values)):
        raise NumericDomainError("non-finite objective values in consensus computation")
    weights = np.exp(-beta * (values - values.min()))
    return (weights @ ensemble.positions) / weights.sum()


def draw_step_noise(params: CboParams, dim: int, rng: np.random.Generator) -> StepNoise:
    """Draw one step's standard-normal noise in the configured mode."""
    if params.noise_mode is NoiseMode.COMMON:
        return StepNoise(NoiseMode.COMMON, rng.standard_normal(dim))
    return StepNoise(NoiseMode.INDEPENDENT, rng.standard_normal((params.n_particles, dim)))


def _check_noise(ensemble: Ensemble, params: CboParams, noise: StepNoise) -> None:
    if noise.mode is not params.noise_mode:
        raise ConfigurationError(
            f"noise mode {noise.mode.value} does not match params ({params.noise_mode.value})"
        )
    expected = (
        (ensemble.dim,)
        if noise.mode is NoiseMode.COMMON
        else (ensemble.n_particles, ensemble.dim)
    )
    if np.asarray(noise.values).shape != expected:
        raise ConfigurationError(
            f"noise shape {np.asarray(noise.values).shape} does not match {expected}"
        )


def predictor_step(
    ensemble: Ensemble, consensus: np.ndarray, params: CboParams, noise: StepNoise
) -> np.ndarray:
    """Propose raw (unconstrained) positions for the next iterate.

    ``w_i - lam*h*(w_i - consensus) + sigma*sqrt(h)*(w_i - consensus)*eta``
    evaluated rowwise; the input ensemble is not mutated.
    """
    consensus = np.asarray(consensus, dtype=float)
    if consensus.shape != (ensemble.dim,):
        raise ConfigurationError("consensus point has the wrong dimension")
    _check_noise(ensemble, params, noise)
    dev = ensemble.positions - consensus
    return (
        ensemble.positions
        - (params.lam * params.h) * dev
        + (params.sigma * math.sqrt(params.h)) * dev * noise.values
    )


def corrector_step(raw_positions, projector) -> np.ndarray:
    """Project each proposed row back onto the feasible set."""
    return projector.project_rows(raw_positions)


def _snapshot(ensemble: Ensemble, beta: float) -> StepRecord:
    cons = consensus_point(ensemble, beta)
    pos = ensemble.positions
    com = pos.mean(axis=0)
    dev = pos - com
    dispersion = 2.0 * float((dev * dev).sum()) / (ensemble.n_particles - 1)
    dev_cons = pos - cons
    residual = float(np.sqrt((dev_cons * dev_cons).sum(axis=1)).max())
    best = float(ensemble.objective_values.min())
    return StepRecord(ensemble.iteration, cons, dispersion, residual, best, com)


def _advance(
    ensemble: Ensemble,
    consensus: np.ndarray,
    params: CboParams,
    projector,
    objective,
    rng: np.random.Generator,
) -> tuple[Ensemble, StepNoise]:
    """predictor -> corrector -> cache refresh; returns the noise used."""
    noise = draw_step_noise(params, ensemble.dim, rng)
    raw = predictor_step(ensemble, consensus, params, noise)
    positions = corrector_step(raw, projector)
    values = objective.eval_many(positions)
    if not np.all(np.isfinite(values)):
        raise NumericDomainError(
            f"non-finite objective value at iteration {ensemble.iteration + 1}"
        )
    return Ensemble(positions, values, ensemble.iteration + 1), noise


def cbo_step(
    ensemble: Ensemble,
    params: CboParams,
    projector,
    objective,
    rng: np.random.Generator,
) -> tuple[Ensemble, StepRecord]:
    """One full iteration: consensus, noise, predictor, corrector, cache.

    Returns the advanced ensemble and a snapshot of the *input* state (the
    consensus in the record is the one the update used).
    """
    record = _snapshot(ensemble, params.beta)
    advanced, _ = _advance(ensemble, record.consensus, params, projector, objective, rng)
    return advanced, record


def run(
    objective,
    projector,
    params: CboParams,
    init_mean=None,
    init_std: float = 1.0,
    thin: int = 1,
) -> RunResult:
    """Run the solver until the residual drops below tolerance or the
    iteration cap is reached.

    The trace records every ``thin``-th iteration plus, always, the final
    state.  The returned ``point`` is the final consensus point projected
    onto the feasible set.
    """
    if int(thin) != thin or thin < 1:
        raise ConfigurationError("thin must be an integer >= 1")
    ss = np.random.SeedSequence(params.seed)
    init_ss, noise_ss = ss.spawn(2)
    ensemble = init_ensemble(
        projector.dim, params, init_mean, init_std, projector, objective, seed=init_ss
    )
    rng = np.random.default_rng(noise_ss)

    trace = RunTrace()
    a_sum = 0.0
    b_sum = 0.0
    best_value = math.inf
    best_point = ensemble.positions[0].copy()
    record = None
    while True:
        record = _snapshot(ensemble, params.beta)
        dev_cons = ensemble.positions - record.consensus
        a_sum += float(np.sqrt((dev_cons * dev_cons).sum(axis=1)).mean())
        if record.best_value < best_value:
            best_value = record.best_value
            best_point = ensemble.positions[
                int(np.argmin(ensemble.objective_values))
            ].copy()
        stop = (record.residual < params.residual_tol) or (
            ensemble.iteration >= params.max_iters
        )
        if ensemble.iteration % thin == 0 or stop:
            trace.records.append(
                TraceRecord(
                    record.iteration,
                    record.consensus,
                    record.dispersion,
                    record.residual,
                    record.best_value,
                    record.center_of_mass,
                    a_sum,
                    b_sum,
                )
            )
        if stop:
            break
        ensemble, noise = _advance(
            ensemble, record.consensus, params, projector, objective, rng
        )
        term = dev_cons * noise.values
        b_sum += float(np.sqrt((term * term).sum(axis=1)).mean())

    point = projector.project(record.consensus)
    return RunResult(ensemble, trace, point, best_point, best_value)


def trace_csv_header(dim: int) -> str:
    cols = ["iter", "residual", "dispersion", "best_L"]
    cols += [f"consensus_{i}" for i in range(dim)]
    cols += [f"com_{i}" for i in range(dim)]
    cols += ["A_n", "B_n", "err_ref"]
    return ",".join(cols)


def write_trace_csv(trace: RunTrace, path) -> None:
    """Persist a trace as CSV with full round-trip float precision.

    The ``err_ref`` field is left empty for records with no reference
    error attached.
    """
    if not trace.records:
        raise ConfigurationError("cannot write an empty trace")
    dim = trace.records[0].consensus.shape[0]
    lines = [trace_csv_header(dim)]
    for r in trace.records:
        fields = [str(r.iteration), fmt_float(r.residual), fmt_float(r.dispersion)]
        fields.append(fmt_float(r.best_value))
        fields += [fmt_float(c) for c in r.consensus]
        fields += [fmt_float(c) for c in r.center_of_mass]
        fields += [fmt_float(r.a_n), fmt_float(r.b_n)]
        fields.append("" if r.err_ref is None else fmt_float(r.err_ref))
        lines.append(",".join(fields))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
