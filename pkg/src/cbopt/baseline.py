"""Deterministic reference optimizers used to judge solver output.

Two baselines: exhaustive search over a regular simplex lattice (exact up
to the lattice resolution, only practical for d <= 4) and plain projected
gradient descent.  Both return a :class:`ReferenceSolution` so callers can
treat them interchangeably.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .metaio import fmt_float, fmt_vector

__all__ = [
    "ReferenceSolution",
    "simplex_lattice",
    "grid_search_simplex",
    "finite_diff_gradient",
    "projected_gradient",
]

_EVAL_CHUNK = 65536
MAX_GRID_DIM = 4


@dataclass(frozen=True)
class ReferenceSolution:
    """A reference optimizer's output: weights, value, method, metadata."""

    weights: np.ndarray
    value: float
    method: str
    meta: dict = field(default_factory=dict)

    def to_metadata(self) -> dict:
        out = {
            "reference_method": self.method,
            "reference_value": fmt_float(self.value),
            "reference_weights": fmt_vector(self.weights),
        }
        for key, val in self.meta.items():
            out[f"reference_{key}"] = (
                fmt_float(val) if isinstance(val, float) else str(val)
            )
        return out


def _compositions(d: int, total: int) -> np.ndarray:
    """Integer vectors of length d summing to total, lexicographically
    ascending."""
    if d == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for lead in range(total + 1):
        rest = _compositions(d - 1, total - lead)
        col = np.full((len(rest), 1), lead, dtype=np.int64)
        blocks.append(np.hstack([col, rest]))
    return np.vstack(blocks)


def simplex_lattice(d: int, step: float) -> np.ndarray:
    """All simplex points with coordinates on a step-width lattice.

    ``1/step`` must be an integer to within 1e-9.  Rows are returned in
    lexicographically ascending order, which the grid search relies on for
    its tie-breaking rule.
    """
    if int(d) != d or d < 1:
        raise ConfigurationError("d must be a positive integer")
    if not (0 < float(step) <= 1):
        raise ConfigurationError("step must be in (0, 1]")
    k_float = 1.0 / float(step)
    k = round(k_float)
    if abs(k_float - k) > 1e-9:
        raise ConfigurationError(f"1/step = {k_float!r} is not an integer")
    return _compositions(d, k).astype(float) / k


def _eval_chunked(objective, points: np.ndarray, workers: int) -> np.ndarray:
    chunks = [points[i : i + _EVAL_CHUNK] for i in range(0, len(points), _EVAL_CHUNK)]
    if workers <= 1 or len(chunks) == 1:
        parts = [objective.eval_many(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(objective.eval_many, chunks))
    return np.concatenate(parts)


def grid_search_simplex(
    objective, d: int, step: float, workers: int = 1
) -> ReferenceSolution:
    """Exhaustively minimize over the simplex lattice.

    Enforces d <= 4 (the lattice grows combinatorially).  Ties are broken
    toward the lexicographically smallest weight vector; the reduction is
    independent of the worker count.
    """
    if int(d) != d or not (1 <= d <= MAX_GRID_DIM):
        raise ConfigurationError(f"grid search supports 1 <= d <= {MAX_GRID_DIM}")
    points = simplex_lattice(d, step)
    values = _eval_chunked(objective, points, workers)
    # argmin returns the first minimum; rows are in lexicographic order.
    idx = int(np.argmin(values))
    return ReferenceSolution(
        points[idx].copy(),
        float(values[idx]),
        "grid",
        meta={"step": float(step), "points": len(points)},
    )


def finite_diff_gradient(objective, w, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate."""
    if not (float(eps) > 0) or not math.isfinite(eps):
        raise ConfigurationError("eps must be finite and positive")
    w = np.asarray(w, dtype=float)
    grad = np.empty_like(w)
    for i in range(w.shape[0]):
        bump = np.zeros_like(w)
        bump[i] = eps
        grad[i] = (objective(w + bump) - objective(w - bump)) / (2.0 * eps)
    return grad


def projected_gradient(
    objective, projector, w0, step_size: float, iters: int
) -> ReferenceSolution:
    """Fixed-step projected gradient descent, reporting the best iterate.

    Uses the objective's analytic gradient if present, otherwise central
    differences.  ``iters = 0`` returns the starting point unchanged.
    """
    if not (float(step_size) > 0) or not math.isfinite(step_size):
        raise ConfigurationError("step_size must be finite and positive")
    if int(iters) != iters or iters < 0:
        raise ConfigurationError("iters must be a nonnegative integer")
    w = np.asarray(w0, dtype=float).copy()
    if not projector.contains(w, tol=1e-8):
        raise ConfigurationError("w0 must be feasible")
    grad_fn = objective.grad or (lambda x: finite_diff_gradient(objective, x))
    best_w = w.copy()
    best_v = objective(w)
    for _ in range(int(iters)):
        w = projector.project(w - step_size * np.asarray(grad_fn(w), dtype=float))
        value = objective(w)
        if value < best_v:
            best_v = value
            best_w = w.copy()
    return ReferenceSolution(
        best_w,
        float(best_v),
        "projected_gradient",
        meta={"iters": int(iters), "step_size": float(step_size)},
    )
