"""Objective functions for the ensemble solver and portfolio scoring.

An :class:`Objective` bundles a scalar evaluator with an optional analytic
gradient (used only by the deterministic baselines) and an optional
vectorized batch evaluator for bulk scoring.  The solver itself only ever
needs point values, never derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DegeneratePortfolioError
from .metaio import fmt_float, fmt_vector

__all__ = [
    "Objective",
    "MarketStats",
    "sphere",
    "rastrigin",
    "neg_sharpe",
    "sharpe_components",
]

DEFAULT_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class Objective:
    """A scalar objective with optional gradient / batch evaluators.

    ``fn`` maps a d-vector to a float.  ``batch``, when given, maps an
    ``(m, d)`` array to an ``(m,)`` array and must agree with ``fn`` row by
    row.  ``descriptor`` is a stable identifier echoed into run metadata.
    """

    fn: Callable[[np.ndarray], float]
    descriptor: str
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    batch: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, w) -> float:
        return float(self.fn(np.asarray(w, dtype=float)))

    def eval_many(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if self.batch is not None:
            return np.asarray(self.batch(rows), dtype=float)
        return np.array([float(self.fn(r)) for r in rows], dtype=float)


def _default_names(d: int) -> tuple[str, ...]:
    return tuple(f"A{i + 1}" for i in range(d))


@dataclass(frozen=True)
class MarketStats:
    """First two moments of per-period asset returns plus a risk-free rate.

    ``sigma`` must be symmetric (to 1e-12) and positive semidefinite
    (smallest eigenvalue >= -1e-10); violations raise ``ConfigurationError``
    at construction time.
    """

    mu: np.ndarray
    sigma: np.ndarray
    rf: float = 0.0
    asset_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.ndim != 1 or mu.size == 0:
            raise ConfigurationError("mu must be a nonempty vector")
        d = mu.shape[0]
        if sigma.shape != (d, d):
            raise ConfigurationError(f"sigma must be ({d}, {d}), got {sigma.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ConfigurationError("market moments must be finite")
        if not np.isfinite(float(self.rf)):
            raise ConfigurationError("risk-free rate must be finite")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-12:
            raise ConfigurationError("sigma must be symmetric to 1e-12")
        if float(np.linalg.eigvalsh(sigma).min()) < -1e-10:
            raise ConfigurationError("sigma must be positive semidefinite")
        names = tuple(self.asset_names) if self.asset_names else _default_names(d)
        if len(names) != d:
            raise ConfigurationError(f"expected {d} asset names, got {len(names)}")
        for name in names:
            if not name or any(ch.isspace() for ch in name) or "," in name:
                raise ConfigurationError(f"invalid asset name {name!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "rf", float(self.rf))
        object.__setattr__(self, "asset_names", names)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def with_rf(self, rf: float) -> "MarketStats":
        return MarketStats(self.mu, self.sigma, rf, self.asset_names)


def sphere(center) -> Objective:
    """Squared Euclidean distance to ``center``."""
    c = np.asarray(center, dtype=float)
    if c.ndim != 1 or not np.all(np.isfinite(c)):
        raise ConfigurationError("sphere center must be a finite vector")

    def fn(w):
        dev = w - c
        return float(dev @ dev)

    def batch(rows):
        dev = rows - c
        return (dev * dev).sum(axis=1)

    def grad(w):
        return 2.0 * (np.asarray(w, dtype=float) - c)

    return Objective(fn, f"sphere:{fmt_vector(c)}", grad=grad, batch=batch)


def rastrigin(shift, scale: float = 1.0) -> Objective:
    """Shifted, scaled Rastrigin: many local minima, global minimum 0 at
    ``shift``.  Coordinates are standardized as ``z = (w - shift)/scale``."""
    s = np.asarray(shift, dtype=float)
    if s.ndim != 1 or not np.all(np.isfinite(s)):
        raise ConfigurationError("rastrigin shift must be a finite vector")
    scale = float(scale)
    if not (scale > 0) or not np.isfinite(scale):
        raise ConfigurationError("rastrigin scale must be finite and positive")

    def fn(w):
        z = (w - s) / scale
        return float(np.sum(z * z - 10.0 * np.cos(2.0 * np.pi * z) + 10.0))

    def batch(rows):
        z = (rows - s) / scale
        return (z * z - 10.0 * np.cos(2.0 * np.pi * z) + 10.0).sum(axis=1)

    def grad(w):
        z = (np.asarray(w, dtype=float) - s) / scale
        return (2.0 * z + 20.0 * np.pi * np.sin(2.0 * np.pi * z)) / scale

    return Objective(
        fn, f"rastrigin:{fmt_vector(s)};scale={fmt_float(scale)}", grad=grad, batch=batch
    )


def _check_variance(var, floor: float):
    if float(np.min(var)) < floor:
        raise DegeneratePortfolioError(
            f"portfolio variance {float(np.min(var)):.6e} below floor {floor:.6e}"
        )


def neg_sharpe(stats: MarketStats, var_floor: float = DEFAULT_VAR_FLOOR) -> Objective:
    """Negated Sharpe ratio ``-(w'mu - rf)/sqrt(w'Sigma w)``.

    Minimizing this over the simplex maximizes the portfolio's excess
    return per unit risk.  Evaluation raises ``DegeneratePortfolioError``
    whenever the portfolio variance drops below ``var_floor``.
    """
    if not (float(var_floor) > 0):
        raise ConfigurationError("var_floor must be positive")
    mu, sig, rf = stats.mu, stats.sigma, stats.rf

    def fn(w):
        var = float(w @ sig @ w)
        _check_variance(var, var_floor)
        return -(float(w @ mu) - rf) / math.sqrt(var)

    def batch(rows):
        var = np.einsum("ij,jk,ik->i", rows, sig, rows)
        if var.size:
            _check_variance(var, var_floor)
        return -(rows @ mu - rf) / np.sqrt(var)

    def grad(w):
        w = np.asarray(w, dtype=float)
        var = float(w @ sig @ w)
        _check_variance(var, var_floor)
        s = math.sqrt(var)
        excess = float(w @ mu) - rf
        return -mu / s + excess * (sig @ w) / s**3

    return Objective(
        fn,
        f"neg_sharpe:d={stats.dim};rf={fmt_float(rf)}",
        grad=grad,
        batch=batch,
    )


def sharpe_components(
    stats: MarketStats, w, var_floor: float = DEFAULT_VAR_FLOOR
) -> tuple[float, float, float]:
    """Return ``(ret, risk, sharpe)`` for one portfolio.

    ``ret = w'mu``, ``risk = sqrt(w'Sigma w)``, ``sharpe = (ret - rf)/risk``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (stats.dim,):
        raise ConfigurationError(f"expected a {stats.dim}-vector, got shape {w.shape}")
    var = float(w @ stats.sigma @ w)
    _check_variance(var, var_floor)
    ret = float(w @ stats.mu)
    risk = math.sqrt(var)
    return ret, risk, (ret - stats.rf) / risk
