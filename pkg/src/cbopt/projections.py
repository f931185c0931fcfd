"""Euclidean projections onto closed convex feasible sets.

Three set families cover the experiments in this package: the probability
simplex, axis-aligned boxes (bounds may be infinite), and Euclidean balls.
Each projector maps arbitrary points to the nearest feasible point in the
L2 sense, tests membership up to a tolerance, and serializes to a compact
textual form used in run metadata (``simplex:d``, ``box:lo,hi``,
``ball:center,radius``).

Projection is the corrector step's workhorse, so the row-wise variants are
vectorized.  ``project`` delegates to ``project_rows`` so single-vector and
batch calls stay bit-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, NumericDomainError
from .metaio import fmt_float, fmt_vector, parse_vector

__all__ = [
    "DEFAULT_MEMBERSHIP_TOL",
    "Projector",
    "SimplexProjector",
    "BoxProjector",
    "BallProjector",
    "simplex",
    "box",
    "ball",
    "parse_projector",
]

DEFAULT_MEMBERSHIP_TOL = 1e-10


def _as_rows(vs, dim: int) -> np.ndarray:
    arr = np.asarray(vs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ConfigurationError(
            f"expected an (m, {dim}) array of row vectors, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError("projection input contains non-finite entries")
    return arr


class Projector:
    """Exact Euclidean projection onto a nonempty closed convex set."""

    dim: int

    def project_rows(self, vs) -> np.ndarray:
        """Project each row of an ``(m, dim)`` array onto the set."""
        raise NotImplementedError

    def contains_rows(self, vs, tol: float = DEFAULT_MEMBERSHIP_TOL) -> np.ndarray:
        """Boolean membership per row, up to an additive tolerance."""
        raise NotImplementedError

    def project(self, v) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        if arr.ndim != 1:
            raise ConfigurationError(f"expected a vector, got shape {arr.shape}")
        return self.project_rows(arr[None, :])[0]

    def contains(self, v, tol: float = DEFAULT_MEMBERSHIP_TOL) -> bool:
        arr = np.asarray(v, dtype=float)
        if arr.ndim != 1:
            raise ConfigurationError(f"expected a vector, got shape {arr.shape}")
        return bool(self.contains_rows(arr[None, :], tol)[0])

    def describe(self) -> str:
        """Compact textual form, parseable by :func:`parse_projector`."""
        raise NotImplementedError

    def __repr__(self) -> str:  # pragma: no cover - debugging nicety
        return f"{type(self).__name__}<{self.describe()}>"


class SimplexProjector(Projector):
    """Probability simplex ``{w : sum(w) = 1, w >= 0}``.

    Projection uses the descending-sort threshold rule: with ``u`` the
    coordinates sorted descending and ``k`` the largest index such that
    ``u_k - (sum_{j<=k} u_j - 1)/k > 0``, the projection is
    ``max(v - theta, 0)`` where ``theta = (sum_{j<=k} u_j - 1)/k``.
    Cost is O(d log d) per row.  The output is invariant under coordinate
    permutation because only sorted values enter the threshold.
    """

    def __init__(self, dim: int):
        if int(dim) != dim or dim < 1:
            raise ConfigurationError("simplex dimension must be a positive integer")
        self.dim = int(dim)

    def project_rows(self, vs) -> np.ndarray:
        vs = _as_rows(vs, self.dim)
        u = np.sort(vs, axis=1)[:, ::-1]
        css = np.cumsum(u, axis=1)
        ks = np.arange(1, self.dim + 1, dtype=float)
        valid = u - (css - 1.0) / ks > 0.0
        # Column 0 is always valid (u_1 - (u_1 - 1) = 1), so the reversed
        # argmax finds the last valid column.
        k_idx = self.dim - 1 - np.argmax(valid[:, ::-1], axis=1)
        theta = (css[np.arange(len(vs)), k_idx] - 1.0) / (k_idx + 1.0)
        return np.maximum(vs - theta[:, None], 0.0)

    def contains_rows(self, vs, tol: float = DEFAULT_MEMBERSHIP_TOL) -> np.ndarray:
        vs = _as_rows(vs, self.dim)
        return (np.abs(vs.sum(axis=1) - 1.0) <= tol) & (vs.min(axis=1) >= -tol)

    def describe(self) -> str:
        return f"simplex:{self.dim}"


class BoxProjector(Projector):
    """Axis-aligned box ``{v : lo <= v <= hi}``; bounds may be +-inf."""

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ConfigurationError("box bounds must be two vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ConfigurationError("box bounds must not be NaN")
        if not np.all(lo <= hi):
            raise ConfigurationError("box requires lo <= hi componentwise")
        self.lo = lo
        self.hi = hi
        self.dim = lo.shape[0]

    def project_rows(self, vs) -> np.ndarray:
        vs = _as_rows(vs, self.dim)
        return np.clip(vs, self.lo, self.hi)

    def contains_rows(self, vs, tol: float = DEFAULT_MEMBERSHIP_TOL) -> np.ndarray:
        vs = _as_rows(vs, self.dim)
        return np.all(vs >= self.lo - tol, axis=1) & np.all(vs <= self.hi + tol, axis=1)

    def describe(self) -> str:
        return f"box:{fmt_vector(self.lo)},{fmt_vector(self.hi)}"


class BallProjector(Projector):
    """Euclidean ball of given center and radius; projection is radial."""

    def __init__(self, center, radius: float):
        center = np.asarray(center, dtype=float)
        if center.ndim != 1 or not np.all(np.isfinite(center)):
            raise ConfigurationError("ball center must be a finite vector")
        radius = float(radius)
        if not (radius > 0) or not np.isfinite(radius):
            raise ConfigurationError("ball radius must be finite and positive")
        self.center = center
        self.radius = radius
        self.dim = center.shape[0]

    def project_rows(self, vs) -> np.ndarray:
        vs = _as_rows(vs, self.dim)
        dev = vs - self.center
        dist = np.sqrt((dev * dev).sum(axis=1))
        scale = np.ones_like(dist)
        np.divide(self.radius, dist, out=scale, where=dist > self.radius)
        return self.center + dev * scale[:, None]

    def contains_rows(self, vs, tol: float = DEFAULT_MEMBERSHIP_TOL) -> np.ndarray:
        vs = _as_rows(vs, self.dim)
        dev = vs - self.center
        return np.sqrt((dev * dev).sum(axis=1)) <= self.radius + tol

    def describe(self) -> str:
        return f"ball:{fmt_vector(self.center)},{fmt_float(self.radius)}"


def simplex(dim: int) -> SimplexProjector:
    return SimplexProjector(dim)


def box(lo, hi) -> BoxProjector:
    return BoxProjector(lo, hi)


def ball(center, radius: float) -> BallProjector:
    return BallProjector(center, radius)


def parse_projector(text: str) -> Projector:
    """Parse the textual form produced by ``Projector.describe``."""
    kind, sep, rest = text.strip().partition(":")
    if not sep:
        raise ConfigurationError(f"malformed projector spec {text!r}")
    try:
        if kind == "simplex":
            return SimplexProjector(int(rest))
        if kind == "box":
            lo_s, hi_s = rest.split(",")
            return BoxProjector(parse_vector(lo_s), parse_vector(hi_s))
        if kind == "ball":
            center_s, radius_s = rest.rsplit(",", 1)
            return BallProjector(parse_vector(center_s), float(radius_s))
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"malformed projector spec {text!r}: {exc}") from exc
    raise ConfigurationError(f"unknown projector kind {kind!r}")
