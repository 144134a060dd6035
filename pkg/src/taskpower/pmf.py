"""Discrete probability mass functions and the algebra used to compose them.

A :class:`Pmf` is the universal value type of the whole pipeline: execution
times (cycles), power (microwatts) and per-operation energy (microwatt-cycles)
are all finite discrete distributions over nonnegative reals.  Composition of
stochastic quantities is done numerically on the support points: sums of
independent variables convolve, parallel joins take the distribution of the
max/min, probabilistic alternatives mix.

Every operation returns a new normalized Pmf; nothing here mutates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_SUPPORT_CAP",
    "Pmf",
    "Transmittance",
    "Unit",
    "UnitMismatchError",
    "cdf_at",
    "convolve_sum",
    "delta",
    "expectation",
    "format_pmf_literal",
    "make_pmf",
    "max_pmf",
    "min_pmf",
    "mixture",
    "most_probable",
    "parse_pmf_literal",
    "rebin",
    "scale",
    "std_dev",
]

#: Probabilities must sum to one within this tolerance.
PROB_TOL = 1e-9

#: Support size ceiling applied by composition operations unless overridden.
DEFAULT_SUPPORT_CAP = 1024


class Unit(str, Enum):
    """Quantity tag carried by every Pmf."""

    CYCLES = "cycles"
    MICROWATTS = "microwatts"
    MICROWATT_CYCLES = "microwatt-cycles"
    DIMENSIONLESS = "dimensionless"


class UnitMismatchError(ValueError):
    """Raised when an operation combines Pmfs with incompatible units."""


@dataclass(frozen=True)
class Pmf:
    """Normalized discrete distribution over a nonnegative quantity.

    Invariants (enforced on construction):

    * ``values`` strictly increasing, finite, all >= 0
    * ``probs`` all > 0 and summing to 1 within ``PROB_TOL``

    Use :func:`make_pmf` to build one from raw weighted points; the raw
    constructor rejects anything not already in canonical form.
    """

    values: tuple[float, ...]
    probs: tuple[float, ...]
    unit: Unit

    def __post_init__(self) -> None:
        if not isinstance(self.unit, Unit):
            raise TypeError(f"unit must be a Unit, got {self.unit!r}")
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be equal-length and non-empty")
        prev = -math.inf
        for v in self.values:
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"support value {v!r} must be finite and >= 0")
            if v <= prev:
                raise ValueError("support values must be strictly increasing")
            prev = v
        for p in self.probs:
            if not math.isfinite(p) or p <= 0:
                raise ValueError(f"probability {p!r} must be finite and > 0")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def points(self) -> tuple[tuple[float, float], ...]:
        """The (value, probability) pairs in ascending value order."""
        return tuple(zip(self.values, self.probs))

    def __repr__(self) -> str:
        body = ", ".join(f"{v:g}:{p:g}" for v, p in self.points)
        return f"Pmf({{{body}}}, {self.unit.value})"


@dataclass(frozen=True)
class Transmittance:
    """A traversal probability paired with the cost distribution of the path.

    Composing paths multiplies the probabilities and convolves the costs;
    this is the numeric stand-in for a p*z^X edge weight.
    """

    path_prob: float
    dist: Pmf

    def __post_init__(self) -> None:
        if not (0.0 < self.path_prob <= 1.0):
            raise ValueError(f"path_prob {self.path_prob!r} must be in (0, 1]")


def make_pmf(points: Iterable[tuple[float, float]], unit: Unit) -> Pmf:
    """Build a normalized Pmf from weighted points.

    Duplicate values are merged by summing their weights, zero-weight points
    are dropped, and the remaining weights are rescaled to sum to one.

    Raises ValueError if no point has positive weight, or if any value is
    negative/non-finite, or any weight is negative/non-finite.
    """
    merged: dict[float, float] = {}
    for value, weight in points:
        value = float(value)
        weight = float(weight)
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"support value {value!r} must be finite and >= 0")
        if not math.isfinite(weight) or weight < 0:
            raise ValueError(f"weight {weight!r} must be finite and >= 0")
        merged[value] = merged.get(value, 0.0) + weight
    total = math.fsum(merged.values())
    if total <= 0.0:
        raise ValueError("at least one point must have positive weight")
    values = sorted(v for v, w in merged.items() if w > 0.0)
    probs = [merged[v] / total for v in values]
    return Pmf(tuple(values), tuple(probs), unit)


def delta(value: float, unit: Unit) -> Pmf:
    """Point-mass distribution: the quantity is certainly `value`."""
    return make_pmf([(value, 1.0)], unit)


def _require_same_unit(a: Pmf, b: Pmf, op: str) -> None:
    if a.unit is not b.unit:
        raise UnitMismatchError(f"{op}: unit {a.unit.value} != {b.unit.value}")


def expectation(p: Pmf) -> float:
    """Mean of the distribution: sum of p_i * x_i."""
    return float(np.dot(p.values, p.probs))


def std_dev(p: Pmf) -> float:
    """Standard deviation: sqrt(E[X^2] - E[X]^2), clamped at zero."""
    values = np.asarray(p.values)
    probs = np.asarray(p.probs)
    mean = float(np.dot(values, probs))
    var = float(np.dot(values * values, probs)) - mean * mean
    return math.sqrt(max(var, 0.0))


def most_probable(p: Pmf) -> float:
    """Support value with the highest probability; ties go to the smallest."""
    return p.values[int(np.argmax(p.probs))]


def cdf_at(p: Pmf, x: float) -> float:
    """P(X <= x): total probability of support values not exceeding x."""
    return math.fsum(prob for value, prob in p.points if value <= x)


def convolve_sum(a: Pmf, b: Pmf, cap: int | None = DEFAULT_SUPPORT_CAP) -> Pmf:
    """Distribution of X + Y for independent X ~ a, Y ~ b (same unit).

    The support is the set of pairwise sums; if it exceeds `cap` points the
    result is rebinned (expectation-preserving).
    """
    _require_same_unit(a, b, "convolve_sum")
    sums = np.add.outer(np.asarray(a.values), np.asarray(b.values)).ravel()
    weights = np.outer(np.asarray(a.probs), np.asarray(b.probs)).ravel()
    out = _from_arrays(sums, weights, a.unit)
    return out if cap is None else rebin(out, cap)


def _from_arrays(values: np.ndarray, weights: np.ndarray, unit: Unit) -> Pmf:
    """Aggregate (value, weight) arrays by exact value into a Pmf."""
    uniq, inverse = np.unique(values, return_inverse=True)
    agg = np.bincount(inverse, weights=weights, minlength=len(uniq))
    return make_pmf(zip(uniq.tolist(), agg.tolist()), unit)


def _order_stat(a: Pmf, b: Pmf, largest: bool) -> Pmf:
    """Distribution of max(X, Y) or min(X, Y) via CDF products on the
    union support."""
    support = np.union1d(np.asarray(a.values), np.asarray(b.values))
    # Normalizing the cumulative sums pins the top of each CDF at exactly
    # 1.0, so the complement products cancel cleanly and no phantom points
    # appear above either input's support.
    cdf_a = np.cumsum(a.probs)
    cdf_a /= cdf_a[-1]
    cdf_b = np.cumsum(b.probs)
    cdf_b /= cdf_b[-1]
    # CDF of each input evaluated on the union support.
    fa = _step_cdf(np.asarray(a.values), cdf_a, support)
    fb = _step_cdf(np.asarray(b.values), cdf_b, support)
    if largest:
        joint = fa * fb                      # P(max <= x)
    else:
        joint = 1.0 - (1.0 - fa) * (1.0 - fb)  # P(min <= x)
    probs = np.diff(joint, prepend=0.0)
    probs = np.clip(probs, 0.0, None)
    return make_pmf(zip(support.tolist(), probs.tolist()), a.unit)


def _step_cdf(values: np.ndarray, cdf: np.ndarray, at: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(values, at, side="right")
    return np.concatenate(([0.0], cdf))[idx]


def max_pmf(a: Pmf, b: Pmf) -> Pmf:
    """Distribution of max(X, Y): completion of an all-must-finish join."""
    _require_same_unit(a, b, "max_pmf")
    return _order_stat(a, b, largest=True)


def min_pmf(a: Pmf, b: Pmf) -> Pmf:
    """Distribution of min(X, Y): completion of a first-wins race."""
    _require_same_unit(a, b, "min_pmf")
    return _order_stat(a, b, largest=False)


def mixture(branches: Sequence[tuple[float, Pmf]]) -> Pmf:
    """Probabilistic alternation: sum of prob_k * Pmf_k.

    Branch probabilities must be nonnegative and sum to 1 within tolerance;
    all component Pmfs must share a unit.  Zero-probability branches are
    dropped.
    """
    if not branches:
        raise ValueError("mixture of no branches")
    total = math.fsum(w for w, _ in branches)
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"branch probabilities sum to {total!r}, expected 1")
    unit = branches[0][1].unit
    merged: dict[float, float] = {}
    for weight, p in branches:
        if weight < 0.0:
            raise ValueError(f"branch probability {weight!r} must be >= 0")
        _require_same_unit(branches[0][1], p, "mixture")
        if weight == 0.0:
            continue
        for value, prob in p.points:
            merged[value] = merged.get(value, 0.0) + weight * prob
    return make_pmf(merged.items(), unit)


def scale(p: Pmf, factor: float) -> Pmf:
    """Multiply every support value by a positive factor; probabilities keep."""
    if not math.isfinite(factor) or factor <= 0.0:
        raise ValueError(f"scale factor {factor!r} must be finite and > 0")
    return Pmf(tuple(v * factor for v in p.values), p.probs, p.unit)


def rebin(p: Pmf, max_points: int) -> Pmf:
    """Coarsen the support to at most `max_points` equal-width bins.

    Each occupied bin is replaced by its probability-weighted mean value, so
    total probability and expectation are preserved.  A Pmf already within
    the cap is returned unchanged.
    """
    if max_points < 2:
        raise ValueError(f"max_points {max_points!r} must be >= 2")
    if len(p) <= max_points:
        return p
    values = np.asarray(p.values)
    probs = np.asarray(p.probs)
    lo, hi = values[0], values[-1]
    width = (hi - lo) / max_points
    idx = np.minimum(((values - lo) / width).astype(int), max_points - 1)
    bin_prob = np.bincount(idx, weights=probs, minlength=max_points)
    bin_mass = np.bincount(idx, weights=probs * values, minlength=max_points)
    occupied = bin_prob > 0.0
    means = bin_mass[occupied] / bin_prob[occupied]
    return make_pmf(zip(means.tolist(), bin_prob[occupied].tolist()), p.unit)


_PMF_POINT_RE = re.compile(
    r"^\s*([0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)\s*:"
    r"\s*([0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)\s*$"
)


def parse_pmf_literal(text: str, unit: Unit) -> Pmf:
    """Parse the `{v1:p1, v2:p2, ...}` literal used in all file formats."""
    body = text.strip()
    if not (body.startswith("{") and body.endswith("}")):
        raise ValueError(f"pmf literal must be brace-delimited: {text!r}")
    inner = body[1:-1].strip()
    if not inner:
        raise ValueError("pmf literal has no points")
    points = []
    for chunk in inner.split(","):
        m = _PMF_POINT_RE.match(chunk)
        if m is None:
            raise ValueError(f"bad pmf point {chunk.strip()!r}")
        points.append((float(m.group(1)), float(m.group(2))))
    return make_pmf(points, unit)


def format_number(x: float) -> str:
    """Shortest exact decimal for a value (integers drop the '.0')."""
    if float(x).is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def format_pmf_literal(p: Pmf) -> str:
    """Canonical text form: values exact, probabilities at 9 significant
    digits."""
    body = ", ".join(f"{format_number(v)}:{prob:.9g}" for v, prob in p.points)
    return "{" + body + "}"
