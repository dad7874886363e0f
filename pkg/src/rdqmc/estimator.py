"""Randomized QMC and Monte Carlo estimation of sample functionals.

A *problem* is any object with a ``dim`` attribute, a ``target``
attribute (``"centered"`` or ``"gaussian"``, the coordinate convention
of its parameter vector) and an ``evaluate(y) -> float`` method.
Evaluations are embarrassingly parallel; all reductions are exactly
rounded (``math.fsum``), so every estimate is bit-identical regardless
of worker count or of how an embedded ladder splits its levels.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import ZERO_GUARD, inverse_normal_cdf, lattice_points, make_rule
from .rng import STREAM_MC, philox_generator


class EvaluationError(RuntimeError):
    """A sample evaluation failed; names the failing sample coordinates."""

    def __init__(self, message, shift_index=None, sample_index=None):
        super().__init__(message)
        self.shift_index = shift_index
        self.sample_index = sample_index

    def __reduce__(self):
        return (
            self.__class__,
            (self.args[0], self.shift_index, self.sample_index),
        )


@dataclass
class EstimatorResult:
    """Aggregated estimate of one rule (or one ladder level).

    ``rms_error`` is the shift-based error estimate
    ``sqrt(sum_r (mean - q_r)^2 / (R (R - 1)))``; it is NaN for a single
    shift.
    """

    mean: float
    rms_error: float
    per_shift_values: np.ndarray
    n_points: int
    n_shifts: int
    wall_seconds: float
    kind: str = "qmc"
    m: Optional[int] = None


# -- parallel evaluation ----------------------------------------------------------

_worker_problem = None


def _worker_init(problem):
    global _worker_problem
    _worker_problem = problem


def _eval_block(problem, offset, block):
    out = np.empty(len(block))
    for pos, y in enumerate(block):
        try:
            out[pos] = problem.evaluate(y)
        except Exception as exc:  # noqa: BLE001 - reported with coordinates
            return offset, pos, exc
    return offset, out, None


def _worker_eval(args):
    offset, block = args
    return _eval_block(_worker_problem, offset, block)


def evaluate_points(problem, points, workers=1, labels=None):
    """Evaluate the problem at each row of ``points``.

    Results are returned in input order whatever the worker count.  A
    failing sample raises :class:`EvaluationError` naming its label (or
    plain position), with the solver exception chained.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    out = np.empty(n)
    failure = None

    if workers <= 1 or n < 2:
        offset, payload, exc = _eval_block(problem, 0, points)
        if exc is None:
            return payload
        failure = (offset + payload, exc)
    else:
        chunk = max(1, math.ceil(n / (workers * 4)))
        tasks = [
            (lo, points[lo : lo + chunk]) for lo in range(0, n, chunk)
        ]
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(problem,)
        ) as pool:
            for offset, payload, exc in pool.map(_worker_eval, tasks):
                if exc is not None:
                    failure = (offset + payload, exc)
                    break
                out[offset : offset + len(payload)] = payload

    if failure is not None:
        pos, exc = failure
        label = labels[pos] if labels is not None else pos
        if isinstance(label, tuple) and len(label) == 2:
            where = f"shift {label[0]}, point index {label[1]}"
            shift_index, sample_index = label
        else:
            where = f"sample {label}"
            shift_index, sample_index = None, label
        raise EvaluationError(
            f"evaluation failed at {where}: {exc}", shift_index, sample_index
        ) from exc
    return out


# -- shift aggregation --------------------------------------------------------------


def _aggregate(per_shift):
    """Exact-order mean and RMS error over shift values."""
    r = len(per_shift)
    mean = math.fsum(per_shift) / r
    if r < 2:
        return mean, float("nan")
    ss = math.fsum((mean - q) ** 2 for q in per_shift)
    return mean, math.sqrt(ss / (r * (r - 1)))


def qmc_estimate(problem, rule, workers=1, target=None):
    """Shift-averaged lattice estimate of ``E[G]`` under the rule.

    Each shift's sum runs over points ``i = 1..N`` in ascending order
    and all reductions are exactly rounded, so the result does not
    depend on ``workers``.
    """
    target = problem.target if target is None else target
    n = rule.n_points
    r_shifts = rule.n_shifts
    indices = np.arange(1, n + 1, dtype=np.int64)
    t0 = time.perf_counter()
    blocks = []
    labels = []
    for r in range(r_shifts):
        blocks.append(lattice_points(rule, indices, r, target))
        labels.extend((r, int(i)) for i in indices)
    values = evaluate_points(
        problem, np.vstack(blocks), workers=workers, labels=labels
    )
    per_shift = np.array(
        [math.fsum(values[r * n : (r + 1) * n]) / n for r in range(r_shifts)]
    )
    mean, rms = _aggregate(per_shift)
    return EstimatorResult(
        mean=mean,
        rms_error=rms,
        per_shift_values=per_shift,
        n_points=n,
        n_shifts=r_shifts,
        wall_seconds=time.perf_counter() - t0,
        kind="qmc",
    )


def qmc_ladder(
    problem, z, m_min, m_max, n_shifts, seed, workers=1, target=None
):
    """Embedded lattice ladder over ``N = 2^m`` for ``m = m_min..m_max``.

    The level-``m`` rule consists of the points of the ``2^m_max`` rule
    at indices ``i 2^(m_max - m)``, so lower levels are nested in higher
    ones; each level only evaluates its new points and re-reduces the
    cached values exactly.  Returns one :class:`EstimatorResult` per
    level (``result.m`` set).
    """
    if m_min > m_max:
        raise ValueError("m_min must not exceed m_max")
    if m_min < 0:
        raise ValueError("ladder levels must be non-negative")
    target = problem.target if target is None else target
    n_max = 2 ** m_max
    rule = make_rule(z, n_max, n_shifts, seed, dim=problem.dim)
    values = np.full((n_shifts, n_max + 1), np.nan)
    results = []
    for m in range(m_min, m_max + 1):
        t0 = time.perf_counter()
        step = 2 ** (m_max - m)
        n = 2 ** m
        level_idx = np.arange(1, n + 1, dtype=np.int64) * step
        new_idx = level_idx[np.isnan(values[0, level_idx])]
        if new_idx.size:
            blocks = []
            labels = []
            for r in range(n_shifts):
                blocks.append(lattice_points(rule, new_idx, r, target))
                labels.extend((r, int(i)) for i in new_idx)
            fresh = evaluate_points(
                problem, np.vstack(blocks), workers=workers, labels=labels
            )
            for r in range(n_shifts):
                values[r, new_idx] = fresh[r * len(new_idx) : (r + 1) * len(new_idx)]
        per_shift = np.array(
            [math.fsum(values[r, level_idx]) / n for r in range(n_shifts)]
        )
        mean, rms = _aggregate(per_shift)
        results.append(
            EstimatorResult(
                mean=mean,
                rms_error=rms,
                per_shift_values=per_shift,
                n_points=n,
                n_shifts=n_shifts,
                wall_seconds=time.perf_counter() - t0,
                kind="qmc",
                m=m,
            )
        )
    return results


# -- plain Monte Carlo ----------------------------------------------------------------


def mc_points(dim, n_samples, seed, target="centered"):
    """The first ``n_samples`` i.i.d. parameter vectors of the MC stream.

    Drawn from a counter-based stream keyed by the seed, row-major, so
    any prefix of a longer draw coincides with a shorter draw.
    """
    u = philox_generator(seed, STREAM_MC).random((n_samples, dim))
    if target == "centered":
        return u - 0.5
    if target == "gaussian":
        u = np.where(u == 0.0, ZERO_GUARD, u)
        return inverse_normal_cdf(u)
    raise ValueError(f"unknown target {target!r}")


def mc_values(problem, n_samples, seed, workers=1):
    """Evaluations at the first ``n_samples`` MC parameter vectors."""
    pts = mc_points(problem.dim, n_samples, seed, problem.target)
    return evaluate_points(problem, pts, workers=workers)


def mc_summary(values):
    """Exact-order (mean, standard error) of a value array."""
    n = len(values)
    if n < 2:
        raise ValueError("need at least two samples")
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def mc_estimate(problem, n_samples, seed, workers=1):
    """Plain Monte Carlo estimate: ``(mean, standard_error)``."""
    return mc_summary(mc_values(problem, n_samples, seed, workers=workers))


def fit_rate(levels):
    """Least-squares slope of ``log(error)`` against ``log(N)``.

    ``levels`` is a sequence of ``(N, error)`` pairs; at least three are
    required and all errors must be positive.
    """
    pairs = [(float(n), float(e)) for n, e in levels]
    if len(pairs) < 3:
        raise ValueError("need at least three levels to fit a rate")
    if any(e <= 0 for _, e in pairs) or any(n <= 0 for n, _ in pairs):
        raise ValueError("levels must have positive N and positive error")
    log_n = np.log([n for n, _ in pairs])
    log_e = np.log([e for _, e in pairs])
    slope, _ = np.polyfit(log_n, log_e, 1)
    return float(slope)
