"""Randomly shifted rank-1 lattice rules and their construction.

A rule with generating vector ``z`` and ``N`` points evaluates integrands
at ``frac(i z / N + shift)``; uniform random shifts make the estimator
unbiased and give a practical error estimate from a handful of shifted
replicas.  The module also provides the component-by-component (CBC)
construction minimizing the shift-averaged worst-case error in weighted
Sobolev spaces (product or product-and-order-dependent weights), the
map from unit-cube points to standard normal coordinates, and small
number-theoretic helpers.
"""

import logging
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
from scipy.special import erfc, zeta

from .rng import STREAM_SHIFT, philox_generator

logger = logging.getLogger(__name__)

#: Substituted for an exact zero before the inverse normal map.
ZERO_GUARD = 2.0 ** -64


class GeneratingVectorError(Exception):
    """Raised for malformed or too-short generating vector files."""


# -- normal distribution helpers ----------------------------------------------


def normal_cdf(x):
    """Standard normal CDF via the complementary error function."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


_ACK_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_ACK_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_ACK_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_ACK_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)


def inverse_normal_cdf(p):
    """Inverse standard normal CDF, accurate to about 1e-13 absolutely.

    A rational initial approximation is polished with a single Halley
    step against the erfc-based CDF.  Probabilities in ``[1e-300,
    1 - 1e-16]`` are supported; values outside ``(0, 1)`` raise.
    """
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    q = np.atleast_1d(arr).copy()
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    # Work on the lower half; 1 - p is exact for p >= 0.5.
    flip = q > 0.5
    q[flip] = 1.0 - q[flip]

    x = np.empty_like(q)
    tail = q < 0.02425
    if np.any(tail):
        s = np.sqrt(-2.0 * np.log(q[tail]))
        c = _ACK_C
        d = _ACK_D
        num = ((((c[0] * s + c[1]) * s + c[2]) * s + c[3]) * s + c[4]) * s + c[5]
        den = (((d[0] * s + d[1]) * s + d[2]) * s + d[3]) * s + 1.0
        x[tail] = num / den
    mid = ~tail
    if np.any(mid):
        r = q[mid] - 0.5
        t = r * r
        a = _ACK_A
        b = _ACK_B
        num = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * r
        den = ((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0
        x[mid] = num / den

    # One Halley step: x <- x - u / (1 + x u / 2), u = (F(x) - q) / pdf(x).
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    err = 0.5 * erfc(-x / math.sqrt(2.0)) - q
    u = err / pdf
    x = x - u / (1.0 + 0.5 * x * u)

    x[flip] = -x[flip]
    return float(x[0]) if scalar else x.reshape(arr.shape)


# -- lattice rules --------------------------------------------------------------


@dataclass(frozen=True)
class LatticeRule:
    """A randomly shifted rank-1 lattice rule.

    ``z`` holds the generating vector reduced modulo ``n_points``;
    ``shifts`` has one row per randomization in ``[0, 1)^dim``.
    """

    z: np.ndarray
    n_points: int
    shifts: np.ndarray
    seed: int

    @property
    def dim(self):
        return len(self.z)

    @property
    def n_shifts(self):
        return self.shifts.shape[0]


def make_rule(z, n_points, n_shifts, seed, dim=None):
    """Build a :class:`LatticeRule` with counter-based random shifts.

    Shift ``r`` is drawn from a Philox stream keyed by ``(seed, r)``, so
    any shift is reproducible in isolation.
    """
    z = np.asarray(z, dtype=np.int64)
    if dim is not None:
        if len(z) < dim:
            raise GeneratingVectorError(
                f"generating vector has {len(z)} entries, need {dim}"
            )
        z = z[:dim]
    if n_points < 1:
        raise ValueError("n_points must be positive")
    if n_points > 1:
        z = np.mod(z, n_points)
        if np.any(z == 0):
            raise ValueError(
                "generating vector has a coordinate divisible by n_points"
            )
    if n_shifts < 1:
        raise ValueError("need at least one shift")
    shifts = np.stack(
        [
            philox_generator(seed, STREAM_SHIFT, r).random(len(z))
            for r in range(n_shifts)
        ]
    )
    return LatticeRule(z=z, n_points=int(n_points), shifts=shifts, seed=seed)


def _map_target(u, target):
    if target == "unit":
        return u
    if target == "centered":
        return u - 0.5
    if target == "gaussian":
        n_guard = int(np.count_nonzero(u == 0.0))
        if n_guard:
            logger.debug(
                "inverse normal map: %d zero coordinates replaced by 2^-64",
                n_guard,
            )
            u = np.where(u == 0.0, ZERO_GUARD, u)
        return inverse_normal_cdf(u)
    raise ValueError(f"unknown target {target!r}")


def lattice_points(rule, indices, shift_index, target="unit"):
    """Shifted lattice points for an array of 1-based indices.

    Returns an array of shape ``(len(indices), dim)`` mapped to the
    requested target: ``"unit"`` is the half-open unit cube,
    ``"centered"`` subtracts one half, and ``"gaussian"`` applies the
    inverse normal CDF (exact zeros are replaced by ``2^-64`` first).
    """
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    base = np.mod(idx[:, None] * rule.z[None, :], rule.n_points) / rule.n_points
    u = np.mod(base + rule.shifts[shift_index][None, :], 1.0)
    return _map_target(u, target)


def lattice_point(rule, index, shift_index, target="unit"):
    """Single shifted lattice point (1-based ``index``)."""
    return lattice_points(rule, [index], shift_index, target)[0]


# -- weight sequences ------------------------------------------------------------


@dataclass(frozen=True)
class WeightSequence:
    """Coordinate weights of a weighted Sobolev space.

    ``kind`` is ``"product"`` (weight of a coordinate subset is the
    product of its ``coordinate_factors``) or ``"pod"`` (that product is
    further multiplied by ``order_factors[len(subset)]``).
    """

    kind: str
    coordinate_factors: np.ndarray
    order_factors: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "coordinate_factors",
            np.asarray(self.coordinate_factors, dtype=float),
        )
        if self.kind not in ("product", "pod"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "pod":
            if self.order_factors is None:
                raise ValueError("pod weights need order_factors")
            object.__setattr__(
                self,
                "order_factors",
                np.asarray(self.order_factors, dtype=float),
            )

    @property
    def dim(self):
        return len(self.coordinate_factors)

    def subset_weight(self, subset):
        """Weight of a set of 1-based coordinate indices."""
        subset = sorted(set(int(j) for j in subset))
        if not subset:
            return 1.0
        prod = float(np.prod(self.coordinate_factors[[j - 1 for j in subset]]))
        if self.kind == "pod":
            order = len(subset)
            if order >= len(self.order_factors):
                return 0.0
            prod *= float(self.order_factors[order])
        return prod


def product_weights(decay, dim):
    """Product weights ``gamma_j = j**-decay``."""
    j = np.arange(1, dim + 1, dtype=float)
    return WeightSequence(kind="product", coordinate_factors=j ** -decay)


def falling_factorial_half(n):
    """Absolute falling factorial ``|(1/2)(1/2 - 1)...(1/2 - n + 1)|``."""
    if n < 0:
        raise ValueError("order must be non-negative")
    out = 1.0
    for i in range(n):
        out *= abs(0.5 - i)
    return out


def pod_weights(smoothness, rho_beta, max_order=None):
    """Product-and-order-dependent weights for a fluctuation sequence.

    For a smoothness exponent ``lam`` in ``(1/2, 1]`` and per-coordinate
    magnitudes ``rho_beta[j]``, the weight of a subset ``u`` is

        ([1/2]_{|u|} prod_{j in u} rho_beta[j] / C)^(2 / (1 + lam)),

    with ``C = sqrt(2 zeta(2 lam) / (2 pi^2)^lam)`` and ``[1/2]_n`` the
    absolute falling factorial.
    """
    lam = float(smoothness)
    if not 0.5 < lam <= 1.0:
        raise ValueError("smoothness exponent must lie in (1/2, 1]")
    rho_beta = np.asarray(rho_beta, dtype=float)
    if np.any(rho_beta <= 0):
        raise ValueError("fluctuation magnitudes must be positive")
    if max_order is None:
        max_order = len(rho_beta)
    c_norm = math.sqrt(2.0 * float(zeta(2.0 * lam)) / (2.0 * math.pi ** 2) ** lam)
    expo = 2.0 / (1.0 + lam)
    coord = (rho_beta / c_norm) ** expo
    orders = np.array(
        [falling_factorial_half(n) ** expo for n in range(max_order + 1)]
    )
    return WeightSequence(
        kind="pod", coordinate_factors=coord, order_factors=orders
    )


def euler_totient(n):
    """Euler's totient by trial-division factorization."""
    if n < 1:
        raise ValueError("totient is defined for positive integers")
    result = n
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            while m % p == 0:
                m //= p
            result -= result // p
        p += 1 if p == 2 else 2
    if m > 1:
        result -= result // m
    return result


def _prime_power_base(n):
    """Return the prime p with ``n = p**k``, or None if n is not one."""
    if n < 2:
        return None
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            while m % p == 0:
                m //= p
            return p if m == 1 else None
        p += 1 if p == 2 else 2
    return m


def _b2(x):
    """Bernoulli polynomial ``x^2 - x + 1/6`` of the fractional part."""
    return x * x - x + 1.0 / 6.0


# -- worst-case error and CBC construction ----------------------------------------


def wce(z, n_points, weights):
    """Shift-averaged worst-case error of the rule ``(z, n_points)``.

    For product weights this is

        e^2 = -1 + 1/N sum_k prod_j (1 + gamma_j B2(frac(k z_j / N))),

    with ``B2(x) = x^2 - x + 1/6``; the order-dependent variant sums the
    same kernel over weighted subset orders.  Tiny negative values of
    ``e^2`` from roundoff are clamped to zero.
    """
    z = np.asarray(z, dtype=np.int64)
    n = int(n_points)
    if n < 1:
        raise ValueError("n_points must be positive")
    k = np.arange(n, dtype=np.int64)
    b2_table = _b2(np.arange(n, dtype=float) / n)
    gam = weights.coordinate_factors
    if len(gam) < len(z):
        raise ValueError("weight sequence shorter than the vector")
    if weights.kind == "product":
        prod = np.ones(n)
        for j, zj in enumerate(z):
            prod *= 1.0 + gam[j] * b2_table[(k * int(zj)) % n]
        e2 = float(np.mean(prod)) - 1.0
    else:
        max_order = len(weights.order_factors) - 1
        p = np.zeros((max_order + 1, n))
        p[0] = 1.0
        for j, zj in enumerate(z):
            t = gam[j] * b2_table[(k * int(zj)) % n]
            top = min(j + 1, max_order)
            for order in range(top, 0, -1):
                p[order] += t * p[order - 1]
        e2 = float(np.mean(weights.order_factors[1:] @ p[1:]))
    return math.sqrt(max(e2, 0.0))


def cbc_construct(n_points, dim, weights):
    """Component-by-component generating vector minimizing the wce.

    ``n_points`` must be a prime power.  Candidates are scanned in
    increasing order and ties resolved toward the smaller value, making
    the construction deterministic.  Since ``z`` and ``N - z`` give the
    same error, only candidates up to ``N/2`` are considered.
    """
    n = int(n_points)
    if dim < 1:
        raise ValueError("dim must be positive")
    prime = _prime_power_base(n)
    if prime is None:
        raise ValueError(f"n_points must be a prime power, got {n}")
    if weights.dim < dim:
        raise ValueError("weight sequence shorter than the requested dim")

    k = np.arange(n, dtype=np.int64)
    b2_table = _b2(np.arange(n, dtype=float) / n)
    cands = np.array(
        [zc for zc in range(1, n // 2 + 1) if zc % prime != 0], dtype=np.int64
    )
    if cands.size == 0:
        raise ValueError(f"no admissible components for n_points={n}")

    # Precompute candidate kernel rows when that stays comfortably small.
    rows = None
    if cands.size * n <= 2 ** 24:
        rows = b2_table[np.mod(cands[:, None] * k[None, :], n)]

    gam = weights.coordinate_factors
    pod = weights.kind == "pod"
    if pod:
        max_order = len(weights.order_factors) - 1
        p = np.zeros((max_order + 1, n))
        p[0] = 1.0
    else:
        prod = np.ones(n)

    z = np.empty(dim, dtype=np.int64)
    for d in range(dim):
        if d == 0:
            # Every admissible first component generates the same 1-D point
            # set, so the scores tie exactly; pick 1 outright rather than
            # letting summation roundoff break the tie arbitrarily.
            zd = 1
        else:
            if pod:
                top = min(d + 1, max_order)
                profile = weights.order_factors[1 : top + 1] @ p[:top]
            else:
                profile = prod
            if rows is not None:
                scores = rows @ profile
            else:
                scores = np.empty(len(cands))
                chunk = max(1, 2 ** 24 // n)
                for lo in range(0, len(cands), chunk):
                    block = cands[lo : lo + chunk]
                    idx = np.mod(block[:, None] * k[None, :], n)
                    scores[lo : lo + len(block)] = b2_table[idx] @ profile
            zd = int(cands[int(np.argmin(scores))])
        z[d] = zd
        t = gam[d] * b2_table[(k * zd) % n]
        if pod:
            top = min(d + 1, max_order)
            for order in range(top, 0, -1):
                p[order] += t * p[order - 1]
        else:
            prod *= 1.0 + t
    return z


# -- generating vector files -------------------------------------------------------


def save_generating_vector(path, z, comment=None):
    """Write a generating vector, one integer per line."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"# {line}\n")
        for zj in np.asarray(z, dtype=np.int64):
            fh.write(f"{int(zj)}\n")


def load_generating_vector(path, dim=None):
    """Read a generating vector file (one positive integer per line).

    ``#`` starts a comment and blank lines are skipped.  When ``dim`` is
    given, the first ``dim`` entries are returned and a shorter file is
    an error.
    """
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError:
                raise GeneratingVectorError(
                    f"{path}:{lineno}: expected one integer, got {text!r}"
                ) from None
            if value < 1:
                raise GeneratingVectorError(
                    f"{path}:{lineno}: entries must be positive, got {value}"
                )
            entries.append(value)
    z = np.asarray(entries, dtype=np.int64)
    if dim is not None:
        if len(z) < dim:
            raise GeneratingVectorError(
                f"{path}: vector has {len(z)} entries, need {dim}"
            )
        z = z[:dim]
    return z


_DEFAULT_VECTOR_FILE = "lattice_cbc_n8192_s1024.txt"


def default_generating_vector(dim=None):
    """The bundled CBC vector (8192 points, 1024 dimensions)."""
    ref = resources.files("rdqmc.data").joinpath(_DEFAULT_VECTOR_FILE)
    with resources.as_file(ref) as path:
        return load_generating_vector(path, dim=dim)
