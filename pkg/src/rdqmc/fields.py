"""Random coefficient fields for the growth model.

Two parameterizations are provided:

* :class:`UniformAffineModel` - affine expansions of the diffusion and
  proliferation fields in products of sines, driven by uniform
  parameters on ``[-1/2, 1/2]^s``.  Odd coordinates (1-based) perturb
  the diffusion field, even coordinates the proliferation field.
* :class:`LognormalKLModel` - fields ``base + exp(Z)`` where ``Z`` is a
  truncated Karhunen-Loeve expansion of a Gaussian field with a
  Matern-like covariance, driven by i.i.d. standard normal parameters
  with the same odd/even interleaving.

The KL modes come from a generalized eigenvalue problem discretized
with P1 elements and solved with a randomized double-pass method.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .assembly import MIDEDGE, AssemblyPattern
from .rng import STREAM_KL, philox_generator


# -- uniform affine model ------------------------------------------------------


@dataclass
class UniformAffineModel:
    """Affine sine expansions of the diffusion and proliferation fields.

    On the square ``[0, length]^2`` the fields are

        a(x, y)     = a0 (1 + 1/2 sum_k y_{2k-1} k^-decay s_k(x)),
        kappa(x, y) = kappa0 (1 + 1/2 sum_k y_{2k} k^-decay s_k(x)),

    with ``s_k(x) = sin(k pi x_1 / length) sin(k pi x_2 / length)`` and
    parameters ``y in [-1/2, 1/2]^dim`` (1-based index convention).
    """

    dim: int
    base_diffusion: float = 0.05
    base_growth: float = 0.3
    decay: float = 2.0
    length: float = 100.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError("dim must be an even integer >= 2")
        if self.decay <= 1.0:
            raise ValueError("decay must exceed 1 for a summable expansion")
        if self.base_diffusion <= 0 or self.base_growth <= 0:
            raise ValueError("base field values must be positive")
        lo, _ = self.bounds_diffusion()
        if lo <= 0:
            raise ValueError(
                f"diffusion can reach {lo} <= 0; decrease dim or flatten decay"
            )

    @property
    def n_modes(self):
        return self.dim // 2

    def _mode_sum_bound(self):
        k = np.arange(1, self.n_modes + 1, dtype=float)
        return 0.25 * float(np.sum(k ** -self.decay))

    def bounds_diffusion(self):
        """(min, max) of the diffusion field over the parameter cube."""
        s = self._mode_sum_bound()
        return self.base_diffusion * (1.0 - s), self.base_diffusion * (1.0 + s)

    def bounds_growth(self):
        """(min, max) of the proliferation field over the parameter cube."""
        s = self._mode_sum_bound()
        return self.base_growth * (1.0 - s), self.base_growth * (1.0 + s)

    def fluctuation_bounds(self):
        """Sup norms of the expansion terms, interleaved (length ``dim``)."""
        k = np.arange(1, self.n_modes + 1, dtype=float)
        amp = 0.5 * k ** -self.decay
        beta = np.empty(self.dim)
        beta[0::2] = self.base_diffusion * amp
        beta[1::2] = self.base_growth * amp
        return beta

    def sine_table(self, points):
        """Mode profiles ``s_k`` at points, shape (n_modes, n_points)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = np.arange(1, self.n_modes + 1, dtype=float)[:, None]
        arg = np.pi / self.length
        return np.sin(k * arg * pts[:, 0]) * np.sin(k * arg * pts[:, 1])

    def evaluate_with_table(self, y, table):
        """Fields at the points of a precomputed :meth:`sine_table`."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(f"parameter vector must have length {self.dim}")
        if np.any(y < -0.5) or np.any(y > 0.5):
            raise ValueError(
                "parameter components must lie in [-1/2, 1/2]; the field "
                "bounds only hold on that cube"
            )
        k = np.arange(1, self.n_modes + 1, dtype=float)
        amp = 0.5 * k ** -self.decay
        a = self.base_diffusion * (1.0 + (y[0::2] * amp) @ table)
        kappa = self.base_growth * (1.0 + (y[1::2] * amp) @ table)
        return a, kappa

    def evaluate(self, y, points):
        """Fields ``(a, kappa)`` at an array of points."""
        return self.evaluate_with_table(y, self.sine_table(points))


def eval_uniform(model, y, x):
    """Evaluate a :class:`UniformAffineModel` at a single point ``x``."""
    a, kappa = model.evaluate(y, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(a[0]), float(kappa[0])


# -- covariance calibration ----------------------------------------------------


@dataclass(frozen=True)
class CovarianceSpec:
    """Parameters of the covariance operator ``(gamma (-lap) + delta)^-2``."""

    gamma: float
    delta: float

    def __post_init__(self):
        if self.gamma <= 0 or self.delta <= 0:
            raise ValueError("gamma and delta must be positive")


def calibrate_covariance(correlation_length, pointwise_variance):
    """Choose ``(gamma, delta)`` for a target length scale and variance.

    The operator ``(gamma (-lap) + delta)^-2`` on the plane is a Matern
    covariance with smoothness 1, inverse length ``k = sqrt(delta/gamma)``,
    marginal variance ``1 / (4 pi gamma delta)`` and the usual effective
    range ``sqrt(8)/k`` (correlation approximately 0.14 there).  Solving
    those two relations for the requested values gives

        k     = sqrt(8) / correlation_length,
        gamma = 1 / (2 sqrt(pi variance) k),
        delta = k^2 gamma.

    On a bounded domain with zero-flux boundaries the realized variance
    is larger near the boundary; the mapping is documented here and
    recorded in run metadata rather than corrected.
    """
    if correlation_length <= 0:
        raise ValueError("correlation_length must be positive")
    if pointwise_variance <= 0:
        raise ValueError("pointwise_variance must be positive")
    kappa_wave = math.sqrt(8.0) / correlation_length
    gamma = 1.0 / (2.0 * math.sqrt(math.pi * pointwise_variance) * kappa_wave)
    delta = kappa_wave ** 2 * gamma
    return CovarianceSpec(gamma=gamma, delta=delta)


# -- Karhunen-Loeve eigensolve ---------------------------------------------------


@dataclass
class KLExpansion:
    """Leading eigenpairs of the discretized covariance operator.

    ``modes`` columns are orthonormal in the mass inner product, and
    ``eigenvalues`` are sorted in descending order.  A Gaussian sample
    with coefficients ``y`` has nodal values
    ``modes @ (sqrt(eigenvalues) * y)``.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    spec: CovarianceSpec
    seed: int

    @property
    def n_modes(self):
        return len(self.eigenvalues)

    def evaluate_nodal(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n_modes,):
            raise ValueError(f"coefficient vector must have length {self.n_modes}")
        return self.modes @ (np.sqrt(np.maximum(self.eigenvalues, 0.0)) * y)


def _m_orthonormalize(y_block, mass):
    """Two rounds of Cholesky QR in the mass inner product."""
    q = y_block
    for _ in range(2):
        gram = q.T @ (mass @ q)
        gram = 0.5 * (gram + gram.T)
        try:
            chol = la.cholesky(gram, lower=True)
            q = la.solve_triangular(chol, q.T, lower=True).T
        except la.LinAlgError:
            # Rank-deficient block: whiten through an eigendecomposition.
            w, v = la.eigh(gram)
            keep = w > w.max() * 1e-14
            q = q @ (v[:, keep] / np.sqrt(w[keep]))
    return q


def compute_kl(
    mesh, spec, n_modes, oversample=10, power_iterations=1, seed=0, pattern=None
):
    """Leading KL eigenpairs by a randomized double-pass eigensolve.

    The covariance operator is ``C = A^-1 M A^-1 M`` with
    ``A = gamma K + delta M`` (stiffness and consistent mass with
    zero-flux boundaries).  The generalized problem ``M C phi = mu M phi``
    is approached through a Gaussian test block of ``n_modes +
    oversample`` columns, ``power_iterations`` extra applications of
    ``C``, mass orthonormalization, and a dense eigensolve of the small
    projected matrix.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    pat = pattern if pattern is not None else AssemblyPattern(mesh, MIDEDGE)
    n = mesh.n_nodes
    block = n_modes + oversample
    if block > n:
        raise ValueError(
            f"n_modes + oversample = {block} exceeds the node count {n}"
        )
    mass = pat.csr(pat.mass_values())
    stiff = pat.csr(pat.stiffness_values(1.0))
    a_op = (spec.gamma * stiff + spec.delta * mass).tocsc()
    a_lu = spla.splu(a_op)

    def cov_apply(x):
        return a_lu.solve(mass @ a_lu.solve(mass @ x))

    rng = philox_generator(seed, STREAM_KL)
    omega = rng.standard_normal((n, block))
    # Re-orthonormalize between operator applications: the spectrum can
    # span many orders of magnitude, and compounding applications on a
    # raw block squares the block's condition number each time, which
    # collapses the captured rank in double precision.
    q = _m_orthonormalize(cov_apply(omega), mass)
    for _ in range(power_iterations):
        q = _m_orthonormalize(cov_apply(q), mass)
    if q.shape[1] < n_modes:
        raise ValueError(
            f"captured subspace rank {q.shape[1]} fell below the requested "
            f"{n_modes} modes; the covariance spectrum decays below double "
            f"precision at this resolution"
        )
    t_small = q.T @ (mass @ cov_apply(q))
    t_small = 0.5 * (t_small + t_small.T)
    eigvals, eigvecs = la.eigh(t_small)
    order = np.argsort(eigvals)[::-1][:n_modes]
    modes = q @ eigvecs[:, order]
    # Deterministic sign: largest-magnitude component of each mode positive.
    flips = np.sign(modes[np.abs(modes).argmax(axis=0), np.arange(n_modes)])
    flips[flips == 0] = 1.0
    modes *= flips
    return KLExpansion(
        eigenvalues=eigvals[order].copy(),
        modes=modes,
        spec=spec,
        seed=seed,
    )


def fit_decay_slope(eigenvalues):
    """Least-squares slope of ``log sqrt(mu_k)`` against ``log k``."""
    mu = np.asarray(eigenvalues, dtype=float)
    k = np.arange(1, len(mu) + 1, dtype=float)
    return float(np.polyfit(np.log(k), 0.5 * np.log(mu), 1)[0])


def save_kl(expansion, path):
    """Write a KL expansion to a text cache with round-trip precision.

    Layout: a header line ``n_modes n_nodes gamma delta seed``, one line
    of eigenvalues, then one line per mode with its nodal values.
    """
    n_modes = expansion.n_modes
    n_nodes = expansion.modes.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"{n_modes} {n_nodes} {expansion.spec.gamma!r} "
            f"{expansion.spec.delta!r} {expansion.seed}\n"
        )
        fh.write(" ".join(repr(float(v)) for v in expansion.eigenvalues) + "\n")
        for k in range(n_modes):
            fh.write(
                " ".join(repr(float(v)) for v in expansion.modes[:, k]) + "\n"
            )


def load_kl(path):
    """Read a KL expansion written by :func:`save_kl` (bit-exact)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ValueError(f"{path}: malformed KL cache header")
        n_modes, n_nodes = int(header[0]), int(header[1])
        spec = CovarianceSpec(gamma=float(header[2]), delta=float(header[3]))
        seed = int(header[4])
        eigenvalues = np.array([float(t) for t in fh.readline().split()])
        if eigenvalues.shape != (n_modes,):
            raise ValueError(f"{path}: expected {n_modes} eigenvalues")
        modes = np.empty((n_nodes, n_modes))
        for k in range(n_modes):
            row = np.array([float(t) for t in fh.readline().split()])
            if row.shape != (n_nodes,):
                raise ValueError(f"{path}: mode {k} has wrong length")
            modes[:, k] = row
    return KLExpansion(eigenvalues=eigenvalues, modes=modes, spec=spec, seed=seed)


# -- lognormal model -------------------------------------------------------------


@dataclass
class LognormalKLModel:
    """Fields ``base + exp(Z)`` with truncated KL Gaussian exponents.

    Odd parameter coordinates (1-based) drive the diffusion exponent,
    even coordinates the proliferation exponent; both exponents carry
    the same number of modes, so the total dimension is even.
    """

    mesh: "Mesh"
    kl_diffusion: KLExpansion
    kl_growth: KLExpansion
    base_diffusion: float = 0.05
    base_growth: float = 0.3

    def __post_init__(self):
        if self.kl_diffusion.n_modes != self.kl_growth.n_modes:
            raise ValueError("both exponent expansions need the same mode count")
        n = self.mesh.n_nodes
        if self.kl_diffusion.modes.shape[0] != n:
            raise ValueError("diffusion modes do not match the mesh")
        if self.kl_growth.modes.shape[0] != n:
            raise ValueError("growth modes do not match the mesh")

    @property
    def dim(self):
        return 2 * self.kl_diffusion.n_modes

    def split(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(f"parameter vector must have length {self.dim}")
        return y[0::2], y[1::2]

    def exponent_nodal(self, y):
        """Nodal values of the two Gaussian exponents ``(Z_a, Z_kappa)``."""
        y_a, y_k = self.split(y)
        return (
            self.kl_diffusion.evaluate_nodal(y_a),
            self.kl_growth.evaluate_nodal(y_k),
        )

    def evaluate(self, y, points):
        """Fields ``(a, kappa)`` at arbitrary points via P1 interpolation."""
        z_a, z_k = self.exponent_nodal(y)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.base_diffusion + np.exp(self.mesh.interpolate(z_a, pts))
        kappa = self.base_growth + np.exp(self.mesh.interpolate(z_k, pts))
        return a, kappa


def eval_lognormal(model, y, x):
    """Evaluate a :class:`LognormalKLModel` at a single point ``x``."""
    a, kappa = model.evaluate(y, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(a[0]), float(kappa[0])
