"""P1 finite element assembly on triangle meshes.

All matrices are assembled over a shared sparsity pattern (node
adjacency in CSR layout).  :class:`AssemblyPattern` precomputes element
geometry, quadrature points and the scatter map from local 3x3 blocks
into the CSR value array, so repeated assemblies with new coefficient
samples reduce to a handful of vectorized array operations.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg.lapack import get_lapack_funcs


class CoefficientBoundError(Exception):
    """Raised when a diffusion coefficient is not strictly positive."""


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric quadrature rule on the reference triangle.

    ``points`` holds barycentric coordinates of shape (n_q, 3) and
    ``weights`` sums to one; physical integrals are ``area * sum_q w_q
    f(x_q)``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to 1")


#: Three-point edge-midpoint rule, exact for polynomials of degree 2.
MIDEDGE = QuadratureRule(
    points=np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    weights=np.array([1.0, 1.0, 1.0]) / 3.0,
)


def _coefficient_at_quad(coeff, quad_points):
    """Evaluate a scalar/callable/array coefficient at quadrature points."""
    if callable(coeff):
        vals = np.asarray(coeff(quad_points), dtype=float)
        if vals.shape != (len(quad_points),):
            raise ValueError(
                "coefficient callable must return one value per point"
            )
        return vals
    vals = np.asarray(coeff, dtype=float)
    if vals.ndim == 0:
        return np.full(len(quad_points), float(vals))
    if vals.shape != (len(quad_points),):
        raise ValueError(
            f"coefficient array has shape {vals.shape}, "
            f"expected ({len(quad_points)},)"
        )
    return vals


class AssemblyPattern:
    """Reusable assembly workspace for one mesh and quadrature rule.

    Parameters
    ----------
    mesh : Mesh
    quadrature : QuadratureRule, optional
        Defaults to the degree-2 edge-midpoint rule.
    """

    def __init__(self, mesh, quadrature=MIDEDGE):
        self.mesh = mesh
        self.quadrature = quadrature
        tri = mesh.triangles
        n = mesh.n_nodes
        m = mesh.n_triangles

        areas = mesh.triangle_areas()
        if np.any(areas <= 0):
            raise ValueError("mesh contains non-CCW or degenerate triangles")
        self.areas = areas

        p = mesh.nodes[tri]  # (m, 3, 2)
        # grad of barycentric basis: rotated opposite edges over 2*area.
        g = np.empty((m, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
            g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
        g /= (2.0 * areas)[:, None, None]
        self.gradients = g
        # Gram matrix of gradients scaled by area: integral of grad_i.grad_j.
        self.grad_gram = np.einsum("tid,tjd->tij", g, g) * areas[:, None, None]

        q = quadrature.points
        w = quadrature.weights
        self.n_quad = len(w)
        # Physical quadrature points, flattened triangle-major: (m*n_q, 2).
        self.quad_points = np.einsum("qk,tkd->tqd", q, p).reshape(-1, 2)
        # Outer products of basis values at each quadrature point.
        self.phi_outer = np.einsum("q,qi,qj->qij", w, q, q)
        self.phi_weights = w[:, None] * q  # (n_q, 3)

        # Canonical CSR pattern over node adjacency.
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        ones = np.ones(rows.size)
        csr = sp.coo_matrix((ones, (rows, cols)), shape=(n, n)).tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        self.indptr = csr.indptr
        self.indices = csr.indices
        self.nnz = csr.nnz
        counts = np.diff(self.indptr)
        self.entry_rows = np.repeat(np.arange(n), counts)
        keys = self.entry_rows.astype(np.int64) * n + self.indices
        self.scatter = np.searchsorted(keys, rows.astype(np.int64) * n + cols)
        self.scatter = self.scatter.reshape(m, 3, 3)
        self.bandwidth = int(np.max(np.abs(self.entry_rows - self.indices)))
        self.diagonal_positions = np.searchsorted(
            keys, np.arange(n, dtype=np.int64) * n + np.arange(n)
        )

    def diagonal_values(self, diag):
        """Embed a diagonal matrix into this pattern's CSR value array."""
        values = np.zeros(self.nnz)
        values[self.diagonal_positions] = diag
        return values

    def node_to_quad_matrix(self):
        """Sparse interpolation from nodal values to all quadrature points."""
        m = self.mesh.n_triangles
        nq = self.n_quad
        rows = np.repeat(np.arange(m * nq), 3)
        cols = np.broadcast_to(
            self.mesh.triangles[:, None, :], (m, nq, 3)
        ).ravel()
        vals = np.broadcast_to(
            self.quadrature.points[None, :, :], (m, nq, 3)
        ).ravel()
        return sp.csr_matrix(
            (vals, (rows, cols)), shape=(m * nq, self.mesh.n_nodes)
        )

    # -- value-array assembly ------------------------------------------------

    def mass_values(self):
        """CSR values of the consistent mass matrix."""
        local = self.areas[:, None, None] * self.phi_outer.sum(axis=0)
        return np.bincount(
            self.scatter.ravel(), weights=local.ravel(), minlength=self.nnz
        )

    def stiffness_values(self, coeff):
        """CSR values of the stiffness matrix with coefficient ``coeff``.

        ``coeff`` may be a scalar, a callable on point arrays, or values
        already evaluated at ``self.quad_points``.  It must be strictly
        positive at every quadrature point.
        """
        c = _coefficient_at_quad(coeff, self.quad_points)
        cmin = c.min()
        if not cmin > 0.0:
            raise CoefficientBoundError(
                f"diffusion coefficient must be positive at all quadrature "
                f"points; min value {cmin}"
            )
        element_int = (
            c.reshape(-1, self.n_quad) @ self.quadrature.weights
        )  # (m,) mean over quad points
        local = element_int[:, None, None] * self.grad_gram
        return np.bincount(
            self.scatter.ravel(), weights=local.ravel(), minlength=self.nnz
        )

    def weighted_mass_values(self, weight):
        """CSR values of the mass matrix weighted by a scalar field."""
        wvals = _coefficient_at_quad(weight, self.quad_points)
        local = np.einsum(
            "tq,qij->tij", wvals.reshape(-1, self.n_quad), self.phi_outer
        )
        local *= self.areas[:, None, None]
        return np.bincount(
            self.scatter.ravel(), weights=local.ravel(), minlength=self.nnz
        )

    def load_values(self, func):
        """Load vector of a scalar source: integral of ``func * phi_i``."""
        vals = _coefficient_at_quad(func, self.quad_points)
        contrib = vals.reshape(-1, self.n_quad) @ self.phi_weights  # (m, 3)
        contrib *= self.areas[:, None]
        return np.bincount(
            self.mesh.triangles.ravel(),
            weights=contrib.ravel(),
            minlength=self.mesh.n_nodes,
        )

    # -- matrix views and linear solves --------------------------------------

    def csr(self, values):
        """CSR matrix sharing this pattern's index structure."""
        n = self.mesh.n_nodes
        return sp.csr_matrix((values, self.indices, self.indptr), shape=(n, n))

    def make_linear_solver(self):
        """Return ``solve(values, rhs) -> x`` using a direct factorization.

        Meshes with a small bandwidth (structured grids) are solved with
        a banded LAPACK factorization; anything else falls back to a
        sparse LU.
        """
        n = self.mesh.n_nodes
        bw = self.bandwidth
        if bw <= 64 and (3 * bw + 1) <= n:
            # LAPACK general-band storage with bw extra fill rows on top;
            # the buffer is preallocated in Fortran order and rebuilt from
            # the pattern's value array on every call.
            offsets = 2 * bw + (self.entry_rows - self.indices)
            cols = self.indices
            ab = np.zeros((3 * bw + 1, n), order="F")
            (gbsv,) = get_lapack_funcs(("gbsv",), (ab,))

            def solve(values, rhs):
                ab.fill(0.0)
                ab[offsets, cols] = values
                _, _, x, info = gbsv(bw, bw, ab, rhs, overwrite_ab=1)
                if info != 0:
                    raise np.linalg.LinAlgError(
                        f"banded factorization failed (info={info})"
                    )
                return x

            return solve

        indices, indptr = self.indices, self.indptr

        def solve(values, rhs):
            mat = sp.csc_matrix(
                sp.csr_matrix((values, indices, indptr), shape=(n, n))
            )
            return spla.splu(mat).solve(rhs)

        return solve


# -- one-shot assembly functions ---------------------------------------------


def assemble_mass(mesh, quadrature=MIDEDGE):
    """Consistent P1 mass matrix; entries sum to the domain area."""
    pattern = AssemblyPattern(mesh, quadrature)
    return pattern.csr(pattern.mass_values())


def assemble_stiffness(mesh, coeff, quadrature=MIDEDGE):
    """Stiffness matrix with strictly positive coefficient ``coeff``."""
    pattern = AssemblyPattern(mesh, quadrature)
    return pattern.csr(pattern.stiffness_values(coeff))


def assemble_weighted_mass(mesh, weight, quadrature=MIDEDGE):
    """Mass matrix weighted by the scalar field ``weight``."""
    pattern = AssemblyPattern(mesh, quadrature)
    return pattern.csr(pattern.weighted_mass_values(weight))


def assemble_load(mesh, func, quadrature=MIDEDGE):
    """Load vector of the source ``func`` against all P1 basis functions."""
    pattern = AssemblyPattern(mesh, quadrature)
    return pattern.load_values(func)


def lump_rows(matrix):
    """Row-sum lumping: the diagonal of the lumped matrix as a vector."""
    return np.asarray(matrix.sum(axis=1)).ravel()
