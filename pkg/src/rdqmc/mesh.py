"""Conforming triangle meshes of planar domains.

A mesh is a flat array of node coordinates plus a triangle connectivity
table with counter-clockwise orientation.  The module provides a
structured triangulation of a square, a whitespace-delimited text format
with save/load round-tripping, and point location / P1 interpolation
helpers used by nodal field models.
"""

from dataclasses import dataclass, field

import numpy as np


class MeshFormatError(Exception):
    """Raised when a mesh file cannot be parsed or fails validation."""


@dataclass
class Mesh:
    """Triangle mesh with CCW-oriented elements.

    Parameters
    ----------
    nodes : ndarray, shape (n_nodes, 2)
        Vertex coordinates.
    triangles : ndarray, shape (n_triangles, 3)
        Vertex indices of each triangle, counter-clockwise.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    _areas: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshFormatError("node array must have shape (n_nodes, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshFormatError("triangle array must have shape (n_triangles, 3)")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes)
        ):
            raise MeshFormatError("triangle refers to a node index out of range")

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def triangle_areas(self):
        """Signed areas of all triangles (positive for CCW orientation)."""
        if self._areas is None:
            p = self.nodes[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._areas

    @property
    def domain_area(self):
        """Total area covered by the triangulation."""
        return float(np.sum(self.triangle_areas()))

    def locate(self, points):
        """Find the containing triangle and barycentric coordinates of points.

        Parameters
        ----------
        points : ndarray, shape (n_pts, 2) or (2,)

        Returns
        -------
        tri_index : ndarray of int, shape (n_pts,)
            Index of a triangle containing each point (-1 if outside).
        bary : ndarray, shape (n_pts, 3)
            Barycentric coordinates with respect to that triangle.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.nodes[self.triangles]  # (m, 3, 2)
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (
            c[:, 0] - a[:, 0]
        ) * (b[:, 1] - a[:, 1])
        tri_index = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        tol = -1e-12
        for i, q in enumerate(pts):
            l1 = (
                (b[:, 0] - q[0]) * (c[:, 1] - q[1])
                - (c[:, 0] - q[0]) * (b[:, 1] - q[1])
            ) / det
            l2 = (
                (c[:, 0] - q[0]) * (a[:, 1] - q[1])
                - (a[:, 0] - q[0]) * (c[:, 1] - q[1])
            ) / det
            l3 = 1.0 - l1 - l2
            inside = (l1 >= tol) & (l2 >= tol) & (l3 >= tol)
            hits = np.nonzero(inside)[0]
            if hits.size:
                t = hits[0]
                tri_index[i] = t
                bary[i] = (l1[t], l2[t], l3[t])
        return tri_index, bary

    def interpolate(self, nodal_values, points):
        """Evaluate a P1 nodal field at arbitrary points inside the domain."""
        tri_index, bary = self.locate(points)
        if np.any(tri_index < 0):
            missing = np.atleast_2d(points)[tri_index < 0]
            raise ValueError(f"point outside the mesh: {missing[0]}")
        vals = np.asarray(nodal_values, dtype=float)
        return np.einsum("pk,pk->p", vals[self.triangles[tri_index]], bary)


def generate_structured(length, n):
    """Uniform right-triangle mesh of the square [0, length]^2.

    The square is divided into ``n x n`` cells; each cell is split by its
    lower-left to upper-right diagonal, giving ``(n+1)^2`` nodes and
    ``2 n^2`` triangles, all counter-clockwise.

    Parameters
    ----------
    length : float
        Side length of the square domain.
    n : int
        Number of cells per side.
    """
    if n < 1:
        raise ValueError(f"cell count must be positive, got {n}")
    if not length > 0:
        raise ValueError(f"side length must be positive, got {length}")
    h = length / n
    grid = np.arange(n + 1) * h
    xx, yy = np.meshgrid(grid, grid, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ll = (iy * (n + 1) + ix).ravel()
    lr = ll + 1
    ul = ll + (n + 1)
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(nodes, triangles)


def _data_lines(path):
    """Yield (line_number, tokens) for non-blank, non-comment lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            yield lineno, text.split()


def load_mesh(path):
    """Read a mesh from the plain-text format.

    The format is: one header line ``n_nodes n_triangles``, then
    ``n_nodes`` lines ``x y``, then ``n_triangles`` lines ``i j k`` with
    zero-based node indices.  ``#`` starts a comment; blank lines are
    ignored.  Triangles are reoriented counter-clockwise on load;
    degenerate (zero-area) triangles are rejected.
    """
    lines = _data_lines(path)

    def next_tokens(expect, what):
        try:
            lineno, tokens = next(lines)
        except StopIteration:
            raise MeshFormatError(
                f"{path}: unexpected end of file while reading {what}"
            ) from None
        if len(tokens) != expect:
            raise MeshFormatError(
                f"{path}:{lineno}: expected {expect} values for {what}, "
                f"got {len(tokens)}"
            )
        return lineno, tokens

    lineno, tokens = next_tokens(2, "the header")
    try:
        n_nodes, n_triangles = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise MeshFormatError(
            f"{path}:{lineno}: header must be two integers"
        ) from None
    if n_nodes < 3 or n_triangles < 1:
        raise MeshFormatError(
            f"{path}:{lineno}: need at least 3 nodes and 1 triangle"
        )

    nodes = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        lineno, tokens = next_tokens(2, f"node {i}")
        try:
            nodes[i] = (float(tokens[0]), float(tokens[1]))
        except ValueError:
            raise MeshFormatError(
                f"{path}:{lineno}: node coordinates must be numbers"
            ) from None

    triangles = np.empty((n_triangles, 3), dtype=np.int64)
    for t in range(n_triangles):
        lineno, tokens = next_tokens(3, f"triangle {t}")
        try:
            triangles[t] = [int(tok) for tok in tokens]
        except ValueError:
            raise MeshFormatError(
                f"{path}:{lineno}: triangle indices must be integers"
            ) from None
        if triangles[t].min() < 0 or triangles[t].max() >= n_nodes:
            raise MeshFormatError(
                f"{path}:{lineno}: node index out of range [0, {n_nodes - 1}]"
            )

    for lineno, _ in lines:
        raise MeshFormatError(f"{path}:{lineno}: trailing data after last triangle")

    # Fix orientation, then reject degenerate triangles.
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = areas < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    if np.any(areas == 0.0):
        bad = int(np.nonzero(areas == 0.0)[0][0])
        raise MeshFormatError(
            f"{path}: triangle {bad} has zero area (degenerate)"
        )
    return Mesh(nodes, triangles)


def save_mesh(mesh, path):
    """Write a mesh in the plain-text format read by :func:`load_mesh`.

    Coordinates are written with shortest round-trip precision so that
    ``load_mesh(save_mesh(m))`` reproduces them bit-exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.n_nodes} {mesh.n_triangles}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
