"""Implicit Euler time stepping for a semilinear growth model.

The continuous model on a domain ``D`` with zero-flux boundary is

    du/dt - div(a grad u) - kappa u (1 - u) + f u = g,

where ``a`` is the diffusion field, ``kappa`` the proliferation field,
``f`` a time-dependent therapy sink and ``g`` an optional source.  The
quadratic term is discretized nodally (group finite elements): the
weighted mass matrix of ``kappa`` is applied to the vector of nodal
values of ``u - u**2``, which keeps the Newton Jacobian on the fixed
sparsity pattern of the mesh.

An exponential substitution ``u = exp(lam t) w`` with ``lam`` above the
largest proliferation value turns the model into one with a sign-definite
reaction part; :func:`solve_shifted` integrates that form and maps the
terminal state back.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .assembly import MIDEDGE, AssemblyPattern
from .treatment import eval_f


class NewtonDivergenceError(Exception):
    """Newton iteration failed to reach the residual tolerance.

    Attributes
    ----------
    trace : list of float
        Residual norms of all iterates, including the rejected last one.
    time : float
        Time level at which the step failed.
    """

    def __init__(self, message, trace, time):
        super().__init__(message)
        self.trace = trace
        self.time = time

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.trace, self.time))


@dataclass
class SolverConfig:
    """Time stepping and Newton parameters.

    ``lambda_shift`` controls the exponential substitution used by
    :func:`solve_shifted`: 0 disables it, ``"auto"`` selects
    ``kappa_max + 1`` for each coefficient sample, and a float is used
    as given (it must exceed the sample's largest proliferation value).
    """

    dt: float = 0.125
    t_end: float = 7.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    mass_lumping: bool = False
    lambda_shift: Union[float, str] = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be at least 1")

    def n_steps(self):
        """Number of steps; t_end/dt is rounded to the nearest integer."""
        n = int(round(self.t_end / self.dt))
        if n < 1:
            raise ValueError("t_end must cover at least one step")
        return n


@dataclass
class SolveResult:
    """Terminal state and diagnostics of one integration."""

    u: np.ndarray
    times: np.ndarray
    newton_iterations: int
    node_min: float
    node_max: float
    trajectory: Optional[np.ndarray] = None
    lambda_shift: Optional[float] = None
    w: Optional[np.ndarray] = None
    w_level_bounds: Optional[np.ndarray] = None


def _newton(residual, jac_values, lin_solve, v0, tol, max_iter, time):
    v = v0.copy()
    trace = []
    for _ in range(max_iter):
        r = residual(v)
        rnorm = float(np.sqrt(np.sum(r * r)))
        trace.append(rnorm)
        if rnorm <= tol:
            return v, trace
        if not np.isfinite(rnorm):
            break
        v = v + lin_solve(jac_values(v), -r)
    r = residual(v)
    rnorm = float(np.sqrt(np.sum(r * r)))
    trace.append(rnorm)
    if rnorm <= tol:
        return v, trace
    raise NewtonDivergenceError(
        f"Newton did not reach tol={tol} within {max_iter} iterations "
        f"at t={time}; residual trace {trace}",
        trace,
        time,
    )


def _therapy_values(pattern, radiotherapy, chemotherapy, t, lumped):
    """Matrix values of the therapy sink at time ``t``, or None if zero."""
    if radiotherapy is None and chemotherapy is None:
        return None
    f_quad = eval_f(pattern.quad_points, t, radiotherapy, chemotherapy)
    if not np.any(f_quad):
        return None
    if lumped:
        return pattern.diagonal_values(pattern.load_values(f_quad))
    return pattern.weighted_mass_values(f_quad)


def forcing_table(pattern, radiotherapy, chemotherapy, config):
    """Per-level therapy matrix values, shared across coefficient samples.

    Entry ``level`` holds the values for the step ending at
    ``level * config.dt`` (entry 0 is unused).  Pass the result to
    steppers as ``forcing_values_by_level`` so repeated solves on the
    same mesh and schedule skip the therapy reassembly.
    """
    n = config.n_steps()
    table = [None] * (n + 1)
    times = np.arange(n + 1) * config.dt
    for level in range(1, n + 1):
        table[level] = _therapy_values(
            pattern, radiotherapy, chemotherapy, times[level], config.mass_lumping
        )
    return table


class Stepper:
    """Discrete operators of one coefficient sample on a fixed mesh.

    Assembles the mass, stiffness and proliferation matrices once and
    exposes single implicit Euler steps for both the plain and the
    exponentially substituted form.  With ``mass_lumping`` enabled, the
    time-derivative and all reaction matrices are row-sum lumped, which
    makes the step operator an M-matrix on meshes without obtuse
    triangles and preserves the invariant region of the model.

    Parameters
    ----------
    mesh : Mesh
    diffusion, growth : scalar, callable or quad-point array
        Coefficient fields ``a`` (strictly positive) and ``kappa``.
    radiotherapy, chemotherapy : schedules, optional
    config : SolverConfig
    source : callable (points, t) -> values, optional
    pattern : AssemblyPattern, optional
        Reuse a precomputed pattern for the mesh.
    forcing_values_by_level : sequence of arrays, optional
        Precomputed therapy matrix values per time level (index 1..n);
        used by study drivers to share the tables across samples.
    """

    def __init__(
        self,
        mesh,
        diffusion,
        growth,
        radiotherapy=None,
        chemotherapy=None,
        config=None,
        source=None,
        pattern=None,
        forcing_values_by_level=None,
    ):
        self.config = config if config is not None else SolverConfig()
        self.pattern = pattern if pattern is not None else AssemblyPattern(mesh, MIDEDGE)
        self.mesh = mesh
        self.radiotherapy = radiotherapy
        self.chemotherapy = chemotherapy
        self.source = source
        self._forcing_by_level = forcing_values_by_level

        pat = self.pattern
        self.lin_solve = pat.make_linear_solver()
        mass_vals = pat.mass_values()
        growth_vals = pat.weighted_mass_values(growth)
        if self.config.mass_lumping:
            self._m_vals = pat.diagonal_values(self._row_sums(mass_vals))
            self._g_vals = pat.diagonal_values(self._row_sums(growth_vals))
        else:
            self._m_vals = mass_vals
            self._g_vals = growth_vals
        self._k_vals = pat.stiffness_values(diffusion)

        from .assembly import _coefficient_at_quad

        self.kappa_max = float(
            np.max(_coefficient_at_quad(growth, pat.quad_points))
        )
        self._mass_csr = pat.csr(self._m_vals)
        self._growth_csr = pat.csr(self._g_vals)
        self._work_csr = pat.csr(np.zeros(pat.nnz))

    def _row_sums(self, values):
        return np.bincount(
            self.pattern.entry_rows, weights=values, minlength=self.mesh.n_nodes
        )

    def forcing_values(self, t):
        """Therapy matrix values at time ``t`` on the shared pattern."""
        return _therapy_values(
            self.pattern,
            self.radiotherapy,
            self.chemotherapy,
            t,
            self.config.mass_lumping,
        )

    def _forcing_at_level(self, level, t):
        if self._forcing_by_level is not None:
            return self._forcing_by_level[level]
        return self.forcing_values(t)

    def _source_load(self, t):
        if self.source is None:
            return None
        return self.pattern.load_values(
            self.source(self.pattern.quad_points, t)
        )

    def step(self, u_n, t_next, level=None):
        """One implicit Euler step of the plain form ending at ``t_next``."""
        dt = self.config.dt
        a_vals = self._m_vals / dt + self._k_vals
        f_vals = (
            self._forcing_at_level(level, t_next)
            if level is not None
            else self.forcing_values(t_next)
        )
        if f_vals is not None:
            a_vals = a_vals + f_vals
        rhs0 = self._mass_csr.dot(u_n) / dt
        b = self._source_load(t_next)
        if b is not None:
            rhs0 = rhs0 + b
        A = self._work_csr
        A.data[:] = a_vals
        R = self._growth_csr
        cols = self.pattern.indices
        g_vals = self._g_vals

        def residual(v):
            return A.dot(v) - R.dot(v - v * v) - rhs0

        def jac_values(v):
            return a_vals - g_vals * (1.0 - 2.0 * v)[cols]

        return _newton(
            residual,
            jac_values,
            self.lin_solve,
            u_n,
            self.config.newton_tol,
            self.config.newton_max_iter,
            t_next,
        )

    def step_shifted(self, w_n, t_next, lam, level=None):
        """One implicit Euler step of the substituted form ``u = e^(lam t) w``."""
        dt = self.config.dt
        f_vals = (
            self._forcing_at_level(level, t_next)
            if level is not None
            else self.forcing_values(t_next)
        )
        a_vals = self._m_vals * (1.0 / dt + lam) + self._k_vals - self._g_vals
        if f_vals is not None:
            a_vals = a_vals + f_vals
        efac = float(np.exp(lam * t_next))
        rhs0 = self._mass_csr.dot(w_n) / dt
        b = self._source_load(t_next)
        if b is not None:
            rhs0 = rhs0 + b
        A = self._work_csr
        A.data[:] = a_vals
        R = self._growth_csr
        cols = self.pattern.indices
        g_vals = self._g_vals

        def residual(v):
            return A.dot(v) + efac * R.dot(v * v) - rhs0

        def jac_values(v):
            return a_vals + efac * g_vals * (2.0 * v)[cols]

        return _newton(
            residual,
            jac_values,
            self.lin_solve,
            w_n,
            self.config.newton_tol,
            self.config.newton_max_iter,
            t_next,
        )

    def initial_vector(self, initial):
        if callable(initial):
            u0 = np.asarray(initial(self.mesh.nodes), dtype=float)
        else:
            u0 = np.asarray(initial, dtype=float)
            if u0.ndim == 0:
                u0 = np.full(self.mesh.n_nodes, float(u0))
        if u0.shape != (self.mesh.n_nodes,):
            raise ValueError("initial state must provide one value per node")
        if u0.min() < 0.0 or u0.max() > 1.0:
            raise ValueError(
                f"initial state must take values in [0, 1]; "
                f"range [{u0.min()}, {u0.max()}]"
            )
        return u0

    def qoi(self, u):
        """Integral of the state over the domain (consistent mass)."""
        if self.config.mass_lumping:
            mass = self.pattern.mass_values()
            return float(np.sum(self.pattern.csr(mass).dot(u)))
        return float(np.sum(self._mass_csr.dot(u)))


def resolve_lambda(lambda_shift, kappa_max):
    """Resolve the substitution rate: ``"auto"`` selects ``kappa_max + 1``."""
    if isinstance(lambda_shift, str):
        if lambda_shift != "auto":
            raise ValueError(f"unknown lambda_shift setting {lambda_shift!r}")
        return kappa_max + 1.0
    lam = float(lambda_shift)
    if lam <= kappa_max:
        raise ValueError(
            f"lambda_shift must exceed the largest proliferation value "
            f"{kappa_max}, got {lam}"
        )
    return lam


def solve(
    mesh,
    initial,
    diffusion,
    growth,
    radiotherapy=None,
    chemotherapy=None,
    config=None,
    source=None,
    keep_trajectory=False,
    pattern=None,
    forcing_values_by_level=None,
):
    """Integrate the plain form up to ``config.t_end``.

    Returns a :class:`SolveResult` with the terminal state, the running
    extrema over all time levels and, optionally, the full trajectory
    (one row per time level).
    """
    stepper = Stepper(
        mesh,
        diffusion,
        growth,
        radiotherapy,
        chemotherapy,
        config,
        source,
        pattern,
        forcing_values_by_level,
    )
    return run_stepper(stepper, initial, keep_trajectory=keep_trajectory)


def run_stepper(stepper, initial, keep_trajectory=False):
    """Drive a prepared :class:`Stepper` over the full time grid."""
    cfg = stepper.config
    n = cfg.n_steps()
    times = np.arange(n + 1) * cfg.dt
    u = stepper.initial_vector(initial)
    node_min = float(u.min())
    node_max = float(u.max())
    total_iters = 0
    traj = [u.copy()] if keep_trajectory else None
    for level in range(1, n + 1):
        u, trace = stepper.step(u, times[level], level=level)
        total_iters += len(trace) - 1
        node_min = min(node_min, float(u.min()))
        node_max = max(node_max, float(u.max()))
        if keep_trajectory:
            traj.append(u.copy())
    return SolveResult(
        u=u,
        times=times,
        newton_iterations=total_iters,
        node_min=node_min,
        node_max=node_max,
        trajectory=np.array(traj) if keep_trajectory else None,
    )


def solve_shifted(
    mesh,
    initial,
    diffusion,
    growth,
    radiotherapy=None,
    chemotherapy=None,
    config=None,
    source=None,
    keep_trajectory=False,
    pattern=None,
    forcing_values_by_level=None,
):
    """Integrate the exponentially substituted form and map back.

    Solves for ``w`` with ``u = exp(lam t) w`` where ``lam`` comes from
    ``config.lambda_shift`` (see :class:`SolverConfig`), then returns the
    mapped terminal state.  Per-level extrema of ``w`` are recorded in
    ``w_level_bounds`` (rows of ``(min, max)``), since the substituted
    solution should remain within ``[0, exp(-lam t)]``.
    """
    stepper = Stepper(
        mesh,
        diffusion,
        growth,
        radiotherapy,
        chemotherapy,
        config,
        source,
        pattern,
        forcing_values_by_level,
    )
    cfg = stepper.config
    lam = resolve_lambda(cfg.lambda_shift, stepper.kappa_max)
    n = cfg.n_steps()
    times = np.arange(n + 1) * cfg.dt
    w = stepper.initial_vector(initial)
    bounds = np.empty((n + 1, 2))
    bounds[0] = (float(w.min()), float(w.max()))
    total_iters = 0
    traj = [w.copy()] if keep_trajectory else None
    for level in range(1, n + 1):
        w, trace = stepper.step_shifted(w, times[level], lam, level=level)
        total_iters += len(trace) - 1
        bounds[level] = (float(w.min()), float(w.max()))
        if keep_trajectory:
            traj.append(w.copy())
    u = float(np.exp(lam * times[-1])) * w
    return SolveResult(
        u=u,
        times=times,
        newton_iterations=total_iters,
        node_min=float(bounds[:, 0].min()),
        node_max=float(bounds[:, 1].max()),
        trajectory=np.array(traj) if keep_trajectory else None,
        lambda_shift=lam,
        w=w,
        w_level_bounds=bounds,
    )


def state_integral(mesh, u, pattern=None):
    """Integral of a nodal state over the domain, by consistent mass."""
    pat = pattern if pattern is not None else AssemblyPattern(mesh, MIDEDGE)
    return float(np.sum(pat.csr(pat.mass_values()).dot(np.asarray(u, dtype=float))))


def apriori_constant(a_min, a_max, kappa_max, f_max, lam):
    """Stability constant of the substituted form.

    ``(1 + a_max + lam + f_max) / sqrt(2 min(a_min, lam - kappa_max))``;
    requires a strictly positive diffusion lower bound and
    ``lam > kappa_max``.  The value diverges as ``lam`` approaches
    ``kappa_max`` from above.
    """
    if not a_min > 0:
        raise ValueError(f"diffusion lower bound must be positive, got {a_min}")
    if not lam > kappa_max:
        raise ValueError(
            f"lam must exceed kappa_max={kappa_max}, got {lam}"
        )
    if f_max < 0:
        raise ValueError(f"f_max must be non-negative, got {f_max}")
    denom = 2.0 * min(a_min, lam - kappa_max)
    return (1.0 + a_max + lam + f_max) / np.sqrt(denom)


def gaussian_bump(amplitude, width, center):
    """Radial Gaussian profile ``A exp(-|x - c|^2 / (2 width^2))``."""
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError("amplitude must lie in [0, 1]")
    if not width > 0:
        raise ValueError("width must be positive")
    cx, cy = float(center[0]), float(center[1])

    def profile(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
        return amplitude * np.exp(-r2 / (2.0 * width * width))

    return profile
