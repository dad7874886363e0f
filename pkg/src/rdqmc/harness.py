"""Configuration-driven studies and tools.

The config format is flat ``key = value`` text with dotted section
prefixes (``qmc.m_max = 10``); ``#`` starts a full-line comment.  Every
key, its type and its default are listed in ``_SCHEMA`` below and in the
README.  Validation collects *all* violations before failing.

Four entry points mirror the command-line subcommands:

* :func:`run_study` - QMC/MC convergence study with CSV, plot script
  and metadata outputs;
* :func:`run_single` - one solve at an explicit parameter vector;
* :func:`run_kl` - precompute the lognormal mode caches and eigenvalue
  decay reports;
* :func:`run_cbc` - construct and save a lattice generating vector.

Every output except wall-clock fields (the ``wall_seconds`` CSV column
and the metadata ``volatile`` block) is a deterministic function of the
resolved config and seed, independent of the worker count.
"""

import hashlib
import json
import math
import time
from datetime import datetime, timezone
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from ._version import __version__
from .assembly import AssemblyPattern
from .estimator import (
    evaluate_points,
    fit_rate,
    mc_points,
    mc_summary,
    qmc_ladder,
)
from .fields import (
    LognormalKLModel,
    UniformAffineModel,
    calibrate_covariance,
    compute_kl,
    fit_decay_slope,
    load_kl,
    save_kl,
)
from .lattice import (
    _b2,
    cbc_construct,
    default_generating_vector,
    load_generating_vector,
    product_weights,
    save_generating_vector,
)
from .mesh import generate_structured, load_mesh
from .solver import (
    SolverConfig,
    forcing_table,
    gaussian_bump,
    resolve_lambda,
    apriori_constant,
    solve,
    solve_shifted,
)
from .treatment import default_week_protocol, f_max_bound


class ConfigError(Exception):
    """One or more configuration violations; ``errors`` lists them all."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))

    def __reduce__(self):
        return (self.__class__, (self.errors,))


# -- parsing ------------------------------------------------------------------


def parse_config_text(text):
    """Parse flat ``key = value`` lines into a raw string dict."""
    raw = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            errors.append(f"line {lineno}: empty key")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = value
    if errors:
        raise ConfigError(errors)
    return raw


def load_config(path):
    """Read and parse a config file."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


# -- schema -------------------------------------------------------------------


def _bool(s):
    low = s.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _int(s):
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None


def _float(s):
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None


def _pos_int(s):
    v = _int(s)
    if v < 1:
        raise ValueError(f"must be a positive integer, got {v}")
    return v


def _nonneg_int(s):
    v = _int(s)
    if v < 0:
        raise ValueError(f"must be a non-negative integer, got {v}")
    return v


def _pos_float(s):
    v = _float(s)
    if not v > 0:
        raise ValueError(f"must be positive, got {v}")
    return v


def _nonneg_float(s):
    v = _float(s)
    if v < 0:
        raise ValueError(f"must be non-negative, got {v}")
    return v


def _choice(*options):
    def parse(s):
        if s in options:
            return s
        raise ValueError(f"expected one of {options}, got {s!r}")

    return parse


def _day_list(s):
    if not s.strip():
        return ()
    try:
        days = tuple(float(p) for p in s.split(","))
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {s!r}") from None
    if any(b <= a for a, b in zip(days, days[1:])):
        raise ValueError("times must be strictly increasing")
    if any(d < 0 for d in days):
        raise ValueError("times must be non-negative")
    return days


def _center(s):
    if s == "auto":
        return "auto"
    parts = s.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'auto' or 'x,y', got {s!r}")
    return (_float(parts[0]), _float(parts[1]))


def _lambda_shift(s):
    if s == "auto":
        return "auto"
    return _nonneg_float(s)


def _unit_float(s):
    v = _float(s)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"must lie in [0, 1], got {v}")
    return v


def _string(s):
    return s


# key -> (parser, default); documented in the README config reference.
_SCHEMA = {
    "mode": (_choice("uniform", "lognormal"), "uniform"),
    "mesh.kind": (_choice("structured", "file"), "structured"),
    "mesh.n": (_pos_int, 25),
    "mesh.length": (_pos_float, 100.0),
    "mesh.path": (_string, ""),
    "time.dt": (_pos_float, 0.125),
    "time.t_end": (_pos_float, 7.0),
    "ic.amplitude": (_unit_float, 0.5),
    "ic.width": (_pos_float, 12.5),
    "ic.center": (_center, "auto"),
    "field.s": (_pos_int, 16),
    "field.a0": (_pos_float, 0.05),
    "field.kappa0": (_nonneg_float, 0.3),
    "field.decay": (_pos_float, 2.0),
    "cov.correlation_length": (_pos_float, 180.0),
    "cov.variance_a": (_pos_float, 0.2336),
    "cov.variance_kappa": (_pos_float, 0.0682),
    "cov.oversample": (_pos_int, 10),
    "cov.power_iterations": (_nonneg_int, 1),
    "cov.cache_dir": (_string, ""),
    "treatment.enabled": (_bool, True),
    "treatment.rt_days": (_day_list, (0.0, 1.0, 2.0, 3.0, 4.0)),
    "treatment.ct_days": (_day_list, (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)),
    "treatment.rt_dose": (_nonneg_float, 2.0),
    "treatment.ct_concentration": (_nonneg_float, 1.0),
    "treatment.alpha_rt": (_nonneg_float, 0.025),
    "treatment.alpha_beta_ratio": (_pos_float, 10.0),
    "treatment.alpha_ct": (_nonneg_float, 0.9),
    "treatment.ct_halflife_hours": (_pos_float, 1.8),
    "solver.newton_tol": (_pos_float, 1e-10),
    "solver.newton_max_iter": (_pos_int, 25),
    "solver.mass_lumping": (_bool, False),
    "solver.lambda_shift": (_lambda_shift, 0.0),
    "qmc.m_min": (_nonneg_int, 4),
    "qmc.m_max": (_nonneg_int, 10),
    "qmc.shifts": (_pos_int, 8),
    "qmc.vector": (_string, "cbc"),
    "qmc.weight_decay": (_pos_float, 2.0),
    "mc.enabled": (_bool, True),
    "cbc.n_points": (_pos_int, 1024),
    "cbc.dim": (_pos_int, 16),
    "seed": (_nonneg_int, 0),
    "workers": (_pos_int, 1),
    "out": (_string, ""),
}


def resolve_config(raw):
    """Validate a raw string dict against the schema.

    Returns the fully resolved config (defaults filled in).  All
    violations, including unknown keys and cross-field inconsistencies,
    are collected into a single :class:`ConfigError`.
    """
    errors = []
    cfg = {}
    for key, (parser, default) in _SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = parser(raw[key])
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
                cfg[key] = default
        else:
            cfg[key] = default
    for key in sorted(set(raw) - set(_SCHEMA)):
        errors.append(f"{key}: unknown key")

    if cfg["mesh.kind"] == "file":
        if not cfg["mesh.path"]:
            errors.append("mesh.path: required when mesh.kind = file")
        elif not Path(cfg["mesh.path"]).is_file():
            errors.append(f"mesh.path: no such file: {cfg['mesh.path']}")
    if cfg["field.s"] % 2 != 0:
        errors.append(f"field.s: must be even, got {cfg['field.s']}")
    if cfg["qmc.m_min"] > cfg["qmc.m_max"]:
        errors.append(
            f"qmc.m_min: must not exceed qmc.m_max "
            f"({cfg['qmc.m_min']} > {cfg['qmc.m_max']})"
        )
    if cfg["qmc.shifts"] < 2:
        errors.append("qmc.shifts: need at least two shifts for the rms estimate")
    if int(round(cfg["time.t_end"] / cfg["time.dt"])) < 1:
        errors.append("time.t_end: must cover at least one step of time.dt")
    if cfg["mode"] == "uniform" and cfg["field.decay"] <= 1.0:
        errors.append("field.decay: must exceed 1 for a summable fluctuation")
    if cfg["qmc.vector"] not in ("cbc", "bundled") and not Path(
        cfg["qmc.vector"]
    ).is_file():
        errors.append(
            f"qmc.vector: expected 'cbc', 'bundled' or an existing file, "
            f"got {cfg['qmc.vector']!r}"
        )
    if errors:
        raise ConfigError(errors)
    return cfg


# -- problem building ------------------------------------------------------------


def _build_mesh(cfg):
    if cfg["mesh.kind"] == "structured":
        return generate_structured(cfg["mesh.length"], cfg["mesh.n"])
    return load_mesh(cfg["mesh.path"])


def _build_schedules(cfg):
    if not cfg["treatment.enabled"]:
        return None, None
    return default_week_protocol(
        dt=cfg["time.dt"],
        rt_days=cfg["treatment.rt_days"],
        ct_days=cfg["treatment.ct_days"],
        rt_dose=cfg["treatment.rt_dose"],
        ct_concentration=cfg["treatment.ct_concentration"],
        alpha_rt=cfg["treatment.alpha_rt"],
        alpha_beta_ratio=cfg["treatment.alpha_beta_ratio"],
        alpha_ct=cfg["treatment.alpha_ct"],
        ct_halflife_hours=cfg["treatment.ct_halflife_hours"],
    )


def _build_solver_config(cfg):
    return SolverConfig(
        dt=cfg["time.dt"],
        t_end=cfg["time.t_end"],
        newton_tol=cfg["solver.newton_tol"],
        newton_max_iter=cfg["solver.newton_max_iter"],
        mass_lumping=cfg["solver.mass_lumping"],
        lambda_shift=cfg["solver.lambda_shift"],
    )


def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _kl_cache_path(cache_dir, which, n_nodes, n_modes, seed):
    return Path(cache_dir) / f"kl_{which}_n{n_nodes}_m{n_modes}_seed{seed}.txt"


def _kl_for(cfg, mesh, which, spec, n_modes):
    """Load a matching KL cache or compute (and optionally store) one."""
    seed = cfg["seed"]
    cache_dir = cfg["cov.cache_dir"]
    path = None
    if cache_dir:
        path = _kl_cache_path(cache_dir, which, mesh.n_nodes, n_modes, seed)
        if path.is_file():
            exp = load_kl(path)
            if (
                exp.n_modes == n_modes
                and exp.modes.shape[0] == mesh.n_nodes
                and exp.spec == spec
                and exp.seed == seed
            ):
                return exp, path
            raise ConfigError(
                [f"cov.cache_dir: cache {path} does not match the configuration"]
            )
    exp = compute_kl(
        mesh,
        spec,
        n_modes,
        oversample=cfg["cov.oversample"],
        power_iterations=cfg["cov.power_iterations"],
        seed=seed,
    )
    if cache_dir:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_kl(exp, path)
    return exp, path


def _build_field_model(cfg, mesh):
    """Field model plus a metadata record of how it was built."""
    s = cfg["field.s"]
    if cfg["mode"] == "uniform":
        model = UniformAffineModel(
            dim=s,
            base_diffusion=cfg["field.a0"],
            base_growth=cfg["field.kappa0"],
            decay=cfg["field.decay"],
            length=cfg["mesh.length"],
        )
        a_lo, a_hi = model.bounds_diffusion()
        k_lo, k_hi = model.bounds_growth()
        info = {
            "kind": "uniform",
            "diffusion_bounds": [a_lo, a_hi],
            "growth_bounds": [k_lo, k_hi],
        }
        return model, info

    n_modes = s // 2
    if n_modes > mesh.n_nodes:
        raise ConfigError(
            [
                f"field.s: {n_modes} modes per field exceed the "
                f"{mesh.n_nodes} mesh nodes"
            ]
        )
    spec_a = calibrate_covariance(
        cfg["cov.correlation_length"], cfg["cov.variance_a"]
    )
    spec_k = calibrate_covariance(
        cfg["cov.correlation_length"], cfg["cov.variance_kappa"]
    )
    kl_a, path_a = _kl_for(cfg, mesh, "diffusion", spec_a, n_modes)
    kl_k, path_k = _kl_for(cfg, mesh, "growth", spec_k, n_modes)
    model = LognormalKLModel(
        mesh=mesh,
        kl_diffusion=kl_a,
        kl_growth=kl_k,
        base_diffusion=cfg["field.a0"],
        base_growth=cfg["field.kappa0"],
    )
    info = {
        "kind": "lognormal",
        "covariance_diffusion": {"gamma": spec_a.gamma, "delta": spec_a.delta},
        "covariance_growth": {"gamma": spec_k.gamma, "delta": spec_k.delta},
        "eigenvalues_diffusion": [float(v) for v in kl_a.eigenvalues],
        "eigenvalues_growth": [float(v) for v in kl_k.eigenvalues],
    }
    for name, path in (("cache_diffusion", path_a), ("cache_growth", path_k)):
        if path is not None:
            info[name] = {"path": str(path), "sha256": _sha256_file(path)}
    return model, info


class PDEProblem:
    """Terminal-mass functional ``G(y)`` of one study configuration.

    Instances are cheap to pickle (per-process caches are rebuilt
    lazily), so they can be shipped to worker processes; repeated
    evaluations in one process share the assembly pattern, the
    per-level therapy tables and the coefficient lookup tables.
    """

    def __init__(
        self,
        mesh,
        model,
        solver_config,
        radiotherapy=None,
        chemotherapy=None,
        ic_amplitude=0.5,
        ic_width=12.5,
        ic_center=(50.0, 50.0),
    ):
        self.mesh = mesh
        self.model = model
        self.solver_config = solver_config
        self.radiotherapy = radiotherapy
        self.chemotherapy = chemotherapy
        self.ic_amplitude = ic_amplitude
        self.ic_width = ic_width
        self.ic_center = tuple(ic_center)
        self.target = (
            "centered" if isinstance(model, UniformAffineModel) else "gaussian"
        )
        lam = solver_config.lambda_shift
        self.use_shift = lam == "auto" or (
            not isinstance(lam, str) and float(lam) > 0.0
        )
        self._prepared = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_prepared"] = None
        return state

    @property
    def dim(self):
        return self.model.dim

    def _prep(self):
        if self._prepared is None:
            pattern = AssemblyPattern(self.mesh)
            prep = SimpleNamespace(pattern=pattern)
            prep.forcing = forcing_table(
                pattern, self.radiotherapy, self.chemotherapy, self.solver_config
            )
            prep.mass_csr = pattern.csr(pattern.mass_values())
            prep.u0 = gaussian_bump(
                self.ic_amplitude, self.ic_width, self.ic_center
            )(self.mesh.nodes)
            if isinstance(self.model, UniformAffineModel):
                prep.sine_table = self.model.sine_table(pattern.quad_points)
            else:
                prep.node_to_quad = pattern.node_to_quad_matrix()
            self._prepared = prep
        return self._prepared

    def coefficients_at_quad(self, y):
        """Sampled ``(a, kappa)`` values at the assembly quadrature points."""
        prep = self._prep()
        y = np.asarray(y, dtype=float)
        if isinstance(self.model, UniformAffineModel):
            return self.model.evaluate_with_table(y, prep.sine_table)
        z_a, z_k = self.model.exponent_nodal(y)
        a = self.model.base_diffusion + np.exp(prep.node_to_quad.dot(z_a))
        kappa = self.model.base_growth + np.exp(prep.node_to_quad.dot(z_k))
        return a, kappa

    def solve_sample(self, y, keep_trajectory=False):
        """Full solver result for one parameter vector."""
        prep = self._prep()
        a_quad, kappa_quad = self.coefficients_at_quad(y)
        integrate = solve_shifted if self.use_shift else solve
        return integrate(
            self.mesh,
            prep.u0,
            a_quad,
            kappa_quad,
            self.radiotherapy,
            self.chemotherapy,
            self.solver_config,
            keep_trajectory=keep_trajectory,
            pattern=prep.pattern,
            forcing_values_by_level=prep.forcing,
        )

    def qoi(self, u):
        """Domain integral of a nodal state (consistent mass matrix)."""
        return float(np.sum(self._prep().mass_csr.dot(u)))

    def evaluate(self, y):
        return self.qoi(self.solve_sample(y).u)


def build_problem(cfg):
    """Assemble the :class:`PDEProblem` of a resolved config.

    Returns ``(problem, info)`` where ``info`` records derived
    quantities (field bounds, covariance calibration, cache hashes) for
    the metadata file.
    """
    mesh = _build_mesh(cfg)
    model, info = _build_field_model(cfg, mesh)
    rt, ct = _build_schedules(cfg)
    center = cfg["ic.center"]
    if center == "auto":
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        center = ((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0)
    problem = PDEProblem(
        mesh=mesh,
        model=model,
        solver_config=_build_solver_config(cfg),
        radiotherapy=rt,
        chemotherapy=ct,
        ic_amplitude=cfg["ic.amplitude"],
        ic_width=cfg["ic.width"],
        ic_center=center,
    )
    info = dict(info)
    info["mesh_nodes"] = mesh.n_nodes
    info["mesh_triangles"] = mesh.n_triangles
    info["ic_center"] = list(center)
    if cfg["mesh.kind"] == "file":
        info["mesh_file"] = {
            "path": cfg["mesh.path"],
            "sha256": _sha256_file(cfg["mesh.path"]),
        }
    return problem, info


# -- generating vector resolution ---------------------------------------------------


def resolve_vector(cfg, dim):
    """The generating vector for a study, per ``qmc.vector``.

    ``"cbc"`` constructs one for the top ladder level with product
    weights ``j**-qmc.weight_decay``; ``"bundled"`` loads the packaged
    vector; anything else is a vector file path.
    """
    source = cfg["qmc.vector"]
    n_top = 2 ** cfg["qmc.m_max"]
    if source == "cbc":
        z = cbc_construct(n_top, dim, product_weights(cfg["qmc.weight_decay"], dim))
        return z, {"source": "cbc", "n_points": n_top}
    if source == "bundled":
        return default_generating_vector(dim), {"source": "bundled"}
    z = load_generating_vector(source, dim=dim)
    return z, {
        "source": source,
        "sha256": _sha256_file(source),
    }


# -- output helpers ------------------------------------------------------------------


CSV_HEADER = "kind,m,N,R,mean,rms_or_stderr,wall_seconds"


def format_csv(rows):
    """Render study rows with the fixed column order."""
    lines = [CSV_HEADER]
    for kind, m, n, r, mean, err, wall in rows:
        lines.append(
            f"{kind},{int(m)},{int(n)},{int(r)},"
            f"{float(mean)!r},{float(err)!r},{float(wall)!r}"
        )
    return "\n".join(lines) + "\n"


def deterministic_csv_hash(csv_text):
    """SHA-256 of the CSV with the volatile wall-seconds column removed."""
    kept = [
        ",".join(line.split(",")[:-1])
        for line in csv_text.strip("\n").split("\n")
    ]
    return hashlib.sha256(("\n".join(kept) + "\n").encode()).hexdigest()


def _config_echo(cfg):
    echo = {}
    for key, value in sorted(cfg.items()):
        if isinstance(value, tuple):
            value = list(value)
        echo[key] = value
    return echo


def _write_metadata(outdir, payload, wall_total):
    payload = dict(payload)
    payload["package_version"] = __version__
    payload["volatile"] = {
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "total_wall_seconds": wall_total,
    }
    path = Path(outdir) / "metadata.json"
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


_PLOT_SCRIPT = """\
set terminal pngcairo size 900,650
set output "convergence.png"
set logscale xy
set xlabel "N"
set ylabel "estimated error"
set grid
set key left bottom
plot {series}
"""


def _write_plot_script(outdir, with_mc):
    series = '"qmc.dat" using 1:2 with linespoints pt 7 title "lattice rms"'
    if with_mc:
        series += (
            ', \\\n     "mc.dat" using 1:2 with linespoints pt 5 '
            'title "mc stderr"'
        )
    (Path(outdir) / "plot.gp").write_text(
        _PLOT_SCRIPT.format(series=series), encoding="utf-8"
    )


# -- study ---------------------------------------------------------------------------


def run_study(cfg, outdir):
    """Run the QMC (and optional MC) convergence study of a config.

    Writes ``results.csv``, ``qmc.dat``/``mc.dat``, ``plot.gp``,
    ``vector_used.txt`` and ``metadata.json`` into ``outdir`` and
    returns a summary dict with the fitted rates.
    """
    t_start = time.perf_counter()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    problem, build_info = build_problem(cfg)
    z, vector_info = resolve_vector(cfg, problem.dim)
    vector_path = outdir / "vector_used.txt"
    save_generating_vector(vector_path, z)
    vector_info["sha256_used"] = _sha256_file(vector_path)

    seed = cfg["seed"]
    workers = cfg["workers"]
    m_min, m_max = cfg["qmc.m_min"], cfg["qmc.m_max"]
    n_shifts = cfg["qmc.shifts"]

    ladder = qmc_ladder(
        problem, z, m_min, m_max, n_shifts, seed, workers=workers
    )
    rows = [
        (
            "qmc",
            res.m,
            res.n_points,
            res.n_shifts,
            res.mean,
            res.rms_error,
            res.wall_seconds,
        )
        for res in ladder
    ]

    mc_rows = []
    if cfg["mc.enabled"]:
        totals = [n_shifts * 2 ** m for m in range(m_min, m_max + 1)]
        points = mc_points(problem.dim, totals[-1], seed, problem.target)
        values = np.empty(totals[-1])
        done = 0
        for m, total in zip(range(m_min, m_max + 1), totals):
            t0 = time.perf_counter()
            if total > done:
                values[done:total] = evaluate_points(
                    problem,
                    points[done:total],
                    workers=workers,
                    labels=list(range(done, total)),
                )
                done = total
            mean, stderr = mc_summary(values[:total])
            mc_rows.append(
                ("mc", m, 2 ** m, n_shifts, mean, stderr, time.perf_counter() - t0)
            )
    rows.extend(mc_rows)

    csv_text = format_csv(rows)
    (outdir / "results.csv").write_text(csv_text, encoding="utf-8")

    qmc_dat = "".join(
        f"{res.n_points} {res.rms_error!r} {res.mean!r}\n" for res in ladder
    )
    (outdir / "qmc.dat").write_text(qmc_dat, encoding="utf-8")
    if mc_rows:
        mc_dat = "".join(f"{row[2]} {row[5]!r} {row[4]!r}\n" for row in mc_rows)
        (outdir / "mc.dat").write_text(mc_dat, encoding="utf-8")
    _write_plot_script(outdir, with_mc=bool(mc_rows))

    slopes = {}
    if len(ladder) >= 3:
        slopes["qmc"] = fit_rate(
            [(res.n_points, res.rms_error) for res in ladder]
        )
        if mc_rows:
            slopes["mc"] = fit_rate([(row[2], row[5]) for row in mc_rows])

    summary = {
        "command": "study",
        "config": _config_echo(cfg),
        "build": build_info,
        "vector": vector_info,
        "slopes": slopes,
        "results_csv_deterministic_sha256": deterministic_csv_hash(csv_text),
        "total_solves": {
            "qmc": n_shifts * 2 ** m_max,
            "mc": (n_shifts * 2 ** m_max) if cfg["mc.enabled"] else 0,
        },
    }
    _write_metadata(outdir, summary, time.perf_counter() - t_start)
    return summary


# -- single solve --------------------------------------------------------------------


def parse_parameter_vector(text, dim, mode):
    """Parse and validate a ``--y`` style comma-separated vector."""
    try:
        y = np.asarray([float(p) for p in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError([f"--y: expected comma-separated numbers, got {text!r}"])
    if len(y) != dim:
        raise ConfigError(
            [f"--y: expected {dim} components for this config, got {len(y)}"]
        )
    if mode == "uniform" and (np.any(y < -0.5) or np.any(y > 0.5)):
        raise ConfigError(
            ["--y: uniform-mode components must lie in [-1/2, 1/2]"]
        )
    return y


def run_single(cfg, y, outdir=None):
    """One solve at an explicit parameter vector.

    Prints the functional value and the a priori stability constant of
    the substituted form; when ``outdir`` is given, the full trajectory
    is dumped as whitespace-separated text (one row per time level).
    """
    t_start = time.perf_counter()
    problem, build_info = build_problem(cfg)
    y = np.asarray(y, dtype=float)
    keep = outdir is not None
    result = problem.solve_sample(y, keep_trajectory=keep)
    g = problem.qoi(result.u)

    a_quad, kappa_quad = problem.coefficients_at_quad(y)
    if isinstance(problem.model, UniformAffineModel):
        a_min, a_max = problem.model.bounds_diffusion()
        kappa_max = problem.model.bounds_growth()[1]
    else:
        a_min, a_max = float(a_quad.min()), float(a_quad.max())
        kappa_max = float(kappa_quad.max())
    f_max = f_max_bound(problem.radiotherapy, problem.chemotherapy)
    lam = result.lambda_shift
    if lam is None:
        lam = resolve_lambda("auto", kappa_max)
    constant = apriori_constant(a_min, a_max, kappa_max, f_max, lam)

    report = {
        "qoi": g,
        "stability_constant": float(constant),
        "lambda": float(lam),
        "newton_iterations": result.newton_iterations,
        "state_min": result.node_min,
        "state_max": result.node_max,
        "n_steps": problem.solver_config.n_steps(),
    }
    print(f"qoi = {g!r}")
    print(f"stability_constant = {float(constant)!r} (lambda = {float(lam)!r})")
    print(
        f"state range over all levels: "
        f"[{result.node_min!r}, {result.node_max!r}]"
    )
    print(f"newton_iterations = {result.newton_iterations}")

    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        traj_path = outdir / "trajectory.txt"
        with open(traj_path, "w", encoding="utf-8") as fh:
            fh.write("# one row per time level, one column per mesh node\n")
            for row in result.trajectory:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        payload = {
            "command": "solve",
            "config": _config_echo(cfg),
            "build": build_info,
            "y": [float(v) for v in y],
            "report": report,
            "trajectory_sha256": _sha256_file(traj_path),
        }
        _write_metadata(outdir, payload, time.perf_counter() - t_start)
    return report


# -- KL precompute -------------------------------------------------------------------


def run_kl(cfg, outdir):
    """Precompute the lognormal mode decompositions and decay reports."""
    t_start = time.perf_counter()
    if cfg["mode"] != "lognormal":
        raise ConfigError(["mode: the kl command requires mode = lognormal"])
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = _build_mesh(cfg)
    n_modes = cfg["field.s"] // 2
    if n_modes > mesh.n_nodes:
        raise ConfigError(
            [
                f"field.s: {n_modes} modes per field exceed the "
                f"{mesh.n_nodes} mesh nodes"
            ]
        )
    pattern = AssemblyPattern(mesh)
    mass = pattern.csr(pattern.mass_values())

    payload = {
        "command": "kl",
        "config": _config_echo(cfg),
        "fields": {},
    }
    report = {}
    for which, variance_key in (
        ("diffusion", "cov.variance_a"),
        ("growth", "cov.variance_kappa"),
    ):
        spec = calibrate_covariance(
            cfg["cov.correlation_length"], cfg[variance_key]
        )
        exp = compute_kl(
            mesh,
            spec,
            n_modes,
            oversample=cfg["cov.oversample"],
            power_iterations=cfg["cov.power_iterations"],
            seed=cfg["seed"],
            pattern=pattern,
        )
        cache_path = outdir / f"kl_{which}.txt"
        save_kl(exp, cache_path)
        gram = exp.modes.T @ mass.dot(exp.modes)
        ortho = float(np.abs(gram - np.eye(n_modes)).max())
        decay_path = outdir / f"decay_{which}.csv"
        with open(decay_path, "w", encoding="utf-8") as fh:
            fh.write("k,mu,sqrt_mu\n")
            for k, mu in enumerate(exp.eigenvalues, start=1):
                fh.write(f"{k},{float(mu)!r},{math.sqrt(max(mu, 0.0))!r}\n")
        slope = fit_decay_slope(exp.eigenvalues)
        payload["fields"][which] = {
            "gamma": spec.gamma,
            "delta": spec.delta,
            "n_modes": n_modes,
            "cache": {"path": str(cache_path), "sha256": _sha256_file(cache_path)},
            "decay_csv": {
                "path": str(decay_path),
                "sha256": _sha256_file(decay_path),
            },
            "orthonormality_residual": ortho,
            "decay_slope_sqrt_mu": slope,
        }
        report[which] = {"orthonormality_residual": ortho, "decay_slope": slope}
        print(
            f"{which}: {n_modes} modes, orthonormality residual {ortho:.3e}, "
            f"sqrt-eigenvalue decay slope {slope:.3f}"
        )
    _write_metadata(outdir, payload, time.perf_counter() - t_start)
    return report


# -- CBC construction ----------------------------------------------------------------


def run_cbc(cfg, outdir):
    """Construct a generating vector and its per-dimension error report."""
    t_start = time.perf_counter()
    outdir = Path(outdir)
    n = cfg["cbc.n_points"]
    dim = cfg["cbc.dim"]
    weights = product_weights(cfg["qmc.weight_decay"], dim)
    try:
        z = cbc_construct(n, dim, weights)
    except ValueError as exc:
        raise ConfigError([f"cbc.n_points: {exc}"]) from None
    outdir.mkdir(parents=True, exist_ok=True)

    vector_path = outdir / "vector.txt"
    save_generating_vector(
        vector_path,
        z,
        comment=(
            f"rank-1 lattice generating vector, N={n}, "
            f"product weights j^-{cfg['qmc.weight_decay']}"
        ),
    )

    # Incremental per-dimension wce of the construction trace.
    k = np.arange(n, dtype=np.int64)
    b2_table = _b2(np.arange(n, dtype=float) / n)
    gam = weights.coordinate_factors
    prod = np.ones(n)
    report_path = outdir / "wce_report.csv"
    errors = []
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("dim,z,wce\n")
        for d, zd in enumerate(z):
            prod *= 1.0 + gam[d] * b2_table[(k * int(zd)) % n]
            e2 = float(np.mean(prod)) - 1.0
            err = math.sqrt(max(e2, 0.0))
            errors.append(err)
            fh.write(f"{d + 1},{int(zd)},{err!r}\n")
    print(f"constructed {dim} components for N={n}; wce = {errors[-1]!r}")

    payload = {
        "command": "cbc",
        "config": _config_echo(cfg),
        "vector": {"path": str(vector_path), "sha256": _sha256_file(vector_path)},
        "report": {"path": str(report_path), "sha256": _sha256_file(report_path)},
        "final_wce": errors[-1],
    }
    _write_metadata(outdir, payload, time.perf_counter() - t_start)
    return {"z": z, "wce": errors}
