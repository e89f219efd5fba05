"""Command-line experiment runner.

Subcommands::

    simulate   one run -> trajectory.csv + summary.csv
    converge   refinement ladder -> converge.csv (+ converge_timing.csv)
    stability  stability limits of the Hermite schemes -> stability.csv + rho_sweep.csv
    reference  fine P2 bar run stored for later error evaluation -> reference.csv
    sweep-cfl  empirical largest stable CFL number -> cfl.csv

Exit codes: 0 success, 2 configuration error, 3 solver divergence,
4 energy instability.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analysis import (
    ErrorSeries,
    convergence_order,
    error_norms,
    max_stable_cfl,
    spectral_radius,
    amplification,
    stability_threshold,
)
from .config import ConfigError, ScenarioConfig, config_hash, load_config, steps_for
from .core import OscillatorModel, TimeGrid, oscillator_analytic, total_energy
from .fe1d import (
    BarMesh,
    BarProperties,
    ElementKind,
    analytic_first_mode,
    discrete_first_mode,
    make_bar_model,
    mode_initial_state,
)
from .integrators import (
    HERMITE_SCHEMES,
    NewmarkParameters,
    NewtonSettings,
    Scheme,
    Trajectory,
    simulate,
)
from .shapefn import gauss_rule

log = logging.getLogger("hermite_dyn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_UNSTABLE = 4
_STATUS_CODE = {"ok": EXIT_OK, "diverged": EXIT_DIVERGED, "unstable": EXIT_UNSTABLE}

ERROR_KEYS = ("e_u_max", "e_v_max", "e_E_max", "e_u_sigma", "e_v_sigma", "e_E_sigma")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


# ---------------------------------------------------------------- problems


@dataclass
class Problem:
    """A model with its start state and the data needed for error evaluation."""

    name: str
    model: object
    s0: object
    period: float
    omega: float
    u0: float
    mesh: BarMesh | None = None
    props: BarProperties | None = None


def build_problem(cfg: ScenarioConfig, n_el: int | None = None) -> Problem:
    u0 = cfg.amplitude
    if cfg.problem == "oscillator":
        model = OscillatorModel(cfg.oscillator.m, cfg.oscillator.k)
        return Problem(cfg.problem, model, model.initial_state(u0), model.period, model.omega, u0)
    b = cfg.bar
    props = BarProperties(L=b.L, A=b.A, rho0=b.rho0, E=b.E)
    mesh = BarMesh(n_el or b.n_el, ElementKind(b.element), b.L)
    material = "linear" if cfg.problem == "linear_bar" else "neohooke"
    model = make_bar_model(mesh, props, material)
    s0 = mode_initial_state(mesh, props, u0)
    return Problem(cfg.problem, model, s0, props.period_an, props.omega_an, u0, mesh, props)


def solver_settings(cfg: ScenarioConfig):
    n = cfg.newton
    settings = NewtonSettings(n.tol_rel, n.tol_abs, n.max_iter, n.predictor)
    return settings, gauss_rule(cfg.quadrature.time_points), NewmarkParameters(cfg.newmark.beta, cfg.newmark.gamma)


def run(cfg: ScenarioConfig, problem: Problem, steps_per_period: int, periods: float,
        store_every: int = 1, scheme=None) -> Trajectory:
    scheme = Scheme.parse(scheme or cfg.scheme)
    settings, quad, newmark = solver_settings(cfg)
    n_steps = steps_for(periods, steps_per_period)
    dt = problem.period / steps_per_period
    if n_steps == 0:
        traj = Trajectory(scheme, dt, n_steps_requested=0)
        traj.record(0, problem.s0, total_energy(problem.model, problem.s0))
        return traj
    grid = TimeGrid(0.0, n_steps * dt, n_steps)
    return simulate(scheme, problem.model, problem.s0, grid, settings, quad, newmark,
                    store_every=store_every, energy_limit=cfg.output.energy_limit)


# ---------------------------------------------------------------- errors


def reference_source(cfg: ScenarioConfig, temporal_ladder: bool = False) -> str:
    src = cfg.reference.source
    if src != "auto":
        return src
    if cfg.problem == "oscillator":
        return "analytic"
    if cfg.problem == "linear_bar":
        if temporal_ladder and cfg.bar.element == "linear":
            return "discrete"
        return "analytic"
    return "none"


def summarize(cfg: ScenarioConfig, problem: Problem, steps, t, x, v, E, steps_per_period,
              source: str | None = None) -> dict:
    """Error aggregates of a run; missing references leave ``e_u``/``e_v`` empty."""
    source = source or reference_source(cfg)
    steps = np.asarray(steps)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    E = np.asarray(E, dtype=float)
    E0 = E[0]
    e_E = np.abs(E - E0) / abs(E0)
    if problem.mesh is None:
        u = x[:, 0] - problem.model.reference_positions()[0]
        vel = v[:, 0]
    else:
        idx = problem.mesh.value_dofs
        u = x[:, idx] - problem.mesh.nodes
        vel = v[:, idx]

    if source == "none":
        series = ErrorSeries(np.array([]), np.array([]), e_E)
        out = series.summary()
        for key in ("e_u_max", "e_v_max", "e_u_sigma", "e_v_sigma"):
            out[key] = None
        return out
    if source == "analytic":
        if problem.mesh is None:
            u_ref, v_ref = oscillator_analytic(problem.model, problem.u0, t)
        else:
            u_ref, v_ref = analytic_first_mode(problem.props, problem.u0, t[:, None], problem.mesh.nodes)
    elif source == "discrete":
        if problem.mesh is None or problem.mesh.kind is not ElementKind.LINEAR:
            raise ConfigError("the discrete modal reference needs a bar with linear elements")
        u_ref, v_ref = discrete_first_mode(problem.mesh, problem.props, problem.u0, t)
    else:
        ref = load_reference(source)
        rows, nodes, u_ref, v_ref = ref.match(problem, steps, steps_per_period)
        u, vel = u[rows][:, nodes], vel[rows][:, nodes]
    series = error_norms(u, vel, E, u_ref, v_ref, E0, problem.u0, problem.omega)
    return series.summary()


# ---------------------------------------------------------------- CSV


def write_table(path: Path, header: list, rows, meta: dict | None = None):
    with open(path, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(c) for c in row])


def read_table(path):
    """Return ``(meta, header, rows)`` of a CSV written by :func:`write_table`."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, [row for row in reader]


def _meta(cfg: ScenarioConfig, scheme, extra=None) -> dict:
    if cfg.is_bar:
        units = f"nondimensional; rho0={cfg.bar.rho0} E={cfg.bar.E} A={cfg.bar.A} L={cfg.bar.L}; time in units of t"
    else:
        units = f"nondimensional; m={cfg.oscillator.m} k={cfg.oscillator.k}; time in units of t"
    meta = {"config_sha256": config_hash(cfg), "problem": cfg.problem, "scheme": Scheme.parse(scheme).value,
            "units": units}
    meta.update(extra or {})
    return meta


def write_trajectory(path: Path, cfg: ScenarioConfig, traj: Trajectory, problem: Problem):
    n = problem.model.ndof
    header = (["step", "t"] + [f"x_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)]
              + ["K", "Pi", "E", "newton_iters"])
    meta = _meta(cfg, traj.scheme, {
        "dt": fmt(traj.dt), "period": fmt(problem.period), "u0": fmt(problem.u0),
        "steps_requested": traj.n_steps_requested, "status": traj.status,
    })
    rows = []
    for i in range(len(traj)):
        K, Pi, E = traj.energies[i]
        rows.append([traj.steps[i], traj.times[i], *traj.xs[i], *traj.vs[i], K, Pi, E, traj.newton_iters[i]])
    write_table(path, header, rows, meta)


def load_trajectory(path):
    """Columns of a trajectory CSV as arrays: ``step, t, x, v, K, Pi, E, newton_iters``."""
    meta, header, rows = read_table(path)
    data = np.array([[float(c) for c in row] for row in rows]).reshape(len(rows), len(header))
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    vcols = [i for i, h in enumerate(header) if h.startswith("v_")]
    col = {h: i for i, h in enumerate(header)}
    return meta, {
        "step": data[:, col["step"]].astype(int), "t": data[:, col["t"]],
        "x": data[:, xcols], "v": data[:, vcols],
        "K": data[:, col["K"]], "Pi": data[:, col["Pi"]], "E": data[:, col["E"]],
        "newton_iters": data[:, col["newton_iters"]].astype(int),
    }


def recompute_summary(trajectory_csv, cfg: ScenarioConfig) -> dict:
    """Error summary computed from the rows of a stored trajectory."""
    _, cols = load_trajectory(trajectory_csv)
    problem = build_problem(cfg)
    return summarize(cfg, problem, cols["step"], cols["t"], cols["x"], cols["v"], cols["E"],
                     cfg.time.steps_per_period)


SUMMARY_HEADER = ["config_sha256", "problem", "scheme", "status", "n_steps", "n_rows", "dt", *ERROR_KEYS,
                  "runtime_s", "ms_per_oscillation", "started_at", "finished_at", "message"]


# ---------------------------------------------------------------- reference


@dataclass
class Reference:
    meta: dict
    samples: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def n_el(self) -> int:
        return int(self.meta["n_el"])

    @property
    def steps_per_period(self) -> int:
        return int(self.meta["steps_per_period"])

    @property
    def sample_steps_per_period(self) -> int:
        return int(self.meta["sample_steps_per_period"])

    def match(self, problem: Problem, steps, steps_per_period: int):
        """Rows/nodes of a coarse run that coincide with stored reference samples."""
        mesh = problem.mesh
        if mesh is None:
            raise ConfigError("a stored reference applies to bar problems only")
        if self.meta.get("problem") != problem.name:
            raise ConfigError(f"reference was computed for {self.meta.get('problem')}, not {problem.name}")
        if not math.isclose(float(self.meta["L"]), mesh.L) or not math.isclose(float(self.meta["u0"]), problem.u0):
            raise ConfigError("reference length or amplitude differs from the run")
        if self.n_el % mesh.n_el:
            raise ConfigError(f"mesh with {mesh.n_el} elements is not nested in the {self.n_el}-element reference")
        if self.steps_per_period % steps_per_period:
            raise ConfigError(f"{steps_per_period} steps per period is not nested in the reference time grid")
        stride = self.n_el // mesh.n_el
        nodes = np.arange(mesh.n_nodes)
        ref_nodes = nodes * stride
        # coarse step n lies at n / spp periods, sample i at i / sample_spp periods
        rows, idx = [], []
        lookup = {int(s): j for j, s in enumerate(self.samples)}
        for r, n in enumerate(np.asarray(steps, dtype=int)):
            num = n * self.sample_steps_per_period
            if num % steps_per_period == 0 and num // steps_per_period in lookup:
                rows.append(r)
                idx.append(lookup[num // steps_per_period])
        if not rows:
            raise ConfigError("no stored reference sample coincides with the run's output times")
        idx = np.array(idx)
        return np.array(rows), nodes, self.u[idx][:, ref_nodes], self.v[idx][:, ref_nodes]


def load_reference(path) -> Reference:
    try:
        meta, header, rows = read_table(path)
    except OSError as exc:
        raise ConfigError(f"cannot read reference {path}: {exc.strerror}") from None
    data = np.array([[float(c) for c in row] for row in rows])
    ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
    vcols = [i for i, h in enumerate(header) if h.startswith("v_")]
    return Reference(meta, data[:, 0].astype(int), data[:, ucols], data[:, vcols])


# ---------------------------------------------------------------- commands


def _outdir(args, cfg: ScenarioConfig) -> Path:
    out = Path(args.out or cfg.output.path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_simulate(args, cfg: ScenarioConfig) -> int:
    out = _outdir(args, cfg)
    problem = build_problem(cfg)
    started = datetime.now(timezone.utc)
    tic = time.perf_counter()
    traj = run(cfg, problem, cfg.time.steps_per_period, cfg.time.periods, cfg.time.store_every)
    runtime = time.perf_counter() - tic
    finished = datetime.now(timezone.utc)
    write_trajectory(out / "trajectory.csv", cfg, traj, problem)
    errors = summarize(cfg, problem, traj.steps, traj.t, traj.x, traj.v, traj.E, cfg.time.steps_per_period)
    oscillations = traj.steps[-1] / cfg.time.steps_per_period
    row = [config_hash(cfg), cfg.problem, traj.scheme.value, traj.status, traj.steps[-1], len(traj), traj.dt,
           *(errors[k] for k in ERROR_KEYS), runtime,
           1e3 * runtime / oscillations if oscillations else None,
           started.isoformat(timespec="seconds"), finished.isoformat(timespec="seconds"), traj.message]
    write_table(out / "summary.csv", SUMMARY_HEADER, [row])
    _say(args, f"{traj.scheme.value}: {traj.status} after {traj.steps[-1]} steps, "
               f"e_E_max={errors['e_E_max']:.3e}" + (f" ({traj.message})" if traj.message else ""))
    return _STATUS_CODE[traj.status]


CONVERGE_HEADER = ["scheme", "level", "ds", "dt", "n_el", "n_steps", "status", *ERROR_KEYS,
                   "order_u", "order_v", "order_E"]


def _ladder(cfg: ScenarioConfig):
    """``(ds, steps_per_period, n_el)`` for each refinement level."""
    c = cfg.converge
    levels = []
    for i in range(c.levels):
        if c.mode == "temporal":
            spp = c.base_steps_per_period * 2**i
            levels.append((1.0 / spp, spp, cfg.bar.n_el if cfg.is_bar else None))
            continue
        if not cfg.is_bar:
            raise ConfigError("converge.mode = 'cfl' needs a bar problem")
        ds = c.base_ds / 2**i
        spp = 1.0 / ds
        # ds = C dL / (2 L) fixes the characteristic length dL
        char_len = 2.0 * cfg.bar.L * ds / c.cfl
        per_el = 2.0 if cfg.bar.element == "hermite" else 1.0
        n_el = cfg.bar.L / (per_el * char_len)
        if abs(spp - round(spp)) > 1e-9 or abs(n_el - round(n_el)) > 1e-9 * n_el:
            raise ConfigError(f"level ds={ds:g} does not give whole steps per period and elements")
        levels.append((ds, int(round(spp)), int(round(n_el))))
    return levels


def cmd_converge(args, cfg: ScenarioConfig) -> int:
    out = _outdir(args, cfg)
    schemes = [Scheme.parse(s) for s in (cfg.converge.schemes or (cfg.scheme,))]
    temporal = cfg.converge.mode == "temporal"
    source = reference_source(cfg, temporal_ladder=temporal)
    levels = _ladder(cfg)
    rows, timing, worst = [], [], EXIT_OK
    norm = cfg.converge.norm
    for scheme in schemes:
        errs = {k: [] for k in ("u", "v", "E")}
        ds_done, n_done = [], []
        for level, (ds, spp, n_el) in enumerate(levels):
            problem = build_problem(cfg, n_el)
            tic = time.perf_counter()
            traj = run(cfg, problem, spp, cfg.time.periods, scheme=scheme)
            runtime = time.perf_counter() - tic
            worst = max(worst, _STATUS_CODE[traj.status])
            e = summarize(cfg, problem, traj.steps, traj.t, traj.x, traj.v, traj.E, spp, source)
            rows.append([scheme.value, level, ds, traj.dt, n_el, traj.steps[-1], traj.status,
                         *(e[k] for k in ERROR_KEYS), None, None, None])
            osc = traj.steps[-1] / spp
            timing.append([scheme.value, level, ds, runtime, 1e3 * runtime / osc if osc else None])
            if traj.completed:
                ds_done.append(ds)
                n_done.append(traj.steps[-1])
                for k in errs:
                    errs[k].append(e[f"e_{k}_{norm}"])
            _say(args, f"{scheme.value} level {level}: ds={ds:.6g} status={traj.status} "
                       f"e_E_{norm}={e[f'e_E_{norm}']:.3e}")
        if len(ds_done) >= 2:
            orders = []
            for k in ("u", "v", "E"):
                if any(val is None for val in errs[k]):
                    orders.append(None)
                    continue
                p = convergence_order(errs[k], ds_done, n_done)
                orders.append(None if math.isnan(p) else p)
            rows[-1][-3:] = orders
    meta = _meta(cfg, schemes[0], {"mode": cfg.converge.mode, "norm": norm, "reference": source,
                                   "schemes": " ".join(s.value for s in schemes)})
    write_table(out / "converge.csv", CONVERGE_HEADER, rows, meta)
    write_table(out / "converge_timing.csv", ["scheme", "level", "ds", "runtime_s", "ms_per_oscillation"], timing)
    return worst


def cmd_stability(args, cfg: ScenarioConfig) -> int:
    out = _outdir(args, cfg)
    gamma_max = cfg.stability.gamma_max
    rows = []
    for scheme in HERMITE_SCHEMES:
        res = stability_threshold(scheme, gamma_max)
        if res.unstable:
            rows.append([scheme.value, "--", "--", "unstable", ""])
        else:
            rows.append([scheme.value, res.gamma_stab, res.dt_stab, "stable",
                         " ".join(format(c, ".10g") for c in res.crossings)])
        _say(args, f"{scheme.value:5s} gamma_stab={fmt(rows[-1][1]):>20s} dt_stab/T0={fmt(rows[-1][2])}")
    write_table(out / "stability.csv", ["scheme", "gamma_stab", "dt_stab_over_T0", "status", "crossings"], rows,
                {"gamma_max": gamma_max})
    gammas = np.linspace(0.0, gamma_max, cfg.stability.sweep_points)
    sweep = [[g, *(spectral_radius(amplification(s, g)) for s in HERMITE_SCHEMES)] for g in gammas]
    write_table(out / "rho_sweep.csv", ["gamma", *(s.value for s in HERMITE_SCHEMES)], sweep)
    return EXIT_OK


def cmd_reference(args, cfg: ScenarioConfig) -> int:
    if not cfg.is_bar:
        raise ConfigError("reference solutions are computed for bar problems")
    out = _outdir(args, cfg)
    ref = cfg.reference
    problem = build_problem(cfg, ref.n_el)
    store_every = ref.steps_per_period // ref.sample_steps_per_period
    traj = run(cfg, problem, ref.steps_per_period, cfg.time.periods, store_every, scheme=Scheme.P2)
    idx = problem.mesh.value_dofs
    nn = problem.mesh.n_nodes
    header = ["sample", "t"] + [f"u_{i}" for i in range(nn)] + [f"v_{i}" for i in range(nn)] + ["E"]
    rows = []
    for n, t, x, v, e in zip(traj.steps, traj.times, traj.xs, traj.vs, traj.energies):
        if n % store_every:
            continue
        rows.append([n // store_every, t, *(x[idx] - problem.mesh.nodes), *v[idx], e[2]])
    meta = _meta(cfg, Scheme.P2, {
        "n_el": ref.n_el, "element": cfg.bar.element, "L": fmt(cfg.bar.L), "u0": fmt(problem.u0),
        "steps_per_period": ref.steps_per_period, "sample_steps_per_period": ref.sample_steps_per_period,
        "status": traj.status,
    })
    write_table(out / "reference.csv", header, rows, meta)
    _say(args, f"reference: {len(rows)} samples, status {traj.status}")
    return _STATUS_CODE[traj.status]


def cmd_sweep_cfl(args, cfg: ScenarioConfig) -> int:
    out = _outdir(args, cfg)
    c = cfg.cfl
    settings, _, _ = solver_settings(cfg)
    rows = []
    for element in c.elements:
        bar_cfg = dataclasses.replace(cfg, problem="linear_bar",
                                      bar=dataclasses.replace(cfg.bar, element=element, n_el=c.n_el))
        problem = build_problem(bar_cfg)
        for name in c.schemes:
            est = max_stable_cfl(name, problem.model, problem.s0, problem.props,
                                 problem.mesh.characteristic_length, horizon=c.horizon, lo=c.lo, hi=c.hi,
                                 tol=c.tol, growth=c.growth, settings=settings)
            rows.append([element, est.scheme.value, c.n_el, est.cfl_max, c.horizon, len(est.evaluations)])
            _say(args, f"{element:8s} {est.scheme.value:8s} cfl_max={est.cfl_max:.4f}")
    write_table(out / "cfl.csv", ["element", "scheme", "n_el", "cfl_max", "horizon", "evaluations"], rows,
                _meta(cfg, cfg.scheme, {"growth": c.growth}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "stability": cmd_stability,
    "reference": cmd_reference,
    "sweep-cfl": cmd_sweep_cfl,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hermite-dyn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML scenario file (defaults are used when omitted)")
        p.add_argument("--out", help="output directory (overrides output.path)")
        p.add_argument("--scheme", help="scheme name (overrides the config)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        if args.scheme:
            cfg = cfg.replace(scheme=args.scheme)
            if cfg.converge.schemes:
                cfg = cfg.replace(converge=dataclasses.replace(cfg.converge, schemes=(args.scheme,)))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
