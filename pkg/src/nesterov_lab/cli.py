"""Command-line front end.

Subcommands::

    simulate        integrate one configuration and write orbit/series/diag tables
    reproduce-fig2  the canonical a=0.02, eps=50 run to t=1e5 with fixed file names
    diagnose        recompute the diagnostics report from a written table
    oracle          closed-form quadratic trajectory table
    sweep           several eps (or a) values in parallel, one file set each

Exit codes: 0 success, 2 bad configuration or table schema, 3 integration
failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import tables
from .diagnostics import (
    DiagnosticsReport,
    InsufficientSpan,
    decade_arclength_table,
    diagnose,
    rate_fit_values,
)
from .flow import (
    MINIMIZER_REACHED,
    IntegrationError,
    IntegratorConfig,
    integrate_gradient_flow,
    integrate_nesterov,
    log_schedule,
)
from .longrun import integrate_long_horizon
from .oracles import (
    QuadraticSpec,
    quadratic_arclength,
    quadratic_arclength_profile,
    quadratic_nesterov_closed_form,
)
from .potential import PATHOLOGICAL, QUADRATIC, DomainError, parse_potential

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_IO = 4

FIG2_ORBIT = "nesterov_static_orbit_eps50.tsv"
FIG2_SERIES = "nesterov_static_series_eps50.tsv"
FIG2_DIAG = "nesterov_static_series_eps50_diag.tsv"

# points per unit of |X0| path length in the orbit file
ORBIT_POINTS_PER_RADIUS = 200


class ConfigError(DomainError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything one ``simulate`` call needs; defaults give the canonical spiral run."""

    potential: str = PATHOLOGICAL
    a: float = 0.02
    eps: float = 50.0
    lambdas: tuple | None = None
    Q: str | None = None
    x0: tuple | None = None
    flow: str = "nesterov"
    t0: float | None = None
    t_end: float = 1e5
    rtol: float = 1e-10
    atol: float = 1e-16
    polar_handoff: float = 1e2
    averaged_from: float = 1e3
    samples_per_decade: int = 400
    out_orbit: str | None = "orbit.tsv"
    out_series: str | None = "series.tsv"
    out_diag: str | None = None

    def spec(self):
        keys = {"potential": self.potential, "a": self.a, "eps": self.eps}
        if self.lambdas is not None:
            keys["lambda"] = ",".join(repr(float(v)) for v in self.lambdas)
        if self.Q is not None:
            keys["q"] = self.Q
        return parse_potential(**keys)

    def start(self, spec):
        if self.x0 is not None:
            x0 = np.array(self.x0, dtype=float)
        elif spec.kind == QUADRATIC:
            x0 = np.ones(spec.dim)
        else:
            x0 = np.array([2.0 * self.a, self.a])
        if x0.shape != (spec.dim,):
            raise ConfigError(f"x0 must have {spec.dim} components")
        return x0

    def integrator(self, X0):
        t0 = self.t0 if self.t0 is not None else (0.0 if self.flow == "gradient" else 1e-6)
        ds = float(np.linalg.norm(X0)) / ORBIT_POINTS_PER_RADIUS or None
        return IntegratorConfig(t0=t0, t_end=self.t_end, rtol=self.rtol, abs_tol=self.atol,
                                samples_per_decade=self.samples_per_decade, orbit_ds=ds)

    def diag_path(self):
        if self.out_diag:
            return Path(self.out_diag)
        if self.out_series:
            return tables.sibling(self.out_series, "_diag")
        return None


def markers_path(diag_path):
    p = Path(diag_path)
    stem = p.stem[:-5] if p.stem.endswith("_diag") else p.stem
    return p.with_name(stem + "_markers" + (p.suffix or ".tsv"))


def _floats(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _validate(cfg):
    if cfg.flow not in ("nesterov", "gradient"):
        raise ConfigError(f"unknown flow {cfg.flow!r}")
    spec = cfg.spec()
    X0 = cfg.start(spec)
    icfg = cfg.integrator(X0)
    if cfg.flow == "nesterov" and not icfg.t0 > 0:
        raise ConfigError("the Nesterov flow needs t0 > 0")
    if not cfg.polar_handoff > icfg.t0:
        raise ConfigError("polar handoff must come after t0")
    return spec, X0, icfg


def run(cfg):
    """Integrate ``cfg``; returns ``(trajectory, spec, X0)``."""
    spec, X0, icfg = _validate(cfg)
    if cfg.flow == "gradient":
        return integrate_gradient_flow(spec, X0, icfg), spec, X0
    if spec.kind == QUADRATIC:
        return integrate_nesterov(spec, X0, icfg), spec, X0
    averaged_from = max(cfg.averaged_from, cfg.polar_handoff)
    traj = integrate_long_horizon(spec, X0, icfg, polar_handoff=cfg.polar_handoff,
                                  averaged_from=averaged_from)
    return traj, spec, X0


def report_for(traj, spec, X0):
    """Diagnostics of ``traj`` exactly as they will be recomputed from the written tables."""
    return diagnose(tables.rounded(traj), spec, X0=X0)


def write_outputs(traj, spec, cfg):
    paths = []
    if cfg.out_orbit and traj.X.shape[1] == 2:
        tables.write_orbit(cfg.out_orbit, traj)
        paths.append(Path(cfg.out_orbit))
    if cfg.out_series:
        tables.write_series(cfg.out_series, traj, spec)
        paths.append(Path(cfg.out_series))
    diag = cfg.diag_path()
    if diag is not None and traj.X.shape[1] == 2:
        tables.write_diag(diag, traj, spec)
        tables.write_markers(markers_path(diag), traj)
        paths += [diag, markers_path(diag)]
    return paths


def oracle_error(traj, spec, X0):
    qs = QuadraticSpec(spec.Q, X0)
    X, _ = quadratic_nesterov_closed_form(qs, traj.t)
    return float(np.max(np.abs(X - traj.X)))


def _print_report(rep, out):
    out.write(rep.to_keyvalue())
    for name, text in rep.tables().items():
        out.write(f"# {name}\n{text}")


def simulate(cfg, out=sys.stdout):
    """Run, write tables, print the report.  Returns ``(trajectory, report)``."""
    try:
        traj, spec, X0 = run(cfg)
    except IntegrationError as exc:
        if exc.trajectory is not None and len(exc.trajectory):
            write_outputs(exc.trajectory, cfg.spec(), cfg)
        raise
    write_outputs(traj, spec, cfg)
    for name, t_lo, t_hi, secs in traj.info.get("legs", []):
        out.write(f"leg={name},{t_lo:.6g},{t_hi:.6g},{secs:.3f}s\n")
    if spec.kind == QUADRATIC and cfg.flow == "nesterov":
        out.write(f"oracle_max_position_error={tables.fmt(oracle_error(traj, spec, X0))}\n")
    for t in traj.markers_of(MINIMIZER_REACHED):
        out.write(f"marker={MINIMIZER_REACHED},{tables.fmt(t)}\n")
    rep = report_for(traj, spec, X0)
    _print_report(rep, out)
    return traj, rep


def fig2_config(out_dir=".", **changes):
    d = Path(out_dir)
    base = RunConfig(out_orbit=str(d / FIG2_ORBIT), out_series=str(d / FIG2_SERIES),
                     out_diag=str(d / FIG2_DIAG))
    return replace(base, **changes)


def diagnose_file(path, spec, X0=None, markers=None, out=sys.stdout):
    """Report what a table supports; returns the report, or ``None`` for an orbit file."""
    kind, cols = tables.read_table(path)
    if kind == "orbit":
        x2 = cols["x2"]
        crossings = int(np.count_nonzero(np.diff(np.sign(x2[x2 != 0])) != 0))
        out.write(f"rows={x2.size}\nmax_abs_x1={tables.fmt(np.max(np.abs(cols['x1'])))}\n"
                  f"max_abs_x2={tables.fmt(np.max(np.abs(x2)))}\nx2_sign_changes={crossings}\n")
        out.write("note=positions only; energy, momentum and rate checks need the diag table\n")
        return None
    if kind == "series":
        rep = DiagnosticsReport(arclength_final=float(cols["arclength"][-1]))
        try:
            rates = rate_fit_values(cols["time"], cols["f_value"])
            rep.C_f_upper, rep.c_f_lower, rep.rate_window = rates.C_f_upper, rates.c_f_lower, rates.window
        except InsufficientSpan as exc:
            rep.notes.append(str(exc))
        shim = _ColumnView(cols["time"], cols["arclength"])
        rep.decade_arclength = decade_arclength_table(shim)
        rep.notes.append("series table: torque, energy, kinetic and weighted checks need the diag table")
        _print_report(rep, out)
        return rep
    mpath = Path(markers) if markers else markers_path(path)
    marks = tables.read_markers(mpath) if mpath.exists() else []
    if not mpath.exists():
        out.write("note=no markers file; radial entry time estimated from samples\n")
    traj = tables.trajectory_from_diag(cols, marks)
    rep = diagnose(traj, spec, X0=X0)
    _print_report(rep, out)
    return rep


@dataclass
class _ColumnView:
    t: np.ndarray
    arclength: np.ndarray


def oracle_table(spec, X0, horizon, per_decade=400, t_first=1e-3):
    """Rows ``(t, X, V, arclength)`` of the closed form on ``{0} + log grid``."""
    qs = QuadraticSpec(spec.Q, X0)
    times = np.concatenate([[0.0], log_schedule(t_first, horizon, per_decade)])
    X, V = quadratic_nesterov_closed_form(qs, times)
    arc = quadratic_arclength_profile(qs, times)
    return times, X, V, arc, qs


def write_oracle(path, times, X, V, arc, out):
    d = X.shape[1]
    header = ["time"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["arclength"]
    body = "".join("\t".join(tables.fmt(c) for c in (t, *x, *v, s)) + "\n"
                   for t, x, v, s in zip(times, X, V, arc))
    text = "\t".join(header) + "\n" + body
    if path:
        Path(path).write_bytes(text.encode("ascii"))
    else:
        out.write(text)


def _sweep_job(cfg):
    import io

    buf = io.StringIO()
    try:
        traj, rep = simulate(cfg, out=buf)
    except IntegrationError as exc:
        return cfg, EXIT_INTEGRATION, str(exc), math.nan, math.nan
    return cfg, EXIT_OK, "ok", rep.kappa, rep.arclength_final


def sweep(base, param, values, out_dir, jobs, out=sys.stdout):
    """Independent runs over ``values`` of ``param`` (``eps`` or ``a``), each writing its own files."""
    d = Path(out_dir)
    cfgs = []
    for v in values:
        tag = f"{param}{v:g}"
        cfgs.append(replace(base, **{param: v}, out_orbit=str(d / f"nesterov_static_orbit_{tag}.tsv"),
                            out_series=str(d / f"nesterov_static_series_{tag}.tsv"),
                            out_diag=str(d / f"nesterov_static_series_{tag}_diag.tsv")))
    for c in cfgs:
        _validate(c)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, cfgs))
    else:
        results = [_sweep_job(c) for c in cfgs]
    out.write(f"{param}\tstatus\tkappa\tarclength_final\n")
    worst = EXIT_OK
    for c, code, status, kappa, arc in results:
        out.write(f"{getattr(c, param):g}\t{status}\t{tables.fmt(kappa)}\t{tables.fmt(arc)}\n")
        worst = max(worst, code)
    return worst


def read_config_file(path):
    """``key=value`` lines; ``#`` starts a comment, dashes and underscores are interchangeable."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().lower().replace("-", "_")] = v.strip()
    return out


_FIELDS = {
    "potential": str, "a": float, "eps": float, "lambda": _floats, "q": str, "x0": _floats,
    "flow": str, "t0": float, "t_end": float, "rtol": float, "atol": float,
    "polar_handoff": float, "out_orbit": str, "out_series": str, "out_diag": str,
}
_RENAME = {"lambda": "lambdas", "q": "Q"}


def build_config(ns, base=RunConfig()):
    """Defaults, then the ``--config`` file, then explicit flags."""
    values = {}
    if getattr(ns, "config", None):
        for k, v in read_config_file(ns.config).items():
            if k not in _FIELDS:
                raise ConfigError(f"unknown config key {k!r}")
            values[k] = v
    for k in _FIELDS:
        v = getattr(ns, k.replace("lambda", "lambda_"), None)
        if v is not None:
            values[k] = v
    changes = {}
    for k, v in values.items():
        try:
            changes[_RENAME.get(k, k)] = _FIELDS[k](v) if isinstance(v, str) else v
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {v!r}") from exc
    if "lambdas" in changes or "Q" in changes:
        changes.setdefault("potential", QUADRATIC)
    return replace(base, **changes)


def _add_run_flags(p):
    p.add_argument("--config", help="key=value file; flags given here take precedence")
    p.add_argument("--potential", help="pathological | quadratic | pure_radial")
    p.add_argument("--a", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--lambda", dest="lambda_", type=_floats, help="diagonal of Q, comma separated")
    p.add_argument("--q", help="row-major symmetric matrix, comma separated")
    p.add_argument("--x0", type=_floats, help="starting point, comma separated")
    p.add_argument("--flow", choices=["nesterov", "gradient"])
    p.add_argument("--t0", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--polar-handoff", type=float)


def _add_out_flags(p):
    p.add_argument("--out-orbit")
    p.add_argument("--out-series")
    p.add_argument("--out-diag")


def build_parser():
    parser = argparse.ArgumentParser(prog="nesterov-lab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one configuration")
    _add_run_flags(p)
    _add_out_flags(p)

    p = sub.add_parser("reproduce-fig2", help="canonical a=0.02, eps=50 run to t=1e5")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--t-end", type=float)
    _add_out_flags(p)

    p = sub.add_parser("diagnose", help="recompute diagnostics from a written table")
    p.add_argument("table")
    p.add_argument("--markers", help="markers table (default: sibling *_markers.tsv)")
    _add_run_flags(p)

    p = sub.add_parser("oracle", help="closed-form quadratic trajectory table")
    _add_run_flags(p)
    p.add_argument("--out-series", help="output table (default: stdout)")
    p.add_argument("--per-decade", type=int, default=400)

    p = sub.add_parser("sweep", help="parallel runs over eps or a")
    _add_run_flags(p)
    p.add_argument("--over", choices=["eps", "a"], default="eps")
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _dispatch(ns, out):
    if ns.command == "simulate":
        simulate(build_config(ns), out=out)
        return EXIT_OK
    if ns.command == "reproduce-fig2":
        cfg = fig2_config(ns.out_dir)
        changes = {k: getattr(ns, k) for k in ("t_end", "out_orbit", "out_series", "out_diag")
                   if getattr(ns, k) is not None}
        simulate(replace(cfg, **changes), out=out)
        return EXIT_OK
    if ns.command == "diagnose":
        cfg = build_config(ns)
        spec = cfg.spec()
        diagnose_file(ns.table, spec, X0=cfg.start(spec), markers=ns.markers, out=out)
        return EXIT_OK
    if ns.command == "oracle":
        cfg = build_config(ns, base=RunConfig(potential=QUADRATIC, lambdas=(1.0,), t_end=50.0))
        spec = cfg.spec()
        if spec.kind != QUADRATIC:
            raise ConfigError("oracle needs a quadratic potential")
        X0 = cfg.start(spec)
        times, X, V, arc, qs = oracle_table(spec, X0, cfg.t_end, ns.per_decade)
        write_oracle(ns.out_series, times, X, V, arc, out)
        far = quadratic_arclength(qs, 2.0 * cfg.t_end)
        near = quadratic_arclength(qs, cfg.t_end)
        # diagnostics go to stderr when the table itself is on stdout
        log = out if ns.out_series else sys.stderr
        log.write(f"arclength={tables.fmt(near.value)}\ntail_bound={tables.fmt(near.tail_bound)}\n"
                  f"arclength_doubled_horizon={tables.fmt(far.value)}\n")
        return EXIT_OK
    if ns.command == "sweep":
        base = build_config(ns)
        Path(ns.out_dir).mkdir(parents=True, exist_ok=True)
        return sweep(base, ns.over, ns.values, ns.out_dir, max(1, ns.jobs), out=out)
    raise ConfigError(f"unknown command {ns.command!r}")


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    ns = build_parser().parse_args(argv)
    try:
        return _dispatch(ns, out)
    except (tables.SchemaError, DomainError) as exc:
        sys.stderr.write(f"error=config: {exc}\n")
        return EXIT_CONFIG
    except IntegrationError as exc:
        sys.stderr.write(f"error={exc}\n")
        return EXIT_INTEGRATION
    except OSError as exc:
        sys.stderr.write(f"error=io: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
