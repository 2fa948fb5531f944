"""Command-line front end: ``eitpimc <command> [--config FILE] ...``.

Numeric output goes to standard output (or ``--out``) and depends only on
the configuration, never on the worker count; wall-clock times go to
standard error.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 numeric
failure, 4 non-terminating paths.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bem.solver import SingularSystemError, interior_potential, solve_reference
from .config import ConfigError, RunConfig
from .feynman_kac import default_workers, estimate_potential, voltage_to_current_map
from .geometry import GeometryError
from .oracle import annulus_radial_case, dirichlet_polynomial_case, robin_sphere_case
from .stochastic import NonTerminationError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NONTERMINATION = 4

# oracle-check fails when any |z| exceeds this
Z_FAIL = 4.0

DIRICHLET_POINTS = ((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.0, 0.5, 0.0), (0.3, 0.3, 0.3), (0.6, -0.2, 0.1))


@dataclass
class Report:
    """Rows and a summary, rendered as a table, JSON lines or CSV."""

    command: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, list):
        return "[" + ", ".join(_cell(x) for x in v) + "]"
    return str(v)


def render(report: Report, cfg: RunConfig, fmt: str) -> str:
    """Text form of ``report`` headed by the config hash, seed and echo."""
    echo = cfg.to_ini(runtime=False).rstrip("\n")
    if fmt == "json":
        lines = [
            json.dumps(
                {
                    "record": "run",
                    "command": report.command,
                    "config_hash": cfg.hash,
                    "seed": cfg.solver.seed,
                    "config": echo + "\n",
                }
            )
        ]
        lines += [json.dumps({"record": "row", **_plain(r)}) for r in report.rows]
        lines.append(json.dumps({"record": "summary", **_plain(report.summary)}))
        return "\n".join(lines) + "\n"
    head = [f"# eitpimc {report.command}", f"# config_hash: {cfg.hash}", f"# seed: {cfg.solver.seed}"]
    head += ["# config:"] + [f"#   {line}" if line else "#" for line in echo.splitlines()]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report.columns)
        for r in report.rows:
            w.writerow([repr(_plain(r[c])) if isinstance(_plain(r[c]), float) else _plain(r[c]) for c in report.columns])
        tail = [f"# {k} = {json.dumps(_plain(v))}" for k, v in report.summary.items()]
        return "\n".join(head) + "\n" + buf.getvalue() + "\n".join(tail) + ("\n" if tail else "")
    cells = [[_cell(r[c]) for c in report.columns] for r in report.rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(report.columns)]
    body = ["  ".join(c.rjust(w) for c, w in zip(report.columns, widths))]
    body += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    tail = [f"{k} = {_cell(v)}" for k, v in report.summary.items()]
    return "\n".join(head + [""] + body + [""] + tail) + "\n"


# ---------------------------------------------------------------------------
# commands


def _workers(cfg: RunConfig) -> int:
    return cfg.solver.workers or default_workers()


def cmd_solve_point(cfg: RunConfig, point=None) -> Report:
    """Potential at one point from ``n_paths`` paths."""
    x = cfg.point if point is None else np.asarray(point, dtype=float)
    res = estimate_potential(x, cfg.build_domain(), cfg.build_data(), cfg.walk_params(), workers=_workers(cfg))
    row = {"x": x[0], "y": x[1], "z": x[2], **asdict(res)}
    columns = ["x", "y", "z", "mean", "stderr", "n_paths"]
    case = cfg.oracle_case()
    if case is not None:
        exact = float(case.exact(x))
        row.update(exact=exact, z_score=res.z_score(exact))
        columns += ["exact", "z_score"]
    summary = {k: row[k] for k in ("n_absorbed", "n_capped", "mean_steps", "mean_boundary_events", "mean_robin_events")}
    return Report("solve-point", columns, [row], summary)


def cmd_map(cfg: RunConfig) -> Report:
    """Voltage-to-current map: ``J_l`` on every electrode."""
    domain = cfg.build_domain()
    if not domain.electrodes:
        raise ConfigError("domain.electrodes", "the map needs at least one electrode")
    cm = voltage_to_current_map(domain, cfg.build_data(), cfg.walk_params(), workers=_workers(cfg))
    rows = [
        {"electrode_id": e, "J": j, "stderr": s, "n_paths": n}
        for e, j, s, n in zip(cm.electrode_ids, cm.currents, cm.stderr, cm.n_paths)
    ]
    summary = {"total": cm.total, "total_stderr": cm.total_stderr, **cm.diagnostics}
    return Report("map", ["electrode_id", "J", "stderr", "n_paths"], rows, summary)


def _bem_solution(cfg: RunConfig):
    return solve_reference(cfg.build_domain(), cfg.build_data(), cfg.mesh_params(), quad=cfg.quadrature())


def cmd_bem(cfg: RunConfig) -> Report:
    """Reference currents from the boundary-element solver."""
    sol = _bem_solution(cfg)
    rows = [{"electrode_id": e, "J_ref": j} for e, j in zip(sol.electrode_ids, sol.currents)]
    summary = {
        "total": sol.total,
        "n_elements": len(sol.mesh),
        "n_unknowns": sol.n_unknowns,
        "n_symmetries": sol.n_symmetries,
        "area_defect": sol.mesh.area_defect,
        "residual": sol.residual,
        "condition_estimate": sol.condition_estimate,
    }
    if not sol.electrode_ids and cfg.oracle_case() is not None:
        summary["u_at_point"] = float(interior_potential(cfg.point, sol, cfg.quadrature()))
    return Report("bem", ["electrode_id", "J_ref"], rows, summary)


def cmd_compare(cfg: RunConfig) -> Report:
    """PIMC against the reference solver, and against the exact solution for oracles."""
    case = cfg.oracle_case()
    if case is not None:
        rows = [_oracle_row(case, cfg.point, cfg, with_bem=not case.domain.electrodes)]
        return Report("compare", _ORACLE_COLUMNS, rows, {"max_abs_z": abs(rows[0]["z_score"])})
    pimc = cmd_map(cfg)
    ref = _bem_solution(cfg)
    rows = []
    for r, jref in zip(pimc.rows, ref.currents):
        rows.append(
            {
                "electrode_id": r["electrode_id"],
                "J_pimc": r["J"],
                "stderr": r["stderr"],
                "J_ref": jref,
                "abs_diff": r["J"] - jref,
                "rel_err": abs(r["J"] - jref) / abs(jref) if jref != 0 else float("nan"),
            }
        )
    rel = [r["rel_err"] for r in rows if np.isfinite(r["rel_err"])]
    summary = {
        "max_rel_err": max(rel) if rel else float("nan"),
        "max_abs_diff": max(abs(r["abs_diff"]) for r in rows),
        "total_pimc": pimc.summary["total"],
        "total_ref": ref.total,
    }
    columns = ["electrode_id", "J_pimc", "stderr", "J_ref", "abs_diff", "rel_err"]
    return Report("compare", columns, rows, summary)


_ORACLE_COLUMNS = ["case", "x", "y", "z", "exact", "pimc", "stderr", "z_score", "bem", "bem_err", "passed"]


def _oracle_row(case, x, cfg: RunConfig, with_bem: bool, solution=None) -> dict:
    x = np.asarray(x, dtype=float)
    exact = float(case.exact(x))
    res = estimate_potential(x, case.domain, case.data, cfg.walk_params(), workers=_workers(cfg))
    z = res.z_score(exact)
    row = {"case": case.name, "x": x[0], "y": x[1], "z": x[2], "exact": exact, "pimc": res.mean}
    row.update(stderr=res.stderr, z_score=z, bem=float("nan"), bem_err=float("nan"), passed=bool(abs(z) <= Z_FAIL))
    if with_bem:
        if solution is None:
            solution = solve_reference(case.domain, case.data, cfg.mesh_params(), quad=cfg.quadrature())
        u = float(interior_potential(x, solution, cfg.quadrature()))
        row.update(bem=u, bem_err=u - exact)
    return row


def oracle_suite():
    """The cases and points of ``oracle-check``; BEM applies to the first two."""
    return [
        (dirichlet_polynomial_case("x2-y2"), DIRICHLET_POINTS, True),
        (annulus_radial_case(0.5, 1.0), ((0.75, 0.0, 0.0),), True),
        (robin_sphere_case(1, 2.0), ((0.0, 0.0, 0.9),), False),
    ]


def cmd_oracle_check(cfg: RunConfig, with_bem: bool = True) -> Report:
    """Every oracle case through PIMC (and BEM where it applies), with z-scores."""
    rows = []
    for case, points, bem_ok in oracle_suite():
        sol = None
        if with_bem and bem_ok:
            sol = solve_reference(case.domain, case.data, cfg.mesh_params(), quad=cfg.quadrature())
        for x in points:
            rows.append(_oracle_row(case, x, cfg, with_bem and bem_ok, sol))
    n_fail = sum(not r["passed"] for r in rows)
    summary = {"n_checks": len(rows), "n_failed": n_fail, "max_abs_z": max(abs(r["z_score"]) for r in rows)}
    return Report("oracle-check", _ORACLE_COLUMNS, rows, summary, EXIT_CHECK_FAILED if n_fail else EXIT_OK)


# ---------------------------------------------------------------------------
# entry point


def _point(text: str):
    try:
        v = tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from None
    if len(v) != 3:
        raise argparse.ArgumentTypeError("a point needs three coordinates")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (defaults are used without one)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--workers", type=int, help="worker processes, 0 for all cores")
    common.add_argument("--format", choices=("table", "json", "csv"), help="output format")
    common.add_argument("--out", help="write the report here instead of standard output")
    ap = argparse.ArgumentParser(prog="eitpimc", description="Path-integral Monte Carlo and BEM solvers for EIT.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve-point", parents=[common], help="potential at one point")
    p.add_argument("--point", type=_point, help="x,y,z (overrides solver.point)")
    sub.add_parser("map", parents=[common], help="per-electrode currents from paths")
    sub.add_parser("bem", parents=[common], help="reference currents from the boundary-element solver")
    p = sub.add_parser("compare", parents=[common], help="paths against the reference solver")
    p.add_argument("--point", type=_point, help="x,y,z for oracle presets")
    p = sub.add_parser("oracle-check", parents=[common], help="run the oracle suite")
    p.add_argument("--skip-bem", action="store_true", help="paths only")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(seed=args.seed, workers=args.workers, fmt=args.format, out=args.out)
        if getattr(args, "point", None) is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, point=args.point))
    except ConfigError as exc:
        print(f"eitpimc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        if args.command == "solve-point":
            report = cmd_solve_point(cfg)
        elif args.command == "map":
            report = cmd_map(cfg)
        elif args.command == "bem":
            report = cmd_bem(cfg)
        elif args.command == "compare":
            report = cmd_compare(cfg)
        else:
            report = cmd_oracle_check(cfg, with_bem=not args.skip_bem)
    except ConfigError as exc:
        print(f"eitpimc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonTerminationError as exc:
        print(f"eitpimc: non-terminating paths: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION
    except (GeometryError, SingularSystemError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"eitpimc: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = render(report, cfg, cfg.output.format)
    if cfg.output.path:
        with open(cfg.output.path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"eitpimc: {args.command} wall time {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
