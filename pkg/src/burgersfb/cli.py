"""Command line front end.

Subcommands: ``steady`` (discrete steady solve plus smallness report),
``simulate`` (one trajectory), ``study`` (convergence tables), and
``examples`` (the two packaged experiments).  Problem data comes from a
JSON config; closed-form expressions use ``x1`` and ``x2``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .assembly import FeField, interpolate, l2_norm
from .control import ControlParams
from .evolution import EvolutionConfig, fit_decay_rate, run
from .harness import (
    ProblemConfig,
    Study,
    StudyConfig,
    _initial_field,
    _steady_field,
    run_example1,
    run_example2,
)
from .mesh import build_unit_square_mesh, tag_boundary
from .steady import (
    SteadySpec,
    analytic_from_expression,
    manufactured_solve_spec,
    smallness_report,
    solve_steady,
    steady_residual,
)

__all__ = ["main"]


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _segment(raw):
    return (tuple(float(c) for c in raw[0]), tuple(float(c) for c in raw[1]))


def _dirichlet_region(raw):
    if raw is None:
        return None
    if isinstance(raw[0][0], (list, tuple)):
        return [_segment(seg) for seg in raw]
    return _segment(raw)


def _build_mesh(config: dict):
    domain = config.get("domain", {})
    n = int(domain.get("n", 16))
    return tag_boundary(build_unit_square_mesh(n), _dirichlet_region(domain.get("dirichlet")))


def _steady_spec(config: dict) -> SteadySpec:
    nu = float(config["physics"]["nu"])
    section = config.get("steady", {})
    mean = float(section.get("mean", 0.0))
    mode = section.get("mode")
    if mode is None:
        mode = "manufactured" if "u_inf" in section else "solve"
    if mode == "manufactured":
        if "u_inf" not in section:
            raise ValueError("manufactured steady mode needs a 'u_inf' expression")
        return SteadySpec(
            nu=nu,
            mean_value=mean,
            u_steady=analytic_from_expression(section["u_inf"]),
        )
    if mode == "solve":
        if "f_inf" not in section:
            raise ValueError("solve steady mode needs an 'f_inf' expression")
        return SteadySpec(
            nu=nu,
            mean_value=mean,
            forcing=analytic_from_expression(section["f_inf"]).value,
        )
    raise ValueError(f"unknown steady mode {mode!r}")


def _gain(config: dict) -> float:
    control = config.get("control", {})
    if "c0" in control:
        return float(control["c0"])
    return float(config.get("physics", {}).get("c0", 1.0))


def _controlled(config: dict) -> bool:
    region = config.get("control", {}).get("active_region", "neumann")
    if region not in ("neumann", "none"):
        raise ValueError(f"unknown active_region {region!r}")
    return region == "neumann"


def _problem(config: dict) -> ProblemConfig:
    nu = float(config["physics"]["nu"])
    initial = config.get("initial", {})
    domain = config.get("domain", {})
    if "w0" not in initial:
        raise ValueError("initial section needs a 'w0' expression")
    return ProblemConfig(
        nu=nu,
        c0=_gain(config),
        steady=_steady_spec(config),
        w0=analytic_from_expression(initial["w0"]),
        dirichlet_region=_dirichlet_region(domain.get("dirichlet")),
        coefficient_source=config.get("steady", {}).get("source", "analytic"),
        initial_projection=initial.get("projection", "interpolate"),
    )


def _output_dir(config: dict, override) -> str:
    path = override or config.get("output", {}).get("dir", ".")
    os.makedirs(path, exist_ok=True)
    return path


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _write_field_csv(path: str, field: FeField) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write("x,y,u\n")
        for (x, y), value in zip(field.mesh.vertices, field.values):
            handle.write(f"{x:.17g},{y:.17g},{value:.17g}\n")


def _cmd_steady(args) -> int:
    config = _load_config(args.config)
    mesh = _build_mesh(config)
    spec = _steady_spec(config)
    nu = spec.nu
    if spec.u_steady is not None:
        solve_spec = manufactured_solve_spec(spec.u_steady, nu, spec.mean_value)
    else:
        solve_spec = spec
    solution, history = solve_steady(mesh, solve_spec, full_output=True)
    residual = steady_residual(
        mesh, solution, solve_spec.forcing, nu, neumann_flux=solve_spec.neumann_flux
    )
    payload = {
        "n": int(round(1.0 / mesh.h)),
        "newton_iterations": len(history) - 1,
        "residual_norm": residual,
    }
    if spec.u_steady is not None:
        exact = interpolate(spec.u_steady.value, mesh)
        payload["interpolant_gap_l2"] = l2_norm(
            FeField(mesh, solution.values - exact.values)
        )
    report = smallness_report(mesh, solution, solve_spec.forcing, nu)
    payload["smallness"] = {
        "grad_norm": report.grad_norm,
        "convection_constant": report.convection_constant,
        "bound": report.smallness_bound,
        "bound_loose": report.smallness_bound_loose,
        "satisfied": report.satisfied,
    }
    out = _output_dir(config, args.output_dir)
    path = os.path.join(out, "steady.csv")
    _write_field_csv(path, solution)
    payload["csv"] = path
    _emit(payload)
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    problem = _problem(config)
    time_cfg = config["time"]
    mesh = _build_mesh(config)
    controlled = _controlled(config)
    evolution = EvolutionConfig(
        nu=problem.nu,
        k=float(time_cfg["k"]),
        t_end=float(time_cfg["t_end"]),
        control=ControlParams(nu=problem.nu, c0=problem.c0) if controlled else None,
        nonlinear=time_cfg.get("nonlinear", "newton"),
        coefficient_source=problem.coefficient_source,
        initial_projection=problem.initial_projection,
    )
    u_steady = _steady_field(mesh, problem)
    record = run(_initial_field(mesh, problem), evolution, mesh, u_steady)
    out = _output_dir(config, args.output_dir)
    path = os.path.join(out, "trajectory.csv")
    record.to_csv(path)
    decay = fit_decay_rate(record, window=(0.0, float(time_cfg["t_end"])))
    payload = {
        "csv": path,
        "l2_final": float(record.l2[-1]),
        "h1_final": float(record.h1_semi[-1]),
        "lyapunov_monotone": bool(np.all(np.diff(record.lyapunov) <= 1e-12)),
        "fitted_rate": decay.fitted_rate,
        "predicted_alpha": decay.predicted_alpha,
    }
    _emit(payload)
    return 0


def _cmd_study(args) -> int:
    config = _load_config(args.config)
    problem = _problem(config)
    section = config["study"]
    study = Study(
        StudyConfig(
            problem=problem,
            levels=tuple(int(n) for n in section["levels"]),
            reference_level=int(section["reference"]),
            k=float(config["time"]["k"]),
            t_eval=float(section.get("t_eval", 1.0)),
        )
    )
    table = study.rate_table()
    out = _output_dir(config, args.output_dir)
    state_path = os.path.join(out, "rates_state.csv")
    control_path = os.path.join(out, "rates_control.csv")
    table.write_state_csv(state_path)
    table.write_control_csv(control_path)
    _emit(
        {
            "rates_state": state_path,
            "rates_control": control_path,
            "l2_rates": [float(r) for r in table.l2_rates],
            "h1_rates": [float(r) for r in table.h1_rates],
            "control_rates": [float(r) for r in table.control_rates],
        }
    )
    return 0


def _cmd_examples(args) -> int:
    out = args.output_dir or "."
    payload = {}
    if args.which in ("1", "all"):
        result = run_example1(out)
        payload["example1"] = result.paths
    if args.which in ("2", "all"):
        result = run_example2(out)
        payload["example2"] = result.paths
    _emit(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burgersfb",
        description="Boundary-feedback stabilization of the 2D viscous Burgers equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    steady = sub.add_parser("steady", help="solve the steady problem and report")
    steady.add_argument("--config", required=True)
    steady.add_argument("--output-dir", default=None)
    steady.set_defaults(func=_cmd_steady)

    simulate = sub.add_parser("simulate", help="integrate one trajectory")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--output-dir", default=None)
    simulate.set_defaults(func=_cmd_simulate)

    study = sub.add_parser("study", help="convergence study with rate tables")
    study.add_argument("--config", required=True)
    study.add_argument("--output-dir", default=None)
    study.set_defaults(func=_cmd_study)

    examples = sub.add_parser("examples", help="run the packaged experiments")
    examples.add_argument("--which", choices=("1", "2", "all"), default="all")
    examples.add_argument("--output-dir", default=None)
    examples.set_defaults(func=_cmd_examples)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
