"""Convergence studies and the two reference experiments.

A study runs the controlled dynamics on a family of nested meshes plus one
finer reference mesh, compares states (and feedback traces) at a fixed
evaluation time after exact prolongation onto the reference mesh, and
tabulates errors with log2 convergence rates.  The two experiment drivers
reproduce the published data layout: trajectory series for the decay
figures and rate tables for the error tables.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import (
    FeField,
    NonNestedMeshError,
    boundary_quadrature,
    elliptic_projection,
    interpolate,
    prolong,
)
from .control import ControlParams, control_trace
from .evolution import EvolutionConfig, TrajectoryRecord, run
from .mesh import Mesh, build_unit_square_mesh, refine_uniform, tag_boundary
from .steady import AnalyticFunction, SteadySpec, analytic_from_expression, manufactured_solve_spec, solve_steady

__all__ = [
    "Example1Result",
    "Example2Result",
    "ProblemConfig",
    "RateTable",
    "Study",
    "StudyConfig",
    "compute_rates",
    "control_errors",
    "run_example1",
    "run_example2",
    "state_errors",
]


@dataclass(frozen=True)
class ProblemConfig:
    """Physical data of one stabilization problem.

    ``w0`` is the closed-form initial deviation.  ``dirichlet_region``
    selects boundary segments pinned to zero (None for pure flux control).
    ``coefficient_source`` decides whether the steady coefficients come
    from the closed form or from a discrete steady solve.
    """

    nu: float
    c0: float
    steady: SteadySpec
    w0: AnalyticFunction
    dirichlet_region: object = None
    coefficient_source: str = "analytic"
    initial_projection: str = "interpolate"

    def __post_init__(self):
        if self.nu <= 0.0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if self.c0 <= 0.0:
            raise ValueError(f"control gain must be positive, got {self.c0}")


@dataclass(frozen=True)
class StudyConfig:
    """Mesh levels, reference level, and time sampling of one study."""

    problem: ProblemConfig
    levels: tuple
    reference_level: int
    k: float
    t_eval: float

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1 or any(n < 1 for n in levels):
            raise ValueError(f"invalid level list {levels}")
        if list(levels) != sorted(set(levels)):
            raise ValueError("levels must be strictly increasing")
        if self.reference_level <= max(levels):
            raise ValueError("reference level must be finer than every level")
        if self.k <= 0.0 or self.t_eval < self.k:
            raise ValueError("need a positive step covering t_eval")
        steps = round(self.t_eval / self.k)
        if abs(steps * self.k - self.t_eval) > 1e-9 * max(self.t_eval, 1.0):
            raise ValueError("t_eval must be an integer multiple of k")


def compute_rates(errors, hs) -> np.ndarray:
    """log2 error ratios between consecutive halved mesh sizes."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need matching error/h sequences of length at least 2")
    if np.any(errors <= 0.0):
        raise ValueError("error sequence must be strictly positive")
    if np.max(np.abs(hs[1:] / hs[:-1] - 0.5)) > 1e-12:
        raise ValueError("mesh sizes must halve between rows")
    return np.log2(errors[:-1] / errors[1:])


def _steady_field(mesh: Mesh, problem: ProblemConfig) -> FeField:
    spec = problem.steady
    if problem.coefficient_source == "analytic":
        if spec.u_steady is None:
            raise ValueError("analytic coefficients need a closed-form steady state")
        return interpolate(spec.u_steady.value, mesh)
    if spec.u_steady is not None:
        spec = manufactured_solve_spec(spec.u_steady, spec.nu, spec.mean_value)
    return solve_steady(mesh, spec)


def _initial_field(mesh: Mesh, problem: ProblemConfig) -> FeField:
    if problem.initial_projection == "elliptic":
        return elliptic_projection(
            mesh, problem.w0.value, problem.w0.dx, problem.w0.dy, shift=1.0
        )
    return interpolate(problem.w0.value, mesh)


def _control_params(problem: ProblemConfig) -> ControlParams:
    return ControlParams(nu=problem.nu, c0=problem.c0)


class Study:
    """Caches meshes, steady fields, and level solutions of one study.

    The reference mesh is reached from the coarsest level by repeated
    uniform refinement, so every level mesh is an ancestor of the reference
    and prolongation is exact.
    """

    def __init__(self, config: StudyConfig):
        self.config = config
        self._meshes: dict = {}
        self._steady: dict = {}
        self._states: dict = {}
        self._records: dict = {}

    @staticmethod
    def ensure(study) -> "Study":
        return study if isinstance(study, Study) else Study(study)

    def mesh(self, n: int) -> Mesh:
        if not self._meshes:
            cfg = self.config
            targets = set(cfg.levels) | {cfg.reference_level}
            level = min(cfg.levels)
            mesh = tag_boundary(
                build_unit_square_mesh(level), self.config.problem.dirichlet_region
            )
            self._meshes[level] = mesh
            while level < cfg.reference_level:
                mesh = refine_uniform(mesh)
                level *= 2
                if level in targets:
                    self._meshes[level] = mesh
            missing = targets - set(self._meshes)
            if missing:
                raise NonNestedMeshError(
                    f"levels {sorted(missing)} are not reachable from "
                    f"{min(cfg.levels)} by uniform refinement"
                )
        if n not in self._meshes:
            raise NonNestedMeshError(
                f"level {n} is not part of this study's nested family"
            )
        return self._meshes[n]

    def steady_field(self, n: int) -> FeField:
        if n not in self._steady:
            self._steady[n] = _steady_field(self.mesh(n), self.config.problem)
        return self._steady[n]

    def record(self, n: int) -> TrajectoryRecord:
        if n not in self._records:
            cfg = self.config
            problem = cfg.problem
            mesh = self.mesh(n)
            evolution = EvolutionConfig(
                nu=problem.nu,
                k=cfg.k,
                t_end=cfg.t_eval,
                control=_control_params(problem),
                coefficient_source=problem.coefficient_source,
                initial_projection=problem.initial_projection,
            )
            record = run(_initial_field(mesh, problem), evolution, mesh, self.steady_field(n))
            self._records[n] = record
            self._states[n] = record.final_state
        return self._records[n]

    def state(self, n: int) -> FeField:
        self.record(n)
        return self._states[n]

    def state_errors(self, n: int):
        """L2 and H1-seminorm errors against the reference at t_eval."""
        from .assembly import h1_seminorm, l2_norm

        cfg = self.config
        ref_mesh = self.mesh(cfg.reference_level)
        coarse = prolong(self.state(n), ref_mesh)
        diff = FeField(ref_mesh, coarse.values - self.state(cfg.reference_level).values)
        return l2_norm(diff), h1_seminorm(diff)

    def control_errors(self, n: int) -> float:
        """Boundary L2 error of the feedback trace against the reference."""
        cfg = self.config
        params = _control_params(cfg.problem)
        ref_mesh = self.mesh(cfg.reference_level)
        ref_steady = self.steady_field(cfg.reference_level)
        coarse = prolong(self.state(n), ref_mesh)
        trace_level = control_trace(coarse, ref_steady, params)
        trace_ref = control_trace(self.state(cfg.reference_level), ref_steady, params)
        bq = boundary_quadrature(ref_mesh, params.active_tags)
        diff = (trace_level - trace_ref)[bq.index]
        val = np.sum((diff**2 @ bq.weights) * bq.lengths)
        return float(np.sqrt(max(val, 0.0)))

    def rate_table(self) -> "RateTable":
        cfg = self.config
        hs = np.array([1.0 / n for n in cfg.levels])
        l2_errors = np.zeros(len(cfg.levels))
        h1_errors = np.zeros(len(cfg.levels))
        ctl_errors = np.zeros(len(cfg.levels))
        for i, n in enumerate(cfg.levels):
            l2_errors[i], h1_errors[i] = self.state_errors(n)
            ctl_errors[i] = self.control_errors(n)
        return RateTable(
            hs=hs,
            l2_errors=l2_errors,
            l2_rates=compute_rates(l2_errors, hs),
            h1_errors=h1_errors,
            h1_rates=compute_rates(h1_errors, hs),
            control_errors=ctl_errors,
            control_rates=compute_rates(ctl_errors, hs),
        )


def state_errors(study, n: int):
    """Errors of level ``n`` against the study's reference; see :class:`Study`.

    Accepts a :class:`StudyConfig` (runs what it needs) or a :class:`Study`
    instance (reuses its cache).
    """
    return Study.ensure(study).state_errors(n)


def control_errors(study, n: int) -> float:
    """Feedback-trace error of level ``n``; see :func:`state_errors`."""
    return Study.ensure(study).control_errors(n)


@dataclass(frozen=True)
class RateTable:
    """Errors and log2 rates per mesh level, states and feedback traces."""

    hs: np.ndarray
    l2_errors: np.ndarray
    l2_rates: np.ndarray
    h1_errors: np.ndarray
    h1_rates: np.ndarray
    control_errors: np.ndarray
    control_rates: np.ndarray

    def write_state_csv(self, stream) -> None:
        _write_csv(
            stream,
            "h,error_l2,rate_l2,error_h1,rate_h1",
            [
                (
                    _g(self.hs[i]),
                    _g(self.l2_errors[i]),
                    "" if i == 0 else _g(self.l2_rates[i - 1]),
                    _g(self.h1_errors[i]),
                    "" if i == 0 else _g(self.h1_rates[i - 1]),
                )
                for i in range(self.hs.shape[0])
            ],
        )

    def write_control_csv(self, stream) -> None:
        _write_csv(
            stream,
            "h,error_control,rate_control",
            [
                (
                    _g(self.hs[i]),
                    _g(self.control_errors[i]),
                    "" if i == 0 else _g(self.control_rates[i - 1]),
                )
                for i in range(self.hs.shape[0])
            ],
        )


def _g(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(stream, header: str, rows) -> None:
    close = False
    if isinstance(stream, (str, bytes)):
        stream = open(stream, "w", encoding="ascii", newline="\n")
        close = True
    try:
        stream.write(header + "\n")
        for row in rows:
            stream.write(",".join(row) + "\n")
    finally:
        if close:
            stream.close()


def _control_norm_csv(path: str, record: TrajectoryRecord) -> None:
    rows = [
        (_g(record.times[i]), _g(record.control_l2[i]))
        for i in range(record.times.shape[0])
    ]
    _write_csv(path, "time,control_l2", rows)


def example1_problem(nu: float = 0.1, c0: float = 1.0) -> ProblemConfig:
    """Stabilization around the linear shear steady state on the unit square."""
    steady = SteadySpec(
        nu=nu, mean_value=-0.1, u_steady=analytic_from_expression("-0.2*x1")
    )
    return ProblemConfig(
        nu=nu,
        c0=c0,
        steady=steady,
        w0=analytic_from_expression("sin(pi*x1)*sin(pi*x2) + 0.2*x1"),
    )


def example2_problem(
    nu: float = 0.1, c0: float = 1.0, steady_expr: str = "-0.2*x1"
) -> ProblemConfig:
    """Mixed boundary variant: Dirichlet on the right side, control elsewhere."""
    steady = SteadySpec(
        nu=nu, mean_value=-0.1, u_steady=analytic_from_expression(steady_expr)
    )
    return ProblemConfig(
        nu=nu,
        c0=c0,
        steady=steady,
        w0=analytic_from_expression("sin(pi*x1)*sin(pi*x2)"),
        dirichlet_region=((1.0, 0.0), (1.0, 1.0)),
    )


@dataclass(eq=False)
class Example1Result:
    controlled: TrajectoryRecord
    uncontrolled: TrajectoryRecord
    table: RateTable
    paths: dict


@dataclass(eq=False)
class Example2Result:
    controlled: TrajectoryRecord
    uncontrolled: TrajectoryRecord
    paths: dict


def _figure_runs(problem: ProblemConfig, n: int, k: float, t_end: float):
    mesh = tag_boundary(build_unit_square_mesh(n), problem.dirichlet_region)
    u_steady = _steady_field(mesh, problem)
    w0 = _initial_field(mesh, problem)
    controlled_cfg = EvolutionConfig(
        nu=problem.nu,
        k=k,
        t_end=t_end,
        control=_control_params(problem),
        coefficient_source=problem.coefficient_source,
        initial_projection=problem.initial_projection,
    )
    uncontrolled_cfg = EvolutionConfig(
        nu=problem.nu,
        k=k,
        t_end=t_end,
        control=None,
        coefficient_source=problem.coefficient_source,
        initial_projection=problem.initial_projection,
    )
    controlled = run(w0, controlled_cfg, mesh, u_steady)
    uncontrolled = run(w0, uncontrolled_cfg, mesh, u_steady)
    return controlled, uncontrolled


def run_example1(
    output_dir: str,
    levels=(4, 8, 16, 32),
    reference: int = 64,
    k: float = 0.0005,
    t_eval: float = 1.0,
    figure_n: int = 16,
    t_end: float = 5.0,
    nu: float = 0.1,
    c0: float = 1.0,
) -> Example1Result:
    """Decay curves and convergence tables for the flux-controlled square.

    Emits the controlled and uncontrolled trajectory series, the feedback
    norm series, and the state/control rate tables as CSV files in
    ``output_dir``.
    """
    os.makedirs(output_dir, exist_ok=True)
    problem = example1_problem(nu=nu, c0=c0)
    controlled, uncontrolled = _figure_runs(problem, figure_n, k, t_end)
    study = Study(
        StudyConfig(
            problem=problem,
            levels=tuple(levels),
            reference_level=reference,
            k=k,
            t_eval=t_eval,
        )
    )
    table = study.rate_table()
    paths = {
        "controlled": os.path.join(output_dir, "example1_controlled.csv"),
        "uncontrolled": os.path.join(output_dir, "example1_uncontrolled.csv"),
        "control_norm": os.path.join(output_dir, "example1_control.csv"),
        "rates_state": os.path.join(output_dir, "rates_state.csv"),
        "rates_control": os.path.join(output_dir, "rates_control.csv"),
    }
    controlled.to_csv(paths["controlled"])
    uncontrolled.to_csv(paths["uncontrolled"])
    _control_norm_csv(paths["control_norm"], controlled)
    table.write_state_csv(paths["rates_state"])
    table.write_control_csv(paths["rates_control"])
    return Example1Result(
        controlled=controlled, uncontrolled=uncontrolled, table=table, paths=paths
    )


def run_example2(
    output_dir: str,
    n: int = 16,
    k: float = 0.0005,
    t_end: float = 5.0,
    nu: float = 0.1,
    c0: float = 1.0,
    steady_expr: str = "-0.2*x1",
) -> Example2Result:
    """Decay curves for the mixed Dirichlet / flux-control variant."""
    os.makedirs(output_dir, exist_ok=True)
    problem = example2_problem(nu=nu, c0=c0, steady_expr=steady_expr)
    controlled, uncontrolled = _figure_runs(problem, n, k, t_end)
    paths = {
        "controlled": os.path.join(output_dir, "example2_controlled.csv"),
        "uncontrolled": os.path.join(output_dir, "example2_uncontrolled.csv"),
        "control_norm": os.path.join(output_dir, "example2_control.csv"),
    }
    controlled.to_csv(paths["controlled"])
    uncontrolled.to_csv(paths["uncontrolled"])
    _control_norm_csv(paths["control_norm"], controlled)
    return Example2Result(
        controlled=controlled, uncontrolled=uncontrolled, paths=paths
    )
