"""Implicit time stepping of the deviation dynamics with boundary feedback.

Backward Euler in time; each step solves the fully implicit nonlinear
system by Newton's method (default) or by a lagged Picard linearization
that freezes the transported coefficient and the cubic boundary weight at
the previous state, costing a single linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import (
    FeField,
    apply_dirichlet,
    assemble_boundary_mass,
    assemble_convection_by_gradient,
    assemble_convection_by_transport,
    assemble_mass,
    assemble_stiffness,
    boundary_cubic_jacobian,
    boundary_cubic_residual,
    dirichlet_vertex_indices,
    trace_values,
)
from .control import ControlParams, control_boundary_l2, control_weak_terms
from .mesh import Mesh, friedrichs_constant
from .sparse import NonconvergenceError, solve_general

__all__ = [
    "DecayReport",
    "EvolutionConfig",
    "StepOperators",
    "TrajectoryRecord",
    "build_operators",
    "decay_rate_bound",
    "fit_decay_rate",
    "lyapunov",
    "lyapunov_decay_coefficient",
    "run",
    "step",
]

_CSV_HEADER = "time,l2,h1semi,lyapunov,control_l2,newton_iters"


@dataclass(frozen=True)
class EvolutionConfig:
    """Time discretization and nonlinear solver choices.

    ``control=None`` integrates the uncontrolled dynamics (natural zero-flux
    boundary).  ``coefficient_source`` records whether the steady field fed
    to :func:`run` came from a discrete solve or an analytic interpolant;
    the integrator uses whatever field it receives.
    """

    nu: float
    k: float
    t_end: float
    control: Optional[ControlParams] = None
    nonlinear: str = "newton"
    newton_tol: float = 1e-10
    newton_max: int = 20
    coefficient_source: str = "analytic"
    initial_projection: str = "interpolate"

    def __post_init__(self):
        if self.nu <= 0.0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not 0.0 < self.k < 1.0:
            raise ValueError(f"time step must lie in (0, 1), got {self.k}")
        if self.t_end < self.k:
            raise ValueError("t_end must cover at least one step")
        if self.nonlinear not in ("newton", "picard"):
            raise ValueError(f"unknown nonlinear solver {self.nonlinear!r}")
        if self.coefficient_source not in ("analytic", "discrete"):
            raise ValueError(
                f"unknown coefficient source {self.coefficient_source!r}"
            )
        if self.initial_projection not in ("interpolate", "elliptic"):
            raise ValueError(
                f"unknown initial projection {self.initial_projection!r}"
            )
        if self.control is not None and abs(self.control.nu - self.nu) > 1e-14:
            raise ValueError("control viscosity disagrees with the dynamics")


@dataclass(eq=False)
class StepOperators:
    """Matrices that stay constant along a trajectory."""

    mesh: Mesh
    u_steady: FeField
    mass: "object"
    stiffness: "object"
    constant_matrix: "object"
    cubic_scale: float
    active_tags: Optional[tuple]
    dirichlet: np.ndarray


def build_operators(mesh: Mesh, u_steady: FeField, cfg: EvolutionConfig) -> StepOperators:
    """Assemble the time-independent part of the implicit system."""
    if u_steady.mesh is not mesh:
        raise ValueError("steady field does not live on the given mesh")
    mass = assemble_mass(mesh)
    stiffness = assemble_stiffness(mesh)
    constant = (
        cfg.nu * stiffness
        + assemble_convection_by_transport(u_steady)
        + assemble_convection_by_gradient(u_steady)
    )
    cubic_scale = 0.0
    active = None
    if cfg.control is not None:
        linear, _, _ = control_weak_terms(
            u_steady, cfg.control, FeField(mesh, np.zeros(mesh.num_vertices))
        )
        constant = constant + linear
        cubic_scale = 2.0 / (9.0 * cfg.control.c0)
        active = cfg.control.active_tags
    return StepOperators(
        mesh=mesh,
        u_steady=u_steady,
        mass=mass,
        stiffness=stiffness,
        constant_matrix=constant.tocsr(),
        cubic_scale=cubic_scale,
        active_tags=active,
        dirichlet=dirichlet_vertex_indices(mesh),
    )


def _cubic_residual_vector(ops: StepOperators, values: np.ndarray) -> np.ndarray:
    field = FeField(ops.mesh, values)
    return ops.cubic_scale * boundary_cubic_residual(field, ops.active_tags)


def _cubic_jacobian(ops: StepOperators, values: np.ndarray):
    field = FeField(ops.mesh, values)
    return ops.cubic_scale * boundary_cubic_jacobian(field, ops.active_tags)


def _newton_step(w_prev: np.ndarray, cfg: EvolutionConfig, ops: StepOperators):
    inv_k = 1.0 / cfg.k
    dofs = ops.dirichlet
    w = w_prev.copy()
    if dofs.size:
        w[dofs] = 0.0
    history = []
    for iteration in range(cfg.newton_max + 1):
        field = FeField(ops.mesh, w)
        transport = assemble_convection_by_transport(field)
        residual = (
            inv_k * (ops.mass @ (w - w_prev))
            + ops.constant_matrix @ w
            + transport @ w
        )
        if ops.cubic_scale:
            residual += _cubic_residual_vector(ops, w)
        if dofs.size:
            residual[dofs] = w[dofs]
        res_norm = float(np.linalg.norm(residual))
        history.append(res_norm)
        if res_norm <= cfg.newton_tol:
            return w, iteration
        if iteration == cfg.newton_max:
            break
        jacobian = (
            inv_k * ops.mass
            + ops.constant_matrix
            + transport
            + assemble_convection_by_gradient(field)
        )
        if ops.cubic_scale:
            jacobian = jacobian + _cubic_jacobian(ops, w)
        if dofs.size:
            jacobian = apply_dirichlet(jacobian.tocsr(), dofs)
        w = w + solve_general(jacobian.tocsr(), -residual)
    raise NonconvergenceError(
        f"implicit step Newton stalled after {cfg.newton_max} iterations "
        f"(residual {history[-1]:.3e})",
        history,
    )


def _picard_step(w_prev: np.ndarray, cfg: EvolutionConfig, ops: StepOperators):
    inv_k = 1.0 / cfg.k
    dofs = ops.dirichlet
    prev = w_prev.copy()
    if dofs.size:
        prev[dofs] = 0.0
    field = FeField(ops.mesh, prev)
    system = inv_k * ops.mass + ops.constant_matrix + assemble_convection_by_transport(field)
    if ops.cubic_scale:
        tr = trace_values(field, ops.active_tags)
        system = system + assemble_boundary_mass(
            ops.mesh, ops.cubic_scale * tr**2, ops.active_tags
        )
    rhs = inv_k * (ops.mass @ prev)
    if dofs.size:
        system = apply_dirichlet(system.tocsr(), dofs)
        rhs[dofs] = 0.0
    return solve_general(system.tocsr(), rhs), 1


def step(w_prev: FeField, cfg: EvolutionConfig, ops: StepOperators) -> FeField:
    """Advance one implicit step from ``w_prev``."""
    if w_prev.mesh is not ops.mesh:
        raise ValueError("state does not live on the operators' mesh")
    if cfg.nonlinear == "newton":
        values, _ = _newton_step(w_prev.values, cfg, ops)
    else:
        values, _ = _picard_step(w_prev.values, cfg, ops)
    return FeField(ops.mesh, values)


@dataclass(eq=False)
class TrajectoryRecord:
    """Per-step diagnostics of one trajectory, including the initial state.

    Carries the physical constants needed to compare the observed decay
    against the predicted bounds; ``c0`` is ``None`` for uncontrolled runs.
    """

    times: np.ndarray
    l2: np.ndarray
    h1_semi: np.ndarray
    lyapunov: np.ndarray
    control_l2: np.ndarray
    newton_iters: np.ndarray
    nu: float
    c0: Optional[float]
    friedrichs: float
    final_state: "FeField"

    def to_csv(self, stream) -> None:
        """Write rows in a reproducible fixed format (17 significant digits)."""
        close = False
        if isinstance(stream, (str, bytes)):
            stream = open(stream, "w", encoding="ascii", newline="\n")
            close = True
        try:
            stream.write(_CSV_HEADER + "\n")
            for i in range(self.times.shape[0]):
                stream.write(
                    f"{self.times[i]:.17g},{self.l2[i]:.17g},"
                    f"{self.h1_semi[i]:.17g},{self.lyapunov[i]:.17g},"
                    f"{self.control_l2[i]:.17g},{int(self.newton_iters[i])}\n"
                )
        finally:
            if close:
                stream.close()


def lyapunov(w: FeField) -> float:
    """Energy ``0.5 * integral of w^2``."""
    mass = assemble_mass(w.mesh)
    return 0.5 * float(w.values @ (mass @ w.values))


def run(w0: FeField, cfg: EvolutionConfig, mesh: Mesh, u_steady: FeField) -> TrajectoryRecord:
    """Integrate from ``w0`` to ``t_end`` and record diagnostics per step.

    ``t_end`` must be an integer multiple of the step size.  Dirichlet
    vertices are held exactly at zero throughout.
    """
    if w0.mesh is not mesh:
        raise ValueError("initial state does not live on the given mesh")
    n_steps = int(round(cfg.t_end / cfg.k))
    if abs(n_steps * cfg.k - cfg.t_end) > 1e-9 * max(cfg.t_end, 1.0):
        raise ValueError("t_end must be an integer multiple of the step size")
    ops = build_operators(mesh, u_steady, cfg)

    times = np.zeros(n_steps + 1)
    l2 = np.zeros(n_steps + 1)
    h1 = np.zeros(n_steps + 1)
    energy = np.zeros(n_steps + 1)
    ctl = np.zeros(n_steps + 1)
    iters = np.zeros(n_steps + 1, dtype=int)

    w = w0.values.copy()
    if ops.dirichlet.size:
        w[ops.dirichlet] = 0.0

    def record(i, values, iteration_count):
        times[i] = i * cfg.k
        mw = ops.mass @ values
        l2[i] = np.sqrt(max(values @ mw, 0.0))
        h1[i] = np.sqrt(max(values @ (ops.stiffness @ values), 0.0))
        energy[i] = 0.5 * float(values @ mw)
        if cfg.control is not None:
            ctl[i] = control_boundary_l2(
                FeField(mesh, values), u_steady, cfg.control
            )
        iters[i] = iteration_count

    record(0, w, 0)
    advance = _newton_step if cfg.nonlinear == "newton" else _picard_step
    for n in range(1, n_steps + 1):
        w, count = advance(w, cfg, ops)
        record(n, w, count)

    return TrajectoryRecord(
        times=times,
        l2=l2,
        h1_semi=h1,
        lyapunov=energy,
        control_l2=ctl,
        newton_iters=iters,
        nu=cfg.nu,
        c0=None if cfg.control is None else cfg.control.c0,
        friedrichs=friedrichs_constant(mesh),
        final_state=FeField(mesh, w),
    )


def decay_rate_bound(nu: float, c0: float, friedrichs: float) -> float:
    """Guaranteed exponential decay rate of the controlled deviation norm."""
    return min(nu / 2.0, c0 + 7.0 * nu / 4.0) / (2.0 * friedrichs)


def lyapunov_decay_coefficient(nu: float, c0: float, friedrichs: float) -> float:
    """Coefficient in ``dV/dt <= -C V`` for the controlled energy."""
    return 2.0 * min(7.0 * nu / 8.0, c0 / 2.0 + 7.0 * nu / 8.0) / friedrichs


@dataclass(frozen=True)
class DecayReport:
    """Fitted decay rate next to the predicted bounds.

    ``delta`` is the dissipation margin left at the predicted rate; the
    predicted fields are ``None`` when the trajectory was uncontrolled.
    """

    fitted_rate: float
    fit_window: tuple
    predicted_alpha: Optional[float]
    c_lyp: Optional[float]
    delta: Optional[float]


def fit_decay_rate(record: TrajectoryRecord, window: tuple) -> DecayReport:
    """Least-squares exponential decay rate of the recorded L2 norms.

    Fits ``log ||w||`` against time over ``window = (t0, t1)`` and returns
    the negated slope.  Requires at least 10 samples in the window and
    strictly positive norms there.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError(f"empty fit window ({t0}, {t1})")
    eps = 1e-12 * max(1.0, abs(t1))
    mask = (record.times >= t0 - eps) & (record.times <= t1 + eps)
    if int(mask.sum()) < 10:
        raise ValueError(
            f"fit window contains {int(mask.sum())} samples; need at least 10"
        )
    values = record.l2[mask]
    if np.any(values <= 0.0):
        raise ValueError("fit window contains nonpositive norms")
    slope = np.polyfit(record.times[mask], np.log(values), 1)[0]
    fitted = -float(slope)
    if record.c0 is None:
        return DecayReport(fitted, (t0, t1), None, None, None)
    alpha = decay_rate_bound(record.nu, record.c0, record.friedrichs)
    c_lyp = lyapunov_decay_coefficient(record.nu, record.c0, record.friedrichs)
    two_alpha_cf = 2.0 * alpha * record.friedrichs
    delta = min(
        7.0 * record.nu / 4.0 - two_alpha_cf,
        record.c0 + 7.0 * record.nu / 4.0 - two_alpha_cf,
    )
    return DecayReport(fitted, (t0, t1), alpha, c_lyp, delta)
