import io

import numpy as np
import pytest

from burgersfb.assembly import (
    FeField,
    assemble_convection_by_gradient,
    assemble_convection_by_transport,
    assemble_mass,
    assemble_stiffness,
    boundary_cubic_residual,
    interpolate,
    l2_norm,
)
from burgersfb.control import ControlParams, control_weak_terms
from burgersfb.evolution import (
    DecayReport,
    EvolutionConfig,
    TrajectoryRecord,
    build_operators,
    decay_rate_bound,
    fit_decay_rate,
    lyapunov,
    lyapunov_decay_coefficient,
    run,
    step,
)
from burgersfb.mesh import build_unit_square_mesh, tag_boundary
from burgersfb.sparse import NonconvergenceError

NU = 0.1
C0 = 1.0
RIGHT_SIDE = ((1.0, 0.0), (1.0, 1.0))


def config(k=0.01, t_end=0.1, **kwargs):
    kwargs.setdefault("control", ControlParams(nu=NU, c0=C0))
    return EvolutionConfig(nu=NU, k=k, t_end=t_end, **kwargs)


def steady_shear(mesh):
    return interpolate(lambda x, y: -0.2 * x, mesh)


def initial_bump(mesh):
    return interpolate(
        lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y) + 0.2 * x, mesh
    )


def synthetic_record(rate=2.0, n=200, k=0.01):
    mesh = build_unit_square_mesh(1)
    times = k * np.arange(n + 1)
    l2 = np.exp(-rate * times)
    return TrajectoryRecord(
        times=times,
        l2=l2,
        h1_semi=l2.copy(),
        lyapunov=0.5 * l2**2,
        control_l2=np.zeros(n + 1),
        newton_iters=np.zeros(n + 1, dtype=int),
        nu=NU,
        c0=C0,
        friedrichs=2.0,
        final_state=FeField(mesh, np.zeros(mesh.num_vertices)),
    )


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(nu=NU, k=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        EvolutionConfig(nu=NU, k=1.5, t_end=3.0)  # step must stay below 1
    with pytest.raises(ValueError):
        EvolutionConfig(nu=NU, k=0.5, t_end=0.25)
    with pytest.raises(ValueError):
        EvolutionConfig(nu=NU, k=0.1, t_end=1.0, nonlinear="broken")
    with pytest.raises(ValueError):
        EvolutionConfig(nu=NU, k=0.1, t_end=1.0, control=ControlParams(nu=0.2, c0=1.0))


def test_equilibrium_is_invariant():
    mesh = build_unit_square_mesh(4)
    record = run(
        FeField(mesh, np.zeros(mesh.num_vertices)),
        config(),
        mesh,
        steady_shear(mesh),
    )
    assert np.all(record.l2 == 0.0)
    assert np.all(record.h1_semi == 0.0)
    assert np.all(record.lyapunov == 0.0)
    assert np.all(record.control_l2 == 0.0)


def test_step_satisfies_weak_residual():
    # the converged step must zero the backward Euler residual assembled
    # here from public pieces only
    mesh = build_unit_square_mesh(4)
    u_steady = steady_shear(mesh)
    cfg = config(k=0.01, t_end=0.01)
    ops = build_operators(mesh, u_steady, cfg)
    w_prev = initial_bump(mesh)
    w = step(w_prev, cfg, ops)

    mass = assemble_mass(mesh)
    stiffness = assemble_stiffness(mesh)
    linear, _, _ = control_weak_terms(u_steady, cfg.control, w)
    residual = (
        (mass @ (w.values - w_prev.values)) / cfg.k
        + NU * (stiffness @ w.values)
        + assemble_convection_by_transport(u_steady) @ w.values
        + assemble_convection_by_gradient(u_steady) @ w.values
        + assemble_convection_by_transport(w) @ w.values
        + linear @ w.values
        + (2.0 / (9.0 * C0)) * boundary_cubic_residual(w, cfg.control.active_tags)
    )
    assert np.linalg.norm(residual) <= 1e-9


def test_step_first_order_increment():
    mesh = build_unit_square_mesh(4)
    u_steady = steady_shear(mesh)
    w0 = initial_bump(mesh)
    increments = []
    for k in (0.002, 0.001):
        cfg = config(k=k, t_end=k)
        ops = build_operators(mesh, u_steady, cfg)
        w1 = step(w0, cfg, ops)
        increments.append(l2_norm(FeField(mesh, w1.values - w0.values)))
    ratio = increments[0] / increments[1]
    assert 1.8 <= ratio <= 2.2


def test_newton_nonconvergence_reports_history():
    mesh = build_unit_square_mesh(2)
    cfg = config(k=0.01, t_end=0.01, newton_tol=1e-300, newton_max=2)
    ops = build_operators(mesh, steady_shear(mesh), cfg)
    with pytest.raises(NonconvergenceError) as info:
        step(initial_bump(mesh), cfg, ops)
    assert len(info.value.residual_history) >= 1


def test_picard_close_to_newton():
    mesh = build_unit_square_mesh(4)
    u_steady = steady_shear(mesh)
    w0 = initial_bump(mesh)
    gaps = {}
    for k in (0.002, 0.001):
        states = {}
        for scheme in ("newton", "picard"):
            cfg = config(k=k, t_end=10 * k, nonlinear=scheme)
            record = run(w0, cfg, mesh, u_steady)
            states[scheme] = record.final_state.values
        gaps[k] = np.linalg.norm(states["newton"] - states["picard"])
    # O(k) agreement: the gap halves with the step, up to slack
    assert gaps[0.001] <= 0.75 * gaps[0.002]
    assert gaps[0.002] <= 1.0e-2


def test_controlled_run_decays_monotonically():
    mesh = build_unit_square_mesh(8)
    record = run(initial_bump(mesh), config(t_end=0.5), mesh, steady_shear(mesh))
    assert np.all(np.diff(record.l2[1:]) < 0.0)
    assert np.all(np.diff(record.lyapunov) <= 1e-12)
    assert record.c0 == C0
    assert record.friedrichs == 2.0
    assert np.all(record.newton_iters[1:] >= 1)
    assert np.allclose(np.diff(record.times), 0.01, atol=1e-15)


def test_uncontrolled_run_keeps_zero_control_norms():
    mesh = build_unit_square_mesh(4)
    cfg = config(control=None)
    record = run(initial_bump(mesh), cfg, mesh, steady_shear(mesh))
    assert np.all(record.control_l2 == 0.0)
    assert record.c0 is None


def test_dirichlet_rows_stay_zero():
    mesh = tag_boundary(build_unit_square_mesh(4), RIGHT_SIDE)
    u_steady = steady_shear(mesh)
    cfg = config(k=0.01, t_end=0.01)
    ops = build_operators(mesh, u_steady, cfg)
    w = interpolate(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), mesh)
    on_right = np.isclose(mesh.vertices[:, 0], 1.0)
    for _ in range(5):
        w = step(w, cfg, ops)
        assert np.all(w.values[on_right] == 0.0)


def test_run_input_validation():
    mesh = build_unit_square_mesh(2)
    other = build_unit_square_mesh(2)
    w0 = FeField(other, np.zeros(other.num_vertices))
    with pytest.raises(ValueError):
        run(w0, config(), mesh, steady_shear(mesh))
    with pytest.raises(ValueError):
        run(
            FeField(mesh, np.zeros(mesh.num_vertices)),
            config(k=0.03, t_end=0.1),
            mesh,
            steady_shear(mesh),
        )


def test_lyapunov_values(unit4):
    zero = FeField(unit4, np.zeros(unit4.num_vertices))
    assert lyapunov(zero) == 0.0
    one = FeField(unit4, np.ones(unit4.num_vertices))
    assert lyapunov(one) == pytest.approx(0.5, abs=1e-13)
    tripled = FeField(unit4, 3.0 * one.values)
    assert lyapunov(tripled) == pytest.approx(9.0 * lyapunov(one), abs=1e-12)


def test_csv_roundtrip_and_determinism():
    record = synthetic_record(n=5)
    first, second = io.StringIO(), io.StringIO()
    record.to_csv(first)
    record.to_csv(second)
    assert first.getvalue() == second.getvalue()
    lines = first.getvalue().splitlines()
    assert lines[0] == "time,l2,h1semi,lyapunov,control_l2,newton_iters"
    assert len(lines) == 7
    assert lines[1].split(",")[0] == "0"


def test_predicted_decay_constants():
    assert decay_rate_bound(NU, C0, 2.0) == pytest.approx(0.0125, abs=1e-15)
    assert lyapunov_decay_coefficient(NU, C0, 2.0) == pytest.approx(0.0875, abs=1e-15)


def test_fit_decay_rate_synthetic():
    report = fit_decay_rate(synthetic_record(rate=2.0), window=(0.0, 2.0))
    assert isinstance(report, DecayReport)
    assert report.fitted_rate == pytest.approx(2.0, abs=1e-10)
    assert report.predicted_alpha == pytest.approx(0.0125, abs=1e-15)
    assert report.c_lyp == pytest.approx(0.0875, abs=1e-15)


def test_fit_decay_rate_constant_series():
    record = synthetic_record(rate=0.0)
    report = fit_decay_rate(record, window=(0.0, 2.0))
    assert report.fitted_rate == pytest.approx(0.0, abs=1e-12)


def test_fit_decay_rate_window_validation():
    record = synthetic_record(n=20)
    with pytest.raises(ValueError):
        fit_decay_rate(record, window=(0.0, 0.05))  # fewer than 10 samples
    with pytest.raises(ValueError):
        fit_decay_rate(record, window=(1.0, 0.0))

    bad = synthetic_record(n=20)
    bad.l2[5] = 0.0
    with pytest.raises(ValueError):
        fit_decay_rate(bad, window=(0.0, 0.2))
