import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from kdvfeedback.errors import (
    DegenerateWindow,
    GridMismatch,
    NonconformingInitialData,
    PicardDiverged,
    UsageError,
)
from kdvfeedback.kernel import synthesize
from kdvfeedback.sim import (
    CONTRACTION_LIMIT,
    LinearFeedback,
    SimConfig,
    SimState,
    Stepper,
    feedback_contraction,
    feedback_eval,
    fit_decay_rate,
    guarded_steps,
    initial_profile,
    linear_step,
    linear_w_inequality_check,
    nonlinear_step,
    prepare_initial,
    simulate_closed_loop,
    simulate_linear_closed_loop,
    simulate_open_loop,
    step_dt_limit,
)
from kdvfeedback.spectral import Grid
from kdvfeedback.transform import TransformOperator
from oracles import kdv_semidiscrete

L = 3.0


# ---------------------------------------------------------------------------
# manufactured solution for the linear scheme
# ---------------------------------------------------------------------------


def _mms_error(nx: int, t_final: float = 0.5) -> float:
    """Error of ``u = exp(-t) sin(2 pi x / L)`` with matching source and Neumann data."""
    grid = Grid(L, nx)
    x = grid.nodes
    k = 2 * math.pi / L
    dt = 0.25 * grid.h
    n = int(round(t_final / dt))
    dt = t_final / n
    cfg = SimConfig(grid, dt, t_final, theta=0.5)

    def source(t):
        return math.exp(-t) * (-np.sin(k * x) + (k - k**3) * np.cos(k * x))

    st_ = Stepper(grid, dt)
    state = SimState(0.0, np.sin(k * x))
    for s in range(n):
        t0, t1 = s * dt, (s + 1) * dt
        f = 0.5 * (source(t0) + source(t1))
        state = linear_step(state, cfg, forcing=f, neumann_value=math.exp(-t1) * k, stepper=st_)
    exact = math.exp(-t_final) * np.sin(k * x)
    return grid.norm(state.v - exact)


def test_mms_second_order():
    errs = [_mms_error(nx) for nx in (64, 128, 256)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9, (errs, orders)


def test_linear_step_zero_maps_to_zero():
    grid = Grid(L, 64)
    cfg = SimConfig(grid, 1e-3, 1.0)
    out = linear_step(SimState(0.0, np.zeros(grid.size)), cfg)
    assert not np.any(out.v)
    assert out.t == 1e-3


# ---------------------------------------------------------------------------
# uncontrolled runs
# ---------------------------------------------------------------------------


def test_open_loop_energy_nonincreasing():
    grid = Grid(L, 256)
    cfg = SimConfig(grid, 1e-3, 2.0, startup_steps=0)
    tr = simulate_open_loop(initial_profile("sine", grid, 1.0), cfg)
    assert np.all(np.diff(tr.norm_v) <= 1e-14 * tr.norm_v[0])
    assert tr.norm_v[-1] < tr.norm_v[0]


def test_open_loop_critical_length_conserves():
    Lc = 2 * math.pi
    grid = Grid(Lc, 256)
    cfg = SimConfig(grid, 1e-3, 2.0)
    tr = simulate_open_loop(initial_profile("stationary", grid, 0.01), cfg)
    assert abs(tr.norm_v[-1] / tr.norm_v[0] - 1) < 1e-3


def test_matches_rk_oracle():
    nx, T = 32, 0.5
    grid = Grid(L, nx)
    v0 = 0.5 * np.sin(np.pi * grid.nodes / L) ** 2
    rhs, lift = kdv_semidiscrete(nx, L, nonlinear=True)
    sol = solve_ivp(rhs, (0, T), v0[1 : nx - 1], method="DOP853", rtol=1e-12, atol=1e-14)
    ref = lift(sol.y[:, -1])
    cfg = SimConfig(grid, 2e-5, T, startup_steps=0, snapshot_stride=int(round(T / 2e-5)))
    tr = simulate_open_loop(v0, cfg, nonlinear=True)
    got = tr.snapshots[-1][1]
    assert tr.snapshots[-1][0] == pytest.approx(T)
    assert np.max(np.abs(got - ref)) < 1e-4 * np.max(np.abs(ref))


def test_zero_state_zero_trace(small):
    _, kern, op = small
    cfg = SimConfig(kern.grid, 1e-3, 0.05)
    tr = simulate_closed_loop(np.zeros(kern.grid.size), cfg, kern, op)
    assert not np.any(tr.norm_v) and not np.any(tr.norm_w) and not np.any(tr.control)
    assert np.all(tr.iters[1:] == 1)


def test_dirichlet_values_exact(small):
    _, kern, op = small
    cfg = SimConfig(kern.grid, 1e-3, 0.2, snapshot_stride=20)
    tr = simulate_closed_loop(initial_profile("sine", kern.grid, 0.1), cfg, kern, op)
    for _, v in tr.snapshots:
        assert v[0] == 0.0 and v[-1] == 0.0


def test_deterministic(small):
    _, kern, op = small
    cfg = SimConfig(kern.grid, 1e-3, 0.3, snapshot_stride=100)
    v0 = initial_profile("sine", kern.grid, 0.05)
    a = simulate_closed_loop(v0, cfg, kern, op)
    b = simulate_closed_loop(v0, cfg, kern, op)
    for f in ("t", "norm_v", "norm_w", "control", "iters", "contraction"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a.snapshots, b.snapshots))


# ---------------------------------------------------------------------------
# feedback
# ---------------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(1, 6), st.integers(1, 6))
def test_feedback_eval_linear_and_bounded(small, a, b, m, n):
    _, kern, _ = small
    g = kern.grid
    u = np.sin(m * np.pi * g.nodes / L)
    v = np.sin(n * np.pi * g.nodes / L) * g.nodes
    lhs = feedback_eval(kern.gain, a * u + b * v, g)
    rhs = a * feedback_eval(kern.gain, u, g) + b * feedback_eval(kern.gain, v, g)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(a) + abs(b))
    assert abs(feedback_eval(kern.gain, u, g)) <= g.norm(kern.gain) * g.norm(u) * (1 + 1e-12)


def test_feedback_eval_grid_mismatch(small):
    _, kern, _ = small
    with pytest.raises(GridMismatch):
        feedback_eval(kern.gain, np.zeros(5), kern.grid)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 4.0])
def test_guard_keeps_feedback_contractive(lam):
    _, kern = synthesize(L, lam, 10, 256)
    dt = min(1e-1, step_dt_limit(kern.gain, kern.grid))
    assert feedback_contraction(kern.grid, dt, 0.5, kern.gain) <= CONTRACTION_LIMIT
    assert feedback_contraction(kern.grid, dt, 1.0, kern.gain) <= CONTRACTION_LIMIT


def test_guarded_steps_shrinks_dt(small):
    _, kern, _ = small
    cfg = SimConfig(kern.grid, 10.0, 20.0, controller=LinearFeedback(np.asarray(kern.gain)))
    n, dt = guarded_steps(cfg)
    assert dt <= step_dt_limit(kern.gain, kern.grid) and n * dt == pytest.approx(20.0)
    assert guarded_steps(SimConfig(kern.grid, 0.3, 1.0)) == (4, 0.25)


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def closed_trace():
    basis, kern = synthesize(L, 1.0, 12, 128)
    op = TransformOperator(kern)
    cfg = SimConfig(kern.grid, 2e-3, 6.0, snapshot_stride=3000)
    tr = simulate_closed_loop(initial_profile("sine", kern.grid, 0.01), cfg, kern, op)
    return kern, op, tr


def test_closed_loop_decays(closed_trace):
    kern, _, tr = closed_trace
    rate_w = fit_decay_rate(tr, (2.0, 6.0), "w")
    rate_v = fit_decay_rate(tr, (2.0, 6.0), "v")
    assert rate_w >= 0.85 * kern.lam / 2
    assert rate_w >= rate_v - 0.1 * abs(rate_v)
    assert tr.norm_v[-1] < 0.1 * tr.norm_v[0]


def test_recorded_control_matches_state(closed_trace):
    kern, _, tr = closed_trace
    t, v = tr.snapshots[-1]
    assert t == tr.t[-1]
    assert tr.control[-1] == feedback_eval(kern.gain, v, kern.grid)


def test_picard_iterations_bounded(closed_trace):
    _, _, tr = closed_trace
    assert tr.iters[1:].max() <= 10
    assert tr.contraction.max() <= CONTRACTION_LIMIT


def test_linear_closed_loop_inequality(small):
    _, kern, op = small
    cfg = SimConfig(kern.grid, 1e-3, 3.0)
    tr = simulate_linear_closed_loop(initial_profile("sine", kern.grid, 1.0), cfg, kern, op)
    rep = linear_w_inequality_check(tr, kern.lam)
    assert rep.checked > 0 and rep.fraction <= 0.05


def test_picard_divergence_reports_time():
    grid = Grid(L, 64)
    cfg = SimConfig(grid, 0.5, 1.0, picard_max=3)
    with pytest.raises(PicardDiverged) as info:
        nonlinear_step(SimState(0.0, 50.0 * np.sin(np.pi * grid.nodes / L)), cfg)
    assert info.value.time == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# decay-rate fitting
# ---------------------------------------------------------------------------


class TestFit:
    t = np.linspace(0, 10, 1001)

    def test_pure_exponential(self):
        assert fit_decay_rate((self.t, np.exp(-self.t)), (2, 10)) == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        assert fit_decay_rate((self.t, np.full_like(self.t, 3.0)), (2, 10)) == pytest.approx(0.0, abs=1e-12)

    def test_perturbed(self):
        y = 3 * np.exp(-0.5 * self.t) * (1 + 0.01 * np.sin(self.t))
        assert fit_decay_rate((self.t, y), (2, 10)) == pytest.approx(0.5, abs=0.02)

    def test_floor_drops_noise(self):
        y = np.maximum(np.exp(-5 * self.t), 1e-16)
        assert fit_decay_rate((self.t, y), (0, 10), floor=1e-12) == pytest.approx(5.0, rel=1e-9)

    def test_degenerate(self):
        with pytest.raises(DegenerateWindow):
            fit_decay_rate((self.t, np.exp(-self.t)), (20, 30))
        with pytest.raises(DegenerateWindow):
            fit_decay_rate((self.t, np.zeros_like(self.t)), (2, 10))


# ---------------------------------------------------------------------------
# initial data and configuration
# ---------------------------------------------------------------------------


def test_prepare_initial_rejects_and_projects():
    grid = Grid(L, 64)
    bump = initial_profile("bump", grid, 1.0)
    with pytest.raises(NonconformingInitialData):
        prepare_initial(bump, grid)
    v = prepare_initial(bump, grid, project=True)
    assert v[0] == 0.0 and v[-1] == 0.0
    diff = bump - v
    assert np.allclose(np.diff(diff, 2), 0.0, atol=1e-14)  # a linear function was removed


def test_prepare_initial_keeps_conforming_data():
    grid = Grid(L, 64)
    v0 = initial_profile("sine", grid, 2.0)
    v = prepare_initial(v0, grid)
    assert np.array_equal(v[1:-1], v0[1:-1])


def test_unknown_profile():
    with pytest.raises(UsageError):
        initial_profile("square", Grid(L, 16), 1.0)


@pytest.mark.parametrize(
    "kw",
    [dict(dt=0.0), dict(t_final=-1.0), dict(theta=0.4), dict(theta=1.2), dict(picard_max=0), dict(picard_tol=0.0)],
)
def test_config_validation(kw):
    base = dict(grid=Grid(L, 32), dt=1e-3, t_final=1.0)
    base.update(kw)
    with pytest.raises(UsageError):
        SimConfig(**base)


def test_config_gain_length():
    with pytest.raises(GridMismatch):
        SimConfig(Grid(L, 32), 1e-3, 1.0, controller=LinearFeedback(np.zeros(5)))


def test_replace_keeps_validation():
    cfg = SimConfig(Grid(L, 32), 1e-3, 1.0)
    with pytest.raises(UsageError):
        dataclasses.replace(cfg, theta=0.0)
