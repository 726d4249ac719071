"""Implicit finite-difference simulation of the controlled KdV equation.

The state ``v(t, x)`` satisfies ``v_t + v_x + v_xxx + v v_x = 0`` on ``(0, L)``
with ``v(t, 0) = v(t, L) = 0`` and a Neumann control ``v_x(t, L) = f(t)``.
In closed loop ``f(t) = int g(y) v(t, y) dy``.

The discretization uses second-order differences on the uniform grid and a
theta scheme in time. Each time step is a banded linear solve. The convection
term and the feedback value are resolved by a within-step fixed-point
(Picard) iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from .errors import (
    DegenerateWindow,
    GridMismatch,
    NonconformingInitialData,
    PicardDiverged,
    SingularStepMatrix,
    UsageError,
)
from .kernel import KernelField, c_hat_estimate
from .spectral import Grid
from .transform import TransformOperator

GUARD_C = 0.5
CONTRACTION_LIMIT = 1.0 / math.sqrt(2.0)
NOISE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoControl:
    """Homogeneous Neumann condition ``v_x(L) = 0``."""

    kind = "none"


@dataclass(frozen=True)
class LinearFeedback:
    """Neumann value ``f = int g v dy`` applied implicitly."""

    gain: np.ndarray = field(repr=False)
    kind = "feedback"


@dataclass(frozen=True)
class FrozenControl:
    """Prescribed Neumann values, linearly interpolated in time."""

    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kind = "frozen"

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


Controller = NoControl | LinearFeedback | FrozenControl


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping parameters.

    Attributes
    ----------
    grid : Grid
    dt : float
        Requested step; reduced to the step-size guard if larger.
    t_final : float
    theta : float
        Implicitness in ``[1/2, 1]``.
    picard_tol : float
        Relative sup-norm tolerance between successive iterates.
    picard_max : int
        Iteration cap per step.
    controller : Controller
    nonlinear : bool
        Include the ``v v_x`` term.
    startup_steps : int
        Number of initial fully implicit (``theta = 1``) steps. They damp the
        grid-scale transients that incompatible initial data excite and that
        the trapezoidal rule does not dissipate.
    snapshot_stride : int
        Store the state every this many steps (0 disables snapshots).
    guard_c : float
        Constant in the step-size guard ``dt <= guard_c / (1 + ||g||^2)``.
    """

    grid: Grid
    dt: float
    t_final: float
    theta: float = 0.5
    picard_tol: float = 1e-12
    picard_max: int = 30
    controller: Controller = NoControl()
    nonlinear: bool = True
    startup_steps: int = 10
    snapshot_stride: int = 0
    guard_c: float = GUARD_C

    def __post_init__(self):
        if not (self.dt > 0 and self.t_final > 0):
            raise UsageError("dt and t_final must be positive")
        if not 0.5 <= self.theta <= 1.0:
            raise UsageError(f"theta must lie in [1/2, 1], got {self.theta}")
        if self.picard_max < 1 or not self.picard_tol > 0:
            raise UsageError("invalid Picard settings")
        if isinstance(self.controller, LinearFeedback) and self.controller.gain.shape != (self.grid.size,):
            raise GridMismatch("gain length does not match the grid")


@dataclass
class SimState:
    """Time and nodal values; the endpoint values are exactly zero."""

    t: float
    v: np.ndarray


@dataclass
class SimulationTrace:
    """Per-step record of a run.

    Row 0 is the initial state. ``iters`` and ``contraction`` are zero there.
    """

    t: np.ndarray
    norm_v: np.ndarray
    norm_w: np.ndarray
    control: np.ndarray
    iters: np.ndarray
    contraction: np.ndarray
    dt: float
    lam: float | None = None
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.t.size

    def energy_rate(self, which: str = "w") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Centered difference of ``||.||^2``.

        Returns
        -------
        t, E, dEdt : numpy.ndarray
            Interior samples (first and last dropped).
        """
        y = self.norm_w if which == "w" else self.norm_v
        E = y**2
        dE = (E[2:] - E[:-2]) / (self.t[2:] - self.t[:-2])
        return self.t[1:-1], E[1:-1], dE


# ---------------------------------------------------------------------------
# banded stepper
# ---------------------------------------------------------------------------


class Stepper:
    """Banded factorizations of the step matrix, cached per ``theta dt``."""

    def __init__(self, grid: Grid, dt: float):
        if grid.nx < 6:
            raise UsageError("need at least 6 intervals for the stencils")
        self.grid = grid
        self.dt = dt
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self.core = _backend.core

    def factors(self, theta: float):
        tdt = theta * self.dt
        if tdt not in self._cache:
            ab = _backend.python_core.step_matrix_band(self.grid.nx, self.grid.h, tdt)
            lu, piv, info = _backend.python_core.band_factor(ab)
            if info != 0:
                raise SingularStepMatrix(f"dgbtrf returned info={info}")
            self._cache[tdt] = (lu, piv)
        return self._cache[tdt]


def step_dt_limit(gain: np.ndarray | None, grid: Grid, guard_c: float = GUARD_C) -> float:
    """Step-size guard ``guard_c / (1 + ||g||^2)`` (infinite without feedback)."""
    if gain is None:
        return math.inf
    return guard_c / (1.0 + grid.norm(gain) ** 2)


def guarded_steps(config: SimConfig) -> tuple[int, float]:
    """Number of steps and step length after applying the guard."""
    gain = config.controller.gain if isinstance(config.controller, LinearFeedback) else None
    dt = min(config.dt, step_dt_limit(gain, config.grid, config.guard_c))
    n = max(1, int(math.ceil(config.t_final / dt - 1e-9)))
    return n, config.t_final / n


def feedback_contraction(grid: Grid, dt: float, theta: float, gain: np.ndarray) -> float:
    """Exact contraction factor of the feedback part of the Picard map.

    With the convection term frozen, the map from iterate to iterate is the
    rank-one operator ``u -> A^{-1} e_{n-1} (g w . u)``, and its factor is
    ``|g w . A^{-1} e_{n-1}|``.
    """
    st = Stepper(grid, dt)
    lu, piv = st.factors(theta)
    e = np.zeros(grid.size)
    e[grid.nx - 1] = 1.0
    z = _backend.python_core.band_solve(lu, piv, e)
    return abs(float((gain * grid.weights) @ z))


def _contraction(gaps: np.ndarray, iters: int, scale: float) -> float:
    noise = 64.0 * np.finfo(float).eps * scale
    r = 0.0
    for m in range(iters - 1):
        if gaps[m] > noise:
            r = max(r, gaps[m + 1] / gaps[m])
    return r


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------


def _check_state(state: SimState, grid: Grid) -> np.ndarray:
    v = np.asarray(state.v, dtype=float)
    if v.shape != (grid.size,):
        raise GridMismatch(f"state has {v.shape} samples, grid has {grid.size}")
    return v


def linear_step(
    state: SimState,
    config: SimConfig,
    forcing: np.ndarray | None = None,
    neumann_value: float = 0.0,
    theta: float | None = None,
    stepper: Stepper | None = None,
) -> SimState:
    """One theta step of ``u_t + u_xxx + u_x = forcing`` with ``u_x(L) = neumann_value``.

    ``forcing`` is the step-averaged source (for a time-dependent source
    pass ``theta h(t+dt) + (1-theta) h(t)``). Values on rows ``0``, ``n-1``
    and ``n`` are ignored.
    """
    grid = config.grid
    u = _check_state(state, grid)
    theta = config.theta if theta is None else theta
    stepper = stepper or Stepper(grid, config.dt)
    lu, piv = stepper.factors(theta)
    core = stepper.core
    b = core.explicit_rhs(np.ascontiguousarray(u), grid.h, (1.0 - theta) * config.dt, False)
    if forcing is not None:
        f = np.asarray(forcing, dtype=float)
        if f.shape != u.shape:
            raise GridMismatch("forcing length does not match the grid")
        b[1 : grid.nx - 1] += config.dt * f[1 : grid.nx - 1]
    b[grid.nx - 1] = neumann_value
    new = core.band_solve(lu, piv, b)
    new[0] = 0.0
    new[-1] = 0.0
    return SimState(state.t + config.dt, new)


def nonlinear_step(
    state: SimState,
    config: SimConfig,
    gain: np.ndarray | None = None,
    theta: float | None = None,
    stepper: Stepper | None = None,
    neumann_value: float = 0.0,
    nonlinear: bool | None = None,
) -> tuple[SimState, int]:
    """One implicit step with convection and implicit feedback.

    Returns the new state and the number of Picard iterations. Use
    :func:`_picard` directly to also get the contraction factor.

    Raises
    ------
    PicardDiverged
        If the gap grows three times in a row or the cap is reached.
    """
    new, iters, _ = _picard(state, config, gain, theta, stepper, neumann_value, nonlinear)
    return new, iters


def _picard(state, config, gain, theta, stepper, neumann_value, nonlinear):
    grid = config.grid
    u = np.ascontiguousarray(_check_state(state, grid))
    theta = config.theta if theta is None else theta
    nonlinear = config.nonlinear if nonlinear is None else nonlinear
    stepper = stepper or Stepper(grid, config.dt)
    lu, piv = stepper.factors(theta)
    core = stepper.core
    gw = np.zeros(grid.size) if gain is None else np.ascontiguousarray(gain * grid.weights)
    rhs = core.explicit_rhs(u, grid.h, (1.0 - theta) * config.dt, nonlinear)
    gaps = np.zeros(config.picard_max)
    new, iters, status = core.picard_step(
        lu, piv, rhs, u, gw, float(neumann_value), theta * config.dt, grid.h,
        config.picard_tol, config.picard_max, bool(nonlinear), gaps,
    )
    t_new = state.t + config.dt
    if status != 0 or not np.all(np.isfinite(new)):
        why = "gap grew three consecutive times" if status == 2 else f"no convergence in {iters} iterations"
        raise PicardDiverged(f"fixed-point iteration failed at t={t_new:.6g}: {why}", time=t_new)
    new[0] = 0.0
    new[-1] = 0.0
    rho = _contraction(gaps, iters, float(np.max(np.abs(new))))
    return SimState(t_new, new), iters, rho


def feedback_eval(gain: np.ndarray, v: np.ndarray, grid: Grid) -> float:
    """Control value ``F(v) = int g v dy`` by quadrature."""
    if np.shape(gain) != (grid.size,) or np.shape(v) != (grid.size,):
        raise GridMismatch("gain and state must be sampled on the grid")
    return float(np.sum(grid.weights * gain * v))


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def prepare_initial(v0: np.ndarray, grid: Grid, project: bool = False, tol: float = 1e-12) -> np.ndarray:
    """Validate or project initial data so both endpoint values are exactly zero.

    Data whose endpoint values exceed ``tol (1 + max|v0|)`` are rejected unless
    ``project`` is set. Projection subtracts the linear interpolant of the
    endpoint values.
    """
    v = np.array(v0, dtype=float)
    if v.shape != (grid.size,):
        raise GridMismatch("initial data length does not match the grid")
    bound = tol * (1.0 + float(np.max(np.abs(v))))
    if max(abs(v[0]), abs(v[-1])) > bound:
        if not project:
            raise NonconformingInitialData(
                f"v0(0)={v[0]:.3e}, v0(L)={v[-1]:.3e}; pass project=True to subtract the boundary interpolant"
            )
        x = grid.nodes / grid.L
        v = v - (v[0] * (1.0 - x) + v[-1] * x)
    v[0] = 0.0
    v[-1] = 0.0
    return v


def initial_profile(kind: str, grid: Grid, amplitude: float) -> np.ndarray:
    """Named initial profiles.

    ``sine``: ``a sin(pi x / L)``; ``stationary``: ``a (1 - cos(2 pi x / L))``
    (a steady state of the uncontrolled linear problem when ``L = 2 pi``);
    ``bump``: a Gaussian that does not vanish at the ends (needs projection).
    """
    x = grid.nodes
    L = grid.L
    if kind == "sine":
        return amplitude * np.sin(np.pi * x / L)
    if kind == "stationary":
        return amplitude * (1.0 - np.cos(2.0 * np.pi * x / L))
    if kind == "bump":
        return amplitude * np.exp(-((x - 0.5 * L) / (0.25 * L)) ** 2)
    raise UsageError(f"unknown profile {kind!r}")


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def _run(
    v0: np.ndarray,
    config: SimConfig,
    transform: TransformOperator | None,
    nonlinear: bool,
    lam: float | None,
    project: bool,
) -> SimulationTrace:
    grid = config.grid
    v = prepare_initial(v0, grid, project)
    nsteps, dt = guarded_steps(config)
    if dt != config.dt:
        config = _replace_dt(config, dt)
    stepper = Stepper(grid, dt)
    ctrl = config.controller
    gain = ctrl.gain if isinstance(ctrl, LinearFeedback) else None
    w8 = grid.weights
    Kd = transform.matrix if transform is not None else None
    if transform is not None:
        if transform.size != grid.size:
            raise GridMismatch("transform and simulation grids differ")
        transform.check_fresh()

    def wnorm(u):
        if Kd is None:
            return math.sqrt(float(w8 @ (u * u)))
        w = u - Kd @ u
        return math.sqrt(float(w8 @ (w * w)))

    T = np.empty(nsteps + 1)
    NV = np.empty(nsteps + 1)
    NW = np.empty(nsteps + 1)
    F = np.empty(nsteps + 1)
    IT = np.zeros(nsteps + 1, dtype=int)
    RHO = np.zeros(nsteps + 1)
    T[0] = 0.0
    NV[0] = math.sqrt(float(w8 @ (v * v)))
    NW[0] = wnorm(v)
    F[0] = feedback_eval(gain, v, grid) if gain is not None else (ctrl(0.0) if isinstance(ctrl, FrozenControl) else 0.0)
    snaps: list[tuple[float, np.ndarray]] = []
    stride = config.snapshot_stride
    if stride:
        snaps.append((0.0, v.copy()))
    state = SimState(0.0, v)
    for s in range(nsteps):
        theta = 1.0 if s < config.startup_steps else config.theta
        t_new = (s + 1) * dt
        fixed = ctrl(t_new) if isinstance(ctrl, FrozenControl) else 0.0
        state, iters, rho = _picard(state, config, gain, theta, stepper, fixed, nonlinear)
        state.t = t_new
        u = state.v
        T[s + 1] = t_new
        NV[s + 1] = math.sqrt(float(w8 @ (u * u)))
        NW[s + 1] = wnorm(u)
        F[s + 1] = feedback_eval(gain, u, grid) if gain is not None else fixed
        IT[s + 1] = iters
        RHO[s + 1] = rho
        if stride and (s + 1) % stride == 0:
            snaps.append((t_new, u.copy()))
    return SimulationTrace(T, NV, NW, F, IT, RHO, dt=dt, lam=lam, snapshots=snaps)


def _replace_dt(config: SimConfig, dt: float) -> SimConfig:
    from dataclasses import replace

    return replace(config, dt=dt)


def simulate_closed_loop(
    v0: np.ndarray,
    config: SimConfig,
    kernel: KernelField | None = None,
    transform: TransformOperator | None = None,
    project: bool = False,
) -> SimulationTrace:
    """Nonlinear run; the feedback gain comes from ``kernel`` unless the config has a controller.

    Raises
    ------
    PicardDiverged
        With the failure time attached.
    """
    config = _with_kernel_controller(config, kernel)
    return _run(v0, config, transform, True, kernel.lam if kernel else None, project)


def simulate_linear_closed_loop(
    v0: np.ndarray,
    config: SimConfig,
    kernel: KernelField | None = None,
    transform: TransformOperator | None = None,
    project: bool = False,
) -> SimulationTrace:
    """Same pipeline without the convection term."""
    config = _with_kernel_controller(config, kernel)
    return _run(v0, config, transform, False, kernel.lam if kernel else None, project)


def simulate_open_loop(
    v0: np.ndarray, config: SimConfig, nonlinear: bool = False, project: bool = False
) -> SimulationTrace:
    """Uncontrolled run, ``v_x(L) = 0`` (or the config's frozen control)."""
    return _run(v0, config, None, nonlinear, None, project)


def _with_kernel_controller(config: SimConfig, kernel: KernelField | None) -> SimConfig:
    from dataclasses import replace

    if kernel is None or not isinstance(config.controller, NoControl):
        return config
    if kernel.grid != config.grid:
        raise GridMismatch("kernel and simulation grids differ")
    return replace(config, controller=LinearFeedback(np.asarray(kernel.gain)))


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------


def _series(trace, which: str):
    if isinstance(trace, SimulationTrace):
        return trace.t, (trace.norm_w if which == "w" else trace.norm_v)
    t, y = trace
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def fit_decay_rate(
    trace: SimulationTrace | tuple[Sequence[float], Sequence[float]],
    window: tuple[float, float],
    which: str = "w",
    floor: float | None = None,
) -> float:
    """Least-squares decay rate of ``ln ||.||`` on a time window.

    Parameters
    ----------
    trace : SimulationTrace or (t, y)
    window : (float, float)
        Inclusive time interval.
    which : {"w", "v"}
        Which norm of a trace to fit.
    floor : float, optional
        If given, samples below ``floor * y[0]`` are dropped. Such samples
        carry only rounding noise.

    Returns
    -------
    float
        ``-slope``, positive for decay.

    Raises
    ------
    DegenerateWindow
        Fewer than five usable samples, or a zero norm inside the window.
    """
    t, y = _series(trace, which)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if floor is not None:
        sel &= y > floor * y[0]
    ts, ys = t[sel], y[sel]
    if ts.size < 5:
        raise DegenerateWindow(f"only {ts.size} samples in window {window}")
    if np.any(ys <= 0):
        raise DegenerateWindow("zero norm inside the fit window")
    slope = np.polyfit(ts, np.log(ys), 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of a differential-inequality check on a trace."""

    checked: int
    violations: int
    max_excess: float
    c_hat: float

    @property
    def fraction(self) -> float:
        return self.violations / self.checked if self.checked else 0.0

    def passed(self, limit: float = 0.05) -> bool:
        return self.fraction < limit


def energy_inequality_check(
    trace: SimulationTrace,
    rate: float,
    c_hat: float = 0.0,
    skip: int = 10,
    floor: float = NOISE_FLOOR,
) -> InequalityReport:
    """Check ``d/dt ||w||^2 <= -rate ||w||^2 + c_hat ||w||^3`` sample by sample.

    The derivative is the centered difference of the energy series. The first
    ``skip`` steps are excluded, and so are samples whose norm is below
    ``floor * ||w(0)||``. The reported excess is relative to ``||w||^2``.
    """
    if len(trace) < 3:
        return InequalityReport(0, 0, 0.0, c_hat)
    t, E, dE = trace.energy_rate("w")
    idx = np.arange(1, len(trace) - 1)
    E0 = trace.norm_w[0] ** 2
    mask = idx > skip
    if E0 > 0:
        mask &= E > (floor**2) * E0
    else:
        mask &= False
    bound = -rate * E + c_hat * E**1.5
    ex = (dE - bound)[mask] / E[mask]
    nviol = int(np.count_nonzero(ex > 0))
    return InequalityReport(int(mask.sum()), nviol, float(ex.max()) if ex.size else 0.0, c_hat)


def linear_w_inequality_check(trace: SimulationTrace, lam: float, **kw) -> InequalityReport:
    """``d/dt ||w||^2 <= -lam ||w||^2`` along a linear closed-loop trace."""
    return energy_inequality_check(trace, lam, 0.0, **kw)


def nonlinear_w_inequality_check(
    trace: SimulationTrace,
    kernel: KernelField,
    transform: TransformOperator | None = None,
    c_hat: float | None = None,
    **kw,
) -> InequalityReport:
    """``d/dt ||w||^2 <= -2 lam ||w||^2 + C_hat ||w||^3`` with ``C_hat`` from the kernel."""
    if c_hat is None:
        op = transform if transform is not None else TransformOperator(kernel)
        c_hat = c_hat_estimate(kernel, op.inverse_norm)
    return energy_inequality_check(trace, 2.0 * kernel.lam, c_hat, **kw)
