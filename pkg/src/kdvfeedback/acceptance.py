"""The ten acceptance criteria as reusable checks.

Each ``criterion_<n>`` takes a :class:`Suite` (which caches the expensive
objects shared between criteria) and returns a :class:`CriterionResult`.
``kdvfeedback verify`` and ``tests/test_acceptance.py`` both run these
functions, so the command-line report and the test suite cannot drift apart.

Criteria that depend on the mode count fall back to a reduced form when the
configured ``N`` is small. Sub-checks that need several modes (envelope
fits) report ``SKIP`` instead of passing vacuously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable

import numpy as np
import scipy.linalg as sla

from . import _backend
from .config import RunConfig
from .errors import KdVFeedbackError
from .kernel import (
    canned_test_functions,
    coupling_matrix,
    realness_defect,
    synthesize,
    transposition_residual,
)
from .sim import (
    CONTRACTION_LIMIT,
    NOISE_FLOOR,
    SimConfig,
    feedback_contraction,
    fit_decay_rate,
    initial_profile,
    linear_w_inequality_check,
    nonlinear_w_inequality_check,
    simulate_closed_loop,
    simulate_linear_closed_loop,
    simulate_open_loop,
)
from .spectral import (
    Grid,
    build_basis,
    build_mode,
    eigen_residual,
    fd_eigen_oracle,
    locate_taus,
    mu_of_tau,
    tau_envelope,
)
from .transform import TransformOperator, spectral_radius_estimate

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"

# fixed refinement ladders used by the criteria
ORACLE_NX = 4096
GRAM_N, GRAM_NX = 10, 2048
TRANSPOSITION_LADDER = ((10, 256), (20, 512), (40, 1024))
ENVELOPE_PAIR = (20, 40)
MIN_ENVELOPE_N = 4
COEFF_NX = 1024
RESIDUAL_MODE = 5


@dataclass
class CriterionResult:
    number: int
    title: str
    status: str
    summary: str
    details: dict[str, Any] = field(default_factory=dict)
    checks: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    def line(self) -> str:
        return f"criterion {self.number:2d} [{self.status}] {self.title}: {self.summary}"

    def as_dict(self) -> dict[str, Any]:
        return {
            "number": self.number,
            "title": self.title,
            "status": self.status,
            "summary": self.summary,
            "checks": dict(self.checks),
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _status(checks: dict[str, str]) -> str:
    vals = set(checks.values())
    if FAIL in vals:
        return FAIL
    if vals == {SKIP}:
        return SKIP
    return PASS


def _flag(ok: bool) -> str:
    return PASS if ok else FAIL


class Suite:
    """Shared state for one acceptance run.

    Parameters
    ----------
    config : RunConfig
        Reference parameters. The defaults reproduce the documented
        acceptance setting (``L = 3``, ``lambda = 1``, ``N = 30``,
        ``nx = 512``, ``dt = 1e-3``, ``t_final = 10``, amplitude ``0.01``).
    """

    def __init__(self, config: RunConfig | None = None):
        self.config = config or RunConfig()

    # -- kernels ----------------------------------------------------------

    def kernel(self, lam: float, N: int | None = None, nx: int | None = None):
        key = (lam, N or self.config.modes, nx or self.config.nx)
        cache = self.__dict__.setdefault("_kernels", {})
        if key not in cache:
            basis, kern = synthesize(self.config.length, key[0], key[1], key[2])
            cache[key] = (basis, kern, TransformOperator(kern))
        return cache[key]

    @property
    def envelope_pair(self) -> tuple[int, int] | None:
        N = self.config.modes
        if N >= ENVELOPE_PAIR[0]:
            return ENVELOPE_PAIR
        if N >= MIN_ENVELOPE_N:
            return (N, 2 * N)
        return None

    # -- simulations ------------------------------------------------------

    def sim_config(self, grid: Grid, dt: float | None = None, t_final: float | None = None, nonlinear=True):
        c = self.config
        return SimConfig(
            grid=grid,
            dt=dt or c.dt,
            t_final=t_final or c.t_final,
            theta=c.theta,
            picard_tol=c.picard_tol,
            picard_max=c.picard_max,
            nonlinear=nonlinear,
        )

    def v0(self, grid: Grid) -> np.ndarray:
        return initial_profile("sine", grid, self.config.amplitude)

    def closed_loop(self, lam: float):
        cache = self.__dict__.setdefault("_runs", {})
        if lam not in cache:
            _, kern, op = self.kernel(lam)
            cfg = self.sim_config(kern.grid)
            cache[lam] = simulate_closed_loop(self.v0(kern.grid), cfg, kern, op)
        return cache[lam]

    @cached_property
    def lam2(self) -> float:
        return 2.0 * self.config.lam


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def criterion_1(s: Suite) -> CriterionResult:
    L = s.config.length
    k = min(10, s.config.modes)
    mu = mu_of_tau(locate_taus(L, k))
    oracle = fd_eigen_oracle(L, ORACLE_NX, k)
    rel = float(np.max(np.abs(mu - oracle) / np.abs(oracle)))
    checks = {"oracle_rel_1e-4": _flag(rel <= 1e-4)}
    det: dict[str, Any] = {"modes_compared": k, "max_rel_error": rel}
    pair = s.envelope_pair
    if pair is None:
        checks["envelope_nongrowing"] = SKIP
        env_txt = "envelope SKIP (too few modes)"
    else:
        e1 = tau_envelope(locate_taus(L, pair[0]), L)
        e2 = tau_envelope(locate_taus(L, pair[1]), L)
        m1, m2 = float(e1.max()), float(e2.max())
        ok = bool(np.all(np.isfinite(e2))) and m2 <= m1 * (1.0 + 1e-12)
        checks["envelope_nongrowing"] = _flag(ok)
        det.update(envelope_N=list(pair), envelope_max=[m1, m2], envelope_tail=[float(e1[-1]), float(e2[-1])])
        env_txt = f"envelope max {m1:.3e} (N={pair[0]}) -> {m2:.3e} (N={pair[1]})"
    return CriterionResult(
        1, "spectrum correctness", _status(checks),
        f"max rel err vs FD oracle {rel:.2e} over {k} modes; {env_txt}", det, checks,
    )


def criterion_2(s: Suite) -> CriterionResult:
    L = s.config.length
    N = min(GRAM_N, s.config.modes)
    grid = Grid(L, GRAM_NX)
    basis = build_basis(L, s.config.lam, N, grid)
    gerr = basis.gram_error()
    bc = max(abs(m.dphi0 - m.dphiL) / (1.0 + abs(m.dphi0)) for m in basis.modes)
    # residual order under grid doubling on a mid-spectrum mode (mode 1 is
    # so smooth that its residual reaches rounding level on fine grids)
    j = RESIDUAL_MODE
    tau = float(locate_taus(L, j)[-1])
    ladder = (128, 256, 512, 1024)
    res = [eigen_residual(build_mode(j, tau, Grid(L, n)), Grid(L, n)) for n in ladder]
    orders = [math.log2(res[i] / res[i + 1]) for i in range(len(res) - 1)]
    checks = {
        "gram_1e-6": _flag(gerr <= 1e-6),
        "bc_1e-8": _flag(bc <= 1e-8),
        "residual_order_4": _flag(min(orders) >= 3.5),
    }
    det = {"N": N, "nx": GRAM_NX, "gram_error": gerr, "bc_rel_max": bc, "residual_mode": j,
           "residual_nx": list(ladder), "residuals": res, "observed_orders": orders}
    return CriterionResult(
        2, "basis quality", _status(checks),
        f"Gram err {gerr:.2e}, bc rel {bc:.2e}, residual orders {', '.join(f'{o:.2f}' for o in orders)}",
        det, checks,
    )


def _coefficient_envelope(L: float, lam: float, N: int) -> tuple[float, np.ndarray, np.ndarray]:
    basis = build_basis(L, lam, N, Grid(L, COEFF_NX))
    M = coupling_matrix(basis, lam)
    c = sla.solve(M, np.ones(2 * N, dtype=complex))
    j = np.arange(1, N + 1)
    seq = j**2 * np.abs(c[N:] - 1.0) / np.log(2.0 + j)
    return float(seq.max()), seq, c


def criterion_3(s: Suite) -> CriterionResult:
    L, lam, N = s.config.length, s.config.lam, s.config.modes
    basis = build_basis(L, lam, N, Grid(L, COEFF_NX))
    M = coupling_matrix(basis, lam)
    herm = float(np.max(np.abs(M - M.conj().T)))
    c = sla.solve(M, np.ones(2 * N, dtype=complex))
    pair = float(np.max(np.abs(c[::-1] - np.conj(c))))
    roundoff = 1e3 * np.finfo(float).eps * float(np.linalg.cond(M)) * float(np.max(np.abs(c)))
    checks = {"hermitian": _flag(herm == 0.0), "pairing_roundoff": _flag(pair <= roundoff)}
    det: dict[str, Any] = {"N": N, "hermitian_defect": herm, "pairing_defect": pair, "roundoff_bound": roundoff}
    ep = s.envelope_pair
    if ep is None:
        checks["envelope_doubling"] = SKIP
        txt = "envelope SKIP (too few modes)"
    else:
        m1, seq1, _ = _coefficient_envelope(L, lam, ep[0])
        m2, seq2, _ = _coefficient_envelope(L, lam, ep[1])
        checks["envelope_doubling"] = _flag(m2 <= 2.0 * m1)
        det.update(envelope_N=list(ep), envelope_max=[m1, m2])
        txt = f"j^2|c_j-1|/ln(2+j) max {m1:.3f} -> {m2:.3f}"
    return CriterionResult(
        3, "coefficient system", _status(checks),
        f"Hermitian defect {herm:.1e}, pairing {pair:.1e} (bound {roundoff:.1e}); {txt}", det, checks,
    )


def criterion_4(s: Suite) -> CriterionResult:
    L, lam = s.config.length, s.config.lam
    basis, kern, _ = s.kernel(lam)
    imag = realness_defect(basis, lam)
    edges = max(
        float(np.max(np.abs(kern.k[0]))), float(np.max(np.abs(kern.k[-1]))),
        float(np.max(np.abs(kern.k[:, 0]))), float(np.max(np.abs(kern.k[:, -1]))),
    )
    ky = max(kern.ky_edge_ratio())
    rhos = canned_test_functions(L)
    table = []
    for N, nx in TRANSPOSITION_LADDER:
        _, kk = synthesize(L, lam, N, nx)
        table.append([transposition_residual(kk, r) for r in rhos])
    table_a = np.array(table)
    mono = bool(np.all(np.diff(table_a, axis=0) < 0))
    checks = {
        "realness_1e-9": _flag(imag <= 1e-9),
        "edges_exact_zero": _flag(edges == 0.0),
        "ky_edges_1e-3": _flag(ky < 1e-3),
        "transposition_monotone": _flag(mono),
    }
    det = {"N": kern.N, "nx": kern.nx, "imag_over_real": imag, "stored_max_imag": kern.max_imag,
           "edge_max_abs": edges, "ky_edge_ratio": ky, "ladder": [list(p) for p in TRANSPOSITION_LADDER],
           "transposition_residuals": table_a}
    cols = "; ".join(" > ".join(f"{v:.1e}" for v in table_a[:, i]) for i in range(table_a.shape[1]))
    return CriterionResult(
        4, "kernel validity", _status(checks),
        f"Im/Re {imag:.1e}, edges {edges:.0e}, k_y edge ratio {ky:.1e}, transposition {cols}", det, checks,
    )


def criterion_5(s: Suite) -> CriterionResult:
    lam, nx = s.config.lam, s.config.nx
    _, _, op1 = s.kernel(lam)
    _, _, op2 = s.kernel(lam, nx=2 * nx)
    r1, r2 = spectral_radius_estimate(op1), spectral_radius_estimate(op2)
    c1, c2 = op1.cond, op2.cond
    checks = {
        "radius_below_1": _flag(r1 < 1.0 and r2 < 1.0),
        "cond_below_1e6": _flag(c1 < 1e6 and c2 < 1e6),
        "radius_stable_10pct": _flag(r2 <= 1.1 * r1),
        "cond_stable_10pct": _flag(abs(c2 / c1 - 1.0) <= 0.1),
    }
    det = {"nx": [nx, 2 * nx], "spectral_radius": [r1, r2], "cond": [c1, c2],
           "inverse_norm": [op1.inverse_norm, op2.inverse_norm]}
    return CriterionResult(
        5, "transform invertibility", _status(checks),
        f"r(K_d) {r1:.3e} -> {r2:.3e}, cond {c1:.4f} -> {c2:.4f} (nx {nx} -> {2 * nx})", det, checks,
    )


LINEAR_T_FINAL = 5.0


def criterion_6(s: Suite) -> CriterionResult:
    lam = s.config.lam
    _, kern, op = s.kernel(lam)
    t_final = min(LINEAR_T_FINAL, s.config.t_final)
    reps = []
    for dt in (s.config.dt, 0.5 * s.config.dt):
        cfg = s.sim_config(kern.grid, dt=dt, t_final=t_final, nonlinear=False)
        tr = simulate_linear_closed_loop(s.v0(kern.grid), cfg, kern, op)
        reps.append(linear_w_inequality_check(tr, lam))
    slack = [max(0.0, r.max_excess) for r in reps]
    checks = {
        "holds_95pct": _flag(reps[0].fraction <= 0.05),
        "tightens_dt_half": _flag(reps[1].fraction <= reps[0].fraction and slack[1] <= slack[0]),
    }
    det = {"t_final": t_final, "dt": [s.config.dt, 0.5 * s.config.dt],
           "violation_fraction": [r.fraction for r in reps], "checked": [r.checked for r in reps],
           "max_relative_excess": [r.max_excess for r in reps], "slack": slack}
    return CriterionResult(
        6, "linear closed loop inequality", _status(checks),
        f"violations {reps[0].fraction:.2%} -> {reps[1].fraction:.2%} under dt halving, "
        f"max (dE/dt + lam E)/E {reps[0].max_excess:.3f} -> {reps[1].max_excess:.3f}", det, checks,
    )


FIT_WINDOW = (2.0, 10.0)


def criterion_7(s: Suite) -> CriterionResult:
    checks = {}
    det: dict[str, Any] = {}
    parts = []
    rates = {}
    for lam in (s.config.lam, s.lam2):
        tr = s.closed_loop(lam)
        _, _, op = s.kernel(lam)
        window = (FIT_WINDOW[0], min(FIT_WINDOW[1], s.config.t_final))
        rate = fit_decay_rate(tr, window, "w", floor=NOISE_FLOOR)
        target = 0.85 * lam / 2.0
        C = op.norm_product
        env = C * np.exp(-target * tr.t) * tr.norm_v[0]
        ok_env = bool(np.all(tr.norm_v <= env * (1.0 + 1e-12)))
        checks[f"rate_lambda_{lam:g}"] = _flag(rate >= target)
        checks[f"v_envelope_lambda_{lam:g}"] = _flag(ok_env)
        rates[lam] = rate
        det[f"lambda_{lam:g}"] = {"rate_w": rate, "target": target, "C": C,
                                  "rate_v": fit_decay_rate(tr, window, "v", floor=NOISE_FLOOR),
                                  "max_v_over_envelope": float(np.max(tr.norm_v / env))}
        parts.append(f"lam={lam:g}: rate {rate:.3f} >= {target:.3f}")
    det["rate_ratio"] = rates[s.lam2] / rates[s.config.lam]
    return CriterionResult(
        7, "nonlinear closed loop decay", _status(checks),
        "; ".join(parts) + f"; ||v|| under C e^(-0.85 lam t/2) envelope; ratio {det['rate_ratio']:.2f}",
        det, checks,
    )


def criterion_8(s: Suite) -> CriterionResult:
    lam = s.config.lam
    _, kern, op = s.kernel(lam)
    tr = s.closed_loop(lam)
    rep = nonlinear_w_inequality_check(tr, kern, op)
    checks = {"violations_below_5pct": _flag(rep.passed(0.05))}
    det = {"c_hat": rep.c_hat, "checked": rep.checked, "violations": rep.violations,
           "fraction": rep.fraction, "max_relative_excess": rep.max_excess}
    return CriterionResult(
        8, "nonlinear energy inequality", _status(checks),
        f"violations {rep.violations}/{rep.checked} ({rep.fraction:.2%}), C_hat {rep.c_hat:.3f}", det, checks,
    )


CRITICAL_L = 2.0 * math.pi


def criterion_9(s: Suite) -> CriterionResult:
    grid = Grid(CRITICAL_L, s.config.nx)
    cfg = s.sim_config(grid, t_final=5.0, nonlinear=False)
    v0 = initial_profile("stationary", grid, s.config.amplitude)
    tr = simulate_open_loop(v0, cfg)
    E = tr.norm_v**2
    drift = float(np.max(np.abs(E / E[0] - 1.0)))
    cl = s.closed_loop(s.config.lam)
    Ecl = cl.norm_v**2
    i10 = int(np.searchsorted(cl.t, min(10.0, s.config.t_final) - 1e-12))
    reduction = float(1.0 - Ecl[i10] / Ecl[0])
    checks = {"open_loop_drift_5pct": _flag(drift < 0.05), "closed_loop_reduction_80pct": _flag(reduction > 0.8)}
    det = {"open_loop_energy_drift": drift, "closed_loop_time": float(cl.t[i10]),
           "closed_loop_energy_reduction": reduction}
    return CriterionResult(
        9, "critical length contrast", _status(checks),
        f"open loop L=2pi energy drift {drift:.2e}; closed loop energy reduction {reduction:.6f} "
        f"by t={cl.t[i10]:g}", det, checks,
    )


def criterion_10(s: Suite) -> CriterionResult:
    lam = s.config.lam
    _, kern, _ = s.kernel(lam)
    tr = s.closed_loop(lam)
    rho = float(tr.contraction.max())
    iters = int(tr.iters.max())
    exact = feedback_contraction(kern.grid, tr.dt, s.config.theta, np.asarray(kern.gain))
    checks = {"contraction_le_1/sqrt2": _flag(rho <= CONTRACTION_LIMIT and exact <= CONTRACTION_LIMIT),
              "iters_le_10": _flag(iters <= 10)}
    det = {"dt": tr.dt, "observed_contraction_max": rho, "feedback_contraction_exact": exact,
           "max_iters": iters, "mean_iters": float(tr.iters[1:].mean())}
    return CriterionResult(
        10, "fixed-point contraction", _status(checks),
        f"observed contraction <= {rho:.3f}, feedback factor {exact:.2e}, max iters {iters} at dt {tr.dt:g}",
        det, checks,
    )


CRITERIA: dict[int, Callable[[Suite], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}

TITLES = {
    1: "spectrum correctness", 2: "basis quality", 3: "coefficient system", 4: "kernel validity",
    5: "transform invertibility", 6: "linear closed loop inequality", 7: "nonlinear closed loop decay",
    8: "nonlinear energy inequality", 9: "critical length contrast", 10: "fixed-point contraction",
}


def run_criterion(n: int, suite: Suite) -> CriterionResult:
    """Run one criterion; library errors become a ``FAIL`` with the message."""
    try:
        return CRITERIA[n](suite)
    except KdVFeedbackError as exc:
        return CriterionResult(n, TITLES[n], FAIL, f"{type(exc).__name__}: {exc}")


def run_all(config: RunConfig | None = None, numbers=None) -> list[CriterionResult]:
    suite = Suite(config)
    return [run_criterion(n, suite) for n in (numbers or sorted(CRITERIA))]


def report(results: list[CriterionResult], config: RunConfig) -> dict[str, Any]:
    return {
        "backend": _backend.name(),
        "config": config.as_dict(),
        "passed": all(r.ok for r in results),
        "criteria": [r.as_dict() for r in results],
    }
