"""Command-line front end.

Subcommands
-----------
spectrum   eigenvalue table of the operator ``A``
kernel     kernel synthesis, cache file and diagnostics
simulate   closed-loop (linear or nonlinear) or open-loop runs
verify     the acceptance suite as a JSON report

Exit codes: 0 success, 1 usage error, 2 mathematical precondition failure,
3 I/O or integrity failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import _backend, cache
from .acceptance import report, run_all
from .config import RunConfig, coerce, format_config, load_config, parse_sweep
from .errors import IntegrityError, KdVFeedbackError, MathError, UsageError
from .kernel import (
    KernelField,
    c_hat_estimate,
    canned_test_functions,
    realness_defect,
    synthesize,
    transposition_residual,
)
from .sim import (
    NOISE_FLOOR,
    SimConfig,
    SimulationTrace,
    feedback_contraction,
    fit_decay_rate,
    initial_profile,
    simulate_closed_loop,
    simulate_linear_closed_loop,
    simulate_open_loop,
)
from .spectral import Grid, build_basis, eigen_residual
from .transform import (
    TransformOperator,
    apply_K,
    apply_K_adjoint,
    forward_transform,
    inverse_transform,
    spectral_radius_estimate,
)

EXIT_OK, EXIT_USAGE, EXIT_MATH, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def fmt(x: Any) -> str:
    """17 significant digits for floats, plain ``str`` otherwise (locale independent)."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="ascii")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


PLOT_SCRIPT = '''"""Plot the norms recorded in trace.csv on a log scale.

Generated by kdvfeedback; run with ``python plot_energy.py`` (needs matplotlib).
"""
import csv
import math
from pathlib import Path

import matplotlib.pyplot as plt

LAM = {lam!r}
HERE = Path(__file__).resolve().parent

with open(HERE / "trace.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
nv = [float(r["norm_v"]) for r in rows]
nw = [float(r["norm_w"]) for r in rows]
ref = [nw[0] * math.exp(-LAM * s / 2.0) for s in t]

fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogy(t, [x * x for x in nv], label="||v||^2")
ax.semilogy(t, [x * x for x in nw], label="||w||^2")
ax.semilogy(t, [x * x for x in ref], "k--", label="||w(0)||^2 exp(-lambda t)  (norm rate lambda/2)")
ax.set_xlabel("t")
ax.set_ylabel("energy")
ax.set_title("{title}")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "energy.png", dpi=120)
print("wrote", HERE / "energy.png")
'''


def _say(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# kernel acquisition
# ---------------------------------------------------------------------------


def _matches(kern: KernelField, cfg: RunConfig) -> bool:
    return kern.L == cfg.length and kern.lam == cfg.lam and kern.N == cfg.modes and kern.nx == cfg.nx


def obtain_kernel(cfg: RunConfig) -> tuple[KernelField, bool]:
    """Load the kernel from ``cfg.cache`` when present, else synthesize (and store).

    Returns the kernel and whether it came from the cache.

    Raises
    ------
    ChecksumMismatch
        If the cache file is corrupted.
    UsageError
        If the cache was written for different parameters.
    """
    cfg.require_noncritical()
    if cfg.cache and Path(cfg.cache).exists():
        kern = cache.load(cfg.cache)
        if not _matches(kern, cfg):
            raise UsageError(
                f"cache {cfg.cache} holds L={kern.L}, lambda={kern.lam}, N={kern.N}, nx={kern.nx}; "
                "it does not match the configuration"
            )
        return kern, True
    _, kern = synthesize(cfg.length, cfg.lam, cfg.modes, cfg.nx)
    if cfg.cache:
        cache.save(kern, cfg.cache)
    return kern, False


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig) -> int:
    cfg.require_noncritical()
    grid = Grid(cfg.length, cfg.nx)
    basis = build_basis(cfg.length, cfg.lam, cfg.modes, grid)
    rows = []
    for m in basis.modes:
        rows.append((m.j, m.tau, m.mu, m.alpha, abs(m.dphi0), m.bc_residual, eigen_residual(m, grid)))
    out = Path(cfg.out)
    path = write_csv(out / "spectrum.csv",
                     ("j", "tau_j", "mu_j", "alpha_j", "abs_dphi0", "bc_residual", "ode_residual"), rows)
    top = basis.mode(cfg.modes)
    _say(f"{len(rows)} modes written to {path}")
    _say(f"mu_1 = {basis.mode(1).mu:.12g}; alpha_{cfg.modes} * sqrt(L) = {top.alpha * math.sqrt(cfg.length):.6f}")
    return EXIT_OK


def kernel_diagnostics(kern: KernelField, cfg: RunConfig, from_cache: bool) -> list[tuple[str, Any]]:
    op = TransformOperator(kern)
    rng = np.random.default_rng(cfg.seed)
    v = rng.standard_normal(kern.grid.size)
    u = rng.standard_normal(kern.grid.size)
    w8 = kern.grid.weights
    lhs = float(w8 @ (apply_K(op, v) * u))
    rhs = float(w8 @ (v * apply_K_adjoint(op, u)))
    roundtrip = float(np.max(np.abs(inverse_transform(op, forward_transform(op, v)) - v)) / np.max(np.abs(v)))
    edges = max(float(np.abs(kern.k[[0, -1], :]).max()), float(np.abs(kern.k[:, [0, -1]]).max()))
    diag: list[tuple[str, Any]] = [
        ("L", kern.L), ("lambda", kern.lam), ("N", kern.N), ("nx", kern.nx),
        ("backend", _backend.name()), ("from_cache", int(from_cache)),
        ("max_imag_stored", kern.max_imag),
        ("boundary_edge_max_abs", edges),
    ]
    if not from_cache:
        basis = build_basis(kern.L, kern.lam, kern.N, kern.grid)
        e0, eL = kern.ky_edge_ratio()
        diag += [("realness_defect_im_over_re", realness_defect(basis, kern.lam)),
                 ("ky_edge_ratio_0", e0), ("ky_edge_ratio_L", eL)]
    for i, rho in enumerate(canned_test_functions(kern.L), 1):
        diag.append((f"transposition_residual_{i}", transposition_residual(kern, rho)))
    diag += [
        ("spectral_radius_estimate", spectral_radius_estimate(op)),
        ("cond_I_minus_K", op.cond),
        ("norm_I_minus_K", op.norm),
        ("norm_inverse", op.inverse_norm),
        ("gain_l2_norm", kern.grid.norm(np.asarray(kern.gain))),
        ("adjoint_relative_gap", abs(lhs - rhs) / max(abs(lhs), 1e-300)),
        ("roundtrip_relative_error", roundtrip),
    ]
    if kern.kx is not None:
        diag.append(("c_hat_estimate", c_hat_estimate(kern, op.inverse_norm)))
    return diag


def cmd_kernel(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    path = Path(cfg.cache) if cfg.cache else out / "kernel.cache"
    cfg.require_noncritical()
    _, kern = synthesize(cfg.length, cfg.lam, cfg.modes, cfg.nx)
    cache.save(kern, path)
    coef = kern.coefficients
    write_csv(out / "coefficients.csv", ("j", "re_c", "im_c", "abs_c_minus_1"),
              ((j, c.real, c.imag, abs(c - 1.0)) for j, c in zip(coef.indices, coef.c)))
    diag = kernel_diagnostics(kern, cfg, from_cache=False)
    write_csv(out / "kernel_diagnostics.csv", ("quantity", "value"), diag)
    d = dict(diag)
    _say(f"kernel cache written to {path}")
    _say(f"spectral radius estimate {d['spectral_radius_estimate']:.3e}, cond(I-K) {d['cond_I_minus_K']:.6g}, "
         f"||g|| {d['gain_l2_norm']:.6g}")
    return EXIT_OK


def _excess_column(trace: SimulationTrace, rate: float, c_hat: float | None) -> np.ndarray:
    """Relative excess ``(dE/dt + rate E - c_hat E^1.5)/E`` on interior rows (NaN elsewhere)."""
    col = np.full(len(trace), np.nan)
    if len(trace) < 3 or c_hat is None:
        return col
    _, E, dE = trace.energy_rate("w")
    with np.errstate(divide="ignore", invalid="ignore"):
        col[1:-1] = (dE + rate * E - c_hat * E**1.5) / E
    return col


def cmd_simulate(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    mode = cfg.mode
    if mode == "open-loop":
        grid = Grid(cfg.length, cfg.nx)
        kern = op = None
        from_cache = False
    else:
        kern, from_cache = obtain_kernel(cfg)
        grid = kern.grid
        op = TransformOperator(kern)
    v0 = initial_profile(cfg.profile, grid, cfg.amplitude)
    nsteps_hint = max(1, int(round(cfg.t_final / cfg.dt)))
    stride = max(1, nsteps_hint // 50)
    sc = SimConfig(grid=grid, dt=cfg.dt, t_final=cfg.t_final, theta=cfg.theta, picard_tol=cfg.picard_tol,
                   picard_max=cfg.picard_max, nonlinear=(mode == "nonlinear"), snapshot_stride=stride)
    if mode == "open-loop":
        trace = simulate_open_loop(v0, sc, nonlinear=False, project=cfg.project)
    elif mode == "linear":
        trace = simulate_linear_closed_loop(v0, sc, kern, op, project=cfg.project)
    else:
        trace = simulate_closed_loop(v0, sc, kern, op, project=cfg.project)

    summary: dict[str, Any] = {"mode": mode, "backend": _backend.name(), "dt": trace.dt,
                               "steps": len(trace) - 1, "config": cfg.as_dict()}
    check_rate = c_hat = None
    if mode == "linear":
        check_rate, c_hat = cfg.lam, 0.0
    elif mode == "nonlinear":
        check_rate = 2.0 * cfg.lam
        if kern.kx is not None:
            c_hat = c_hat_estimate(kern, op.inverse_norm)
        else:
            summary["note"] = "C_hat needs derivative samples; unavailable for a cached kernel"
    excess = _excess_column(trace, check_rate or 0.0, c_hat)
    write_csv(
        out / "trace.csv",
        ("t", "norm_v", "norm_w", "control", "iters", "contraction", "w_ineq_excess"),
        zip(trace.t, trace.norm_v, trace.norm_w, trace.control, trace.iters, trace.contraction, excess),
    )
    write_csv(out / "snapshots.csv", ("t", "x", "v"),
              ((t, x, v) for t, snap in trace.snapshots for x, v in zip(grid.nodes, snap)))
    title = f"{mode}, L={cfg.length:g}, lambda={cfg.lam:g}, N={cfg.modes}, nx={cfg.nx}"
    (out / "plot_energy.py").write_text(PLOT_SCRIPT.format(lam=float(cfg.lam), title=title), encoding="ascii")

    if c_hat is not None:
        idx = np.arange(len(trace))
        E = trace.norm_w**2
        mask = (idx > 10) & np.isfinite(excess) & (E > NOISE_FLOOR**2 * E[0])
        viol = int(np.count_nonzero(excess[mask] > 0))
        summary.update(inequality_rate=check_rate, c_hat=c_hat, inequality_checked=int(mask.sum()),
                       inequality_violations=viol,
                       inequality_fraction=viol / max(1, int(mask.sum())))
    window = (min(2.0, 0.2 * cfg.t_final), cfg.t_final)
    for which in ("w", "v"):
        try:
            summary[f"rate_{which}"] = fit_decay_rate(trace, window, which, floor=NOISE_FLOOR)
        except KdVFeedbackError as exc:
            summary[f"rate_{which}"] = None
            summary[f"rate_{which}_error"] = str(exc)
    summary["fit_window"] = list(window)
    summary["energy_ratio_final"] = float((trace.norm_v[-1] / trace.norm_v[0]) ** 2) if trace.norm_v[0] else 0.0
    summary["max_iters"] = int(trace.iters.max())
    summary["max_contraction"] = float(trace.contraction.max())
    if kern is not None:
        summary["norm_product_C"] = op.norm_product
        summary["feedback_contraction"] = feedback_contraction(grid, trace.dt, cfg.theta, np.asarray(kern.gain))
        summary["kernel_from_cache"] = from_cache
    write_json(out / "summary.json", summary)

    _say(f"{mode} run: {summary['steps']} steps of dt={trace.dt:.6g} -> {out / 'trace.csv'}")
    if summary.get("rate_w") is not None:
        _say(f"fitted decay rate of ||w|| on [{window[0]:g}, {window[1]:g}]: {summary['rate_w']:.6g} "
             f"(lambda/2 = {cfg.lam / 2:.6g})")
    _say(f"energy ratio E(T)/E(0) = {summary['energy_ratio_final']:.6g}; max Picard iterations {summary['max_iters']}")
    if "inequality_fraction" in summary:
        _say(f"w-energy inequality violated at {summary['inequality_violations']} of "
             f"{summary['inequality_checked']} steps ({summary['inequality_fraction']:.2%})")
    return EXIT_OK


def verify_cache(cfg: RunConfig) -> dict[str, Any]:
    """Load the configured cache and compare it with a fresh synthesis."""
    kern = cache.load(cfg.cache)
    _, fresh = synthesize(kern.L, kern.lam, kern.N, kern.nx)
    scale = float(np.max(np.abs(fresh.k)))
    gap = float(np.max(np.abs(fresh.k - kern.k))) / scale
    return {"path": str(cfg.cache), "checksum": "ok", "max_relative_gap_to_fresh": gap, "reproduces": gap <= 1e-15}


def cmd_verify(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    cache_info = verify_cache(cfg) if cfg.cache else None
    results = run_all(cfg)
    for r in results:
        _say(r.line())
    rep = report(results, cfg)
    if cache_info is not None:
        rep["cache"] = cache_info
        rep["passed"] = rep["passed"] and cache_info["reproduces"]
        _say(f"cache {cache_info['path']}: checksum ok, max relative gap {cache_info['max_relative_gap_to_fresh']:.1e}")
    write_json(out / "verify.json", rep)
    _say(f"overall: {'PASS' if rep['passed'] else 'FAIL'} (report {out / 'verify.json'})")
    return EXIT_OK if rep["passed"] else EXIT_MATH


COMMANDS = {"spectrum": cmd_spectrum, "kernel": cmd_kernel, "simulate": cmd_simulate, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("parameters (override --config)")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("--length", type=float, help="interval length L (default 3)")
    g.add_argument("--lambda", dest="lam", type=float, help="decay parameter lambda (default 1)")
    g.add_argument("--modes", type=int, help="number of positive modes N (default 30)")
    g.add_argument("--nx", type=int, help="grid intervals, even (default 512)")
    g.add_argument("--dt", type=float, help="time step (default 1e-3)")
    g.add_argument("--tfinal", dest="t_final", type=float, help="final time (default 10)")
    g.add_argument("--theta", type=float, help="implicitness in [0.5, 1] (default 0.5)")
    g.add_argument("--amplitude", type=float, help="initial amplitude (default 0.01)")
    g.add_argument("--profile", help="initial profile: sine, stationary or bump (default sine)")
    g.add_argument("--seed", type=int, help="seed for random test vectors (default 0)")
    g.add_argument("--out", help="output directory (default ./out)")
    g.add_argument("--cache", help="kernel cache file")
    g.add_argument("--project", action="store_const", const=True,
                   help="project initial data onto v(0) = v(L) = 0 instead of rejecting it")
    g.add_argument("--sweep", help="run a parameter sweep in parallel, e.g. lambda=0.5,1,2")

    parser = _Parser(prog="kdvfeedback", description="Boundary feedback stabilization of the KdV equation.")
    parser.add_argument("--version", action="version", version="kdvfeedback 0.1.0")
    sub = parser.add_subparsers(dest="command", metavar="{spectrum,kernel,simulate,verify}")
    sub.add_parser("spectrum", parents=[common], help="eigenvalue table")
    sub.add_parser("kernel", parents=[common], help="kernel synthesis and diagnostics")
    p = sub.add_parser("simulate", parents=[common], help="time integration")
    m = p.add_mutually_exclusive_group()
    m.add_argument("--nonlinear", dest="mode", action="store_const", const="nonlinear",
                   help="nonlinear closed loop (default)")
    m.add_argument("--linear", dest="mode", action="store_const", const="linear", help="linear closed loop")
    m.add_argument("--open-loop", dest="mode", action="store_const", const="open-loop",
                   help="linear system without feedback, v_x(L) = 0")
    sub.add_parser("verify", parents=[common], help="acceptance suite, JSON report")
    return parser


_FLAG_KEYS = ("length", "lam", "modes", "nx", "dt", "t_final", "theta", "amplitude", "profile", "seed",
              "out", "cache", "project", "mode")


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = load_config(ns.config) if ns.config else RunConfig()
    flags = {k: getattr(ns, k, None) for k in _FLAG_KEYS}
    return cfg.updated({k: v for k, v in flags.items() if v is not None})


def _sweep_one(command: str, cfg: RunConfig) -> tuple[int, str]:
    try:
        code = COMMANDS[command](cfg)
        return code, ""
    except KdVFeedbackError as exc:
        return exc.exit_code, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        return EXIT_IO, f"{type(exc).__name__}: {exc}"


def run_sweep(command: str, cfg: RunConfig, sweep: str, workers: int | None = None) -> int:
    key, values = parse_sweep(sweep)
    base = Path(cfg.out)
    jobs = []
    for v in values:
        sub = base / f"{key}={v}"
        upd = coerce({key: v})
        c = replace(cfg, out=str(sub), **upd)
        if cfg.cache:
            c = replace(c, cache=str(sub / Path(cfg.cache).name))
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "run.cfg").write_text(format_config(c), encoding="ascii")
        jobs.append((v, c))
    codes = []
    with ProcessPoolExecutor(max_workers=workers or min(len(jobs), 4)) as ex:
        futs = [(v, ex.submit(_sweep_one, command, c)) for v, c in jobs]
        for v, f in futs:
            code, msg = f.result()
            codes.append(code)
            _say(f"[{key}={v}] exit {code}" + (f": {msg}" if msg else ""))
    return max(codes)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        cfg = resolve_config(ns)
        if ns.sweep:
            return run_sweep(ns.command, cfg, ns.sweep)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MathError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MATH
    except IntegrityError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except KdVFeedbackError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
