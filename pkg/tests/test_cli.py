import csv
import json
import math

import pytest

from kdvfeedback import cache
from kdvfeedback.cli import EXIT_IO, EXIT_MATH, EXIT_OK, EXIT_USAGE, build_parser, main

SMALL = ["--modes", "6", "--nx", "128"]


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# usage errors
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["spectrum", "--nx", "abc"],
        ["spectrum", "--nx", "127"],
        ["spectrum", "--theta", "0.2"],
        ["simulate", "--linear", "--open-loop"],
        ["kernel", "--lambda", "-1"],
        ["spectrum", "--sweep", "nonsense"],
    ],
)
def test_usage_errors(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == EXIT_USAGE


def test_missing_config_file_is_io(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == EXIT_IO


def test_critical_length_is_math_error(tmp_path, capsys):
    code = main(["kernel", "--length", repr(2 * math.pi), "--out", str(tmp_path)] + SMALL)
    assert code == EXIT_MATH
    assert "CriticalLength" in capsys.readouterr().err


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["simulate", "--help"])
    text = capsys.readouterr().out
    for flag in ("--length", "--lambda", "--modes", "--nx", "--dt", "--tfinal", "--theta", "--amplitude",
                 "--out", "--cache", "--config", "--linear", "--nonlinear", "--open-loop", "--project", "--sweep"):
        assert flag in text


# ---------------------------------------------------------------------------
# spectrum and kernel
# ---------------------------------------------------------------------------


def test_spectrum_csv(tmp_path):
    assert main(["spectrum", "--out", str(tmp_path)] + SMALL) == EXIT_OK
    path = tmp_path / "spectrum.csv"
    assert header(path) == ["j", "tau_j", "mu_j", "alpha_j", "abs_dphi0", "bc_residual", "ode_residual"]
    data = rows(path)
    assert [int(r["j"]) for r in data] == list(range(-6, 0)) + list(range(1, 7))
    assert float(data[6]["mu_j"]) == pytest.approx(4.08441783, rel=1e-8)


def test_kernel_outputs_and_byte_identical_cache(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["kernel", "--out", str(a)] + SMALL) == EXIT_OK
    assert main(["kernel", "--out", str(b)] + SMALL) == EXIT_OK
    assert (a / "kernel.cache").read_bytes() == (b / "kernel.cache").read_bytes()
    assert header(a / "coefficients.csv") == ["j", "re_c", "im_c", "abs_c_minus_1"]
    diag = {r["quantity"]: r["value"] for r in rows(a / "kernel_diagnostics.csv")}
    assert float(diag["boundary_edge_max_abs"]) == 0.0
    assert float(diag["realness_defect_im_over_re"]) < 1e-9
    assert float(diag["roundtrip_relative_error"]) < 1e-10
    assert 0 < float(diag["spectral_radius_estimate"]) < 1


def test_corrupted_cache_exit_3(tmp_path, capsys):
    path = tmp_path / "k.cache"
    assert main(["kernel", "--out", str(tmp_path), "--cache", str(path)] + SMALL) == EXIT_OK
    text = path.read_text(encoding="ascii").splitlines(keepends=True)
    i = next(n for n, line in enumerate(text) if line.startswith("[kernel]")) + 3
    text[i] = text[i].replace("1", "2", 1) if "1" in text[i] else "9" + text[i]
    path.write_text("".join(text), encoding="ascii")
    code = main(["simulate", "--out", str(tmp_path / "sim"), "--cache", str(path), "--tfinal", "0.05"] + SMALL)
    assert code == EXIT_IO
    assert "ChecksumMismatch" in capsys.readouterr().err


def test_cache_parameter_mismatch_is_usage(tmp_path):
    path = tmp_path / "k.cache"
    assert main(["kernel", "--out", str(tmp_path), "--cache", str(path)] + SMALL) == EXIT_OK
    code = main(["simulate", "--out", str(tmp_path), "--cache", str(path), "--lambda", "2", "--tfinal", "0.05"]
                + SMALL)
    assert code == EXIT_USAGE


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_outputs(tmp_path):
    path = tmp_path / "k.cache"
    argv = ["simulate", "--out", str(tmp_path), "--tfinal", "1", "--dt", "2e-3", "--cache", str(path)] + SMALL
    assert main(argv) == EXIT_OK
    assert path.exists()
    assert header(tmp_path / "trace.csv") == ["t", "norm_v", "norm_w", "control", "iters", "contraction",
                                                "w_ineq_excess"]
    assert header(tmp_path / "snapshots.csv") == ["t", "x", "v"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["mode"] == "nonlinear" and summary["steps"] == 500
    assert summary["kernel_from_cache"] is False
    assert (tmp_path / "plot_energy.py").exists()
    compile((tmp_path / "plot_energy.py").read_text(), "plot_energy.py", "exec")
    # second run reuses the cache
    assert main(argv) == EXIT_OK
    assert json.loads((tmp_path / "summary.json").read_text())["kernel_from_cache"] is True


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\nlambda = 2\nmodes = 6\nnx = 128\ntfinal = 0.5\ndt = 5e-3\n", encoding="ascii")
    assert main(["simulate", "--linear", "--config", str(cfg), "--tfinal", "0.2", "--out", str(tmp_path)]) == EXIT_OK
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["mode"] == "linear"
    assert s["config"]["lam"] == 2.0 and s["config"]["t_final"] == 0.2 and s["steps"] == 40


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n", encoding="ascii")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_open_loop_at_critical_length(tmp_path):
    argv = ["simulate", "--open-loop", "--length", repr(2 * math.pi), "--profile", "stationary",
            "--tfinal", "1", "--dt", "5e-3", "--nx", "128", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    s = json.loads((tmp_path / "summary.json").read_text())
    assert abs(s["energy_ratio_final"] - 1) < 0.01


def test_bump_profile_requires_projection(tmp_path):
    base = ["simulate", "--open-loop", "--profile", "bump", "--tfinal", "0.05", "--nx", "64", "--out", str(tmp_path)]
    assert main(base) == EXIT_USAGE
    assert main(base + ["--project"]) == EXIT_OK


def test_sweep(tmp_path):
    argv = ["simulate", "--linear", "--sweep", "lambda=0.5,1", "--tfinal", "0.1", "--dt", "5e-3",
            "--out", str(tmp_path)] + SMALL
    assert main(argv) == EXIT_OK
    for v in ("0.5", "1"):
        sub = tmp_path / f"lambda={v}"
        assert (sub / "trace.csv").exists() and (sub / "run.cfg").exists()
        assert json.loads((sub / "summary.json").read_text())["config"]["lam"] == float(v)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def test_verify_missing_cache_is_io(tmp_path):
    assert main(["verify", "--cache", str(tmp_path / "none.cache"), "--out", str(tmp_path), "--modes", "1"]) == EXIT_IO


@pytest.mark.slow
def test_verify_single_mode(tmp_path, capsys):
    code = main(["verify", "--modes", "1", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert code == (EXIT_OK if rep["passed"] else EXIT_MATH)
    assert code == EXIT_OK
    assert "[SKIP]" in out or "SKIP" in json.dumps(rep)
    assert sum(line.startswith("criterion ") for line in out.splitlines()) == 10


def test_cache_round_trip_through_cli(tmp_path):
    path = tmp_path / "k.cache"
    assert main(["kernel", "--out", str(tmp_path), "--cache", str(path)] + SMALL) == EXIT_OK
    kern = cache.load(path)
    assert kern.N == 6 and kern.nx == 128
