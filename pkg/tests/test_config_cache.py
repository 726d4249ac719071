import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kdvfeedback import cache
from kdvfeedback.config import (
    RunConfig,
    coerce,
    format_config,
    load_config,
    parse_config_text,
    parse_sweep,
)
from kdvfeedback.errors import ChecksumMismatch, CriticalLength, IntegrityError, UsageError

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_defaults():
    c = RunConfig()
    assert (c.length, c.lam, c.modes, c.nx, c.dt, c.t_final, c.theta) == (3.0, 1.0, 30, 512, 1e-3, 10.0, 0.5)


@given(
    st.floats(0.5, 20), st.floats(0.01, 10), st.integers(1, 80), st.integers(4, 2000).map(lambda n: 2 * n),
    st.floats(0.5, 1.0), st.booleans(), st.sampled_from(["sine", "bump", "stationary"]),
)
def test_format_parse_round_trip(length, lam, modes, nx, theta, project, profile):
    cfg = RunConfig(length=length, lam=lam, modes=modes, nx=nx, theta=theta, project=project, profile=profile,
                    cache="k.cache")
    back = RunConfig().updated(parse_config_text(format_config(cfg)))
    assert back == cfg


def test_parse_comments_and_aliases(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# header\nlambda = 2.5  # trailing\n\ntfinal=4\n", encoding="ascii")
    cfg = load_config(p)
    assert cfg.lam == 2.5 and cfg.t_final == 4.0


@pytest.mark.parametrize("text", ["colour=blue", "nx", "=3", "nx=abc", "project=maybe", "nx=7", "theta=2"])
def test_bad_config(text):
    with pytest.raises(UsageError):
        RunConfig().updated(parse_config_text(text))


def test_coerce_passes_typed_values():
    assert coerce({"lambda": 2.0, "modes": "4", "project": "yes"}) == {"lam": 2.0, "modes": 4, "project": True}


def test_sweep_spec():
    assert parse_sweep("lambda=0.5, 1,2") == ("lambda", ["0.5", "1", "2"])
    for bad in ("lambda", "lambda=", "colour=1,2"):
        with pytest.raises(UsageError):
            parse_sweep(bad)


def test_critical_length_message():
    with pytest.raises(CriticalLength, match="nearest member 6.28318530717958"):
        RunConfig(length=2 * math.pi).require_noncritical()
    RunConfig(length=3.0).require_noncritical()


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def test_dumps_loads_exact(small):
    _, kern, _ = small
    back = cache.loads(cache.dumps(kern))
    assert np.array_equal(back.k, kern.k)
    assert np.array_equal(back.gain, kern.gain)
    assert np.array_equal(back.coefficients.c, kern.coefficients.c)
    assert (back.L, back.lam, back.N, back.nx) == (kern.L, kern.lam, kern.N, kern.nx)
    assert back.kx is None and back.ky is None
    assert cache.dumps(back) == cache.dumps(kern)


def test_save_load(tmp_path, small):
    _, kern, _ = small
    p = cache.save(kern, tmp_path / "sub" / "k.cache")
    assert np.array_equal(cache.load(p).k, kern.k)
    assert not list(p.parent.glob("*.tmp*"))


def _text(small):
    return cache.dumps(small[1])


def test_body_tamper_detected(small):
    text = _text(small)
    i = text.index("[gain]") + len("[gain]\n")
    j = text.index(" ", i)
    tampered = text[:i] + "1" + text[j:]
    with pytest.raises(ChecksumMismatch):
        cache.loads(tampered)


def test_header_tamper_detected(small):
    text = _text(small)
    with pytest.raises(ChecksumMismatch):
        cache.loads(text.replace("lambda=1\n", "lambda=2\n", 1))


def test_structural_problems(small):
    text = _text(small)
    with pytest.raises(IntegrityError):
        cache.loads("hello\n" + text)
    with pytest.raises(IntegrityError):
        cache.loads(text.replace("checksum=sha256:", "checksum=md5:", 1))


def test_inconsistent_sizes(small):
    # rebuild a cache whose header disagrees with its sections, with a valid digest
    _, kern, _ = small
    text = cache.dumps(kern)
    lines = text.split("\n", 7)
    head = [ln.replace("N=8", "N=7") for ln in lines[:6]]
    body = lines[7]
    forged = "\n".join(head) + f"\nchecksum=sha256:{cache._digest(head, body)}\n" + body
    with pytest.raises(IntegrityError) as info:
        cache.loads(forged)
    assert not isinstance(info.value, ChecksumMismatch)


def test_non_ascii_file(tmp_path, small):
    p = tmp_path / "k.cache"
    p.write_bytes(_text(small).encode("ascii") + "é".encode())
    with pytest.raises(ChecksumMismatch):
        cache.load(p)


def test_read_header(small):
    head = cache.read_header(_text(small))
    assert head["format_version"] == "1" and head["N"] == "8" and head["nx"] == "128"
