"""Plain-text kernel cache with an integrity checksum.

Layout::

    # kdvfeedback kernel cache
    format_version=1
    L=<float>
    lambda=<float>
    N=<int>
    nx=<int>
    checksum=sha256:<hex digest of the lines above it and everything below>
    [c]
    j re im
    ...
    [kernel]
    one row per x node, nx+1 values
    [gain]
    nx+1 values

All floats are written with 17 significant digits, which round-trips IEEE
doubles exactly. No timestamps are stored, so the same kernel always produces
the same bytes.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .errors import ChecksumMismatch, IntegrityError
from .kernel import GainCoefficients, KernelField
from .spectral import Grid

FORMAT_VERSION = 1
_MAGIC = "# kdvfeedback kernel cache"


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _row(a) -> str:
    return " ".join(_f(v) for v in a)


def _body(kernel: KernelField) -> str:
    coef = kernel.coefficients
    lines = ["[c]", "j re im"]
    for j, c in zip(coef.indices, coef.c):
        lines.append(f"{int(j)} {_f(c.real)} {_f(c.imag)}")
    lines.append("[kernel]")
    lines.extend(_row(r) for r in kernel.k)
    lines.append("[gain]")
    lines.append(_row(kernel.gain))
    return "\n".join(lines) + "\n"


def _digest(head_lines, body: str) -> str:
    """SHA-256 over the header lines before the checksum and the body, so parameters are covered too."""
    text = "\n".join(head_lines) + "\n" + body
    return hashlib.sha256(text.encode("ascii", errors="replace")).hexdigest()


def dumps(kernel: KernelField) -> str:
    """Serialize ``kernel`` to the cache text."""
    body = _body(kernel)
    head = [
        _MAGIC,
        f"format_version={FORMAT_VERSION}",
        f"L={_f(kernel.L)}",
        f"lambda={_f(kernel.lam)}",
        f"N={kernel.N}",
        f"nx={kernel.nx}",
    ]
    head.append(f"checksum=sha256:{_digest(head, body)}")
    return "\n".join(head) + "\n" + body


def save(kernel: KernelField, path: str | Path) -> Path:
    """Write the cache atomically (temporary file plus rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps(kernel))
    os.replace(tmp, path)
    return path


def read_header(text: str) -> dict[str, str]:
    lines = text.split("\n", 7)
    if len(lines) < 8 or lines[0] != _MAGIC:
        raise IntegrityError("not a kernel cache file")
    head = {}
    for line in lines[1:7]:
        k, sep, v = line.partition("=")
        if not sep:
            raise IntegrityError(f"malformed header line {line!r}")
        head[k] = v
    return head


def loads(text: str) -> KernelField:
    """Parse cache text, verifying the checksum first.

    Raises
    ------
    ChecksumMismatch
        If the body does not hash to the recorded digest.
    IntegrityError
        For any other structural problem.
    """
    head = read_header(text)
    parts = text.split("\n", 7)
    body = parts[7]
    want = head.get("checksum", "")
    if not want.startswith("sha256:"):
        raise IntegrityError("missing checksum")
    got = _digest(parts[:6], body)
    if got != want[len("sha256:"):]:
        raise ChecksumMismatch(f"kernel cache checksum mismatch (recorded {want[7:19]}..., computed {got[:12]}...)")
    try:
        if int(head["format_version"]) != FORMAT_VERSION:
            raise IntegrityError(f"unsupported cache format {head['format_version']}")
        L = float(head["L"])
        lam = float(head["lambda"])
        N = int(head["N"])
        nx = int(head["nx"])
        lines = body.rstrip("\n").split("\n")
        i_c = lines.index("[c]")
        i_k = lines.index("[kernel]")
        i_g = lines.index("[gain]")
        crow = np.array([ln.split() for ln in lines[i_c + 2 : i_k]], dtype=float)
        k = np.array([ln.split() for ln in lines[i_k + 1 : i_g]], dtype=float)
        gain = np.array(lines[i_g + 1].split(), dtype=float)
    except (KeyError, ValueError, IndexError) as exc:
        raise IntegrityError(f"malformed kernel cache: {exc}") from None
    if crow.shape != (2 * N, 3) or k.shape != (nx + 1, nx + 1) or gain.shape != (nx + 1,):
        raise IntegrityError("kernel cache sections have inconsistent sizes")
    c = crow[:, 1] + 1j * crow[:, 2]
    coef = GainCoefficients(lam=lam, N=N, c=c)
    return KernelField(grid=Grid(L, nx), k=k, gain=gain, coefficients=coef, L=L, lam=lam, N=N)


def load(path: str | Path) -> KernelField:
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError:
        raise ChecksumMismatch(f"{path}: non-ASCII bytes in kernel cache") from None
    return loads(text)
