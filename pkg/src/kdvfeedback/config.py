"""Run configuration: defaults, ``key=value`` files and validation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import CriticalLength, UsageError
from .spectral import is_noncritical, nearest_critical_length

# file key -> dataclass attribute
_ALIASES = {
    "length": "length",
    "l": "length",
    "lambda": "lam",
    "lam": "lam",
    "modes": "modes",
    "n": "modes",
    "nx": "nx",
    "dt": "dt",
    "tfinal": "t_final",
    "t_final": "t_final",
    "theta": "theta",
    "amplitude": "amplitude",
    "seed": "seed",
    "out": "out",
    "cache": "cache",
    "profile": "profile",
    "picard_tol": "picard_tol",
    "picard_max": "picard_max",
    "mode": "mode",
    "project": "project",
}

PROFILES = ("sine", "stationary", "bump")
MODES = ("nonlinear", "linear", "open-loop")


@dataclass(frozen=True)
class RunConfig:
    """Parameters shared by all subcommands.

    ``mode`` selects the simulated system: ``nonlinear`` or ``linear`` closed
    loop, or ``open-loop`` (linear, homogeneous Neumann condition).
    """

    length: float = 3.0
    lam: float = 1.0
    modes: int = 30
    nx: int = 512
    dt: float = 1e-3
    t_final: float = 10.0
    theta: float = 0.5
    amplitude: float = 0.01
    seed: int = 0
    out: str = "out"
    cache: str | None = None
    profile: str = "sine"
    picard_tol: float = 1e-12
    picard_max: int = 30
    mode: str = "nonlinear"
    project: bool = False

    def __post_init__(self):
        for name in ("length", "lam", "dt", "t_final", "amplitude", "picard_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise UsageError(f"{name} must be a positive number, got {v!r}")
        for name in ("modes", "nx", "picard_max"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be a positive integer")
        if self.nx % 2 or self.nx < 8:
            raise UsageError(f"nx must be even and at least 8, got {self.nx}")
        if not 0.5 <= self.theta <= 1.0:
            raise UsageError(f"theta must lie in [0.5, 1], got {self.theta}")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative")
        if self.profile not in PROFILES:
            raise UsageError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")

    def require_noncritical(self) -> None:
        """Raise :class:`CriticalLength` when the length is in the critical set."""
        if not is_noncritical(self.length):
            raise CriticalLength(
                f"L={self.length!r} belongs to the critical set "
                f"{{2 pi sqrt((l^2 + l j + j^2)/3)}} (nearest member {nearest_critical_length(self.length):.17g})"
            )

    def updated(self, values: Mapping[str, Any]) -> "RunConfig":
        """Copy with ``values`` (file or flag keys) applied and coerced."""
        return replace(self, **coerce(values))

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def coerce(values: Mapping[str, Any]) -> dict[str, Any]:
    """Map external keys to attributes and convert string values."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out: dict[str, Any] = {}
    for key, raw in values.items():
        attr = _ALIASES.get(key.strip().lower().replace("-", "_"))
        if attr is None:
            raise UsageError(f"unknown configuration key {key!r}")
        if raw is None:
            continue
        if isinstance(raw, str):
            t = types[attr]
            try:
                if t == "float":
                    val: Any = float(raw)
                elif t == "int":
                    val = int(raw)
                elif t == "bool":
                    val = _parse_bool(raw)
                else:
                    val = raw.strip()
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
        else:
            val = raw
        out[attr] = val
    return out


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {no}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise UsageError(f"config line {no}: empty key")
        out[k] = v.strip()
    return out


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Read a config file on top of ``base`` (defaults when omitted)."""
    text = Path(path).read_text(encoding="utf-8")
    return (base or RunConfig()).updated(parse_config_text(text))


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config_text` for a full config."""
    rev = {
        "length": "length", "lam": "lambda", "modes": "modes", "nx": "nx", "dt": "dt",
        "t_final": "tfinal", "theta": "theta", "amplitude": "amplitude", "seed": "seed",
        "out": "out", "cache": "cache", "profile": "profile", "picard_tol": "picard_tol",
        "picard_max": "picard_max", "mode": "mode", "project": "project",
    }
    lines = []
    for k, v in cfg.as_dict().items():
        if v is None:
            continue
        if isinstance(v, float):
            v = format(v, ".17g")
        lines.append(f"{rev[k]}={v}")
    return "\n".join(lines) + "\n"


def parse_sweep(text: str) -> tuple[str, list[str]]:
    """``"lambda=0.5,1,2"`` -> ``("lambda", ["0.5", "1", "2"])``."""
    if "=" not in text:
        raise UsageError(f"sweep must look like key=v1,v2,...; got {text!r}")
    key, vals = text.split("=", 1)
    items = [v.strip() for v in vals.split(",") if v.strip()]
    if not items:
        raise UsageError("sweep has no values")
    coerce({key: items[0]})  # validates the key
    return key.strip(), items
