"""Select the numerical core at import time.

The compiled extension ``_core`` is used when it was built. Otherwise the
pure-Python ``_core_py`` is used. Setting ``KDVFEEDBACK_PURE_PYTHON=1``
forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _core_py


def _select() -> ModuleType:
    if os.environ.get("KDVFEEDBACK_PURE_PYTHON", "") not in ("", "0"):
        return _core_py
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        return _core_py
    return _core


core: ModuleType = _select()
python_core: ModuleType = _core_py


def compiled_core() -> ModuleType | None:
    """The compiled module if available, regardless of the override."""
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _core


def name() -> str:
    return core.NAME
