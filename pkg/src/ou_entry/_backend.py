"""Select the compiled kernels, or the numpy fallback when unavailable."""

import os

from . import _fallback

if os.environ.get("OU_ENTRY_PURE", "") not in ("", "0"):
    _kernels = None
else:
    try:
        from . import _kernels
    except ImportError:  # extension not built
        _kernels = None

impl = _kernels if _kernels is not None else _fallback
COMPILED = _kernels is not None

log_cyl_integral = impl.log_cyl_integral
simulate_stopping = impl.simulate_stopping
simulate_entry_control = impl.simulate_entry_control


def thread_count():
    """Parallelism cap from ``OU_ENTRY_THREADS`` (default: all cores)."""
    raw = os.environ.get("OU_ENTRY_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
