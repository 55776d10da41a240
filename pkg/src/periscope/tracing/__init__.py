"""Ray tracing backends.

Two implementations of the same batch tracer:

* ``_pure``: readable numpy reference, works for every field/domain type;
* ``_fast``: Cython kernel for polynomial and image-side heights over discs
  and convex polygons (the shapes the synthesis routines emit).

``trace_rays`` picks the kernel when it is importable and the system lowers
to a flat descriptor, otherwise falls back to the reference path. Setting
the environment variable ``PERISCOPE_PURE=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pure
from .descriptors import lower_system

try:
    from . import _fast  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - build without the extension
    _fast = None

_KERNEL_MESSAGES = {
    1: "surface march exceeded its step budget",
    2: "Newton inversion of the image-side chart failed to converge",
}


def compiled_available():
    return _fast is not None


def backend_for(system, backend=None):
    """Resolve which backend a trace of ``system`` would use."""
    if backend not in (None, "auto", "pure", "compiled"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "pure":
        return "pure"
    forced = os.environ.get("PERISCOPE_PURE", "") not in ("", "0")
    if backend == "compiled":
        if _fast is None:
            raise RuntimeError("compiled tracer requested but not built")
        if lower_system(system) is None:
            raise RuntimeError("system does not lower to a kernel descriptor")
        return "compiled"
    if forced or _fast is None:
        return "pure"
    return "compiled" if lower_system(system) is not None else "pure"


def trace_rays(system, labels, max_bounces=16, backend=None):
    """Trace vertical entry rays; returns a dict of per-ray arrays."""
    choice = backend_for(system, backend)
    if choice == "compiled":
        desc = lower_system(system)
        out = _fast.trace_batch(desc, labels, max_bounces)
        codes = out.pop("message_code")
        out["messages"] = [_KERNEL_MESSAGES.get(int(c)) for c in codes]
        out["backend"] = "compiled"
        return out
    out = _pure.trace_batch(system, labels, max_bounces)
    out["backend"] = "pure"
    return out


STATUS_NAMES = _pure.STATUS_NAMES
STATUS_OK = _pure.STATUS_OK
STATUS_ESCAPED = _pure.STATUS_ESCAPED
STATUS_SUPERFLUOUS = _pure.STATUS_SUPERFLUOUS
STATUS_MAX_BOUNCES = _pure.STATUS_MAX_BOUNCES
STATUS_NUMERICAL = _pure.STATUS_NUMERICAL
