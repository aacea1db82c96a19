"""Pick the compiled kernels when available, else the numpy fallback.

Set ``ARCBANDIT_BACKEND=python`` to force the fallback (the benchmark and the
backend-agreement tests use :func:`load` directly instead).
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

KERNELS = (
    "lse_softmax",
    "info_premium",
    "linear_premium",
    "select_index",
    "solve_layer",
    "bellman_sweep",
)


def load(name):
    """Return the kernel module for ``name`` ("compiled" or "python")."""
    if name == "compiled":
        return importlib.import_module("arcbandit._core")
    if name == "python":
        return importlib.import_module("arcbandit._pycore")
    raise ValueError(f"unknown backend {name!r}")


def _select():
    wanted = os.environ.get("ARCBANDIT_BACKEND", "auto").lower()
    if wanted in ("auto", "compiled"):
        try:
            return "compiled", load("compiled")
        except ImportError:
            if wanted == "compiled":
                raise
            log.debug("compiled kernels unavailable, using numpy fallback")
    return "python", load("python")


def use(name):
    """Rebind the exported kernels to backend ``name``; returns the previous name."""
    global BACKEND
    previous = BACKEND
    mod = load(name)
    for kernel in KERNELS:
        globals()[kernel] = getattr(mod, kernel)
    BACKEND = name
    return previous


BACKEND, _mod = _select()

lse_softmax = _mod.lse_softmax
info_premium = _mod.info_premium
linear_premium = _mod.linear_premium
select_index = _mod.select_index
solve_layer = _mod.solve_layer
bellman_sweep = _mod.bellman_sweep
