"""Backend selection for the hot biharmonic-flow kernel.

The explicit flow iteration dominates the runtime of large inpainting
jobs, so it exists twice: a compiled Cython extension (``_native``) and a
pure NumPy fallback (``_pure``) with identical semantics.  The compiled
kernel is preferred when importable; set ``LH_KERNEL=python`` to force the
fallback or ``LH_KERNEL=native`` to fail loudly when the extension is
missing.  Both backends are deterministic run-to-run (fixed update and
reduction order); see ``benchmarks/bench_kernels.py`` for a comparison.
"""

import os

from . import _pure

FLOW_CONVERGED = 0
FLOW_MAX_ITERS = 1
FLOW_DIVERGED = 2

_choice = os.environ.get("LH_KERNEL", "auto").strip().lower()
if _choice not in ("auto", "native", "python"):
    raise ValueError(f"LH_KERNEL must be auto, native or python, got {_choice!r}")

_backend = _pure
_backend_name = "python"
if _choice != "python":
    try:
        from . import _native as _backend_mod
    except ImportError:
        if _choice == "native":
            raise ImportError(
                "LH_KERNEL=native but the compiled kernel is not built; "
                "run `python setup.py build_ext --inplace` or reinstall"
            ) from None
    else:
        _backend = _backend_mod
        _backend_name = "native"

run_flow = _backend.run_flow


def backend_name() -> str:
    """Name of the selected kernel backend ('native' or 'python')."""
    return _backend_name


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _native  # noqa: F401
    except ImportError:
        pass
    else:
        out.insert(0, "native")
    return out


def get_backend(name: str):
    """Fetch a specific backend module (for tests and benchmarks)."""
    if name == "python":
        return _pure
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
