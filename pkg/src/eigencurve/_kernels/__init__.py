"""Kernel backend selection.

The compiled Cython extension is preferred when importable; the numpy
implementation is the fallback. Set EIGENCURVE_BACKEND=python|compiled to force
one (``compiled`` raises if the extension is missing). Both backends satisfy
the same contract and agree to rounding error; results are bit-reproducible
within a backend.
"""

from __future__ import annotations

import os

from . import numpy_ref

_choice = os.environ.get("EIGENCURVE_BACKEND", "auto")

if _choice == "python":
    active = numpy_ref
elif _choice == "compiled":
    from . import _core as active  # type: ignore[no-redef]
elif _choice == "auto":
    try:
        from . import _core as active  # type: ignore[no-redef]
    except ImportError:
        active = numpy_ref
else:
    raise RuntimeError(f"EIGENCURVE_BACKEND must be auto, python or compiled, not {_choice!r}")

BACKEND_NAME: str = active.NAME

forward = active.forward
backward = active.backward
