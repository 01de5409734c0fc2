"""Eigenvalues of elliptic operators from neural-network loss curves.

A trial function (a small tanh network times a polynomial boundary factor) is
trained to minimize the squared PDE residual plus a normalization penalty at
each point of a spectral grid; eigenvalues appear as deep local minima of the
resulting loss curve and are sharpened by local grid refinement. Built-in
closed-form and finite-difference spectra validate the results.
"""

from ._kernels import BACKEND_NAME

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "__version__"]
