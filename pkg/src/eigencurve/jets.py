"""Second-order jets: (value, gradient, Hessian) of a scalar field at a point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Jet2:
    """Value, spatial gradient and spatial Hessian of a scalar field at one point."""

    value: float
    gradient: np.ndarray  # shape (d,)
    hessian: np.ndarray   # shape (d, d), symmetric

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]

    @property
    def laplacian(self) -> float:
        return float(np.trace(self.hessian))

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=float)
        h = np.asarray(self.hessian, dtype=float)
        if h.shape != (g.shape[0], g.shape[0]):
            raise ValueError(f"hessian shape {h.shape} does not match gradient dimension {g.shape[0]}")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", h)
