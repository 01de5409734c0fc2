"""Sweep of the spectral grid: warm-started training per grid point, minima
detection on the resulting loss curve, and local grid refinement of candidates.

The sweep runs left to right; each grid point warm-starts from its left
neighbor's trained parameters. Refinement rescans the bracket around a
candidate with a finer grid, warm-starting every point from the best snapshot
of the previous level with a fixed step budget (no early stopping), which keeps
the refined curve smooth in E so the argmin placement is trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import network
from .geometry import Domain
from .residuals import LossConfig
from .training import TrainConfig, train_at_E


class RefinementError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanConfig:
    e_lo: float = 3.0
    e_hi: float = 35.0
    grid_count: int = 129
    threshold: float = 0.5
    refine_depth: int = 2
    refine_factor: int = 4
    warm_start: bool = True
    sweep: str = "both"        # up | down | both

    def __post_init__(self):
        if not self.e_lo < self.e_hi:
            raise ValueError("scan window needs e_lo < e_hi")
        if self.grid_count < 2:
            raise ValueError("grid_count must be >= 2")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.refine_depth < 0:
            raise ValueError("refine_depth must be >= 0")
        if self.refine_factor < 2:
            raise ValueError("refine_factor must be >= 2")
        if self.sweep not in ("up", "down", "both"):
            raise ValueError("sweep must be up, down or both")


@dataclass(frozen=True)
class CurveEntry:
    E: float
    breakdown: object          # validation-batch LossBreakdown: the curve value
    train_breakdown: object    # training-batch LossBreakdown (diagnostic)
    steps_run: int
    stop_reason: str
    params_ref: str


@dataclass(frozen=True)
class LossCurve:
    entries: tuple

    def __len__(self):
        return len(self.entries)

    def totals(self) -> np.ndarray:
        """Curve totals; diverged entries count as +inf so detection skips them."""
        return np.array([np.inf if e.stop_reason == "diverged" else e.breakdown.total
                         for e in self.entries])

    def energies(self) -> np.ndarray:
        return np.array([e.E for e in self.entries])


@dataclass(frozen=True)
class EigenEstimate:
    E_hat: float
    loss_at_min: float
    grid_resolution: float
    refinement_level: int
    params_ref: str
    unbracketed: bool = False

    def __post_init__(self):
        if not self.grid_resolution > 0:
            raise ValueError("grid_resolution must be positive")


class SnapshotStore:
    """Content-addressed in-memory store of serialized parameter snapshots."""

    def __init__(self):
        self._blobs: dict[str, bytes] = {}

    def add(self, params: network.MlpParams) -> str:
        blob = network.serialize_params(params)
        ref = network.snapshot_ref(blob)
        self._blobs[ref] = blob
        return ref

    def get(self, ref: str) -> network.MlpParams:
        return network.deserialize_params(self._blobs[ref])

    def blob(self, ref: str) -> bytes:
        return self._blobs[ref]

    def refs(self):
        return tuple(self._blobs)


def make_grid(e_lo: float, e_hi: float, j: int) -> np.ndarray:
    """j equally spaced values covering [e_lo, e_hi], endpoints included."""
    if j < 2:
        raise ValueError("grid needs at least 2 points")
    if not e_lo < e_hi:
        raise ValueError("grid needs e_lo < e_hi")
    return np.linspace(float(e_lo), float(e_hi), int(j))


def _sweep(grid, op, domain, loss_cfg, train_cfg, seed, widths, warm_start, store):
    """One warm-start pass over the grid in the order given."""
    params = network.init_params(widths, seed)
    entries = []
    warm = False
    for E in grid:
        if not warm:
            params = network.init_params(widths, seed)
        budget = train_cfg.warm_max_steps if warm else train_cfg.max_steps
        params, report = train_at_E(params, float(E), op, domain, loss_cfg, train_cfg,
                                    seed, max_steps=budget)
        ref = store.add(params)
        entries.append(CurveEntry(E=float(E), breakdown=report.final,
                                  train_breakdown=report.final_train, steps_run=report.steps_run,
                                  stop_reason=report.stop_reason, params_ref=ref))
        ok = report.stop_reason != "diverged"
        warm = warm_start and ok
    return entries


def run_scan(grid, op, domain: Domain, loss_cfg: LossConfig, train_cfg: TrainConfig,
             seed: int, widths=None, warm_start: bool = True, store: SnapshotStore | None = None,
             sweep: str = "both"):
    """Warm-started training along the grid; returns (LossCurve, SnapshotStore).

    Within a pass, each grid point warm-starts from its predecessor's final
    parameters (when warm_start); after a diverged entry the next one falls
    back to fresh initialization. A warm chain lags behind eigenbranch
    crossings (it keeps tracking the branch it is on), so the default runs one
    ascending and one descending pass and keeps, per grid point, whichever
    reached the lower loss: every eigenvalue is approached from the side where
    its branch is the stable one.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if sweep not in ("up", "down", "both"):
        raise ValueError("sweep must be up, down or both")
    if widths is None:
        widths = (domain.dim, 32, 32, 1)
    if store is None:
        store = SnapshotStore()
    ascending = np.sort(grid)
    if sweep == "up":
        entries = _sweep(ascending, op, domain, loss_cfg, train_cfg, seed, widths,
                         warm_start, store)
    elif sweep == "down":
        entries = _sweep(ascending[::-1], op, domain, loss_cfg, train_cfg, seed, widths,
                         warm_start, store)[::-1]
    elif not warm_start:
        # without warm starts the two passes are identical; run one
        entries = _sweep(ascending, op, domain, loss_cfg, train_cfg, seed, widths,
                         False, store)
    else:
        up = _sweep(ascending, op, domain, loss_cfg, train_cfg, seed, widths, True, store)
        down = _sweep(ascending[::-1], op, domain, loss_cfg, train_cfg, seed, widths,
                      True, store)[::-1]
        entries = []
        for a, b in zip(up, down):
            a_total = np.inf if a.stop_reason == "diverged" else a.breakdown.total
            b_total = np.inf if b.stop_reason == "diverged" else b.breakdown.total
            entries.append(a if a_total <= b_total else b)
    return LossCurve(entries=tuple(entries)), store


def detect_minima(curve: LossCurve, threshold: float):
    """Interior indices of local minima below the threshold.

    A plateau counts once, at its leftmost point: total(i) < total(i-1) and
    total(i) <= total(i+1). Endpoints are never returned.
    """
    if len(curve) < 3:
        raise ValueError("minima detection needs a curve of length >= 3")
    t = curve.totals()
    return [i for i in range(1, len(t) - 1)
            if t[i] < t[i - 1] and t[i] <= t[i + 1] and t[i] < threshold]


def _train_level(center, half_width, spacing, snap, op, domain, loss_cfg, train_cfg, seed):
    """Train every point of one refinement level from the same snapshot."""
    refine_cfg = replace(train_cfg, learning_rate=train_cfg.refine_lr,
                         lr_end_frac=train_cfg.refine_lr_end_frac,
                         lr_hold_frac=train_cfg.refine_lr_hold_frac)
    offsets = np.arange(-round(half_width / spacing), round(half_width / spacing) + 1)
    energies = center + spacing * offsets
    results = []
    for E in energies:
        params, report = train_at_E(snap, float(E), op, domain, loss_cfg, refine_cfg, seed,
                                    max_steps=train_cfg.refine_max_steps, early_stop=False)
        results.append((float(E), report.final.total, params))
    return results


def refine(curve: LossCurve, i0: int, op, domain: Domain, loss_cfg: LossConfig,
           train_cfg: TrainConfig, scan_cfg: ScanConfig, seed: int,
           store: SnapshotStore) -> EigenEstimate:
    """Recursively rescan the bracket around candidate i0 with a finer grid."""
    if not 0 < i0 < len(curve) - 1:
        raise ValueError("refinement candidate must be an interior grid index")
    entries = curve.entries
    spacing = entries[i0].E - entries[i0 - 1].E
    center = entries[i0].E
    best_total = entries[i0].breakdown.total
    best_ref = entries[i0].params_ref
    if scan_cfg.refine_depth == 0:
        return EigenEstimate(E_hat=center, loss_at_min=best_total, grid_resolution=spacing,
                             refinement_level=0, params_ref=best_ref)
    snap = store.get(best_ref)
    unbracketed = False
    for _ in range(scan_cfg.refine_depth):
        new_spacing = spacing / scan_cfg.refine_factor
        results = _train_level(center, spacing, new_spacing, snap, op, domain,
                               loss_cfg, train_cfg, seed)
        k = int(np.argmin([r[1] for r in results]))
        if k in (0, len(results) - 1):
            # minimum migrated to a bracket endpoint: widen once around it
            results = _train_level(results[k][0], spacing, new_spacing, snap, op, domain,
                                   loss_cfg, train_cfg, seed)
            k = int(np.argmin([r[1] for r in results]))
            if k in (0, len(results) - 1):
                unbracketed = True
        center, best_total, snap = results[k]
        spacing = new_spacing
    if best_total >= scan_cfg.threshold:
        raise RefinementError(
            f"refined minimum {best_total:.6g} at E={center:.6g} is not below the "
            f"detection threshold {scan_cfg.threshold:.6g}")
    return EigenEstimate(E_hat=center, loss_at_min=best_total, grid_resolution=spacing,
                         refinement_level=scan_cfg.refine_depth,
                         params_ref=store.add(snap), unbracketed=unbracketed)
