import numpy as np
import pytest

import eigencurve.scan as scan_mod
from eigencurve import network
from eigencurve.geometry import Ball
from eigencurve.residuals import LinearOperator, LossBreakdown, LossConfig, Potential, assemble_loss
from eigencurve.scan import (CurveEntry, EigenEstimate, LossCurve, RefinementError, ScanConfig,
                             SnapshotStore, detect_minima, make_grid, refine, run_scan)
from eigencurve.training import TrainConfig, train_batches

FAST_LOSS = LossConfig(mu0=1.0, n_train=48, n_val=32)
FAST_TRAIN = TrainConfig(max_steps=150, warm_max_steps=60, refine_max_steps=60)
TINY = (2, 6, 6, 1)


def test_make_grid_examples():
    assert make_grid(0.0, 1.0, 2).tolist() == [0.0, 1.0]
    g = make_grid(44.0, 55.0, 12)
    assert np.allclose(np.diff(g), 1.0)
    g = make_grid(3.0, 35.0, 129)
    diffs = np.diff(g)
    assert np.abs(diffs - 0.25).max() == 0.0  # 0.25 is exactly representable
    with pytest.raises(ValueError):
        make_grid(35.0, 3.0, 10)
    with pytest.raises(ValueError):
        make_grid(0.0, 1.0, 1)


def _fake_curve(totals, e0=1.0, spacing=0.5):
    entries = []
    for i, t in enumerate(totals):
        bd = LossBreakdown(total=float(t), residual_term=float(t), penalty_term=0.0,
                           norm_estimate=1.0, mu_used=1.0)
        entries.append(CurveEntry(E=e0 + spacing * i, breakdown=bd, train_breakdown=bd,
                                  steps_run=1, stop_reason="max_steps", params_ref=f"ref{i}"))
    return LossCurve(entries=tuple(entries))


def test_detect_minima_examples():
    assert detect_minima(_fake_curve([5, 1, 4]), 2.0) == [1]
    assert detect_minima(_fake_curve([5, 1, 4]), 0.5) == []
    assert detect_minima(_fake_curve([5, 1, 1, 4]), 2.0) == [1]  # plateau leftmost
    assert detect_minima(_fake_curve([1, 2, 3]), 10.0) == []     # endpoints never count
    assert detect_minima(_fake_curve([3, 2, 1]), 10.0) == []
    with pytest.raises(ValueError):
        detect_minima(_fake_curve([1, 2]), 1.0)


def test_detect_minima_threshold_only_filters():
    totals = [9, 3, 7, 2, 8, 4, 6]
    curve = _fake_curve(totals)
    all_minima = detect_minima(curve, 1e9)
    assert all_minima == [1, 3, 5]
    for eps in (2.5, 3.5, 5.0):
        got = detect_minima(curve, eps)
        assert got == [i for i in all_minima if totals[i] < eps]


def test_detect_minima_skips_diverged():
    curve = _fake_curve([5, 1, 4])
    entries = list(curve.entries)
    entries[1] = CurveEntry(E=entries[1].E, breakdown=entries[1].breakdown,
                            train_breakdown=None, steps_run=1, stop_reason="diverged",
                            params_ref="x")
    curve = LossCurve(entries=tuple(entries))
    assert detect_minima(curve, 10.0) == []
    assert curve.totals()[1] == np.inf


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(e_lo=5.0, e_hi=5.0)
    with pytest.raises(ValueError):
        ScanConfig(grid_count=1)
    with pytest.raises(ValueError):
        ScanConfig(threshold=0.0)
    with pytest.raises(ValueError):
        ScanConfig(refine_factor=1)
    with pytest.raises(ValueError):
        EigenEstimate(E_hat=1.0, loss_at_min=0.1, grid_resolution=0.0,
                      refinement_level=0, params_ref="r")


def test_run_scan_single_point():
    disk = Ball(2, 1.0)
    op = LinearOperator(Potential("zero"))
    curve, store = run_scan([6.0], op, disk, FAST_LOSS, FAST_TRAIN, seed=5, widths=TINY)
    assert len(curve) == 1
    assert curve.entries[0].params_ref in store.refs()


def test_run_scan_entries_reproducible_from_snapshots():
    disk = Ball(2, 1.0)
    op = LinearOperator(Potential("zero"))
    grid = [5.0, 5.5, 6.0]
    curve, store = run_scan(grid, op, disk, FAST_LOSS, FAST_TRAIN, seed=7, widths=TINY)
    train_batch, val_batch = train_batches(disk, FAST_LOSS, 7)
    for entry in curve.entries:
        params = store.get(entry.params_ref)
        assert assemble_loss(params, val_batch, op, entry.E, FAST_LOSS, disk) == entry.breakdown
        assert assemble_loss(params, train_batch, op, entry.E, FAST_LOSS,
                             disk) == entry.train_breakdown


def test_run_scan_cold_entries_permutation_independent():
    disk = Ball(2, 1.0)
    op = LinearOperator(Potential("zero"))
    grid = [5.0, 6.0, 7.0]
    a, _ = run_scan(grid, op, disk, FAST_LOSS, FAST_TRAIN, seed=3, widths=TINY,
                    warm_start=False)
    b, _ = run_scan(grid[::-1], op, disk, FAST_LOSS, FAST_TRAIN, seed=3, widths=TINY,
                    warm_start=False)
    for ea in a.entries:
        eb = next(e for e in b.entries if e.E == ea.E)
        assert ea.breakdown == eb.breakdown
        assert ea.params_ref == eb.params_ref


def test_run_scan_deterministic():
    disk = Ball(2, 1.0)
    op = LinearOperator(Potential("zero"))
    grid = make_grid(5.0, 6.0, 3)
    a, sa = run_scan(grid, op, disk, FAST_LOSS, FAST_TRAIN, seed=13, widths=TINY)
    b, sb = run_scan(grid, op, disk, FAST_LOSS, FAST_TRAIN, seed=13, widths=TINY)
    for ea, eb in zip(a.entries, b.entries):
        assert ea.breakdown == eb.breakdown
        assert ea.params_ref == eb.params_ref
    assert set(sa.refs()) == set(sb.refs())


def test_refine_depth_zero():
    curve = _fake_curve([5, 0.2, 4], e0=5.0, spacing=0.5)
    store = SnapshotStore()
    cfg = ScanConfig(e_lo=5.0, e_hi=6.0, grid_count=3, threshold=1.0, refine_depth=0)
    est = refine(curve, 1, None, None, None, None, cfg, 0, store)
    assert est.E_hat == 5.5
    assert est.grid_resolution == 0.5
    assert est.refinement_level == 0
    assert est.loss_at_min == pytest.approx(0.2)
    with pytest.raises(ValueError):
        refine(curve, 0, None, None, None, None, cfg, 0, store)


class _StubReport:
    def __init__(self, total):
        bd = LossBreakdown(total=total, residual_term=total, penalty_term=0.0,
                           norm_estimate=1.0, mu_used=1.0)
        self.final = bd
        self.final_train = bd


def _stub_trainer(loss_fn):
    params = network.init_params(TINY, seed=0)

    def fake_train(init, E, op, domain, loss_cfg, train_cfg, seed, max_steps=None,
                   early_stop=True):
        return params, _StubReport(float(loss_fn(E)))

    return fake_train


def test_refine_tracks_quadratic_minimum(monkeypatch):
    true_e = 5.62
    monkeypatch.setattr(scan_mod, "train_at_E", _stub_trainer(lambda E: (E - true_e) ** 2))
    curve = _fake_curve([1.0, 0.02, 0.8], e0=5.0, spacing=0.5)
    store = SnapshotStore()
    store._blobs["ref1"] = network.serialize_params(network.init_params(TINY, seed=0))
    cfg = ScanConfig(e_lo=5.0, e_hi=6.0, grid_count=3, threshold=1.0,
                     refine_depth=2, refine_factor=4)
    est = refine(curve, 1, None, None, None, FAST_TRAIN, cfg, 0, store)
    assert est.grid_resolution == pytest.approx(0.5 / 16)
    assert abs(est.E_hat - true_e) <= est.grid_resolution
    assert not est.unbracketed
    assert est.refinement_level == 2


def test_refine_widens_and_flags_unbracketed(monkeypatch):
    # loss decreasing to the right of the bracket: the minimum escapes once,
    # the bracket widens once, then the estimate is flagged
    monkeypatch.setattr(scan_mod, "train_at_E", _stub_trainer(lambda E: (E - 9.0) ** 2))
    curve = _fake_curve([0.9, 0.5, 0.3], e0=5.0, spacing=0.5)
    store = SnapshotStore()
    store._blobs["ref1"] = network.serialize_params(network.init_params(TINY, seed=0))
    cfg = ScanConfig(e_lo=5.0, e_hi=6.0, grid_count=3, threshold=20.0,
                     refine_depth=1, refine_factor=4)
    est = refine(curve, 1, None, None, None, FAST_TRAIN, cfg, 0, store)
    assert est.unbracketed
    assert est.E_hat > 5.5


def test_refine_raises_when_floor_exceeds_threshold(monkeypatch):
    monkeypatch.setattr(scan_mod, "train_at_E", _stub_trainer(lambda E: 5.0 + (E - 5.5) ** 2))
    curve = _fake_curve([7.0, 5.0, 7.0], e0=5.0, spacing=0.5)
    store = SnapshotStore()
    store._blobs["ref1"] = network.serialize_params(network.init_params(TINY, seed=0))
    cfg = ScanConfig(e_lo=5.0, e_hi=6.0, grid_count=3, threshold=0.5,
                     refine_depth=1, refine_factor=4)
    with pytest.raises(RefinementError):
        refine(curve, 1, None, None, None, FAST_TRAIN, cfg, 0, store)


def test_snapshot_store_roundtrip():
    store = SnapshotStore()
    p = network.init_params(TINY, seed=4)
    ref = store.add(p)
    q = store.get(ref)
    assert np.array_equal(network.params_to_vector(p), network.params_to_vector(q))
    assert store.add(q) == ref  # content-addressed: identical params, identical ref
