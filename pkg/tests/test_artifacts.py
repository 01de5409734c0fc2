import json
from pathlib import Path

import numpy as np
import pytest

from eigencurve.artifacts import (canonical_json, eigenfunction_csv, fmt_float,
                                  read_loss_curve_csv, upper_bound_csv, write_atomic)


def test_fmt_float_roundtrips_exactly():
    rng = np.random.default_rng(0)
    values = list(rng.standard_normal(200)) + [0.0, 1.0, np.pi, 1e-308, 1e308, 0.1, 2.0 / 3.0]
    for v in values:
        assert float(fmt_float(v)) == v


def test_canonical_json_is_deterministic_and_parseable():
    doc = {"b": [1.0, 2.5, {"x": np.float64(0.1)}], "a": None, "flag": True, "n": 3}
    s1 = canonical_json(doc)
    s2 = canonical_json(doc)
    assert s1 == s2
    parsed = json.loads(s1)
    assert parsed["b"][2]["x"] == 0.1
    assert parsed["a"] is None
    assert parsed["n"] == 3


def test_write_atomic_replaces_content(tmp_path):
    p = tmp_path / "sub" / "file.txt"
    write_atomic(p, "one\n")
    write_atomic(p, "two\n")
    assert p.read_text() == "two\n"
    assert [q.name for q in (tmp_path / "sub").iterdir()] == ["file.txt"]


def test_upper_bound_csv_shape():
    text = upper_bound_csv([(1.0, 0.5), (2.0, 0.0)])
    assert text == "E,upper_bound\n1,0.5\n2,0\n"


def test_eigenfunction_csv_header_matches_dimension():
    coords = np.array([[0.0, 0.5, 1.0], [1.0, 0.25, 0.5]])
    text = eigenfunction_csv(coords, np.array([0.1, 0.2]))
    lines = text.splitlines()
    assert lines[0] == "x1,x2,x3,u"
    assert len(lines) == 3


def test_read_loss_curve_rejects_wrong_header(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("nope,header\n1,2\n")
    with pytest.raises(ValueError):
        read_loss_curve_csv(p)
