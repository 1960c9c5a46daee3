import csv
import json
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab import export
from harnack_lab.errors import GridError
from harnack_lab.fields import GridSpec, ScalarField
from harnack_lab.report import EstimateReport, field_report


def _report(margins, mask=None, tol=1e-2):
    m = np.asarray(margins, float)
    mask = np.ones(m.size, bool) if mask is None else mask
    return EstimateReport("demo", {"t": 0.5}, m, np.arange(m.size, dtype=float)[:, None], mask, tol)


def test_verdict_uses_only_masked_entries():
    r = _report([0.3, -0.5, -0.005], mask=np.array([True, False, True]))
    assert r.checked == 2 and r.excluded_count == 1
    assert r.min_margin == -0.005 and r.passed
    assert r.argmin_location == [2.0]
    assert not _report([0.3, -0.02]).passed


def test_empty_report_fails():
    r = _report([1.0], mask=np.array([False]))
    assert not r.passed and np.isnan(r.min_margin) and r.argmin_location == []


def test_json_and_csv_roundtrip(tmp_path):
    r = _report([0.1, -0.2], tol=0.5)
    d = json.loads(r.to_json(tmp_path / "r.json"))
    assert d["pass"] and d["min_margin"] == -0.2 and d["checked"] == 2
    r.write_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["x0", "observed", "margin", "checked"] and float(rows[2][2]) == -0.2
    assert "PASS demo" in r.summary_line()


def test_scaled_report():
    r = _report([0.1, -0.004])
    s = r.scaled(2.0, "twice")
    assert s.name == "twice" and s.tolerance == 2 * r.tolerance
    assert np.array_equal(s.margin, 2 * r.margin) and s.passed == r.passed


def test_field_report_locations():
    grid = GridSpec.cube(2, 2.0, 9)
    f = ScalarField(grid, np.ones(grid.shape))
    r = field_report("f", {}, f, grid.interior_mask(2))
    assert r.locations.shape == (81, 2) and r.checked == 25


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.sampled_from(["box", "periodic"]), st.floats(-50, 50))
def test_raw_roundtrip_is_bitwise(dim, topology, t):
    grid = GridSpec.cube(dim, 1.5, 8, topology)
    vals = np.random.default_rng(dim).normal(size=grid.shape)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "f.hlab")
        export.write_raw(ScalarField(grid, vals), path, t)
        back, tb = export.read_raw(path)
    assert back.grid == grid and tb == t
    assert np.array_equal(back.values, vals)


def test_csv_export_roundtrip(tmp_path):
    grid = GridSpec(2, (1.0, 2.0), (8, 9), "periodic")
    vals = np.random.default_rng(0).uniform(size=grid.shape)
    export.write_csv(ScalarField(grid, vals), tmp_path / "f.csv")
    assert np.array_equal(export.read_csv_values(tmp_path / "f.csv"), vals.ravel())


def test_raw_rejects_corrupt_files(tmp_path):
    grid = GridSpec.cube(1, 1.0, 16)
    path = tmp_path / "f.hlab"
    export.write_raw(ScalarField(grid, np.zeros(16)), path)
    blob = path.read_bytes()
    for bad in (b"XXXX" + blob[4:], blob[:40], blob[:-8]):
        path.write_bytes(bad)
        with pytest.raises(GridError):
            export.read_raw(path)
