import json

import numpy as np
import pytest

from lcklab.chart_calculus import GridSpec, ScalarField
from lcklab.fieldio import (
    FormatError,
    dump_field,
    dump_problem,
    format_report,
    load_field,
    load_problem,
    read_field,
    write_field,
)
from lcklab.transverse_ma import SolverConfig


@pytest.fixture
def field():
    return ScalarField.from_expression("0.3*h1 + 0.1*re_w2", GridSpec(17, 1.25))


def test_field_round_trip_is_exact(field, tmp_path):
    back = load_field(dump_field(field))
    assert back.grid == field.grid
    assert np.array_equal(back.values, field.values)
    write_field(field, tmp_path / "u.lckf")
    assert np.array_equal(read_field(tmp_path / "u.lckf").values, field.values)
    assert dump_field(back) == dump_field(field)


def test_field_header(field):
    assert dump_field(field).splitlines()[0] == "LCKF1 2 17 1.25"


@pytest.mark.parametrize("mutate, message", [
    (lambda t: t.replace("LCKF1", "LCKF2", 1), "magic"),
    (lambda t: "\n".join(t.splitlines()[:-3]), "truncated"),
    (lambda t: t.replace("\n0 1 ", "\n0 2 ", 1), "indices"),
    (lambda t: t + "0 0 1\n", "trailing"),
    (lambda t: t.replace("LCKF1 2", "LCKF1 3", 1), "2 charts"),
    (lambda t: "", "empty"),
])
def test_field_rejections(field, mutate, message):
    with pytest.raises(FormatError, match=message):
        load_field(mutate(dump_field(field)))


def test_field_rejects_non_finite(field):
    lines = dump_field(field).splitlines()
    lines[5] = "0 4 nan"
    with pytest.raises(FormatError, match="non-finite"):
        load_field("\n".join(lines))


def test_problem_round_trip(field):
    cfg = SolverConfig(tol_newton=1e-9, max_iter=7)
    pf = load_problem(dump_problem(field, cfg))
    assert pf.config == cfg
    assert pf.grid == field.grid
    assert np.array_equal(pf.f.values, field.values)


def test_problem_rejections(field):
    text = dump_problem(field)
    with pytest.raises(FormatError, match="LCKMA1"):
        load_problem(text.replace("LCKMA1", "LCKMA0"))
    with pytest.raises(FormatError, match="unknown config key"):
        load_problem(text + "colour=3\n")
    with pytest.raises(FormatError, match="inconsistent"):
        load_problem(text.replace("grid N=17", "grid N=18"))
    with pytest.raises(FormatError, match="no grid line"):
        load_problem("\n".join(l for l in text.splitlines() if not l.startswith("grid ")))


def test_report_format_is_json_and_stable():
    rep = {"command": "x", "value": 0.1, "n": 3, "ok": True, "list": [1.5, 2], "none": None,
           "nested": {"b": 1, "a": float("nan")}}
    text = format_report(rep)
    assert text == format_report(dict(rep))
    data = json.loads(text)
    assert list(data) == list(rep)
    assert data["value"] == 0.1 and data["nested"]["a"] == "nan"
    assert "0.10000000000000001" in text
