"""Document round trips, the Storm importer, and report rendering."""

from __future__ import annotations

import csv
import io
import json

import pytest

from nwrkit.core_model import ModelError, StateV, Valuation, validate_model
from nwrkit.model_io import (
    ReductionReport,
    document_to_model,
    dumps_model,
    dumps_report,
    import_storm_json,
    model_to_document,
    read_model,
    write_model,
    write_report,
)
from nwrkit.oracle import sample_valuation, solve_exact


def test_round_trip_all_fixture_models(
    unfair_chain, two_coins_mdp, dead_branch_pmdp, dead_branch_tp
):
    for m in (unfair_chain, two_coins_mdp, dead_branch_pmdp, dead_branch_tp):
        m2 = document_to_model(model_to_document(m))
        assert validate_model(m2) == []
        assert dumps_model(m2) == dumps_model(m)
        assert m2.states == m.states
        assert m2.target_weight == m.target_weight
        assert set(m2.choices) == set(m.choices)


def test_round_trip_preserves_values(two_coins_mdp):
    from fractions import Fraction

    m2 = document_to_model(model_to_document(two_coins_mdp))
    val = Valuation({0: Fraction(3, 5), 1: Fraction(7, 25)})
    assert solve_exact(m2, val).values == solve_exact(two_coins_mdp, val).values


def test_tp_documents_omit_polynomials(dead_branch_tp):
    doc = model_to_document(dead_branch_tp)
    assert doc["params"] == []
    for choice in doc["choices"]:
        for trans in choice["transitions"]:
            assert "poly" not in trans


def test_file_round_trip(tmp_path, two_coins_mdp):
    path = tmp_path / "m.json"
    write_model(two_coins_mdp, path)
    m2 = read_model(path)
    assert dumps_model(m2) == dumps_model(two_coins_mdp)


def test_document_rejections():
    base = {
        "version": 1,
        "name": "x",
        "subclass": "tpmdp",
        "params": [],
        "states": [{"name": "p"}, {"name": "fin", "target_weight": "1"},
                   {"name": "fail", "target_weight": "0", "fail": True}],
        "choices": [{"from": 0, "action": "a",
                     "transitions": [{"to": 1}, {"to": 2}]}],
    }
    document_to_model(base)  # sanity: the template itself is valid

    for mutate in (
        lambda d: d.update(version=2),
        lambda d: d.update(subclass="mdp"),
        lambda d: d["states"].append({"no-name": True}),
        lambda d: d["choices"][0].update({"from": 9}),
        lambda d: d["choices"][0]["transitions"].append({"to": 99}),
        lambda d: d["choices"].append(dict(d["choices"][0])),
        lambda d: d["choices"][0]["transitions"][0].update(poly="x0"),
    ):
        doc = json.loads(json.dumps(base))
        mutate(doc)
        with pytest.raises(ModelError):
            document_to_model(doc)


def test_storm_import_small_chain():
    storm = {
        "states": [
            {"id": 0, "labels": [], "transitions": [
                {"action": "a", "dest": [{"id": 1, "prob": "1/2"},
                                          {"id": 2, "prob": "1/2"}]},
            ]},
            {"id": 1, "labels": ["target"]},
            {"id": 2, "labels": ["fail"]},
        ]
    }
    m = import_storm_json(storm)
    assert validate_model(m) == []
    assert m.num_states == 3
    assert m.target_weight[1] == 1 and m.target_weight[2] == 0
    values = solve_exact(m, Valuation({}))
    from fractions import Fraction

    assert values.values[StateV(0)] == Fraction(1, 2)


def test_storm_import_synthesizes_missing_fail():
    storm = [
        {"id": 0, "transitions": [{"dest": [{"id": 1, "prob": 1}]}]},
        {"id": 1, "labels": ["goal"]},
    ]
    m = import_storm_json(storm)
    assert validate_model(m) == []
    assert m.states[m.fail] == "fail"


def test_read_model_detects_storm_layout(tmp_path):
    storm = {
        "states": [
            {"id": 0, "transitions": [{"dest": [{"id": 1, "prob": 1}]}]},
            {"id": 1, "labels": ["fin"]},
        ]
    }
    path = tmp_path / "storm.json"
    path.write_text(json.dumps(storm), encoding="utf-8")
    m = read_model(path)
    assert m.num_states == 3  # fail synthesized


# --- reports ----------------------------------------------------------------


def make_report():
    return ReductionReport(
        name="example",
        original=(10, 12),
        preprocessed=(8, 9),
        reduced=(5, 6),
        seconds={"preprocess": 0.25, "reduce": 0.5},
        shrink_curve=[(6, 7), (5, 6)],
    )


def test_csv_report_header_and_row():
    text = dumps_report([make_report()], format="csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == [
        "name",
        "states_original",
        "choices_original",
        "states_preprocessed",
        "choices_preprocessed",
        "states_reduced",
        "choices_reduced",
        "seconds",
    ]
    assert rows[1] == ["example", "10", "12", "8", "9", "5", "6", "0.750"]


def test_json_report_includes_shrink_curve(tmp_path):
    path = tmp_path / "r.json"
    write_report(make_report(), path, format="json")
    payload = json.loads(path.read_text())
    assert payload[0]["name"] == "example"
    assert payload[0]["shrink_curve"] == [[6, 7], [5, 6]]


def test_report_rejects_growing_counts():
    with pytest.raises(ValueError):
        ReductionReport(
            name="bad", original=(5, 5), preprocessed=(6, 5), reduced=(4, 4)
        )


def test_unknown_report_format():
    with pytest.raises(ValueError):
        dumps_report([make_report()], format="xml")
