import json

import pytest
from hypothesis import given, strategies as st

from acadrisk import DomainError, FeatureSchema, FeatureSpec, SchemaError, default_schema, derive_label
from acadrisk.errors import IngestionError
from acadrisk.schema import encode_value, interpret, load_schema, save_schema

PRUNED = {"Age", "BrthPrvnce", "Eth", "Hrsce", "Gurdn", "Dorm", "Awrds", "Hair", "Tattoo", "CmpsLn"}


def test_default_schema_has_36_variables_and_ten_pruned():
    schema = default_schema()
    assert len(schema.specs) == 36
    assert set(schema.pruned_names) == PRUNED
    assert len(schema.active_names) == 26
    assert not set(schema.active_names) & PRUNED


def test_every_variable_has_a_kind_and_valid_categories():
    for spec in default_schema().specs:
        if spec.is_categorical:
            assert len(spec.categories) >= 2
        else:
            assert spec.categories == ()


@pytest.mark.parametrize("gpa,label", [(3.2, 0), (1.8, 1), (2.0, 0), (0.0, 1), (5.0, 0), (1.99, 1)])
def test_derive_label_examples(gpa, label):
    assert derive_label(gpa) == label


@pytest.mark.parametrize("gpa", [-0.01, 5.01, float("nan")])
def test_derive_label_rejects_out_of_range(gpa):
    with pytest.raises(DomainError, match="row=7"):
        derive_label(gpa, row=7)


def test_derive_label_on_the_whole_grid():
    labels = [derive_label(k / 100) for k in range(501)]
    assert labels == [int(k < 200) for k in range(501)]
    assert all(a >= b for a, b in zip(labels, labels[1:]))


def test_seat_uses_one_based_codes():
    seat = default_schema()["Seat"]
    assert encode_value("rear", seat) == 3
    assert encode_value("front", seat) == 1
    assert encode_value("middle", seat) == 2


def test_numeric_encoding_parses_reals():
    assert encode_value("395.0", default_schema()["ExmSumN"]) == 395.0
    assert encode_value(" 12 ", default_schema()["ExmSumN"]) == 12.0


@pytest.mark.parametrize("raw,name", [("back", "Seat"), ("abc", "ExmSumN"), ("inf", "ExamEnN")])
def test_bad_cells_raise_ingestion_errors(raw, name):
    with pytest.raises(IngestionError):
        encode_value(raw, default_schema()[name])


@given(st.data())
def test_categorical_encode_decode_round_trip(data):
    cats = [s for s in default_schema().specs if s.is_categorical]
    spec = data.draw(st.sampled_from(cats))
    label = data.draw(st.sampled_from(spec.categories))
    assert spec.decode(spec.encode(label)) == label


def test_spec_invariants_are_enforced():
    with pytest.raises(SchemaError):
        FeatureSpec("x", "categorical-ordinal", ("only",))
    with pytest.raises(SchemaError):
        FeatureSpec("x", "numeric", ("a", "b"))
    with pytest.raises(SchemaError):
        FeatureSpec("x", "categorical-ordinal", ("a", "b"), codes=(2, 1))
    with pytest.raises(SchemaError):
        FeatureSchema((FeatureSpec("x", "numeric"), FeatureSpec("x", "numeric")))


def test_schema_json_round_trip(tmp_path):
    schema = default_schema()
    save_schema(schema, tmp_path / "s.json")
    again = load_schema(tmp_path / "s.json")
    assert again == schema
    assert again.fingerprint() == schema.fingerprint()
    assert json.loads((tmp_path / "s.json").read_text())


def test_with_pruned_drops_extra_columns_only():
    schema = default_schema().with_pruned(["Class"])
    assert "Class" not in schema.active_names
    assert len(schema.active_names) == 25
    with pytest.raises(SchemaError):
        default_schema().with_pruned(["NoSuchThing"])


def test_interpretation_uses_templates():
    schema = default_schema()
    assert interpret(schema["Seat"], 3) == "Sits at the rear of the classroom"
    text = interpret(schema["EgnCnt"], 0.002, 0.05)
    assert "Quality of academic partners" in text and "0.002" in text and "5.0%" in text
