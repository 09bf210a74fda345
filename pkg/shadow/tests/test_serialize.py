import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shadowpred import serialize
from shadowpred.serialize import (
    SEPARATOR,
    OversizedExample,
    ShadowExample,
    build_examples,
    deserialize,
    serialize_example,
)


def test_golden_layout():
    ex = serialize_example("c", "i", "o", 1, "t1")
    assert ex.serialized == "c [SEP] i [SEP] o"
    assert ex.triple_id == "t1"
    assert ex.success == 1


def test_separator_constant():
    assert SEPARATOR == " [SEP] "


def test_separator_appears_exactly_twice():
    ex = serialize_example("def f(x):\n    return x", "3", "3", 0, "t")
    assert ex.serialized.count(SEPARATOR) == 2


def test_short_example_untouched():
    code = "print(1)"
    ex = serialize_example(code, "a", "b", 1, "t")
    assert ex.serialized == code + SEPARATOR + "a" + SEPARATOR + "b"


def test_truncation_trims_code_tail_only():
    code = "x" * 100
    ex = serialize_example(code, "IN", "OUT", 1, "t", max_chars=40)
    got_code, got_in, got_out = deserialize(ex.serialized)
    assert got_in == "IN" and got_out == "OUT"
    assert got_code == code[: len(got_code)]  # a prefix, tail removed
    assert len(ex.serialized) == 40  # budget used exactly when code overflows


def test_truncation_total_never_exceeds_limit():
    for n in range(0, 60):
        ex = serialize_example("y" * n, "ab", "cd", 0, "t", max_chars=30)
        assert len(ex.serialized) <= 30


def test_code_can_be_trimmed_to_nothing():
    ex = serialize_example("zzz", "123456", "789", 1, "t", max_chars=23)
    # fixed part is 14 + 9 = 23, so the code budget is exactly zero
    assert ex.serialized == SEPARATOR + "123456" + SEPARATOR + "789"


def test_oversized_input_output_raises():
    with pytest.raises(OversizedExample, match="t9"):
        serialize_example("", "x" * 300, "y" * 300, 1, "t9", max_chars=512)


def test_oversized_by_one_char():
    # fixed = 14 + 5 + 4 = 23 > 22
    with pytest.raises(OversizedExample):
        serialize_example("", "abcde", "fghi", 0, "t", max_chars=22)


def test_success_must_be_binary():
    with pytest.raises(ValueError, match="success"):
        ShadowExample("t", "a [SEP] b [SEP] c", 2)


def test_deserialize_round_trip():
    ex = serialize_example("code body", "in", "out", 1, "t")
    assert deserialize(ex.serialized) == ("code body", "in", "out")


def test_deserialize_rejects_wrong_part_count():
    with pytest.raises(ValueError, match="separators"):
        deserialize("only one part")
    with pytest.raises(ValueError, match="separators"):
        deserialize("a [SEP] b [SEP] c [SEP] d")


clean_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80
).filter(lambda s: SEPARATOR not in s)


@given(code=clean_text, x=clean_text, y=clean_text)
def test_round_trip_property(code, x, y):
    ex = serialize_example(code, x, y, 1, "t", max_chars=4096)
    assert deserialize(ex.serialized) == (code, x, y)


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def test_read_dataset_rows(tmp_path):
    p = tmp_path / "dataset.jsonl"
    _write_jsonl(p, [{"triple_id": "a", "code": "x"}, {"triple_id": "b", "code": "y"}])
    rows = serialize.read_dataset_rows(p)
    assert [r["triple_id"] for r in rows] == ["a", "b"]


def test_read_success_labels_filters_by_model(tmp_path):
    p = tmp_path / "records.jsonl"
    _write_jsonl(
        p,
        [
            {"triple_id": "a", "model_id": "m1", "success": 1},
            {"triple_id": "b", "model_id": "m1", "success": 0},
            {"triple_id": "a", "model_id": "m2", "success": 0},
        ],
    )
    assert serialize.read_success_labels(p, "m1") == {"a": 1, "b": 0}
    assert serialize.read_success_labels(p, "m2") == {"a": 0}
    assert serialize.read_success_labels(p, "m3") == {}


def _row(triple_id, code="pass", x="1", y="2"):
    return {"triple_id": triple_id, "code": code, "input": x, "output": y}


def test_build_examples_joins_on_triple_id():
    rows = [_row("a"), _row("b"), _row("c")]
    examples, dropped = build_examples(rows, {"a": 1, "c": 0})
    assert [ex.triple_id for ex in examples] == ["a", "c"]
    assert [ex.success for ex in examples] == [1, 0]
    assert dropped == []


def test_build_examples_drops_oversized_and_reports():
    rows = [_row("ok"), _row("big", x="x" * 600)]
    examples, dropped = build_examples(rows, {"ok": 1, "big": 0}, max_chars=512)
    assert [ex.triple_id for ex in examples] == ["ok"]
    assert dropped == ["big"]


def test_build_examples_skips_unjudged_silently():
    rows = [_row("a"), _row("unjudged")]
    examples, dropped = build_examples(rows, {"a": 0})
    assert [ex.triple_id for ex in examples] == ["a"]
    assert dropped == []
