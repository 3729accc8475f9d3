import pytest
from hypothesis import given, strategies as st

from mostmotion.datacard import (
    INDEX_VALUES, CardEntry, DataCard, default_card, dump_datacard, load_datacard, lookup,
)
from mostmotion.trace_io import FormatError


def test_default_card_rows():
    card = default_card()
    assert card.entry("A", "1 - 2 Steps") == CardEntry("A", 3, "1 - 2 Steps")
    assert {e.index: e.label for e in card.group("A")} == {
        0: "≤ 2 in. (5 cm.)", 1: "Within Reach", 3: "1 - 2 Steps", 6: "3 - 4 Steps",
        10: "5 - 7 Steps", 16: "8 - 10 Steps"}
    assert sorted({e.index for e in card.group("G")}) == [0, 1, 3]
    assert sorted({e.index for e in card.group("P")}) == [0, 1, 3, 6]


@pytest.mark.parametrize("group, label, index", [
    ("B", "Stand", 10), ("B", "Sit", 10), ("G", "Hold", 0), ("A", "Within Reach", 1),
    ("P", "Lay Aside", 1), ("B", "Bend and Arise", 6), ("B", "Bend and Arise 50% occ", 3),
    ("B", "Fly", None), ("B", "stand", None), ("A", "within  reach", None),
])
def test_lookup(group, label, index):
    assert lookup(default_card(), group, label) == index


def test_lookup_normalizes_whitespace_only():
    assert lookup(default_card(), "A", "Within   Reach") == 1


def test_index_four_rejected():
    with pytest.raises(FormatError, match="index 4") as exc:
        load_datacard("A 1 Within Reach\nB 4 Jump\n")
    assert exc.value.line == 2


def test_duplicate_row_rejected():
    with pytest.raises(FormatError, match="duplicate") as exc:
        load_datacard("B 10 Sit\nB 10 Sit\n")
    assert exc.value.line == 2
    with pytest.raises(ValueError):
        DataCard((CardEntry("B", 10, "Sit"), CardEntry("B", 3, "Sit")))


@pytest.mark.parametrize("text", ["Z 1 Thing\n", "B x Sit\n", "B 10\n", b"B 10 \xff\n"])
def test_malformed_card(text):
    with pytest.raises(FormatError):
        load_datacard(text)


def test_card_round_trip():
    card = default_card()
    assert load_datacard(dump_datacard(card)) == card
    assert len(card) == 44


labels = st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")), min_size=1,
                 max_size=20).filter(lambda s: s.split() and not s.strip().startswith("#"))


@given(st.lists(st.tuples(st.sampled_from("ABGP"), st.sampled_from(INDEX_VALUES), labels),
                max_size=10, unique_by=lambda t: (t[0], " ".join(t[2].split()))))
def test_card_round_trip_property(rows):
    card = DataCard(tuple(CardEntry(*r) for r in rows))
    assert load_datacard(dump_datacard(card)) == card
