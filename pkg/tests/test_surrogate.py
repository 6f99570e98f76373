import datetime as dt
import random

import pytest
from hypothesis import given, strategies as st

from deidkit.corpus import Document, make_annotation
from deidkit.surrogate import (
    DateShift,
    SurrogatePlan,
    SurrogateResources,
    UnparseableDate,
    apply_corpus,
    apply_plan,
    cap_age,
    char_classes,
    infer_date_format,
    leak_scan,
    make_plan,
    parse_date,
    sattolo,
    shift_date,
    substitute_charclass,
)

from oracles import surrogate_violations


# --- dates -----------------------------------------------------------------


@pytest.mark.parametrize("s,fmt", [
    ("12 nov. 2018", "%d %b. %Y"),
    ("2016", "%Y"),
    ("26-04-2017", "%d-%m-%Y"),
    ("4-5-17", "%-d-%-m-%y"),
    ("2017-04-26", "%Y-%m-%d"),
    ("3 Januari", "%-d %B"),
    ("april 2017", "%B %Y"),
    ("26/04", "%d/%m"),
])
def test_infer_date_format(s, fmt):
    assert str(infer_date_format(s)) == fmt


def test_day_first_ambiguity():
    p = parse_date("04-05-2017")
    assert (p.day, p.month) == (4, 5)


@pytest.mark.parametrize("bad", ["gisteren", "31-02-2017", "12-13-2017", "26-04/2017", ""])
def test_unparseable(bad):
    with pytest.raises(UnparseableDate):
        infer_date_format(bad)


def test_shift_examples():
    shift = DateShift(1, 3)
    assert shift_date("24-04-2017", None, shift) == "27-04-2018"
    assert shift_date("26-04-2017", None, shift) == "29-04-2018"
    assert shift_date("2016", None, shift) == "2017"
    assert shift_date("29-02-2016", None, DateShift(1, 0)) == "28-02-2017"
    assert shift_date("12 nov. 2018", None, DateShift(0, 30)) == "12 dec. 2018"
    assert shift_date("3 Januari", None, DateShift(0, 31), anchor=dt.date(2017, 1, 1)) == "3 Februari"
    assert shift_date("APR 2017", None, DateShift(1, 0)) == "APR 2018"


def test_shift_rejects_pattern_mismatch_and_bad_shift():
    with pytest.raises(UnparseableDate):
        shift_date("24-04-2017", infer_date_format("2016"), DateShift(1, 0))
    with pytest.raises(ValueError):
        DateShift(0, 0)
    with pytest.raises(ValueError):
        DateShift(-1, 5)


def _calendar_oracle(d: dt.date, years: int, days: int) -> dt.date:
    y = d.year + years
    day = d.day
    if d.month == 2 and d.day == 29 and not (y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)):
        day = 28
    return dt.date(y, d.month, day) + dt.timedelta(days=days)


@given(st.dates(dt.date(1950, 1, 1), dt.date(2040, 12, 31)), st.integers(0, 5), st.integers(0, 364),
       st.sampled_from(["%d-%m-%Y", "%d/%m/%Y", "%Y-%m-%d", "%d.%m.%Y"]))
def test_shift_calendar_oracle(d, years, days, fmt):
    if years == days == 0:
        return
    out = shift_date(d.strftime(fmt), None, DateShift(years, days))
    assert out == _calendar_oracle(d, years, days).strftime(fmt)
    assert parse_date(out).pattern == parse_date(d.strftime(fmt)).pattern


@given(st.lists(st.dates(dt.date(1990, 1, 1), dt.date(2030, 12, 31)), min_size=2, max_size=6),
       st.integers(0, 5), st.integers(0, 364))
def test_anchored_shift_preserves_deltas(dates, years, days):
    if years == days == 0:
        return
    anchor = min(dates)
    shift = DateShift(years, days)
    new = [dt.datetime.strptime(shift_date(d.strftime("%d-%m-%Y"), None, shift, anchor), "%d-%m-%Y").date()
           for d in dates]
    for a, b, na, nb in zip(dates, dates[1:], new, new[1:]):
        assert (b - a) == (nb - na)
    assert all(n > d for n, d in zip(new, dates))


# --- charclass, age, derangement ------------------------------------------


def test_charclass_examples():
    rng = random.Random(0)
    out = substitute_charclass("06-7802651", rng)
    assert char_classes(out) == ["d", "d", "-"] + ["d"] * 7 and out[2] == "-"
    assert substitute_charclass("", rng) == ""
    assert char_classes(substitute_charclass("1234AB", rng)) == ["d"] * 4 + ["u"] * 2


@given(st.text(max_size=30), st.integers(0, 1000))
def test_charclass_shape_property(s, seed):
    out = substitute_charclass(s, random.Random(seed))
    assert len(out) == len(s) and char_classes(out) == char_classes(s)


@pytest.mark.parametrize("s,out", [("93", "89"), ("45", "45"), ("89", "89"), ("90 jaar", "89 jaar"), ("0", "0")])
def test_cap_age(s, out):
    assert cap_age(s) == out


def test_cap_age_requires_integer():
    with pytest.raises(ValueError):
        cap_age("oud")


@given(st.lists(st.integers(), min_size=2, max_size=30, unique=True), st.integers(0, 10**6))
def test_sattolo_is_derangement(items, seed):
    out = sattolo(items, random.Random(seed))
    assert sorted(out) == sorted(items)
    assert all(a != b for a, b in zip(items, out))


# --- plans -----------------------------------------------------------------


def _doc(doc_id, text, spans):
    return Document(doc_id, text, [make_annotation(text, text.index(s), text.index(s) + len(s), tag) for s, tag in spans])


def test_name_continuity_within_document():
    text = "Jan Jansen belde. Later zei Jan Jansen dat het goed ging."
    second = text.index("Jan Jansen", 5)
    doc = Document("d", text, [make_annotation(text, 0, 10, "Name"), make_annotation(text, second, second + 10, "Name")])
    out = apply_plan(doc, make_plan([doc], seed=3))
    a, b = out.annotations
    assert a.surface == b.surface and a.surface != "Jan Jansen"


def test_institution_shuffle_derangement():
    docs = [_doc(f"d{i}", f"Opgenomen in {name} gisteren.", [(name, "Hospital")])
            for i, name in enumerate(["Ziekenhuis Noord", "Ziekenhuis Zuid", "Ziekenhuis Oost", "Ziekenhuis West"])]
    plan = make_plan(docs, seed=1)
    for doc in docs:
        orig = doc.annotations[0].surface
        new = apply_plan(doc, plan).annotations[0].surface
        assert new != orig and new in {"Ziekenhuis Noord", "Ziekenhuis Zuid", "Ziekenhuis Oost", "Ziekenhuis West"}


def test_review_queue_for_profession():
    doc = _doc("d", "Zij werkt als verpleegkundige.", [("verpleegkundige", "Profession")])
    plan = make_plan([doc])
    assert [r.placeholder for r in plan.review] == ["[REVIEW:Profession]"]
    assert apply_plan(doc, plan).text == "Zij werkt als [REVIEW:Profession]."
    assert plan.review_jsonl().count("\n") == 1


def test_unparseable_date_goes_to_review():
    doc = _doc("d", "Gezien op gisteravond laat.", [("gisteravond", "Date")])
    plan = make_plan([doc])
    assert [r.tag for r in plan.review] == ["Date"]


def test_offset_shift():
    text = "Jan Jansen belt 06-12345678 op 24-04-2017."
    doc = _doc("d", text, [("Jan Jansen", "Name"), ("06-12345678", "Phone/Fax"), ("24-04-2017", "Date")])
    plan = make_plan([doc], seed=2)
    out = apply_plan(doc, plan)
    delta = len(out.annotations[0].surface) - 10
    assert out.annotations[1].start == doc.annotations[1].start + delta
    assert out.annotations[2].start == doc.annotations[2].start + delta
    assert out.text[out.annotations[0].end:out.annotations[1].start] == " belt "
    assert out.text.endswith(".")


def test_no_annotations_unchanged():
    doc = Document("d", "Geen bijzonderheden.")
    assert apply_plan(doc, make_plan([doc])) == doc


def test_missing_annotation_error():
    doc = _doc("d", "Jan Jansen belde.", [("Jan Jansen", "Name")])
    other = _doc("d", "Piet Pieters belde.", [("Piet Pieters", "Name")])
    with pytest.raises(KeyError, match="Piet Pieters"):
        apply_plan(other, make_plan([doc]))


def test_empty_name_pool_error():
    res = SurrogateResources.default()
    res.given_names = []
    with pytest.raises(ValueError, match="given_names"):
        make_plan([_doc("d", "Jan belde.", [("Jan", "Name")])], res)


def test_plan_determinism_and_json(synth_small):
    p1 = make_plan(synth_small, seed=9)
    p2 = make_plan(synth_small, seed=9)
    assert p1.to_json() == p2.to_json()
    assert make_plan(synth_small, seed=10).to_json() != p1.to_json()
    back = SurrogatePlan.from_json(p1.to_json())
    assert apply_corpus(synth_small, back) == apply_corpus(synth_small, p1)
    for d, s in p1.shifts.items():
        assert s.years >= 0 and s.days >= 0 and (s.years or s.days)


def test_plan_covers_everything_and_invariants(synth_small):
    plan = make_plan(synth_small, seed=4)
    out = apply_corpus(synth_small, plan)
    assert surrogate_violations(synth_small, out, plan) == []
    assert leak_scan(synth_small, out) == []
    review = plan.review_keys()
    for doc in synth_small:
        for a in doc.annotations:
            assert (doc.doc_id, a.start, a.end) in review or (doc.doc_id, a.tag, a.surface) in plan.mapping


def test_leak_scan_detects_leak(synth_small):
    doc = next(d for d in synth_small if any(a.tag == "Name" for a in d.annotations))
    name = next(a.surface for a in doc.annotations if a.tag == "Name")
    leaked = Document(doc.doc_id, doc.text)
    assert (doc.doc_id, name.casefold()) in leak_scan([doc], [leaked])


def test_oov_corpus_surrogates(synth_oov):
    plan = make_plan(synth_oov, seed=1)
    out = apply_corpus(synth_oov, plan)
    assert leak_scan(synth_oov, out) == [] and surrogate_violations(synth_oov, out, plan) == []
