"""Surrogate generation: replace PHI with artificial values, keep format and document continuity.

Dates are shifted per document, names are drawn from name lists, address parts
from place dictionaries, identifiers get per-character substitution, ages are
capped and institution-like tags are shuffled across the corpus. Profession and
Other cannot be generated automatically and land in a review queue.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import LOCATION_TAGS, Annotation, Document, validate_document
from .resources import load_list, load_tagged_list, resource_dir
from .ruletagger import elfproef

log = logging.getLogger(__name__)

SHUFFLED_TAGS = frozenset(LOCATION_TAGS) | {"Named Location"}
CHARCLASS_TAGS = frozenset({"Phone/Fax", "Email", "URL/IP", "SSN", "ID"})
REVIEW_TAGS = frozenset({"Profession", "Other"})
AGE_CAP = 89
MIN_LEAK_LEN = 3
MAX_RETRIES = 50

# ---------------------------------------------------------------------------
# Dates
# ---------------------------------------------------------------------------

MONTHS = ("januari", "februari", "maart", "april", "mei", "juni", "juli", "augustus", "september",
          "oktober", "november", "december")
MONTH_ABBR = ("jan", "feb", "mrt", "apr", "mei", "jun", "jul", "aug", "sep", "okt", "nov", "dec")
_ABBR_ALIASES = {"sept": 9, "maa": 3, "mar": 3, "oct": 10}


class UnparseableDate(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    kind: str  # d m b B y Y lit
    text: str = ""  # literal text for kind == "lit"
    padded: bool = True  # numeric day/month
    case: str = "lower"  # month names: lower / title / upper


@dataclass(frozen=True)
class FormatPattern:
    components: tuple[Component, ...]

    def __str__(self) -> str:
        out = []
        for c in self.components:
            if c.kind == "lit":
                out.append(c.text.replace("%", "%%"))
            elif c.kind in "dm":
                out.append(f"%{c.kind}" if c.padded else f"%-{c.kind}")
            else:
                out.append(f"%{c.kind}")
        return "".join(out)

    def kinds(self) -> set[str]:
        return {c.kind for c in self.components if c.kind != "lit"}

    @property
    def has_day(self) -> bool:
        return "d" in self.kinds()

    @property
    def has_year(self) -> bool:
        return bool(self.kinds() & {"y", "Y"})

    @property
    def is_full(self) -> bool:
        return self.has_day and self.has_year

    def render(self, date: dt.date) -> str:
        out = []
        for c in self.components:
            if c.kind == "lit":
                out.append(c.text)
            elif c.kind == "d":
                out.append(f"{date.day:02d}" if c.padded else str(date.day))
            elif c.kind == "m":
                out.append(f"{date.month:02d}" if c.padded else str(date.month))
            elif c.kind == "Y":
                out.append(f"{date.year:04d}")
            elif c.kind == "y":
                out.append(f"{date.year % 100:02d}")
            else:
                name = (MONTHS if c.kind == "B" else MONTH_ABBR)[date.month - 1]
                out.append(_apply_case(name, c.case))
        return "".join(out)


def _apply_case(word: str, case: str) -> str:
    if case == "upper":
        return word.upper()
    if case == "title":
        return word[:1].upper() + word[1:]
    return word


def _case_of(word: str) -> str:
    if word.isupper() and len(word) > 1:
        return "upper"
    if word[:1].isupper():
        return "title"
    return "lower"


def _month_from_name(word: str) -> tuple[int, str] | None:
    w = word.lower()
    if w in MONTHS:
        return MONTHS.index(w) + 1, "B"
    if w in MONTH_ABBR:
        return MONTH_ABBR.index(w) + 1, "b"
    if w in _ABBR_ALIASES:
        return _ABBR_ALIASES[w], "b"
    return None


_NUM = r"(\d{1,2})"
_YEAR = r"(\d{4}|\d{2})"
_MONTH_WORD = r"([A-Za-z]+)"

# Grammar, highest priority first. Each entry: (regex, group kinds).
_GRAMMAR: list[tuple[re.Pattern, tuple[str, ...]]] = [
    (re.compile(rf"{_NUM}([-/.]){_NUM}(\2){_YEAR}"), ("d", "sep", "m", "sep2", "Y")),
    (re.compile(r"(\d{4})([-/.])(\d{1,2})(\2)(\d{1,2})"), ("Y", "sep", "m", "sep2", "d")),
    (re.compile(rf"{_NUM}([-/.]){_NUM}"), ("d", "sep", "m")),
    (re.compile(r"(\d{1,2})([-/.])(\d{4})"), ("m", "sep", "Y")),
    (re.compile(rf"{_NUM}(\s+){_MONTH_WORD}(\.?)(?:(\s+){_YEAR})?"), ("d", "sp", "M", "dot", "sp2", "Y?")),
    (re.compile(rf"{_MONTH_WORD}(\.?)(\s+)(\d{{4}})"), ("M", "dot", "sp", "Y")),
    (re.compile(r"(\d{4})"), ("Y",)),
]


def pivot_year(yy: int) -> int:
    """Two-digit years: 00-49 -> 20xx, 50-99 -> 19xx."""
    return 2000 + yy if yy < 50 else 1900 + yy


@dataclass(frozen=True)
class ParsedDate:
    pattern: FormatPattern
    year: int | None
    month: int | None
    day: int | None


def parse_date(s: str) -> ParsedDate:
    """Match ``s`` against the pattern grammar; raise UnparseableDate if nothing fits."""
    for regex, kinds in _GRAMMAR:
        m = regex.fullmatch(s)
        if not m:
            continue
        try:
            return _build(m, kinds)
        except UnparseableDate:
            continue
    raise UnparseableDate(f"no date pattern matches {s!r}")


def _build(m: re.Match, kinds: Sequence[str]) -> ParsedDate:
    comps: list[Component] = []
    year = month = day = None
    numeric: list[tuple[int, str, str]] = []  # (position, kind, raw) for padding resolution
    for kind, raw in zip(kinds, m.groups()):
        if raw is None or raw == "":
            continue
        if kind in ("sep", "sep2", "sp", "sp2", "dot"):
            comps.append(Component("lit", raw))
        elif kind == "d":
            day = int(raw)
            numeric.append((len(comps), "d", raw))
            comps.append(Component("d"))
        elif kind == "m":
            month = int(raw)
            numeric.append((len(comps), "m", raw))
            comps.append(Component("m"))
        elif kind in ("Y", "Y?"):
            if len(raw) == 4:
                year = int(raw)
                comps.append(Component("Y"))
            else:
                year = pivot_year(int(raw))
                comps.append(Component("y"))
        elif kind == "M":
            found = _month_from_name(raw)
            if found is None:
                raise UnparseableDate(raw)
            month, k = found
            comps.append(Component(k, case=_case_of(raw)))
    if month is not None and not 1 <= month <= 12:
        raise UnparseableDate(f"month {month}")
    # padding: a leading zero or single digit decides; two-digit values >= 10 follow
    # the other numeric component, else default to padded
    known = {k: (raw.startswith("0") and len(raw) == 2) for _, k, raw in numeric if len(raw) == 1 or raw.startswith("0")}
    for pos, k, raw in numeric:
        if k in known:
            padded = known[k]
        elif known:
            padded = next(iter(known.values()))
        else:
            padded = True
        comps[pos] = Component(k, padded=padded)
    if day is not None:
        ref = year if year is not None else 2000  # leap year so 29-02 without a year is valid
        try:
            dt.date(ref, month, day)
        except ValueError as exc:
            raise UnparseableDate(str(exc))
    return ParsedDate(FormatPattern(tuple(comps)), year, month, day)


def infer_date_format(s: str) -> FormatPattern:
    return parse_date(s).pattern


@dataclass(frozen=True)
class DateShift:
    years: int
    days: int

    def __post_init__(self):
        if self.years < 0 or self.days < 0 or (self.years == 0 and self.days == 0):
            raise ValueError(f"date shift must move into the future, got {self.years}y {self.days}d")


def add_years(date: dt.date, years: int) -> dt.date:
    """Calendar year addition; 29 February lands on 28 February in non-leap years."""
    try:
        return date.replace(year=date.year + years)
    except ValueError:
        return date.replace(year=date.year + years, day=28)


def shift_full(date: dt.date, shift: DateShift) -> dt.date:
    return add_years(date, shift.years) + dt.timedelta(days=shift.days)


def shift_date(s: str, pattern: FormatPattern | None, shift: DateShift, anchor: dt.date | None = None) -> str:
    """Shift ``s`` by ``shift`` and re-render it in its own pattern.

    Full dates move by years then days. When ``anchor`` is given, the shift is
    first turned into a fixed number of days at the anchor so every date of a
    document moves by the same delta (a Feb 29 in between would otherwise make
    deltas drift by one). Year-only dates move by whole years.
    """
    parsed = parse_date(s)
    if pattern is not None and pattern != parsed.pattern:
        raise UnparseableDate(f"{s!r} does not match pattern {pattern}")
    pattern = parsed.pattern
    if not pattern.has_day and not ("m" in pattern.kinds() or "b" in pattern.kinds() or "B" in pattern.kinds()):
        return pattern.render(dt.date(parsed.year + shift.years, 1, 1))
    year = parsed.year if parsed.year is not None else (anchor.year if anchor else 2000)
    try:
        date = dt.date(year, parsed.month, parsed.day or 1)
    except ValueError:  # 29-02 without a year, anchored in a non-leap year
        date = dt.date(year, parsed.month, 28)
    if anchor is not None:
        new = date + (shift_full(anchor, shift) - anchor)
    else:
        new = shift_full(date, shift)
    return pattern.render(new)


def full_date(s: str) -> dt.date | None:
    """The calendar date of ``s`` when it names day, month and year; else None."""
    try:
        p = parse_date(s)
    except UnparseableDate:
        return None
    if p.day is None or p.year is None:
        return None
    return dt.date(p.year, p.month, p.day)


def sample_shift(rng: random.Random, years: tuple[int, int] = (1, 5), days: tuple[int, int] = (0, 364)) -> DateShift:
    while True:
        y, d = rng.randint(*years), rng.randint(*days)
        if y or d:
            return DateShift(y, d)


# ---------------------------------------------------------------------------
# Simple substitutions
# ---------------------------------------------------------------------------

_DIGITS = "0123456789"
_LOWER = "abcdefghijklmnopqrstuvwxyz"
_UPPER = _LOWER.upper()


def _char_class(ch: str) -> str | None:
    if ch in _DIGITS:
        return _DIGITS
    if ch in _LOWER:
        return _LOWER
    if ch in _UPPER:
        return _UPPER
    return None


def char_classes(s: str) -> list[str]:
    """Per-position class label: d, l, u, or the character itself."""
    out = []
    for ch in s:
        cls = _char_class(ch)
        out.append("d" if cls is _DIGITS else "l" if cls is _LOWER else "u" if cls is _UPPER else ch)
    return out


def substitute_charclass(s: str, rng: random.Random) -> str:
    """Replace each ASCII letter/digit with a random one of the same class; keep the rest."""
    return "".join(rng.choice(cls) if (cls := _char_class(ch)) else ch for ch in s)


def cap_age(s: str) -> str:
    if not re.search(r"\d+", s):
        raise ValueError(f"no integer in age {s!r}")
    return re.sub(r"\d+", lambda m: str(AGE_CAP) if int(m.group()) > AGE_CAP else m.group(), s)


def sattolo(items: Sequence, rng: random.Random) -> list:
    """Random cyclic permutation: no element stays in place when len >= 2."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.randrange(i)
        out[i], out[j] = out[j], out[i]
    return out


# ---------------------------------------------------------------------------
# Resources and plan
# ---------------------------------------------------------------------------


@dataclass
class SurrogateResources:
    given_names: list[str]
    family_names: list[str]
    cities: list[str]
    streets: list[str]
    countries: list[str]
    institutions: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def default(cls) -> "SurrogateResources":
        return cls.load(None)

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "SurrogateResources":
        base = resource_dir(directory)

        def lst(name):
            path = base / f"{name}.txt"
            if not path.exists():
                raise FileNotFoundError(f"resource list {path} not found")
            return load_list(path)

        inst: dict[str, list[str]] = {}
        path = base / "institutions.txt"
        if path.exists():
            for name, tag in load_tagged_list(path):
                inst.setdefault(tag, []).append(name)
        return cls(lst("given_names"), lst("family_names"), lst("cities"), lst("streets"), lst("countries"), inst)


@dataclass(frozen=True)
class ReviewItem:
    doc_id: str
    start: int
    end: int
    tag: str
    surface: str
    placeholder: str
    reason: str = ""

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "start": self.start, "end": self.end, "tag": self.tag,
                "surface": self.surface, "placeholder": self.placeholder, "reason": self.reason}


def placeholder(tag: str) -> str:
    return f"[REVIEW:{tag}]"


@dataclass
class SurrogatePlan:
    seed: int
    shifts: dict[str, DateShift] = field(default_factory=dict)
    # (doc_id, tag, surface) -> surrogate
    mapping: dict[tuple[str, str, str], str] = field(default_factory=dict)
    # doc_id -> [(old_start, old_end, new_start, new_end)] per annotation
    offsets: dict[str, list[tuple[int, int, int, int]]] = field(default_factory=dict)
    review: list[ReviewItem] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def review_keys(self) -> dict[tuple[str, int, int], ReviewItem]:
        return {(r.doc_id, r.start, r.end): r for r in self.review}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "shifts": {d: {"years": s.years, "days": s.days} for d, s in sorted(self.shifts.items())},
            "mapping": [{"doc_id": d, "tag": t, "surface": s, "surrogate": v}
                        for (d, t, s), v in sorted(self.mapping.items())],
            "offsets": {d: [list(r) for r in rows] for d, rows in sorted(self.offsets.items())},
            "review": [r.to_dict() for r in self.review],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogatePlan":
        return cls(
            seed=d["seed"],
            shifts={k: DateShift(v["years"], v["days"]) for k, v in d["shifts"].items()},
            mapping={(m["doc_id"], m["tag"], m["surface"]): m["surrogate"] for m in d["mapping"]},
            offsets={k: [tuple(r) for r in v] for k, v in d["offsets"].items()},
            review=[ReviewItem(**r) for r in d["review"]],
            warnings=list(d.get("warnings", [])),
        )

    @classmethod
    def from_json(cls, s: str) -> "SurrogatePlan":
        return cls.from_dict(json.loads(s))

    def review_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for r in self.review)


def forbidden_strings(corpus: Sequence[Document]) -> tuple[set[str], dict[str, set[str]]]:
    """Case-folded PHI surfaces that must not survive: corpus-wide and per document (dates)."""
    global_set: set[str] = set()
    per_doc: dict[str, set[str]] = {}
    for doc in corpus:
        own = per_doc.setdefault(doc.doc_id, set())
        for a in doc.annotations:
            s = a.surface.casefold()
            if len(s) < MIN_LEAK_LEN or a.tag in SHUFFLED_TAGS:
                continue
            (own if a.tag == "Date" else global_set).add(s)
    return global_set, per_doc


class _Scanner:
    """Overlapping case-insensitive search for a fixed set of strings."""

    def __init__(self, strings: Iterable[str]):
        strings = sorted(set(strings), key=lambda s: (-len(s), s))
        self.regex = re.compile("(?=(" + "|".join(map(re.escape, strings)) + "))", re.IGNORECASE) if strings else None

    def hits(self, text: str) -> list[tuple[int, int, str]]:
        if self.regex is None:
            return []
        return [(m.start(), m.start() + len(m.group(1)), m.group(1)) for m in self.regex.finditer(text)]


_WORD = re.compile(r"[^\W\d_]+")
_DICT_CATEGORIES = ("streets", "cities", "countries")


class _Context:
    def __init__(self, corpus: Sequence[Document], res: SurrogateResources, seed: int):
        self.res = res
        self.seed = seed
        self.forbidden, self.forbidden_doc = forbidden_strings(corpus)
        self.scanner = _Scanner(self.forbidden)

        def clean(pool, single_word=False):
            out = []
            for p in pool:
                if single_word and (" " in p or not p[:1].isupper()):
                    continue
                low = p.casefold()
                if any(f in low for f in self.forbidden):
                    continue
                out.append(p)
            return out

        tags = {a.tag for d in corpus for a in d.annotations}
        self.given = clean(res.given_names, True)
        self.family = clean(res.family_names, True)
        if ("Name" in tags) and (not self.given or not self.family):
            raise ValueError("resource pool for Name surrogates is empty (given_names/family_names)")
        self.places = {k: clean(getattr(res, k)) for k in _DICT_CATEGORIES}
        entries = []
        self.place_kind: dict[str, str] = {}
        for kind in _DICT_CATEGORIES:
            for e in getattr(res, kind):
                self.place_kind.setdefault(e.casefold(), kind)
                entries.append(e)
        entries.sort(key=lambda e: (-len(e), e))
        self.place_re = (re.compile(r"(?<!\w)(" + "|".join(map(re.escape, entries)) + r")(?!\w)", re.IGNORECASE)
                         if entries else None)
        self.locations = self._shuffle_locations(corpus)

    def _shuffle_locations(self, corpus):
        rng = random.Random(f"{self.seed}:locations")
        by_tag: dict[str, list[str]] = {}
        for doc in corpus:
            for a in doc.annotations:
                if a.tag in SHUFFLED_TAGS and a.surface not in by_tag.setdefault(a.tag, []):
                    by_tag[a.tag].append(a.surface)
        mapping = {}
        for tag in sorted(by_tag):
            values = sorted(by_tag[tag])
            if len(values) >= 2:
                mapping.update({(tag, v): s for v, s in zip(values, sattolo(values, rng))})
                continue
            pool = [p for p in self.res.institutions.get(tag, []) if p != values[0]]
            if not pool and tag == "Named Location":
                pool = [p for ps in self.res.institutions.values() for p in ps if p != values[0]]
            mapping[(tag, values[0])] = rng.choice(sorted(pool)) if pool else values[0]
        return mapping


def _with_case(template: str, word: str) -> str:
    if template.isupper() and len(template) > 1:
        return word.upper()
    return word


class _DocSurrogates:
    """One attempt at surrogates for a single document."""

    def __init__(self, ctx: _Context, doc: Document, rng: random.Random):
        self.ctx, self.doc, self.rng = ctx, doc, rng
        self.shift = sample_shift(rng)
        dates = [d for a in doc.annotations if a.tag == "Date" and (d := full_date(a.surface))]
        self.anchor = min(dates) if dates else None
        self.words: dict[str, str] = {}  # name token -> surrogate
        self.used: set[str] = set()
        self.places: dict[tuple[str, str], str] = {}
        self.by_surface: dict[tuple[str, str], str | None] = {}

    def surrogate(self, ann: Annotation) -> tuple[str | None, str]:
        """(surrogate, reason); None means review."""
        key = (ann.tag, ann.surface)
        if key in self.by_surface:
            return self.by_surface[key], "same surface sent to review"
        value, reason = self._make(ann)
        self.by_surface[key] = value
        return value, reason

    def _make(self, ann: Annotation) -> tuple[str | None, str]:
        tag, s = ann.tag, ann.surface
        if tag in REVIEW_TAGS:
            return None, "manual rewrite"
        if tag == "Date":
            try:
                return shift_date(s, None, self.shift, self.anchor), ""
            except UnparseableDate as exc:
                return None, f"unparseable date: {exc}"
        if tag == "Age":
            try:
                return cap_age(s), ""
            except ValueError as exc:
                return None, str(exc)
        if tag in CHARCLASS_TAGS:
            return self._charclass(s, tag == "SSN"), ""
        if tag == "Name":
            return self._name(s), ""
        if tag == "Initials":
            return self._initials(s), ""
        if tag == "Address":
            return self._address(s)
        if tag in SHUFFLED_TAGS:
            return self.ctx.locations[(tag, s)], ""
        return None, f"no surrogate strategy for tag {tag}"

    def _charclass(self, s: str, ssn: bool) -> str:
        if not any(_char_class(c) for c in s):
            return s
        for _ in range(100):
            out = substitute_charclass(s, self.rng)
            if out == s:
                continue
            digits = re.sub(r"\D", "", out)
            if ssn and len(digits) == 9 and elfproef(re.sub(r"\D", "", s)) and not elfproef(digits):
                continue
            return out
        return out

    def _pick(self, pool: Sequence[str], original: str) -> str:
        choices = [p for p in pool if p.casefold() != original.casefold() and p not in self.used]
        if not choices:
            choices = [p for p in pool if p.casefold() != original.casefold()] or list(pool)
        value = self.rng.choice(choices)
        self.used.add(value)
        return value

    def _name(self, s: str) -> str:
        words = list(_WORD.finditer(s))
        caps = [m for m in words if m.group()[:1].isupper() and len(m.group()) > 1]
        last = caps[-1] if caps else None
        out, pos = [], 0
        for m in words:
            w = m.group()
            out.append(s[pos:m.start()])
            pos = m.end()
            if not w[:1].isupper():
                out.append(w)  # particle
            elif len(w) == 1:
                out.append(self._letter(w))
            else:
                k = w.casefold()
                if k not in self.words:
                    pool = self.ctx.family if m is last else self.ctx.given
                    self.words[k] = self._pick(pool, w)
                out.append(_with_case(w, self.words[k]))
        out.append(s[pos:])
        return "".join(out)

    def _letter(self, ch: str) -> str:
        k = "initial:" + ch
        if k not in self.words:
            self.words[k] = self.rng.choice([c for c in _UPPER if c != ch.upper()])
        return self.words[k]

    def _initials(self, s: str) -> str:
        return re.sub(r"[^\W\d_]", lambda m: self._letter(m.group()), s)

    def _address(self, s: str) -> tuple[str | None, str]:
        out, pos = [], 0
        matches = list(self.ctx.place_re.finditer(s)) if self.ctx.place_re else []
        for m in matches:
            out.append(s[pos:m.start()])
            pos = m.end()
            kind = self.ctx.place_kind[m.group().casefold()]
            key = (kind, m.group().casefold())
            if key not in self.places:
                pool = self.ctx.places[kind]
                if not pool:
                    raise ValueError(f"resource pool for address {kind} is empty")
                self.places[key] = self._pick(pool, m.group())
            out.append(self.places[key])
        out.append(s[pos:])
        # residue: everything not replaced above, processed token by token
        pieces = []
        for i, chunk in enumerate(out):
            if i % 2 == 1:
                pieces.append(chunk)
                continue
            for tok in re.split(r"(\s+)", chunk):
                if not tok or tok.isspace():
                    pieces.append(tok)
                elif any(c.isdigit() for c in tok) or re.fullmatch(r"[A-Z]{2}", tok):
                    pieces.append(self._charclass(tok, False))
                elif _WORD.search(tok):
                    return None, f"address part {tok!r} not in any place dictionary"
                else:
                    pieces.append(tok)
        return "".join(pieces), ""


def _splice(doc: Document, values: dict[tuple[int, int], str]) -> tuple[str, list[Annotation], list[tuple[int, int, int, int]]]:
    parts, anns, rows = [], [], []
    pos = new = 0
    for a in doc.annotations:
        gap = doc.text[pos:a.start]
        parts.append(gap)
        new += len(gap)
        value = values[(a.start, a.end)]
        parts.append(value)
        anns.append(Annotation(new, new + len(value), a.tag, value))
        rows.append((a.start, a.end, new, new + len(value)))
        new += len(value)
        pos = a.end
    parts.append(doc.text[pos:])
    return "".join(parts), anns, rows


def _plan_document(ctx: _Context, doc: Document, plan: SurrogatePlan) -> None:
    if find := [a for a in doc.annotations if not a.surface]:
        raise ValueError(f"document {doc.doc_id}: annotation {find[0].key} has no surface")
    own = _Scanner(ctx.forbidden_doc.get(doc.doc_id, ()))
    rng = random.Random(f"{ctx.seed}:{doc.doc_id}")
    bad: set[tuple[str, str]] = set()
    attempt = 0
    while True:
        gen = _DocSurrogates(ctx, doc, rng)
        values, reasons = {}, {}
        for a in doc.annotations:
            value, reason = (None, "leaked after retries") if (a.tag, a.surface) in bad else gen.surrogate(a)
            values[(a.start, a.end)] = value if value is not None else placeholder(a.tag)
            if value is None:
                reasons[(a.start, a.end)] = reason
        text, anns, rows = _splice(doc, values)
        regions = [(n.start, n.end, o) for n, o in zip(anns, doc.annotations) if (o.start, o.end) not in reasons]
        leaks, warnings = [], []
        for hs, he, hit in ctx.scanner.hits(text) + own.hits(text):
            owners = [o for s, e, o in regions if s < he and hs < e]
            if owners:
                leaks.extend(owners)
            else:
                warnings.append(f"{doc.doc_id}: PHI string {hit!r} occurs in non-PHI text at {hs}")
        if not leaks:
            break
        attempt += 1
        if attempt >= MAX_RETRIES:
            # give up on these values: they go to review, which always terminates
            bad |= {(o.tag, o.surface) for o in leaks}
    plan.warnings.extend(warnings)
    plan.shifts[doc.doc_id] = gen.shift
    plan.offsets[doc.doc_id] = rows
    for a in doc.annotations:
        if (a.start, a.end) in reasons:
            plan.review.append(ReviewItem(doc.doc_id, a.start, a.end, a.tag, a.surface, placeholder(a.tag),
                                          reasons[(a.start, a.end)]))
        else:
            plan.mapping[(doc.doc_id, a.tag, a.surface)] = values[(a.start, a.end)]


def make_plan(corpus: Sequence[Document], resources: SurrogateResources | None = None, seed: int = 0) -> SurrogatePlan:
    """Choose a surrogate for every annotation in ``corpus`` (or queue it for review)."""
    resources = resources or SurrogateResources.default()
    ids = [d.doc_id for d in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate doc_id in corpus")
    for doc in corpus:
        validate_document(doc)
    ctx = _Context(corpus, resources, seed)
    plan = SurrogatePlan(seed)
    for doc in corpus:
        _plan_document(ctx, doc, plan)
    if plan.review:
        log.info("%d annotations queued for review", len(plan.review))
    return plan


def apply_plan(doc: Document, plan: SurrogatePlan) -> Document:
    """Splice surrogates into ``doc`` and remap every annotation offset."""
    review = plan.review_keys()
    values, missing = {}, []
    for a in doc.annotations:
        r = review.get((doc.doc_id, a.start, a.end))
        if r is not None:
            values[(a.start, a.end)] = r.placeholder
        elif (doc.doc_id, a.tag, a.surface) in plan.mapping:
            values[(a.start, a.end)] = plan.mapping[(doc.doc_id, a.tag, a.surface)]
        else:
            missing.append(a)
    if missing:
        listed = ", ".join(f"{a.key} {a.surface!r}" for a in missing[:10])
        raise KeyError(f"plan does not cover {len(missing)} annotation(s) of {doc.doc_id}: {listed}")
    text, anns, _ = _splice(doc, values)
    out = Document(doc.doc_id, text, anns, dict(doc.meta))
    validate_document(out)
    return out


def apply_corpus(corpus: Sequence[Document], plan: SurrogatePlan) -> list[Document]:
    return [apply_plan(d, plan) for d in corpus]


def leak_scan(original: Sequence[Document], output: Sequence[Document]) -> list[tuple[str, str]]:
    """(doc_id, leaked string) for every forbidden original surface found in the output texts."""
    global_set, per_doc = forbidden_strings(original)
    leaks = []
    for doc in output:
        low = doc.text.casefold()
        for f in sorted(global_set | per_doc.get(doc.doc_id, set())):
            if f in low:
                leaks.append((doc.doc_id, f))
    return leaks
