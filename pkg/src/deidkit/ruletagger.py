"""Unsupervised rule-based PHI tagger: lookup lists, regular patterns and within-document fuzzy names.

The matchers here are a documented reimplementation of the categories a
Dutch lookup/rule de-identifier covers. They are not a port of any existing
tool, so per-tag scores are not expected to match published numbers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import LOCATION_TAGS, Annotation, Document, Token, make_annotation, tokenize
from .resources import DATA_DIR, builtin, load_list, load_tagged_list

DEFAULT_TITLES = (
    "Dhr.", "Dhr", "Mw.", "Mw", "Mevr.", "Mevr", "Mevrouw", "Meneer", "Mej.",
    "Dr.", "Drs.", "Prof.", "Ir.", "Ing.", "Mr.", "Zr.", "Br.",
)

CATEGORIES = (
    "Name", "Initials", "Date", "Age", "Phone/Fax", "Email", "URL/IP", "SSN", "Address", "Institution",
)

# Conflict priority for equal-length spans; anything not listed ranks after these.
PRIORITY = (
    "Name", "Date", "Address", "Phone/Fax", "Email", "URL/IP", "SSN", "ID",
    "Hospital", "Care Institute", "Organization", "Internal Location", "Named Location",
)

NAMED_LOCATION_MAPPING = {t: ("Named Location" if t in LOCATION_TAGS else t) for t in (
    "Name", "Initials", "Profession", "Internal Location", "Hospital", "Organization", "Care Institute",
    "Address", "Age", "Date", "Phone/Fax", "Email", "URL/IP", "SSN", "ID", "Other", "Named Location",
)}

PARTICLES = frozenset("van de der den ter ten te het in 't op".split())

MONTHS_FULL = ("januari", "februari", "maart", "april", "mei", "juni", "juli", "augustus",
               "september", "oktober", "november", "december")
MONTHS_ABBR = ("jan", "feb", "febr", "mrt", "mar", "apr", "mei", "jun", "jul", "aug", "sep", "sept",
               "okt", "nov", "dec")
WEEKDAYS = ("maandag", "dinsdag", "woensdag", "donderdag", "vrijdag", "zaterdag", "zondag")
SEASONS = ("voorjaar", "najaar", "lente", "zomer", "herfst", "winter")


def _alt(words: Iterable[str]) -> str:
    return "|".join(sorted(set(words), key=len, reverse=True))


_DATE_NUMERIC = re.compile(r"(?<![\w/.-])(\d{1,2})([-/.])(\d{1,2})\2(\d{4}|\d{2})(?![\w/-]|\.\d)")
_DATE_ISO = re.compile(r"(?<![\w/.-])(\d{4})-(\d{1,2})-(\d{1,2})(?![\w/-]|\.\d)")
_DATE_TEXT_FULL = re.compile(rf"(?<![\w])\d{{1,2}}\s+(?:{_alt(MONTHS_FULL)})(?:\s+\d{{4}})?(?![\w])", re.I)
_DATE_TEXT_ABBR = re.compile(rf"(?<![\w])\d{{1,2}}\s+(?:{_alt(MONTHS_ABBR)})(?:\.?\s+\d{{4}}|\.)?(?![\w])", re.I)
_DATE_MONTH_YEAR = re.compile(
    rf"(?<![\w])(?:(?:{_alt(MONTHS_FULL)})|(?:{_alt(MONTHS_ABBR)})\.?)\s+\d{{4}}(?![\w])", re.I)
_YEAR_CUE = re.compile(r"(?<![\w])(?:in|sinds|vanaf|tot|per|begin|eind|medio|jaar)\s+((?:19|20)\d{2})(?![\w/-])", re.I)
_SEASON_YEAR = re.compile(rf"(?<![\w])(?:{_alt(SEASONS)})\s+(?:19|20)\d{{2}}(?![\w/-])", re.I)
_WEEKDAY_CUE = re.compile(
    rf"(?<![\w])(?:op|afgelopen|vorige|volgende|komende|elke|iedere)\s+({_alt(WEEKDAYS)})(?![\w])", re.I)
_WEEKDAY = re.compile(rf"(?<![\w])(?:{_alt(WEEKDAYS)})(?![\w])", re.I)

_PHONE = re.compile(r"(?<![\w+])(?:\+31|0)(?:[ -]?\(0\))?[ -]?\d{1,3}(?:[ -]?\d{2,8}){1,3}(?![\w])")
_EMAIL = re.compile(r"(?<![\w.+-])[\w.+-]+@[\w-]+(?:\.[\w-]+)*\.[A-Za-z]{2,}(?![\w-])")
_URL = re.compile(r"(?:(?<![\w])(?:https?|ftp)://|(?<![\w.@/])www\.)[^\s<>\"]+", re.I)
_IP = re.compile(r"(?<![\d.])(?:\d{1,3}\.){3}\d{1,3}(?![\d]|\.\d)")
_NINE_DIGITS = re.compile(r"(?<![\d])\d{9}(?![\d])")
_ZIP = re.compile(r"(?<![\w])\d{4} ?[A-Z]{2}(?![\w])")
_AGE_BEFORE = re.compile(r"(?<![\w.,])(\d{1,3})\s*(?:-?jarige?|jaar|jr\.?)(?![\w])", re.I)
_AGE_AFTER = re.compile(r"(?<![\w])leeftijd\s*:?\s*(?:van\s+)?(\d{1,3})(?![\w])", re.I)
_HOUSE_NUMBER = re.compile(r"\d{1,4}[a-zA-Z]?")


def elfproef(digits: str) -> bool:
    """Dutch citizen-number checksum: weights 9..2 and -1 must sum to a multiple of 11."""
    if len(digits) != 9 or not digits.isdigit():
        return False
    weights = (9, 8, 7, 6, 5, 4, 3, 2, -1)
    total = sum(int(d) * w for d, w in zip(digits, weights))
    return total % 11 == 0 and total != 0


def edit_distance(a: str, b: str, limit: int | None = None) -> int:
    if abs(len(a) - len(b)) > (limit if limit is not None else len(a) + len(b)):
        return abs(len(a) - len(b))
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if limit is not None and min(cur) > limit:
            return limit + 1
        prev = cur
    return prev[-1]


class Trie:
    """Token-sequence trie over case-folded token surfaces."""

    _END = "\0"

    def __init__(self, entries: Iterable[tuple[str, object]] = ()):
        self.root: dict = {}
        for phrase, value in entries:
            self.add(phrase, value)

    def add(self, phrase: str, value: object = True) -> None:
        keys = [t.surface.casefold() for t in tokenize(phrase).tokens]
        if not keys:
            return
        node = self.root
        for k in keys:
            node = node.setdefault(k, {})
        node.setdefault(self._END, (len(keys), value))

    def longest(self, tokens: Sequence[Token], i: int, text: str) -> tuple[int, object] | None:
        """Longest entry starting at token ``i``; tokens must not be separated by a blank line."""
        node = self.root
        best = None
        j = i
        while j < len(tokens):
            if j > i and text[tokens[j - 1].end:tokens[j].start].count("\n") >= 2:
                break
            node = node.get(tokens[j].surface.casefold())
            if node is None:
                break
            j += 1
            if self._END in node:
                best = (j, node[self._END][1])
        return best


@dataclass(frozen=True)
class RuleConfig:
    first_names: tuple[str, ...] = ()
    surnames: tuple[str, ...] = ()
    institutions: tuple[tuple[str, str], ...] = ()
    locations: tuple[str, ...] = ()
    titles: tuple[str, ...] = DEFAULT_TITLES
    fuzzy_max_edits: int = 1
    disabled: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.fuzzy_max_edits not in (0, 1, 2):
            raise ValueError(f"fuzzy_max_edits must be 0, 1 or 2, got {self.fuzzy_max_edits}")
        unknown = set(self.disabled) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown rule categories: {sorted(unknown)}")
        object.__setattr__(self, "first_names", _dedup(self.first_names))
        object.__setattr__(self, "surnames", _dedup(self.surnames))
        object.__setattr__(self, "locations", _dedup(self.locations))
        object.__setattr__(self, "titles", _dedup(self.titles))
        seen, insts = set(), []
        for name, tag in self.institutions:
            if name.casefold() not in seen:
                seen.add(name.casefold())
                insts.append((name, tag))
        object.__setattr__(self, "institutions", tuple(insts))

    @classmethod
    def default(cls, **overrides) -> "RuleConfig":
        kwargs = dict(
            first_names=tuple(builtin("given_names")),
            surnames=tuple(builtin("family_names")),
            institutions=tuple(load_tagged_list(DATA_DIR / "institutions.txt")),
            locations=tuple(builtin("cities") + builtin("streets") + builtin("countries")),
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RuleConfig":
        """Read a ``key = value`` config file.

        Keys: ``first_names``, ``surnames``, ``institutions``, ``locations``
        (comma-separated list paths, relative to the config file or the
        built-in data directory), ``titles`` (comma-separated),
        ``fuzzy_max_edits`` and ``disable`` (comma-separated categories).
        """
        path = Path(path)
        values: dict[str, str] = {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in ("first_names", "surnames", "institutions", "locations", "titles",
                                      "fuzzy_max_edits", "disable"):
                raise ValueError(f"{path}:{lineno}: bad config line {line!r}")
            values[key] = value.strip()

        def paths(key):
            out = []
            for item in filter(None, (v.strip() for v in values.get(key, "").split(","))):
                p = path.parent / item
                if not p.exists():
                    p = DATA_DIR / item
                if not p.exists():
                    raise FileNotFoundError(f"{path}: list file {item!r} not found")
                out.append(p)
            return out

        kwargs: dict = {
            "first_names": tuple(x for p in paths("first_names") for x in load_list(p)),
            "surnames": tuple(x for p in paths("surnames") for x in load_list(p)),
            "institutions": tuple(x for p in paths("institutions") for x in load_tagged_list(p)),
            "locations": tuple(x for p in paths("locations") for x in load_list(p)),
        }
        if "titles" in values:
            kwargs["titles"] = tuple(t.strip() for t in values["titles"].split(",") if t.strip())
        if "fuzzy_max_edits" in values:
            kwargs["fuzzy_max_edits"] = int(values["fuzzy_max_edits"])
        if "disable" in values:
            kwargs["disabled"] = frozenset(t.strip() for t in values["disable"].split(",") if t.strip())
        return cls(**kwargs)

    @cached_property
    def first_name_set(self) -> frozenset[str]:
        return frozenset(n.casefold() for n in self.first_names)

    @cached_property
    def surname_trie(self) -> Trie:
        return Trie((n, True) for n in self.surnames)

    @cached_property
    def institution_trie(self) -> Trie:
        return Trie(self.institutions)

    @cached_property
    def location_trie(self) -> Trie:
        return Trie((n, True) for n in self.locations)

    @cached_property
    def title_trie(self) -> Trie:
        return Trie((t, t) for t in self.titles)


def _dedup(items: Iterable[str]) -> tuple[str, ...]:
    seen, out = set(), []
    for x in items:
        if x.casefold() not in seen:
            seen.add(x.casefold())
            out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class Match:
    start: int
    end: int
    tag: str
    matcher: str = field(compare=False)


# ---------------------------------------------------------------------------
# Pattern matchers
# ---------------------------------------------------------------------------


def _regex_matches(pattern: re.Pattern, text: str, tag: str, matcher: str, group: int = 0) -> list[Match]:
    return [Match(m.start(group), m.end(group), tag, matcher) for m in pattern.finditer(text)]


def match_dates(text: str, sentence_starts: set[int]) -> list[Match]:
    out = []
    for m in _DATE_NUMERIC.finditer(text):
        day, month = int(m.group(1)), int(m.group(3))
        if 1 <= day <= 31 and 1 <= month <= 12:
            out.append(Match(m.start(), m.end(), "Date", "date_numeric"))
    for m in _DATE_ISO.finditer(text):
        if 1 <= int(m.group(2)) <= 12 and 1 <= int(m.group(3)) <= 31:
            out.append(Match(m.start(), m.end(), "Date", "date_iso"))
    out += _regex_matches(_DATE_TEXT_FULL, text, "Date", "date_textual")
    out += _regex_matches(_DATE_TEXT_ABBR, text, "Date", "date_textual")
    out += _regex_matches(_DATE_MONTH_YEAR, text, "Date", "date_month_year")
    out += _regex_matches(_YEAR_CUE, text, "Date", "date_year_cue", group=1)
    out += _regex_matches(_SEASON_YEAR, text, "Date", "date_season")
    out += _regex_matches(_WEEKDAY_CUE, text, "Date", "date_weekday", group=1)
    for m in _WEEKDAY.finditer(text):
        # a capitalised weekday only counts at the start of a sentence
        if text[m.start()].isupper() and m.start() in sentence_starts:
            out.append(Match(m.start(), m.end(), "Date", "date_weekday"))
    return out


def match_phones(text: str) -> list[Match]:
    out = []
    for m in _PHONE.finditer(text):
        s = m.group()
        # shrink from the right, one digit group at a time, until the digit count fits
        while s:
            digits = re.sub(r"\D", "", s)
            n = len(digits) - 2 if s.startswith("+31") else len(digits)
            ok_count = n in ((8, 9) if s.startswith("+31") else (9, 10))
            if ok_count and s.count("-") <= 1 and "  " not in s:
                out.append(Match(m.start(), m.start() + len(s), "Phone/Fax", "phone"))
                break
            cut = max(s.rfind(" "), s.rfind("-"))
            if cut <= 0:
                break
            s = s[:cut]
    return out


def match_contact(text: str) -> list[Match]:
    out = _regex_matches(_EMAIL, text, "Email", "email")
    for m in _URL.finditer(text):
        s = m.group().rstrip(".,;:!?)]}'\"")
        out.append(Match(m.start(), m.start() + len(s), "URL/IP", "url"))
    for m in _IP.finditer(text):
        if all(int(p) <= 255 for p in m.group().split(".")):
            out.append(Match(m.start(), m.end(), "URL/IP", "ip"))
    for m in _NINE_DIGITS.finditer(text):
        if elfproef(m.group()):
            out.append(Match(m.start(), m.end(), "SSN", "ssn"))
    return out


def match_ages(text: str) -> list[Match]:
    out = []
    for pattern in (_AGE_BEFORE, _AGE_AFTER):
        for m in pattern.finditer(text):
            if int(m.group(1)) <= 120:
                out.append(Match(m.start(1), m.end(1), "Age", "age"))
    return out


# ---------------------------------------------------------------------------
# Token-based matchers
# ---------------------------------------------------------------------------


def _is_cap(tok: Token) -> bool:
    return tok.surface[:1].isupper() and any(c.isalpha() for c in tok.surface)


def _joined(text: str, a: Token, b: Token) -> bool:
    """Tokens separated by nothing or by inline whitespace (no blank line)."""
    gap = text[a.end:b.start]
    return gap == "" or (gap.isspace() and gap.count("\n") < 2)


def _after_particles(tokens: Sequence[Token], j: int) -> int:
    while j < len(tokens) and tokens[j].surface in PARTICLES:
        j += 1
    return j


def _initials_run(tokens: Sequence[Token], i: int, text: str) -> int:
    """End index (exclusive) of a run of 1-4 ``X.`` initials starting at ``i``, or ``i``."""
    j, count = i, 0
    while (count < 4 and j + 1 < len(tokens) and len(tokens[j].surface) == 1 and tokens[j].surface.isupper()
           and tokens[j + 1].surface == "." and tokens[j].end == tokens[j + 1].start):
        if count and not _joined(text, tokens[j - 1], tokens[j]):
            break
        j += 2
        count += 1
    return j


def match_names(text: str, tokens: Sequence[Token], sentence_starts: set[int], cfg: RuleConfig,
                use_initials: bool = True) -> list[Match]:
    n = len(tokens)
    is_name = [False] * n
    lookup_hit = [False] * n
    # lookup: first names and (possibly multi-token) surnames
    for i, tok in enumerate(tokens):
        if _is_cap(tok) and tok.surface.casefold() in cfg.first_name_set:
            is_name[i] = lookup_hit[i] = True
    i = 0
    while i < n:
        hit = cfg.surname_trie.longest(tokens, i, text)
        if hit and _is_cap(tokens[hit[0] - 1]) and (_is_cap(tokens[i]) or tokens[i].surface in PARTICLES):
            for k in range(i, hit[0]):
                is_name[k] = lookup_hit[k] = True
            i = hit[0]
        else:
            i += 1

    # title promotion: the title plus up to three following capitalised words
    title_spans = []
    i = 0
    while i < n:
        hit = cfg.title_trie.longest(tokens, i, text)
        if not hit or not _is_cap(tokens[i]) and tokens[i].surface.casefold() not in ("dhr", "mw", "mevr"):
            i += 1
            continue
        j = hit[0]
        words = 0
        end = j
        while j < n and words < 3 and _joined(text, tokens[j - 1], tokens[j]):
            run = _initials_run(tokens, j, text)
            if run > j:
                j = end = run
                continue
            tok = tokens[j]
            if _is_cap(tok) and tok.surface.isalpha():
                j += 1
                end = j
                words += 1
            elif tok.surface in PARTICLES and _after_particles(tokens, j) < n and _is_cap(
                    tokens[_after_particles(tokens, j)]):
                j = _after_particles(tokens, j)
            else:
                break
        if words:
            title_spans.append((i, end))
            for k in range(hit[0], end):
                is_name[k] = True
        i = max(end, i + 1)

    # fuzzy: capitalised words close to a name already seen verbatim in this document
    if cfg.fuzzy_max_edits:
        seen = {tokens[k].surface.casefold() for k in range(n) if lookup_hit[k] and len(tokens[k].surface) >= 4}
        for i, tok in enumerate(tokens):
            word = tok.surface.casefold()
            if is_name[i] or not _is_cap(tok) or not tok.surface.isalpha() or len(word) < 4:
                continue
            limit = cfg.fuzzy_max_edits if len(word) >= 6 else 1
            if any(edit_distance(word, s, limit) <= limit for s in seen):
                is_name[i] = True

    # lone sentence-initial lookup hits are too often ordinary capitalised words
    for i in range(n):
        if is_name[i] and lookup_hit[i] and tokens[i].start in sentence_starts:
            j = i
            while j + 1 < n and is_name[j + 1] and _joined(text, tokens[j], tokens[j + 1]):
                j += 1
            before = i > 0 and is_name[i - 1]
            if j == i and not before:
                is_name[i] = False

    # merge runs of name tokens, absorbing initials directly before a name token
    out: list[Match] = []
    i = 0
    while i < n:
        run = _initials_run(tokens, i, text) if use_initials else i
        if not is_name[i] and not (run > i and run < n and is_name[run] and _joined(text, tokens[run - 1],
                                                                                    tokens[run])):
            i += 1
            continue
        j = run if run > i else i
        end = j
        while j < n:
            if is_name[j]:
                j += 1
                end = j
            elif (r := _initials_run(tokens, j, text)) > j and r < n and is_name[r]:
                j = r
            elif tokens[j].surface in PARTICLES and _after_particles(tokens, j) < n and is_name[
                    _after_particles(tokens, j)]:
                j = _after_particles(tokens, j)
            else:
                break
            if j < n and not _joined(text, tokens[j - 1], tokens[j]):
                break
        start_tok = i
        for ts, te in title_spans:
            if ts < i and te > i:
                start_tok = ts
        out.append(Match(tokens[start_tok].start, tokens[end - 1].end, "Name", "name"))
        i = max(end, i + 1)

    if use_initials:
        out += _match_initials(text, tokens, out, cfg)
    return out


def _match_initials(text: str, tokens: Sequence[Token], names: list[Match], cfg: RuleConfig) -> list[Match]:
    name_ends = {m.end for m in names}
    name_starts = {m.start for m in names}
    covered = [(m.start, m.end) for m in names]
    out = []
    i = 0
    while i < len(tokens):
        run = _initials_run(tokens, i, text)
        if run == i:
            i += 1
            continue
        s, e = tokens[i].start, tokens[run - 1].end
        if any(a <= s < b for a, b in covered):
            i = run
            continue
        before = text[:s].rstrip(" ,")
        after_gap = text[e:].lstrip(" ,")
        prev_title = i > 0 and cfg.title_trie.longest(tokens, max(0, i - 2), text) is not None
        adjacent = (len(before) in name_ends or (len(text) - len(after_gap)) in name_starts or prev_title)
        if adjacent:
            out.append(Match(s, e, "Initials", "initials"))
        i = run
    return out


def match_lookups(text: str, tokens: Sequence[Token], cfg: RuleConfig, institutions: bool = True,
                  addresses: bool = True) -> list[Match]:
    out: list[Match] = []
    n = len(tokens)
    if institutions:
        i = 0
        while i < n:
            hit = cfg.institution_trie.longest(tokens, i, text)
            if hit and (hit[0] - i > 1 or _is_cap(tokens[i])):
                out.append(Match(tokens[i].start, tokens[hit[0] - 1].end, hit[1], "institution"))
                i = hit[0]
            else:
                i += 1
    if not addresses:
        return out
    # address parts: dictionary places, house numbers after a place, ZIP codes
    parts: list[tuple[int, int]] = []
    i = 0
    while i < n:
        hit = cfg.location_trie.longest(tokens, i, text)
        if hit and (hit[0] - i > 1 or _is_cap(tokens[i])):
            end = hit[0]
            if end < n and _HOUSE_NUMBER.fullmatch(tokens[end].surface) and _joined(text, tokens[end - 1],
                                                                                   tokens[end]):
                end += 1
            parts.append((tokens[i].start, tokens[end - 1].end))
            i = end
        else:
            i += 1
    parts += [(m.start(), m.end()) for m in _ZIP.finditer(text)]
    parts.sort()
    merged: list[list[int]] = []
    for s, e in parts:
        if merged and (s < merged[-1][1] or re.fullmatch(r"[ \t]*,?[ \t]*\n?[ \t]*", text[merged[-1][1]:s])):
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    out += [Match(s, e, "Address", "address") for s, e in merged]
    return out


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------


def _priority(tag: str) -> int:
    return PRIORITY.index(tag) if tag in PRIORITY else len(PRIORITY)


def _resolve(items: list, span) -> list:
    ranked = sorted(items, key=lambda x: (-(span(x)[1] - span(x)[0]), _priority(span(x)[2]), span(x)[0]))
    kept: list = []
    for item in ranked:
        s, e, _ = span(item)
        if all(e <= span(k)[0] or s >= span(k)[1] for k in kept):
            kept.append(item)
    return sorted(kept, key=lambda x: span(x)[:2])


def resolve_overlaps(anns: Iterable[Annotation]) -> list[Annotation]:
    """Keep a non-overlapping subset: longer span first, then tag priority, then earlier start."""
    return _resolve(list(set(anns)), lambda a: (a.start, a.end, a.tag))


def strip_titles(anns: Iterable[Annotation], text: str, titles: Sequence[str] = DEFAULT_TITLES) -> list[Annotation]:
    """Advance Name/Initials annotations past leading titles; drop annotations that are only a title."""
    folded = sorted({t.casefold() for t in titles}, key=len, reverse=True)
    out = []
    for a in anns:
        if a.tag not in ("Name", "Initials"):
            out.append(a)
            continue
        start = a.start
        changed = True
        while changed:
            changed = False
            rest = text[start:a.end].casefold()
            for t in folded:
                if rest == t:
                    start = a.end
                    break
                if rest.startswith(t) and rest[len(t):len(t) + 1].isspace():
                    start += len(t)
                    while start < a.end and text[start].isspace():
                        start += 1
                    changed = True
                    break
        if start < a.end:
            out.append(make_annotation(text, start, a.end, a.tag))
    return out


def map_tagset(anns: Iterable[Annotation], mapping: Mapping[str, str]) -> list[Annotation]:
    out = []
    for a in anns:
        if a.tag not in mapping:
            raise KeyError(f"tag mapping has no entry for {a.tag!r}")
        out.append(Annotation(a.start, a.end, mapping[a.tag], a.surface))
    return out


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def tag_rules(doc: Document, cfg: RuleConfig, explain: bool = False):
    """Tag PHI in ``doc`` with the rule matchers.

    Returns non-overlapping NUT annotations; with ``explain=True`` returns
    ``(annotation, matcher_name)`` pairs instead.
    """
    text = doc.text
    tdoc = tokenize(text)
    tokens = tdoc.tokens
    sentence_starts = {s[0].start for s in tdoc.sentences}
    on = lambda cat: cat not in cfg.disabled  # noqa: E731

    matches: list[Match] = []
    if on("Date"):
        matches += match_dates(text, sentence_starts)
    if on("Phone/Fax"):
        matches += match_phones(text)
    contact = match_contact(text)
    matches += [m for m in contact if on(m.tag)]
    if on("Age"):
        matches += match_ages(text)
    if on("Name"):
        names = match_names(text, tokens, sentence_starts, cfg, use_initials=on("Initials"))
        matches += names
    matches += match_lookups(text, tokens, cfg, institutions=on("Institution"), addresses=on("Address"))

    kept = _resolve(matches, lambda m: (m.start, m.end, m.tag))
    out = []
    for m in kept:
        ann = make_annotation(text, m.start, m.end, m.tag)
        stripped = strip_titles([ann], text, cfg.titles)
        if stripped:
            out.append((stripped[0], m.matcher))
    if explain:
        return out
    return [a for a, _ in out]
