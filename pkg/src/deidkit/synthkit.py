"""Seeded synthetic corpus: Dutch-flavoured care-record templates with gold-annotated PHI.

A template is a block of text with ``{Tag}`` slots. A document is one or more
template blocks separated by blank lines, with every slot filled from the
pool of its tag. Name slots draw a share (``oov_fraction``) of their fillers
from invented names that appear in none of the rule tagger's lookup lists.

Template file format (UTF-8, line oriented)::

    # comment
    @template
    Naam: {Name}
    Leeftijd: {Age} jaar
    @fillers Profession
    verpleegkundige
    @oov Name
    Kwarbo Zelintje

Lines after ``@template`` up to the next ``@`` directive form one template;
lines after ``@fillers TAG`` or ``@oov Name`` are one filler each. Fixed
template text must not contain digits.
"""

from __future__ import annotations

import datetime as dt
import functools
import random
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import NUT_TAGS, Annotation, Document, TagSet, to_bio, tokenize
from .resources import builtin, load_tagged_list, DATA_DIR
from .ruletagger import edit_distance, elfproef
from .surrogate import MONTHS, MONTH_ABBR

SLOT = re.compile(r"\{([^{}]+)\}")
MIN_FILLERS = 20

# ---------------------------------------------------------------------------
# Template set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TemplateSet:
    templates: tuple[str, ...]
    fillers: dict[str, tuple[str, ...]]
    oov_names: tuple[str, ...] = ()
    tagset: TagSet = NUT_TAGS

    def __post_init__(self):
        if not self.templates:
            raise ValueError("template set has no templates")
        for i, t in enumerate(self.templates):
            fixed = SLOT.sub("", t)
            if re.search(r"\d", fixed):
                raise ValueError(f"template {i} has digits in its fixed text")
            for tag in SLOT.findall(t):
                if tag not in self.tagset:
                    raise ValueError(f"template {i}: slot {{{tag}}} is not a tag of {self.tagset.name}")
                if not self.fillers.get(tag):
                    raise ValueError(f"template {i}: no fillers for slot {{{tag}}}")

    def slot_tags(self) -> set[str]:
        return {tag for t in self.templates for tag in SLOT.findall(t)}

    def check_coverage(self, min_fillers: int = MIN_FILLERS) -> None:
        """Every tag of the tag set has a slot and at least ``min_fillers`` distinct fillers."""
        missing = [t for t in self.tagset.tags if t not in self.slot_tags()]
        if missing:
            raise ValueError(f"tags without a template slot: {missing}")
        thin = [t for t in self.tagset.tags if len(set(self.fillers.get(t, ()))) < min_fillers]
        if thin:
            raise ValueError(f"tags with fewer than {min_fillers} fillers: {thin}")

    def dumps(self) -> str:
        lines = []
        for t in self.templates:
            lines.append("@template")
            lines.extend(t.split("\n"))
        for tag in sorted(self.fillers):
            lines.append(f"@fillers {tag}")
            lines.extend(self.fillers[tag])
        if self.oov_names:
            lines.append("@oov Name")
            lines.extend(self.oov_names)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, tagset: TagSet = NUT_TAGS, source: str = "<string>") -> "TemplateSet":
        templates: list[list[str]] = []
        fillers: dict[str, list[str]] = {}
        oov: list[str] = []
        current: list[str] | None = None
        in_template = False
        for no, line in enumerate(text.splitlines(), 1):
            if line.startswith("@"):
                head, _, arg = line[1:].partition(" ")
                in_template = head == "template"
                if in_template:
                    current = []
                    templates.append(current)
                elif head == "fillers" and arg.strip():
                    current = fillers.setdefault(arg.strip(), [])
                elif head == "oov" and arg.strip() == "Name":
                    current = oov
                else:
                    raise ValueError(f"{source}:{no}: unknown directive {line!r}")
            elif in_template:
                current.append(line)
            elif line.strip() and not line.startswith("#"):
                if current is None:
                    raise ValueError(f"{source}:{no}: text before the first directive")
                current.append(line.strip())
        blocks = tuple("\n".join(t).strip("\n") for t in templates)
        return cls(blocks, {k: tuple(v) for k, v in fillers.items()}, tuple(oov), tagset)

    @classmethod
    def load(cls, path: str | Path, tagset: TagSet = NUT_TAGS) -> "TemplateSet":
        return cls.loads(Path(path).read_text(encoding="utf-8"), tagset, str(path))


# ---------------------------------------------------------------------------
# Built-in templates and filler pools
# ---------------------------------------------------------------------------

RECORD_TEMPLATES = (
    # header block
    "Naam: {Name}\nGeboortedatum: {Date}\nLeeftijd: {Age} jaar\nAdres: {Address}\nTelefoon: {Phone/Fax}\n"
    "BSN: {SSN}\nPatiëntnummer: {ID}",
    # SOEP notes
    "S: Mevrouw vertelt dat haar zoon {Name} op {Date} langs is geweest.\n"
    "O: Zij oogt vermoeid, zit in de huiskamer van {Internal Location}.\n"
    "E: Overleg i.o.m. {Initials} over de medicatie.\n"
    "P: Afspraak maken met {Hospital} voor controle.",
    "S: Meneer geeft aan pijn te hebben.\n"
    "O: Bezoek van {Name} gehad, sfeer was goed.\n"
    "E: Wondzorg door {Organization} wordt voortgezet.\n"
    "P: Evaluatie op {Date}, rapportage door {Initials}.",
    "Cliënt is op {Date} verhuisd van {Care Institute} naar {Internal Location}.\n"
    "Contactpersoon is {Name}, bereikbaar via {Phone/Fax} of {Email}.",
    "Cliënt werkte vroeger als {Profession} en was jarenlang supporter van {Other}.\n"
    "Hij vertelt graag over zijn tijd bij {Organization}.",
    "Dochter {Name} belde om te vragen naar de uitslag van {Hospital}.\n"
    "Zij heeft op {Date} contact opgenomen met de {Profession}.",
    "Informatie over de dagbesteding staat op {URL/IP}.\n"
    "Aanmelding via de website is gedaan door {Name} op {Date}.",
    "Mevrouw is opgenomen in {Hospital} na een val in {Care Institute}.\n"
    "Overdracht naar {Internal Location} volgt z.s.m. volgens {Initials}.",
    "Cliënt is {Age} jaar en woont zelfstandig aan de {Address}.\n"
    "Zorg wordt geleverd door {Organization}, contact via {Email}.",
    "Z.n. telefonisch contact met {Name}, nummer {Phone/Fax}.\n"
    "Verwijzing staat in het dossier onder nummer {ID}.",
    # signature block
    "Met vriendelijke groet,\n{Name}\n{Profession}\n{Care Institute}",
    "Bijzonderheden: mevrouw heeft een voorliefde voor {Other} en gaat graag naar {Internal Location}.",
)

SEPARABLE_TEMPLATE = (
    "naam: {Name}\nparaaf: {Initials}\nberoep: {Profession}\nafdeling: {Internal Location}\n"
    "ziekenhuis: {Hospital}\norganisatie: {Organization}\nzorginstelling: {Care Institute}\n"
    "adres: {Address}\nleeftijd: {Age}\ndatum: {Date}\ntelefoon: {Phone/Fax}\nemail: {Email}\n"
    "website: {URL/IP}\nbsn: {SSN}\ndossiernummer: {ID}\noverig: {Other}"
)

PROFESSIONS = (
    "timmerman", "bakker", "lerares", "vrachtwagenchauffeur", "boer", "juf op de basisschool",
    "onderwijzer", "loodgieter", "schilder", "kapster", "metselaar", "postbode", "verpleegster",
    "boekhouder", "melkboer", "slager", "monteur", "secretaresse", "huisvrouw", "dominee",
    "bloemist", "visser", "tandarts", "notaris", "schoenmaker", "man van de groenteboer",
    "vrouw achter de kassa", "conducteur",
)

OTHER = (
    "Ajax", "PSV", "Feyenoord", "Vitesse", "Go Ahead Eagles", "de Vierdaagse", "de Elfstedentocht",
    "Heracles", "FC Twente", "de Graafschap", "Willem II", "NAC", "Sparta", "de Tour de France",
    "het Holland Festival", "Oerol", "Pinkpop", "de Zwarte Cross", "Lowlands", "het Concertgebouworkest",
    "het Songfestival", "de Dodenherdenking",
)

EXTRA_LOCATIONS = {
    "Hospital": (
        "Ziekenhuis Rivierenland", "St. Antonius Ziekenhuis", "het Wilhelmina Ziekenhuis", "Ikazia",
        "het Deventer Ziekenhuis", "Streekziekenhuis Koningin Beatrix", "Ziekenhuis Amstelland",
        "het Van Weel-Bethesda", "Bravis", "het Rode Kruis Ziekenhuis", "Zuyderland", "Franciscus Gasthuis",
        "Laurentius", "Treant",
    ),
    "Care Institute": (
        "de Liendert", "het Hooge Veld", "Zorgcentrum Sint Jozef", "de Zonnewende", "Huize Meyerhof",
        "het Anker", "de Molenhof", "Woonzorgcentrum Vredewold", "de Wingerd", "het Spectrum",
    ),
    "Organization": (
        "de Zonnebloem", "het Leger des Heils", "de Voedselbank", "Vitens", "Buurtzorg", "het Wmo-loket",
        "de gemeente", "het CAK", "de Belastingdienst", "Sociaal Team", "Tafeltje Dekje", "het UWV",
    ),
    "Internal Location": (
        "de Kajuit", "afdeling Zonnedauw", "de Hofjes", "groep Lavendel", "het Atrium", "de Serre",
        "paviljoen Hei", "woongroep Brem", "de Tuinkamer", "afdeling Lelie", "de Vlonder", "de Patio",
        "het Souterrain", "woning Wilg", "de Linde", "kamer Iris",
    ),
}

_ONSETS = ("b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "dr",
           "gr", "kl", "kr", "pr", "sl", "st", "tr", "zw")
_VOWELS = ("a", "e", "i", "o", "u", "aa", "ee", "oo", "ie", "ou", "ui", "ei")
_CODAS = ("", "", "l", "n", "r", "s", "k", "t", "m")
_FAMILY_SUFFIXES = ("ink", "stra", "ema", "inga", "sma", "man", "ert", "ling", "houw")


def _syllables(rng: random.Random, n: int) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS) for _ in range(n))


def _lookup_words() -> set[str]:
    words = set()
    for name in ("given_names", "family_names", "cities", "streets", "countries"):
        for entry in builtin(name):
            words.update(w.casefold() for w in entry.split())
    for entry, _ in load_tagged_list(DATA_DIR / "institutions.txt"):
        words.update(w.casefold() for w in entry.split())
    return words


def _deletions(word: str, k: int) -> set[str]:
    out = {word}
    frontier = {word}
    for _ in range(k):
        frontier = {w[:i] + w[i + 1:] for w in frontier for i in range(len(w))}
        out |= frontier
    return out


@functools.lru_cache(maxsize=8)
def oov_name_pool(n: int = 300, seed: int = 0) -> tuple[str, ...]:
    """Invented names: every word is more than two edits away from any lookup-list word."""
    rng = random.Random(f"oov-{seed}")
    lookup = [w for w in _lookup_words() if len(w) > 1]
    # words within two edits share a variant with at most two deleted characters
    index: dict[str, list[str]] = {}
    for w in lookup:
        for v in _deletions(w, 2):
            index.setdefault(v, []).append(w)
    names: list[str] = []
    seen = set()

    def far(word):
        w = word.casefold()
        near = {x for v in _deletions(w, 2) for x in index.get(v, ())}
        return all(edit_distance(w, x, 3) > 2 for x in near)

    while len(names) < n:
        given = _syllables(rng, rng.choice((1, 2))).capitalize()
        family = (_syllables(rng, rng.choice((1, 2))) + rng.choice(_FAMILY_SUFFIXES)).capitalize()
        if given in seen and family in seen:
            continue
        if len(given) < 3 or not far(given) or not far(family):
            continue
        seen.update((given, family))
        names.append(rng.choice((f"{given} {family}", family, f"{given} {family}")))
    return tuple(dict.fromkeys(names))


def _dates(rng: random.Random, n: int) -> list[str]:
    formats = ("dmy", "dmy_short", "dmy_slash", "d_B_y", "d_b_y", "dm", "B_y", "y", "ymd", "d_B")
    out = []
    start = dt.date(2014, 1, 1)
    for i in range(n):
        d = start + dt.timedelta(days=rng.randrange(6 * 365))
        f = formats[i % len(formats)]
        out.append({
            "dmy": f"{d.day:02d}-{d.month:02d}-{d.year}",
            "dmy_short": f"{d.day}-{d.month}-{d.year}",
            "dmy_slash": f"{d.day:02d}/{d.month:02d}/{d.year}",
            "d_B_y": f"{d.day} {MONTHS[d.month - 1]} {d.year}",
            "d_b_y": f"{d.day} {MONTH_ABBR[d.month - 1]}. {d.year}",
            "dm": f"{d.day:02d}-{d.month:02d}",
            "B_y": f"{MONTHS[d.month - 1]} {d.year}",
            "y": f"{d.year}",
            "ymd": f"{d.year}-{d.month:02d}-{d.day:02d}",
            "d_B": f"{d.day} {MONTHS[d.month - 1]}",
        }[f])
    return out


def _digits(rng: random.Random, k: int) -> str:
    return "".join(rng.choice("0123456789") for _ in range(k))


def _phones(rng: random.Random, n: int) -> list[str]:
    out = []
    for i in range(n):
        out.append([
            lambda: f"06-{_digits(rng, 8)}",
            lambda: f"06{_digits(rng, 8)}",
            lambda: f"0{rng.randint(10, 99)}-{_digits(rng, 7)}",
            lambda: f"+31 6 {_digits(rng, 8)}",
            lambda: f"0{rng.randint(100, 999)}-{_digits(rng, 6)}",
        ][i % 5]())
    return out


def _ssns(rng: random.Random, n: int) -> list[str]:
    out = []
    while len(out) < n:
        s = str(rng.randint(1, 9)) + _digits(rng, 8)
        if elfproef(s):
            out.append(s)
    return out


def _ids(rng: random.Random, n: int) -> list[str]:
    return [[lambda: f"PT-{_digits(rng, 6)}", lambda: _digits(rng, 7), lambda: f"A{_digits(rng, 5)}",
             lambda: f"ZN{_digits(rng, 6)}"][i % 4]() for i in range(n)]


def _emails(rng: random.Random, n: int, given: Sequence[str], family: Sequence[str]) -> list[str]:
    domains = ("gmail.com", "hotmail.com", "zorg.nl", "kpnmail.nl", "ziggo.nl", "outlook.com")
    out = []
    for _ in range(n):
        g = rng.choice(given).lower()
        f = rng.choice(family).split()[-1].lower()
        out.append(rng.choice((f"{g}.{f}", f"{g[0]}.{f}", f"{f}{rng.randint(1, 99)}")) + "@" + rng.choice(domains))
    return out


def _urls(rng: random.Random, n: int) -> list[str]:
    sites = ("zorgportaal", "mijnzorg", "dagbesteding", "thuiszorgwinkel", "zorgkaart", "clientenraad")
    out = []
    for i in range(n):
        if i % 3 == 2:
            out.append(f"{rng.randint(10, 223)}.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}")
        elif i % 3 == 1:
            out.append(f"https://www.{rng.choice(sites)}.nl/{rng.choice(('afspraak', 'info', 'contact'))}")
        else:
            out.append(f"www.{rng.choice(sites)}{rng.randint(1, 9)}.nl")
    return out


def _addresses(rng: random.Random, n: int, streets: Sequence[str], cities: Sequence[str]) -> list[str]:
    out = []
    for i in range(n):
        street, city = rng.choice(streets), rng.choice(cities)
        number = str(rng.randint(1, 250)) + rng.choice(("", "", "", "a", "b"))
        zip_code = f"{rng.randint(1000, 9999)} {rng.choice('ABCDEFGHJKLMNPRSTVWXZ')}{rng.choice('ABCDEFGHJKLMNPRSTVWXZ')}"
        out.append((f"{street} {number}", f"{street} {number}, {city}", f"{street} {number}, {zip_code} {city}",
                    f"{zip_code} {city}")[i % 4])
    return out


def _initials(rng: random.Random, n: int) -> list[str]:
    letters = "ABCDEFGHIJKLMNOPRSTVWZ"
    out = []
    for i in range(n):
        k = 1 + i % 3
        chars = [rng.choice(letters) for _ in range(k)]
        out.append("".join(c + "." for c in chars) if i % 2 else "".join(chars) + ("" if k > 1 else "."))
    return out


def _names(rng: random.Random, n: int, given: Sequence[str], family: Sequence[str]) -> list[str]:
    out = []
    for i in range(n):
        g, f = rng.choice(given), rng.choice(family)
        out.append((f"{g} {f}", f, f"{g} {f}", f"{g[0]}. {f}")[i % 4])
    return out


def _filter_pools(fillers: dict[str, list[str]], templates: Sequence[str]) -> dict[str, tuple[str, ...]]:
    """Drop fillers that occur inside template text or inside another tag's fillers (case-folded)."""
    fixed = "\n".join(SLOT.sub("\n", t) for t in templates).casefold()
    out = {}
    for tag, pool in fillers.items():
        others = "\n".join(f for t, p in fillers.items() if t != tag for f in p).casefold()
        keep = []
        for f in dict.fromkeys(pool):
            low = f.casefold()
            if len(low) >= 3 and (low in fixed or low in others):
                continue
            keep.append(f)
        out[tag] = tuple(keep)
    return out


@functools.lru_cache(maxsize=8)
def default_fillers(seed: int = 0, templates: tuple[str, ...] = RECORD_TEMPLATES) -> dict[str, tuple[str, ...]]:
    rng = random.Random(f"pools-{seed}")
    given, family = builtin("given_names"), builtin("family_names")
    streets, cities = builtin("streets"), builtin("cities")
    locations: dict[str, list[str]] = {t: list(v) for t, v in EXTRA_LOCATIONS.items()}
    for name, tag in load_tagged_list(DATA_DIR / "institutions.txt"):
        locations.setdefault(tag, []).append(name)
    pools = {
        "Name": _names(rng, 300, given, family),
        "Initials": _initials(rng, 60),
        "Profession": list(PROFESSIONS),
        "Address": _addresses(rng, 160, streets, cities),
        "Age": [str(a) for a in range(18, 105)],
        "Date": _dates(rng, 200),
        "Phone/Fax": _phones(rng, 80),
        "Email": _emails(rng, 60, given, family),
        "URL/IP": _urls(rng, 45),
        "SSN": _ssns(rng, 60),
        "ID": _ids(rng, 60),
        "Other": list(OTHER),
        **{t: sorted(v) for t, v in locations.items()},
    }
    return _filter_pools(pools, templates)


def default_templates(seed: int = 0) -> TemplateSet:
    return TemplateSet(RECORD_TEMPLATES, default_fillers(seed, RECORD_TEMPLATES), oov_name_pool(seed=seed))


def separable_templates(seed: int = 0) -> TemplateSet:
    """One field per line, each behind its own cue word: an easy corpus for trainability checks."""
    return TemplateSet((SEPARABLE_TEMPLATE,), default_fillers(seed, (SEPARABLE_TEMPLATE,)), oov_name_pool(seed=seed))


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _render(template: str, fill) -> tuple[str, list[Annotation]]:
    parts, anns = [], []
    pos = length = 0
    for m in SLOT.finditer(template):
        fixed = template[pos:m.start()]
        parts.append(fixed)
        length += len(fixed)
        value = fill(m.group(1))
        parts.append(value)
        anns.append(Annotation(length, length + len(value), m.group(1), value))
        length += len(value)
        pos = m.end()
    parts.append(template[pos:])
    return "".join(parts), anns


def generate_document(ts: TemplateSet, doc_id: str, rng: random.Random, oov_fraction: float = 0.0,
                      blocks: tuple[int, int] = (1, 3), max_tries: int = 20) -> Document:
    """One document of ``blocks`` template blocks; gold aligns to tokens (checked)."""
    for _ in range(max_tries):
        chosen = [rng.randrange(len(ts.templates)) for _ in range(rng.randint(*blocks))]

        def fill(tag):
            if tag == "Name" and ts.oov_names and rng.random() < oov_fraction:
                return rng.choice(ts.oov_names)
            return rng.choice(ts.fillers[tag])

        text, anns = "", []
        for k, idx in enumerate(chosen):
            if k:
                text += "\n\n"
            block, block_anns = _render(ts.templates[idx], fill)
            anns += [Annotation(a.start + len(text), a.end + len(text), a.tag, a.surface) for a in block_anns]
            text += block
        text += "\n"
        _, report = to_bio(tokenize(text), anns, ts.tagset, "strict")
        if report.ok:
            return Document(doc_id, text, anns, {"templates": ",".join(map(str, chosen))})
    raise RuntimeError(f"could not generate {doc_id} with token-aligned annotations; check the templates")


def generate_corpus(templates: TemplateSet | None = None, n_docs: int = 100, seed: int = 0,
                    oov_fraction: float = 0.0, blocks: tuple[int, int] = (1, 3)) -> list[Document]:
    """``n_docs`` documents; document i uses its own generator seeded by (seed, i)."""
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    if not 0.0 <= oov_fraction <= 1.0:
        raise ValueError(f"oov_fraction must be in [0, 1], got {oov_fraction}")
    if not 1 <= blocks[0] <= blocks[1]:
        raise ValueError(f"invalid blocks range {blocks}")
    ts = templates or default_templates()
    width = max(5, len(str(n_docs - 1)))
    return [generate_document(ts, f"synth-{i:0{width}d}", random.Random(f"{seed}-{i}"), oov_fraction, blocks)
            for i in range(n_docs)]


@dataclass
class CorpusStats:
    n_docs: int
    n_tokens: int
    n_entities: int
    median_entities_per_doc: float
    per_tag: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_docs": self.n_docs, "n_tokens": self.n_tokens, "n_entities": self.n_entities,
                "median_entities_per_doc": self.median_entities_per_doc, "per_tag": dict(self.per_tag)}


def corpus_stats(docs: Sequence[Document], tagset: TagSet = NUT_TAGS) -> CorpusStats:
    per_tag = {t: 0 for t in tagset.tags}
    for d in docs:
        for a in d.annotations:
            per_tag[a.tag] = per_tag.get(a.tag, 0) + 1
    counts = [len(d.annotations) for d in docs]
    return CorpusStats(len(docs), sum(len(tokenize(d.text).tokens) for d in docs), sum(counts),
                       float(statistics.median(counts)) if counts else 0.0, per_tag)
