"""Document model, tokenization, BIO encoding/repair, standoff and JSONL I/O, corpus splits."""

from __future__ import annotations

import bisect
import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

# ---------------------------------------------------------------------------
# Tag sets and annotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TagSet:
    name: str
    tags: tuple[str, ...]

    def __post_init__(self):
        if not self.tags:
            raise ValueError(f"tag set {self.name!r} is empty")
        if len(set(self.tags)) != len(self.tags):
            raise ValueError(f"tag set {self.name!r} has duplicate tags")

    def __contains__(self, tag: object) -> bool:
        return tag in self.tags

    def index(self, tag: str) -> int:
        return self.tags.index(tag)

    def bio_labels(self) -> list[str]:
        """Label alphabet: ``O`` first, then ``B-t``/``I-t`` in tag order."""
        labels = ["O"]
        for tag in self.tags:
            labels += [f"B-{tag}", f"I-{tag}"]
        return labels


NUT_TAGS = TagSet(
    "NUT-16",
    (
        "Name",
        "Initials",
        "Profession",
        "Internal Location",
        "Hospital",
        "Organization",
        "Care Institute",
        "Address",
        "Age",
        "Date",
        "Phone/Fax",
        "Email",
        "URL/IP",
        "SSN",
        "ID",
        "Other",
    ),
)

LOCATION_TAGS = ("Internal Location", "Hospital", "Organization", "Care Institute")

# NUT tags with the four named-location tags folded into one.
NAMED_LOCATION_TAGS = TagSet(
    "NUT-named-location",
    tuple(t for t in NUT_TAGS.tags if t not in LOCATION_TAGS) + ("Named Location",),
)

TAGSETS = {NUT_TAGS.name: NUT_TAGS, NAMED_LOCATION_TAGS.name: NAMED_LOCATION_TAGS}


@dataclass(frozen=True, order=True)
class Annotation:
    start: int
    end: int
    tag: str
    surface: str = field(compare=False, default="")

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.start, self.end, self.tag)


@dataclass
class Document:
    doc_id: str
    text: str
    annotations: list[Annotation] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)
    # optional per-token attribute columns (e.g. "pos", "ner") aligned with tokenize(text)
    attrs: dict[str, list[str]] | None = None

    def __post_init__(self):
        self.annotations = sorted(self.annotations)

    def with_annotations(self, annotations: Iterable[Annotation]) -> "Document":
        return Document(self.doc_id, self.text, list(annotations), dict(self.meta), self.attrs)


def make_annotation(text: str, start: int, end: int, tag: str) -> Annotation:
    return Annotation(start, end, tag, text[start:end])


def validate_annotation(ann: Annotation, text: str, tagset: TagSet | None = None) -> None:
    if not (0 <= ann.start < ann.end <= len(text)):
        raise ValueError(f"annotation {ann.key} out of bounds for text of length {len(text)}")
    if text[ann.start:ann.end] != ann.surface:
        raise ValueError(
            f"annotation {ann.key}: surface {ann.surface!r} != text slice {text[ann.start:ann.end]!r}"
        )
    if tagset is not None and ann.tag not in tagset:
        raise ValueError(f"annotation {ann.key}: tag {ann.tag!r} not in tag set {tagset.name}")


def validate_document(doc: Document, tagset: TagSet | None = None) -> None:
    if not doc.doc_id:
        raise ValueError("document has empty doc_id")
    for ann in doc.annotations:
        validate_annotation(ann, doc.text, tagset)


def find_overlaps(anns: Sequence[Annotation]) -> list[tuple[Annotation, Annotation]]:
    ordered = sorted(anns)
    out = []
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            out.append((a, b))
    return out


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    start: int
    end: int
    surface: str


Sentence = list  # list[Token]


@dataclass
class TokenizedDoc:
    text: str
    sentences: list[list[Token]]

    @property
    def tokens(self) -> list[Token]:
        return [tok for sent in self.sentences for tok in sent]


_CHUNK_RE = re.compile(r"\S+")
_KEEP_IN_DIGIT_RUNS = set("-.@:")

# Tokens after which a period never ends a sentence (case-folded, without the period).
ABBREVIATIONS = frozenset(
    """dhr mw mevr mej dr drs ir ing prof mr zr br st nr bijv ca evt mbt ivm resp
    tel vs jan feb febr mrt apr jun jul aug sep sept okt nov dec pt pat""".split()
)


def _split_core(chunk: str, offset: int) -> list[Token]:
    if not chunk:
        return []
    keep_inner = any(c.isdigit() for c in chunk) or "@" in chunk
    tokens: list[Token] = []
    i = 0
    run_start = 0
    while i < len(chunk):
        c = chunk[i]
        if c.isalnum() or (keep_inner and c in _KEEP_IN_DIGIT_RUNS):
            i += 1
            continue
        if run_start < i:
            tokens.append(Token(offset + run_start, offset + i, chunk[run_start:i]))
        tokens.append(Token(offset + i, offset + i + 1, c))
        i += 1
        run_start = i
    if run_start < len(chunk):
        tokens.append(Token(offset + run_start, offset + len(chunk), chunk[run_start:]))
    return tokens


def _split_chunk(chunk: str, offset: int) -> list[Token]:
    lo, hi = 0, len(chunk)
    while lo < hi and not chunk[lo].isalnum():
        lo += 1
    while hi > lo and not chunk[hi - 1].isalnum():
        hi -= 1
    lead = [Token(offset + i, offset + i + 1, chunk[i]) for i in range(lo)]
    trail = [Token(offset + i, offset + i + 1, chunk[i]) for i in range(hi, len(chunk))]
    return lead + _split_core(chunk[lo:hi], offset + lo) + trail


def _is_sentence_break(text: str, prev2: Token | None, prev: Token, nxt: Token) -> bool:
    gap = text[prev.end:nxt.start]
    if gap.count("\n") >= 2:
        return True
    if prev.surface not in (".", "?", "!"):
        return False
    if not gap or not gap.isspace():
        return False
    first = nxt.surface[0]
    if not (first.isupper() or first.isdigit()):
        return False
    if prev.surface == "." and prev2 is not None and prev2.end == prev.start:
        word = prev2.surface
        if word.casefold() in ABBREVIATIONS or (len(word) == 1 and word.isalpha()):
            return False
    return True


def tokenize(text: str) -> TokenizedDoc:
    """Split ``text`` into sentences of tokens with exact character offsets.

    Whitespace separates chunks; leading and trailing punctuation is peeled off
    each chunk. Chunks containing a digit or ``@`` keep ``- . @ :`` internally
    (dates, phone numbers, e-mail addresses stay whole) but always split on
    ``/``. Other chunks split on every non-alphanumeric character.
    """
    tokens: list[Token] = []
    for m in _CHUNK_RE.finditer(text):
        tokens.extend(_split_chunk(m.group(), m.start()))
    sentences: list[list[Token]] = []
    current: list[Token] = []
    for i, tok in enumerate(tokens):
        if current and _is_sentence_break(text, tokens[i - 2] if i >= 2 else None, tokens[i - 1], tok):
            sentences.append(current)
            current = []
        current.append(tok)
    if current:
        sentences.append(current)
    return TokenizedDoc(text, sentences)


# ---------------------------------------------------------------------------
# BIO encoding
# ---------------------------------------------------------------------------


@dataclass
class AlignmentReport:
    # annotations dropped because a boundary fell inside a token (strict) or a snap collided
    failures: list[Annotation] = field(default_factory=list)
    # annotations that span a sentence boundary (emitted as several entities)
    split: list[Annotation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and not self.split


def to_bio(
    tdoc: TokenizedDoc,
    anns: Iterable[Annotation],
    tagset: TagSet,
    mode: str = "snap",
) -> tuple[list[list[str]], AlignmentReport]:
    """Label every token with O / B-tag / I-tag.

    In ``strict`` mode an annotation whose boundary falls inside a token is
    dropped and recorded. In ``snap`` mode boundaries grow outward to the
    enclosing tokens; a snapped span colliding with an earlier one is dropped.
    """
    if mode not in ("strict", "snap"):
        raise ValueError(f"unknown alignment mode {mode!r}")
    anns = sorted(anns)
    overlaps = find_overlaps(anns)
    if overlaps:
        a, b = overlaps[0]
        raise ValueError(f"overlapping annotations {a.key} and {b.key}; resolve overlaps first")
    for ann in anns:
        if ann.tag not in tagset:
            raise ValueError(f"annotation {ann.key}: tag {ann.tag!r} not in tag set {tagset.name}")

    flat = tdoc.tokens
    starts = [t.start for t in flat]
    labels = ["O"] * len(flat)
    ends = [t.end for t in flat]
    report = AlignmentReport()
    for ann in anns:
        lo = bisect.bisect_right(ends, ann.start)  # first token ending after start
        hi = bisect.bisect_left(starts, ann.end)  # first token starting at/after end
        covered = range(lo, hi)
        if not covered:
            report.failures.append(ann)
            continue
        inside = flat[lo].start >= ann.start and flat[hi - 1].end <= ann.end
        if mode == "strict" and not inside:
            report.failures.append(ann)
            continue
        if any(labels[i] != "O" for i in covered):
            report.failures.append(ann)
            continue
        labels[lo] = f"B-{ann.tag}"
        for i in range(lo + 1, hi):
            labels[i] = f"I-{ann.tag}"

    seqs: list[list[str]] = []
    pos = 0
    for sent in tdoc.sentences:
        seq = labels[pos:pos + len(sent)]
        pos += len(sent)
        if seq and seq[0].startswith("I-"):
            seq[0] = "B-" + seq[0][2:]
            report.split.append(next(a for a in anns if a.start < sent[0].start < a.end))
        seqs.append(seq)
    return seqs, report


def _tag_of(label: str) -> str:
    return label[2:]


def is_valid_bio(seq: Sequence[str]) -> bool:
    prev = "O"
    for label in seq:
        if label.startswith("I-") and (prev == "O" or _tag_of(prev) != _tag_of(label)):
            return False
        prev = label
    return True


def repair_bio(seq: Sequence[str]) -> list[str]:
    """Turn every I- label that does not continue an entity of its own type into B-."""
    out = []
    prev = "O"
    for label in seq:
        if label.startswith("I-") and (prev == "O" or _tag_of(prev) != _tag_of(label)):
            label = "B-" + _tag_of(label)
        out.append(label)
        prev = label
    return out


def from_bio(tdoc: TokenizedDoc, seqs: Sequence[Sequence[str]]) -> list[Annotation]:
    if len(seqs) != len(tdoc.sentences):
        raise ValueError(f"{len(seqs)} label sequences for {len(tdoc.sentences)} sentences")
    anns = []
    for si, (sent, seq) in enumerate(zip(tdoc.sentences, seqs)):
        if len(sent) != len(seq):
            raise ValueError(f"sentence {si}: {len(seq)} labels for {len(sent)} tokens")
        if not is_valid_bio(seq):
            raise ValueError(f"sentence {si}: invalid BIO transition, run repair_bio first")
        start = tag = None
        end = 0
        for tok, label in zip(sent, seq):
            if label == "O" or label.startswith("B-"):
                if tag is not None:
                    anns.append(make_annotation(tdoc.text, start, end, tag))
                    tag = None
                if label.startswith("B-"):
                    start, tag = tok.start, _tag_of(label)
            end = tok.end
        if tag is not None:
            anns.append(make_annotation(tdoc.text, start, end, tag))
    return anns


# ---------------------------------------------------------------------------
# Standoff (brat-style) I/O
# ---------------------------------------------------------------------------


class StandoffError(ValueError):
    pass


def _encode_tag(tag: str) -> str:
    return tag.replace("/", "_").replace(" ", "_")


def read_standoff(
    text: str, ann: str, doc_id: str = "doc", tagset: TagSet = NUT_TAGS, meta: Mapping[str, str] | None = None
) -> Document:
    decode = {_encode_tag(t): t for t in tagset.tags}
    anns = []
    for lineno, line in enumerate(ann.splitlines(), start=1):
        if not line.strip() or not line.startswith("T"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise StandoffError(f"line {lineno}: expected 3 tab-separated fields")
        ident, span, surface = parts
        fields_ = span.split(" ")
        if len(fields_) != 3 or ";" in span:
            raise StandoffError(f"line {lineno}: malformed span {span!r} at {ident}")
        raw_tag, s, e = fields_
        try:
            start, end = int(s), int(e)
        except ValueError:
            raise StandoffError(f"line {lineno}: non-integer offsets at {ident}") from None
        tag = decode.get(raw_tag)
        if tag is None:
            raise StandoffError(f"line {lineno}: unknown tag {raw_tag!r} at {ident}")
        if not (0 <= start < end <= len(text)):
            raise StandoffError(f"line {lineno}: offsets {start}-{end} out of bounds at {ident}")
        if text[start:end].replace("\n", " ") != surface:
            raise StandoffError(f"line {lineno}: surface mismatch at {ident}")
        anns.append(Annotation(start, end, tag, text[start:end]))
    return Document(doc_id, text, anns, dict(meta or {}))


def write_standoff(doc: Document) -> tuple[str, str]:
    lines = []
    for i, a in enumerate(sorted(doc.annotations), start=1):
        lines.append(f"T{i}\t{_encode_tag(a.tag)} {a.start} {a.end}\t{a.surface.replace(chr(10), ' ')}")
    return doc.text, "".join(line + "\n" for line in lines)


def save_standoff_dir(docs: Iterable[Document], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc in docs:
        text, ann = write_standoff(doc)
        (directory / f"{doc.doc_id}.txt").write_text(text, encoding="utf-8", newline="")
        (directory / f"{doc.doc_id}.ann").write_text(ann, encoding="utf-8", newline="")


def load_standoff_dir(directory: str | Path, tagset: TagSet = NUT_TAGS) -> list[Document]:
    directory = Path(directory)
    docs = []
    for txt in sorted(directory.glob("*.txt")):
        ann_path = txt.with_suffix(".ann")
        ann = ann_path.read_text(encoding="utf-8") if ann_path.exists() else ""
        try:
            docs.append(read_standoff(txt.read_text(encoding="utf-8"), ann, txt.stem, tagset))
        except StandoffError as exc:
            raise StandoffError(f"{ann_path}: {exc}") from None
    return docs


# ---------------------------------------------------------------------------
# JSONL I/O
# ---------------------------------------------------------------------------


def doc_to_dict(doc: Document) -> dict:
    out = {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "meta": dict(doc.meta),
        "annotations": [{"start": a.start, "end": a.end, "tag": a.tag} for a in sorted(doc.annotations)],
    }
    if doc.attrs is not None:
        out["attrs"] = doc.attrs
    return out


def doc_from_dict(obj: Mapping, tagset: TagSet | None = None) -> Document:
    text = obj["text"]
    anns = [make_annotation(text, a["start"], a["end"], a["tag"]) for a in obj.get("annotations", [])]
    doc = Document(str(obj["doc_id"]), text, anns, dict(obj.get("meta", {})), obj.get("attrs"))
    validate_document(doc, tagset)
    return doc


def dumps_jsonl(docs: Iterable[Document]) -> str:
    return "".join(json.dumps(doc_to_dict(d), ensure_ascii=False, sort_keys=True) + "\n" for d in docs)


def write_jsonl(docs: Iterable[Document], path: str | Path) -> None:
    Path(path).write_text(dumps_jsonl(docs), encoding="utf-8")


def read_jsonl(path: str | Path, tagset: TagSet | None = None) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                docs.append(doc_from_dict(json.loads(line), tagset))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return docs


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


@dataclass
class Partition:
    train: list[str]
    dev: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"train": self.train, "dev": self.dev, "test": self.test, "seed": self.seed,
                "ratios": list(self.ratios)}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Partition":
        return cls(list(obj["train"]), list(obj["dev"]), list(obj["test"]), obj["seed"], tuple(obj["ratios"]))


def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    sizes = [math.floor(n * r + 1e-9) for r in ratios]
    i = 0
    while sum(sizes) < n:  # remainder goes round-robin, train first
        sizes[i % len(sizes)] += 1
        i += 1
    return sizes


def split_corpus(corpus: Sequence[Document], ratios=(0.6, 0.2, 0.2), seed: int = 0) -> Partition:
    if not corpus:
        raise ValueError("cannot split an empty corpus")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    ids = [d.doc_id for d in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate doc_id in corpus")
    random.Random(seed).shuffle(ids)
    n_train, n_dev, _ = split_sizes(len(ids), ratios)
    return Partition(ids[:n_train], ids[n_train:n_train + n_dev], ids[n_train + n_dev:], seed, ratios)


def select(corpus: Iterable[Document], ids: Iterable[str]) -> list[Document]:
    by_id = {d.doc_id: d for d in corpus}
    return [by_id[i] for i in ids]


def sentence_units(docs: Iterable[Document]) -> list[Document]:
    """Cut documents into one small document per sentence, annotations rebased.

    Annotations crossing a sentence boundary are clipped to the sentence.
    """
    units = []
    for doc in docs:
        tdoc = tokenize(doc.text)
        for si, sent in enumerate(tdoc.sentences):
            lo, hi = sent[0].start, sent[-1].end
            anns = []
            for a in doc.annotations:
                s, e = max(a.start, lo), min(a.end, hi)
                if s < e:
                    anns.append(make_annotation(doc.text[lo:hi], s - lo, e - lo, a.tag))
            attrs = None
            if doc.attrs:
                first = sum(len(x) for x in tdoc.sentences[:si])
                attrs = {k: v[first:first + len(sent)] for k, v in doc.attrs.items()}
            units.append(Document(f"{doc.doc_id}#{si}", doc.text[lo:hi], anns, dict(doc.meta), attrs))
    return units
