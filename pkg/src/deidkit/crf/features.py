"""Token features for the CRF tagger: n-grams, POS, affixes, orthography, shapes, sentence cues."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

GROUPS = ("bow", "pos", "bow_pos", "sentence", "affixes", "orthographic", "shapes", "ner")

_BRACKETS = {")": "(", "]": "[", "}": "{"}


@dataclass(frozen=True)
class FeatureConfig:
    window: tuple[int, int] = (-2, 2)
    affix_max: int = 5
    groups: tuple[str, ...] = GROUPS
    min_feature_count: int = 1
    bias: bool = True

    def __post_init__(self):
        lo, hi = self.window
        if not lo <= 0 <= hi:
            raise ValueError(f"window must satisfy lo <= 0 <= hi, got {self.window}")
        if self.affix_max < 1:
            raise ValueError("affix_max must be >= 1")
        if self.min_feature_count < 1:
            raise ValueError("min_feature_count must be >= 1")
        unknown = set(self.groups) - set(GROUPS)
        if unknown:
            raise ValueError(f"unknown feature groups: {sorted(unknown)}")
        object.__setattr__(self, "window", tuple(self.window))
        object.__setattr__(self, "groups", tuple(g for g in GROUPS if g in self.groups))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["groups"] = list(self.groups)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureConfig":
        d = dict(d)
        if "window" in d:
            d["window"] = tuple(d["window"])
        if "groups" in d:
            d["groups"] = tuple(d["groups"])
        return cls(**d)


def word_shape(token: str) -> str:
    """``7534-Df`` -> ``####-Aa``."""
    out = []
    for c in token:
        if c.isupper():
            out.append("A")
        elif c.islower():
            out.append("a")
        elif c.isdigit():
            out.append("#")
        else:
            out.append(c)
    return "".join(out)


def length_bucket(n: int) -> str:
    if n <= 5:
        return "<=5"
    if n <= 15:
        return "6-15"
    if n <= 40:
        return "16-40"
    return ">40"


def _unbalanced(tokens: Sequence[str]) -> bool:
    stack = []
    for tok in tokens:
        for c in tok:
            if c in "([{":
                stack.append(c)
            elif c in _BRACKETS:
                if not stack or stack[-1] != _BRACKETS[c]:
                    return True
                stack.pop()
    return bool(stack)


def _at(seq: Sequence[str], idx: int) -> str:
    n = len(seq)
    if idx < 0:
        return "BOS" if idx == -1 else f"BOS{-idx}"
    if idx >= n:
        return "EOS" if idx == n else f"EOS{idx - n + 1}"
    return seq[idx]


def _ngrams(prefix: str, seq: Sequence[str], i: int, lo: int, hi: int) -> list[str]:
    out = []
    for k in range(lo, hi + 1):
        out.append(f"{prefix}[{k}]={_at(seq, i + k)}")
    for k in range(lo, hi):
        out.append(f"{prefix}[{k}]|{prefix}[{k + 1}]={_at(seq, i + k)}|{_at(seq, i + k + 1)}")
    for k in range(lo, hi - 1):
        out.append(f"{prefix}[{k}]|{prefix}[{k + 1}]|{prefix}[{k + 2}]="
                   f"{_at(seq, i + k)}|{_at(seq, i + k + 1)}|{_at(seq, i + k + 2)}")
    return out


def orthographic_flags(token: str) -> list[str]:
    flags = []
    letters = [c for c in token if c.isalpha()]
    if letters and all(c.isupper() for c in letters):
        flags.append("allcaps")
    if token[:1].isupper():
        flags.append("cap")
    if any(c.isupper() for c in token[1:]):
        flags.append("capin")
    if any(c.isdigit() for c in token):
        flags.append("digit")
    if any(not c.isalnum() for c in token):
        flags.append("punct")
    if token.isascii():
        flags.append("ascii")
    return flags


def extract_features(
    tokens: Sequence[str],
    cfg: FeatureConfig = FeatureConfig(),
    attrs: Mapping[str, Sequence[str]] | None = None,
) -> list[list[str]]:
    """One list of binary feature strings per token.

    POS features need ``attrs["pos"]`` and NER features ``attrs["ner"]``;
    when an attribute column is missing its groups are skipped.
    """
    attrs = attrs or {}
    for key, col in attrs.items():
        if len(col) != len(tokens):
            raise ValueError(f"attribute {key!r} has {len(col)} values for {len(tokens)} tokens")
    groups = set(cfg.groups)
    pos = attrs.get("pos")
    ner = attrs.get("ner")
    lo, hi = cfg.window
    words = [t.lower() for t in tokens]

    sent_feats = []
    if "sentence" in groups and tokens:
        sent_feats = [
            f"slen={length_bucket(len(tokens))}",
            f"endmark={'true' if tokens[-1] in ('.', '?', '!') else 'false'}",
            f"unbal={'true' if _unbalanced(tokens) else 'false'}",
        ]

    out = []
    for i, tok in enumerate(tokens):
        feats: list[str] = ["bias"] if cfg.bias else []
        if "bow" in groups:
            feats += _ngrams("w", words, i, lo, hi)
        if pos is not None and "pos" in groups:
            feats += _ngrams("p", pos, i, lo, hi)
        if pos is not None and "bow_pos" in groups:
            feats += [f"wp[{k}]={_at(words, i + k)}|{_at(pos, i + k)}" for k in (-1, 0, 1)]
        feats += sent_feats
        if "affixes" in groups:
            w = words[i]
            for k in range(1, min(cfg.affix_max, len(w)) + 1):
                feats.append(f"pre{k}={w[:k]}")
                feats.append(f"suf{k}={w[-k:]}")
        if "orthographic" in groups:
            feats += orthographic_flags(tok)
        if "shapes" in groups:
            feats.append(f"shape={word_shape(tok)}")
        if ner is not None and "ner" in groups:
            feats.append(f"ner={ner[i]}")
        out.append(list(dict.fromkeys(feats)))
    return out


@dataclass
class FeatureIndex:
    features: list[str]
    counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.lookup = {f: i for i, f in enumerate(self.features)}

    def __len__(self) -> int:
        return len(self.features)

    def encode(self, featseq: Sequence[Sequence[str]]) -> list[list[int]]:
        lookup = self.lookup
        return [[lookup[f] for f in feats if f in lookup] for feats in featseq]


def build_feature_index(train: Iterable[Sequence[Sequence[str]]], min_count: int = 1) -> FeatureIndex:
    """Index features seen at least ``min_count`` times, ordered by (count desc, name)."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n_seqs = 0
    for featseq in train:
        n_seqs += 1
        for feats in featseq:
            counts.update(feats)
    if n_seqs == 0:
        raise ValueError("cannot build a feature index from an empty training set")
    kept = sorted((f for f, c in counts.items() if c >= min_count), key=lambda f: (-counts[f], f))
    return FeatureIndex(kept, [counts[f] for f in kept])
