import random
import re

import pytest

from deidkit.corpus import NUT_TAGS, to_bio, tokenize, validate_document
from deidkit.ruletagger import RuleConfig, edit_distance
from deidkit.surrogate import parse_date
from deidkit.synthkit import (
    TemplateSet,
    corpus_stats,
    default_templates,
    generate_corpus,
    generate_document,
    oov_name_pool,
    separable_templates,
)


def test_coverage_of_built_in_templates(templates):
    templates.check_coverage()
    separable_templates().check_coverage()


def test_same_seed_same_document(templates):
    assert generate_corpus(templates, 1, seed=7) == generate_corpus(templates, 1, seed=7)
    assert generate_corpus(templates, 3, seed=7) != generate_corpus(templates, 3, seed=8)


def test_prefix_of_larger_corpus(templates):
    # per-document seeds: document i does not depend on n_docs
    assert generate_corpus(templates, 5, seed=1) == generate_corpus(templates, 8, seed=1)[:5]


def test_annotations_valid_and_token_aligned(synth_small):
    for doc in synth_small:
        validate_document(doc, NUT_TAGS)
        _, rep = to_bio(tokenize(doc.text), doc.annotations, NUT_TAGS, "strict")
        assert rep.ok


def test_every_tag_appears(templates):
    stats = corpus_stats(generate_corpus(templates, 120, seed=3))
    assert all(n > 0 for n in stats.per_tag.values())
    assert stats.median_entities_per_doc > 0 and stats.n_tokens > 0


def test_density_follows_blocks(templates):
    small = corpus_stats(generate_corpus(templates, 60, seed=3, blocks=(1, 1)))
    large = corpus_stats(generate_corpus(templates, 60, seed=3, blocks=(4, 4)))
    assert large.median_entities_per_doc > small.median_entities_per_doc


def test_date_formats_varied(templates):
    formats = {str(parse_date(a.surface).pattern) for d in generate_corpus(templates, 80, seed=2)
               for a in d.annotations if a.tag == "Date"}
    assert len(formats) >= 5


def test_hard_cases_present(templates):
    text = "\n".join(t for t in templates.templates)
    fillers = " ".join(f for pool in templates.fillers.values() for f in pool)
    assert re.search(r"\b(de|het) [A-Z]", fillers)  # prefixed organisation names
    assert "i.o.m." in text and "z.s.m." in text  # abbreviations inside sentences
    assert any(" " in p for p in templates.fillers["Profession"])  # colloquial profession phrases


def test_oov_names_far_from_lookup_lists():
    cfg = RuleConfig.default()
    words = {w.casefold() for w in cfg.first_names + cfg.surnames}
    pool = oov_name_pool()
    assert len(pool) >= 20 and len(set(pool)) == len(pool)
    for name in pool[:60]:
        for tok in name.split():
            assert all(edit_distance(tok.casefold(), w, 2) > 2 for w in words)


def test_oov_fraction_controls_unknown_names(templates):
    pool = set(templates.oov_names)
    names = [a.surface for d in generate_corpus(templates, 150, seed=4, oov_fraction=0.5)
             for a in d.annotations if a.tag == "Name"]
    share = sum(n in pool for n in names) / len(names)
    assert 0.4 < share < 0.6
    none = [a.surface for d in generate_corpus(templates, 40, seed=4) for a in d.annotations if a.tag == "Name"]
    assert not any(n in pool for n in none)


@pytest.mark.parametrize("kwargs", [dict(n_docs=0), dict(oov_fraction=1.5), dict(oov_fraction=-0.1),
                                    dict(blocks=(2, 1))])
def test_generate_corpus_errors(templates, kwargs):
    with pytest.raises(ValueError):
        generate_corpus(templates, **{"n_docs": 2, **kwargs})


def test_template_file_roundtrip(tmp_path, templates):
    path = tmp_path / "t.txt"
    path.write_text(templates.dumps())
    back = TemplateSet.load(path)
    assert back == templates


def test_template_file_format():
    text = "# demo\n@template\nNaam: {Name}\nLeeftijd: {Age} jaar\n@fillers Name\nJan\nPiet\n@fillers Age\n40\n"
    ts = TemplateSet.loads(text)
    assert ts.templates == ("Naam: {Name}\nLeeftijd: {Age} jaar",)
    doc = generate_document(ts, "x", random.Random(0), blocks=(1, 1))
    assert [a.tag for a in doc.annotations] == ["Name", "Age"]


@pytest.mark.parametrize("text,msg", [
    ("@template\nOp 12 mei: {Name}\n@fillers Name\nJan\n", "digits"),
    ("@template\n{Bogus}\n@fillers Bogus\nx\n", "not a tag"),
    ("@template\n{Name}\n", "no fillers"),
    ("@wat\n", "unknown directive"),
    ("Jan\n@template\n{Name}\n", "before the first directive"),
])
def test_template_file_errors(text, msg):
    with pytest.raises(ValueError, match=msg):
        TemplateSet.loads(text)
