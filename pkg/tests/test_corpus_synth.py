# tests/test_corpus_synth.py - Synthetic corpus generator tests
from collections import Counter

import numpy as np
import pytest

from retypelab.schemas.asm import TypeLabel
from retypelab.schemas.synth import SynthConfig
from retypelab.services.corpus_synth import (
    SlotFiller,
    TemplateCatalog,
    emit_listing,
    fold_union,
    synthesize_corpus,
    synthesize_programs,
    template_for,
)
from retypelab.services.listing_parser import parse_listing
from retypelab.services.pattern_extract import build_chunk_bundle, is_anchor


def test_counts_per_type(small_corpus):
    """Test every type gets the configured number of labeled functions."""
    counts = Counter(fn.true_return_type for fn in small_corpus.labeled)

    assert counts == {label: 10 for label in TypeLabel}
    assert small_corpus.callers


def test_every_callee_is_called(small_corpus):
    """Test each labeled function has callers_per_function call sites."""
    calls = Counter(
        callee
        for fn in small_corpus.callers
        for _, callee in fn.call_sites_in_body
    )

    assert all(calls[fn.name] == 2 for fn in small_corpus.labeled)


def test_same_seed_same_corpus():
    """Test generation is a pure function of the config."""
    cfg = SynthConfig.uniform(3, rng_seed=11)

    assert emit_listing(synthesize_corpus(cfg)) == emit_listing(synthesize_corpus(cfg))


def test_threads_do_not_change_output():
    """Test the worker count leaves the corpus unchanged."""
    cfg = SynthConfig.uniform(3, rng_seed=11)

    assert synthesize_corpus(cfg, threads=1) == synthesize_corpus(cfg, threads=4)


def test_different_seeds_differ():
    assert emit_listing(synthesize_corpus(SynthConfig.uniform(3, rng_seed=1))) != \
        emit_listing(synthesize_corpus(SynthConfig.uniform(3, rng_seed=2)))


def test_emitted_listing_reparses(small_corpus):
    """Test the emitted listing parses back to the same functions."""
    assert parse_listing(emit_listing(small_corpus), strict=True) == list(small_corpus.functions)


def test_bodies_match_their_label(small_corpus):
    """Test every labeled body ends with one of its label's RET templates."""
    catalog = TemplateCatalog()

    for fn in small_corpus.labeled:
        assert catalog.matches(fn.true_return_type, fn)


def test_post_call_sites_match_callee_label(small_corpus):
    """Test the instruction after each call comes from the callee's POST templates."""
    catalog = TemplateCatalog()
    labels = {fn.name: fn.true_return_type for fn in small_corpus.labeled}
    bundle = build_chunk_bundle(small_corpus.functions)

    for callee, chunks in bundle.post_chunks.items():
        for chunk in chunks:
            assert catalog.matches_post(labels[callee], chunk.next_instruction)


def test_floating_returns_carry_opcode_bytes(small_corpus):
    """Test x87 loads carry the D9/DD opcode byte of their width."""
    for fn in small_corpus.labeled:
        loads = [i for i in fn.instructions if i.mnemonic == "fld"]
        if fn.true_return_type == TypeLabel.FLOAT:
            assert loads and loads[-1].opcode_bytes[0] == 0xD9
        elif fn.true_return_type == TypeLabel.DOUBLE:
            assert loads and loads[-1].opcode_bytes[0] == 0xDD


def test_return_anchors():
    """Test anchored corpora label the first return-value instruction."""
    corpus = synthesize_corpus(SynthConfig.uniform(2, rng_seed=5, return_anchors=True))

    for fn in corpus.labeled:
        assert sum(is_anchor(i) for i in fn.instructions) == 1
    assert build_chunk_bundle(corpus.functions).anchor_mode


def test_confusable_mode_shares_byte_templates():
    """Test bool and char draw RET bodies from the same templates in confusable mode."""
    catalog = TemplateCatalog(confusable_mode=True)

    assert catalog.families[TypeLabel.BOOL].ret == catalog.families[TypeLabel.CHAR].ret
    assert catalog.families[TypeLabel.BOOL].post != catalog.families[TypeLabel.CHAR].post


def test_label_rotation_moves_families():
    """Test a rotated catalog gives each label its neighbour's templates."""
    plain = TemplateCatalog()
    rotated = TemplateCatalog(label_rotation=1)
    labels = list(TypeLabel)

    for i, label in enumerate(labels):
        assert rotated.families[label] == plain.families[labels[(i + 1) % len(labels)]]


def test_template_for_renders_body():
    """Test a drawn template instance belongs to its label."""
    instance = template_for(TypeLabel.SHORT, np.random.default_rng(3))

    assert instance.label == TypeLabel.SHORT
    assert instance.post_call


def test_programs_do_not_share_symbols():
    """Test independent programs use distinct function prefixes."""
    programs = synthesize_programs(SynthConfig.uniform(2, rng_seed=9), 3)
    names = [fn.name for corpus in programs for fn in corpus.functions]

    assert len(programs) == 3
    assert len(names) == len(set(names))


@pytest.mark.parametrize("sizes, expected", [
    ([4, 1], TypeLabel.INT),
    ([8, 4], TypeLabel.LONG_LONG),
    ([16, 2], TypeLabel.STRUCT),
])
def test_fold_union(sizes, expected):
    """Test unions fold to the type of their biggest field."""
    assert fold_union(sizes) == expected


def test_config_rejects_bad_weights():
    with pytest.raises(ValueError):
        SynthConfig(epilogue_variant_weights=(0.5, 0.5, 0.5))


def test_config_from_mapping():
    """Test string config keys, including per-type counts."""
    cfg = SynthConfig.from_mapping({"count": "4", "count.void": "1", "seed": "12", "confusable_mode": "true"})

    assert cfg.counts[TypeLabel.INT] == 4
    assert cfg.counts[TypeLabel.VOID] == 1
    assert cfg.rng_seed == 12
    assert cfg.confusable_mode


def test_synth_config_from_file(tmp_path):
    """Test a key=value file sets counts per type and aliases seed."""
    path = tmp_path / "synth.conf"
    path.write_text("count=3\ncount.void=1\nseed=12\n")
    config = SynthConfig.from_file(path)

    assert config.counts[TypeLabel.INT] == 3
    assert config.counts[TypeLabel.VOID] == 1
    assert config.rng_seed == 12


def test_synth_config_unknown_key(tmp_path):
    path = tmp_path / "synth.conf"
    path.write_text("colour=blue\n")

    with pytest.raises(ValueError):
        SynthConfig.from_file(path)


def test_pointer_returns_load_an_address():
    """Test every pointer RET template loads an address into eax with lea."""
    filler = SlotFiller(np.random.default_rng(0))

    for template in TemplateCatalog().families[TypeLabel.POINTER].ret:
        body = filler.render(template.lines)
        leas = [i for i in body if i.mnemonic == "lea"]
        assert leas, template.name
        assert leas[-1].destination.register.family.value == "eax"


def test_char_literals_include_flag_values():
    """Test char literals are mostly printable but sometimes 0 or 1."""
    filler = SlotFiller(np.random.default_rng(11))
    values = Counter(int(filler.value("char")) for _ in range(2000))
    flags = values[0] + values[1]

    assert 0 < flags < 400
    assert all(v in (0, 1) or 32 <= v < 127 for v in values)
