from __future__ import annotations

import numpy as np
import pytest

from oracles import fraction_mean
from synse.errors import DescriptionError, TableError, VocabularyError
from synse.text_pipeline import (
    ClassDescription,
    PosEmbeddingTable,
    WordVectorSource,
    build_embedding_table,
    default_fill_table,
    default_pos_lexicon,
    fill_missing_pos,
    load_fill_table,
    load_pos_lexicon,
)


def test_fill_reading():
    desc = fill_missing_pos("reading")
    assert desc.filled_name == "reading book"
    assert desc.verb_tokens == ("reading",)
    assert desc.noun_tokens == ("book",)
    assert not desc.noun_is_placeholder


def test_fill_drop():
    desc = fill_missing_pos("drop")
    assert desc.filled_name == "drop object"
    assert desc.verb_tokens == ("drop",)
    assert desc.noun_tokens == ("object",)


def test_fill_headache():
    desc = fill_missing_pos("headache")
    assert desc.filled_name == "have headache"
    assert desc.verb_tokens == ("have",)
    assert desc.noun_tokens == ("headache",)


def test_placeholder_for_nounless_phrase():
    desc = fill_missing_pos("jump up")
    assert desc.verb_tokens == ("jump",)
    assert desc.noun_tokens == ()
    assert desc.noun_is_placeholder


def test_no_verb_raises():
    with pytest.raises(DescriptionError, match="no verb"):
        fill_missing_pos("water")


def test_empty_name_raises():
    with pytest.raises(DescriptionError):
        fill_missing_pos("   ")


def test_fill_idempotent():
    for name in ("reading", "drop", "headache", "jump up", "put on jacket"):
        first = fill_missing_pos(name)
        second = fill_missing_pos(first.filled_name)
        assert second.filled_name == first.filled_name
        assert second.verb_tokens == first.verb_tokens
        assert second.noun_tokens == first.noun_tokens


def test_custom_tables_load(tmp_path):
    fill_path = tmp_path / "fill.txt"
    fill_path.write_text("# comment\nsalute\tsalute flag\n", encoding="utf-8")
    lex_path = tmp_path / "lex.txt"
    lex_path.write_text("salute\tverb\nflag\tnoun\n", encoding="utf-8")
    desc = fill_missing_pos("salute", load_fill_table(fill_path), load_pos_lexicon(lex_path))
    assert desc.filled_name == "salute flag"
    assert desc.noun_tokens == ("flag",)


def _source(dim=2):
    return WordVectorSource(
        {
            "lift": np.array([1.0, 0.0]),
            "jump": np.array([0.0, 2.0]),
            "wave": np.array([4.0, 4.0]),
            "box": np.array([1.0, 0.0]),
            "cup": np.array([0.0, 1.0]),
            "jacket": np.array([3.0, 5.0]),
            "shoes": np.array([1.0, 9.0]),
        }
    )


def _desc(cid, verbs, nouns):
    return ClassDescription(
        class_id=cid,
        raw_name=" ".join(verbs + nouns) if nouns else verbs[0],
        filled_name=" ".join(verbs + nouns) if nouns else verbs[0],
        verb_tokens=tuple(verbs),
        noun_tokens=tuple(nouns),
        noun_is_placeholder=not nouns,
    )


def test_placeholder_is_mean_of_real_nouns():
    descs = [
        _desc(0, ["lift"], ["box"]),
        _desc(1, ["jump"], ["cup"]),
        _desc(2, ["wave"], []),
    ]
    table = build_embedding_table(descs, _source())
    np.testing.assert_allclose(table.noun_vec(2), [0.5, 0.5])
    assert table.placeholder_ids == frozenset({2})
    table.validate()


def test_single_token_verb_is_exact():
    descs = [_desc(0, ["lift"], ["box"]), _desc(1, ["jump"], ["cup"])]
    table = build_embedding_table(descs, _source())
    np.testing.assert_array_equal(table.verb_vec(0), np.array([1.0, 0.0], dtype=np.float32))


def test_multi_noun_mean_matches_exact_rational_oracle():
    desc = fill_missing_pos("put on jacket-and-shoes")
    assert desc.noun_tokens == ("jacket", "shoes")
    source = _source()
    table = build_embedding_table([_desc(0, ["lift"], ["jacket", "shoes"])], source)
    expected = fraction_mean([[3, 5], [1, 9]])
    np.testing.assert_allclose(table.noun_vec(0), [float(e) for e in expected])


def test_unresolvable_token_names_token_and_class():
    descs = [_desc(4, ["lift"], ["zzz"])]
    with pytest.raises(VocabularyError, match=r"'zzz'.*class 4"):
        build_embedding_table(descs, _source())


def test_all_placeholder_rejected():
    descs = [_desc(0, ["lift"], []), _desc(1, ["jump"], [])]
    with pytest.raises(TableError, match="placeholder"):
        build_embedding_table(descs, _source())


def test_permuting_classes_permutes_rows():
    descs = [
        _desc(0, ["lift"], ["box"]),
        _desc(1, ["jump"], ["cup"]),
        _desc(2, ["wave"], []),
    ]
    table_a = build_embedding_table(descs, _source())
    table_b = build_embedding_table(descs[::-1], _source())
    for cid in (0, 1, 2):
        np.testing.assert_array_equal(table_a.verb_vec(cid), table_b.verb_vec(cid))
        np.testing.assert_array_equal(table_a.noun_vec(cid), table_b.noun_vec(cid))


def test_placeholder_invariant_validation_catches_corruption():
    descs = [_desc(0, ["lift"], ["box"]), _desc(1, ["wave"], [])]
    table = build_embedding_table(descs, _source())
    corrupted = PosEmbeddingTable(
        dim=table.dim,
        class_ids=table.class_ids,
        verb_vecs=table.verb_vecs,
        noun_vecs=table.noun_vecs + np.array([0.0, 1.0], dtype=np.float32),
        placeholder_ids=table.placeholder_ids,
    )
    # placeholder row shifted along with real rows: mean invariant still holds
    corrupted.validate()
    broken = PosEmbeddingTable(
        dim=table.dim,
        class_ids=table.class_ids,
        verb_vecs=table.verb_vecs,
        noun_vecs=np.vstack([table.noun_vecs[0], table.noun_vecs[1] + 1.0]),
        placeholder_ids=table.placeholder_ids,
    )
    with pytest.raises(TableError, match="placeholder"):
        broken.validate()


def test_word_vector_container_round_trip(tmp_path):
    source = _source()
    path = tmp_path / "vectors.synsec"
    source.save(path)
    loaded = WordVectorSource.load(path)
    assert loaded.dim == source.dim
    np.testing.assert_allclose(loaded.get("jacket"), [3.0, 5.0])


def test_default_lexicon_and_fill_table_are_consistent():
    lexicon = default_pos_lexicon()
    fill = default_fill_table()
    assert fill["reading"] == "reading book"
    assert fill["drop"] == "drop object"
    assert fill["headache"] == "have headache"
    for completed in fill.values():
        desc = fill_missing_pos(completed)
        assert desc.verb_tokens
        assert not desc.noun_is_placeholder
    assert lexicon["reading"] == "verb"
    assert lexicon["book"] == "noun"
