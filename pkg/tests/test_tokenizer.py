import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lexctrl.lexicon import load_lexicon
from lexctrl.tokenizer import (
    BASE_SPECIALS,
    EOW,
    BpeVocab,
    ComplexityTable,
    TokenizerError,
    build_complexity_table,
    complexity_ids_for,
    level_token,
    train_bpe,
    word_complexity_ids,
)

from oracles import reference_bpe


def test_single_merge_is_most_frequent_pair():
    vocab = train_bpe(["aaab"], 1)
    # pairs: (a,a) x2, (a,b</w>) x1
    assert vocab.merges == [("a", "a")]


def test_zero_merges_is_character_level():
    vocab = train_bpe(["tree needs water"], 0, ["A", "B"])
    chars = sorted(["t", "r", "e", "n", "d", "w", "a", "e" + EOW, "s" + EOW, "r" + EOW])
    specials = list(BASE_SPECIALS) + [level_token("A"), level_token("B")]
    assert vocab.tokens == specials + chars
    assert vocab.merges == []


def test_tie_breaks_to_smallest_pair():
    vocab = train_bpe(["ab cd"], 1)
    assert vocab.merges == [("a", "b" + EOW)]


def test_specials_and_level_tokens_present(vocab, lex):
    for s in BASE_SPECIALS:
        assert s in vocab.token_to_id
    assert set(vocab.level_token_ids) == {lv.name for lv in lex.levels}
    assert sorted(vocab.token_to_id.values()) == list(range(len(vocab)))


def test_merges_never_produce_specials():
    corpus = ["<pad> <s> </s>"] * 5
    vocab = train_bpe(corpus, 50)
    produced = [a + b for a, b in vocab.merges]
    assert not set(produced) & set(BASE_SPECIALS)
    assert len(produced) == len(set(produced))


def test_every_corpus_char_has_an_id(small_data, vocab):
    for ex in small_data:
        assert vocab.unk_id not in vocab.encode(ex.sentence).ids


def test_word_groups():
    vocab = train_bpe(["tree needs water"] * 3, 10)
    enc = vocab.encode("tree needs")
    assert len(enc.groups()) == 2
    assert enc.word_index == sorted(enc.word_index)


def test_round_trip_on_corpus(small_data, vocab):
    for ex in small_data:
        assert vocab.decode(vocab.encode(ex.sentence).ids) == ex.sentence


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="abcdeilmnoprstu", min_size=1, max_size=14))
def test_encode_matches_reference_bpe(vocab, word):
    expect = [vocab.token_to_id.get(s, vocab.unk_id) for s in reference_bpe(word, vocab.merges)]
    assert vocab.encode_word(word) == expect


def test_encode_matches_reference_bpe_on_trained_corpus():
    rng = random.Random(0)
    corpus = ["".join(rng.choice("ab") for _ in range(rng.randint(1, 8))) for _ in range(300)]
    vocab = train_bpe(corpus, 40)
    for w in set(corpus):
        assert vocab.encode_word(w) == [vocab.token_to_id[s] for s in reference_bpe(w, vocab.merges)]


@st.composite
def known_words(draw, vocab):
    """Words whose inner and final characters all have tokens."""
    inner = sorted(t for t in vocab.tokens if len(t) == 1)
    final = sorted(t[0] for t in vocab.tokens if len(t) == 1 + len(EOW) and t.endswith(EOW))
    body = draw(st.text(alphabet=inner, max_size=9))
    return body + draw(st.sampled_from(final))


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_decode_encode_identity(vocab, data):
    words = data.draw(st.lists(known_words(vocab), min_size=1, max_size=8))
    s = " ".join(words)
    assert vocab.decode(vocab.encode(s).ids) == s


def test_unknown_characters_map_to_unk(vocab):
    ids = vocab.encode_word("qé")
    assert vocab.unk_id in ids


def test_train_errors():
    with pytest.raises(TokenizerError):
        train_bpe([], 3)
    with pytest.raises(TokenizerError):
        train_bpe(["a"], -1)


def test_vocab_text_round_trip(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    back = BpeVocab.load(path)
    assert back == vocab
    assert back.to_text() == vocab.to_text()


def test_vocab_with_hash_tokens_round_trip():
    vocab = train_bpe(["#a #b ##"] * 4, 5)
    assert BpeVocab.from_text(vocab.to_text()) == vocab


# -- complexity table ----------------------------------------------------------


@pytest.fixture(scope="module")
def fig_setup():
    lex = load_lexicon([("tree", "A"), ("need", "A"), ("needs", "A"), ("water", "A"),
                        ("peach", "B"), ("light", "B")], ["A", "B"])
    corpus = ["tree needs water .", "peach tree needs light ."] * 10
    vocab = train_bpe(corpus, 60, ["A", "B"])
    return lex, vocab, build_complexity_table(vocab, lex, corpus)


def test_table_examples(fig_setup):
    lex, vocab, table = fig_setup
    tree = vocab.token_to_id["tree" + EOW]
    dot = vocab.token_to_id["." + EOW]
    assert table[tree] == 1
    assert table[vocab.token_to_id["peach" + EOW]] == 2
    assert table[vocab.pad_id] == lex.special_id
    assert table[dot] == 0
    assert len(table) == len(vocab)
    assert complexity_ids_for(table, []) == []
    assert complexity_ids_for(table, [vocab.bos_id, tree, dot]) == [lex.special_id, 1, 0]
    assert table[vocab.level_token_ids["B"]] == 2


def test_table_is_total_and_in_range(vocab, table, lex):
    assert len(table) == len(vocab)
    assert set(table.table.tolist()) <= set(range(lex.num_complexity_ids))


def test_shared_subword_majority_and_tie():
    lex = load_lexicon([("ab", "A"), ("abab", "B"), ("cd", "A"), ("cdx", "B")], ["A", "B"])
    vocab = BpeVocab(list(BASE_SPECIALS) + [level_token("A"), level_token("B"),
                     "a", "b", "b" + EOW, "c", "d", "d" + EOW, "x" + EOW, "ab", "ab" + EOW, "cd"],
                     [("a", "b"), ("a", "b" + EOW), ("c", "d")], ["A", "B"])
    # ab -> [ab</w>], abab -> [ab, ab</w>]
    table = build_complexity_table(vocab, lex, ["ab abab abab cd cdx"])
    assert table[vocab.token_to_id["ab"]] == 2
    assert table[vocab.token_to_id["ab" + EOW]] == 2  # B twice, A once
    tie = build_complexity_table(vocab, lex, ["ab abab"])
    assert tie[vocab.token_to_id["ab" + EOW]] == lex.out_id
    assert vocab.token_to_id["ab" + EOW] in tie.ambiguous
    unseen = vocab.token_to_id["x" + EOW]
    assert build_complexity_table(vocab, lex, ["ab"])[unseen] == lex.out_id


def test_table_without_corpus_uses_headwords(fig_setup):
    lex, vocab, _ = fig_setup
    table = build_complexity_table(vocab, lex)
    assert table[vocab.token_to_id["tree" + EOW]] == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 10**6)))
def test_lookup_matches_elementwise(table, raw):
    ids = [r % len(table) for r in raw]
    assert complexity_ids_for(table, ids) == [int(table.table[i]) for i in ids]


def test_lookup_out_of_range(table):
    with pytest.raises(TokenizerError):
        complexity_ids_for(table, [len(table)])


def test_table_text_round_trip(tmp_path, table):
    path = tmp_path / "table.txt"
    table.save(path)
    back = ComplexityTable.load(path)
    assert back == table
    assert back.table.dtype == np.int64


def test_context_exact_ids(toy_lex):
    vocab = train_bpe(["this peach tree needs light ."], 0, ["A", "B", "C"])
    s = "this peach tree"
    enc = vocab.encode(s)
    cids = word_complexity_ids(enc, s.split(), toy_lex)
    assert cids == [1] * 4 + [2] * 5 + [1] * 4
