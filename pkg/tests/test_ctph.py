from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from ctph_corpus import config_script, corpus
from fpscan.ctph import CTPHError, FuzzyHash, ctph_compare, ctph_hash, eliminate_sequences


@pytest.fixture(scope="module")
def files():
    return corpus()


def test_hashes_match_reference(libfuzzy, files):
    for data in files:
        assert str(ctph_hash(data)) == libfuzzy.hash(data)


def test_scores_match_reference(libfuzzy, files):
    hashes = [libfuzzy.hash(d) for d in files]
    for a, b in itertools.combinations(hashes, 2):
        assert ctph_compare(a, b) == libfuzzy.compare(a, b), (a, b)


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=1, max_size=3000))
def test_hash_matches_reference_property(libfuzzy, data):
    assert str(ctph_hash(data)) == libfuzzy.hash(data)


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=200, max_size=4000), st.integers(0, 3999), st.binary(max_size=40))
def test_compare_mutants_match_reference(libfuzzy, data, pos, patch):
    pos %= len(data)
    mutated = data[:pos] + patch + data[pos + len(patch):]
    a, b = libfuzzy.hash(data), libfuzzy.hash(mutated)
    assert ctph_compare(a, b) == libfuzzy.compare(a, b)


def test_identical_is_100():
    h = ctph_hash(config_script("a.com"))
    assert ctph_compare(h, h) == 100
    assert ctph_compare(str(h), str(h)) == 100


def test_one_config_line_changed_still_matches():
    a = ctph_hash(config_script("shop.example.com"))
    b = ctph_hash(config_script("news.example.org"))
    assert a != b
    assert ctph_compare(a, b) >= 95


def test_unrelated_files_do_not_match():
    assert ctph_compare(ctph_hash(config_script("a", seed=1)), ctph_hash(config_script("a", seed=2))) < 95


def test_incompatible_block_sizes_score_zero():
    assert ctph_compare("3:abcdefgh:abcd", "12:abcdefgh:abcd") == 0


def test_empty_input_rejected():
    with pytest.raises(CTPHError):
        ctph_hash(b"")


@pytest.mark.parametrize("bad", ["", "3:a", "x:ab:cd", "1:ab:cd", "3:a$:b", "3:" + "A" * 65 + ":b"])
def test_parse_rejects(bad):
    with pytest.raises(CTPHError):
        FuzzyHash.parse(bad)


def test_parse_round_trip():
    text = "96:KQhaGCVZGhr83h3bc0ok3892m12wzgnMoo:KnoZGhKl1"
    assert str(FuzzyHash.parse(text)) == text


def test_eliminate_sequences_caps_runs_at_three():
    assert eliminate_sequences("aaaaabbbbc") == "aaabbbc"
    assert eliminate_sequences("") == ""


def test_equal_first_digest_alone_is_not_identity(libfuzzy):
    a, b = "3:abcdefgh:abcd", "3:abcdefgh:wxyz"
    assert ctph_compare(a, b) == libfuzzy.compare(a, b) == 8
