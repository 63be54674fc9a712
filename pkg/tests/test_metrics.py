"""Edit-distance metrics: hand cases plus properties against a naive oracle."""

import numpy as np
import pytest

from htrkit.metrics import EditCounts, cer, corpus_rates, levenshtein, wer


def naive_distance(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(naive_distance(a[1:], b[1:]) + (a[0] != b[0]),
               naive_distance(a[1:], b) + 1,
               naive_distance(a, b[1:]) + 1)


def rand_str(rng, max_len=7, alphabet="abc"):
    n = int(rng.integers(0, max_len + 1))
    return "".join(rng.choice(list(alphabet)) for _ in range(n))


def test_identical_sequences():
    c = levenshtein("same", "same")
    assert c.distance == 0 and c.reference_length == 4


def test_kitten_sitting():
    assert levenshtein("kitten", "sitting").distance == 3


def test_degenerate_empty_pred():
    # all three reference characters are unproduced, i.e. deletions
    c = levenshtein("", "abc")
    assert c.distance == 3
    assert (c.substitutions, c.insertions, c.deletions) == (0, 0, 3)


def test_degenerate_empty_gt():
    c = levenshtein("abc", "")
    assert c.distance == 3
    assert (c.substitutions, c.insertions, c.deletions) == (0, 3, 0)


def test_counts_always_sum_to_distance():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a, b = rand_str(rng), rand_str(rng)
        c = levenshtein(a, b)
        assert c.distance == naive_distance(a, b), (a, b)
        assert c.substitutions + c.insertions + c.deletions == c.distance


def test_metric_properties():
    rng = np.random.default_rng(1)
    for _ in range(150):
        a, b, c = rand_str(rng, 5), rand_str(rng, 5), rand_str(rng, 5)
        dab = levenshtein(a, b).distance
        dba = levenshtein(b, a).distance
        assert dab == dba
        dbc = levenshtein(b, c).distance
        dac = levenshtein(a, c).distance
        assert dac <= dab + dbc


def test_cer_pinned():
    assert cer("same", "same") == 0.0
    assert cer("helo", "hello") == pytest.approx(0.2)
    assert cer("", "ab") == 1.0
    counts = levenshtein("", "ab")
    assert counts.deletions == 2 and counts.insertions == 0
    with pytest.raises(ValueError):
        cer("anything", "")


def test_wer_pinned():
    assert wer("the cat sat", "the cat sat") == 0.0
    assert wer("the cat sat", "the cat sits") == pytest.approx(1 / 3)
    assert wer("a b", "a") == 1.0
    counts = levenshtein("a b".split(), "a".split())
    assert counts.insertions == 1 and counts.deletions == 0
    with pytest.raises(ValueError):
        wer("a", "   ")


def test_rates_can_exceed_one():
    assert cer("aaaa", "b") == 4.0


def test_corpus_rates():
    single = corpus_rates([("helo", "hello")])
    assert single[0] == pytest.approx(0.2)

    two = corpus_rates([("helo", "hello"), ("right", "right")])
    assert two[0] == pytest.approx(0.1)  # (1+0)/(5+5)

    pairs = [("a cat", "a hat"), ("dog", "dog house"), ("", "x")]
    fwd = corpus_rates(pairs)
    rev = corpus_rates(list(reversed(pairs)))
    assert fwd == rev

    # micro average weights long references more than a mean of rates would
    micro = corpus_rates([("ab", "ab"), ("x", "yyyyyyyyyy")])
    per_line_mean = (cer("ab", "ab") + cer("x", "yyyyyyyyyy")) / 2
    assert micro[0] != pytest.approx(per_line_mean)


def test_editcounts_fields():
    c = EditCounts(1, 2, 3, 10)
    assert c.distance == 6
    assert c.rate == 0.6
