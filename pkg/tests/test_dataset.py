import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dicerec.dataset import (InteractionTable, ParseError, RatingFormat, RawRating, binarize, build_table,
                             interaction_entropy, load_ratings_file, load_table, parse_ratings, save_table)


def test_parse_movielens_line():
    out = parse_ratings(b"1::50::5::978300760\n")
    assert out == [RawRating("1", "50", 5.0, 978300760)]


def test_parse_empty_stream():
    assert parse_ratings(b"") == []


def test_parse_bad_rating_reports_line():
    with pytest.raises(ParseError) as err:
        parse_ratings(b"1::50::abc::0\n")
    assert err.value.line_no == 1


def test_parse_error_line_number_counts_from_one():
    with pytest.raises(ParseError) as err:
        parse_ratings("1::2::4::0\n3::4::9::0\n")
    assert err.value.line_no == 2


def test_parse_csv():
    out = parse_ratings(io.StringIO("u1,i1,4.5,10\nu2,i1,5,11\n"), RatingFormat(delimiter=","))
    assert [(r.user_tag, r.rating) for r in out] == [("u1", 4.5), ("u2", 5.0)]


def test_load_file_sniffs_csv_header(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("userId,movieId,rating,timestamp\n1,10,5.0,0\n2,10,3.0,0\n")
    out = load_ratings_file(p)
    assert len(out) == 2 and out[0].item_tag == "10"


@pytest.mark.parametrize("ratings,threshold,expected", [
    ([RawRating("u", "a", 5.0), RawRating("u", "b", 4.0)], 5.0, [("u", "a")]),
    ([], 5.0, []),
    ([RawRating("u", "a", 3.0)], 3.0, [("u", "a")]),
])
def test_binarize(ratings, threshold, expected):
    assert binarize(ratings, threshold) == expected


def test_build_table_counts():
    t = build_table([("u1", "a"), ("u1", "b"), ("u2", "a")])
    assert (t.n_users, t.n_items) == (2, 2)
    assert t.popularity.tolist() == [2, 1]


def test_build_table_dedup():
    t = build_table([("u1", "a"), ("u1", "a")])
    assert len(t) == 1 and t.popularity.tolist() == [1]


def test_build_table_empty():
    t = build_table([])
    assert (t.n_users, t.n_items, len(t)) == (0, 0, 0)


@pytest.mark.parametrize("counts,expected", [
    ([1, 1, 1, 1], math.log(4)),
    ([5, 0, 0], 0.0),
    ([3, 1], -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))),
])
def test_entropy_values(counts, expected):
    assert interaction_entropy(counts) == pytest.approx(expected, abs=1e-12)


def test_entropy_reference_numbers():
    assert interaction_entropy([3, 1]) == pytest.approx(0.56234, abs=1e-5)
    assert interaction_entropy([1, 1, 1, 1]) == pytest.approx(1.38629, abs=1e-5)


def test_entropy_all_zero_raises():
    with pytest.raises(ValueError):
        interaction_entropy([0, 0])


pairs = st.lists(st.tuples(st.sampled_from("abcdefg"), st.sampled_from("pqrstuvw")), max_size=60)


@given(pairs)
def test_table_invariants(ps):
    t = build_table(ps)
    assert len(set(t.records)) == len(t)
    assert t.popularity.sum() == len(t)
    if len(t):
        assert t.users.max() < t.n_users and t.items.max() < t.n_items
    assert np.array_equal(t.popularity, np.bincount(t.items, minlength=t.n_items))


@given(pairs)
def test_round_trip_reindex(ps):
    t = build_table(ps)
    again = build_table([(t.user_tags[u], t.item_tags[i]) for u, i in t.records])
    assert again.records == t.records
    assert again.user_tags == t.user_tags and again.item_tags == t.item_tags


@given(st.lists(st.integers(0, 50), min_size=1, max_size=30).filter(lambda c: sum(c) > 0), st.randoms())
def test_entropy_bounds_and_permutation(counts, rnd):
    h = interaction_entropy(counts)
    nz = sum(1 for c in counts if c)
    assert -1e-12 <= h <= math.log(nz) + 1e-12
    shuffled = counts[:]
    rnd.shuffle(shuffled)
    assert interaction_entropy(shuffled) == pytest.approx(h, abs=1e-12)
    if len(set(c for c in counts if c)) == 1:
        assert h == pytest.approx(math.log(nz), abs=1e-12)
    else:
        assert h < math.log(nz)


def test_cache_round_trip(tmp_path):
    t = build_table([("u1", "a"), ("u2", "b"), ("u2", "a"), ("u3", "c")])
    save_table(t, tmp_path / "t.bin")
    back = load_table(tmp_path / "t.bin")
    assert back.records == t.records
    assert back.user_tags == t.user_tags and back.item_tags == t.item_tags
    raw = (tmp_path / "t.bin").read_bytes()
    assert raw[:8] == b"DICETBL\x00"
    assert int.from_bytes(raw[8:12], "little") == 1


def test_cache_rejects_foreign_file(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"\x00" * 64)
    with pytest.raises(ValueError):
        load_table(tmp_path / "x.bin")


def test_table_is_immutable():
    t = InteractionTable.from_indices([0, 1], [1, 1], 2, 2)
    with pytest.raises(ValueError):
        t.popularity[0] = 9
