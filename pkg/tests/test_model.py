import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dicerec.model import (
    CausalEmbeddings,
    Variant,
    init_embeddings,
    rank_all_items,
    score,
    score_variant,
    top_k,
)


@pytest.fixture
def hand():
    return CausalEmbeddings(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]),
                            np.array([[2.0, 0.0]]), np.array([[0.0, 3.0]]))


def test_hand_inner_products(hand):
    s = score(hand, 0, 0)
    assert (s.s_int, s.s_con, s.s_click) == (2.0, 3.0, 5.0)
    assert score_variant(hand, 0, 0, "full") == 5
    assert score_variant(hand, 0, 0, Variant.INTEREST) == 2
    assert score_variant(hand, 0, 0, "conformity_only") == 3


def test_zero_rows_score_zero():
    z = CausalEmbeddings(*(np.zeros((2, 3)) for _ in range(4)))
    s = score(z, 1, 1)
    assert (s.s_int, s.s_con, s.s_click) == (0.0, 0.0, 0.0)


def test_out_of_range_index(hand):
    with pytest.raises(IndexError):
        score(hand, 1, 0)
    with pytest.raises(IndexError):
        score(hand, 0, -1)


def test_init_determinism_and_statistics():
    a = init_embeddings(300, 200, d=64, seed=4)
    b = init_embeddings(300, 200, d=64, seed=4)
    for name in a.tables:
        np.testing.assert_array_equal(a.tables[name], b.tables[name])
    assert a.concatenated("user").shape == (300, 128)
    entries = np.concatenate([t.ravel() for t in a.tables.values()])
    sd = 0.1 / 8
    assert abs(entries.mean()) < 5 * sd / np.sqrt(entries.size)
    assert entries.std() == pytest.approx(sd, rel=0.02)


def test_full_score_is_concatenated_inner_product():
    emb = init_embeddings(20, 30, d=5, seed=1)
    users = np.arange(20)
    full = emb.score_matrix(users, "full")
    np.testing.assert_allclose(full, emb.concatenated("user") @ emb.concatenated("item").T, rtol=1e-12)
    additive = full - emb.score_matrix(users, "int") - emb.score_matrix(users, "con")
    assert np.abs(additive).max() <= 1e-6 * np.abs(full).max()


def test_top_k_examples():
    assert top_k(np.array([3.0, 1, 2]), 2).tolist() == [0, 2]
    assert top_k(np.array([3.0, 1, 2]), 2, exclude=[0]).tolist() == [2, 1]
    assert top_k(np.zeros(5), 2).tolist() == [0, 1]
    with pytest.raises(ValueError):
        top_k(np.array([3.0, 1, 2]), 3, exclude=[1])


@given(arrays(np.float64, st.integers(1, 40), elements=st.integers(-5, 5).map(float)),
       st.data())
@settings(max_examples=150, deadline=None)
def test_top_k_matches_sort_oracle(scores, data):
    n = len(scores)
    excl = data.draw(st.sets(st.integers(0, n - 1), max_size=n - 1))
    k = data.draw(st.integers(1, n - len(excl)))
    oracle = sorted((i for i in range(n) if i not in excl), key=lambda i: (-scores[i], i))[:k]
    got = top_k(scores, k, exclude=sorted(excl) if excl else None)
    assert got.tolist() == oracle


@given(st.floats(0.01, 100.0), st.integers(0, 9))
@settings(max_examples=40, deadline=None)
def test_rank_invariant_under_positive_scaling(lam, u):
    emb = init_embeddings(10, 40, d=4, seed=7)
    scaled = CausalEmbeddings(*(lam * emb.tables[n] for n in ("user_int", "user_con", "item_int", "item_con")))
    for variant in Variant:
        assert rank_all_items(emb, u, {1, 2}, variant, k=15) == rank_all_items(scaled, u, {1, 2}, variant, k=15)


def test_repr_seam_returns_both_causes():
    emb = init_embeddings(3, 4, d=2, seed=0)
    ui, uc = emb.user_repr(np.array([1]))
    np.testing.assert_array_equal(ui, emb.user_int[[1]])
    np.testing.assert_array_equal(uc, emb.user_con[[1]])
