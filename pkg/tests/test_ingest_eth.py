import io
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaincluster.errors import ParseError, ValidationError
from chaincluster.ingest_eth import (AttentionMatrix, HoldingRecord, build_attention_matrix,
                                     filter_bipartite, normalize_rows_cols, read_holdings,
                                     read_prices)


def H(u, t, a):
    return HoldingRecord(u, t, Decimal(str(a)))


def test_single_product():
    att = build_attention_matrix([H("u", "t", 5)], {"t": Decimal(2)})
    assert att.A.tolist() == [[10.0]]


def test_aggregation():
    att = build_attention_matrix([H("u", "t", 1), H("u", "t", 2)], {"t": Decimal(1)})
    assert att.A.tolist() == [[3.0]]


def test_zero_price_column():
    att = build_attention_matrix([H("u", "t", 1), H("u", "s", 1)], {"t": Decimal(0), "s": Decimal(1)})
    assert att.tokens == ["s", "t"] and att.A.tolist() == [[1.0, 0.0]]


def test_missing_price_names_token():
    with pytest.raises(ValidationError, match="tok9"):
        build_attention_matrix([H("u", "tok9", 1)], {})


def test_negative_amount_rejected():
    with pytest.raises(ValidationError):
        build_attention_matrix([H("u", "t", -1)], {"t": Decimal(1)})
    with pytest.raises(ValidationError):
        read_holdings(io.StringIO("user,token,amount\nu,t,-1\n"))


def test_csv_readers():
    h = read_holdings(io.StringIO("user,token,amount\nu1,t1,1.5\n\nu2,t1,2\n"))
    p = read_prices(io.StringIO("token,eth_price\nt1,0.25\n"))
    att = build_attention_matrix(h, p)
    assert att.users == ["u1", "u2"] and att.A[:, 0].tolist() == [0.375, 0.5]
    with pytest.raises(ParseError):
        read_holdings(io.StringIO("who,token,amount\n"))
    with pytest.raises(ParseError, match="line 2"):
        read_prices(io.StringIO("token,eth_price\nt1,abc\n"))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from("xyz"), st.integers(0, 100)),
                min_size=1, max_size=20), st.randoms())
def test_permutation_invariant(rows, rnd):
    prices = {t: Decimal("0.5") for t in "xyz"}
    recs = [H(u, t, a) for u, t, a in rows]
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a, b = build_attention_matrix(recs, prices), build_attention_matrix(shuffled, prices)
    assert a.users == b.users and a.tokens == b.tokens
    np.testing.assert_array_equal(a.A, b.A)


def att(A):
    A = np.asarray(A, float)
    return AttentionMatrix([f"u{i}" for i in range(A.shape[0])], [f"t{j}" for j in range(A.shape[1])], A)


def test_filter_identity():
    m = att([[1, 2], [0, 3]])
    out = filter_bipartite(m, 0, 0)
    np.testing.assert_array_equal(out.A, m.A)


def test_filter_drops_light_user():
    out = filter_bipartite(att([[1, 1], [1, 1], [1, 0]]), 2, 0)
    assert out.users == ["u0", "u1"]


def test_filter_order_sensitivity():
    # t1 held by u0 and u2 (2 users). u2 holds only t1 and is removed in the
    # row pass, so t1 falls below 2 users in the column pass.
    m = att([[1, 1, 1], [1, 0, 1], [0, 1, 0]])
    out = filter_bipartite(m, 2, 2)
    assert out.users == ["u0", "u1"] and out.tokens == ["t0", "t2"]
    # the opposite order would have kept t1
    cols_first = (m.A != 0).sum(axis=0) >= 2
    assert cols_first[1]


def test_filter_everything_removed():
    with pytest.raises(ValidationError, match="filter removed all nodes"):
        filter_bipartite(att([[1, 0], [0, 1]]), 5, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4), st.integers(0, 4))
def test_filter_idempotent_until_stable(seed, mt, mu):
    rng = np.random.default_rng(seed)
    m = att((rng.random((8, 6)) < 0.5) * rng.random((8, 6)))
    try:
        once = filter_bipartite(m, mt, mu, until_stable=True)
    except ValidationError:
        return
    twice = filter_bipartite(once, mt, mu, until_stable=True)
    assert once.users == twice.users and once.tokens == twice.tokens


def test_single_pass_leaves_no_zero_rows():
    m = att([[1, 0, 0], [1, 1, 0], [1, 1, 1], [0, 1, 1]])
    out = filter_bipartite(m, 1, 3)
    assert (out.A != 0).any(axis=1).all() and (out.A != 0).any(axis=0).all()


def test_normalize_hand_case():
    out = normalize_rows_cols(att([[3, 4]]))
    np.testing.assert_allclose(out.A, [[1.0, 1.0]])
    # intermediate row pass gives (0.6, 0.8)
    np.testing.assert_allclose(np.array([[3, 4]]) / 5, [[0.6, 0.8]])


def test_normalize_fixed_point_and_scalar():
    eye = att(np.eye(3))
    np.testing.assert_array_equal(normalize_rows_cols(eye).A, np.eye(3))
    np.testing.assert_allclose(normalize_rows_cols(att([[7.5]])).A, [[1.0]])


def test_normalize_zero_row_errors():
    with pytest.raises(ValidationError):
        normalize_rows_cols(att([[1, 0], [0, 0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_normalize_norm_bounds(seed):
    rng = np.random.default_rng(seed)
    A = rng.random((5, 4)) + 1e-3
    out = normalize_rows_cols(att(A)).A
    np.testing.assert_allclose(np.linalg.norm(out, axis=0), 1.0)
    assert np.all(np.linalg.norm(out, axis=1) <= np.sqrt(4) + 1e-12)
    assert np.all(np.isfinite(out))
