import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog as scipy_linprog

from gridshed.simplex import linprog


def test_textbook_problem():
    # max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36
    res = linprog(-np.array([3.0, 5.0]), np.array([[1, 0], [0, 2], [3, 2.0]]), np.array([4, 12, 18.0]))
    assert res.success
    np.testing.assert_allclose(res.x, [2, 6], atol=1e-9)
    assert res.fun == pytest.approx(-36)


def test_equality_and_negative_rhs():
    # min x + y st x + y = 2, -x <= -0.5  (x >= 0.5)
    res = linprog(np.array([1.0, 2.0]), np.array([[-1.0, 0.0]]), np.array([-0.5]),
                  np.array([[1.0, 1.0]]), np.array([2.0]))
    assert res.success
    np.testing.assert_allclose(res.x, [2, 0], atol=1e-9)


def test_infeasible_and_unbounded():
    assert linprog(np.array([1.0]), np.array([[1.0]]), np.array([-1.0])).status == "infeasible"
    assert linprog(np.array([-1.0]), np.array([[-1.0]]), np.array([0.0])).status == "unbounded"


def test_degenerate_cycling_example():
    # Beale's example cycles under naive Dantzig pricing
    c = np.array([-0.75, 150, -0.02, 6])
    A = np.array([[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]])
    b = np.array([0, 0, 1.0])
    res = linprog(c, A, b)
    assert res.success
    assert res.fun == pytest.approx(-0.05)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n, m, k = rng.integers(1, 7), rng.integers(1, 8), rng.integers(0, 3)
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m) + 1.0
    A = np.vstack([A, np.eye(n)])  # keep it bounded
    b = np.concatenate([b, rng.uniform(0.5, 3, n)])
    Aeq = rng.normal(size=(k, n)) if k else None
    beq = Aeq @ rng.uniform(0, 0.5, n) if k else None
    ref = scipy_linprog(c, A, b, Aeq, beq, bounds=(0, None), method="highs")
    got = linprog(c, A, b, Aeq, beq)
    if ref.status == 2:
        assert got.status == "infeasible"
    else:
        assert ref.status == 0 and got.success
        assert got.fun == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(A @ got.x <= b + 1e-7) and np.all(got.x >= -1e-9)
        if k:
            np.testing.assert_allclose(Aeq @ got.x, beq, atol=1e-7)
