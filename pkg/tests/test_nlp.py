import casadi as ca
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from dmcc.errors import ValidationError
from dmcc.nlp import NlpProblem, SolverOptions, Status, ad_gradient, ad_jacobian, solve

# Hock-Schittkowski problem 71, published optimum
HS71_X = np.array([1.0, 4.74299963, 3.82114998, 1.37940829])
HS71_F = 17.0140173


def hs71():
    return NlpProblem.from_callables(
        4,
        lambda x: x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2],
        eq=lambda x: [ca.sumsqr(x) - 40.0],
        ineq=lambda x: [25.0 - x[0] * x[1] * x[2] * x[3]],
        lbx=np.ones(4), ubx=np.full(4, 5.0), x0=np.array([1.0, 5.0, 5.0, 1.0]),
    )


@pytest.mark.parametrize("backend", ["ipopt", "auglag"])
def test_hs71(backend):
    x, mult, rep = solve(hs71(), SolverOptions(backend=backend))
    assert rep.status == Status.OPTIMAL
    np.testing.assert_allclose(x, HS71_X, atol=1e-5)
    assert rep.objective == pytest.approx(HS71_F, abs=1e-5)
    assert mult["ineq"].min() >= 0


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_equality_qp_closed_form(c):
    # min 0.5|x|^2 - c.x  s.t.  sum(x) = 1   ->   x = c + (1 - sum c)/3
    c = np.array(c)
    prob = NlpProblem.from_callables(3, lambda x: 0.5 * ca.sumsqr(x) - ca.dot(ca.DM(c), x),
                                     eq=lambda x: [ca.sum1(x) - 1.0])
    x, mult, rep = solve(prob, SolverOptions(backend="auglag"))
    assert rep.ok
    np.testing.assert_allclose(x, c + (1 - c.sum()) / 3, atol=1e-6)
    assert mult["eq"][0] == pytest.approx((1 - c.sum()) / 3 * -1, abs=1e-5)


def test_bound_active_rosenbrock():
    prob = NlpProblem.from_callables(2, lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2,
                                     lbx=[-2, -2], ubx=[0.5, 2], x0=[-1.2, 1.0])
    for backend in ("ipopt", "auglag"):
        x, _, rep = solve(prob, SolverOptions(backend=backend))
        assert rep.ok
        np.testing.assert_allclose(x, [0.5, 0.25], atol=1e-5)


def test_infeasible_problem_not_reported_optimal():
    prob = NlpProblem.from_callables(1, lambda x: x[0] ** 2, eq=lambda x: [x[0] ** 2 + 1.0])
    for backend in ("ipopt", "auglag"):
        _, _, rep = solve(prob, SolverOptions(backend=backend, max_outer=10, max_iter=200))
        assert rep.status != Status.OPTIMAL


def test_ad_gradient_matches_finite_difference():
    f = lambda x: ca.sin(x[0]) * ca.exp(x[1]) + x[2] ** 3 * x[0]
    x = np.array([0.3, -0.7, 1.1])
    h = 1e-6
    fn = ca.Function("f", [s := ca.SX.sym("s", 3)], [f(s)])
    num = np.array([(float(fn(x + h * e)) - float(fn(x - h * e))) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(ad_gradient(f, x), num, rtol=1e-8)


def test_ad_jacobian_sparse_and_pattern_check():
    F = lambda x: [x[0] * x[1], ca.sin(x[2]), x[3] ** 2 + x[0]]
    x = np.array([1.0, 2.0, 0.5, -1.0])
    J = ad_jacobian(F, x)
    assert sp.issparse(J)
    dense = np.array([[2, 1, 0, 0], [0, 0, np.cos(0.5), 0], [1, 0, 0, -2]])
    np.testing.assert_allclose(J.toarray(), dense, atol=1e-14)
    assert J.nnz == 5
    ok = (dense != 0).astype(int)
    ad_jacobian(F, x, pattern=ok)
    bad = ok.copy(); bad[1, 2] = 0
    with pytest.raises(ValueError):
        ad_jacobian(F, x, pattern=bad)


def test_problem_validation():
    x = ca.SX.sym("x", 2)
    with pytest.raises(ValidationError):
        NlpProblem(x, x[0], None, None, [0, 0], [1], [0, 0])
    with pytest.raises(ValidationError):
        NlpProblem(x, x[0], None, None, [1, 0], [0, 1], [0, 0])
    with pytest.raises(ValidationError):
        SolverOptions.from_dict({"backend": "snopt"})
    with pytest.raises(ValidationError):
        SolverOptions.from_dict({"tolerance": 1})
