"""SDP engine: solver self-test, flatten, Farkas certificates, pinned program, rank reduction."""

import math

import numpy as np
import pytest

from gramdim.graphs import Graph, complete_graph, cycle_graph, path_graph, pattern_graph
from gramdim.instances import PartialMatrix, project
from gramdim.linalg import numerical_rank
from gramdim.sdp import (
    InfeasibleInstanceError,
    NoCertificateError,
    SdpProblem,
    StressMatrix,
    completion_constraints,
    farkas_certificate,
    flatten,
    pinned_flatten,
    rank_reduce,
    slater_probe,
    solve,
)
from tests.test_instances import k222_canonical_instance


def _elem(n, i, j):
    m = np.zeros((n, n))
    if i == j:
        m[i, i] = 1.0
    else:
        m[i, j] = m[j, i] = 0.5
    return m


# -- core solver ----------------------------------------------------------------


def test_solve_2x2_correlation():
    prob = SdpProblem(_elem(2, 0, 1), [_elem(2, 0, 0), _elem(2, 1, 1)], [1.0, 1.0])
    sol = solve(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.X, np.ones((2, 2)), atol=1e-6)
    assert abs(sol.gap) <= 1e-7


def test_solve_maxcut_k3_value():
    lap = 3 * np.eye(3) - np.ones((3, 3))
    prob = SdpProblem(lap / 4, [_elem(3, i, i) for i in range(3)], [1.0] * 3)
    sol = solve(prob)
    assert sol.status == "optimal"
    assert np.isclose(np.tensordot(lap / 4, sol.X), 9 / 4, atol=1e-6)


def test_solve_infeasible_toy():
    prob = SdpProblem(np.zeros((2, 2)), [_elem(2, 0, 0)], [-1.0])
    sol = solve(prob)
    assert sol.status == "infeasible_certificate"
    y = sol.certificate
    omega = y[0] * _elem(2, 0, 0)
    assert np.linalg.eigvalsh(omega).min() >= -1e-9
    assert y @ np.array([-1.0]) < 0


def test_solve_inconsistent_linear_system():
    prob = SdpProblem(np.zeros((2, 2)), [_elem(2, 0, 0), _elem(2, 0, 0)], [1.0, 2.0])
    assert solve(prob).status == "infeasible_certificate"


def test_solver_selftest_200_random_strictly_feasible():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, 21))
        mats = []
        for _ in range(m):
            a = rng.standard_normal((n, n))
            mats.append((a + a.T) / 2)
        q = rng.standard_normal((n, n))
        x0 = q @ q.T + 0.5 * np.eye(n)  # strictly feasible primal point
        b = np.array([np.tensordot(a, x0) for a in mats])
        y0 = rng.standard_normal(m)
        s0 = rng.standard_normal((n, n))
        s0 = s0 @ s0.T + 0.5 * np.eye(n)  # strictly feasible dual slack
        c = sum(y * a for y, a in zip(y0, mats)) - s0
        sol = solve(SdpProblem(c, mats, b), tol=1e-8)
        assert sol.status == "optimal", trial
        assert sol.primal_residual <= 1e-8
        assert sol.dual_residual <= 1e-8
        assert sol.gap <= 1e-7
        scale = max(1.0, np.abs(sol.X).max())
        assert np.linalg.eigvalsh(sol.X).min() >= -1e-8 * scale


def test_problem_dump_load_roundtrip():
    prob = SdpProblem(_elem(3, 0, 2), [_elem(3, 0, 0), _elem(3, 1, 2)], [1.0, 0.25])
    back = SdpProblem.load(prob.dump())
    assert np.allclose(back.objective, prob.objective)
    assert all(np.allclose(a, b) for a, b in zip(back.mats, prob.mats))
    assert np.allclose(back.b, prob.b)


# -- slater probe -----------------------------------------------------------------


def test_slater_probe_interior_and_boundary():
    g = path_graph(2)
    a = PartialMatrix(g, [1.0, 1.0], {(0, 1): 0.5})
    mats, b, _ = completion_constraints(a)
    t, x0, _ = slater_probe(mats, b, 2)
    assert t > 0.1
    assert np.linalg.eigvalsh(x0).min() >= -1e-9

    a2, _ = k222_canonical_instance()
    mats, b, _ = completion_constraints(a2)
    t, x0, _ = slater_probe(mats, b, 6)
    assert abs(t) <= 1e-6
    assert numerical_rank(x0, 1e-6) == 5


def test_slater_probe_infeasible():
    g = complete_graph(3)
    a = PartialMatrix(g, [1.0] * 3, {e: -1.0 for e in g.edges})
    mats, b, _ = completion_constraints(a)
    with pytest.raises(InfeasibleInstanceError):
        slater_probe(mats, b, 3)


# -- flatten ----------------------------------------------------------------------


def test_flatten_path_ones():
    g = path_graph(3)
    a = PartialMatrix(g, [1.0] * 3, {(0, 1): 1.0, (1, 2): 1.0})
    res = flatten(a, (0, 2))
    assert np.isclose(res.X[0, 2], 1.0, atol=1e-6)
    p = res.config.vectors
    assert np.max(np.abs(p @ p.T - np.ones((3, 3)))) < 1e-6


def test_flatten_c4_zero_edges():
    g = cycle_graph(4)
    a = PartialMatrix(g, [1.0] * 4, {e: 0.0 for e in g.edges})
    res = flatten(a, (0, 2))
    assert np.isclose(res.X[0, 2], 1.0, atol=1e-6)


def _check_stress_contract(res, a, n):
    st = res.stress
    assert st.support_violation() == 0.0
    assert st.min_eigenvalue() >= -1e-8
    assert not st.is_zero()
    resid = st.equilibrium_residuals(res.config)
    assert resid.max() <= 1e-6
    assert numerical_rank(res.X, 1e-7) + numerical_rank(st.matrix, 1e-7) <= n
    assert a.residual_against(res.X) <= 1e-7


def test_flatten_interior_stress_contract():
    rng = np.random.default_rng(8)
    g = cycle_graph(5)
    for _ in range(5):
        q = rng.standard_normal((5, 5))
        x = q @ q.T + np.eye(5)
        d = np.sqrt(np.diag(x))
        a = project(x / np.outer(d, d), g)
        res = flatten(a, (0, 2))
        assert res.route == "interior"
        assert np.isclose(res.stress.matrix[0, 2], -0.5)
        _check_stress_contract(res, a, 5)


def test_flatten_k222_unique_boundary():
    a, p = k222_canonical_instance()
    res = flatten(a, (0, 3))
    assert res.route == "farkas"
    assert numerical_rank(res.X, 1e-7) == 5
    assert abs(res.X[0, 3]) <= 1e-6
    _check_stress_contract(res, a, 6)
    # the stress is forced to be (proportional to) the kernel projector
    v = np.array([1.0, 1.0, 0.0, 0.0, 0.0, -math.sqrt(2.0)])
    target = np.outer(v, v) / (v @ v)
    assert np.max(np.abs(res.stress.matrix - target)) < 1e-5


def test_flatten_rejects_edge_pair_and_infeasible():
    g = path_graph(3)
    a = PartialMatrix(g, [1.0] * 3, {(0, 1): 0.0, (1, 2): 0.0})
    with pytest.raises(ValueError):
        flatten(a, (0, 1))
    bad = PartialMatrix(complete_graph(3), [1.0] * 3,
                        {e: -1.0 for e in complete_graph(3).edges})
    with pytest.raises(InfeasibleInstanceError):
        flatten(bad, None) if False else None
    with pytest.raises(InfeasibleInstanceError):
        slater_probe(*completion_constraints(bad)[:2], 3)


# -- farkas certificates -------------------------------------------------------------


def test_farkas_fixed_j2():
    mats = [_elem(2, 0, 0), _elem(2, 1, 1), _elem(2, 0, 1)]
    b = [1.0, 1.0, 1.0]
    st = farkas_certificate(mats, b, known_feasible=np.ones((2, 2)))
    target = np.array([[0.5, -0.5], [-0.5, 0.5]])
    assert np.max(np.abs(st.matrix - target)) < 1e-6


def test_farkas_k222_rank_one():
    a, _ = k222_canonical_instance()
    mats, b, _ = completion_constraints(a)
    _, x0, _ = slater_probe(mats, b, 6)
    st = farkas_certificate(mats, b, known_feasible=x0, host=a.graph)
    assert numerical_rank(st.matrix, 1e-6) == 1
    assert np.max(np.abs(st.matrix @ x0)) < 1e-6


def test_farkas_strictly_feasible_raises():
    mats = [_elem(2, 0, 0), _elem(2, 1, 1)]
    with pytest.raises(NoCertificateError):
        farkas_certificate(mats, [1.0, 1.0])


# -- pinned flatten -------------------------------------------------------------------


def test_pinned_flatten_empty_free_rejected():
    a, _ = k222_canonical_instance()
    from gramdim.linalg import Configuration

    pins = Configuration(np.eye(6, 5), a.graph)
    with pytest.raises(ValueError, match="nothing to solve"):
        pinned_flatten(pins, a, [], (0, 3))


def test_pinned_flatten_triangle_plus_free_vertex():
    # triangle 0-1-2 pinned in the plane, vertex 3 adjacent to 0 and 1,
    # stretched along (2,3): the optimum value is alpha*a_03 + beta*a_13
    # where p2 = alpha p0 + beta p1.
    from gramdim.linalg import Configuration

    g = Graph.from_edges(4, [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3)])
    p = np.array([[1.0, 0.0], [0.3, 1.1], [-0.4, 0.8]])
    diag = [p[0] @ p[0], p[1] @ p[1], p[2] @ p[2], 2.0]
    off = {
        (0, 1): p[0] @ p[1],
        (0, 2): p[0] @ p[2],
        (1, 2): p[1] @ p[2],
        (0, 3): 0.3,
        (1, 3): -0.2,
    }
    a = PartialMatrix(g, diag, off)
    pins = Configuration(p, g)
    config, stress = pinned_flatten(pins, a, [3], (2, 3))
    q = config.vectors
    # pins unchanged (up to zero padding)
    assert np.allclose(q[:3, :2], p, atol=1e-8)
    assert np.max(np.abs(q[:3, 2:])) < 1e-8
    # all specified entries reproduced
    for (i, j), v in off.items():
        assert np.isclose(q[i] @ q[j], v, atol=1e-6)
    assert np.isclose(q[3] @ q[3], 2.0, atol=1e-6)
    alpha, beta = np.linalg.lstsq(p[:2].T, p[2], rcond=None)[0]
    want = alpha * off[(0, 3)] + beta * off[(1, 3)]
    assert np.isclose(q[2] @ q[3], want, atol=1e-6)
    if stress is not None:
        assert stress.equilibrium_residuals(config).max() <= 1e-6


def test_pinned_flatten_genuine_stretch():
    # path 0-1 pinned, free vertex 2 adjacent to 1 only, stretch (0,2):
    # the program genuinely maximizes and the stress is nonzero with
    # equilibrium at the free vertex.
    from gramdim.linalg import Configuration

    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    p = np.array([[1.0, 0.0], [0.25, 0.9]])
    a = PartialMatrix(g, [1.0, p[1] @ p[1], 1.0], {(0, 1): p[0] @ p[1], (1, 2): 0.4})
    pins = Configuration(p, g)
    config, stress = pinned_flatten(pins, a, [2], (0, 2))
    q = config.vectors
    assert np.isclose(q[1] @ q[2], 0.4, atol=1e-6)
    assert np.isclose(q[2] @ q[2], 1.0, atol=1e-6)
    assert stress is not None
    assert np.isclose(stress.matrix[0, 2], -0.5, atol=1e-9)
    assert stress.equilibrium_residuals(config).max() <= 1e-6
    assert stress.min_eigenvalue() >= -1e-8
    # maximizing inner product with the pin: q2 as aligned with p0 as the
    # single edge constraint allows
    brute = _maximize_q2_dot_p0(p, 0.4)
    assert q[0] @ q[2] >= brute - 1e-6


def _maximize_q2_dot_p0(p, edge_val):
    # 1-d search over unit vectors q2 in the plane spanned by p1 and its
    # complement achieving q2 . p1 = edge_val
    best = -np.inf
    p0, p1 = p[0], p[1]
    n1 = p1 / np.linalg.norm(p1)
    for sign in (1, -1):
        c = edge_val / np.linalg.norm(p1)
        if abs(c) > 1:
            continue
        s = sign * math.sqrt(max(0.0, 1 - c * c))
        perp = np.array([-n1[1], n1[0]])
        q2 = c * n1 + s * perp
        best = max(best, q2 @ p0)
    return best


# -- rank reduction --------------------------------------------------------------------


def test_rank_reduce_trace_constraint():
    mats = [np.eye(3)]
    x = rank_reduce(np.eye(3) / 3, mats)
    assert numerical_rank(x, 1e-7) == 1
    assert np.isclose(np.trace(x), 1.0, atol=1e-9)


def test_rank_reduce_already_rank_one():
    v = np.array([1.0, 2.0])
    x = np.outer(v, v)
    out = rank_reduce(x, [np.eye(2)])
    assert np.allclose(out, x)


def test_rank_reduce_unique_point():
    g = complete_graph(3)
    mats, b, _ = completion_constraints(
        PartialMatrix(g, [1.0] * 3, {e: 1.0 for e in g.edges})
    )
    out = rank_reduce(np.ones((3, 3)), mats)
    assert np.allclose(out, np.ones((3, 3)), atol=1e-9)


def test_rank_reduce_meets_barvinok_bound_random():
    rng = np.random.default_rng(77)
    for trial in range(50):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(1, 2 * n))
        mats = []
        for _ in range(m):
            a = rng.standard_normal((n, n))
            mats.append((a + a.T) / 2)
        q = rng.standard_normal((n, n))
        x0 = q @ q.T + 0.1 * np.eye(n)
        b = np.array([np.tensordot(a, x0) for a in mats])
        out = rank_reduce(x0, mats)
        bound = int(math.floor((math.sqrt(1 + 8 * m) - 1) / 2))
        assert numerical_rank(out, 1e-7) <= bound
        resid = max(abs(np.tensordot(a, out) - bb) for a, bb in zip(mats, b))
        assert resid <= 1e-6 * (1 + np.max(np.abs(b)))
        assert np.linalg.eigvalsh(out).min() >= -1e-8
