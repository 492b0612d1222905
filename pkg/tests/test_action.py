import json

import numpy as np
import pytest
import scipy.linalg

from mptp.action import (PathState, action_gradient, action_hessian,
                         action_value, k0_value, l2_functional, l2_gradient,
                         mane_value, mass_matrix, om_value, path_energy,
                         path_from_csv, path_header, path_to_csv, r0_select,
                         w12_gram)
from mptp.potential import PotentialModel


def random_path(rng, n=1, N=30, T=1.3, sigma=0.7, k=0.2, span=2.0):
    nodes = np.linspace(-1.0, 1.0, N + 1)[:, None] * np.ones(n)[None, :]
    nodes = nodes + 0.3 * rng.standard_normal((N + 1, n))
    nodes[0] = -span / 2
    nodes[-1] = span / 2
    return PathState(nodes, T, sigma, k)


def test_straight_line_closed_form(quad):
    p = PathState.straight_line([0.0], [1.0], 200, 1.0, sigma=0.0)
    assert action_value(p, quad) == pytest.approx(2.0 / 3.0, abs=1e-4)


def test_constant_path_value(quad):
    nodes = np.full((11, 1), 0.7)
    p = PathState(nodes, 2.5, 0.0, 0.0)
    # zero velocity, U(0, x) = -x^2/2
    assert action_value(p, quad) == pytest.approx(2.5 * 0.5 * 0.49, rel=1e-12)


def test_cosh_orbit_action(quad):
    T = np.arccosh(2.0)
    ts = np.linspace(0.0, 1.0, 401)
    p = PathState(np.cosh(T * ts)[:, None], T, 0.5, 0.0)
    target = np.sqrt(3.0) - 0.5 * np.arccosh(2.0)
    assert action_value(p, quad) == pytest.approx(target, abs=5e-4)
    stats = path_energy(p, quad)
    assert abs(stats.mean) <= 1e-5
    assert stats.dev <= 10.0 / 400 ** 2 * 10


def test_om_value_shifts(quad, dwell):
    p = PathState.straight_line([-1.0], [1.0], 20, 1.0, sigma=0.2)
    assert om_value(p, dwell) == pytest.approx(action_value(p, dwell), abs=0)
    q = PathState.straight_line([1.0], [2.0], 20, 1.0, sigma=0.5, k=0.3)
    zero_k = PathState(np.array(q.nodes), q.T, q.sigma, 0.0)
    assert om_value(q, quad) == pytest.approx(
        action_value(zero_k, quad) + 1.5, rel=1e-12)


def test_gradient_matches_fd(quad, dwell):
    rng = np.random.default_rng(0)
    h = 1e-6
    for model in (quad, dwell):
        for _ in range(5):
            p = random_path(rng)
            gx, gT = action_gradient(p, model)
            z = p.interior()
            fd = np.empty_like(gx)
            for i in range(z.size):
                zp, zm = z.copy(), z.copy()
                zp[i] += h
                zm[i] -= h
                fd[i] = (action_value(p.with_interior(zp), model)
                         - action_value(p.with_interior(zm), model)) / (2 * h)
            assert np.abs(fd - gx).max() <= 1e-6 * max(1.0, np.abs(gx).max())
            fdT = (action_value(p.with_T(p.T + h), model)
                   - action_value(p.with_T(p.T - h), model)) / (2 * h)
            assert fdT == pytest.approx(gT, rel=1e-6, abs=1e-8)


def test_gradT_is_energy_quadrature(dwell):
    rng = np.random.default_rng(1)
    p = random_path(rng, sigma=0.4, k=0.6)
    _gx, gT = action_gradient(p, dwell)
    stats = path_energy(p, dwell)
    assert gT == pytest.approx(p.k - stats.mean, rel=1e-13)


def test_hessian_matches_fd(dwell):
    rng = np.random.default_rng(2)
    p = random_path(rng, N=25)
    blocks = action_hessian(p, dwell, 0.0)
    A = blocks.dense_A()
    z = p.interior()
    h = 1e-6
    fdH = np.empty_like(A)
    fdB = np.empty_like(blocks.Bcol)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        gp, gTp = action_gradient(p.with_interior(zp), dwell)
        gm, gTm = action_gradient(p.with_interior(zm), dwell)
        fdH[:, i] = (gp - gm) / (2 * h)
        fdB[i] = (gTp - gTm) / (2 * h)
    assert np.abs(fdH - A).max() <= 1e-5 * np.abs(A).max()
    assert np.abs(fdB - blocks.Bcol).max() <= 1e-5 * max(1.0, np.abs(blocks.Bcol).max())
    fdC = (action_gradient(p.with_T(p.T + h), dwell)[1]
           - action_gradient(p.with_T(p.T - h), dwell)[1]) / (2 * h)
    assert fdC == pytest.approx(blocks.C, rel=1e-6)


def test_quadratic_interior_block_closed_form(quad):
    """For V quadratic at sigma=0.5, R = 1 and A(0) discretizes
    -(1/T) xi'' + T xi."""
    N, T = 50, 1.4
    p = PathState.straight_line([1.0], [2.0], N, T, sigma=0.5)
    A = action_hessian(p, quad, 0.0).dense_A()
    expect = np.zeros_like(A)
    for j in range(N - 1):
        expect[j, j] = 2.0 * N / T + T / (2.0 * N)
        if j + 1 < N - 1:
            expect[j, j + 1] = -N / T + T / (4.0 * N)
            expect[j + 1, j] = expect[j, j + 1]
    assert np.allclose(A, expect, rtol=0, atol=1e-12)


def test_sigma_affinity_of_action(dwell):
    """action(sigma) = action(0) + sigma * L2 with L2 = -T mean(LapV)."""
    rng = np.random.default_rng(3)
    p = random_path(rng, sigma=0.0, k=0.1)
    base = action_value(p, dwell)
    l2 = l2_functional(p, dwell)
    for sigma in (0.2, 0.9, 1.7):
        ps = PathState(np.array(p.nodes), p.T, sigma, p.k)
        assert action_value(ps, dwell) == pytest.approx(base + sigma * l2,
                                                        rel=1e-14)


def test_l2_gradient_fd(dwell):
    rng = np.random.default_rng(9)
    p = random_path(rng, N=20)
    gx, gT = l2_gradient(p, dwell)
    z = p.interior()
    h = 1e-6
    for i in range(0, z.size, 5):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd = (l2_functional(p.with_interior(zp), dwell)
              - l2_functional(p.with_interior(zm), dwell)) / (2 * h)
        assert fd == pytest.approx(gx[i], rel=1e-6, abs=1e-9)
    fdT = (l2_functional(p.with_T(p.T + h), dwell)
           - l2_functional(p.with_T(p.T - h), dwell)) / (2 * h)
    assert fdT == pytest.approx(gT, rel=1e-8)


def test_lower_bound_inequality(quad, dwell):
    """action >= |dx|^2/(2T) + T (k - c_u) - O(N^-2) on random paths."""
    rng = np.random.default_rng(4)
    for model, box in ((quad, [(-4, 4)]), (dwell, [(-2.5, 2.5)])):
        for _ in range(10):
            p = random_path(rng, N=40, T=float(rng.uniform(0.2, 5.0)),
                            sigma=float(rng.uniform(0.0, 1.0)),
                            k=float(rng.uniform(-0.5, 1.0)))
            c_u = mane_value(model, p.sigma, box).c_u
            gap = float(p.x_plus[0] - p.x_minus[0])
            bound = gap ** 2 / (2 * p.T) + p.T * (p.k - c_u)
            eps = 100.0 / p.N ** 2 * (1 + abs(c_u)) * p.T
            assert action_value(p, model) >= bound - eps


def test_energy_constant_on_critical_path(dwell):
    from mptp.solver import SolveConfig, minimize_fixed_T
    res = minimize_fixed_T(dwell, 0.2, 2.0, [-1.0], [1.0],
                           SolveConfig(N=200, tau=3.0))
    stats = path_energy(res.path, dwell)
    scale = 1.0 + np.abs(stats.samples).max()
    assert stats.dev <= 10.0 * scale / res.path.N ** 2


def test_constant_path_energy_is_U(dwell):
    nodes = np.full((13, 1), -1.0)
    p = PathState(nodes, 2.0, 0.3, 0.0)
    stats = path_energy(p, dwell)
    assert stats.mean == pytest.approx(0.6, rel=1e-14)  # U(-1) = 2 sigma
    assert stats.dev <= 1e-15


def test_inertia_invariant_under_mass_matrix(dwell):
    """Negative counts agree between plain and W12 generalized eigenproblems."""
    rng = np.random.default_rng(6)
    for _ in range(5):
        p = random_path(rng, N=25, sigma=float(rng.uniform(0, 1)))
        A = action_hessian(p, dwell, 0.0).dense_A()
        plain = int(np.sum(scipy.linalg.eigvalsh(A) < 0))
        G = w12_gram(p.N, p.n, p.T)
        gen = int(np.sum(scipy.linalg.eigh(A, G, eigvals_only=True) < 0))
        assert plain == gen


def test_r0_makes_blocks_positive(dwell):
    rng = np.random.default_rng(7)
    p = random_path(rng, N=30, sigma=0.8, T=3.0)
    r0 = r0_select(p, dwell)
    blocks = action_hessian(p, dwell, r0)
    assert scipy.linalg.eigvalsh(blocks.dense_A()).min() > 0
    assert scipy.linalg.eigvalsh(blocks.bordered_dense()).min() > 0
    base = action_hessian(p, dwell, 0.0)
    assert scipy.linalg.eigvalsh(base.dense_A()).min() < 0  # genuinely indefinite


def test_regularization_blocks_structure(dwell):
    rng = np.random.default_rng(8)
    p = random_path(rng, N=20)
    b0 = action_hessian(p, dwell, 0.0)
    r = 3.7
    br = action_hessian(p, dwell, r)
    # A(r) = A(0) + (r/T) * mass; C(r) = (1+r) C(0); B unchanged
    M = mass_matrix(p.N, p.n, p.T)
    assert np.allclose(br.dense_A(), b0.dense_A() + r * M, atol=1e-14)
    assert br.C == pytest.approx((1 + r) * b0.C, rel=1e-14)
    assert np.array_equal(br.Bcol, b0.Bcol)


def test_mane_values(quad, dwell):
    assert mane_value(quad, 0.5, [(-4, 4)]).c_u == pytest.approx(0.5, abs=1e-9)
    mv = mane_value(dwell, 0.0, [(-2.5, 2.5)])
    assert mv.c_u == pytest.approx(0.0, abs=1e-10)
    mv2 = mane_value(dwell, 0.2, [(-2.5, 2.5)])
    assert mv2.c_u >= 0.4 - 1e-12


def test_mane_warns_on_boundary_argmax():
    # V = x^3/3: U = 2 sigma x - x^4/2 is increasing on [-1, 1] for sigma > 1,
    # so the argmax sits on the box edge
    model = PotentialModel.polynomial(1, [[1.0 / 3.0, 3]], box=[(-1, 1)])
    with pytest.warns(UserWarning):
        mane_value(model, 1.5, [(-1, 1)])


def test_k0_critical_endpoints(dwell):
    for sigma in (0.1, 0.2, 0.5):
        cv = k0_value(dwell, sigma, [-1.0], [1.0])
        assert cv.k0_method == "critical-endpoints"
        assert cv.k0 == pytest.approx(2 * sigma, abs=1e-9)
        assert cv.k0 <= cv.c_u + 1e-12


def test_k0_sublevel_quadratic(quad):
    cv = k0_value(quad, 0.5, [1.0], [2.0], box=[(-3.0, 3.0)])
    assert cv.k0_method == "sublevel-connectivity"
    assert cv.k0 == pytest.approx(0.0, abs=1e-6)
    assert cv.k0 <= cv.c_u


def test_k0_errors(quad):
    with pytest.raises(Exception):
        k0_value(quad, 0.5, [10.0], [2.0], box=[(-3, 3)])


def test_path_serialization_roundtrip(dwell):
    rng = np.random.default_rng(10)
    p = random_path(rng, N=12, sigma=0.3, k=0.1)
    text = path_to_csv(p)
    q = path_from_csv(text, p.T, p.sigma, p.k)
    assert np.array_equal(q.nodes, p.nodes)
    header = path_header(p, dwell)
    blob = json.dumps(header, sort_keys=True)
    assert json.loads(blob)["N"] == p.N


def test_path_state_validation():
    with pytest.raises(Exception):
        PathState(np.zeros((2, 1)), 1.0)          # N < 2
    with pytest.raises(Exception):
        PathState(np.zeros((5, 1)), -1.0)         # T <= 0
    with pytest.raises(Exception):
        PathState(np.full((5, 1), np.inf), 1.0)   # non-finite
