import numpy as np
import pytest

from mptp.potential import (PotentialError, PotentialModel, eval_effective,
                            eval_potential)


def test_quadratic_point_values(quad):
    d = eval_potential(quad, [2.0])
    assert d.value == 2.0
    assert d.grad[0] == 2.0
    assert d.hess[0, 0] == 1.0
    assert d.grad_lap[0] == 0.0
    assert d.hess_lap[0, 0] == 0.0


def test_double_well_point_values(dwell):
    d = eval_potential(dwell, [1.0])
    assert d.value == 0.0
    assert d.grad[0] == 0.0
    assert d.hess[0, 0] == 2.0
    assert d.grad_lap[0] == 6.0
    assert d.hess_lap[0, 0] == 6.0
    d = eval_potential(dwell, [1.5])
    assert d.value == pytest.approx(0.390625, abs=0)
    assert d.grad[0] == pytest.approx(1.875, abs=0)


def test_double_well_minima_shape(dwell):
    for x in (-1.0, 1.0):
        d = eval_potential(dwell, [x])
        assert d.grad[0] == 0.0
        assert d.hess[0, 0] == 2.0 > 0


def test_effective_values(quad, dwell):
    e = eval_effective(quad, 0.5, [1.0])
    assert e.value == 0.0
    assert e.hessian[0, 0] == -1.0
    assert eval_effective(dwell, 0.2, [1.0]).value == pytest.approx(0.4, abs=0)
    assert eval_effective(dwell, 0.2, [1.5]).value == pytest.approx(
        -0.6078125, abs=1e-15)


@pytest.mark.parametrize("maker", [
    PotentialModel.quadratic,
    lambda: PotentialModel.double_well_1d(),
    lambda: PotentialModel.double_well_nd(2),
    lambda: PotentialModel.polynomial(
        2, [[0.25, 4, 0], [0.3, 0, 4], [-0.5, 2, 0], [0.7, 1, 1], [0.2, 0, 2]],
        box=[(-3, 3)] * 2),
])
def test_effective_derivative_consistency(maker):
    """grad U and Hess U match finite differences of U on random points."""
    model = maker() if maker is not PotentialModel.quadratic else maker(2)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-3.0, 3.0, size=(25, model.n))
    sigma = 0.4
    U, gU, hU = model.effective_batch(sigma, pts)
    for r, x in enumerate(pts):
        h = 1e-5 * (1.0 + np.abs(x))
        for i in range(model.n):
            e = np.zeros(model.n)
            e[i] = h[i]
            fd = (model.effective_batch(sigma, (x + e)[None])[0][0]
                  - model.effective_batch(sigma, (x - e)[None])[0][0]) / (2 * h[i])
            assert fd == pytest.approx(gU[r, i], rel=1e-6, abs=1e-9)
            fdg = (model.effective_batch(sigma, (x + e)[None])[1][0]
                   - model.effective_batch(sigma, (x - e)[None])[1][0]) / (2 * h[i])
            assert np.allclose(fdg, hU[r, :, i], rtol=1e-5, atol=1e-7)


def test_hessU_exactly_symmetric(dwell):
    model = PotentialModel.double_well_nd(3)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-2.0, 2.0, size=(10, 3))
    hU = model.effective_batch(0.7, pts)[2]
    assert np.array_equal(hU, np.swapaxes(hU, -1, -2))


def test_U_affine_in_sigma(dwell):
    """U(sigma, x) = U(0, x) + sigma * LapV(x) to machine precision."""
    rng = np.random.default_rng(11)
    pts = rng.uniform(-2.5, 2.5, size=(40, 1))
    lap = np.array([eval_potential(dwell, x).hess[0, 0] for x in pts])
    U0 = dwell.effective_batch(0.0, pts)[0]
    for sigma in (0.1, 0.5, 1.3):
        U = dwell.effective_batch(sigma, pts)[0]
        assert np.allclose(U, U0 + sigma * lap, rtol=0, atol=1e-14)


def test_gradient_matches_fd_of_V(dwell):
    rng = np.random.default_rng(4)
    for x in rng.uniform(-3, 3, size=(20, 1)):
        d = eval_potential(dwell, x)
        h = 1e-5 * (1 + abs(x[0]))
        fd = (dwell.value_batch((x + h)[None])[0]
              - dwell.value_batch((x - h)[None])[0]) / (2 * h)
        assert fd == pytest.approx(d.grad[0], rel=1e-6, abs=1e-10)


def test_polynomial_from_config_and_cap():
    model = PotentialModel.from_config(
        {"kind": "polynomial", "n": 1, "coeffs": [[1.0, 4], [-2.0, 2]],
         "box": [[-2, 2]]})
    d = eval_potential(model, [1.0])
    assert d.value == -1.0
    assert d.grad[0] == 0.0
    with pytest.raises(PotentialError):
        PotentialModel.polynomial(1, [[1.0, 20]])


def test_user_plugin_without_hess_rejected_for_fourth_order():
    model = PotentialModel.from_callables(
        1, value=lambda x: float(x[0] ** 4), box=[(-2, 2)])
    with pytest.raises(PotentialError):
        eval_potential(model, [0.5])


def test_user_plugin_fd_fallback():
    model = PotentialModel.from_callables(
        1, value=lambda x: 0.25 * (x[0] ** 2 - 1) ** 2,
        grad=lambda x: np.array([x[0] ** 3 - x[0]]),
        hess=lambda x: np.array([[3 * x[0] ** 2 - 1]]),
        box=[(-2.5, 2.5)])
    d = eval_potential(model, [1.0])
    assert d.grad_lap[0] == pytest.approx(6.0, rel=1e-6)
    assert d.hess_lap[0, 0] == pytest.approx(6.0, rel=2e-4)
    e = eval_effective(model, 0.2, [1.5])
    assert e.value == pytest.approx(-0.6078125, rel=1e-9)


def test_bounded_above_check(dwell):
    from mptp.potential import check_bounded_above
    assert check_bounded_above(dwell, 0.3)
    # U increasing across the whole box peaks on the boundary
    model = PotentialModel.polynomial(1, [[1.0 / 3.0, 3]], box=[(-1, 1)])
    with pytest.warns(UserWarning):
        assert not check_bounded_above(model, 1.5)


def test_invalid_inputs(quad):
    with pytest.raises(PotentialError):
        eval_potential(quad, [np.nan])
    with pytest.raises(PotentialError):
        eval_effective(quad, -0.1, [1.0])
    with pytest.raises(PotentialError):
        PotentialModel.from_config({"kind": "nope", "n": 1})
    with pytest.raises(PotentialError):
        PotentialModel.from_config({"kind": "builtin-quadratic", "spam": 1})
