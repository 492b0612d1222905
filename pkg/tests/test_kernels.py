import numpy as np

from mptp._kernels import IMPLEMENTATION, cumprod_matmul, _cumprod_py


def test_implementations_agree():
    rng = np.random.default_rng(0)
    for M, d in ((1, 2), (7, 2), (64, 4), (200, 6)):
        steps = np.eye(d) + 0.05 * rng.standard_normal((M, d, d))
        ref = _cumprod_py.cumprod_matmul(steps)
        out = cumprod_matmul(np.ascontiguousarray(steps))
        assert out.shape == (M + 1, d, d)
        assert np.array_equal(out[0], np.eye(d))
        assert np.allclose(out, ref, rtol=0, atol=1e-12)


def test_identity_steps():
    steps = np.broadcast_to(np.eye(3), (10, 3, 3)).copy()
    out = cumprod_matmul(steps)
    assert np.array_equal(out[-1], np.eye(3))


def test_selected_implementation_reported():
    assert IMPLEMENTATION in ("compiled", "python")


def test_non_square_rejected():
    import pytest
    bad = np.zeros((4, 2, 3))
    with pytest.raises(ValueError):
        _cumprod_py.cumprod_matmul(bad)
    with pytest.raises(ValueError):
        cumprod_matmul(bad)
