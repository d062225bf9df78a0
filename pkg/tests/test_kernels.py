import numpy as np
import pytest

from tire_rme import _kernels_py, kernels


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.backends()


@pytest.mark.parametrize("name", sorted(kernels.backends()))
def test_backends_agree_on_los(name):
    impl = kernels.backends()[name]
    rng = np.random.default_rng(3)
    for _ in range(500):
        a = [int(v) for v in rng.integers(0, 40, 4)]
        assert impl.los_pixels(*a) == _kernels_py.los_pixels(*a)


@pytest.mark.parametrize("name", sorted(kernels.backends()))
def test_backends_agree_on_counts(name):
    impl = kernels.backends()[name]
    rng = np.random.default_rng(4)
    b = (rng.random((20, 24)) < 0.3).astype(np.uint8)
    for tx in [(0, 0), (23, 19), (11, 7)]:
        f1, t1 = impl.los_counts(b, *tx)
        f2, t2 = _kernels_py.los_counts(b, *tx)
        assert np.array_equal(f1, f2) and np.array_equal(t1, t2)
        assert t1[tx[1], tx[0]] == 0
