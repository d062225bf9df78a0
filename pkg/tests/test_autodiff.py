import math

import numpy as np
import pytest

from oracles import finite_difference, rel_err
from tire_rme import autodiff as ad
from tire_rme.autodiff import Adam, Tensor
from tire_rme.errors import DataError, ShapeError, UsageError

SEEDS = range(10)


def away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin + x, x)


def grad_check(op, arrays, rng):
    """Compare backward() against central differences of sum(op(*inputs) * r)."""
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*ts)
    r = rng.normal(size=out.shape)
    loss = ad.sum_all(ad.mul(out, Tensor(r)))
    loss.backward()

    def f():
        return float(np.sum(op(*[Tensor(a) for a in arrays]).data * r))

    for t, a in zip(ts, arrays):
        num = finite_difference(f, a)
        assert rel_err(t.grad, num) < 1e-4, op


UNARY = {
    "relu": ad.relu,
    "leaky_relu": lambda x: ad.leaky_relu(x, 0.2),
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "max_pool2d": ad.max_pool2d,
}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", SEEDS)
def test_unary_gradients(name, seed):
    rng = np.random.default_rng(seed)
    grad_check(UNARY[name], [away_from_zero(rng, (2, 3, 4, 4))], rng)


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul])
@pytest.mark.parametrize("seed", SEEDS)
def test_binary_broadcast_gradients(op, seed):
    rng = np.random.default_rng(seed)
    grad_check(op, [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(1, 3, 1, 4))], rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_concat_gradient(seed):
    rng = np.random.default_rng(seed)
    grad_check(lambda a, b: ad.concat([a, b], axis=1), [rng.normal(size=(2, 2, 3, 3)), rng.normal(size=(2, 3, 3, 3))], rng)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_gradient(seed, stride, padding):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(2, 3, 7, 7)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)]
    grad_check(lambda x, w, b: ad.conv2d(x, w, b, stride, padding), arrays, rng)


@pytest.mark.parametrize("k,stride,padding", [(4, 2, 1), (2, 2, 0), (3, 1, 1)])
@pytest.mark.parametrize("seed", SEEDS)
def test_conv_transpose2d_gradient(seed, k, stride, padding):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(3, 2, k, k)), rng.normal(size=2)]
    grad_check(lambda x, w, b: ad.conv_transpose2d(x, w, b, stride, padding), arrays, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    grad_check(ad.mse_loss, [rng.normal(size=(2, 1, 4, 4)), rng.normal(size=(2, 1, 4, 4))], rng)
    grad_check(ad.bce_loss, [rng.uniform(0.05, 0.95, size=(2, 1, 4, 4)), rng.uniform(size=(2, 1, 4, 4))], rng)
    grad_check(ad.mean, [rng.normal(size=(3, 4))], rng)


def test_fan_out_accumulates():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    x = Tensor(a, requires_grad=True)
    loss = ad.sum_all(ad.add(ad.mul(x, x), ad.tanh(x)))
    loss.backward()

    def f():
        return float(np.sum(a * a + np.tanh(a)))

    assert rel_err(x.grad, finite_difference(f, a)) < 1e-8
    assert rel_err(x.grad, 2 * a + 1 - np.tanh(a) ** 2) < 1e-12


def test_scalar_examples():
    x = Tensor(0.0, requires_grad=True)
    y = ad.sigmoid(x)
    assert y.item() == 0.5
    y.backward()
    assert x.grad == 0.25
    x = Tensor(3.0, requires_grad=True)
    ad.mul(x, x).backward()
    assert x.grad == 6.0


def test_loss_examples():
    assert ad.bce_loss(Tensor([0.5]), Tensor([1.0])).item() == pytest.approx(math.log(2), abs=1e-12)
    assert ad.mse_loss(Tensor([0.0, 1.0]), Tensor([0.0, 0.0])).item() == 0.5
    # clamp keeps log(0) finite
    assert math.isfinite(ad.bce_loss(Tensor([0.0, 1.0]), Tensor([1.0, 0.0])).item())


def test_conv2d_hand_example():
    x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
    out = ad.conv2d(Tensor(x), Tensor(np.ones((1, 1, 3, 3))), stride=1, padding=1).data
    assert out.shape == (1, 1, 4, 4)
    assert out[0, 0, 1, 2] == x[0, 0, 0:3, 1:4].sum()
    assert out[0, 0, 0, 0] == x[0, 0, 0:2, 0:2].sum()


def test_conv_output_size_algebra():
    for n, k, s, p in [(32, 4, 2, 1), (7, 3, 2, 0), (16, 3, 1, 1), (5, 5, 1, 0)]:
        out = ad.conv2d(Tensor(np.zeros((1, 1, n, n))), Tensor(np.zeros((2, 1, k, k))), stride=s, padding=p)
        assert out.shape[2] == (n + 2 * p - k) // s + 1
    out = ad.conv_transpose2d(Tensor(np.zeros((1, 2, 8, 8))), Tensor(np.zeros((2, 3, 4, 4))), stride=2, padding=1)
    assert out.shape == (1, 3, 16, 16)


def test_conv_transpose_is_adjoint_of_conv():
    rng = np.random.default_rng(5)
    x, w, y = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(4, 3, 4, 4)), rng.normal(size=(2, 4, 4, 4))
    lhs = np.sum(ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data * y)
    rhs = np.sum(ad.conv_transpose2d(Tensor(y), Tensor(w), stride=2, padding=1).data * x)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_max_pool_tie_goes_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    ad.sum_all(ad.max_pool2d(x)).backward()
    assert x.grad[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_shape_errors_name_op_and_shapes():
    with pytest.raises(ShapeError, match=r"mse_loss.*\(2,\).*\(3,\)"):
        ad.mse_loss(Tensor(np.zeros(2)), Tensor(np.zeros(3)))
    with pytest.raises(ShapeError, match="add"):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 3))))
    with pytest.raises(ShapeError, match="conv2d"):
        ad.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ShapeError, match="concat"):
        ad.concat([Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3)))])
    with pytest.raises(ShapeError):
        ad.max_pool2d(Tensor(np.zeros((1, 1, 3, 3))))


def test_backward_on_non_scalar_is_usage_error():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        ad.relu(x).backward()


def test_no_grad_for_constants():
    x = Tensor(np.ones(3), requires_grad=True)
    c = Tensor(np.ones(3))
    ad.sum_all(ad.mul(x, c)).backward()
    assert c.grad is None and np.array_equal(x.grad, np.ones(3))


def test_deterministic_forward_backward():
    def run():
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(2, 3, 8, 8)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
        loss = ad.mean(ad.sigmoid(ad.conv2d(x, w, padding=1)))
        loss.backward()
        return loss.data.tobytes() + x.grad.tobytes() + w.grad.tobytes()

    assert run() == run()


# ------------------------------------------------------------------ Adam

def test_adam_zero_gradient_leaves_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(3):
        p.grad = np.zeros(2)
        opt.step()
    assert p.data.tolist() == [1.0, -2.0]


def test_adam_first_step_bound():
    rng = np.random.default_rng(0)
    g = rng.normal(size=50)
    p = Tensor(np.zeros(50), requires_grad=True)
    p.grad = g
    Adam([p], lr=0.01).step()
    assert np.all(np.abs(p.data) <= 0.01 * (1 + 1e-6))
    assert np.all(np.sign(p.data) == -np.sign(g))


def test_adam_converges_on_square():
    x = Tensor(np.array(5.0), requires_grad=True)
    opt = Adam([x], lr=0.1, betas=(0.9, 0.999))
    for _ in range(200):
        opt.zero_grad()
        ad.mul(x, x).backward()
        opt.step()
    assert abs(x.item()) < 0.1


def test_adam_step_shape_mismatch():
    class S:
        t, m, v = 1, [np.zeros(2)], [np.zeros(2)]

    with pytest.raises(ShapeError):
        ad.adam_step([np.zeros(2)], [np.zeros(3)], S, 0.1, 0.9, 0.999, 1e-8)


# ------------------------------------------------------------------ checkpoints

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"a.w": rng.normal(size=(3, 2, 4, 4)), "a.b": rng.normal(size=3), "s": np.array(2.5)}
    ad.save_checkpoint(tmp_path / "c.ckpt", tensors)
    raw = (tmp_path / "c.ckpt").read_bytes()
    header, _ = raw.split(b"\n", 1)
    assert header.startswith(b'{"tensors":[{"name":"a.w","shape":[3,2,4,4],"dtype":"f64"}')
    back = ad.load_checkpoint(tmp_path / "c.ckpt")
    assert list(back) == list(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
    assert ad.checksum(back) == ad.checksum(tensors)


def test_checkpoint_corruption(tmp_path):
    p = tmp_path / "c.ckpt"
    ad.save_checkpoint(p, {"w": np.ones(4)})
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(DataError):
        ad.load_checkpoint(p)
    p.write_bytes(raw + b"x")
    with pytest.raises(DataError):
        ad.load_checkpoint(p)
    p.write_bytes(b"not json\n")
    with pytest.raises(DataError):
        ad.load_checkpoint(p)
