import numpy as np
import pytest

from zampling import network
from zampling.data import Batch
from zampling.errors import DimensionError, NumericError
from zampling.network import ArchSpec, forward, grad, loss_and_grad, param_count

from .oracles import central_difference, dense_mlp_loss


@pytest.mark.parametrize("sizes, m", [
    ((784, 300, 100, 10), 266610),
    ((784, 20, 20, 10), 784 * 20 + 20 + 20 * 20 + 20 + 20 * 10 + 10),
    ((1, 1), 2),
])
def test_param_count(sizes, m):
    arch = ArchSpec(sizes)
    assert param_count(arch) == m
    assert arch.layout.size == m
    assert arch.layout.fan_in.size == m


def test_small_arch_count():
    assert param_count(network.SMALL) == 16330


@pytest.mark.parametrize("arch", [network.SMALL, network.MNISTFC, ArchSpec((3, 2, 2))])
def test_layout_is_bijective_and_fan_in_consistent(arch):
    lay = arch.layout
    neurons = sum(arch.layer_sizes[1:])
    # sum over neurons of (fan_in + 1) = m
    assert sum((arch.layer_sizes[l - 1] + 1) * arch.layer_sizes[l]
               for l in range(1, len(arch.layer_sizes))) == lay.size
    assert np.count_nonzero(np.diff(np.r_[0, [b[2] for b in lay.blocks]])) == arch.n_layers
    sample = np.unique(np.r_[np.arange(0, lay.size, max(1, lay.size // 997)), lay.size - 1])
    for i in sample:
        layer, neuron, source = lay.locate(int(i))
        assert lay.index(layer, neuron, source) == i
        assert lay.fan_in[i] == arch.layer_sizes[layer]
    assert neurons == sum(b[4] for b in lay.blocks)


def test_layout_exhaustive_small():
    lay = ArchSpec((3, 2, 2)).layout
    seen = {lay.locate(i) for i in range(lay.size)}
    assert len(seen) == lay.size == 14
    assert lay.locate(6) == (0, 0, None)
    assert lay.locate(8) == (1, 0, 0)


def test_zero_network_loss_is_log_classes():
    arch = ArchSpec((5, 4, 10))
    batch = Batch(np.random.default_rng(0).random((7, 5)), np.arange(7) % 10)
    loss, out = forward(arch, arch.layout, np.zeros(arch.layout.size), batch)
    assert loss == pytest.approx(np.log(10), abs=1e-12)
    assert np.all(out == 0)


def test_hand_computed_toy_forward():
    # 2-2-2 net: W1 = [[1, -1], [0.5, 2]], b1 = [0, -1], W2 = [[1, 0], [-1, 1]], b2 = [0.5, 0]
    arch = ArchSpec((2, 2, 2))
    w = np.array([1, -1, 0.5, 2, 0, -1, 1, 0, -1, 1, 0.5, 0], dtype=float)
    x = np.array([[1.0, 2.0]])
    # hidden pre: [1-2, 0.5+4-1] = [-1, 3.5] -> relu [0, 3.5]
    # logits: [0 + 0.5, -0 + 3.5] = [0.5, 3.5]
    expected = -(0.5 - np.log(np.exp(0.5) + np.exp(3.5)))
    loss, out = forward(arch, arch.layout, w, Batch(x, np.array([0])))
    np.testing.assert_allclose(out, [[0.5, 3.5]])
    assert loss == pytest.approx(expected, rel=1e-14)


def test_output_bias_shift_invariance(rng):
    arch = ArchSpec((4, 3, 5))
    w = rng.standard_normal(arch.layout.size)
    batch = Batch(rng.random((6, 4)), rng.integers(0, 5, 6))
    loss, _ = forward(arch, arch.layout, w, batch)
    _, b_out = arch.layout.unpack(w)[-1]
    b_out += 7.3
    shifted, _ = forward(arch, arch.layout, w, batch)
    assert shifted == pytest.approx(loss, abs=1e-9)


def test_zero_weight_output_bias_gradient():
    arch = ArchSpec((3, 4, 10))
    labels = np.array([2, 2, 7, 0])
    batch = Batch(np.random.default_rng(1).random((4, 3)), labels)
    g = grad(arch, arch.layout, np.zeros(arch.layout.size), batch)
    _, gb = arch.layout.unpack(g)[-1]
    onehot = np.eye(10)[labels]
    np.testing.assert_allclose(gb, (0.1 - onehot).mean(axis=0), atol=1e-15)


@pytest.mark.parametrize("sizes", [(6, 5, 4, 3), (784, 20, 20, 10)])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_central_differences(sizes, seed):
    arch = ArchSpec(sizes)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(arch.layout.size) * np.sqrt(2 / arch.layout.fan_in)
    x = rng.random((5, sizes[0]))
    y = rng.integers(0, sizes[-1], 5)
    _, g = loss_and_grad(arch, w, x, y)
    idx = rng.choice(arch.layout.size, size=min(60, arch.layout.size), replace=False)
    fd = central_difference(lambda v: dense_mlp_loss(sizes, v, x, y), w, idx)
    denom = np.maximum(np.abs(fd), 1e-6)
    assert np.max(np.abs(g[idx] - fd) / denom) < 1e-5


def test_duplicated_sample_gives_same_gradient(rng):
    arch = ArchSpec((4, 6, 3))
    w = rng.standard_normal(arch.layout.size)
    x = rng.random((1, 4))
    y = np.array([1])
    g1 = grad(arch, arch.layout, w, Batch(x, y))
    g2 = grad(arch, arch.layout, w, Batch(np.vstack([x, x]), np.r_[y, y]))
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_forward_is_deterministic(rng):
    arch = ArchSpec((4, 6, 3))
    w = rng.standard_normal(arch.layout.size)
    batch = Batch(rng.random((9, 4)), rng.integers(0, 3, 9))
    a = forward(arch, arch.layout, w, batch)
    b = forward(arch, arch.layout, w, batch)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_weight_errors():
    arch = ArchSpec((2, 2))
    batch = Batch(np.zeros((1, 2)), np.array([0]))
    with pytest.raises(NumericError):
        forward(arch, arch.layout, np.array([np.nan, 0, 0, 0, 0, 0]), batch)
    with pytest.raises(DimensionError):
        forward(arch, arch.layout, np.zeros(5), batch)


def test_get_arch():
    assert network.get_arch("small") is network.SMALL
    assert network.get_arch("10-5-2").layer_sizes == (10, 5, 2)
