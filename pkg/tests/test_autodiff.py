import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftfuse.autodiff import (
    AdamState,
    SparseVoxelTensor,
    Tensor,
    VoxelLayout,
    adam_step,
    backward,
    conv2d,
    downsample,
    finite_diff_gradient,
    functional as F,
    relative_error,
    sparse_conv3d,
    stop_gradient,
)
from liftfuse.errors import ConfigError, NumericError, UsageError

from oracles import dense_conv2d_oracle, dense_conv3d_oracle, random_sparse


# ---- conv2d -----------------------------------------------------------------

def test_conv2d_identity_kernel(rng):
    x = rng.normal(size=(3, 5, 6))
    w = np.eye(3).reshape(3, 3, 1, 1)
    out = conv2d(Tensor(x), Tensor(w))
    assert np.array_equal(out.data, x)


def test_conv2d_all_ones_over_three_channels():
    out = conv2d(Tensor(np.full((3, 4, 4), 2.0)), Tensor(np.ones((1, 3, 1, 1))))
    assert np.all(out.data == 6.0)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_conv2d_matches_loop_oracle(rng, stride, padding):
    x = rng.normal(size=(2, 7, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    out = conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding)
    assert out.shape[1] == (7 + 2 * padding - 3) // stride + 1
    np.testing.assert_allclose(out.data, dense_conv2d_oracle(x, w, stride, padding), atol=1e-12)


def test_conv2d_kernel_gradient_matches_finite_differences(rng):
    x = rng.normal(size=(1, 5, 5))
    w0 = rng.normal(size=(1, 1, 3, 3))
    w = Tensor.parameter(w0, "w")
    g = backward(F.sum(conv2d(Tensor(x), w)), [w])["w"]
    fd = finite_diff_gradient(lambda k: conv2d(Tensor(x), Tensor(k)).data.sum(), w0, eps=1e-5)
    assert relative_error(g, fd) <= 1e-6


def test_conv2d_rejects_bad_shapes(rng):
    with pytest.raises(ConfigError):
        conv2d(Tensor(rng.normal(size=(2, 4, 4))), Tensor(rng.normal(size=(1, 3, 3, 3))))
    with pytest.raises(ConfigError):
        conv2d(Tensor(rng.normal(size=(1, 2, 2))), Tensor(rng.normal(size=(1, 1, 3, 3))))


def test_nonfinite_values_rejected():
    with pytest.raises(NumericError):
        Tensor(np.array([1.0, np.nan]))
    with pytest.raises(NumericError):
        Tensor(np.array([np.inf]))


# ---- sparse_conv3d -------------------------------------------------------------

def test_sparse_conv3d_identity_single_voxel():
    x = SparseVoxelTensor.from_entries([[1, 2, 3]], [[0.7, -1.5]], (4, 4, 4))
    w = np.zeros((2, 2, 1, 1, 1))
    w[0, 0] = w[1, 1] = 1.0
    out = sparse_conv3d(x, Tensor(w))
    assert np.array_equal(out.coords, x.coords)
    assert np.array_equal(out.features.data, x.features.data)


def test_sparse_conv3d_two_adjacent_voxels_all_ones():
    x = SparseVoxelTensor.from_entries([[1, 1, 1], [1, 1, 2]], [[1.0], [1.0]], (4, 4, 4))
    w = np.ones((1, 1, 3, 3, 3))
    out = sparse_conv3d(x, Tensor(w))
    oracle = dense_conv3d_oracle(x.to_dense(), w)
    c = out.coords
    expected = oracle[0, c[:, 0], c[:, 1], c[:, 2]]
    assert np.array_equal(expected, [2.0, 2.0])
    assert np.array_equal(out.features.data[:, 0], expected)


@pytest.mark.parametrize("grid", [(2, 2, 2), (4, 4, 4), (3, 5, 4), (8, 8, 8)])
def test_sparse_conv3d_equals_dense_oracle(rng, grid):
    for trial in range(4):
        n = int(rng.integers(1, int(np.prod(grid)) + 1))
        x = random_sparse(rng, grid, n, 3)
        k = int(rng.choice([1, 3, 5]))
        w = rng.normal(size=(2, 3, k, k, k))
        out = sparse_conv3d(x, Tensor(w))
        oracle = dense_conv3d_oracle(x.to_dense(), w)
        c = out.coords
        assert np.abs(out.features.data - oracle[:, c[:, 0], c[:, 1], c[:, 2]].T).max() <= 1e-12


def test_sparse_conv3d_stride_two_matches_strided_dense(rng):
    grid = (8, 8, 8)
    x = random_sparse(rng, grid, 60, 2)
    w = rng.normal(size=(3, 2, 3, 3, 3))
    out = sparse_conv3d(x, Tensor(w), stride=2)
    assert out.grid_shape == (4, 4, 4)
    full = dense_conv3d_oracle(x.to_dense(), w)
    c = out.coords
    np.testing.assert_allclose(out.features.data, full[:, 2 * c[:, 0], 2 * c[:, 1], 2 * c[:, 2]].T, atol=1e-12)
    expected = np.unique(x.coords // 2, axis=0)
    assert np.array_equal(c, expected)


def test_sparse_conv3d_stride_must_divide_grid(rng):
    x = random_sparse(rng, (5, 4, 4), 5, 1)
    with pytest.raises(ConfigError):
        sparse_conv3d(x, Tensor(np.ones((1, 1, 3, 3, 3))), stride=2)


def test_sparse_conv3d_batched_samples_do_not_interact(rng):
    grid = (4, 4, 4)
    a = random_sparse(rng, grid, 20, 2)
    b = random_sparse(rng, grid, 25, 2)
    w = rng.normal(size=(2, 2, 3, 3, 3))
    stacked = VoxelLayout.stack([a.layout, b.layout])
    feats = np.concatenate([a.features.data, b.features.data])
    out = sparse_conv3d(SparseVoxelTensor(stacked, Tensor(feats)), Tensor(w))
    ref = np.concatenate([sparse_conv3d(a, Tensor(w)).features.data, sparse_conv3d(b, Tensor(w)).features.data])
    assert np.array_equal(out.features.data, ref)


# ---- downsample -----------------------------------------------------------------

def test_downsample_2d_example():
    out = downsample(Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]])))
    assert out.data.tolist() == [[[4.0]]]


def test_downsample_sparse_merge_by_max():
    x = SparseVoxelTensor.from_entries([[0, 0, 0], [1, 1, 1]], [[1.0], [3.0]], (2, 2, 2))
    out = downsample(x)
    assert out.coords.tolist() == [[0, 0, 0]]
    assert out.features.data.tolist() == [[3.0]]
    assert out.grid_shape == (1, 1, 1)


def test_downsample_2d_equals_window_scan(rng):
    x = rng.normal(size=(2, 8, 8))
    out = downsample(Tensor(x)).data
    oracle = np.zeros((2, 4, 4))
    for c in range(2):
        for r in range(4):
            for q in range(4):
                oracle[c, r, q] = max(x[c, 2 * r + a, 2 * q + b] for a in range(2) for b in range(2))
    assert np.array_equal(out, oracle)


def test_downsample_indivisible_raises(rng):
    with pytest.raises(ConfigError):
        downsample(Tensor(rng.normal(size=(1, 3, 4))))
    x = random_sparse(rng, (3, 4, 4), 4, 1)
    with pytest.raises(ConfigError):
        downsample(x)


# ---- backward -------------------------------------------------------------------

def test_backward_identity_loss():
    p = Tensor.parameter(3.0, "p")
    assert backward(p, [p])["p"] == 1.0


def test_backward_stop_gradient_semantics(rng):
    pv, qv = rng.normal(size=4), rng.normal(size=4)
    p, q = Tensor.parameter(pv, "p"), Tensor.parameter(qv, "q")
    grads = backward(F.sum(stop_gradient(p) * q), [p, q])
    assert "p" not in grads
    assert np.array_equal(grads["p"], np.zeros(4))
    assert np.array_equal(grads["q"], pv)


def test_backward_rejects_non_scalar(rng):
    p = Tensor.parameter(rng.normal(size=3), "p")
    with pytest.raises(UsageError):
        backward(p * 2.0, [p])


def test_backward_composite_conv_relu_mean(rng):
    x = rng.normal(size=(2, 6, 6))
    w0 = rng.normal(size=(3, 2, 3, 3))
    b0 = rng.normal(size=3)

    def f(wv, bv):
        return F.mean(F.relu(conv2d(Tensor(x), Tensor(wv), Tensor(bv), padding=1))).item()

    w, b = Tensor.parameter(w0, "w"), Tensor.parameter(b0, "b")
    grads = backward(F.mean(F.relu(conv2d(Tensor(x), w, b, padding=1))), [w, b])
    assert relative_error(grads["w"], finite_diff_gradient(lambda v: f(v, b0), w0)) <= 1e-6
    assert relative_error(grads["b"], finite_diff_gradient(lambda v: f(w0, v), b0)) <= 1e-6


def test_backward_shared_node_accumulates(rng):
    pv = rng.normal(size=3)
    p = Tensor.parameter(pv, "p")
    y = p * p
    grads = backward(F.sum(y + y * 2.0), [p])
    np.testing.assert_allclose(grads["p"], 6 * pv, rtol=1e-15)


def test_stop_gradient_blocks_every_path_exactly(rng):
    p = Tensor.parameter(rng.normal(size=(2, 2)), "p")
    q = Tensor.parameter(rng.normal(size=(2, 2)), "q")
    s = stop_gradient(p)
    loss = F.sum(F.exp(s) * q + F.relu(s @ q))
    grads = backward(loss, [p, q])
    assert np.array_equal(grads["p"], np.zeros((2, 2)))
    assert np.abs(grads["q"]).sum() > 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=12))
def test_stop_gradient_is_value_transparent(values):
    x = Tensor(np.array(values))
    s = stop_gradient(x)
    assert np.array_equal(s.data, x.data)
    assert np.array_equal((s * 3.0).data, (x * 3.0).data)


# ---- finite differences ---------------------------------------------------------

def test_finite_diff_of_sum_is_ones(rng):
    x = rng.normal(size=(3, 2))
    np.testing.assert_allclose(finite_diff_gradient(np.sum, x), np.ones((3, 2)), atol=1e-9)


def test_finite_diff_of_square_sum():
    g = finite_diff_gradient(lambda v: np.sum(v ** 2), np.array([1.0, 2.0]), eps=1e-5)
    assert np.abs(g - [2.0, 4.0]).max() <= 1e-8


def test_finite_diff_of_constant_is_zero(rng):
    g = finite_diff_gradient(lambda v: 4.2, rng.normal(size=5))
    assert np.abs(g).max() <= 1e-12


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ValueError):
        finite_diff_gradient(np.sum, np.ones(2), eps=0.0)


# ---- adam -----------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params_and_decays_moments():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1)
    assert np.array_equal(new["w"], params["w"])
    primed = AdamState(3, {"w": np.array([0.5, 0.5])}, {"w": np.array([0.2, 0.2])})
    _, after = adam_step(params, {"w": np.zeros(2)}, primed, lr=0.1)
    np.testing.assert_allclose(after.m["w"], 0.9 * primed.m["w"])
    np.testing.assert_allclose(after.v["w"], 0.999 * primed.v["w"])


def test_adam_first_step_moves_by_lr():
    # m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    new, state = adam_step({"w": np.array(0.5)}, {"w": np.array(1.0)}, AdamState(), lr=0.01)
    assert state.step == 1
    assert abs((0.5 - new["w"]) - 0.01 / (1 + 1e-8)) < 1e-15


def test_adam_is_deterministic(rng):
    params = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=2)}
    grads_seq = [{k: rng.normal(size=v.shape) for k, v in params.items()} for _ in range(5)]

    def run():
        p, s = dict(params), AdamState()
        for g in grads_seq:
            p, s = adam_step(p, g, s, lr=1e-2)
        return p

    r1, r2 = run(), run()
    assert all(np.array_equal(r1[k], r2[k]) for k in params)


def test_adam_shape_mismatch():
    with pytest.raises(UsageError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=0.1)


# ---- layout -----------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)), min_size=0, max_size=30, unique=True))
def test_canonical_form_is_idempotent(coords):
    coords = np.array(coords, dtype=np.int64).reshape(-1, 3)
    feats = np.arange(len(coords), dtype=np.float64)[:, None]
    once = SparseVoxelTensor.from_entries(coords, feats, (4, 4, 4))
    twice = SparseVoxelTensor.from_entries(once.coords, once.features.data, (4, 4, 4))
    assert np.array_equal(once.coords, twice.coords)
    assert np.array_equal(once.features.data, twice.features.data)
    assert [c for c, _ in once.entries()] == sorted(map(tuple, coords.tolist()))


def test_layout_rejects_duplicates_and_out_of_bounds():
    with pytest.raises(ConfigError):
        VoxelLayout([[0, 0, 0], [0, 0, 0]], (2, 2, 2))
    with pytest.raises(ConfigError):
        VoxelLayout([[2, 0, 0]], (2, 2, 2))
