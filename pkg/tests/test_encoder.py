import numpy as np
import pytest

from snaplin.data import PcaBasis
from snaplin.diffcore import Value, backward, grad_check, ops
from snaplin.encoder import (
    BoundEncoder,
    DenseLayer,
    EncoderParams,
    init_params,
    params_from_dict,
    params_to_dict,
    predict_many,
    predict_operator,
    push_forward,
    push_latent,
    rollout,
)
from snaplin.errors import CheckpointFormatError, DimensionMismatchError
from snaplin.linop import Propagator, assemble, assemble_many, evolve


def test_init_is_deterministic_per_seed() -> None:
    first = init_params(depth=2, width=12, d_z=2, seed=3)
    second = init_params(depth=2, width=12, d_z=2, seed=3)
    other = init_params(depth=2, width=12, d_z=2, seed=4)
    for a, b in zip(first.arrays(), second.arrays()):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(first.arrays()[0], other.arrays()[0])


def test_default_architecture_shape() -> None:
    params = init_params(depth=4, width=96, d_z=5)
    assert params.input_width == 6
    assert params.output_width == 30
    assert params.depth == 4
    assert params.layers[0].W.shape == (6, 96)
    pinned = init_params(depth=4, width=96, d_z=5, zero_mask=(0,))
    assert pinned.output_width == 29


def test_init_rejects_bad_shapes() -> None:
    with pytest.raises(ValueError):
        init_params(depth=0, width=96, d_z=5)
    with pytest.raises(ValueError):
        init_params(depth=4, width=20, d_z=5)


def test_init_predictions_start_near_zero_operator() -> None:
    params = init_params(depth=4, width=96, d_z=5, seed=0)
    rng = np.random.default_rng(0)
    z = rng.uniform(-1.0, 1.0, size=(100, 5))
    t = rng.uniform(0.0, 4.0, size=100)
    P, lam = predict_many(params, z, t)
    assert np.max(np.abs(lam)) < 0.1
    assert np.max(np.abs(P - np.eye(5)[None])) < 0.1


def test_zero_weights_give_zero_operator(constant_encoder) -> None:
    params = constant_encoder(np.eye(3), np.zeros(3))
    op = predict_operator(params, np.array([0.5, -1.0, 2.0]), 1.0)
    np.testing.assert_array_equal(op.P, np.eye(3))
    np.testing.assert_array_equal(assemble(op), np.zeros((3, 3)))


def test_predict_operator_is_deterministic() -> None:
    params = init_params(depth=2, width=12, d_z=2, seed=1)
    z = np.array([0.3, -0.4])
    first, second = predict_operator(params, z, 2.0), predict_operator(params, z, 2.0)
    np.testing.assert_array_equal(first.P, second.P)
    np.testing.assert_array_equal(first.lam, second.lam)


def test_zero_mask_pins_eigenvalue_for_all_inputs() -> None:
    params = init_params(depth=2, width=24, d_z=3, seed=2, zero_mask=(0,), out_scale=0.1)
    rng = np.random.default_rng(2)
    z = rng.standard_normal((1000, 3))
    P, lam = predict_many(params, z, rng.uniform(0.0, 4.0, size=1000))
    assert np.all(lam[:, 0] == 0.0)
    dets = np.linalg.det(assemble_many(P, lam))
    assert np.max(np.abs(dets)) < 1e-10


def test_push_forward_examples(constant_encoder) -> None:
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    basis = PcaBasis(V=q)
    x = rng.standard_normal(4)
    frozen = constant_encoder(np.eye(2), np.zeros(2))
    np.testing.assert_allclose(push_forward(frozen, basis, x, 0.0, 3.0), q @ q.T @ x, atol=1e-12)

    moving = init_params(depth=2, width=12, d_z=2, seed=3, out_scale=1.0)
    np.testing.assert_allclose(push_forward(moving, basis, x, 1.0, 0.0), q @ q.T @ x, atol=1e-12)

    doubling = constant_encoder(np.eye(2), [np.log(2.0), 0.0])
    pushed = push_forward(doubling, PcaBasis(V=np.eye(2)), np.ones(2), 0.0, 1.0)
    np.testing.assert_allclose(pushed, [2.0, 1.0], rtol=1e-12)


def test_push_latent_matches_single_operator_evolution() -> None:
    params = init_params(depth=2, width=12, d_z=2, seed=4, out_scale=0.5)
    rng = np.random.default_rng(4)
    z = rng.standard_normal((7, 2))
    pushed = push_latent(params, z, 1.0, 0.6, chunk=3)
    expected = np.stack([evolve(predict_operator(params, zi, 1.0), zi, 0.6) for zi in z])
    np.testing.assert_allclose(pushed, expected, atol=1e-12)


def test_rollout_single_pass_and_semigroup(constant_encoder) -> None:
    params = constant_encoder(np.array([[1.0, 0.3], [0.0, 1.0]]), [-0.5, 0.2])
    z = np.array([0.4, -1.1])
    np.testing.assert_array_equal(rollout(params, z, 1.0, [1.0])[0], z)
    states = rollout(params, z, 0.0, [1.0, 2.0])
    op = predict_operator(params, z, 0.0)
    np.testing.assert_allclose(states[1], evolve(op, states[0], 1.0), rtol=1e-12)


def test_rollout_relinearization_agrees_for_constant_field(constant_encoder) -> None:
    params = constant_encoder(np.array([[1.0, 0.5], [0.2, 1.0]]), [-0.3, 0.1])
    z = np.array([[0.4, -1.1], [1.0, 0.5]])
    targets = [0.5, 1.0, 2.0, 3.5]
    single = rollout(params, z, 0.0, targets)
    relinearized = rollout(params, z, 0.0, targets, relinearize_every=1)
    np.testing.assert_allclose(relinearized, single, atol=1e-8)


def test_rollout_rejects_past_targets() -> None:
    params = init_params(depth=1, width=6, d_z=2)
    with pytest.raises(ValueError):
        rollout(params, np.zeros(2), 2.0, [1.0])


def test_composite_gradient_wrt_latent_inputs() -> None:
    params = init_params(depth=2, width=8, d_z=2, seed=5, out_scale=0.3)
    encoder = BoundEncoder(params, requires_grad=False)
    rng = np.random.default_rng(5)

    def loss(z: Value) -> Value:
        P, lam = encoder(z, 1.5)
        return ops.mean(ops.sq_norm(Propagator(P, lam, z).at(0.7)))

    for _ in range(10):
        report = grad_check(loss, [rng.standard_normal((3, 2))], tol=1e-4)
        assert report.passed, report.max_rel_error


def test_parameter_gradients_match_finite_differences() -> None:
    params = init_params(depth=2, width=8, d_z=2, seed=6, out_scale=0.3)
    rng = np.random.default_rng(6)
    z = rng.standard_normal((4, 2))

    def value_of(p: EncoderParams) -> float:
        P, lam = BoundEncoder(p, requires_grad=False)(Value(z), 0.5)
        return float(ops.mean(ops.sq_norm(Propagator(P, lam, Value(z)).at(1.0))).data)

    encoder = BoundEncoder(params)
    P, lam = encoder(Value(z), 0.5)
    backward(ops.mean(ops.sq_norm(Propagator(P, lam, Value(z)).at(1.0))))
    grads = encoder.grads()
    h = 1e-6
    for index in range(len(grads)):
        for position in list(np.ndindex(grads[index].shape))[:5]:
            arrays = [a.copy() for a in params.arrays()]
            arrays[index][position] += h
            upper = value_of(params.with_arrays(arrays))
            arrays[index][position] -= 2 * h
            lower = value_of(params.with_arrays(arrays))
            numeric = (upper - lower) / (2 * h)
            assert abs(grads[index][position] - numeric) / max(abs(numeric), 1.0) < 1e-4


def test_one_hot_permutation_invariance() -> None:
    params = init_params(depth=2, width=12, d_z=2, n_datasets=2, seed=7, out_scale=1.0)
    first = params.layers[0]
    W = first.W.copy()
    W[[3, 4]] = W[[4, 3]]
    swapped = EncoderParams(
        layers=(DenseLayer(W=W, b=first.b), *params.layers[1:]),
        d_z=2,
        n_datasets=2,
    )
    z = np.random.default_rng(7).standard_normal((5, 2))
    for idx in (0, 1):
        P_a, lam_a = predict_many(params, z, 1.0, idx)
        P_b, lam_b = predict_many(swapped, z, 1.0, 1 - idx)
        np.testing.assert_array_equal(P_a, P_b)
        np.testing.assert_array_equal(lam_a, lam_b)


def test_dataset_index_validation() -> None:
    conditioned = init_params(depth=1, width=6, d_z=2, n_datasets=2)
    with pytest.raises(DimensionMismatchError):
        predict_many(conditioned, np.zeros((1, 2)), 0.0)
    with pytest.raises(DimensionMismatchError):
        predict_many(conditioned, np.zeros((1, 2)), 0.0, 2)
    plain = init_params(depth=1, width=6, d_z=2)
    with pytest.raises(DimensionMismatchError):
        predict_many(plain, np.zeros((1, 2)), 0.0, 1)


def test_params_dict_round_trip_and_validation() -> None:
    params = init_params(depth=2, width=8, d_z=2, n_datasets=1, zero_mask=(1,), time_scale=0.5)
    restored = params_from_dict(params_to_dict(params))
    assert restored.zero_mask == (1,)
    assert restored.time_scale == 0.5
    for a, b in zip(params.arrays(), restored.arrays()):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(CheckpointFormatError):
        params_from_dict({"layers": []}, "bad.json")
