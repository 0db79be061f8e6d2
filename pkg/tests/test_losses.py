import numpy as np
import pytest

from snaplin.config import LossConfig
from snaplin.data import PcaBasis
from snaplin.data.sampling import BatchSampler
from snaplin.diffcore import Value, grad_check
from snaplin.encoder import BoundEncoder, init_params
from snaplin.errors import GridError, ShapeMismatchError
from snaplin.losses import (
    BatchSpec,
    discount,
    draw_batch_spec,
    invertibility_loss,
    kinetic_loss,
    laplacian_kernel,
    marginal_matching_loss,
    mmd2,
    mmd2_streamed,
    pullback_mmd2,
    total_loss,
    usable_sources,
)
from snaplin.losses.objective import PushedBatch


def _triple_sum_mmd(xs: np.ndarray, ys: np.ndarray, sigma: float = 1.0) -> float:
    def k(a: np.ndarray, b: np.ndarray) -> float:
        return laplacian_kernel(a, b, sigma=sigma)

    n, m = len(xs), len(ys)
    k_xx = sum(k(a, b) for a in xs for b in xs) / (n * n)
    k_yy = sum(k(a, b) for a in ys for b in ys) / (m * m)
    k_xy = sum(k(a, b) for a in xs for b in ys) / (n * m)
    return k_xx + k_yy - 2.0 * k_xy


def test_kernel_examples() -> None:
    assert laplacian_kernel(np.zeros(2), np.zeros(2)) == pytest.approx(np.exp(-1e-8 / 2))
    assert laplacian_kernel(np.zeros(2), np.array([1.0, -1.0])) == pytest.approx(np.exp(-1.0))
    assert laplacian_kernel(np.zeros(2), np.array([1.0, -1.0]), sigma=2.0) == pytest.approx(np.exp(-0.5))
    with pytest.raises(ShapeMismatchError):
        laplacian_kernel(np.zeros(2), np.zeros(3))


def test_mmd_matches_triple_sum() -> None:
    rng = np.random.default_rng(0)
    for _ in range(5):
        xs = rng.standard_normal((6, 3))
        ys = rng.standard_normal((4, 3)) + 0.5
        value = float(mmd2(Value(xs), Value(ys), sigma=0.7).data)
        assert abs(value - _triple_sum_mmd(xs, ys, sigma=0.7)) < 1e-12


def test_mmd_of_identical_samples_is_zero() -> None:
    xs = np.random.default_rng(1).standard_normal((8, 2))
    assert abs(float(mmd2(Value(xs), Value(xs.copy())).data)) < 1e-15


def test_mmd_grows_with_separation() -> None:
    xs = np.random.default_rng(2).standard_normal((32, 2))
    near = float(mmd2(Value(xs), Value(xs + 0.1)).data)
    far = float(mmd2(Value(xs), Value(xs + 3.0)).data)
    assert 0.0 < near < far


def test_unbiased_mmd_drops_diagonals() -> None:
    rng = np.random.default_rng(3)
    xs, ys = rng.standard_normal((5, 2)), rng.standard_normal((6, 2))

    def gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.array([[laplacian_kernel(u, v) for v in b] for u in a])

    k_xx, k_yy, k_xy = gram(xs, xs), gram(ys, ys), gram(xs, ys)
    expected = (
        (k_xx.sum() - np.trace(k_xx)) / (5 * 4)
        + (k_yy.sum() - np.trace(k_yy)) / (6 * 5)
        - 2.0 * k_xy.mean()
    )
    assert float(mmd2(Value(xs), Value(ys), unbiased=True).data) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ShapeMismatchError):
        mmd2(Value(xs[:1]), Value(ys), unbiased=True)


def test_mmd_rejects_empty_or_mismatched_samples() -> None:
    with pytest.raises(ShapeMismatchError):
        mmd2(Value(np.zeros((0, 2))), Value(np.zeros((3, 2))))
    with pytest.raises(ShapeMismatchError):
        mmd2(Value(np.zeros((3, 2))), Value(np.zeros((3, 3))))


@pytest.mark.parametrize("n_threads", [1, 3])
def test_streamed_mmd_matches_direct(n_threads: int) -> None:
    rng = np.random.default_rng(4)
    xs, ys = rng.standard_normal((37, 3)), rng.standard_normal((29, 3)) * 1.5
    direct = float(mmd2(Value(xs), Value(ys)).data)
    streamed = mmd2_streamed(xs, ys, block_size=8, n_threads=n_threads)
    assert streamed == pytest.approx(direct, abs=1e-12)


def test_streamed_mmd_independent_of_thread_count() -> None:
    rng = np.random.default_rng(5)
    xs, ys = rng.standard_normal((50, 2)), rng.standard_normal((40, 2))
    assert mmd2_streamed(xs, ys, block_size=7, n_threads=1) == mmd2_streamed(xs, ys, block_size=7, n_threads=4)


def test_pullback_mmd_equals_latent_mmd() -> None:
    rng = np.random.default_rng(6)
    q, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    basis = PcaBasis(V=q)
    xs, ys = rng.standard_normal((10, 5)), rng.standard_normal((12, 5))
    latent = float(mmd2(Value(xs @ q), Value(ys @ q)).data)
    assert pullback_mmd2(basis, xs, ys) == pytest.approx(latent, abs=1e-14)


def test_discount_modes() -> None:
    absolute = LossConfig(gamma=0.5)
    lag = LossConfig(gamma=0.5, discount="lag")
    assert discount(absolute, 1.0, 3.0) == pytest.approx(0.125)
    assert discount(lag, 1.0, 3.0) == pytest.approx(0.25)
    assert discount(LossConfig(gamma=0.0), 0.0, 0.0) == 1.0
    assert discount(LossConfig(gamma=0.0), 0.0, 1.0) == 0.0


def test_usable_sources() -> None:
    assert usable_sources([2.0, 0.0, 1.0]) == (0.0, 1.0, 2.0)
    assert usable_sources([0.0, 1.0], include_self_term=False) == (0.0,)
    with pytest.raises(GridError):
        usable_sources([0.0])


def test_draw_batch_spec_respects_sources_per_step() -> None:
    rng = np.random.default_rng(7)
    marginals = {t: rng.standard_normal((20, 2)) for t in (0.0, 1.0, 2.0, 3.0)}
    spec = draw_batch_spec(BatchSampler(marginals, np.random.default_rng(0)), 5, LossConfig(sources_per_step=2))
    assert len(spec.source_times) == 2
    assert set(spec.sources) == set(spec.source_times)
    assert set(spec.targets) == {0.0, 1.0, 2.0, 3.0}
    assert all(batch.shape == (5, 2) for batch in spec.targets.values())

    again = draw_batch_spec(BatchSampler(marginals, np.random.default_rng(0)), 5, LossConfig(sources_per_step=2))
    assert again.source_times == spec.source_times
    np.testing.assert_array_equal(again.targets[3.0], spec.targets[3.0])


def _two_time_spec(seed: int = 8, batch: int = 4) -> BatchSpec:
    rng = np.random.default_rng(seed)
    sources = {0.0: rng.standard_normal((batch, 2)), 1.0: rng.standard_normal((batch, 2)) + 0.5}
    targets = {0.0: rng.standard_normal((batch, 2)), 1.0: rng.standard_normal((batch, 2)) + 0.5}
    return BatchSpec(times=(0.0, 1.0), sources=sources, targets=targets, source_times=(0.0, 1.0))


def test_matching_loss_with_identity_flow_is_plain_mmd(constant_encoder) -> None:
    spec = _two_time_spec()
    encoder = BoundEncoder(constant_encoder(np.eye(2), np.zeros(2)), requires_grad=False)
    cfg = LossConfig(gamma=0.5, lambda_kin=0.0, lambda_inv=0.0)
    loss, pushed, bases = marginal_matching_loss(encoder, spec, cfg)

    def latent(a: np.ndarray, b: np.ndarray) -> float:
        return float(mmd2(Value(a), Value(b)).data)

    from_zero = latent(spec.sources[0.0], spec.targets[0.0]) + 0.5 * latent(spec.sources[0.0], spec.targets[1.0])
    from_one = 0.5 * latent(spec.sources[1.0], spec.targets[1.0])
    assert float(loss.data) == pytest.approx((from_zero + from_one) / 2, abs=1e-12)
    assert [batch.t for batch in pushed] == [0.0, 1.0, 1.0]
    assert len(bases) == 2


def test_matching_loss_skips_zero_weight_targets(constant_encoder) -> None:
    spec = _two_time_spec()
    encoder = BoundEncoder(constant_encoder(np.eye(2), np.zeros(2)), requires_grad=False)
    _, pushed, _ = marginal_matching_loss(encoder, spec, LossConfig(gamma=0.0, discount="lag"))
    assert [batch.t for batch in pushed] == [0.0, 1.0]


def test_kinetic_loss_of_linear_field(constant_encoder) -> None:
    encoder = BoundEncoder(constant_encoder(np.eye(2), [-1.0, 2.0]), requires_grad=False)
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    value = float(kinetic_loss(encoder, [PushedBatch(z=Value(z), t=0.0)]).data)
    assert value == pytest.approx((1.0 + 4.0 + 5.0) / 3)
    assert float(kinetic_loss(encoder, []).data) == 0.0


def test_invertibility_loss_examples() -> None:
    identity = Value(np.stack([np.eye(2), 2.0 * np.eye(2)]))
    assert float(invertibility_loss([identity], eps_inv=0.0).data) == pytest.approx((1.0 + 0.25) / 2)
    flipped = Value(np.array([[[0.0, 1.0], [1.0, 0.0]]]))
    assert float(invertibility_loss([flipped], eps_inv=0.0).data) == pytest.approx(1.0)
    assert float(invertibility_loss([flipped], eps_inv=0.0, signed=True).data) == pytest.approx(-1.0)
    assert float(invertibility_loss([]).data) == 0.0


def test_total_loss_combines_weighted_terms() -> None:
    spec = _two_time_spec()
    params = init_params(depth=1, width=4, d_z=2, seed=9, out_scale=0.3)
    cfg = LossConfig(gamma=0.5, lambda_kin=0.2, lambda_inv=0.7)
    breakdown = total_loss(BoundEncoder(params, requires_grad=False), spec, cfg)
    parts = breakdown.components()
    assert parts["total"] == pytest.approx(parts["mmd"] + 0.2 * parts["kinetic"] + 0.7 * parts["invertibility"])
    assert breakdown.det_P.shape == (8,)
    assert set(breakdown.det_stats()) == {"min_abs", "max_abs", "mean"}

    plain = LossConfig(gamma=0.5, lambda_kin=0.0, lambda_inv=0.0)
    bare = total_loss(BoundEncoder(params, requires_grad=False), spec, plain)
    assert bare.components()["kinetic"] == 0.0
    assert bare.components()["total"] == pytest.approx(parts["mmd"])


def test_total_loss_gradient_matches_central_differences() -> None:
    spec = _two_time_spec(seed=10)
    params = init_params(depth=1, width=4, d_z=2, seed=10, out_scale=0.3)
    cfg = LossConfig(gamma=0.5, lambda_kin=0.1, lambda_inv=1.0)
    encoder = BoundEncoder(params, requires_grad=False)

    def objective(*leaves: Value) -> Value:
        encoder.leaves = list(leaves)
        return total_loss(encoder, spec, cfg).total

    report = grad_check(objective, params.arrays(), h=1e-6, tol=1e-4)
    assert report.passed, report.max_rel_error


def _three_time_spec(seed: int = 11, batch: int = 5) -> BatchSpec:
    rng = np.random.default_rng(seed)
    times = (0.0, 1.0, 2.0)
    sources = {t: rng.standard_normal((batch, 2)) + t for t in times}
    targets = {t: rng.standard_normal((batch, 2)) + t for t in times}
    return BatchSpec(times=times, sources=sources, targets=targets, source_times=times)


def test_relinearization_is_exact_for_a_constant_field(constant_encoder) -> None:
    spec = _three_time_spec()
    encoder = BoundEncoder(constant_encoder(np.eye(2), [-0.5, 0.3]), requires_grad=False)
    single, _, single_bases = marginal_matching_loss(encoder, spec, LossConfig(gamma=0.5))
    stepped, _, stepped_bases = marginal_matching_loss(encoder, spec, LossConfig(gamma=0.5, relinearize_every=1))
    assert float(stepped.data) == pytest.approx(float(single.data), abs=1e-10)
    assert len(single_bases) == 3
    # Only source 0 has a target after its first hop.
    assert len(stepped_bases) == 4


def test_relinearization_changes_loss_of_state_dependent_field() -> None:
    spec = _three_time_spec()
    params = init_params(depth=2, width=8, d_z=2, seed=12, out_scale=0.5)
    encoder = BoundEncoder(params, requires_grad=False)
    single = total_loss(encoder, spec, LossConfig(gamma=0.5)).components()
    stepped = total_loss(encoder, spec, LossConfig(gamma=0.5, relinearize_every=1)).components()
    assert abs(stepped["mmd"] - single["mmd"]) > 1e-8


def test_relinearized_loss_gradient_matches_central_differences() -> None:
    spec = _three_time_spec(seed=13, batch=3)
    params = init_params(depth=1, width=4, d_z=2, seed=13, out_scale=0.3)
    cfg = LossConfig(gamma=0.5, lambda_kin=0.1, lambda_inv=1.0, relinearize_every=1)
    encoder = BoundEncoder(params, requires_grad=False)

    def objective(*leaves: Value) -> Value:
        encoder.leaves = list(leaves)
        return total_loss(encoder, spec, cfg).total

    report = grad_check(objective, params.arrays(), h=1e-6, tol=1e-4)
    assert report.passed, report.max_rel_error
