"""End-to-end checks on synthetic fixtures; run with ``pytest -m slow``."""

import numpy as np
import pytest

from snaplin.config import EncoderConfig, EvalConfig, LossConfig, TrainConfig
from snaplin.data import (
    fit_pca,
    gaussian_sampler,
    inflate_dataset,
    project,
    synth_linear_snapshots,
)
from snaplin.encoder import predict_many
from snaplin.evaluation import (
    METHOD_MODEL,
    METHOD_OT_INTERPOLATE,
    METHOD_PERSISTENCE,
    evaluate_heldout,
    evaluate_protocol,
    score_baselines,
)
from snaplin.linop import assemble_many
from snaplin.training import Checkpoint, train_amortized, train_single

pytestmark = pytest.mark.slow

# Real eigenvalues (-0.2, -0.7) with mixed-sign entries.
A_STAR = np.array([[-0.5, 0.3], [0.2, -0.4]])
# Eigenvalues (0, -1).
A_SINGULAR = np.array([[-0.5, 0.5], [0.5, -0.5]])


def _linear(A: np.ndarray, seed: int, n: int = 2000):
    sampler = gaussian_sampler([1.0, 0.5], 0.09 * np.eye(2))
    dataset, _ = synth_linear_snapshots(A, sampler, (0.0, 1.0, 2.0), n, seed=seed)
    return dataset


def _config(**overrides) -> TrainConfig:
    base = dict(
        lr=5e-3,
        batch_per_time=200,
        max_steps=1500,
        val_every=25,
        patience=20,
        max_minutes=5.0,
        heldout_time=1.0,
        seed=0,
        encoder=EncoderConfig(depth=2, width=32),
    )
    base.update(overrides)
    return TrainConfig(**base)


def _scores(checkpoint: Checkpoint, dataset) -> dict:
    report = evaluate_protocol({1.0: checkpoint}, dataset, EvalConfig())
    return {entry.method: entry.score for entry in report.entries}


def test_linear_recovery() -> None:
    dataset = _linear(A_STAR, seed=0)
    basis = fit_pca(dataset.X, d_z=2)
    checkpoint = train_single(dataset, basis, _config())

    scores = _scores(checkpoint, dataset)
    assert scores[METHOD_MODEL] < scores[METHOD_PERSISTENCE]
    assert scores[METHOD_MODEL] <= 1.2 * scores[METHOD_OT_INTERPOLATE]

    P, lam = predict_many(checkpoint.params, project(basis, dataset.X), dataset.times)
    A_bar = basis.V @ assemble_many(P, lam).mean(axis=0) @ basis.V.T
    assert np.linalg.norm(A_bar - A_STAR) / np.linalg.norm(A_STAR) < 0.3


def test_zero_eigenvalue_mask() -> None:
    dataset = _linear(A_SINGULAR, seed=1)
    basis = fit_pca(dataset.X, d_z=2)
    masked = train_single(dataset, basis, _config(encoder=EncoderConfig(depth=2, width=32, zero_mask=(0,))))
    free = train_single(dataset, basis, _config())

    P, lam = predict_many(masked.params, project(basis, dataset.X), dataset.times)
    assert np.max(np.abs(np.linalg.det(assemble_many(P, lam)))) < 1e-10

    masked_scores, free_scores = _scores(masked, dataset), _scores(free, dataset)
    assert masked_scores[METHOD_MODEL] < masked_scores[METHOD_PERSISTENCE]
    assert masked_scores[METHOD_MODEL] < 1.05 * free_scores[METHOD_MODEL]


def test_amortized_matches_separate_models() -> None:
    datasets = [_linear(A_STAR, seed=2), _linear(A_STAR.T - 0.1 * np.eye(2), seed=3)]
    bases = [fit_pca(ds.X, d_z=2) for ds in datasets]
    amortized = train_amortized(datasets, bases, _config(max_steps=3000), ["first", "second"])
    cfg = EvalConfig()
    for k, (dataset, basis) in enumerate(zip(datasets, bases)):
        separate = train_single(dataset, basis, _config())
        joint = evaluate_heldout(amortized, dataset, 1.0, cfg, dataset_index=k).score
        alone = evaluate_heldout(separate, dataset, 1.0, cfg).score
        assert joint <= 1.25 * alone


def test_inflated_training_and_streamed_evaluation() -> None:
    dataset = _linear(A_STAR, seed=4, n=667)
    basis = fit_pca(dataset.X, d_z=2)
    inflated = inflate_dataset(dataset, basis, target_n=250_000, noise_sd=0.1, seed=5)
    assert inflated.n_samples == 250_000

    checkpoint = train_single(inflated, basis, _config(max_steps=400))
    cfg = EvalConfig(mode="mmd", mmd_batch_size=2000)
    model = evaluate_heldout(checkpoint, inflated, 1.0, cfg, LossConfig()).score
    baselines = score_baselines(inflated, 1.0, basis, cfg, LossConfig(), methods=[METHOD_PERSISTENCE])
    assert model < baselines[0].score


def test_seeded_training_is_bitwise_reproducible() -> None:
    dataset = _linear(A_STAR, seed=6, n=200)
    basis = fit_pca(dataset.X, d_z=2)
    cfg = _config(max_steps=100)
    first, second = train_single(dataset, basis, cfg), train_single(dataset, basis, cfg)
    assert first.fingerprint() == second.fingerprint()
    assert _scores(first, dataset) == _scores(second, dataset)
