from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from snaplin.data import PcaBasis, SnapshotDataset, TimeGrid
from snaplin.encoder import init_params, predict_operator
from snaplin.errors import GeneNotFoundError, RegulatoryDbParseError
from snaplin.interactions import (
    ACTIVATION,
    REPRESSION,
    UNKNOWN,
    AggregatedWeights,
    RegulatoryDb,
    RegulatoryEdge,
    aggregate_weights,
    binary_scores,
    classify_edges,
    collapse_edges,
    export_operators,
    interaction_weights,
    load_regulatory_db,
    operator_columns,
    resolve_genes,
    sample_cells,
    source_activity,
    summarize_ensemble,
    top_source_genes,
)
from snaplin.linop import assemble

GENES = ("GATA1", "SPI1", "KLF1", "CEBPA")


def _basis(seed: int = 0) -> PcaBasis:
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((4, 2)))
    return PcaBasis(V=q, gene_names=GENES)


def _dataset(seed: int = 0, n: int = 30) -> SnapshotDataset:
    rng = np.random.default_rng(seed)
    return SnapshotDataset(
        X=rng.standard_normal((n, 4)),
        times=np.repeat([0.0, 1.0, 2.0], n // 3),
        grid=TimeGrid((0.0, 1.0, 2.0)),
        gene_names=GENES,
    )


def _write_db(path: Path, rows) -> Path:
    path.write_text("".join("\t".join(row) + "\n" for row in rows), encoding="utf-8")
    return path


def test_identity_basis_weights(constant_encoder) -> None:
    P = np.array([[1.0, 0.5], [0.0, 1.0]])
    params = constant_encoder(P, [-1.0, 0.5])
    A = assemble(predict_operator(params, np.zeros(2), 0.0))
    basis = PcaBasis(V=np.eye(2), gene_names=("a", "b"))
    x = np.array([2.0, -3.0])
    matrix = interaction_weights(params, basis, x, 0.0)
    assert matrix.genes == ("a", "b")
    np.testing.assert_allclose(matrix.weights, A * x[None, :], atol=1e-12)

    silent = interaction_weights(params, basis, np.array([2.0, 0.0]), 0.0)
    np.testing.assert_array_equal(silent.weights[:, 1], 0.0)


def test_subset_weights_match_dense_lift() -> None:
    params = init_params(depth=2, width=8, d_z=2, seed=1, out_scale=0.5)
    basis = _basis(1)
    x = np.random.default_rng(1).standard_normal(4)
    A = assemble(predict_operator(params, basis.V.T @ x, 0.7))
    dense = (basis.V @ A @ basis.V.T) * x[None, :]
    subset = interaction_weights(params, basis, x, 0.7, genes=["KLF1", "GATA1"])
    assert subset.genes == ("KLF1", "GATA1")
    np.testing.assert_allclose(subset.weights, dense[np.ix_([2, 0], [2, 0])], atol=1e-12)


def test_centered_basis_uses_shifted_factor(constant_encoder) -> None:
    params = constant_encoder(np.eye(2), [1.0, -1.0])
    mean = np.array([1.0, 2.0])
    basis = PcaBasis(V=np.eye(2), centered=True, mean=mean)
    matrix = interaction_weights(params, basis, np.array([1.0, 5.0]), 0.0)
    np.testing.assert_allclose(matrix.weights, np.diag([1.0, -1.0]) * [0.0, 3.0], atol=1e-12)


def test_unknown_gene_suggests_close_names() -> None:
    with pytest.raises(GeneNotFoundError) as excinfo:
        resolve_genes(GENES, ["GATA2"])
    assert "GATA1" in excinfo.value.suggestions
    assert "GATA2" in str(excinfo.value)


def test_sample_cells() -> None:
    np.testing.assert_array_equal(sample_cells(5, 10, seed=0), np.arange(5))
    picked = sample_cells(100, 10, seed=3)
    assert picked.size == 10 and np.all(np.diff(picked) > 0)
    np.testing.assert_array_equal(picked, sample_cells(100, 10, seed=3))
    with pytest.raises(ValueError):
        sample_cells(10, 0, seed=0)


def test_exhaustive_aggregation_equals_mean_of_cells() -> None:
    params = init_params(depth=2, width=8, d_z=2, seed=2, out_scale=0.5)
    basis = _basis(2)
    dataset = _dataset(2)
    aggregated = aggregate_weights(params, basis, dataset, n_cells=1000, chunk_size=7)
    per_cell = np.stack(
        [interaction_weights(params, basis, x, t).weights for x, t in zip(dataset.X, dataset.times)]
    )
    np.testing.assert_allclose(aggregated.mean, per_cell.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(aggregated.per_time[1.0], per_cell[dataset.times == 1.0].mean(axis=0), atol=1e-12)
    assert aggregated.counts == {0.0: 10, 1.0: 10, 2.0: 10}
    assert aggregated.n_cells == 30
    assert aggregated.weight("SPI1", "GATA1") == aggregated.mean[0, 1]


def test_aggregation_is_seeded_and_chunk_independent() -> None:
    params = init_params(depth=1, width=8, d_z=2, seed=3, out_scale=0.5)
    basis, dataset = _basis(3), _dataset(3, n=60)
    first = aggregate_weights(params, basis, dataset, n_cells=20, seed=5, chunk_size=4)
    second = aggregate_weights(params, basis, dataset, n_cells=20, seed=5, chunk_size=64)
    np.testing.assert_allclose(first.mean, second.mean, atol=1e-13)
    assert first.n_cells == 20


def test_source_activity_and_ranking() -> None:
    weights = np.array([[0.0, -3.0, 1.0], [0.5, 0.0, 1.0], [0.5, 1.0, 0.0]])
    np.testing.assert_allclose(source_activity(weights), [1.0, 4.0, 2.0])
    np.testing.assert_allclose(source_activity(weights, signed=True), [1.0, -2.0, 2.0])
    aggregated = AggregatedWeights(
        genes=("a", "b", "c"),
        mean=weights,
        per_time={0.0: weights, 1.0: np.diag([1.0, 1.0, 5.0])},
    )
    ranking = top_source_genes(aggregated, k=2)
    assert ranking.overall == [("b", 4.0), ("c", 2.0)]
    assert [gene for gene, _ in ranking.per_time[1.0]] == ["c", "a"]
    assert ranking.union() == ["b", "c", "a"]


def test_regulatory_db_parsing(tmp_path: Path) -> None:
    path = _write_db(
        tmp_path / "db.tsv",
        [
            ("GATA1", "KLF1", "Activation", "111;222"),
            ("GATA1", "SPI1", "Repression", "333"),
            ("SPI1", "CEBPA", "Unknown", ""),
        ],
    )
    db = load_regulatory_db(path)
    assert len(db) == 3
    assert len(db.classifiable()) == 2
    assert db.edges[0].references == ("111", "222")
    assert set(db.by_source()) == {"GATA1", "SPI1"}


def test_regulatory_db_skips_comments_and_normalizes_mode(tmp_path: Path) -> None:
    path = tmp_path / "db.tsv"
    path.write_text("# header\n\nA\tB\tactivation\t1\n", encoding="utf-8")
    assert load_regulatory_db(path).edges[0].mode == ACTIVATION


@pytest.mark.parametrize(
    "row,line",
    [
        (("A", "B", "Activation"), 1),
        (("A", "B", "Maybe", "1"), 1),
        (("", "B", "Activation", "1"), 1),
    ],
)
def test_regulatory_db_errors_carry_line(tmp_path: Path, row, line: int) -> None:
    path = _write_db(tmp_path / "db.tsv", [row])
    with pytest.raises(RegulatoryDbParseError) as excinfo:
        load_regulatory_db(path)
    assert excinfo.value.line == line


def test_collapse_majority_and_tie() -> None:
    edges = [
        RegulatoryEdge("A", "B", ACTIVATION, ("1",)),
        RegulatoryEdge("A", "B", ACTIVATION, ("2",)),
        RegulatoryEdge("A", "B", REPRESSION, ("1",)),
        RegulatoryEdge("A", "C", ACTIVATION),
        RegulatoryEdge("A", "C", REPRESSION),
    ]
    collapsed = {(edge.source, edge.target): edge for edge in collapse_edges(edges)}
    assert collapsed[("A", "B")].mode == ACTIVATION
    assert collapsed[("A", "B")].references == ("1", "2")
    assert collapsed[("A", "C")].mode == UNKNOWN


def test_binary_scores() -> None:
    assert binary_scores([ACTIVATION, REPRESSION], [ACTIVATION, REPRESSION]) == (1.0, 1.0, 1.0)
    precision, recall, f1 = binary_scores([ACTIVATION, ACTIVATION], [ACTIVATION, REPRESSION])
    assert (precision, recall) == (0.5, 1.0)
    assert f1 == pytest.approx(2 / 3)
    assert binary_scores([REPRESSION], [REPRESSION]) == (0.0, 0.0, 0.0)


def _fixture(n_targets: int, labels, weights):
    targets = [f"t{k}" for k in range(n_targets)]
    genes = ("S", *targets)
    mean = np.zeros((len(genes), len(genes)))
    mean[1:, 0] = weights
    aggregated = AggregatedWeights(genes=genes, mean=mean, n_cells=100, seed=4)
    db = RegulatoryDb([RegulatoryEdge("S", t, label) for t, label in zip(targets, labels)])
    return aggregated, db


def test_classification_of_perfectly_signed_weights() -> None:
    labels = [ACTIVATION, REPRESSION] * 6
    aggregated, db = _fixture(12, labels, [1.0 if lab == ACTIVATION else -1.0 for lab in labels])
    report = classify_edges(aggregated, db, min_edges=10)
    assert [result.gene for result in report.results] == ["S"]
    result = report.results[0]
    assert (result.edge_count, result.precision, result.recall, result.f1) == (12, 1.0, 1.0, 1.0)
    assert report.seeds == [4]

    scaled = AggregatedWeights(genes=aggregated.genes, mean=aggregated.mean * 37.5, n_cells=100)
    assert classify_edges(scaled, db, min_edges=10).results[0].f1 == 1.0


def test_sources_need_more_than_min_edges() -> None:
    labels = [ACTIVATION] * 10
    aggregated, db = _fixture(10, labels, np.ones(10))
    assert classify_edges(aggregated, db, min_edges=10).results == []
    assert classify_edges(aggregated, db, min_edges=9).results[0].edge_count == 10
    assert classify_edges(aggregated, db, selection=["S", "ghost"], min_edges=9).results[0].gene == "S"


def test_unknown_and_unmeasured_edges_do_not_count() -> None:
    aggregated, db = _fixture(3, [ACTIVATION] * 3, np.ones(3))
    db.edges.append(RegulatoryEdge("S", "t0x", ACTIVATION))
    db.edges.append(RegulatoryEdge("S", "t1", UNKNOWN))
    assert classify_edges(aggregated, db, min_edges=2).results[0].edge_count == 3


def test_random_signs_score_near_chance() -> None:
    """Mean F1 over 1000 resampled label/weight draws of 40 edges each."""
    rng = np.random.default_rng(6)
    scores = []
    for _ in range(1000):
        labels = [str(label) for label in rng.choice([ACTIVATION, REPRESSION], size=40)]
        aggregated, db = _fixture(40, labels, rng.standard_normal(40))
        scores.append(classify_edges(aggregated, db).results[0].f1)
    assert abs(float(np.mean(scores)) - 0.5) < 0.05


def test_zero_weight_is_predicted_unknown() -> None:
    labels = [ACTIVATION] * 6 + [REPRESSION] * 6
    weights = [1.0] * 5 + [0.0] + [-1.0] * 5 + [0.0]
    aggregated, db = _fixture(12, labels, weights)
    result = classify_edges(aggregated, db).results[0]
    predicted = {edge.target: edge.predicted for edge in result.edges}
    assert predicted["t5"] == UNKNOWN
    assert predicted["t11"] == UNKNOWN
    assert sum(mode == REPRESSION for mode in predicted.values()) == 5
    assert (result.precision, result.recall) == (1.0, pytest.approx(5 / 6))


def test_planted_operator_signs_are_recovered(constant_encoder) -> None:
    rng = np.random.default_rng(21)
    d = 12
    P = np.eye(d) + 0.2 * rng.standard_normal((d, d))
    params = constant_encoder(P, rng.uniform(-1.0, 0.5, size=d))
    A_star = assemble(predict_operator(params, np.zeros(d), 0.0))
    genes = tuple(f"g{j}" for j in range(d))
    n = 300
    dataset = SnapshotDataset(
        X=rng.uniform(0.5, 2.0, size=(n, d)),
        times=np.repeat([0.0, 1.0, 2.0], n // 3),
        grid=TimeGrid((0.0, 1.0, 2.0)),
        gene_names=genes,
    )
    basis = PcaBasis(V=np.eye(d), gene_names=genes)

    single = interaction_weights(params, basis, dataset.X[0], 0.0).weights
    np.testing.assert_array_equal(np.sign(single), np.sign(A_star))

    strength = np.abs(A_star) * dataset.X.mean(axis=0)[None, :]
    np.fill_diagonal(strength, 0.0)
    strong = np.argwhere(strength > np.percentile(strength[strength > 0], 75))
    db = RegulatoryDb(
        [
            RegulatoryEdge(genes[j], genes[i], ACTIVATION if A_star[i, j] > 0 else REPRESSION)
            for i, j in strong
        ]
    )
    aggregated = aggregate_weights(params, basis, dataset, n_cells=n, seed=0, chunk_size=64)
    report = classify_edges(aggregated, db, min_edges=0)
    edges = [edge for result in report.results for edge in result.edges]
    assert len(edges) == len(strong)
    agreement = np.mean([edge.predicted == edge.label for edge in edges])
    assert agreement >= 0.9


def test_report_files_and_ensemble_summary(tmp_path: Path) -> None:
    labels = [ACTIVATION, REPRESSION] * 6
    good, db = _fixture(12, labels, [1.0 if lab == ACTIVATION else -1.0 for lab in labels])
    bad, _ = _fixture(12, labels, np.ones(12))
    reports = [classify_edges(good, db), classify_edges(bad, db)]
    paths = reports[0].write(tmp_path)
    assert pd.read_csv(paths["csv"]).loc[0, "gene"] == "S"
    assert paths["json"].is_file()

    summary = summarize_ensemble(reports).set_index("gene")
    assert summary.loc["S", "n_models"] == 2
    assert summary.loc["S", "precision_mean"] == pytest.approx(0.75)
    assert summary.loc["S", "precision_std"] == pytest.approx(0.25)
    assert list(summarize_ensemble([]).columns) == ["gene", "n_models"]


def test_operator_export_columns(tmp_path: Path, constant_encoder) -> None:
    params = constant_encoder(np.eye(2), [0.5, -0.5])
    path = export_operators(
        params, _basis(4), _dataset(4), n_cells=9, path=tmp_path / "ops.csv", seed=1, markers=("KLF1", "SPI1")
    )
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["time", *operator_columns(2), "KLF1", "SPI1"]
    assert frame.shape == (9, 1 + 4 + 2)
    np.testing.assert_allclose(frame[operator_columns(2)].to_numpy(), [[0.5, 0.0, 0.0, -0.5]] * 9, atol=1e-12)
    with pytest.raises(GeneNotFoundError):
        export_operators(params, _basis(4), _dataset(4), 3, tmp_path / "x.csv", markers=("NOPE",))
