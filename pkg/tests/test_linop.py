from pathlib import Path

import numpy as np
import pytest

from snaplin.diffcore import Value, grad_check, ops
from snaplin.errors import SingularBasisError
from snaplin.linop import (
    EigenOperator,
    Propagator,
    assemble,
    assemble_many,
    assemble_values,
    evolve,
    evolve_many,
    factorization_oracle,
    matexp_taylor_oracle,
    read_operators_csv,
    write_operators_csv,
)

SHEAR = np.array([[1.0, 1.0], [0.0, 1.0]])


def _random_operator(rng: np.random.Generator, d: int) -> EigenOperator:
    while True:
        P = np.eye(d) + 0.3 * rng.standard_normal((d, d))
        if np.linalg.cond(P) < 20:
            return EigenOperator(P=P, lam=rng.standard_normal(d))


def test_assemble_identity_basis() -> None:
    A = assemble(EigenOperator(P=np.eye(2), lam=np.array([2.0, -1.0])))
    np.testing.assert_allclose(A, np.diag([2.0, -1.0]))


def test_assemble_shear_basis() -> None:
    A = assemble(EigenOperator(P=SHEAR, lam=np.array([1.0, -1.0])))
    np.testing.assert_allclose(A, [[1.0, -2.0], [0.0, -1.0]], atol=1e-15)


def test_zero_mask_pins_eigenvalue() -> None:
    op = EigenOperator(P=np.eye(2), lam=np.array([3.0, 5.0]), zero_mask=frozenset({1}))
    assert op.lam[1] == 0.0
    assert abs(np.linalg.det(assemble(op))) < 1e-10


def test_singular_basis_carries_det() -> None:
    op = EigenOperator(P=np.array([[1.0, 2.0], [0.5, 1.0]]), lam=np.ones(2))
    with pytest.raises(SingularBasisError) as excinfo:
        assemble(op)
    assert abs(excinfo.value.det) < 1e-12
    with pytest.raises(SingularBasisError):
        evolve(op, np.ones(2), 1.0)


def test_evolve_examples() -> None:
    z = np.array([1.0, 2.0])
    frozen = EigenOperator(P=SHEAR, lam=np.zeros(2))
    np.testing.assert_allclose(evolve(frozen, z, 5.0), z, atol=1e-15)

    doubling = EigenOperator(P=np.eye(2), lam=np.array([np.log(2.0), 0.0]))
    np.testing.assert_allclose(evolve(doubling, np.ones(2), 1.0), [2.0, 1.0], rtol=1e-15)

    sheared = EigenOperator(P=SHEAR, lam=np.array([1.0, -1.0]))
    expected = [-np.e + np.exp(-1.0), np.exp(-1.0)]
    np.testing.assert_allclose(evolve(sheared, np.array([0.0, 1.0]), 1.0), expected, rtol=1e-12)
    np.testing.assert_allclose(evolve(sheared, np.array([0.0, 1.0]), 1.0), [-2.35040, 0.36788], atol=1e-5)


def test_evolve_matches_taylor_oracle() -> None:
    rng = np.random.default_rng(0)
    for k in range(200):
        op = _random_operator(rng, 2 + k % 4)
        A = assemble(op)
        dt = min(1.0, 1.0 / np.linalg.norm(A, "fro"))
        z = rng.standard_normal(op.dim)
        oracle = matexp_taylor_oracle(A, dt, terms=30) @ z
        assert np.linalg.norm(evolve(op, z, dt) - oracle) / np.linalg.norm(z) < 1e-8


def test_semigroup_and_zero_horizon() -> None:
    rng = np.random.default_rng(1)
    for _ in range(50):
        op = _random_operator(rng, 3)
        z = rng.standard_normal(3)
        a, b = rng.uniform(0.0, 0.5, size=2)
        chained = evolve(op, evolve(op, z, a), b)
        direct = evolve(op, z, a + b)
        assert np.linalg.norm(chained - direct) <= 1e-9 * np.linalg.norm(direct)
        assert np.max(np.abs(evolve(op, z, 0.0) - z)) < 1e-12


def test_taylor_oracle_examples() -> None:
    np.testing.assert_array_equal(matexp_taylor_oracle(np.zeros((2, 2)), 1.0), np.eye(2))
    np.testing.assert_allclose(
        matexp_taylor_oracle(np.diag([1.0, -1.0]), 1.0), np.diag([np.e, np.exp(-1.0)]), atol=1e-12
    )
    np.testing.assert_array_equal(
        matexp_taylor_oracle(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0), [[1.0, 1.0], [0.0, 1.0]]
    )


def test_taylor_oracle_rejects_outside_validity_range() -> None:
    with pytest.raises(ValueError):
        matexp_taylor_oracle(np.eye(2), 1.0, terms=10)
    with pytest.raises(ValueError):
        matexp_taylor_oracle(5.0 * np.eye(2), 1.0)


def test_factorization_oracle_examples() -> None:
    M = np.array([[0.5, -1.0], [2.0, 0.1]])
    np.testing.assert_allclose(factorization_oracle(lambda z, t: M @ z, np.array([0.3, -0.7]), 0.0), M, atol=1e-8)

    def square_first(z: np.ndarray, t: float) -> np.ndarray:
        return np.array([z[0] ** 2, z[1]])

    A = factorization_oracle(square_first, np.array([2.0, 3.0]), 0.0)
    np.testing.assert_allclose(A, [[2.0, 0.0], [0.0, 1.0]], atol=1e-8)
    np.testing.assert_allclose(A @ np.array([2.0, 3.0]), [4.0, 3.0], atol=1e-8)

    at_origin = factorization_oracle(square_first, np.zeros(2), 0.0)
    np.testing.assert_array_equal(at_origin @ np.zeros(2), np.zeros(2))


def test_factorization_oracle_reproduces_random_smooth_fields() -> None:
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        W = rng.standard_normal((d, d))
        M = 0.5 * rng.standard_normal((d, d))

        def field(z: np.ndarray, t: float, W=W, M=M) -> np.ndarray:
            return np.tanh(W @ z) * (1.0 + 0.1 * t) + (M @ z) ** 2

        z = rng.standard_normal(d)
        z = z / max(1.0, np.linalg.norm(z))
        t = float(rng.uniform(0.0, 3.0))
        A = factorization_oracle(field, z, t)
        f = field(z, t)
        assert np.linalg.norm(A @ z - f) / max(np.linalg.norm(f), 1e-9) < 1e-4


def test_factorization_oracle_requires_enough_nodes() -> None:
    with pytest.raises(ValueError):
        factorization_oracle(lambda z, t: z, np.ones(2), 0.0, nodes=8)


def test_batched_helpers_match_single_operator_path() -> None:
    rng = np.random.default_rng(3)
    ops_ = [_random_operator(rng, 3) for _ in range(6)]
    P = np.stack([op.P for op in ops_])
    lam = np.stack([op.lam for op in ops_])
    z = rng.standard_normal((6, 3))
    np.testing.assert_allclose(assemble_many(P, lam), np.stack([assemble(op) for op in ops_]), atol=1e-12)
    np.testing.assert_allclose(
        evolve_many(P, lam, z, 0.7), np.stack([evolve(op, zi, 0.7) for op, zi in zip(ops_, z)]), atol=1e-12
    )


def test_propagator_matches_numpy_path() -> None:
    rng = np.random.default_rng(4)
    ops_ = [_random_operator(rng, 2) for _ in range(4)]
    P = np.stack([op.P for op in ops_])
    lam = np.stack([op.lam for op in ops_])
    z = rng.standard_normal((4, 2))
    flow = Propagator(Value(P), Value(lam), Value(z))
    np.testing.assert_allclose(flow.at(1.3).data, evolve_many(P, lam, z, 1.3), atol=1e-12)
    assert flow.at(0.0).data is z or np.array_equal(flow.at(0.0).data, z)
    A = assemble_many(P, lam)
    np.testing.assert_allclose(flow.velocity().data, np.einsum("bij,bj->bi", A, z), atol=1e-12)
    np.testing.assert_allclose(assemble_values(Value(P), Value(lam)).data, A, atol=1e-12)


def test_propagator_gradients() -> None:
    rng = np.random.default_rng(5)
    P = np.eye(2)[None] + 0.2 * rng.standard_normal((3, 2, 2))
    lam = rng.standard_normal((3, 2))
    z = rng.standard_normal((3, 2))

    def loss(P_: Value, lam_: Value, z_: Value) -> Value:
        flow = Propagator(P_, lam_, z_)
        return ops.add(ops.sum(ops.sq_norm(flow.at(0.8))), ops.sum(assemble_values(P_, lam_)))

    assert grad_check(loss, [P, lam, z], tol=1e-5).passed


def test_operators_csv_round_trip(tmp_path: Path) -> None:
    rng = np.random.default_rng(6)
    originals = [_random_operator(rng, 3) for _ in range(3)]
    originals.append(EigenOperator(P=np.eye(3), lam=np.array([1.0, 0.0, -2.0]), zero_mask=frozenset({1})))
    path = tmp_path / "ops.csv"
    assert write_operators_csv(path, originals) == 4
    restored = read_operators_csv(path)
    for before, after in zip(originals, restored):
        np.testing.assert_array_equal(before.P, after.P)
        np.testing.assert_array_equal(before.lam, after.lam)
    assert restored[-1].zero_mask == frozenset({1})
