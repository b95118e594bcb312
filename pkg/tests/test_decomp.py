import numpy as np
import pytest

from tensorpatch.decomp import (
    CPModel,
    FitOptions,
    TuckerModel,
    _solve_normal_equations,
    cp_als,
    cp_reconstruct,
    default_rank_triple,
    hosvd,
    relative_error,
    truncated_svd_matrix,
    tucker_hooi,
    tucker_reconstruct,
)
from tensorpatch.tensor_ops import DenseTensor, khatri_rao, unfold

from naive import naive_cp_full, naive_tucker_full


def rank1_tensor(a, b, c):
    return DenseTensor(np.einsum("i,j,k->ijk", np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)))


def random_cp_tensor(shape, rank, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((shape[0], rank))
    b = rng.standard_normal((shape[1], rank))
    c = rng.standard_normal((shape[2], rank))
    return DenseTensor(np.einsum("ir,jr,kr->ijk", a, b, c))


def matrix_with_singular_values(svals, rows, cols, seed):
    """M = U diag(svals) V^T with seeded random orthonormal U, V."""
    rng = np.random.default_rng(seed)
    u = np.linalg.qr(rng.standard_normal((rows, rows)))[0]
    v = np.linalg.qr(rng.standard_normal((cols, cols)))[0]
    k = len(svals)
    return u[:, :k] @ np.diag(svals) @ v[:, :k].T


class TestFitOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            FitOptions(max_iters=0)
        with pytest.raises(ValueError):
            FitOptions(tol=0.0)
        with pytest.raises(ValueError):
            FitOptions(init="magic")
        with pytest.raises(ValueError):
            FitOptions(restarts=-1)

    def test_hosvd_based_alias(self):
        assert FitOptions(init="hosvd-based").init == "hosvd"


class TestCPAls:
    def test_rank1_exact_recovery(self):
        t = rank1_tensor([1, 2], [1, 1], [1, 0])
        model, report = cp_als(t, 1, FitOptions(seed=0))
        assert report.relative_error < 1e-10
        assert model.rank == 1

    def test_exact_rank_r_structure_is_recovered(self):
        t = random_cp_tensor((6, 5, 4), 3, seed=7)
        _, report = cp_als(t, 3, FitOptions(seed=7, restarts=3))
        assert report.relative_error < 1e-8

    def test_matrix_case_matches_eckart_young(self):
        # singular values 5, 3, 1: best rank-2 residual is 1/sqrt(35) of the norm
        m = matrix_with_singular_values([5.0, 3.0, 1.0], 6, 5, seed=2)
        t = DenseTensor(m.reshape(6, 5, 1))
        _, report = cp_als(t, 2, FitOptions(seed=0, restarts=3))
        assert report.relative_error == pytest.approx(1.0 / np.sqrt(35.0), abs=1e-6)

    def test_per_run_error_is_monotone(self):
        rng = np.random.default_rng(9)
        t = DenseTensor(rng.standard_normal((8, 7, 3)))
        _, report = cp_als(t, 3, FitOptions(seed=1, restarts=0, tol=1e-300, max_iters=40))
        hist = np.array(report.error_history)
        assert np.all(hist[1:] <= hist[:-1] + 1e-12)

    def test_best_of_restarts_error_non_increasing_in_rank(self):
        rng = np.random.default_rng(10)
        t = DenseTensor(rng.standard_normal((10, 8, 4)))
        errs = []
        for rank in range(1, 6):
            _, report = cp_als(t, rank, FitOptions(seed=3, restarts=3))
            errs.append(report.relative_error)
        for lo, hi in zip(errs[1:], errs[:-1]):
            assert lo <= hi + 1e-6

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(12)
        t = DenseTensor(rng.standard_normal((6, 6, 3)))
        opts = FitOptions(seed=42, restarts=2)
        m1, r1 = cp_als(t, 2, opts)
        m2, r2 = cp_als(t, 2, opts)
        assert np.array_equal(m1.weights, m2.weights)
        for f1, f2 in zip(m1.factors, m2.factors):
            assert np.array_equal(f1, f2)
        assert r1 == r2

    def test_weights_sorted_and_columns_unit_norm(self):
        t = random_cp_tensor((6, 5, 4), 3, seed=21)
        model, _ = cp_als(t, 3, FitOptions(seed=5, restarts=1))
        w = np.abs(model.weights)
        assert np.all(w[1:] <= w[:-1])
        for f in model.factors:
            assert np.allclose(np.linalg.norm(f, axis=0), 1.0, atol=1e-10)

    def test_two_mode_input_is_padded(self):
        m = np.arange(12, dtype=float).reshape(4, 3)
        model, report = cp_als(DenseTensor(m), 2, FitOptions(seed=0, restarts=2))
        assert model.shape == (4, 3, 1)
        assert report.relative_error < 1e-8  # exact rank is 2

    def test_rank_out_of_range(self):
        t = random_cp_tensor((3, 3, 2), 1, seed=1)
        with pytest.raises(ValueError, match="rank"):
            cp_als(t, 0)
        with pytest.raises(ValueError, match="rank"):
            cp_als(t, 7)  # min(9, 6, 6) = 6

    def test_zero_tensor_rejected(self):
        with pytest.raises(ValueError, match="all-zero"):
            cp_als(DenseTensor(np.zeros((2, 2, 2))), 1)

    def test_restart_chosen_is_reported(self):
        t = random_cp_tensor((5, 4, 3), 2, seed=3)
        _, report = cp_als(t, 2, FitOptions(seed=11, restarts=3))
        assert 0 <= report.restart_chosen <= 3
        assert report.iterations_run <= 200

    def test_singular_normal_equations_are_ridged(self):
        gram = np.array([[1.0, 1.0], [1.0, 1.0]])
        x, regularized = _solve_normal_equations(gram, np.array([[1.0], [1.0]]))
        assert regularized
        assert np.isfinite(x).all()

    def test_collapsed_rank_never_crashes(self):
        t = rank1_tensor([1, 2, 3], [1, 1, 1], [2, 1])
        _, report = cp_als(t, 4, FitOptions(seed=0, max_iters=30))
        assert np.isfinite(report.relative_error)


class TestCPReconstruct:
    def test_single_spike(self):
        e = lambda n: np.eye(n)[:, :1]
        model = CPModel(weights=np.array([1.0]), factors=(e(2), e(2), e(2)))
        t = cp_reconstruct(model)
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = 1.0
        assert np.array_equal(t.data, expected)

    def test_zero_weights_give_zero_tensor(self):
        rng = np.random.default_rng(4)
        factors = tuple(
            np.linalg.qr(rng.standard_normal((n, 2)))[0] for n in (3, 4, 2)
        )
        model = CPModel(weights=np.zeros(2), factors=factors)
        assert np.array_equal(cp_reconstruct(model).data, np.zeros((3, 4, 2)))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(5)
        factors = []
        for n in (4, 3, 2):
            f = rng.standard_normal((n, 3))
            factors.append(f / np.linalg.norm(f, axis=0))
        weights = np.array([2.0, 1.5, 0.5])
        model = CPModel(weights=weights, factors=tuple(factors))
        got = cp_reconstruct(model)
        want = naive_cp_full(weights, *factors)
        assert np.allclose(got.data, want, rtol=0, atol=1e-12)
        # unfolding formula agreement
        a, b, c = factors
        unf = (a * weights) @ khatri_rao(c, b).T
        assert np.allclose(unfold(got, 0), unf, rtol=0, atol=1e-12)


class TestHosvd:
    def test_full_rank_is_exact(self):
        rng = np.random.default_rng(6)
        t = DenseTensor(rng.standard_normal((4, 3, 2)))
        model = hosvd(t, t.shape)
        assert relative_error(t, tucker_reconstruct(model)) < 1e-10

    def test_superdiagonal_truncation(self):
        t = np.zeros((2, 2, 2))
        t[0, 0, 0] = 3.0
        t[1, 1, 1] = 1.0
        model = hosvd(DenseTensor(t), (1, 1, 1))
        assert abs(abs(model.core[0, 0, 0]) - 3.0) < 1e-12
        err = relative_error(DenseTensor(t), tucker_reconstruct(model))
        assert err == pytest.approx(1.0 / np.sqrt(10.0), abs=1e-6)

    def test_zero_tensor_gives_zero_core(self):
        model = hosvd(DenseTensor(np.zeros((3, 3, 2))), (2, 2, 1))
        assert np.array_equal(model.core.data, np.zeros((2, 2, 1)))

    def test_rank_exceeding_mode_size(self):
        t = DenseTensor(np.ones((2, 3, 2)))
        with pytest.raises(ValueError, match="out of range"):
            hosvd(t, (3, 1, 1))

    def test_factor_orthonormality(self):
        rng = np.random.default_rng(8)
        t = DenseTensor(rng.standard_normal((6, 5, 4)))
        model = hosvd(t, (3, 2, 2))
        for f in model.factors:
            assert np.max(np.abs(f.T @ f - np.eye(f.shape[1]))) < 1e-10


class TestTuckerHooi:
    def test_full_rank_is_exact(self):
        rng = np.random.default_rng(13)
        t = DenseTensor(rng.standard_normal((4, 4, 3)))
        _, report = tucker_hooi(t, t.shape, FitOptions(seed=0))
        assert report.relative_error < 1e-10

    def test_recovers_planted_tucker_structure(self):
        rng = np.random.default_rng(14)
        core = rng.standard_normal((2, 3, 2))
        a = np.linalg.qr(rng.standard_normal((8, 2)))[0]
        b = np.linalg.qr(rng.standard_normal((7, 3)))[0]
        c = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        t = DenseTensor(np.einsum("pqr,ip,jq,kr->ijk", core, a, b, c))
        _, report = tucker_hooi(t, (2, 3, 2), FitOptions(seed=0))
        assert report.relative_error < 1e-8

    def test_refines_hosvd(self):
        rng = np.random.default_rng(15)
        for trial in range(5):
            t = DenseTensor(rng.standard_normal((6, 5, 4)))
            ranks = (3, 2, 2)
            hos = hosvd(t, ranks)
            hos_err = relative_error(t, tucker_reconstruct(hos))
            _, report = tucker_hooi(t, ranks, FitOptions(seed=trial))
            assert report.relative_error <= hos_err + 1e-12

    def test_per_iteration_error_monotone_and_factors_orthonormal(self):
        rng = np.random.default_rng(16)
        t = DenseTensor(rng.standard_normal((6, 6, 3)))
        for iters in (1, 2, 4):
            model, report = tucker_hooi(
                t, (3, 3, 2), FitOptions(seed=2, tol=1e-300, max_iters=iters)
            )
            for f in model.factors:
                assert np.max(np.abs(f.T @ f - np.eye(f.shape[1]))) < 1e-10
        hist = np.array(report.error_history)
        assert np.all(hist[1:] <= hist[:-1] + 1e-12)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(17)
        t = DenseTensor(rng.standard_normal((5, 5, 3)))
        opts = FitOptions(seed=9, restarts=2, init="random")
        m1, r1 = tucker_hooi(t, (2, 2, 2), opts)
        m2, r2 = tucker_hooi(t, (2, 2, 2), opts)
        assert np.array_equal(m1.core.data, m2.core.data)
        for f1, f2 in zip(m1.factors, m2.factors):
            assert np.array_equal(f1, f2)
        assert r1 == r2


class TestTuckerReconstruct:
    def test_identity_factors_reproduce_core(self):
        rng = np.random.default_rng(18)
        core = DenseTensor(rng.standard_normal((3, 4, 2)))
        model = TuckerModel(core=core, factors=(np.eye(3), np.eye(4), np.eye(2)))
        assert tucker_reconstruct(model) == core

    def test_zero_core_gives_zero_tensor(self):
        model = TuckerModel(
            core=DenseTensor(np.zeros((2, 2, 1))),
            factors=(np.eye(4)[:, :2], np.eye(3)[:, :2], np.eye(2)[:, :1]),
        )
        assert np.array_equal(tucker_reconstruct(model).data, np.zeros((4, 3, 2)))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(19)
        core = rng.standard_normal((2, 2, 2))
        a = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        b = np.linalg.qr(rng.standard_normal((4, 2)))[0]
        c = np.linalg.qr(rng.standard_normal((3, 2)))[0]
        model = TuckerModel(core=DenseTensor(core), factors=(a, b, c))
        got = tucker_reconstruct(model)
        want = naive_tucker_full(core, a, b, c)
        assert np.allclose(got.data, want, rtol=0, atol=1e-12)


class TestTruncatedSvd:
    def test_full_rank_reproduces_input(self):
        rng = np.random.default_rng(20)
        m = rng.standard_normal((5, 4))
        assert np.allclose(truncated_svd_matrix(m, 4), m, atol=1e-10)

    def test_diagonal_case(self):
        m = np.diag([5.0, 3.0, 1.0])
        assert np.allclose(truncated_svd_matrix(m, 2), np.diag([5.0, 3.0, 0.0]), atol=1e-12)

    def test_residual_matches_gram_eigenvalue_oracle(self):
        rng = np.random.default_rng(22)
        m = rng.standard_normal((6, 4))
        approx = truncated_svd_matrix(m, 2)
        residual = np.linalg.norm(m - approx)
        # independent oracle: eigenvalues of M^T M are squared singular values
        evals = np.sort(np.linalg.eigvalsh(m.T @ m))[::-1]
        assert residual == pytest.approx(np.sqrt(evals[2] + evals[3]), rel=1e-10)

    def test_rank_out_of_range(self):
        with pytest.raises(ValueError, match="rank"):
            truncated_svd_matrix(np.ones((3, 3)), 0)
        with pytest.raises(ValueError, match="rank"):
            truncated_svd_matrix(np.ones((3, 3)), 4)


class TestRelativeError:
    def test_identical_tensors(self):
        t = DenseTensor(np.arange(1.0, 9.0).reshape(2, 2, 2))
        assert relative_error(t, t) == 0.0

    def test_zero_approximation_gives_one(self):
        t = DenseTensor(np.arange(1.0, 9.0).reshape(2, 2, 2))
        assert relative_error(t, DenseTensor(np.zeros((2, 2, 2)))) == 1.0

    def test_single_entry_deviation(self):
        flat = np.arange(1.0, 9.0)
        t = DenseTensor.from_flat(flat, (2, 2, 2))
        approx_flat = flat.copy()
        approx_flat[-1] = 0.0
        approx = DenseTensor.from_flat(approx_flat, (2, 2, 2))
        assert relative_error(t, approx) == pytest.approx(8.0 / np.sqrt(204.0), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            relative_error(DenseTensor(np.ones((2, 2))), DenseTensor(np.ones((2, 3))))

    def test_zero_original_rejected(self):
        z = DenseTensor(np.zeros((2, 2)))
        with pytest.raises(ValueError, match="all-zero"):
            relative_error(z, z)


def test_default_rank_triple_caps_depth_mode():
    assert default_rank_triple(8, (64, 64, 4)) == (8, 8, 4)
    assert default_rank_triple(2, (64, 64, 4)) == (2, 2, 2)
    with pytest.raises(ValueError):
        default_rank_triple(0, (4, 4, 4))


def test_cp_matrix_case_agrees_with_truncated_svd():
    # Eckart-Young agreement between the two routes, on a fresh random matrix
    rng = np.random.default_rng(23)
    m = rng.standard_normal((8, 6))
    t = DenseTensor(m.reshape(8, 6, 1))
    for rank in (1, 2, 3):
        _, report = cp_als(t, rank, FitOptions(seed=1, restarts=3))
        svd_resid = np.linalg.norm(m - truncated_svd_matrix(m, rank)) / np.linalg.norm(m)
        assert report.relative_error == pytest.approx(svd_resid, abs=1e-5)
