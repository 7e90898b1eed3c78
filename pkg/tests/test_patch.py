import numpy as np
import pytest

from mrirecon.errors import ConfigurationError, InvariantError
from mrirecon.model import KSpaceData, SamplingMask, SystemOperator
from mrirecon.patch import (Dictionary, SparseCodes, TransformModel, analysis_alternate,
                            analysis_objective, canonical_phase, dct_matrix, dct_transform, dlmri,
                            dlmri_objective, overcomplete_dct, procrustes, sparse_code_analysis,
                            sparse_code_synthesis, tlmri, update_atoms)
from mrirecon.phantom import make_mask, make_phantom, MaskSpec
from mrirecon.regularizers import PatchConfig, PatchOperator, soft_threshold

from oracles import lasso_cd, lasso_cost, planted_patch_image, random_unitary


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def undersampled_problem(n=16, snr_seed=0):
    x = make_phantom("shepp_logan", (n, n))
    mask = make_mask(MaskSpec("variable_density_lines", 0.5, seed=snr_seed), (n, n))
    op = SystemOperator.single_coil(mask)
    rng = np.random.default_rng(snr_seed)
    clean = op.forward(x).samples
    y = KSpaceData(clean + 0.05 * crandn(rng, *clean.shape), mask)
    return op, y, x


# --- transforms and dictionaries -------------------------------------------

def test_dct_matrix_is_orthonormal_dct2():
    C = dct_matrix(4)
    np.testing.assert_allclose(C @ C.T, np.eye(4), atol=1e-14)
    np.testing.assert_allclose(C[0], 0.5)
    k, n = 1, np.arange(4)
    np.testing.assert_allclose(C[1], np.sqrt(0.5) * np.cos(np.pi * (2 * n + 1) * k / 8), atol=1e-14)


def test_overcomplete_dct():
    D = overcomplete_dct((4, 4), 64)
    assert D.shape == (16, 64)
    np.testing.assert_allclose(np.linalg.norm(D.atoms, axis=0), 1, atol=1e-12)
    B = overcomplete_dct((4, 4), 16)
    np.testing.assert_allclose(B.atoms.conj().T @ B.atoms, np.eye(16), atol=1e-12)
    with pytest.raises(ConfigurationError):
        overcomplete_dct((4, 4), 20)
    with pytest.raises(ConfigurationError):
        overcomplete_dct((4, 4), 9)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        TransformModel(np.ones((2, 2)))
    with pytest.raises(ConfigurationError):
        TransformModel(np.eye(3)[:2])
    with pytest.raises(ConfigurationError):
        Dictionary(np.ones((2, 3)))
    assert SparseCodes(np.array([[0, 1], [2, 0]])).density == 0.5


# --- sparse coding ----------------------------------------------------------

def test_synthesis_coding_orthonormal_is_soft_threshold():
    rng = np.random.default_rng(0)
    Q = random_unitary(16, rng)
    X = crandn(rng, 16, 30)
    Z = sparse_code_synthesis(Dictionary(Q), X, 0.8, tol=1e-13).z
    np.testing.assert_allclose(Z, soft_threshold(Q.conj().T @ X, 0.8), atol=1e-12)


def test_synthesis_coding_matches_coordinate_descent():
    rng = np.random.default_rng(1)
    A = crandn(rng, 4, 8)
    D = Dictionary(A / np.linalg.norm(A, axis=0))
    X = crandn(rng, 4, 5)
    alpha = 0.3
    Z = sparse_code_synthesis(D, X, alpha, inner_iters=20000, tol=1e-12).z
    for p in range(5):
        zr = lasso_cd(D.atoms, X[:, p], alpha)
        ref = lasso_cost(D.atoms, X[:, p], zr, alpha)
        assert lasso_cost(D.atoms, X[:, p], Z[:, p], alpha) == pytest.approx(ref, rel=1e-9)


def test_synthesis_coding_is_columnwise():
    rng = np.random.default_rng(2)
    D = overcomplete_dct((2, 2), 9)
    X = crandn(rng, 4, 6)
    Zall = sparse_code_synthesis(D, X, 0.2, tol=1e-12).z
    Zone = sparse_code_synthesis(D, X[:, 3], 0.2, tol=1e-12).z
    np.testing.assert_allclose(Zall[:, 3], Zone[:, 0], atol=1e-10)


def test_analysis_coding_is_exact():
    rng = np.random.default_rng(3)
    W = TransformModel(random_unitary(9, rng))
    X = crandn(rng, 9, 20)
    alpha = 0.5
    Z = sparse_code_analysis(W, X, alpha).z
    f = lambda Z: 0.5 * np.linalg.norm(W.omega @ X - Z) ** 2 + alpha * np.abs(Z).sum()  # noqa: E731
    base = f(Z)
    for _ in range(50):
        assert f(Z + 1e-3 * crandn(rng, *Z.shape)) >= base


# --- Procrustes -------------------------------------------------------------

def test_procrustes_recovers_planted_unitary():
    rng = np.random.default_rng(4)
    Q = random_unitary(6, rng)
    Z = crandn(rng, 6, 40)
    X = Q.conj().T @ Z  # Q X = Z
    np.testing.assert_allclose(procrustes(X, Z), Q, atol=1e-12)


def test_procrustes_beats_random_unitaries():
    rng = np.random.default_rng(5)
    X, Z = crandn(rng, 5, 30), crandn(rng, 5, 30)
    W = procrustes(X, Z)
    np.testing.assert_allclose(W.conj().T @ W, np.eye(5), atol=1e-12)
    best = np.linalg.norm(W @ X - Z)
    for _ in range(100):
        assert np.linalg.norm(random_unitary(5, rng) @ X - Z) >= best


def test_canonical_phase():
    rng = np.random.default_rng(6)
    Q = random_unitary(4, rng)
    D = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 4)))
    np.testing.assert_allclose(canonical_phase(D @ Q), canonical_phase(Q), atol=1e-12)


# --- analysis_alternate ---------------------------------------------------

def test_analysis_alternate_without_data_is_patch_average():
    rng = np.random.default_rng(7)
    x0 = crandn(rng, 8, 8)
    W = dct_transform((2, 2))
    P = PatchOperator(PatchConfig((2, 2)), (8, 8))
    x, _ = analysis_alternate(None, None, W, 1.0, 0.4, 1, x0=x0)
    xt = P.aggregate(W.omega.conj().T @ soft_threshold(W.omega @ P.extract(x0), 0.4))
    np.testing.assert_allclose(x, xt / P.coverage, atol=1e-12)


def test_analysis_alternate_is_monotone():
    op, y, x = undersampled_problem()
    W = dct_transform((4, 4))
    lam = 0.05 * op.npixels
    _, tr = analysis_alternate(op, y, W, lam, 0.05, 50, reference=x)
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(tr.cost, tr.cost[1:]))
    assert tr.cost[-1] < tr.cost[0]


def test_analysis_objective_is_minimum_over_codes():
    op, y, _ = undersampled_problem()
    W = dct_transform((4, 4))
    P = PatchOperator(PatchConfig((4, 4)), op.shape)
    x = op.adjoint_zerofill(y)
    rng = np.random.default_rng(8)
    val = analysis_objective(None, P, W, x, 2.0, 0.1)
    V = W.omega @ P.extract(x)
    for _ in range(20):
        Z = soft_threshold(V, 0.1) + 1e-3 * crandn(rng, *V.shape)
        other = 2.0 * (0.5 * np.linalg.norm(V - Z) ** 2 + 0.1 * np.abs(Z).sum())
        assert other >= val


def test_analysis_alternate_errors():
    W = dct_transform((2, 2))
    with pytest.raises(ConfigurationError):
        analysis_alternate(None, None, W, 1.0, 0.1, 1)
    with pytest.raises(ConfigurationError):
        analysis_alternate(None, None, W, 0.0, 0.1, 1, x0=np.zeros((4, 4)))
    with pytest.raises(ConfigurationError):
        analysis_alternate(None, None, W, 1.0, 0.1, 1, cfg=PatchConfig((3, 3)), x0=np.zeros((4, 4)))


# --- TLMRI -----------------------------------------------------------------

def test_tlmri_is_monotone_and_keeps_unitary():
    op, y, x = undersampled_problem()
    cfg = PatchConfig((4, 4))
    xr, W, tr = tlmri(op, y, cfg, alpha=0.05, lam=0.05 * op.npixels, outer_iters=50, reference=x)
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(tr.cost, tr.cost[1:]))
    np.testing.assert_allclose(W.omega.conj().T @ W.omega, np.eye(16), atol=1e-10)
    assert tr.nrmse[-1] < tr.nrmse[0]


def test_tlmri_fixed_transform_full_sampling_is_closed_form():
    # full sampling: the x-update system is diagonal, so one CG step is exact
    x = make_phantom("shepp_logan", (16, 16))
    op = SystemOperator.single_coil(SamplingMask.full((16, 16)))
    y = op.forward(x)
    cfg = PatchConfig((4, 4))
    W = dct_transform((4, 4))
    lam = 10.0
    x1, _, tr = tlmri(op, y, cfg, alpha=0.1, lam=lam, outer_iters=3, omega0=W,
                      update_transform=False, inner_cg=1)
    P = PatchOperator(cfg, (16, 16))
    xk = op.adjoint_zerofill(y)
    for _ in range(3):
        xt = P.aggregate(W.omega.conj().T @ soft_threshold(W.omega @ P.extract(xk), 0.1))
        xk = (op.adjoint(y) + lam * xt) / (op.npixels + lam * P.coverage)
    np.testing.assert_allclose(x1, xk, atol=1e-8 * np.abs(xk).max())
    # the same iteration is analysis_alternate with the exact majorizer
    x2, _ = analysis_alternate(op, y, W, lam, 0.1, 3, cfg=cfg)
    np.testing.assert_allclose(x2, xk, atol=1e-8 * np.abs(xk).max())


def test_tlmri_errors():
    op, y, _ = undersampled_problem()
    with pytest.raises(ConfigurationError):
        tlmri(op, y, PatchConfig((4, 4)), alpha=0.0, lam=1.0)
    with pytest.raises(ConfigurationError):
        tlmri(op, y, PatchConfig((4, 4)), alpha=0.1, lam=1.0, gamma=-1.0)
    with pytest.raises(ConfigurationError):
        tlmri(op, y, PatchConfig((4, 4)), alpha=0.1, lam=1.0, omega0=dct_transform((2, 2)))


# --- DLMRI -----------------------------------------------------------------

def test_update_atoms_keeps_unit_norm_and_reduces_error():
    rng = np.random.default_rng(9)
    D = overcomplete_dct((3, 3), 16).atoms
    X = crandn(rng, 9, 40)
    Z = sparse_code_synthesis(Dictionary(D), X, 0.5, tol=1e-10).z
    Dn = update_atoms(D, X, Z)
    np.testing.assert_allclose(np.linalg.norm(Dn, axis=0), 1, atol=1e-12)
    assert np.linalg.norm(X - Dn @ Z) <= np.linalg.norm(X - D @ Z) + 1e-12


def test_update_atoms_single_atom():
    rng = np.random.default_rng(10)
    u = crandn(rng, 4)
    u /= np.linalg.norm(u)
    z = crandn(rng, 1, 7)
    D = update_atoms(np.eye(4)[:, :1] + 0j, np.outer(u, z[0]), z)
    assert abs(abs(np.vdot(D[:, 0], u)) - 1) <= 1e-12


def test_update_atoms_reseeds_unused_atom():
    rng = np.random.default_rng(11)
    D = np.eye(3)[:, :2] + 0j
    X = crandn(rng, 3, 5)
    Z = np.zeros((2, 5), complex)
    Dn = update_atoms(D, X, Z)
    worst = np.argmax(np.linalg.norm(X, axis=0))
    np.testing.assert_allclose(Dn[:, 0], X[:, worst] / np.linalg.norm(X[:, worst]))


def test_planted_image_is_one_sparse():
    x, Dt, j, c = planted_patch_image()
    P = PatchOperator(PatchConfig((4, 4), stride=4), (16, 16))
    np.testing.assert_allclose(P.extract(x), Dt[:, j] * c, atol=1e-14)


def test_dlmri_planted_instance():
    # images built exactly as D z with 1-sparse z, full sampling, large lam
    x, _, _, _ = planted_patch_image()
    op = SystemOperator.single_coil(SamplingMask.full((16, 16)))
    cfg = PatchConfig((4, 4), stride=4)
    alpha = 1e-3
    xr, D, tr = dlmri(op, op.forward(x), cfg, J=16, alpha=alpha, lam=100.0, outer_iters=30,
                      reference=x)
    assert tr.cost[-1] <= 0.1 * tr.cost[0]
    assert not tr.events
    np.testing.assert_allclose(np.linalg.norm(D.atoms, axis=0), 1, atol=1e-10)
    X = PatchOperator(cfg, (16, 16)).extract(xr)
    Z = sparse_code_synthesis(D, X, alpha).z
    # codes start at zero, so the initial representation error is ||X||^2
    assert np.linalg.norm(X - D.atoms @ Z) ** 2 <= 1e-3 * np.linalg.norm(X) ** 2


def test_dlmri_zero_iterations_and_objective():
    op, y, _ = undersampled_problem()
    cfg = PatchConfig((4, 4))
    x0 = op.adjoint_zerofill(y)
    xr, D, tr = dlmri(op, y, cfg, J=16, alpha=0.1, lam=1.0, outer_iters=0)
    np.testing.assert_array_equal(xr, x0)
    P = PatchOperator(cfg, op.shape)
    from mrirecon.model import DataTerm
    Z = np.zeros((16, P.npatches))
    assert tr.cost[0] == pytest.approx(dlmri_objective(DataTerm(op, y), P, D, Z, x0, 1.0, 0.1))


def test_dlmri_errors():
    op, y, _ = undersampled_problem()
    with pytest.raises(ConfigurationError):
        dlmri(op, y, PatchConfig((4, 4)), J=16, alpha=0.1, lam=0.0, outer_iters=1)
    with pytest.raises(ConfigurationError):
        dlmri(op, y, PatchConfig((4, 4)), J=16, alpha=0.1, lam=1.0, outer_iters=1,
              D0=overcomplete_dct((4, 4), 25))


def test_invariant_error_is_solver_error():
    from mrirecon.errors import SolverError
    assert issubclass(InvariantError, SolverError)
