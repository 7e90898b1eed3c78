import numpy as np
import pytest

from mrirecon.errors import ConfigurationError, UnsupportedOperationError
from mrirecon.model import KSpaceData, SamplingMask, SystemOperator
from mrirecon.phantom import synthetic_smaps
from mrirecon.regularizers import FiniteDifference2D, HaarWavelet, Identity, Stacked
from mrirecon.splitting import (AnalysisCost, StructuredSplit, admm_analysis, admm_structured,
                                condition_penalties, primal_dual, project_unit_ball)

from oracles import TV_OPTIMUM, chambolle_pock_tv, dense_fd, dense_system, samples_vector, tv_problem


def tv_instance(which):
    keep, x, y, lam = tv_problem(which)
    op = SystemOperator.single_coil(SamplingMask(keep))
    return op, KSpaceData(y, op.mask), lam, x


def test_frozen_reference_is_consistent():
    # a short oracle run must already be close to (and above) the frozen optimum
    for which in (0, 1):
        op, y, lam, _ = tv_instance(which)
        A = dense_system(op.mask.keep, op.smaps.maps)
        _, f = chambolle_pock_tv(A, samples_vector(y.samples), lam * dense_fd(8, 8), 5000)
        assert TV_OPTIMUM[which] <= f <= TV_OPTIMUM[which] * (1 + 1e-4)


@pytest.mark.parametrize("which", [0, 1])
def test_solvers_agree_with_reference(which):
    op, y, lam, _ = tv_instance(which)
    T = FiniteDifference2D((8, 8))
    fref = TV_OPTIMUM[which]
    LA, K2 = op.lipschitz_bound, lam**2 * T.norm_sq
    _, ta = admm_analysis(op, y, T, lam, mu=128.0, iters=3000)
    _, ts = admm_structured(op, y, T, lam, mu1=128.0, mu2=128.0, mu3=128.0, iters=3000)
    _, tp = primal_dual(op, y, T, lam, sigma=20 * LA / K2, iters=5000)
    for tr in (ta, ts, tp):
        assert abs(tr.final_cost - fref) <= 1e-6 * fref


def test_admm_default_penalty_converges():
    op, y, lam, _ = tv_instance(1)
    _, tr = admm_analysis(op, y, FiniteDifference2D((8, 8)), lam, iters=3000)
    assert tr.final_cost == pytest.approx(TV_OPTIMUM[1], rel=1e-6)


def test_package_cost_matches_dense_cost():
    op, y, lam, _ = tv_instance(0)
    A = dense_system(op.mask.keep, op.smaps.maps)
    x = np.random.default_rng(0).standard_normal((8, 8)) + 0j
    dense = (0.5 * np.linalg.norm(A @ x.ravel() - samples_vector(y.samples)) ** 2
             + lam * np.abs(dense_fd(8, 8) @ x.ravel()).sum())
    assert AnalysisCost(op, y, FiniteDifference2D((8, 8)), lam).value(x) == pytest.approx(dense, rel=1e-12)


def test_lam_zero_gives_least_squares():
    op = SystemOperator(SamplingMask.full((8, 8)), synthetic_smaps((8, 8), 2, seed=0))
    x = np.random.default_rng(0).standard_normal((8, 8)) + 0j
    y = op.forward(x)
    T = FiniteDifference2D((8, 8))
    for run in (lambda: admm_analysis(op, y, T, 0.0, iters=50),
                lambda: admm_structured(op, y, T, 0.0, iters=2000),
                lambda: primal_dual(op, y, T, 0.0, iters=300)):
        xr, _ = run()
        assert np.linalg.norm(xr - x) <= 1e-8 * np.linalg.norm(x)


def test_large_lambda_gives_constant_image():
    # with huge lam the TV solution is the constant that best fits DC
    op, y, _, _ = tv_instance(0)
    T = FiniteDifference2D((8, 8))
    x, _ = admm_structured(op, y, T, 1e4, iters=2000)
    dc = y.samples[0, 0] / 64  # DC is the first sample in row-major order
    np.testing.assert_allclose(x, np.full((8, 8), dc), atol=1e-6)


def test_project_unit_ball():
    z = np.array([0.5, 2j, -3 + 4j, 0])
    np.testing.assert_allclose(project_unit_ball(z), [0.5, 1j, (-3 + 4j) / 5, 0])


def test_condition_penalties_hit_targets():
    keep = np.zeros((8, 8), bool)
    keep[::2] = True
    op = SystemOperator(SamplingMask(keep), synthetic_smaps((8, 8), 3, seed=2, normalize=False))
    T = FiniteDifference2D((8, 8))
    kappa = 10.0
    mu1, mu2, mu3 = condition_penalties(op, T, kappa)
    # u subproblem: F'MF + mu1 I, with F'MF eigenvalues in {0, N}
    assert (64 + mu1) / mu1 == pytest.approx(kappa)
    # x subproblem: diagonal mu1 C'C + mu3 I
    ssq = op.smaps.sum_of_squares()
    ev = mu1 * ssq + mu3
    assert ev.max() / ev.min() <= kappa * (1 + 1e-12)
    # v subproblem: mu2 T'T + mu3 I
    Kd = dense_fd(8, 8)
    ev = np.linalg.eigvalsh(mu2 * Kd.T @ Kd + mu3 * np.eye(64))
    assert ev.max() / ev.min() == pytest.approx(kappa, rel=1e-9)
    with pytest.raises(ConfigurationError):
        condition_penalties(op, T, 1.0)


def test_structured_subproblems_are_exact():
    rng = np.random.default_rng(4)
    keep = rng.random((8, 8)) < 0.5
    keep[0] = True
    smaps = synthetic_smaps((8, 8), 2, seed=4)
    op = SystemOperator(SamplingMask(keep), smaps)
    y = KSpaceData(rng.standard_normal((keep.sum(), 2)) + 0j, op.mask)
    T = FiniteDifference2D((8, 8))
    mu1, mu2, mu3 = 3.0, 2.0, 5.0
    s = StructuredSplit(op, y, T, mu1, mu2, mu3)
    c = lambda *sh: rng.standard_normal(sh) + 1j * rng.standard_normal(sh)  # noqa: E731
    x, eta_u, eta_v, z, eta_z = c(8, 8), c(2, 8, 8), c(8, 8), c(2, 8, 8), c(2, 8, 8)

    u = s.solve_u(x, eta_u)
    F = np.fft.fft2
    Fh = lambda k: np.fft.ifft2(k, norm="forward")  # noqa: E731
    lhs = Fh(F(u) * keep) + mu1 * u
    rhs = Fh(y.zerofill()) + mu1 * (smaps.maps * x + eta_u)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)

    v = s.solve_v(x, z, eta_z, eta_v)
    lhs = mu2 * T.adjoint(T.forward(v)) + mu3 * v
    rhs = mu2 * T.adjoint(z - eta_z) + mu3 * (x + eta_v)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)

    xn = s.solve_x(u, v, eta_u, eta_v)
    lhs = mu1 * np.sum(np.conj(smaps.maps) * smaps.maps, axis=0) * xn + mu3 * xn
    rhs = mu1 * np.sum(np.conj(smaps.maps) * (u - eta_u), axis=0) + mu3 * (v - eta_v)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_structured_needs_circulant_transform():
    op, y, lam, _ = tv_instance(0)
    T = Stacked([Identity((8, 8)), FiniteDifference2D((8, 8))])
    with pytest.raises(UnsupportedOperationError):
        admm_structured(op, y, T, lam, iters=1)


def test_wavelet_analysis_agrees_across_solvers():
    op, y, _, _ = tv_instance(1)
    T = HaarWavelet((8, 8), levels=2)
    _, ta = admm_analysis(op, y, T, 1.0, mu=64.0, iters=2000)
    _, ts = admm_structured(op, y, T, 1.0, mu1=64.0, mu2=64.0, mu3=64.0, iters=2000)
    _, tp = primal_dual(op, y, T, 1.0, iters=4000)
    assert ts.final_cost == pytest.approx(ta.final_cost, rel=1e-6)
    assert tp.final_cost == pytest.approx(ta.final_cost, rel=1e-6)


def test_constraint_residuals_vanish():
    op, y, lam, _ = tv_instance(1)
    T = FiniteDifference2D((8, 8))
    _, ta = admm_analysis(op, y, T, lam, mu=64.0, iters=1000)
    _, ts = admm_structured(op, y, T, lam, mu1=64.0, mu2=64.0, mu3=64.0, iters=1000)
    assert ta.extra["constraint"][-1] <= 1e-6
    assert max(ts.extra[k][-1] for k in ("r_u", "r_z", "r_v")) <= 1e-6


def test_primal_dual_step_validation():
    op, y, lam, _ = tv_instance(0)
    T = FiniteDifference2D((8, 8))
    with pytest.raises(ConfigurationError):
        primal_dual(op, y, T, lam, tau=1.0, sigma=1.0, iters=1)
    with pytest.raises(ConfigurationError):
        admm_analysis(op, y, T, lam, mu=-1.0)
