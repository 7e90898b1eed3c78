"""Independent reference implementations used as test oracles.

Nothing here calls the package's operators or solvers: dense matrices are
built from explicit formulas and the iterative references are written
from the textbook recursions.
"""

import numpy as np


def dft_matrix(nx, ny):
    """Unnormalized 2D DFT on row-major vectorized images."""
    fx = np.exp(-2j * np.pi * np.outer(np.arange(nx), np.arange(nx)) / nx)
    fy = np.exp(-2j * np.pi * np.outer(np.arange(ny), np.arange(ny)) / ny)
    return np.kron(fx, fy)


def dense_system(keep, maps):
    """Stack over coils of ``S F diag(c_l)``; rows ordered coil-major like ``samples.T``."""
    keep = np.asarray(keep)
    nx, ny = keep.shape
    F = dft_matrix(nx, ny)[keep.ravel()]
    return np.vstack([F * np.asarray(c).ravel()[None, :] for c in maps])


def samples_vector(samples):
    """``(M, L)`` samples to the coil-major vector matching :func:`dense_system`."""
    return np.asarray(samples).T.ravel()


def dense_fd(nx, ny):
    """Periodic forward differences, vertical block then horizontal block."""
    N = nx * ny
    Dv = np.zeros((N, N))
    Dh = np.zeros((N, N))
    for i in range(nx):
        for j in range(ny):
            p = i * ny + j
            Dv[p, ((i + 1) % nx) * ny + j] += 1
            Dv[p, p] -= 1
            Dh[p, i * ny + (j + 1) % ny] += 1
            Dh[p, p] -= 1
    return np.vstack([Dv, Dh])


def grid_prox(phi, z, t, step=1e-4, top=10.0):
    """``argmin_x 1/2|x - z|^2 + t phi(|x|)`` by grid search along the phase of ``z``.

    The minimizer of a radial penalty lies on the ray through ``z``, so a
    1D search over the magnitude suffices.
    """
    r = np.arange(0.0, top + step, step)
    ph = z / abs(z) if z != 0 else 1.0
    obj = 0.5 * np.abs(r * ph - z) ** 2 + t * phi(r)
    return r[np.argmin(obj)] * ph


def grid_huber_split(t, alpha, step=1e-5, top=10.0):
    """``min_z 1/2 |t - z|^2 + alpha |z|`` by grid search over ``z`` on the ray of ``t``."""
    r = np.arange(0.0, top + step, step)
    ph = t / abs(t) if t != 0 else 1.0
    vals = 0.5 * np.abs(t - r * ph) ** 2 + alpha * r
    k = int(np.argmin(vals))
    # refine with a parabola through the three best grid points
    if 0 < k < len(r) - 1:
        y0, y1, y2 = vals[k - 1], vals[k], vals[k + 1]
        den = y0 - 2 * y1 + y2
        if den > 0:
            return y1 - (y0 - y2) ** 2 / (8 * den)
    return vals[k]


def chambolle_pock_tv(A, y, K, iters, tau_scale=0.01):
    """Reference for ``min 1/2||A x - y||^2 + ||K x||_1`` (complex, elementwise modulus).

    Chambolle-Pock with the exact data-term prox; ``tau sigma ||K||^2 < 1``.
    Returns ``(x, cost)``.
    """
    N = A.shape[1]
    Knorm = np.linalg.norm(K, 2)
    tau = tau_scale / Knorm
    sigma = 0.99 / (tau_scale * Knorm)
    AH = A.conj().T
    Minv = np.linalg.inv(np.eye(N) + tau * AH @ A)
    Aty = AH @ y
    x = np.zeros(N, complex)
    xbar = x.copy()
    z = np.zeros(K.shape[0], complex)
    for _ in range(iters):
        z = z + sigma * (K @ xbar)
        z = z / np.maximum(1, np.abs(z))
        xn = Minv @ (x - tau * (K.conj().T @ z) + tau * Aty)
        xbar = 2 * xn - x
        x = xn
    cost = 0.5 * np.linalg.norm(A @ x - y) ** 2 + np.abs(K @ x).sum()
    return x, cost


def ogm_quadratic(H, b, x0, L, N):
    """Hand-written POGM table recursion with ``g = 0`` for ``f = 1/2 x'Hx - b'x``."""
    x = np.array(x0, dtype=float)
    w_prev = x.copy()
    z_prev = x.copy()
    th_prev, ga_prev = 1.0, None
    xs = [x.copy()]
    for k in range(1, N + 1):
        if k < N:
            th = (1 + np.sqrt(4 * th_prev**2 + 1)) / 2
        else:
            th = (1 + np.sqrt(8 * th_prev**2 + 1)) / 2
        ga = (2 * th_prev + th - 1) / (L * th)
        w = x - (H @ x - b) / L
        z = w + (th_prev - 1) / th * (w - w_prev) + th_prev / th * (w - x)
        if k > 1:
            z = z + (th_prev - 1) / (L * ga_prev * th) * (z_prev - x)
        x = z  # prox of g = 0
        w_prev, z_prev, th_prev, ga_prev = w, z, th, ga
        xs.append(x.copy())
    return xs


def lasso_cd(D, p, alpha, iters=20000, tol=1e-13):
    """Cyclic coordinate descent for ``1/2||p - D z||^2 + alpha||z||_1`` (complex)."""
    J = D.shape[1]
    z = np.zeros(J, complex)
    r = p.astype(complex).copy()
    nrm = np.sum(np.abs(D) ** 2, axis=0)
    for _ in range(iters):
        biggest = 0.0
        for j in range(J):
            rho = np.vdot(D[:, j], r) + nrm[j] * z[j]
            mag = abs(rho)
            new = 0j if mag <= alpha else (mag - alpha) / nrm[j] * rho / mag
            d = new - z[j]
            if d != 0:
                r -= D[:, j] * d
                z[j] = new
                biggest = max(biggest, abs(d))
        if biggest < tol:
            break
    return z


def lasso_cost(D, p, z, alpha):
    return 0.5 * np.linalg.norm(p - D @ z) ** 2 + alpha * np.abs(z).sum()


def random_unitary(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# 8x8 single-coil TV problems ``1/2||A x - y||^2 + lam ||D x||_1``.
# Optimal costs from ``chambolle_pock_tv`` with 1e5 iterations, frozen.
TV_OPTIMUM = {0: 36.27091878425331, 1: 24.15268569916897}


def tv_problem(which):
    """``(keep, x_true, y_grid_samples, lam)``; samples in row-major mask order."""
    x = np.zeros((8, 8), complex)
    if which == 0:
        x[2:6, 2:5] = 1
        x[5:7, 5:7] = 0.5
        rows, seed, lam = [0, 1, 2, 4, 6, 7], 1, 2.0
    else:
        x[1:4, 3:7] = 1
        x[4:7, 1:4] = -0.7j
        rows, seed, lam = [0, 1, 3, 5, 7], 2, 1.0
    keep = np.zeros((8, 8), bool)
    keep[rows] = True
    rng = np.random.default_rng(seed)
    clean = np.fft.fft2(x)[keep]
    y = clean + 0.3 * (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape))
    return keep, x, y, lam


def planted_patch_image(seed=0, n=16, b=4):
    """Image tiled by ``b x b`` blocks, each a 1-sparse combination of a random orthonormal ``D``.

    Returns ``(image, D, atom_index, coef)``; blocks are ordered row-major.
    """
    rng = np.random.default_rng(seed)
    d = b * b
    D, _ = np.linalg.qr(rng.standard_normal((d, d)))
    nb = (n // b) ** 2
    j = rng.integers(0, d, nb)
    c = rng.choice([-1.0, 1.0], nb) * rng.uniform(1, 2, nb)
    x = np.zeros((n, n))
    for p in range(nb):
        r, s = divmod(p, n // b)
        x[r * b:(r + 1) * b, s * b:(s + 1) * b] = (c[p] * D[:, j[p]]).reshape(b, b)
    return x, D, j, c
