"""Numpy implementation of the hot kernels (reference and fallback backend).

Layout conventions shared with the compiled backend:

* state ``y`` has shape ``(N, 4)`` with columns ``(Q_minus, P_plus, n, p)``;
* ``consts`` is ``[Q, P, kappa_p, kappa_n, gamma_p, gamma_n, omega, D_n, D_p]``;
* ``lo[i]``/``up[i]`` are the face transmissibility over cell volume towards
  cell ``i-1``/``i+1`` (zero at the domain ends).
"""

import numpy as np
from scipy.linalg import solve_banded

NSPEC = 4


def reaction_diffusion(y, theta0, theta_minus, theta_n, consts, lo, up):
    """Right-hand side ``f`` and per-cell Jacobian blocks ``A``.

    ``A[i]`` holds the within-cell derivatives including the diagonal part of
    the diffusion operator; the neighbour couplings are ``D * lo`` and
    ``D * up`` on the carrier rows and are not returned.
    """
    Q, P, kp, kn, gp, gn, om, dn, dp = consts
    qm, pp, n, p = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
    q0 = Q - qm          # NV0 density
    p0 = P - pp          # N0 density
    tunnel = om * (Q * p0 - qm * P)

    f = np.empty_like(y)
    f[:, 0] = theta0 * q0 + kn * n * q0 - theta_minus * qm - kp * p * qm + tunnel
    f[:, 1] = theta_n * p0 + gp * p * p0 - gn * n * pp + tunnel
    f[:, 2] = theta_minus * qm + theta_n * p0 - kn * n * q0 - gn * n * pp
    f[:, 3] = theta0 * q0 - kp * p * qm - gp * p * p0

    # diffusion; reflecting ends are encoded by lo[0] = up[-1] = 0
    for col, d in ((2, dn), (3, dp)):
        u = y[:, col]
        flux = np.zeros_like(u)
        flux[1:] += lo[1:] * (u[:-1] - u[1:])
        flux[:-1] += up[:-1] * (u[1:] - u[:-1])
        f[:, col] += d * flux

    A = np.zeros((y.shape[0], NSPEC, NSPEC))
    A[:, 0, 0] = -theta0 - kn * n - theta_minus - kp * p - om * P
    A[:, 0, 1] = -om * Q
    A[:, 0, 2] = kn * q0
    A[:, 0, 3] = -kp * qm
    A[:, 1, 0] = -om * P
    A[:, 1, 1] = -theta_n - gp * p - gn * n - om * Q
    A[:, 1, 2] = -gn * pp
    A[:, 1, 3] = gp * p0
    A[:, 2, 0] = theta_minus + kn * n
    A[:, 2, 1] = -theta_n - gn * n
    A[:, 2, 2] = -kn * q0 - gn * pp - dn * (lo + up)
    A[:, 3, 0] = -theta0 - kp * p
    A[:, 3, 1] = gp * p
    A[:, 3, 3] = -kp * qm - gp * p0 - dp * (lo + up)
    return f, A


def newton_solve(A, h, lo, up, consts, rhs):
    """Solve ``(I - h J) x = rhs`` for the block-tridiagonal Jacobian ``J``."""
    N = A.shape[0]
    dn, dp = consts[7], consts[8]
    size = NSPEC * N
    bw = NSPEC
    ab = np.zeros((2 * bw + 1, size))

    # diagonal blocks
    for s in range(NSPEC):
        for t in range(NSPEC):
            block = -h * A[:, s, t]
            if s == t:
                block = block + 1.0
            r = NSPEC * np.arange(N) + s
            c = NSPEC * np.arange(N) + t
            ab[bw + r - c, c] = block
    # neighbour couplings of the carrier rows
    for s, d in ((2, dn), (3, dp)):
        r = NSPEC * np.arange(1, N) + s
        ab[bw + NSPEC, r - NSPEC] = -h * d * lo[1:]
        r = NSPEC * np.arange(N - 1) + s
        ab[bw - NSPEC, r + NSPEC] = -h * d * up[:-1]
    x = solve_banded((bw, bw), ab, rhs.reshape(-1), check_finite=False)
    return x.reshape(N, NSPEC)


def annulus_sums(values, index, nbins):
    """Sum ``values`` into ``nbins`` bins given an integer bin ``index`` per element."""
    return np.bincount(index.ravel(), weights=values.ravel().astype(float), minlength=nbins)[:nbins]
