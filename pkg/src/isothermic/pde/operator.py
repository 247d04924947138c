"""Assembly of the conformal operator and the shared sparse solver."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SolverError

SOLVER_RTOL = 1e-10


def coefficient(space, points) -> np.ndarray:
    """``((1 + k|x|^2)/2)^2``, the factor in front of the flat Laplacian."""
    return (0.5 * (1.0 + space.k * np.sum(points * points, axis=-1))) ** 2


def assemble_L(grid):
    """Shortley-Weller discretisation of ``((1+k|x|^2)/2)^2 * Laplacian``.

    Returns
    -------
    A : scipy.sparse.csr_matrix, shape (N, N)
        Action on interior unknowns.
    b : ndarray, shape (N,)
        Coefficients of the (constant) Dirichlet value: ``L u ~ A u + b g``.
    """
    N, n, h = grid.size, grid.n, grid.h
    coef = coefficient(grid.space, grid.points)
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    b = np.zeros(N)
    multi = grid.multi_index
    ids = np.arange(N)
    for axis in range(n):
        tm, tp = grid.theta[:, axis, 0], grid.theta[:, axis, 1]
        s = tm + tp
        wp = 2.0 / (h * h * tp * s) * coef
        wm = 2.0 / (h * h * tm * s) * coef
        diag -= 2.0 / (h * h * tm * tp) * coef
        for w, t, step in ((wm, tm, -1), (wp, tp, 1)):
            inner = t >= 1.0
            nb = multi[inner].copy()
            nb[:, axis] += step
            rows.append(ids[inner])
            cols.append(grid.index[tuple(nb.T)])
            vals.append(w[inner])
            b[~inner] += w[~inner]
    rows.append(ids)
    cols.append(ids)
    vals.append(diag)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return A, b


class ShiftedSolver:
    """Solves ``(alpha I - beta A) x = rhs`` for a fixed pair ``(alpha, beta)``.

    ``alpha I - beta A`` is an M-matrix, so it is factorised with a
    symmetric fill-reducing ordering and *no* pivoting: the triangular
    factors then keep the M-matrix sign pattern, the substitutions never
    cancel, and exponentially small solution components come out with full
    relative accuracy.  Any residual above the tolerance is removed by GMRES
    preconditioned with the factorisation.
    """

    def __init__(self, A, alpha: float, beta: float, rtol: float = SOLVER_RTOL):
        N = A.shape[0]
        self.M = (alpha * sp.identity(N, format="csc") - beta * A.tocsc()).tocsc()
        self.rtol = rtol
        try:
            self.lu = spla.splu(
                self.M,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # singular factor
            raise SolverError(f"factorisation failed: {exc}", {"size": N}) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self.lu.solve(rhs)
        scale = max(np.abs(rhs).max(), 1e-300)
        res = np.abs(rhs - self.M @ x).max() / scale
        diagnostics = {"direct_residual": float(res), "gmres_iterations": 0}
        if res <= self.rtol:
            self.last = diagnostics
            return x
        prec = spla.LinearOperator(self.M.shape, matvec=self.lu.solve)
        count = [0]

        def cb(_):
            count[0] += 1

        x2, info = spla.gmres(
            self.M, rhs, x0=x, rtol=self.rtol, atol=0.0, M=prec, restart=30, maxiter=20,
            callback=cb, callback_type="pr_norm",
        )
        res2 = np.abs(rhs - self.M @ x2).max() / scale
        diagnostics.update(gmres_iterations=count[0], final_residual=float(res2), info=int(info))
        self.last = diagnostics
        if res2 > self.rtol * 10:
            raise SolverError(f"linear solve stalled at relative residual {res2:.2e}", diagnostics)
        return x2 if res2 < res else x
