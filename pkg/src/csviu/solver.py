"""Perturbed Lyapunov equation solvers and finite-horizon recursions.

The central equation is (I - L_alpha)(U) = Q on symmetric matrices,
where L_alpha(U) = alpha (A^T U A + Z(U)).  It has a PSD solution for
PSD Q exactly when the spectral radius of L_alpha is below one, and the
solution is the limit of the fixed-point iteration
U <- L_alpha(U) + Q as well as of the geometric series
sum_k (L_alpha)^k (Q).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, NotStableError
from .model import SymMatrix, as_weight
from .ops import op_L_alpha, op_varpi, operator_matrix, smat, spectral_radius, svec

__all__ = [
    "LyapunovSolution",
    "RecursionTriple",
    "solve_lyapunov",
    "critical_alpha",
    "backward_recursion",
    "STRICT_RADIUS_MARGIN",
]

#: A spectral radius counts as "< 1" only when <= 1 - STRICT_RADIUS_MARGIN.
STRICT_RADIUS_MARGIN = 1e-9


def radius_below_one(radius):
    """Strict-inequality test with the package-wide tolerance."""
    return radius <= 1.0 - STRICT_RADIUS_MARGIN


def max_abs(M):
    """Entrywise max-absolute norm used for residuals and agreement checks."""
    M = np.asarray(M, dtype=float)
    return float(np.abs(M).max(initial=0.0))


@dataclass(frozen=True)
class LyapunovSolution:
    """Solution of (I - L_alpha)(U) = Q with solve diagnostics."""

    L: SymMatrix
    alpha: float
    method: str
    residual: float
    iterations: int
    spectral_radius: float


@dataclass(frozen=True)
class RecursionTriple:
    """Backward sequences P_k and g_k on the horizon 0..kappa.

    P_seq[k] solves P_k = L_alpha(P_{k+1}) + Q down from P_kappa = Phi.
    g_seq[k] is the zero-input constant term, g_k = alpha (g_{k+1} +
    varpi(P_{k+1})) down from g_kappa = gamma.  The sign-dependent linear
    term v_k is trajectory-valued and is evaluated pathwise in csviu.sim.
    """

    P_seq: list
    g_seq: np.ndarray
    kappa: int
    alpha: float


def _residual(model, alpha, U, Q):
    return max_abs(U - op_L_alpha(model, alpha, U).entries - Q)


def solve_lyapunov(model, alpha, Q, method="direct", tol=1e-12, max_iter=100000):
    """Solve the perturbed Lyapunov equation (I - L_alpha)(U) = Q.

    Parameters
    ----------
    model : CsviuModel
    alpha : float
        Nonnegative discount/counter-discount parameter.
    Q : SymMatrix or array_like
        PSD right-hand side.
    method : {"direct", "fixed_point"}
        ``direct`` solves (I - M) svec(U) = svec(Q) on the operator
        representation; ``fixed_point`` iterates U <- L_alpha(U) + Q
        from U = Q until the update falls below ``tol``.
    tol, max_iter : float, int
        Fixed-point stopping controls.

    Returns
    -------
    LyapunovSolution

    Raises
    ------
    NotStableError
        If the spectral radius of L_alpha is not strictly below one
        (no PSD solution exists); carries the computed radius.
    ConvergenceError
        If the fixed point hits ``max_iter`` with a marginal radius.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    Qm = as_weight(Q, model.n)
    rep = operator_matrix(model, alpha, "L_alpha")
    radius = spectral_radius(rep)
    if not radius_below_one(radius):
        raise NotStableError(
            f"(I - L_alpha) has no PSD solution: r_sigma(L_alpha) = {radius:.6g} >= 1",
            spectral_radius=radius,
        )

    if method == "direct":
        lhs = np.eye(rep.dim) - rep.M
        U = smat(np.linalg.solve(lhs, svec(Qm)), model.n)
        iterations = 0
    elif method == "fixed_point":
        U = Qm.copy()
        iterations = None
        for it in range(1, max_iter + 1):
            U_next = op_L_alpha(model, alpha, U).entries + Qm
            if max_abs(U_next - U) <= tol:
                U = U_next
                iterations = it
                break
            U = U_next
        if iterations is None:
            raise ConvergenceError(
                f"fixed point did not converge in {max_iter} iterations "
                f"(r_sigma = {radius:.6g})"
            )
    else:
        raise ValueError(f"unknown method {method!r}")

    residual = _residual(model, alpha, U, Qm)
    if residual > 1e-9 * max(1.0, max_abs(Qm)):
        raise ConvergenceError(
            f"solution residual {residual:.3g} exceeds tolerance "
            f"(r_sigma = {radius:.6g})"
        )
    return LyapunovSolution(
        L=SymMatrix(U),
        alpha=float(alpha),
        method=method,
        residual=residual,
        iterations=iterations,
        spectral_radius=radius,
    )


def critical_alpha(model, Q=None, tol=1e-9, cap=1e6):
    """The supremum of alpha for which the analysis is well posed.

    Returns sup{alpha : r_sigma(L_alpha) < 1 and r_sigma(A) < 1/alpha},
    located by bisection after a doubling bracket.  Both predicates are
    monotone in alpha (L_alpha = alpha * L_1 as operators), so bisection
    is valid.  When the predicate holds all the way to ``cap``, the cap
    is returned.

    Parameters
    ----------
    model : CsviuModel
    Q : SymMatrix or array_like, optional
        Kept for signature uniformity; solvability of the equation for
        PSD Q is equivalent to the radius predicate.
    tol : float
        Absolute bisection tolerance.
    cap : float
        Upper bound standing in for an infinite supremum.
    """
    del Q
    rep1 = operator_matrix(model, 1.0, "L_alpha")
    r_op = spectral_radius(rep1)
    r_A = spectral_radius(model.A)

    def predicate(alpha):
        # L_alpha = alpha * L_1, so r_sigma(L_alpha) = alpha * r_op exactly.
        return radius_below_one(alpha * r_op) and radius_below_one(alpha * r_A)

    hi = 1.0
    lo = 0.0
    while predicate(hi):
        lo = hi
        hi *= 2.0
        if hi >= cap:
            return float(cap)
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return lo


def backward_recursion(model, alpha, Q, kappa, Phi=None, gamma=0.0):
    """Run the backward matrix/constant recursions over a finite horizon.

    P_kappa = Phi (default 0); P_k = L_alpha(P_{k+1}) + Q.
    g_kappa = gamma; g_k = alpha (g_{k+1} + varpi(P_{k+1}))  (zero-input
    form; input-dependent terms are handled pathwise in csviu.sim).

    Parameters
    ----------
    model : CsviuModel
    alpha : float
    Q : SymMatrix or array_like
    kappa : int
        Horizon, >= 1.
    Phi : SymMatrix or array_like, optional
        PSD terminal weight (default zero).
    gamma : float
        Terminal constant.

    Returns
    -------
    RecursionTriple
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n = model.n
    Qm = as_weight(Q, n)
    Phim = np.zeros((n, n)) if Phi is None else as_weight(Phi, n)

    P = [None] * (kappa + 1)
    g = np.zeros(kappa + 1)
    P[kappa] = Phim
    g[kappa] = float(gamma)
    for k in range(kappa - 1, -1, -1):
        P[k] = op_L_alpha(model, alpha, P[k + 1]).entries + Qm
        g[k] = alpha * (g[k + 1] + op_varpi(model, P[k + 1]))
    return RecursionTriple(
        P_seq=[SymMatrix(Pk) for Pk in P],
        g_seq=g,
        kappa=int(kappa),
        alpha=float(alpha),
    )
