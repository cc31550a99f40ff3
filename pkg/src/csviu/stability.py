"""Stochastic-stability verdicts and output-injection detectability.

Three computable criteria decide alpha-stochastic stability, and they
are provably equivalent:

  (ii)  r_sigma(L_alpha) < 1                        (d-stability)
  (iii) there is U > 0 with (I - L_alpha)(U) > 0    (Lyapunov witness)
  (v)   r_sigma(sqrt(alpha) A) < 1  and
        r_sigma((I - alpha A_conj)^{-1} Z) < 1/alpha

For alpha >= 1 the verdict additionally requires all eigenvalues of
alpha*A inside the open unit disk.  Any disagreement among the criteria
beyond tolerance is an implementation bug and raises
InternalInconsistencyError rather than returning a silently wrong
report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InternalInconsistencyError, SingularOperatorError
from .ops import operator_matrix, smat, spectral_radius, svec
from .solver import radius_below_one

__all__ = [
    "StabilityReport",
    "DetectabilityResult",
    "check_stability",
    "check_detectability_with_G",
    "search_detectability",
]

#: |radius - 1| below this marks the instance as marginal.
MARGINAL_TOL = 1e-6


@dataclass(frozen=True)
class StabilityReport:
    """Per-criterion verdicts for one (model, alpha) pair.

    ``crit_v_part2`` is None when (I - alpha A_conj) is singular and the
    criterion is indeterminate.  ``marginal`` flags radii within 1e-6 of
    the stability boundary, where strict-inequality verdicts are not
    trustworthy.
    """

    alpha: float
    crit_ii: bool
    crit_iii: bool
    crit_v_part1: bool
    crit_v_part2: bool | None
    eig_clause: bool
    verdict: str
    spectral_radii: dict
    marginal: bool


@dataclass(frozen=True)
class DetectabilityResult:
    """Outcome of a detectability check or search.

    ``G`` is the witness gain when one was found (detectable=True), else
    None.  ``closed_loop_radius`` is the spectral radius of the
    closed-loop operator at the witness, or the best radius encountered
    during an unsuccessful search.
    """

    detectable: bool
    G: np.ndarray | None
    closed_loop_radius: float


def _solve_identity_witness(rep):
    """Criterion (iii): solve (I - L_alpha)(U) = I and test U > 0."""
    lhs = np.eye(rep.dim) - rep.M
    try:
        u_vec = np.linalg.solve(lhs, svec(np.eye(rep.n)))
    except np.linalg.LinAlgError:
        return False
    U = smat(u_vec, rep.n)
    min_eig = float(np.linalg.eigvalsh((U + U.T) / 2.0)[0])
    return min_eig > 0.0


def check_stability(model, alpha):
    """Evaluate the stability criteria and produce the verdict.

    Parameters
    ----------
    model : CsviuModel
    alpha : float
        Nonnegative parameter.

    Returns
    -------
    StabilityReport
        verdict is ``alpha_stable`` when the criteria hold and (alpha < 1
        or the alpha*A eigenvalue clause holds); at alpha = 1 a passing
        model is labeled ``stable``; otherwise ``not_stable``.

    Raises
    ------
    InternalInconsistencyError
        If the equivalent criteria disagree away from the marginal zone.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    rep_L = operator_matrix(model, alpha, "L_alpha")
    r_L = spectral_radius(rep_L)
    r_A = spectral_radius(model.A)

    crit_ii = radius_below_one(r_L)
    crit_iii = _solve_identity_witness(rep_L)
    r_sqrt_alpha_A = np.sqrt(alpha) * r_A
    crit_v_part1 = radius_below_one(r_sqrt_alpha_A)

    rep_A = operator_matrix(model, alpha, "A_conj")
    rep_Z = operator_matrix(model, alpha, "Z")
    resolvent_gain = None
    crit_v_part2 = None
    try:
        resolvent = np.linalg.solve(np.eye(rep_A.dim) - alpha * rep_A.M, rep_Z.M)
        resolvent_gain = spectral_radius(resolvent)
        # r < 1/alpha, i.e. alpha * r strictly below one; alpha = 0 is trivially true.
        crit_v_part2 = radius_below_one(alpha * resolvent_gain)
    except np.linalg.LinAlgError:
        # (I - alpha A_conj) singular: criterion (v) indeterminate.
        crit_v_part2 = None

    r_alpha_A = alpha * r_A
    eig_clause = radius_below_one(r_alpha_A)

    radii = {
        "L_alpha": r_L,
        "A": r_A,
        "sqrt_alpha_A": r_sqrt_alpha_A,
        "alpha_A": r_alpha_A,
        "resolvent_Z": resolvent_gain,
    }
    boundary_distances = [abs(r_L - 1.0), abs(r_sqrt_alpha_A - 1.0)]
    if alpha >= 1:
        boundary_distances.append(abs(r_alpha_A - 1.0))
    if resolvent_gain is not None:
        boundary_distances.append(abs(alpha * resolvent_gain - 1.0))
    marginal = min(boundary_distances) < MARGINAL_TOL

    crit_v = None if crit_v_part2 is None else (crit_v_part1 and crit_v_part2)
    if not marginal:
        agree = crit_ii == crit_iii and (crit_v is None or crit_v == crit_ii)
        if not agree:
            raise InternalInconsistencyError(
                f"equivalent criteria disagree: (ii)={crit_ii} (iii)={crit_iii} "
                f"(v)={crit_v} at alpha={alpha} with radii {radii}"
            )

    passing = crit_ii and (alpha < 1.0 or eig_clause)
    if not passing:
        verdict = "not_stable"
    elif alpha == 1.0:
        verdict = "stable"
    else:
        verdict = "alpha_stable"
    return StabilityReport(
        alpha=float(alpha),
        crit_ii=crit_ii,
        crit_iii=crit_iii,
        crit_v_part1=crit_v_part1,
        crit_v_part2=crit_v_part2,
        eig_clause=eig_clause,
        verdict=verdict,
        spectral_radii=radii,
        marginal=marginal,
    )


def _closed_loop_radius(model, alpha, G):
    closed = model.with_dynamics(model.A + G @ model.C)
    rep = operator_matrix(closed, alpha, "L_alpha")
    return spectral_radius(rep)


def check_detectability_with_G(model, alpha, G):
    """Test whether the gain G certifies (C, L_alpha)-detectability.

    Builds the closed-loop operator
    U -> alpha ((A + G C)^T U (A + G C) + Z(U)) and tests that its
    spectral radius is strictly below one.

    Parameters
    ----------
    model : CsviuModel
    alpha : float
    G : array_like
        n-by-p output-injection gain.

    Returns
    -------
    DetectabilityResult
    """
    G = np.asarray(G, dtype=float)
    if G.shape != (model.n, model.p):
        raise DimensionError(f"G must be {model.n}x{model.p}, got {G.shape}")
    radius = _closed_loop_radius(model, alpha, G)
    return DetectabilityResult(
        detectable=radius_below_one(radius),
        G=G,
        closed_loop_radius=radius,
    )


def _deadbeat_candidates(model):
    """Phase (b): deterministic gains aiming the closed-loop poles at zero."""
    A, C = model.A, model.C
    n = model.n
    candidates = [-A @ np.linalg.pinv(C)]
    # Output injection is state feedback on the dual pair (A^T, C^T).
    ctrb = np.hstack([np.linalg.matrix_power(A.T, k) @ C.T for k in range(n)])
    if np.linalg.matrix_rank(ctrb) == n and n > 1:
        try:
            from scipy.signal import place_poles

            poles = np.linspace(-0.05, 0.05, n)
            placed = place_poles(A.T, C.T, poles)
            candidates.append(-placed.gain_matrix.T)
        except Exception:
            # Placement can reject ill-conditioned pairs; the search
            # falls through to the random phase.
            pass
    return candidates


def search_detectability(model, alpha, budget=100, seed=0):
    """Best-effort search for a detectability witness.

    Tries, in order: (a) G = 0; (b) deterministic output-injection
    candidates placing the eigenvalues of A + G C at (or near) zero;
    (c) ``budget`` random Gaussian gains scaled over a log-grid, drawn
    from a generator seeded for reproducibility.

    ``detectable=False`` means only that no witness was found within the
    budget; it is not a certificate of undetectability.

    Parameters
    ----------
    model : CsviuModel
    alpha : float
    budget : int
        Number of random candidates in phase (c).
    seed : int
        Seed for the phase-(c) generator.

    Returns
    -------
    DetectabilityResult
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n, p = model.n, model.p
    best_radius = np.inf

    def attempt(G):
        nonlocal best_radius
        radius = _closed_loop_radius(model, alpha, G)
        best_radius = min(best_radius, radius)
        if radius_below_one(radius):
            return DetectabilityResult(True, np.asarray(G, dtype=float), radius)
        return None

    found = attempt(np.zeros((n, p)))
    if found:
        return found
    for G in _deadbeat_candidates(model):
        found = attempt(G)
        if found:
            return found
    rng = np.random.default_rng(seed)
    scales = np.logspace(-2, 2, 5)
    for trial in range(budget):
        G = scales[trial % len(scales)] * rng.standard_normal((n, p))
        found = attempt(G)
        if found:
            return found
    return DetectabilityResult(False, None, float(best_radius))
