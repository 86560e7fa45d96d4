"""Bessel-Legendre stability LMIs for ``x'(t) = A x(t) + A_d x(t - h)``.

The extended state has ``N + 3`` slots of width ``n``::

    [x'(t), x(t), x(t-h), Omega_0 / h, ..., Omega_{N-1} / h]

where ``Omega_i`` is the projection of the history segment on the i-th Legendre
polynomial over ``[-h, 0]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NotStableAtZero, SolverFailure
from .lmi import AffineMatrixExpr, SdpProblem, SolverOptions, solve
from .matrix_core import as_matrix, block_assemble

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtendedStateLayout:
    n: int
    N: int

    @property
    def slots(self) -> int:
        return self.N + 3

    @property
    def dim(self) -> int:
        return self.n * (self.N + 3)

    def slot(self, k: int) -> slice:
        return slice(k * self.n, (k + 1) * self.n)

    def picker(self, k: int) -> np.ndarray:
        """``n x dim`` matrix extracting slot ``k``."""
        E = np.zeros((self.n, self.dim))
        E[:, self.slot(k)] = np.eye(self.n)
        return E


def gamma_coeff(N: int, k: int, i: int) -> int:
    if not (0 <= k <= N and 0 <= i <= N - 1):
        raise ValueError(f"gamma index out of range: N={N}, k={k}, i={i}")
    if i > k:
        return 0
    return -(2 * i + 1) * (1 - (-1) ** (k + i))


def gamma_row_coefficients(N: int, k: int) -> list:
    """Scalar multipliers of the ``N + 3`` identity blocks of ``Gamma_N(k)``, as exact rationals."""
    return [Fraction(0), Fraction(1), Fraction((-1) ** (k + 1))] + \
        [Fraction(gamma_coeff(N, k, i)) for i in range(N)]


def _kron_row(coeffs, n) -> np.ndarray:
    return np.hstack([float(c) * np.eye(n) for c in coeffs])


def build_gamma_row(N: int, k: int, n: int) -> np.ndarray:
    return _kron_row(gamma_row_coefficients(N, k), n)


@dataclass(frozen=True)
class DelayLmiMatrices:
    layout: ExtendedStateLayout
    h: float
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    gammas: tuple  # Gamma_N(0..N)

    @property
    def gamma_stack(self) -> np.ndarray:
        return np.vstack(self.gammas)


def delay_lmi_matrices(N: int, h: float, n: int) -> DelayLmiMatrices:
    if N < 1:
        raise ValueError("order N must be >= 1")
    if h <= 0:
        raise ValueError("delay h must be positive")
    lay = ExtendedStateLayout(n, N)
    I = np.eye(n)
    Nn = N * n
    F = np.hstack([I, np.zeros((n, n * (N + 2)))])
    G = block_assemble([[np.zeros((n, n)), I, np.zeros((n, n)), np.zeros((n, Nn))],
                        [np.zeros((Nn, n)), None, None, h * np.eye(Nn)]])
    gammas = tuple(build_gamma_row(N, k, n) for k in range(N + 1))
    H = np.vstack([F, *gammas[:N]])
    return DelayLmiMatrices(lay, float(h), F, G, H, gammas)


def declare_lyapunov_vars(problem: SdpProblem, n: int, N: int, positivity: bool = True):
    P = problem.add_var("P", ((N + 1) * n, (N + 1) * n), "symmetric")
    S = problem.add_var("S", (n, n), "symmetric")
    R = problem.add_var("R", (n, n), "symmetric")
    if positivity:
        problem.positive_definite(AffineMatrixExpr.term(P), "P>0")
        problem.positive_definite(AffineMatrixExpr.term(S), "S>0")
        problem.positive_definite(AffineMatrixExpr.term(R), "R>0")
    return P, S, R


def build_phi(N: int, h: float, n: int, P, S, R) -> AffineMatrixExpr:
    """Affine expression of ``Phi_N`` in the symmetric variables ``P`` ((N+1)n), ``S``, ``R`` (n)."""
    tm = delay_lmi_matrices(N, h, n)
    lay = tm.layout
    phi = AffineMatrixExpr.term(P, tm.G.T, tm.H, symmetrize=True)
    E1, E2 = lay.picker(1), lay.picker(2)
    phi = phi + AffineMatrixExpr.term(S, E1.T, E1) - AffineMatrixExpr.term(S, E2.T, E2)
    phi = phi + (h ** 2) * AffineMatrixExpr.term(R, tm.F.T, tm.F)
    for k, Gk in enumerate(tm.gammas):
        phi = phi - (2 * k + 1) * AffineMatrixExpr.term(R, Gk.T, Gk)
    return phi


def constraint_matrix(A, A_d, N: int) -> np.ndarray:
    """``M = [I, -A, -A_d, 0]`` whose kernel contains every admissible extended state."""
    A, A_d = as_matrix(A), as_matrix(A_d)
    n = A.shape[0]
    return np.hstack([np.eye(n), -A, -A_d, np.zeros((n, n * N))])


def kernel_basis(A, A_d, N: int) -> np.ndarray:
    """``M_perp = [[A, A_d, 0], [I_{(N+2)n}]]`` with ``M M_perp = 0``."""
    A, A_d = as_matrix(A), as_matrix(A_d)
    n = A.shape[0]
    top = np.hstack([A, A_d, np.zeros((n, n * N))])
    return np.vstack([top, np.eye((N + 2) * n)])


def _check_pair(A, A_d):
    A, A_d = as_matrix(A, "A"), as_matrix(A_d, "A_d")
    n = A.shape[0]
    if A.shape != (n, n) or A_d.shape != (n, n):
        raise ValueError(f"A and A_d must be square and equal size, got {A.shape}, {A_d.shape}")
    return A, A_d, n


def analysis_problem_projected(A, A_d, N: int, h: float, margin: float | None = None) -> SdpProblem:
    A, A_d, n = _check_pair(A, A_d)
    prob = SdpProblem() if margin is None else SdpProblem(margin=margin)
    P, S, R = declare_lyapunov_vars(prob, n, N)
    phi = build_phi(N, h, n, P, S, R)
    prob.negative_definite(phi.congruence(kernel_basis(A, A_d, N)), "projected")
    return prob


def analysis_problem_slack(A, A_d, N: int, h: float, margin: float | None = None) -> SdpProblem:
    A, A_d, n = _check_pair(A, A_d)
    prob = SdpProblem() if margin is None else SdpProblem(margin=margin)
    P, S, R = declare_lyapunov_vars(prob, n, N)
    phi = build_phi(N, h, n, P, S, R)
    Y = prob.add_var("Y", (n, n * (N + 3)))
    M = constraint_matrix(A, A_d, N)
    prob.negative_definite(phi + AffineMatrixExpr.term(Y, M.T, symmetrize=True), "slack")
    return prob


def certify(A, A_d, N: int, h: float, options: SolverOptions | None = None, form: str = "projected"):
    """Solve the analysis LMI at a single delay; returns the :class:`SolverResult`.

    Raises
    ------
    SolverFailure
        If every backend broke down (never reported as infeasible).
    """
    if form not in ("projected", "slack"):
        raise ValueError(f"unknown form {form!r}")
    build = analysis_problem_projected if form == "projected" else analysis_problem_slack
    res = solve(build(A, A_d, N, h), options)
    if res.status == "failed":
        raise SolverFailure(f"analysis LMI at h={h:g}: {res.message}")
    return res


def max_delay_analysis(A, A_d, N: int, tol: float = 1e-3, h_lo: float = 1e-3,
                       h_cap: float = 100.0, options: SolverOptions | None = None) -> float:
    """Largest delay certified by the projected LMI, found by doubling then bisection.

    Returns the last certified delay, i.e. the lower end of the final bracket. The
    search brackets the first infeasibility above ``h_lo``; feasibility is not
    assumed monotone beyond it.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not certify(A, A_d, N, h_lo, options).feasible:
        raise NotStableAtZero(f"analysis LMI infeasible already at h={h_lo:g}")
    lo, hi = h_lo, 2 * h_lo
    while hi <= h_cap:
        if not certify(A, A_d, N, hi, options).feasible:
            break
        lo, hi = hi, 2 * hi
    else:
        if certify(A, A_d, N, h_cap, options).feasible:
            return h_cap
        hi = h_cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if certify(A, A_d, N, mid, options).feasible:
            lo = mid
        else:
            hi = mid
    log.debug("N=%d: certified h_max=%.6f (bracket %.6f)", N, lo, hi)
    return lo
