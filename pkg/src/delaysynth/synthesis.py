"""Static state / output feedback synthesis for input-delay plants.

The bilinear condition is linearized by freezing the slack row ``F_W`` at the value
that best fits the constraint row built from the previous gain, solving the resulting
LMI for a new gain, and repeating. The delay is then ramped by path-following.
Every emitted gain is confirmed by the spectral oracle before it is accepted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bessel_legendre import ExtendedStateLayout, build_phi, declare_lyapunov_vars
from .errors import InfeasibleAtH, NoProgress, NotStabilizable, SolverFailure
from .lmi import AffineMatrixExpr, SdpProblem, SolverOptions, solve
from .matrix_core import (DecompositionError, RealJordanForm, as_matrix, identity_structure,
                          real_jordan_form)
from .oracle import spectral_abscissa
from .slack import PRESETS, SlackStructure, closed_loop_coupling, frobenius_mismatch, \
    synthesis_epsilons, synthesis_row

log = logging.getLogger(__name__)

SLACK_METHODS = ("jordan", "full", *PRESETS)


@dataclass(frozen=True)
class DelaySystem:
    """``x' = A x + A1 x(t-h) + B u(t-h)``, ``y = C x``; ``C`` defaults to the identity."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None
    A1: np.ndarray | None = None
    h: float | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.eye(n) if self.C is None else as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        A1 = None if self.A1 is None else as_matrix(self.A1, "A1")
        if A1 is not None and A1.shape != (n, n):
            raise ValueError(f"A1 must be {n}x{n}, got {A1.shape}")
        if self.h is not None and self.h <= 0:
            raise ValueError("delay must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "A1", A1)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def is_state_feedback(self) -> bool:
        return self.p == self.n and np.linalg.matrix_rank(self.C) == self.n

    def delayed_matrix(self, K) -> np.ndarray:
        """``A_d`` of the closed loop, i.e. ``A1 + B K C``."""
        K = np.asarray(K, dtype=float).reshape(self.m, self.p)
        return closed_loop_coupling(self.A1, self.B, K, self.C)

    def abscissa(self, K, h: float) -> float:
        return spectral_abscissa(self.A, self.delayed_matrix(K), h).abscissa


@dataclass
class RoundRecord:
    step: int
    h: float
    status: str
    eps: np.ndarray
    mismatch: float
    iterations: int
    K: np.ndarray | None = None


@dataclass
class SynthesisResult:
    K: np.ndarray
    certificate: dict
    h_achieved: float
    mode: str
    N: int
    method: str = "jordan"
    trace: list = field(default_factory=list)
    path: list = field(default_factory=list)  # accepted (h, K) pairs
    abscissa: float = float("nan")
    conditioning: float = float("nan")
    structure_gap: float = float("nan")

    @property
    def solves(self) -> int:
        return len(self.trace)

    @property
    def mean_iterations(self) -> float:
        its = [r.iterations for r in self.trace]
        return float(np.mean(its)) if its else 0.0

    @property
    def mismatch_trace(self) -> list:
        return [r.mismatch for r in self.trace]


def initial_gain(A, B, options: SolverOptions | None = None) -> np.ndarray:
    """A gain making ``A + B K`` Hurwitz; zero if ``A`` already is.

    Solves ``He(A Q + B Z) < 0, Q > 0`` and returns ``K = Z Q^-1``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    if np.max(np.linalg.eigvals(A).real) < 0:
        return np.zeros((m, n))
    if m == 0:
        raise NotStabilizable("A is not Hurwitz and there is no input")
    prob = SdpProblem()
    Q = prob.add_var("Q", (n, n), "symmetric")
    Z = prob.add_var("Z", (m, n))
    prob.positive_definite(AffineMatrixExpr.term(Q), "Q>0")
    lyap = (AffineMatrixExpr.term(Q, A) + AffineMatrixExpr.term(Z, B)).he()
    prob.negative_definite(lyap, "lyapunov")
    res = solve(prob, options)
    if not res.feasible:
        raise NotStabilizable(f"delay-free stabilization LMI is {res.status}")
    K = res.assignment["Z"] @ np.linalg.inv(res.assignment["Q"])
    if np.max(np.linalg.eigvals(A + B @ K).real) >= 0:
        raise NotStabilizable("recovered gain is not stabilizing")
    return K


def _feedback_lmi(sys: DelaySystem, N: int, h: float, F_W, jordan: RealJordanForm,
                  mode: str) -> SdpProblem:
    n, m = sys.n, sys.m
    lay = ExtendedStateLayout(n, N)
    F_W = np.asarray(F_W, dtype=float)
    if F_W.shape != (n, lay.dim):
        raise ValueError(f"F_W must be {n}x{lay.dim}, got {F_W.shape}")
    prob = SdpProblem()
    P, S, R = declare_lyapunov_vars(prob, n, N)
    phi = build_phi(N, h, n, P, S, R)
    Bt = jordan.T_inv @ sys.B
    M_blocks = {0: np.eye(n), 1: -jordan.transform(sys.A)}
    if sys.A1 is not None:
        M_blocks[2] = -jordan.transform(sys.A1)

    if mode == "ssf":
        X = prob.add_var("X", (n, n), "blockdiag", jordan.sizes)
        Kbar = prob.add_var("Kbar", (m, n)) if m else None
        right_K = lay.picker(2)
    else:
        X = prob.add_var("sigma", (n, n), "scalar")
        Kbar = prob.add_var("Kbar", (m, sys.p)) if m else None
        right_K = (sys.C @ jordan.T) @ lay.picker(2)

    lmi = phi
    for s, Ms in M_blocks.items():
        lmi = lmi + AffineMatrixExpr.term(X, F_W.T @ Ms, lay.picker(s), symmetrize=True)
    if Kbar is not None:
        lmi = lmi + AffineMatrixExpr.term(Kbar, -F_W.T @ Bt, right_K, symmetrize=True)
    prob.negative_definite(lmi, "synthesis")
    return prob


def ssf_problem(sys: DelaySystem, N: int, h: float, F_W, jordan: RealJordanForm | None = None) -> SdpProblem:
    """State-feedback LMI in ``P, S, R``, ``Kbar`` and block-diagonal ``X`` for a frozen ``F_W``.

    The gain is recovered as ``K = Kbar X^-1 T^-1``.
    """
    jordan = jordan or real_jordan_form(sys.A)
    return _feedback_lmi(sys, N, h, F_W, jordan, "ssf")


def sof_problem(sys: DelaySystem, N: int, h: float, F_W, jordan: RealJordanForm | None = None) -> SdpProblem:
    """Output-feedback LMI with ``X = sigma I``; the gain is ``K = Kbar / sigma``."""
    jordan = jordan or real_jordan_form(sys.A)
    return _feedback_lmi(sys, N, h, F_W, jordan, "sof")


def recover_gain(sys: DelaySystem, assignment: dict, jordan: RealJordanForm, mode: str) -> np.ndarray:
    if sys.m == 0:
        return np.zeros((0, sys.p))
    Kbar = assignment["Kbar"]
    if mode == "ssf":
        return Kbar @ np.linalg.inv(assignment["X"]) @ jordan.T_inv
    sigma = float(assignment["sigma"][0, 0])
    return Kbar / sigma


def structure_for(sys: DelaySystem, method: str, cluster_tol: float = 1e-6) -> RealJordanForm:
    if method != "jordan":
        return identity_structure(sys.n, sys.A)
    try:
        return real_jordan_form(sys.A, cluster_tol)
    except DecompositionError as exc:
        log.warning("falling back to a single block: %s", exc)
        return identity_structure(sys.n, sys.A)


def slack_for(sys: DelaySystem, N: int, K_prev, jordan: RealJordanForm, method: str) -> SlackStructure:
    if method in PRESETS:
        return SlackStructure.preset(method, sys.n, N)
    eps = synthesis_epsilons(jordan, sys.A, sys.B, K_prev, sys.C, sys.A1, N)
    if method == "full":
        return SlackStructure.unstructured(eps[:, 0], sys.n)
    return SlackStructure.structured(jordan, eps)


def _block_gap(M, jordan: RealJordanForm) -> float:
    M = jordan.transform(M)
    nrm = np.linalg.norm(M)
    return float(np.linalg.norm(M[~jordan.block_pattern()]) / nrm) if nrm > 0 else 0.0


def iterate(sys: DelaySystem, N: int, h: float, K0, l_max: int = 3, mode: str = "ssf",
            method: str = "jordan", jordan: RealJordanForm | None = None,
            options: SolverOptions | None = None) -> SynthesisResult:
    """``l_max`` rounds of freeze-``F_W``/solve at a fixed delay.

    Stops early on the first infeasible round (the next ``F_W`` would be unchanged).
    The returned gain is the last feasible one that the spectral oracle confirms.

    Raises
    ------
    InfeasibleAtH
        If no round yields an oracle-confirmed gain.
    SolverFailure
        If the backend breaks down on the first round.
    """
    if mode not in ("ssf", "sof"):
        raise ValueError(f"unknown mode {mode!r}")
    if method not in SLACK_METHODS:
        raise ValueError(f"unknown slack method {method!r}")
    jordan = jordan or structure_for(sys, method)
    if method in PRESETS:
        l_max = 1  # frozen multipliers: further rounds repeat the same LMI
    K_prev = np.asarray(K0, dtype=float).reshape(sys.m, sys.p)
    trace, accepted = [], []
    for step in range(1, l_max + 1):
        slack = slack_for(sys, N, K_prev, jordan, method)
        build = ssf_problem if mode == "ssf" else sof_problem
        res = solve(build(sys, N, h, slack.F, jordan), options)
        rec = RoundRecord(step, h, res.status, slack.eps, np.nan, res.iterations)
        trace.append(rec)
        if res.status == "failed" and step == 1:
            raise SolverFailure(f"synthesis LMI at h={h:g}: {res.message}")
        if not res.feasible:
            break
        K = recover_gain(sys, res.assignment, jordan, mode)
        rec.K = K
        row = synthesis_row(jordan, sys.A, sys.delayed_matrix(K), N)
        rec.mismatch = frobenius_mismatch(row, slack.F)
        accepted.append((K, res.assignment))
        K_prev = K
    for K, cert in reversed(accepted):
        if not np.all(np.isfinite(K)):
            continue
        a = sys.abscissa(K, h)
        if a < 0:
            cond = np.linalg.cond(cert["X"]) if mode == "ssf" else abs(1.0 / cert["sigma"][0, 0])
            return SynthesisResult(K=K, certificate=cert, h_achieved=h, mode=mode, N=N,
                                   method=method, trace=trace, path=[(h, K)], abscissa=a,
                                   conditioning=float(cond),
                                   structure_gap=_block_gap(sys.B @ K @ sys.C, jordan))
        log.warning("oracle rejected a certified gain at h=%g (abscissa %.3g)", h, a)
    raise InfeasibleAtH(f"no feasible round at h={h:g} (statuses {[r.status for r in trace]})", trace)


def path_follow(sys: DelaySystem, N: int, K0=None, h0: float = 0.1, dh0: float = 0.1,
                dh_min: float = 1e-3, mode: str = "ssf", method: str = "jordan",
                l_max: int = 3, h_cap: float = 100.0, cluster_tol: float = 1e-6,
                options: SolverOptions | None = None) -> SynthesisResult:
    """Ramp the delay from ``h0`` while the iterated LMI stays feasible.

    After a failure at ``h + dh`` the step is halved and retried from the last accepted
    delay with the last accepted gain; the search ends when ``dh < dh_min`` or the
    cap is reached.

    Raises
    ------
    NoProgress
        If even ``h0`` cannot be certified.
    """
    if K0 is None:
        if not sys.is_state_feedback:
            raise ValueError("output feedback needs an explicit K0 (see sof_restarts)")
        K0 = initial_gain(sys.A + (sys.A1 if sys.A1 is not None else 0), sys.B, options) @ \
            np.linalg.pinv(sys.C)
    jordan = structure_for(sys, method, cluster_tol)
    kw = dict(l_max=l_max, mode=mode, method=method, jordan=jordan, options=options)
    try:
        best = iterate(sys, N, min(h0, h_cap), K0, **kw)
    except InfeasibleAtH as exc:
        raise NoProgress(f"no certified gain at the starting delay h0={h0:g}") from exc
    trace, path = list(best.trace), list(best.path)
    h, dh = best.h_achieved, dh0
    while dh >= dh_min and h < h_cap:
        h_try = min(h + dh, h_cap)
        try:
            res = iterate(sys, N, h_try, best.K, **kw)
        except InfeasibleAtH as exc:
            trace.extend(exc.trace)
            dh *= 0.5
            continue
        except SolverFailure as exc:
            log.warning("treating a solver breakdown as a failed step: %s", exc)
            dh *= 0.5
            continue
        trace.extend(res.trace)
        path.extend(res.path)
        best, h = res, h_try
        log.debug("%s/%s N=%d: certified h=%.4f", mode, method, N, h)
    best.trace, best.path = trace, path
    return best


def fixed_epsilon_synthesis(sys: DelaySystem, N: int, preset: str = "eps1", **kwargs) -> SynthesisResult:
    """Path-following with a frozen unstructured multiplier row (no per-step refit)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return path_follow(sys, N, method=preset, **kwargs)


def random_output_gains(sys: DelaySystem, count: int, seed: int = 0, scale: float = 1.0,
                        max_draws: int = 10000) -> list:
    """Up to ``count`` random gains with ``A + A1 + B K C`` Hurwitz."""
    rng = np.random.default_rng(seed)
    A0 = sys.A + (sys.A1 if sys.A1 is not None else 0)
    out = []
    for _ in range(max_draws):
        K = scale * rng.standard_normal((sys.m, sys.p))
        if np.max(np.linalg.eigvals(A0 + sys.B @ K @ sys.C).real) < 0:
            out.append(K)
            if len(out) == count:
                break
    return out


def sof_restarts(sys: DelaySystem, N: int, restarts: int = 10, seed: int = 0,
                 K0=None, **kwargs) -> SynthesisResult:
    """Output-feedback path-following from ``K0`` or from the best of random stabilizing starts."""
    starts = [np.asarray(K0, dtype=float)] if K0 is not None else random_output_gains(sys, restarts, seed)
    if not starts:
        raise NotStabilizable("no stabilizing static output gain found among random draws")
    best, last_err = None, None
    for K in starts:
        try:
            res = path_follow(sys, N, K0=K, mode="sof", **kwargs)
        except NoProgress as exc:
            last_err = exc
            continue
        if best is None or res.h_achieved > best.h_achieved:
            best = res
    if best is None:
        raise NoProgress(f"no restart made progress: {last_err}")
    return best
