"""Affine matrix expressions in matrix decision variables and margined SDP feasibility.

Strict LMIs ``E < 0`` / ``E > 0`` are posed as ``E <= -delta_c I`` / ``E >= delta_c I``
with ``delta_c = delta * (1 + ||constant(E)||_F)``. The backend maximizes a common
margin ``t * (1 + ||constant||_F)`` inside a unit ball on every decision variable and
declares the problem feasible when ``t >= delta``; for the homogeneous LMIs of the
delay analysis this normalization loses no generality.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

import cvxpy as cp
import numpy as np

from .errors import ShapeMismatch

log = logging.getLogger(__name__)

STRUCTURES = ("full", "symmetric", "blockdiag", "scalar")
DEFAULT_MARGIN = 1e-7
DEFAULT_FEAS_TOL = 1e-7


@dataclass(frozen=True)
class DecisionVar:
    """A matrix decision variable.

    ``blockdiag`` variables are square with free entries only inside the diagonal
    blocks listed in ``pattern``; ``scalar`` variables are ``sigma * I_k``.
    """

    name: str
    shape: tuple
    structure: str = "full"
    pattern: tuple = ()

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "pattern", tuple(int(p) for p in self.pattern))
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if len(shape) != 2 or min(shape) < 0:
            raise ShapeMismatch(f"bad shape {shape} for variable {self.name}")
        if self.structure != "full" and shape[0] != shape[1]:
            raise ShapeMismatch(f"{self.structure} variable {self.name} must be square")
        if self.structure == "blockdiag":
            if sum(self.pattern) != shape[0] or any(p <= 0 for p in self.pattern):
                raise ShapeMismatch(f"pattern {self.pattern} does not tile {shape}")

    @property
    def mask(self) -> np.ndarray:
        r, c = self.shape
        if self.structure == "blockdiag":
            m = np.zeros((r, c), dtype=bool)
            s = 0
            for p in self.pattern:
                m[s:s + p, s:s + p] = True
                s += p
            return m
        return np.ones((r, c), dtype=bool)

    @property
    def n_free(self) -> int:
        r, c = self.shape
        if self.structure == "scalar":
            return 1
        if self.structure == "symmetric":
            return r * (r + 1) // 2
        return int(self.mask.sum())

    def basis(self) -> list:
        """Matrices ``B_k`` with ``V = sum_k y_k B_k`` over the free scalars ``y``."""
        r, c = self.shape
        out = []
        if self.structure == "scalar":
            return [np.eye(r)]
        if self.structure == "symmetric":
            for i in range(r):
                for j in range(i, r):
                    B = np.zeros((r, c))
                    B[i, j] = B[j, i] = 1.0
                    out.append(B)
            return out
        for i, j in zip(*np.nonzero(self.mask)):
            B = np.zeros((r, c))
            B[i, j] = 1.0
            out.append(B)
        return out

    def from_vector(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.structure == "scalar":
            return y[0] * np.eye(self.shape[0])
        M = np.zeros(self.shape)
        if self.structure == "symmetric":
            iu = np.triu_indices(self.shape[0])
            M[iu] = y
            return M + np.triu(M, 1).T
        M[self.mask] = y
        return M

    def check(self, value) -> np.ndarray:
        V = np.atleast_2d(np.asarray(value, dtype=float))
        if V.shape != self.shape:
            raise ShapeMismatch(f"variable {self.name}: expected {self.shape}, got {V.shape}")
        return V


@dataclass(frozen=True)
class Term:
    """``coef * left @ V @ right`` (``V`` transposed if asked), optionally plus its transpose."""

    var: str
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    transpose: bool = False
    symmetrize: bool = False
    coef: float = 1.0

    def apply(self, V):
        X = V.T if self.transpose else V
        if self.left is not None:
            X = self.left @ X
        if self.right is not None:
            X = X @ self.right
        return self.coef * X if self.coef != 1.0 else X

    def scaled(self, a: float) -> "Term":
        return replace(self, coef=self.coef * a)


def _value(term: Term, V):
    X = term.apply(V)
    return X + X.T if term.symmetrize else X


class AffineMatrixExpr:
    """``constant + sum_k term_k(V)`` where every term is linear in one decision variable."""

    def __init__(self, constant, terms=()):
        self.constant = np.atleast_2d(np.asarray(constant, dtype=float))
        self.terms = list(terms)

    @property
    def shape(self):
        return self.constant.shape

    @classmethod
    def zeros(cls, rows, cols=None):
        return cls(np.zeros((rows, rows if cols is None else cols)))

    @classmethod
    def term(cls, var: DecisionVar, left=None, right=None, transpose=False, symmetrize=False):
        left = None if left is None else np.atleast_2d(np.asarray(left, dtype=float))
        right = None if right is None else np.atleast_2d(np.asarray(right, dtype=float))
        r, c = var.shape[::-1] if transpose else var.shape
        rows = left.shape[0] if left is not None else r
        cols = right.shape[1] if right is not None else c
        if (left is not None and left.shape[1] != r) or (right is not None and right.shape[0] != c):
            raise ShapeMismatch(f"coefficients do not conform with variable {var.name} {var.shape}")
        if symmetrize and rows != cols:
            raise ShapeMismatch("symmetrized term must be square")
        return cls(np.zeros((rows, cols)), [Term(var.name, left, right, transpose, symmetrize)])

    def __add__(self, other):
        if not isinstance(other, AffineMatrixExpr):
            other = AffineMatrixExpr(other)
        if other.shape != self.shape:
            raise ShapeMismatch(f"cannot add {self.shape} and {other.shape}")
        return AffineMatrixExpr(self.constant + other.constant, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, AffineMatrixExpr) else -np.asarray(other))

    def __mul__(self, a):
        a = float(a)
        return AffineMatrixExpr(a * self.constant, [t.scaled(a) for t in self.terms])

    __rmul__ = __mul__

    def congruence(self, M) -> "AffineMatrixExpr":
        """``M^T E M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] != self.shape[1] or self.shape[0] != self.shape[1]:
            raise ShapeMismatch(f"congruence {M.shape} does not fit {self.shape}")
        terms = []
        for t in self.terms:
            left = M.T if t.left is None else M.T @ t.left
            right = M if t.right is None else t.right @ M
            terms.append(replace(t, left=left, right=right))
        return AffineMatrixExpr(M.T @ self.constant @ M, terms)

    def he(self) -> "AffineMatrixExpr":
        """``E + E^T``."""
        terms = []
        for t in self.terms:
            if t.symmetrize:
                terms.append(t.scaled(2.0))
            else:
                terms.append(replace(t, symmetrize=True))
        return AffineMatrixExpr(self.constant + self.constant.T, terms)

    @property
    def variables(self) -> set:
        return {t.var for t in self.terms}

    def evaluate(self, assignment: Mapping) -> np.ndarray:
        return evaluate(self, assignment)

    def linear_part(self, var: DecisionVar, B) -> np.ndarray:
        """Value of the terms in ``var`` at ``V = B`` (constant excluded)."""
        out = np.zeros(self.shape)
        for t in self.terms:
            if t.var == var.name:
                out = out + _value(t, B)
        return out

    def is_structurally_symmetric(self, variables: Mapping | None = None) -> bool:
        if not np.allclose(self.constant, self.constant.T, rtol=0, atol=0):
            return False
        for t in self.terms:
            if t.symmetrize:
                continue
            sym_var = variables is not None and variables[t.var].structure in ("symmetric", "scalar")
            if not sym_var:
                return False
            left = t.left if t.left is not None else None
            right = t.right if t.right is not None else None
            if (left is None) != (right is None):
                return False
            if left is not None and not np.array_equal(left, right.T):
                return False
        return True

    def to_cvxpy(self, cvx_vars: Mapping):
        expr = self.constant
        for t in self.terms:
            V = cvx_vars[t.var]
            X = V.T if t.transpose else V
            if t.left is not None:
                X = t.left @ X
            if t.right is not None:
                X = X @ t.right
            if t.coef != 1.0:
                X = t.coef * X
            if t.symmetrize:
                X = X + X.T
            expr = expr + X
        return expr


def evaluate(expr: AffineMatrixExpr, assignment: Mapping) -> np.ndarray:
    out = expr.constant.copy()
    for t in expr.terms:
        if t.var not in assignment:
            raise ShapeMismatch(f"no value assigned to variable {t.var}")
        val = _value(t, np.atleast_2d(np.asarray(assignment[t.var], dtype=float)))
        if val.shape != out.shape:
            raise ShapeMismatch(f"term in {t.var} evaluates to {val.shape}, expected {out.shape}")
        out = out + val
    return out


@dataclass
class Constraint:
    expr: AffineMatrixExpr
    sense: str  # "neg": expr <= -delta I, "pos": expr >= delta I
    name: str = ""

    def __post_init__(self):
        if self.sense not in ("neg", "pos"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if self.expr.shape[0] != self.expr.shape[1]:
            raise ShapeMismatch(f"constraint {self.name} is not square: {self.expr.shape}")

    @property
    def weight(self) -> float:
        return 1.0 + float(np.linalg.norm(self.expr.constant))


@dataclass
class SdpProblem:
    variables: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")

    def add_var(self, name, shape, structure="full", pattern=()) -> DecisionVar:
        if name in self.variables:
            raise ValueError(f"variable {name} declared twice")
        v = DecisionVar(name, tuple(shape), structure, tuple(pattern))
        self.variables[name] = v
        return v

    def add_constraint(self, expr: AffineMatrixExpr, sense: str, name: str = ""):
        unknown = expr.variables - set(self.variables)
        if unknown:
            raise ValueError(f"constraint {name!r} references undeclared variables {sorted(unknown)}")
        self.constraints.append(Constraint(expr, sense, name or f"c{len(self.constraints)}"))

    def negative_definite(self, expr, name=""):
        self.add_constraint(expr, "neg", name)

    def positive_definite(self, expr, name=""):
        self.add_constraint(expr, "pos", name)

    def scaled(self, a: float) -> "SdpProblem":
        """Copy with every constraint expression multiplied by ``a > 0``."""
        if a <= 0:
            raise ValueError("scale must be positive")
        return SdpProblem(dict(self.variables), [Constraint(c.expr * a, c.sense, c.name)
                                                 for c in self.constraints], self.margin)

    def violation(self, assignment: Mapping, margin: float | None = None) -> float:
        """Largest amount by which ``assignment`` misses a margined constraint (<= 0 means satisfied)."""
        margin = self.margin if margin is None else margin
        worst = -np.inf
        for c in self.constraints:
            E = evaluate(c.expr, assignment)
            E = 0.5 * (E + E.T)
            eig = np.linalg.eigvalsh(E)
            need = margin * c.weight
            v = eig[-1] + need if c.sense == "neg" else need - eig[0]
            worst = max(worst, float(v))
        return worst if self.constraints else 0.0


@dataclass(frozen=True)
class SolverOptions:
    solver: str = "CLARABEL"
    fallbacks: tuple = ("SCS",)
    var_bound: float = 1.0
    margin_cap: float = 1.0
    feas_tol: float = DEFAULT_FEAS_TOL
    margin: float | None = None  # overrides the problem's own delta when set
    verbose: bool = False


@dataclass
class SolverResult:
    status: str  # feasible | infeasible | inaccurate | failed
    assignment: dict
    violation: float
    margin: float = float("nan")
    iterations: int = 0
    solver: str = ""
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _cvx_var(v: DecisionVar):
    r, c = v.shape
    if v.structure == "symmetric":
        return cp.Variable((r, c), symmetric=True, name=v.name)
    if v.structure == "scalar":
        s = cp.Variable(name=v.name)
        return s * np.eye(r), s
    if v.structure == "blockdiag":
        blocks = [cp.Variable((p, p), name=f"{v.name}_{i}") for i, p in enumerate(v.pattern)]
        rows = []
        for i, pi in enumerate(v.pattern):
            rows.append([blocks[i] if i == j else np.zeros((pi, pj)) for j, pj in enumerate(v.pattern)])
        return cp.bmat(rows) if len(blocks) > 1 else blocks[0], blocks
    return cp.Variable((r, c), name=v.name)


def solve(problem: SdpProblem, options: SolverOptions | None = None) -> SolverResult:
    """Decide margined feasibility of ``problem``.

    Deterministic for identical inputs and options. A solver crash on every backend
    yields status ``failed``; it is never reported as infeasible.
    """
    opts = options or SolverOptions()
    if not problem.constraints:
        zero = {name: np.zeros(v.shape) for name, v in problem.variables.items()}
        return SolverResult("feasible", zero, 0.0, margin=np.inf)

    cvx, raw = {}, {}
    for name, v in problem.variables.items():
        out = _cvx_var(v)
        if isinstance(out, tuple):
            cvx[name], raw[name] = out
        else:
            cvx[name] = raw[name] = out
    t = cp.Variable(name="margin")
    cons = [t <= opts.margin_cap]
    for name, v in problem.variables.items():
        if v.shape[0] * v.shape[1] == 0:
            continue
        if v.structure == "scalar":
            cons.append(cp.abs(raw[name]) <= opts.var_bound)
        else:
            cons.append(cp.norm(cvx[name], "fro") <= opts.var_bound)
    for c in problem.constraints:
        E = c.expr.to_cvxpy(cvx)
        E = 0.5 * (E + E.T)
        k = c.expr.shape[0]
        if c.sense == "neg":
            cons.append(E + (c.weight * t) * np.eye(k) << 0)
        else:
            cons.append(E - (c.weight * t) * np.eye(k) >> 0)
    prob = cp.Problem(cp.Maximize(t), cons)

    last_err = ""
    for solver in (opts.solver, *opts.fallbacks):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # "solution may be inaccurate"
                prob.solve(solver=solver, verbose=opts.verbose)
        except (cp.error.SolverError, ValueError, ArithmeticError) as exc:
            last_err = f"{solver}: {exc}"
            log.debug("solver %s failed: %s", solver, exc)
            continue
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and t.value is not None:
            break
        last_err = f"{solver}: status {prob.status}"
    else:
        return SolverResult("failed", {}, np.inf, message=last_err)

    iters = int(getattr(prob.solver_stats, "num_iters", 0) or 0)
    assignment = {}
    for name, v in problem.variables.items():
        val = cvx[name].value if v.shape[0] * v.shape[1] else np.zeros(v.shape)
        assignment[name] = np.zeros(v.shape) if val is None else np.atleast_2d(np.asarray(val, dtype=float))
    tval = float(t.value)
    delta = problem.margin if opts.margin is None else opts.margin
    violation = problem.violation(assignment, delta)
    if tval < delta:
        status = "infeasible"
    elif violation <= opts.feas_tol:
        status = "feasible"
    else:
        status = "inaccurate"
    return SolverResult(status, assignment, violation, margin=tval, iterations=iters,
                        solver=solver, message=prob.status)
