"""SDPA sparse format (``.dat-s``) export, parse-back and an independent CVXOPT solve.

Scalarization: the free entries of every decision variable, in declaration order,
form the SDPA vector ``y``. A margined constraint ``E(y) <= -delta_c I`` becomes the
block ``sum_k y_k (-E_k) - (E_0 + delta_c I) >= 0`` and ``E(y) >= delta_c I`` becomes
``sum_k y_k E_k - (delta_c I - E_0) >= 0`` (SDPA convention ``sum y_k F_k - F_0 >= 0``).
Runs of 1x1 constraints are packed into one diagonal (negative-size) block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lmi import SdpProblem


@dataclass
class SdpaData:
    block_struct: list  # positive: dense symmetric block, negative: diagonal block
    c: np.ndarray
    F: list  # F[k][b] dense matrix, k = 0..m

    @property
    def m(self) -> int:
        return len(self.c)

    def block_sizes(self) -> list:
        return [abs(b) for b in self.block_struct]

    def equals(self, other: "SdpaData") -> bool:
        if self.block_struct != other.block_struct or not np.array_equal(self.c, other.c):
            return False
        return all(np.array_equal(a, b) for Fa, Fb in zip(self.F, other.F) for a, b in zip(Fa, Fb)) \
            and len(self.F) == len(other.F)


def to_sdpa(problem: SdpProblem) -> SdpaData:
    bases = []
    for name, v in problem.variables.items():
        bases.extend((name, B) for B in v.basis())
    m = len(bases)

    # Each constraint contributes (F0, [F1..Fm]) for its own sub-block.
    pieces = []
    for con in problem.constraints:
        k = con.expr.shape[0]
        need = problem.margin * con.weight
        lin = [con.expr.linear_part(problem.variables[name], B) for name, B in bases]
        lin = [0.5 * (L + L.T) for L in lin]
        E0 = 0.5 * (con.expr.constant + con.expr.constant.T)
        if con.sense == "neg":
            F0 = E0 + need * np.eye(k)
            Fk = [-L for L in lin]
        else:
            F0 = need * np.eye(k) - E0
            Fk = lin
        pieces.append((k, F0, Fk))

    block_struct, F = [], [[] for _ in range(m + 1)]
    i = 0
    while i < len(pieces):
        if pieces[i][0] == 1:
            j = i
            while j < len(pieces) and pieces[j][0] == 1:
                j += 1
            run = pieces[i:j]
            block_struct.append(-len(run))
            F[0].append(np.diag([p[1][0, 0] for p in run]))
            for k in range(m):
                F[k + 1].append(np.diag([p[2][k][0, 0] for p in run]))
            i = j
        else:
            k_, F0, Fk = pieces[i]
            block_struct.append(k_)
            F[0].append(F0)
            for k in range(m):
                F[k + 1].append(Fk[k])
            i += 1
    return SdpaData(block_struct, np.zeros(m), F)


def write_sdpa(data: SdpaData, comment: str = "feasibility problem") -> str:
    lines = [f'"{comment}"', f"{data.m} = mDIM", f"{len(data.block_struct)} = nBLOCK",
             " ".join(str(b) for b in data.block_struct) + " = bLOCKsTRUCT",
             "{" + ", ".join(repr(float(x)) for x in data.c) + "}"]
    for k, blocks in enumerate(data.F):
        for b, (size, Fb) in enumerate(zip(data.block_struct, blocks), start=1):
            if size < 0:
                idx = [(i, i) for i in range(-size)]
            else:
                idx = [(i, j) for i in range(size) for j in range(i, size)]
            for i, j in idx:
                val = Fb[i, j]
                if val != 0.0:
                    lines.append(f"{k} {b} {i + 1} {j + 1} {float(val)!r}")
    return "\n".join(lines) + "\n"


def export_conic(problem: SdpProblem, comment: str = "feasibility problem") -> str:
    return write_sdpa(to_sdpa(problem), comment)


def _strip(line: str) -> str:
    for ch in "{}(),":
        line = line.replace(ch, " ")
    return line.strip()


def read_sdpa(text: str) -> SdpaData:
    """Parse an SDPA sparse file as written by :func:`write_sdpa` (or any conforming writer)."""
    lines = [ln for ln in text.splitlines() if ln.strip() and ln.lstrip()[0] not in '"*']
    it = iter(lines)
    m = int(_strip(next(it)).split()[0])
    nblock = int(_strip(next(it)).split()[0])
    struct_tokens = _strip(next(it)).split()
    block_struct = [int(float(t)) for t in struct_tokens[:nblock]]
    c_tokens = []
    while len(c_tokens) < m:
        c_tokens += _strip(next(it)).split()
    if m == 0:
        next(it, None)  # empty objective line "{}"
    c = np.array([float(t) for t in c_tokens[:m]])
    F = [[np.zeros((abs(s), abs(s))) for s in block_struct] for _ in range(m + 1)]
    for ln in it:
        tok = _strip(ln).split()
        if len(tok) < 5:
            continue
        k, b, i, j = (int(t) for t in tok[:4])
        val = float(tok[4])
        F[k][b - 1][i - 1, j - 1] = val
        F[k][b - 1][j - 1, i - 1] = val
    return SdpaData(block_struct, c, F)


def solve_sdpa(data: SdpaData) -> str:
    """Feasibility verdict (``feasible``/``infeasible``/``unknown``) from CVXOPT's own SDP solver."""
    from cvxopt import matrix, solvers

    m = data.m
    if m == 0:
        ok = all(np.linalg.eigvalsh(-F0).min() >= 0 for F0 in data.F[0] if F0.size)
        return "feasible" if ok else "infeasible"
    Gl_rows, hl, Gs, hs = [], [], [], []
    for b, size in enumerate(data.block_struct):
        if size < 0:
            for i in range(-size):
                Gl_rows.append([-data.F[k + 1][b][i, i] for k in range(m)])
                hl.append(-data.F[0][b][i, i])
        else:
            cols = [(-data.F[k + 1][b]).flatten(order="F") for k in range(m)]
            Gs.append(matrix(np.column_stack(cols)))
            hs.append(matrix(-data.F[0][b]))
    kw = {}
    if Gl_rows:
        kw["G"] = matrix(np.array(Gl_rows, dtype=float))
        kw["h"] = matrix(np.array(hl, dtype=float))
    solvers.options["show_progress"] = False
    sol = solvers.sdp(matrix(np.asarray(data.c, dtype=float)), Gs=Gs, hs=hs, **kw)
    status = sol["status"]
    if status == "optimal":
        return "feasible"
    if status == "primal infeasible":
        return "infeasible"
    return "unknown"
