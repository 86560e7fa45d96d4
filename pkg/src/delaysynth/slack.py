"""Frobenius-optimal slack multipliers for the relaxed elimination lemma.

A constraint row ``M = [M_1, ..., M_K]`` (``n x n`` blocks) is approximated by a
multiplier row ``F = [E_1, ..., E_K]``. Unstructured multipliers are ``E_i = eps_i * I0``
for a fixed non-singular ``I0``; structured ones are ``E_i = sum_j eps_i(j) J_j^T J_j``
over the eigenvalue groups ``J_j`` of a block-diagonalizing transform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix_core import RealJordanForm, selector

# eps1: eps_1 = eps_2 = eps_3 = 1; eps2: same but eps_2 = 0.5; all later blocks 0.
PRESETS = {
    "eps1": (1.0, 1.0, 1.0),
    "eps2": (1.0, 0.5, 1.0),
}


def split_blocks(M, n: int) -> list:
    M = np.asarray(M, dtype=float)
    if M.shape[0] != n or M.shape[1] % n:
        raise ValueError(f"row of shape {M.shape} is not a sequence of {n}x{n} blocks")
    return [M[:, k * n:(k + 1) * n] for k in range(M.shape[1] // n)]


def frobenius_mismatch(M, F) -> float:
    """``||M - F||_F^2``."""
    D = np.asarray(M, dtype=float) - np.asarray(F, dtype=float)
    return float(np.sum(D * D))


def epsilon_unstructured(blocks, I0=None) -> np.ndarray:
    """``eps_i = tr(I0 A_i^T) / tr(I0 I0^T)``, the minimizer of ``||M - F_eps||_F``."""
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    n = blocks[0].shape[0]
    I0 = np.eye(n) if I0 is None else np.asarray(I0, dtype=float)
    denom = np.trace(I0 @ I0.T)
    if denom <= 0 or abs(np.linalg.det(I0)) == 0:
        raise ValueError("I0 must be non-singular")
    return np.array([np.trace(I0 @ b.T) / denom for b in blocks])


def build_F_eps(eps, I0) -> np.ndarray:
    I0 = np.asarray(I0, dtype=float)
    return np.hstack([e * I0 for e in eps])


def epsilon_structured(jordan: RealJordanForm, blocks_t) -> np.ndarray:
    """Table ``eps[i, j] = tr(J_j At_i J_j^T) / r_j`` for blocks already in the transformed basis."""
    table = np.zeros((len(blocks_t), len(jordan.groups)))
    for i, b in enumerate(blocks_t):
        b = np.asarray(b, dtype=float)
        for j, g in enumerate(jordan.groups):
            s = slice(g.span.start, g.span.stop)
            table[i, j] = np.trace(b[s, s]) / g.size
    return table


def build_F_W(eps_table, spans, n: int) -> np.ndarray:
    """Row ``[E_1 ... E_K]`` with ``E_i = sum_j eps_i(j) J_j^T J_j``."""
    eps_table = np.atleast_2d(np.asarray(eps_table, dtype=float))
    blocks = []
    for row in eps_table:
        E = np.zeros((n, n))
        for e, span in zip(row, spans):
            J = selector(span, n)
            E += e * (J.T @ J)
        blocks.append(E)
    return np.hstack(blocks)


def closed_loop_coupling(A1, B, K, C) -> np.ndarray:
    """Delayed-state matrix of the closed loop: ``A1 + B K C`` (``A1`` may be ``None``)."""
    BKC = np.asarray(B, dtype=float) @ np.asarray(K, dtype=float) @ np.asarray(C, dtype=float)
    return BKC if A1 is None else np.asarray(A1, dtype=float) + BKC


def synthesis_row(jordan: RealJordanForm, A, coupling, N: int) -> np.ndarray:
    """Transformed constraint row ``[I, -T^-1 A T, -T^-1 (A1 + BKC) T, 0_{n, nN}]``."""
    n = jordan.n
    return np.hstack([np.eye(n), -jordan.transform(A), -jordan.transform(coupling),
                      np.zeros((n, n * N))])


def synthesis_epsilons(jordan: RealJordanForm, A, B, K_prev, C=None, A1=None, N: int = 1) -> np.ndarray:
    """Optimal eps table for the synthesis row built from the previous gain.

    Row 0 is all ones, row 1 is ``-tr(J_j At J_j^T) / r_j``, row 2 is
    ``-tr(J_j T^-1 (A1 + B K_prev C) T J_j^T) / r_j`` and the ``N`` remaining rows are 0.
    """
    n = jordan.n
    C = np.eye(n) if C is None else C
    coupling = closed_loop_coupling(A1, B, K_prev, C)
    row = synthesis_row(jordan, A, coupling, N)
    return epsilon_structured(jordan, [row[:, k * n:(k + 1) * n] for k in range(N + 3)])


@dataclass(frozen=True)
class SlackStructure:
    mode: str  # "structured" | "unstructured"
    eps: np.ndarray
    spans: tuple
    n: int
    I0: np.ndarray | None = None

    @classmethod
    def structured(cls, jordan: RealJordanForm, eps_table):
        return cls("structured", np.atleast_2d(np.asarray(eps_table, dtype=float)),
                   tuple(g.span for g in jordan.groups), jordan.n)

    @classmethod
    def unstructured(cls, eps, n: int, I0=None):
        I0 = np.eye(n) if I0 is None else np.asarray(I0, dtype=float)
        return cls("unstructured", np.asarray(eps, dtype=float).reshape(-1, 1),
                   (range(0, n),), n, I0)

    @classmethod
    def preset(cls, name: str, n: int, N: int):
        eps = list(PRESETS[name]) + [0.0] * N
        return cls.unstructured(eps, n)

    @property
    def F(self) -> np.ndarray:
        if self.mode == "unstructured":
            return build_F_eps(self.eps[:, 0], self.I0)
        return build_F_W(self.eps, self.spans, self.n)

    def blocks(self) -> list:
        return split_blocks(self.F, self.n)

