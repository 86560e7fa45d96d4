"""Dense matrix helpers: block assembly, selectors and clustered real Jordan forms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DecompositionError, DimensionMismatch

DEFAULT_CLUSTER_TOL = 1e-6
DEFAULT_COND_CAP = 1e8


def as_matrix(a, name="matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def he(m: np.ndarray) -> np.ndarray:
    return m + m.T


def selector(span: range, n: int) -> np.ndarray:
    """Row selector ``[0 I 0]`` picking the coordinates in ``span`` (0-based) out of ``n``."""
    span = range(span.start, span.stop)
    if span.start < 0 or span.stop > n or len(span) == 0:
        raise DimensionMismatch(f"selector range {span} not within 0..{n}")
    J = np.zeros((len(span), n))
    J[np.arange(len(span)), np.arange(span.start, span.stop)] = 1.0
    return J


def block_assemble(layout) -> np.ndarray:
    """Concatenate a grid of blocks.

    ``layout`` is a list of rows; each entry is an array, a nested grid (assembled
    first), or ``None``/``0`` for a zero block whose size is inferred from the other
    blocks in its row and column.
    """
    if len(layout) == 0:
        return np.zeros((0, 0))
    grid = []
    for row in layout:
        cells = []
        for cell in row:
            if cell is None or (np.isscalar(cell) and cell == 0):
                cells.append(None)
            elif isinstance(cell, (list, tuple)) and cell and isinstance(cell[0], (list, tuple)) \
                    and not np.isscalar(cell[0][0]):
                cells.append(block_assemble(cell))
            else:
                cells.append(np.atleast_2d(np.asarray(cell, dtype=float)))
        grid.append(cells)
    ncols = len(grid[0])
    if any(len(r) != ncols for r in grid):
        raise DimensionMismatch("rows of the block grid have different lengths")

    heights = []
    for i, row in enumerate(grid):
        hs = {c.shape[0] for c in row if c is not None}
        if len(hs) != 1:
            raise DimensionMismatch(f"block row {i} has inconsistent or undetermined height {sorted(hs)}")
        heights.append(hs.pop())
    widths = []
    for j in range(ncols):
        ws = {row[j].shape[1] for row in grid if row[j] is not None}
        if len(ws) != 1:
            raise DimensionMismatch(f"block column {j} has inconsistent or undetermined width {sorted(ws)}")
        widths.append(ws.pop())
    return np.block([[c if c is not None else np.zeros((heights[i], widths[j]))
                      for j, c in enumerate(row)] for i, row in enumerate(grid)])


def block_diag(*blocks) -> np.ndarray:
    return sla.block_diag(*[np.atleast_2d(b) for b in blocks]) if blocks else np.zeros((0, 0))


@dataclass(frozen=True)
class JordanGroup:
    """One clustered eigenvalue group occupying ``span`` of the transformed coordinates."""

    eigenvalues: tuple
    span: range

    @property
    def size(self) -> int:
        return len(self.span)

    @property
    def center(self) -> complex:
        return complex(np.mean(self.eigenvalues))


@dataclass(frozen=True)
class RealJordanForm:
    T: np.ndarray
    T_inv: np.ndarray
    groups: tuple
    condition: float
    residual: float = 0.0
    _blocks: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def sizes(self) -> list:
        return [g.size for g in self.groups]

    @property
    def selectors(self) -> list:
        return [selector(g.span, self.n) for g in self.groups]

    @property
    def blocks(self) -> list:
        return list(self._blocks)

    def transform(self, M) -> np.ndarray:
        """Similarity ``T^-1 M T``."""
        return self.T_inv @ np.asarray(M, dtype=float) @ self.T

    def block_pattern(self) -> np.ndarray:
        """Boolean mask of the block-diagonal sparsity pattern."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        for g in self.groups:
            mask[g.span.start:g.span.stop, g.span.start:g.span.stop] = True
        return mask


def identity_structure(n: int, A=None) -> RealJordanForm:
    """Trivial structure: ``T = I`` and a single group covering every coordinate."""
    eig = tuple(np.linalg.eigvals(A)) if A is not None else ()
    blocks = (np.asarray(A, dtype=float),) if A is not None else (np.eye(n),)
    return RealJordanForm(T=np.eye(n), T_inv=np.eye(n),
                          groups=(JordanGroup(eig, range(0, n)),), condition=1.0,
                          _blocks=blocks)


def _cluster(eigs: np.ndarray, tol: float) -> list:
    # Conjugate pairs share a key so they always land in the same real block.
    keys = np.column_stack([eigs.real, np.abs(eigs.imag)])
    n = len(eigs)
    label = list(range(n))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.hypot(*(keys[i] - keys[j])) <= tol:
                label[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = [eigs[idx] for idx in groups.values()]
    clusters.sort(key=lambda c: (-np.mean(c.real), -np.mean(np.abs(c.imag))))
    return clusters


def real_jordan_form(A, cluster_tol: float = DEFAULT_CLUSTER_TOL,
                     cond_cap: float = DEFAULT_COND_CAP) -> RealJordanForm:
    """Block-diagonalize ``A`` by a real similarity, one block per eigenvalue cluster.

    Eigenvalues closer than ``cluster_tol * max(1, rho(A))`` are merged (single
    linkage), complex pairs are kept together as real blocks, and groups are ordered
    by decreasing real part. The real Schur form is reordered group by group and the
    off-diagonal coupling is removed with Sylvester solves, so exact Jordan chains
    are never formed; block traces and spectral projectors are the same as for the
    true Jordan form.

    Raises
    ------
    DecompositionError
        If the condition number of ``T`` exceeds ``cond_cap``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")

    U, Z = sla.schur(A, output="real")
    eigs = np.linalg.eigvals(U)
    scale = max(1.0, float(np.max(np.abs(eigs))) if n else 1.0)
    clusters = _cluster(eigs, cluster_tol * scale)
    centers = [complex(c.real.mean(), np.abs(c.imag).mean()) for c in clusters]

    # Bring each cluster to the top of the trailing block in turn.
    sizes = []
    p = 0
    for g in range(len(clusters)):
        remaining = list(range(g, len(clusters)))

        def in_group(x, y=0.0, g=g, remaining=remaining):
            z = complex(x, abs(y))
            return min(remaining, key=lambda r: abs(z - centers[r])) == g

        sub = U[p:, p:]
        U2, Z2, sdim = sla.schur(sub, output="real", sort=in_group)
        U[p:, p:] = U2
        U[:p, p:] = U[:p, p:] @ Z2
        Z[:, p:] = Z[:, p:] @ Z2
        sizes.append(sdim)
        p += sdim
    if sum(sizes) != n or any(s != len(c) for s, c in zip(sizes, clusters)):
        raise DecompositionError("Schur reordering split an eigenvalue cluster")

    # Decouple the quasi-triangular blocks.
    T = Z.copy()
    W = U.copy()
    start = 0
    for s in sizes[:-1]:
        a, b = slice(start, start + s), slice(start + s, n)
        Y = sla.solve_sylvester(W[a, a], -W[b, b], -W[a, b])
        S = np.eye(n)
        S[a, b] = Y
        T = T @ S
        W[a, b] = 0.0
        start += s
    T = T / np.linalg.norm(T, axis=0)
    T_inv = np.linalg.inv(T)
    cond = float(np.linalg.cond(T))
    if not np.isfinite(cond) or cond > cond_cap:
        raise DecompositionError(f"transform condition number {cond:.3g} exceeds cap {cond_cap:.3g}",
                                 condition=cond)

    At = T_inv @ A @ T
    groups, blocks = [], []
    start = 0
    for s, c in zip(sizes, clusters):
        span = range(start, start + s)
        groups.append(JordanGroup(tuple(complex(x) for x in c), span))
        blocks.append(At[start:start + s, start:start + s].copy())
        start += s
    mask = np.zeros((n, n), dtype=bool)
    for g in groups:
        mask[g.span.start:g.span.stop, g.span.start:g.span.stop] = True
    residual = float(np.max(np.abs(At[~mask]))) if (~mask).any() else 0.0
    return RealJordanForm(T=T, T_inv=T_inv, groups=tuple(groups), condition=cond,
                          residual=residual, _blocks=tuple(blocks))
