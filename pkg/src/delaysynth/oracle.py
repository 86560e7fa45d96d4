"""Independent ground truth for ``x'(t) = A x(t) + A_d x(t - h)``.

Two routes, neither using an LMI: rightmost characteristic roots from Chebyshev
collocation of the infinitesimal generator (refined by Newton on
``det(sI - A - A_d e^{-sh})``), and fixed-step RK4 simulation by the method of steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import SimulationDiverged, UnstableAtZero
from .matrix_core import as_matrix

log = logging.getLogger(__name__)

DEFAULT_ORDER = 30
MAX_ORDER = 480
CONVERGENCE_TOL = 1e-6
DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class SpectralEstimate:
    abscissa: float
    order: int
    roots: tuple
    refined: bool = True

    @property
    def stable(self) -> bool:
        return self.abscissa < 0


def chebyshev_differentiation(M: int):
    """Chebyshev-Gauss-Lobatto nodes ``x_k = cos(pi k / M)`` and the differentiation matrix."""
    k = np.arange(M + 1)
    x = np.cos(np.pi * k / M)
    c = np.where((k == 0) | (k == M), 2.0, 1.0) * (-1.0) ** k
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(M + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def generator_matrix(A, A_d, h: float, order: int) -> np.ndarray:
    """Collocation of the solution-operator generator on ``[-h, 0]`` (node 0 is ``theta = 0``)."""
    n = A.shape[0]
    _, D = chebyshev_differentiation(order)
    L = np.kron(D * (2.0 / h), np.eye(n))
    L[:n, :] = 0.0
    L[:n, :n] = A
    L[:n, -n:] += A_d
    return L


def _newton(A, A_d, h, s, iters=30):
    n = A.shape[0]
    I = np.eye(n)
    s0 = s
    for _ in range(iters):
        e = np.exp(-s * h)
        Delta = s * I - A - A_d * e
        dDelta = I + h * A_d * e
        try:
            step = 1.0 / np.trace(np.linalg.solve(Delta, dDelta))
        except np.linalg.LinAlgError:
            return s, True  # landed exactly on a root
        s = s - step
        if not np.isfinite(s) or abs(s - s0) > 0.5 * (1.0 + abs(s0)):
            return s0, False
        if abs(step) < 1e-13 * (1.0 + abs(s)):
            return s, True
    return s, abs(step) < 1e-9 * (1.0 + abs(s))


def _rightmost(A, A_d, h, order, refine=True, count=None):
    ev = np.linalg.eigvals(generator_matrix(A, A_d, h, order))
    ev = ev[np.isfinite(ev)]
    ev = ev[np.argsort(-ev.real)]
    count = count or max(6, 4 * A.shape[0])
    cand = ev[:count]
    if not refine:
        return cand, True
    out, ok_all = [], True
    for s in cand:
        r, ok = _newton(A, A_d, h, complex(s))
        ok_all &= ok
        out.append(r if ok else s)
    out = np.array(out)
    return out[np.argsort(-out.real)], ok_all


def spectral_abscissa(A, A_d, h: float, order: int = DEFAULT_ORDER) -> SpectralEstimate:
    """Max real part of the characteristic roots, converged in the collocation order.

    The order is doubled until estimates at ``M`` and ``1.5 M`` agree to 1e-6.
    """
    A, A_d = as_matrix(A, "A"), as_matrix(A_d, "A_d")
    if order < 10:
        raise ValueError("collocation order must be >= 10")
    if not np.any(A_d):
        ev = np.linalg.eigvals(A)
        ev = ev[np.argsort(-ev.real)]
        return SpectralEstimate(float(ev[0].real), 0, tuple(ev))
    if h <= 0:
        ev = np.linalg.eigvals(A + A_d)
        ev = ev[np.argsort(-ev.real)]
        return SpectralEstimate(float(ev[0].real), 0, tuple(ev))
    M = order
    while True:
        r1, ok1 = _rightmost(A, A_d, h, M)
        M2 = int(math.ceil(1.5 * M))
        r2, ok2 = _rightmost(A, A_d, h, M2)
        if abs(r1[0].real - r2[0].real) <= CONVERGENCE_TOL:
            return SpectralEstimate(float(r2[0].real), M2, tuple(r2), refined=ok1 and ok2)
        if 2 * M > MAX_ORDER:
            log.warning("spectral abscissa not converged at order %d (h=%g)", M2, h)
            return SpectralEstimate(float(r2[0].real), M2, tuple(r2), refined=False)
        M *= 2


def spectral_max_delay(A, A_d, tol: float = 1e-4, h_cap: float = 100.0, h_lo: float = 1e-3,
                       ratio: float = 1.05) -> float:
    """First delay at which the closed loop loses exponential stability.

    Scans ``h`` geometrically from ``h_lo`` to find the first sign change of the
    abscissa, then bisects it to ``tol``. Returns ``h_cap`` when no loss of stability
    is found up to the cap.
    """
    A, A_d = as_matrix(A, "A"), as_matrix(A_d, "A_d")
    a0 = np.max(np.linalg.eigvals(A + A_d).real)
    if a0 >= 0:
        raise UnstableAtZero(f"delay-free closed loop has abscissa {a0:.4g}")

    def unstable(h):
        return spectral_abscissa(A, A_d, h).abscissa >= 0

    if not np.any(A_d):
        return h_cap if np.max(np.linalg.eigvals(A).real) < 0 else h_lo
    lo = 0.0
    h = h_lo
    while True:
        if unstable(h):
            hi = h
            break
        lo = h
        if h >= h_cap:
            log.info("stable for every tested delay up to h_cap=%g", h_cap)
            return h_cap
        h = min(h * ratio, h_cap)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return lo


@dataclass
class DelayTrajectory:
    t: np.ndarray
    x: np.ndarray
    dt: float
    h: float

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)

    def decay_ratio(self) -> float:
        """``||x(t_end)|| / ||x(0)||``."""
        i0 = int(np.argmin(np.abs(self.t)))
        return float(np.linalg.norm(self.x[-1]) / np.linalg.norm(self.x[i0]))

    def window_peak(self, start: float, stop: float) -> float:
        sel = (self.t >= start) & (self.t <= stop)
        return float(self.norms()[sel].max())


def simulate(A, A_d, h: float, phi, t_end: float, dt: float | None = None) -> DelayTrajectory:
    """RK4 integration of the delay equation by the method of steps.

    ``phi`` is a callable ``phi(t)`` on ``[-h, 0]`` or a constant vector. The step is
    shrunk so that ``h`` is an integer number of steps; delayed values at half steps
    come from cubic interpolation of already-computed history only.
    """
    A, A_d = as_matrix(A, "A"), as_matrix(A_d, "A_d")
    n = A.shape[0]
    if h <= 0:
        raise ValueError("delay must be positive")
    dt = min(h / 20.0, 1e-2) if dt is None else float(dt)
    if dt > h / 10.0 + 1e-15:
        raise ValueError(f"dt={dt:g} must not exceed h/10={h / 10:g}")
    q = int(math.ceil(h / dt - 1e-9))
    dt = h / q
    steps = int(math.ceil(t_end / dt - 1e-9))

    if callable(phi):
        phi_fn = phi
    else:
        const = np.asarray(phi, dtype=float).reshape(n)
        phi_fn = lambda t: const  # noqa: E731

    x = np.empty((q + steps + 1, n))
    for i in range(q + 1):
        x[i] = np.asarray(phi_fn(-h + i * dt), dtype=float).reshape(n)
    t = -h + dt * np.arange(q + steps + 1)

    mid_first = _lagrange_weights(0.5)

    def delayed_half(i):
        # state at t_i + dt/2 - h, between history indices j and j + 1
        j = i - q
        th = t[j] + 0.5 * dt
        if th <= 0:
            return np.asarray(phi_fn(th), dtype=float).reshape(n)
        if j == q:
            # x' jumps at t = 0: keep the stencil on one side of it
            return mid_first @ x[q:q + 4]
        return (-x[j - 1] + 9.0 * x[j] + 9.0 * x[j + 1] - x[j + 2]) / 16.0

    f = lambda y, yd: A @ y + A_d @ yd  # noqa: E731
    for i in range(q, q + steps):
        xd0, xd1 = x[i - q], x[i - q + 1]
        xdh = delayed_half(i)
        y = x[i]
        k1 = f(y, xd0)
        k2 = f(y + 0.5 * dt * k1, xdh)
        k3 = f(y + 0.5 * dt * k2, xdh)
        k4 = f(y + dt * k3, xd1)
        x[i + 1] = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x[i + 1])) or np.linalg.norm(x[i + 1]) > DIVERGENCE_GUARD:
            traj = DelayTrajectory(t[:i + 2], x[:i + 2], dt, h)
            raise SimulationDiverged(f"|x| exceeded {DIVERGENCE_GUARD:g} at t={t[i + 1]:.4g}", traj)
    return DelayTrajectory(t, x, dt, h)


def _lagrange_weights(s: float) -> np.ndarray:
    """Cubic Lagrange weights at offset ``s`` for nodes 0, 1, 2, 3."""
    nodes = np.arange(4.0)
    w = np.ones(4)
    for a in range(4):
        for b in range(4):
            if a != b:
                w[a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
    return w
