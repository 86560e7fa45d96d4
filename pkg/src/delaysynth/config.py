"""Problem definitions in TOML.

A config holds the plant matrices as nested arrays, the pipeline ``mode`` and the
algorithm knobs. Example::

    name = "example1"
    mode = "ssf"            # analyze | ssf | sof | fixed-eps
    N = [1, 2, 3]
    A = [[0.2, 0.0], [0.2, -0.2]]
    B = [[-1.0, 0.0], [-1.0, -1.0]]
    K0 = [[1.2, 0.0], [-1.0, 1.8]]

    [algorithm]
    l_max = 3
    h_cap = 100.0
"""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .slack import PRESETS
from .synthesis import SLACK_METHODS, DelaySystem

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("analyze", "ssf", "sof", "fixed-eps")
_TOP_KEYS = {"name", "mode", "N", "A", "B", "C", "A1", "Ad", "K0", "h", "h_range",
             "method", "presets", "algorithm"}


@dataclass(frozen=True)
class AlgorithmConfig:
    l_max: int = 3
    h0: float = 0.1
    dh0: float = 0.1
    dh_min: float = 1e-3
    h_cap: float = 100.0
    delta: float = 1e-7
    solver_tol: float = 1e-7
    analysis_tol: float = 1e-3
    spectral_tol: float = 1e-4
    cluster_tol: float = 1e-6
    restarts: int = 10
    seed: int = 0


@dataclass(frozen=True)
class ProblemConfig:
    A: np.ndarray
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    A1: np.ndarray | None = None
    Ad: np.ndarray | None = None
    K0: np.ndarray | None = None
    name: str = "problem"
    mode: str = "ssf"
    N: tuple = (1,)
    h: float | None = None
    h_range: tuple | None = None
    method: str = "jordan"
    presets: tuple = ("eps1", "eps2")
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)

    def system(self) -> DelaySystem:
        if self.B is None:
            raise ConfigError("mode needs an input matrix", field="B")
        return DelaySystem(self.A, self.B, self.C, self.A1)

    def delayed_matrix(self, K=None) -> np.ndarray:
        """``A_d`` for analysis: given directly, or ``A1 + B K C`` for a gain."""
        if K is None:
            if self.Ad is None:
                raise ConfigError("analysis needs Ad or a gain", field="Ad")
            return self.Ad
        return self.system().delayed_matrix(K)

    def with_algorithm(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, algorithm=dataclasses.replace(self.algorithm, **changes))

    def to_dict(self) -> dict:
        out = {"name": self.name, "mode": self.mode, "N": list(self.N), "method": self.method}
        for key in ("A", "B", "C", "A1", "Ad", "K0"):
            val = getattr(self, key)
            if val is not None:
                out[key] = np.asarray(val).tolist()
        if self.h is not None:
            out["h"] = self.h
        if self.h_range is not None:
            out["h_range"] = list(self.h_range)
        if self.mode == "fixed-eps":
            out["presets"] = list(self.presets)
        out["algorithm"] = dataclasses.asdict(self.algorithm)
        return out


def _line_of(text: str | None, key: str):
    if not text:
        return None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, ln in enumerate(text.splitlines(), start=1):
        if pat.match(ln):
            return i
    return None


def _matrix(raw, key, text, rows=None, cols=None):
    line = _line_of(text, key)
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a nested numeric array (ragged or non-numeric rows)", key, line)
    if M.ndim == 1:
        M = M.reshape(1, -1) if cols is not None and M.size == cols else M.reshape(-1, 1)
    if M.ndim != 2 or M.size == 0:
        raise ConfigError(f"expected a 2-D matrix, got shape {M.shape}", key, line)
    if not np.all(np.isfinite(M)):
        raise ConfigError("matrix has non-finite entries", key, line)
    if rows is not None and M.shape[0] != rows:
        raise ConfigError(f"expected {rows} rows, got {M.shape[0]}", key, line)
    if cols is not None and M.shape[1] != cols:
        raise ConfigError(f"expected {cols} columns, got {M.shape[1]}", key, line)
    return M


def from_dict(data: dict, text: str | None = None) -> ProblemConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key (allowed: {', '.join(sorted(_TOP_KEYS))})", key, _line_of(text, key))
    if "A" not in data:
        raise ConfigError("missing required matrix", "A")
    A = _matrix(data["A"], "A", text)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError(f"A must be square, got {A.shape}", "A", _line_of(text, "A"))

    mode = data.get("mode", "ssf")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}", "mode", _line_of(text, "mode"))

    B = _matrix(data["B"], "B", text, rows=n) if "B" in data else None
    C = _matrix(data["C"], "C", text, cols=n) if "C" in data else None
    A1 = _matrix(data["A1"], "A1", text, rows=n, cols=n) if "A1" in data else None
    Ad = _matrix(data["Ad"], "Ad", text, rows=n, cols=n) if "Ad" in data else None
    if mode != "analyze" and B is None:
        raise ConfigError(f"mode {mode!r} needs an input matrix", "B")
    K0 = None
    if "K0" in data:
        m = B.shape[1] if B is not None else None
        p = C.shape[0] if C is not None else n
        K0 = _matrix(data["K0"], "K0", text, rows=m, cols=p)
    if mode == "analyze" and Ad is None and (B is None or K0 is None):
        raise ConfigError("analysis needs Ad, or B together with a gain K0", "Ad")

    Ns = data.get("N", [1])
    Ns = [Ns] if isinstance(Ns, int) else Ns
    if not isinstance(Ns, list) or not Ns or not all(isinstance(v, int) and not isinstance(v, bool)
                                                     and v >= 0 for v in Ns):
        raise ConfigError("expected a non-negative integer or a list of them", "N", _line_of(text, "N"))

    h = data.get("h")
    if h is not None and (not isinstance(h, (int, float)) or h <= 0):
        raise ConfigError("delay must be a positive number", "h", _line_of(text, "h"))
    h_range = data.get("h_range")
    if h_range is not None:
        if not (isinstance(h_range, list) and len(h_range) == 2 and 0 <= h_range[0] < h_range[1]):
            raise ConfigError("expected [h_lo, h_hi] with 0 <= h_lo < h_hi", "h_range", _line_of(text, "h_range"))
        h_range = tuple(float(v) for v in h_range)

    method = data.get("method", "jordan")
    if method not in SLACK_METHODS:
        raise ConfigError(f"unknown slack method {method!r}", "method", _line_of(text, "method"))
    presets = data.get("presets", ["eps1", "eps2"])
    bad = [p for p in presets if p not in PRESETS]
    if bad:
        raise ConfigError(f"unknown preset {bad[0]!r}; choose from {sorted(PRESETS)}", "presets",
                          _line_of(text, "presets"))

    algo_raw = data.get("algorithm", {})
    if not isinstance(algo_raw, dict):
        raise ConfigError("expected a table", "algorithm", _line_of(text, "algorithm"))
    known = {f.name: f for f in dataclasses.fields(AlgorithmConfig)}
    algo = {}
    for key, val in algo_raw.items():
        if key not in known:
            raise ConfigError(f"unknown knob (allowed: {', '.join(known)})", f"algorithm.{key}", _line_of(text, key))
        typ = int if known[key].type in ("int", int) else float
        if isinstance(val, bool) or not isinstance(val, (int, float)) or (typ is int and not isinstance(val, int)):
            raise ConfigError(f"expected {typ.__name__}", f"algorithm.{key}", _line_of(text, key))
        if typ is float and val <= 0 and key != "seed":
            raise ConfigError("must be positive", f"algorithm.{key}", _line_of(text, key))
        algo[key] = typ(val)
    algorithm = AlgorithmConfig(**algo)
    if algorithm.l_max < 1 or algorithm.restarts < 0:
        raise ConfigError("l_max must be >= 1 and restarts >= 0", "algorithm")

    return ProblemConfig(A=A, B=B, C=C, A1=A1, Ad=Ad, K0=K0, name=str(data.get("name", "problem")),
                         mode=mode, N=tuple(Ns), h=None if h is None else float(h), h_range=h_range,
                         method=method, presets=tuple(presets), algorithm=algorithm)


def loads(text: str) -> ProblemConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        m = re.search(r"line (\d+)", str(exc))
        if line is None and m:
            line = int(m.group(1))
        elif line is None and "end of document" in str(exc):
            line = max(1, len(text.splitlines()))
        raise ConfigError(f"malformed TOML: {exc}", line=line) from exc
    return from_dict(data, text)


def load(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def bundled(name: str) -> ProblemConfig:
    """One of the configs shipped with the package (``example1``, ``example2``)."""
    ref = resources.files("delaysynth") / "configs" / f"{name}.toml"
    if not ref.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return loads(ref.read_text())


def bundled_names() -> list:
    root = resources.files("delaysynth") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))
