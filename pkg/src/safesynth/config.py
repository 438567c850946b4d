"""Problem configuration: flat key-value files with dotted section keys.

Grammar (one `key = value` pair per line, `#` starts a comment):

    system = dcdc | spiral | inline
    system.dim = 2
    system.rhs = spiral                # named nonlinear field, or
    system.A.1 = a b; c d              # switched linear modes A.1, A.2, ...
    system.b = x y
    system.inputs = -0.2; -0.1; 0.0    # one input vector per ';' group
    system.w = 0.001 0.001             # disturbance bound per dimension
    system.L = rows                    # growth matrix (shared), or system.L.<k>
    system.periodic = 0 6.283...       # period per dimension, 0 = aperiodic
    Y.lower / Y.upper                  # global safe box
    T.lower / T.upper                  # target box (default: Y)
    obstacle.<k>.lower / .upper        # boxes subtracted from T
    eta1, tau1, layers, substeps, mode, seed

Vectors are whitespace-separated decimals; matrices separate rows with ';'.
Built-in systems pre-populate every key; file entries override them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .benchmarks import BUILTIN_DEFAULTS, named_rhs
from .dynamics import ControlSystem
from .errors import ConfigError
from .grid import LayerStack, SafeRegion

_KEY_PATTERNS = [
    r"name", r"system", r"system\.dim", r"system\.rhs", r"system\.inputs",
    r"system\.A\.\d+", r"system\.b", r"system\.w", r"system\.L",
    r"system\.L\.\d+", r"system\.periodic",
    r"Y\.lower", r"Y\.upper", r"T\.lower", r"T\.upper",
    r"obstacle\.\d+\.lower", r"obstacle\.\d+\.upper",
    r"eta1", r"tau1", r"layers", r"substeps", r"mode", r"seed",
]
_KEY_RE = re.compile("^(" + "|".join(_KEY_PATTERNS) + ")$")


def parse_kv(text: str) -> Dict[str, str]:
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


def _vec(kv, key, dim=None):
    try:
        v = np.array([float(tok) for tok in kv[key].split()])
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    if dim is not None and v.size != dim:
        raise ConfigError(f"{key}: expected {dim} numbers, got {v.size}")
    return v


def _mat(kv, key, dim):
    rows = [r.strip() for r in kv[key].split(";")]
    try:
        m = np.array([[float(tok) for tok in r.split()] for r in rows])
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    if m.shape != (dim, dim):
        raise ConfigError(f"{key}: expected a {dim}x{dim} matrix, got {m.shape}")
    return m


def _int(kv, key, minimum=None):
    try:
        v = int(kv[key])
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {kv[key]!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}")
    return v


def _float(kv, key):
    try:
        return float(kv[key])
    except ValueError:
        raise ConfigError(f"{key}: not a number: {kv[key]!r}") from None


def growth_from_linear(a: np.ndarray) -> np.ndarray:
    """Growth matrix of a linear mode: keep the diagonal, take magnitudes
    off-diagonal."""
    g = np.abs(a)
    np.fill_diagonal(g, np.diag(a))
    return g


@dataclass
class ProblemConfig:
    name: str
    system: ControlSystem
    stack: LayerStack
    region: SafeRegion
    mode: str
    seed: int
    substeps: int
    kv: Dict[str, str] = field(default_factory=dict, repr=False)

    def restack(self, num_layers: int) -> LayerStack:
        """Same grid geometry with a different number of layers."""
        return LayerStack(self.stack.alpha, self.stack.beta, self.stack.eta1,
                          self.stack.tau1, num_layers,
                          periodic=self.stack.periodic)


def parse_mode(token: str, num_layers: int) -> Tuple[str, Optional[int]]:
    """Mode tokens: lazy, eager, single:<l>, optionally lazy:<L>/eager:<L>."""
    parts = token.split(":")
    kind = parts[0]
    if kind not in ("lazy", "eager", "single"):
        raise ConfigError(f"mode: unknown mode {token!r}")
    if len(parts) == 1:
        if kind == "single":
            raise ConfigError("mode: single requires a layer, e.g. single:1")
        return kind, None
    if len(parts) != 2:
        raise ConfigError(f"mode: malformed token {token!r}")
    try:
        l = int(parts[1])
    except ValueError:
        raise ConfigError(f"mode: malformed layer in {token!r}") from None
    if l < 1 or (kind == "single" and l > num_layers):
        raise ConfigError(f"mode: layer {l} out of range in {token!r}")
    return kind, l


def _build_system(kv) -> ControlSystem:
    dim = _int(kv, "system.dim", minimum=1)
    disturbance = _vec(kv, "system.w", dim) if "system.w" in kv else None

    periodic = None
    if "system.periodic" in kv:
        vals = _vec(kv, "system.periodic", dim)
        periodic = [None if p == 0 else float(p) for p in vals]

    mode_keys = sorted(k for k in kv if re.match(r"system\.A\.\d+$", k))
    if mode_keys:
        expect = [f"system.A.{i}" for i in range(1, len(mode_keys) + 1)]
        if mode_keys != expect:
            raise ConfigError("system.A.<k>: modes must be numbered 1..K "
                              f"without gaps, got {mode_keys}")
        if "system.rhs" in kv:
            raise ConfigError("system.rhs: cannot combine a named right-hand "
                              "side with linear modes system.A.<k>")
        mats = [_mat(kv, k, dim) for k in mode_keys]
        b = _vec(kv, "system.b", dim) if "system.b" in kv else np.zeros(dim)
        arr = np.stack(mats)

        def rhs(x, u, _arr=arr, _b=b):
            a = _arr[int(round(u[0])) - 1]
            return x @ a.T + _b

        inputs = [np.array([float(k)]) for k in range(1, len(mats) + 1)]
        growths = [growth_from_linear(a) for a in mats]
    elif "system.rhs" in kv:
        rhs = named_rhs(kv["system.rhs"], dim)
        if "system.inputs" not in kv:
            raise ConfigError("system.inputs: required for a named "
                              "right-hand side")
        groups = [g.strip() for g in kv["system.inputs"].split(";") if g.strip()]
        try:
            inputs = [np.array([float(tok) for tok in g.split()])
                      for g in groups]
        except ValueError as e:
            raise ConfigError(f"system.inputs: {e}") from None
        growths = None
    else:
        raise ConfigError("system: inline systems need either system.A.<k> "
                          "matrices or a named system.rhs")

    # explicit growth matrices override any derived ones
    per_input = sorted(k for k in kv if re.match(r"system\.L\.\d+$", k))
    if per_input:
        expect = [f"system.L.{i}" for i in range(1, len(inputs) + 1)]
        if per_input != expect:
            raise ConfigError(f"system.L.<k>: need one matrix per input "
                              f"1..{len(inputs)}, got {per_input}")
        growths = [_mat(kv, k, dim) for k in per_input]
    elif "system.L" in kv:
        growths = [_mat(kv, "system.L", dim)]
    if growths is None:
        raise ConfigError("system.L: growth matrices are required for a "
                          "named right-hand side")

    return ControlSystem(dim, inputs, rhs, disturbance=disturbance,
                         growth_matrices=growths, periodic=periodic,
                         name=kv.get("name", ""))


def _build_region(kv, stack: LayerStack) -> SafeRegion:
    t_lo = _vec(kv, "T.lower", stack.dim) if "T.lower" in kv else stack.alpha
    t_hi = _vec(kv, "T.upper", stack.dim) if "T.upper" in kv else stack.beta
    pad = 1e-9 * np.maximum(1.0, np.abs(stack.beta - stack.alpha))
    if np.any(t_lo < stack.alpha - pad) or np.any(t_hi > stack.beta + pad):
        raise ConfigError("T.lower/T.upper: target box must lie inside Y")
    obstacles = []
    nums = sorted({int(m.group(1)) for k in kv
                   if (m := re.match(r"obstacle\.(\d+)\.(lower|upper)$", k))})
    for k in nums:
        lo_key, hi_key = f"obstacle.{k}.lower", f"obstacle.{k}.upper"
        if lo_key not in kv or hi_key not in kv:
            raise ConfigError(f"obstacle.{k}: needs both .lower and .upper")
        obstacles.append((_vec(kv, lo_key, stack.dim),
                          _vec(kv, hi_key, stack.dim)))
    return SafeRegion(t_lo, t_hi, obstacles)


def assemble(kv: Dict[str, str]) -> ProblemConfig:
    kv = dict(kv)
    selector = kv.pop("system", "inline")
    if selector != "inline":
        if selector not in BUILTIN_DEFAULTS:
            raise ConfigError(f"system: unknown system {selector!r} "
                              f"(builtin: {sorted(BUILTIN_DEFAULTS)}, or inline)")
        merged = BUILTIN_DEFAULTS[selector]()
        merged.update(kv)
        kv = merged

    for key in ("Y.lower", "Y.upper", "eta1", "tau1", "layers"):
        if key not in kv:
            raise ConfigError(f"{key}: required")

    system = _build_system(kv)
    stack = LayerStack(
        _vec(kv, "Y.lower", system.dim), _vec(kv, "Y.upper", system.dim),
        _vec(kv, "eta1", system.dim), _float(kv, "tau1"),
        _int(kv, "layers", minimum=1), periodic=system.periodic)
    region = _build_region(kv, stack)
    mode = kv.get("mode", "lazy")
    parse_mode(mode, stack.num_layers)
    return ProblemConfig(
        name=kv.get("name", selector),
        system=system, stack=stack, region=region, mode=mode,
        seed=_int(kv, "seed") if "seed" in kv else 0,
        substeps=_int(kv, "substeps", minimum=1) if "substeps" in kv else 10,
        kv=kv)


def load_config(path, overrides: Optional[Dict[str, str]] = None) -> ProblemConfig:
    with open(path) as fh:
        kv = parse_kv(fh.read())
    if overrides:
        kv.update(overrides)
    return assemble(kv)
