"""Sparse ReLU networks with a summed max-norm budget and an entrywise bound.

A network with height ``N_h`` is ``A_{N_h} o relu o ... o relu o A_1`` with
affine maps ``A_l(a) = W_l a + b_l``. The class constraint is

    max_l max(|W_l|_max, |b_l|_max) <= B
    sum_l (|W_l|_max + |b_l|_max)   <= S

where ``|.|_max`` is the largest absolute entry. No ReLU is applied to the
raw input: on the unit cube it would be the identity anyway.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, FormatError, SpecError
from .seeding import make_rng

NET_FORMAT = "relunet"
NET_VERSION = "v1"
DEFAULT_CAP = 4096


@dataclass(frozen=True)
class ReluNetworkSpec:
    height: int
    width: int
    in_dim: int
    out_dim: int = 1
    sparsity: float = math.inf
    bound: float = math.inf
    hidden: tuple[int, ...] | None = None  # per-layer hidden widths; overrides width

    def __post_init__(self):
        if min(self.height, self.width, self.in_dim, self.out_dim) < 1:
            raise SpecError("network height, width and dimensions must be positive")
        if not (self.sparsity > 0 and self.bound > 0):
            raise SpecError("sparsity budget and weight bound must be positive")
        if self.hidden is not None:
            hidden = tuple(int(h) for h in self.hidden)
            if len(hidden) != self.height - 1 or any(h < 1 for h in hidden):
                raise SpecError(f"hidden widths must be {self.height - 1} positive integers")
            object.__setattr__(self, "hidden", hidden)

    def hidden_widths(self) -> tuple[int, ...]:
        return self.hidden if self.hidden is not None else (self.width,) * (self.height - 1)

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.in_dim, *self.hidden_widths(), self.out_dim]
        return [(dims[i + 1], dims[i]) for i in range(self.height)]

    @property
    def num_params(self) -> int:
        return sum(r * c + r for r, c in self.layer_shapes())

    @property
    def constrained(self) -> bool:
        return math.isfinite(self.sparsity) or math.isfinite(self.bound)


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    spec: ReluNetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise DimensionError(f"expected {len(shapes)} layers")
        ws, bs = [], []
        for l, ((rows, cols), w, b) in enumerate(zip(shapes, self.weights, self.biases), start=1):
            w = np.array(w, dtype=float).reshape(np.shape(w))
            b = np.array(b, dtype=float).reshape(-1)
            if w.shape != (rows, cols) or b.shape != (rows,):
                raise DimensionError(f"layer {l}: expected W {rows}x{cols} and b of length {rows}")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def height(self) -> int:
        return self.spec.height

    def params(self) -> list[np.ndarray]:
        """Parameters in the order ``[W_1, b_1, ..., W_L, b_L]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "ReluNetwork":
        return ReluNetwork(self.spec, tuple(params[0::2]), tuple(params[1::2]))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def forward_cached(net: ReluNetwork, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batch forward pass returning the output and the input of every affine map."""
    a = x
    inputs = []
    last = net.height - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ w.T + b
        a = z if l == last else np.maximum(z, 0.0)
    return a, inputs


def backward(net: ReluNetwork, inputs: list[np.ndarray], grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode pass for ``forward_cached``.

    Returns parameter gradients in ``params()`` order and the gradient with
    respect to the network input. The ReLU subgradient at 0 is 0.
    """
    grads: list[np.ndarray] = [None] * (2 * net.height)
    g = grad_out
    for l in range(net.height - 1, -1, -1):
        a = inputs[l]
        grads[2 * l] = g.T @ a
        grads[2 * l + 1] = g.sum(axis=0)
        g = g @ net.weights[l]
        if l > 0:
            g = g * (a > 0.0)
    return grads, g


def forward(net: ReluNetwork, x) -> np.ndarray:
    """Evaluate at a point (returns a vector) or on a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    batch = x.reshape(1, -1) if single else x
    if batch.shape[1] != net.spec.in_dim:
        raise DimensionError(f"network expects input dimension {net.spec.in_dim}, got {batch.shape[1]}")
    out, _ = forward_cached(net, batch)
    return out[0] if single else out


def init_network(spec: ReluNetworkSpec, scheme: str = "uniform_scaled", seed: int = 0) -> ReluNetwork:
    """Random network inside the constraint set.

    ``uniform_scaled`` draws weights from ``U(-s, s)`` with
    ``s = min(B, sqrt(6 / fan_in))`` and biases from ``U(-min(B, 0.5), min(B, 0.5))``.
    ``zero_bias_ridge`` draws Gaussian weights with He scaling, clipped to
    ``B``, and zero biases.
    """
    rng = make_rng(seed, "init", scheme)
    ws, bs = [], []
    for rows, cols in spec.layer_shapes():
        if scheme == "uniform_scaled":
            s = min(spec.bound, math.sqrt(6.0 / cols))
            ws.append(rng.uniform(-s, s, size=(rows, cols)))
            t = min(spec.bound, 0.5)
            bs.append(rng.uniform(-t, t, size=rows))
        elif scheme == "zero_bias_ridge":
            ws.append(np.clip(rng.normal(0.0, math.sqrt(2.0 / cols), size=(rows, cols)), -spec.bound, spec.bound))
            bs.append(np.zeros(rows))
        elif scheme == "data_centered":
            raise SpecError("data_centered initialization needs inputs; use init_for_data")
        else:
            raise SpecError(f"unknown init scheme {scheme!r}")
    return project_constraints(ReluNetwork(spec, tuple(ws), tuple(bs)), spec)


def init_for_data(spec: ReluNetworkSpec, scheme: str, seed: int, inputs: np.ndarray) -> ReluNetwork:
    """:func:`init_network`, plus ``data_centered``: uniform weights with median-centered hidden biases."""
    if scheme != "data_centered":
        return init_network(spec, scheme, seed)
    return center_hidden_biases(init_network(spec, "uniform_scaled", seed), inputs)


def center_hidden_biases(net: ReluNetwork, inputs: np.ndarray) -> ReluNetwork:
    """Shift each hidden bias so the unit's pre-activation has median zero on ``inputs``.

    Every hidden unit then starts active on about half the data, which keeps
    narrow layers from starting (and quickly ending up) dead.
    """
    ws, bs = net.weights, list(net.biases)
    a = np.atleast_2d(np.asarray(inputs, dtype=float))
    for l in range(len(ws) - 1):
        pre = a @ ws[l].T + bs[l]
        shift = np.median(pre, axis=0)
        bs[l] = bs[l] - shift
        a = np.maximum(pre - shift, 0.0)
    return project_constraints(ReluNetwork(net.spec, ws, tuple(bs)), net.spec)


def zero_network(spec: ReluNetworkSpec) -> ReluNetwork:
    shapes = spec.layer_shapes()
    return ReluNetwork(spec, tuple(np.zeros(s) for s in shapes), tuple(np.zeros(s[0]) for s in shapes))


@dataclass(frozen=True)
class ConstraintReport:
    max_norm: float
    path_sum: float
    satisfies_B: bool
    satisfies_S: bool

    @property
    def feasible(self) -> bool:
        return self.satisfies_B and self.satisfies_S


def _norms(params: Sequence[np.ndarray]) -> tuple[float, float]:
    maxes = [float(np.max(np.abs(p))) if p.size else 0.0 for p in params]
    return max(maxes), math.fsum(maxes)


def check_constraints(net: ReluNetwork) -> ConstraintReport:
    max_norm, path_sum = _norms(net.params())
    return ConstraintReport(max_norm, path_sum, max_norm <= net.spec.bound, path_sum <= net.spec.sparsity)


def project_constraints(net: ReluNetwork, spec: ReluNetworkSpec | None = None) -> ReluNetwork:
    """Clip entries to ``[-B, B]``, then rescale everything if the path sum exceeds ``S``."""
    spec = spec or net.spec
    params = net.params()
    changed = False
    if math.isfinite(spec.bound) and _norms(params)[0] > spec.bound:
        params = [np.clip(p, -spec.bound, spec.bound) for p in params]
        changed = True
    if math.isfinite(spec.sparsity):
        factor = 1.0
        path = _norms(params)[1]
        base = params
        while path > spec.sparsity:
            factor = factor * spec.sparsity / path if factor == 1.0 else factor * (1.0 - 4e-16)
            params = [p * factor for p in base]
            path = _norms(params)[1]
            changed = True
    if not changed and spec == net.spec:
        return net
    return ReluNetwork(spec, tuple(params[0::2]), tuple(params[1::2]))


@dataclass(frozen=True, eq=False)
class FiniteNetworkClass:
    members: tuple[ReluNetwork, ...]
    grid_step: float
    description: str = ""

    def __len__(self) -> int:
        return len(self.members)


def enumerate_grid_class(spec: ReluNetworkSpec, grid_step: float, cap: int = DEFAULT_CAP) -> FiniteNetworkClass:
    """All networks with parameters on ``{-B, -B + step, ..., B}`` that satisfy the ``S`` budget."""
    if not math.isfinite(spec.bound):
        raise SpecError("grid enumeration needs a finite weight bound")
    if grid_step <= 0:
        raise SpecError("grid_step must be positive")
    levels = int(round(2 * spec.bound / grid_step))
    grid = np.linspace(-spec.bound, spec.bound, levels + 1)
    total = len(grid) ** spec.num_params
    if total > cap:
        raise SpecError(f"enumeration needs {total} candidates, above cap {cap}")
    shapes = spec.layer_shapes()
    members = []
    for values in itertools.product(grid, repeat=spec.num_params):
        flat = np.array(values)
        ws, bs, pos = [], [], 0
        for rows, cols in shapes:
            ws.append(flat[pos : pos + rows * cols].reshape(rows, cols))
            pos += rows * cols
            bs.append(flat[pos : pos + rows])
            pos += rows
        net = ReluNetwork(spec, tuple(ws), tuple(bs))
        if check_constraints(net).feasible:
            members.append(net)
    return FiniteNetworkClass(tuple(members), grid_step, f"grid step {grid_step} over {spec}")


# --- text format ------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_network(net: ReluNetwork) -> str:
    s = net.spec
    lines = [
        f"{NET_FORMAT} {NET_VERSION}",
        f"spec {s.height} {s.width} {s.in_dim} {s.out_dim} {_fmt(s.sparsity)} {_fmt(s.bound)}"
        + ("" if s.hidden is None else " hidden " + " ".join(map(str, s.hidden))),
    ]
    for w, b in zip(net.weights, net.biases):
        lines.append(f"W {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in w)
        lines.append(f"b {b.shape[0]}")
        lines.append(" ".join(_fmt(v) for v in b))
    return "\n".join(lines) + "\n"


def deserialize_network(text: str) -> ReluNetwork:
    rows = text.splitlines()
    if not rows:
        raise FormatError("empty input", 1)
    head = rows[0].split()
    if len(head) != 2 or head[0] != NET_FORMAT:
        raise FormatError(f"expected header '{NET_FORMAT} {NET_VERSION}'", 1)
    if head[1] != NET_VERSION:
        raise FormatError(f"unsupported version {head[1]} (this reader handles {NET_VERSION})", 1)

    def numbers(lineno: int, kind=float) -> list:
        if lineno > len(rows):
            raise FormatError("unexpected end of input", lineno)
        try:
            return [kind(t) for t in rows[lineno - 1].split()]
        except ValueError:
            raise FormatError("malformed number", lineno) from None

    if len(rows) < 2 or rows[1].split()[:1] != ["spec"]:
        raise FormatError("expected 'spec' line", 2)
    try:
        tokens = rows[1].split()
        h, w, i, o = (int(t) for t in tokens[1:5])
        sp, bd = (float(t) for t in tokens[5:7])
        hidden = None
        if len(tokens) > 7:
            if tokens[7] != "hidden":
                raise ValueError(f"unexpected token {tokens[7]!r}")
            hidden = tuple(int(t) for t in tokens[8:])
        spec = ReluNetworkSpec(h, w, i, o, sp, bd, hidden)
    except (ValueError, SpecError) as exc:
        raise FormatError(f"bad spec line: {exc}", 2) from None
    lineno = 3
    ws, bs = [], []
    for rows_, cols_ in spec.layer_shapes():
        tag = rows[lineno - 1].split() if lineno <= len(rows) else []
        if tag != ["W", str(rows_), str(cols_)]:
            raise FormatError(f"expected 'W {rows_} {cols_}'", lineno)
        mat = []
        for r in range(rows_):
            vals = numbers(lineno + 1 + r)
            if len(vals) != cols_:
                raise FormatError(f"expected {cols_} values", lineno + 1 + r)
            mat.append(vals)
        lineno += 1 + rows_
        tag = rows[lineno - 1].split() if lineno <= len(rows) else []
        if tag != ["b", str(rows_)]:
            raise FormatError(f"expected 'b {rows_}'", lineno)
        vals = numbers(lineno + 1)
        if len(vals) != rows_:
            raise FormatError(f"expected {rows_} values", lineno + 1)
        ws.append(np.array(mat))
        bs.append(np.array(vals))
        lineno += 2
    if any(r.strip() for r in rows[lineno - 1 :]):
        raise FormatError("trailing content", lineno)
    return ReluNetwork(spec, tuple(ws), tuple(bs))
