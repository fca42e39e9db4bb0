"""Compositional target functions with certified per-layer smoothness.

A target is ``f = f_H o ... o f_1`` where layer ``i`` maps ``[0,1]^{d_i}``
to ``[0,1]^{d_{i+1}}`` and every output coordinate is a ridge function of
exactly ``t_i`` inputs:

* kink mode:        ``clamp(c * |w.x_S - b|^beta + o)``, exact exponent ``beta``
* polynomial mode:  ``clamp(o + sum_k a_k (w.x_S - b)^k)``

Ridge weights are positive and sum to one, so ``w.x_S`` stays in ``[0,1]``.
Generated coefficients keep the unclamped value inside ``[0,1]``; the clamp
only matters off-domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import math

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, FormatError, SpecError
from .seeding import make_rng

MODES = ("kink", "polynomial")
TARGET_FORMAT = "caulk-target"
TARGET_VERSION = "v1"


@dataclass(frozen=True)
class SmoothLayerSpec:
    in_dim: int
    out_dim: int
    active_vars: int
    beta: float
    mode: str = "kink"
    degree: int = 2  # polynomial mode only
    center: bool = False  # kink mode: put the kink at the median ridge value
    gain: float = 1.0  # multiplies kink amplitudes and the polynomial excursion

    def validate(self, index: int) -> None:
        where = f"layer {index}"
        if self.in_dim < 1 or self.out_dim < 1:
            raise SpecError(f"{where}: dimensions must be positive")
        if not 1 <= self.active_vars <= self.in_dim:
            raise SpecError(f"{where}: active_vars must lie in [1, in_dim={self.in_dim}]")
        if not self.beta > 0:
            raise SpecError(f"{where}: beta must be positive")
        if self.mode not in MODES:
            raise SpecError(f"{where}: unknown mode {self.mode!r}")
        if self.mode == "kink" and self.beta > 1:
            raise SpecError(f"{where}: kink mode requires beta in (0, 1], got {self.beta}")
        if self.mode == "polynomial" and self.degree < 1:
            raise SpecError(f"{where}: polynomial degree must be >= 1")
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise SpecError(f"{where}: gain must be positive and finite")


@dataclass(frozen=True)
class CompositionSpec:
    layers: tuple[SmoothLayerSpec, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self.validate()

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def validate(self) -> None:
        if not self.layers:
            raise SpecError("composition needs at least one layer")
        for i, layer in enumerate(self.layers, start=1):
            layer.validate(i)
            if i > 1 and self.layers[i - 2].out_dim != layer.in_dim:
                raise SpecError(
                    f"layer {i}: in_dim {layer.in_dim} does not match "
                    f"out_dim {self.layers[i - 2].out_dim} of layer {i - 1}"
                )
        if self.layers[-1].out_dim != 1:
            raise SpecError(f"layer {len(self.layers)}: final out_dim must be 1")

    def to_config(self) -> dict:
        layers = []
        for layer in self.layers:
            entry = {
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "active_vars": layer.active_vars,
                "beta": layer.beta,
                "mode": layer.mode,
            }
            if layer.mode == "polynomial":
                entry["degree"] = layer.degree
            if layer.center:
                entry["center"] = True
            if layer.gain != 1.0:
                entry["gain"] = layer.gain
            layers.append(entry)
        return {"seed": self.seed, "layers": layers}

    @classmethod
    def from_config(cls, block: dict, prefix: str = "composition") -> "CompositionSpec":
        if not isinstance(block, dict):
            raise ConfigError(prefix, "expected a mapping")
        if "layers" not in block:
            raise ConfigError(f"{prefix}.layers", "missing")
        raw = block["layers"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{prefix}.layers", "expected a non-empty list")
        layers = []
        for i, entry in enumerate(raw):
            key = f"{prefix}.layers[{i}]"
            if not isinstance(entry, dict):
                raise ConfigError(key, "expected a mapping")
            for name in ("in_dim", "out_dim", "active_vars", "beta"):
                if name not in entry:
                    raise ConfigError(f"{key}.{name}", "missing")
            unknown = set(entry) - {"in_dim", "out_dim", "active_vars", "beta", "mode", "degree", "center", "gain"}
            if unknown:
                raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
            try:
                layers.append(
                    SmoothLayerSpec(
                        in_dim=int(entry["in_dim"]),
                        out_dim=int(entry["out_dim"]),
                        active_vars=int(entry["active_vars"]),
                        beta=float(entry["beta"]),
                        mode=str(entry.get("mode", "kink")),
                        degree=int(entry.get("degree", 2)),
                        center=bool(entry.get("center", False)),
                        gain=float(entry.get("gain", 1.0)),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from None
        try:
            return cls(tuple(layers), seed=int(block.get("seed", 0)))
        except SpecError as exc:
            raise ConfigError(f"{prefix}.layers", str(exc)) from None


@dataclass(frozen=True, eq=False)
class LayerParams:
    """Closed-form parameters of one layer, one row per output coordinate."""

    spec: SmoothLayerSpec
    active: np.ndarray  # (out, t) int
    weights: np.ndarray  # (out, t)
    shift: np.ndarray  # (out,)
    scale: np.ndarray  # (out,)  kink amplitude
    offset: np.ndarray  # (out,)
    poly: np.ndarray  # (out, degree); empty columns in kink mode

    def __post_init__(self):
        for name in ("active", "weights", "shift", "scale", "offset", "poly"):
            arr = np.array(getattr(self, name), dtype=int if name == "active" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def ridge(self, z: np.ndarray) -> np.ndarray:
        return np.einsum("nkt,kt->nk", z[:, self.active], self.weights)

    def raw(self, r: np.ndarray) -> np.ndarray:
        if self.spec.mode == "kink":
            return self.scale * np.abs(r) ** self.spec.beta + self.offset
        out = np.broadcast_to(self.offset, r.shape).copy()
        for k in range(self.poly.shape[1]):
            out += self.poly[:, k] * r ** (k + 1)
        return out

    def raw_derivative(self, r: np.ndarray) -> np.ndarray:
        if self.spec.mode == "kink":
            beta = self.spec.beta
            mag = np.abs(r)
            with np.errstate(divide="ignore", invalid="ignore"):
                d = self.scale * beta * np.where(mag > 0, mag ** (beta - 1.0), 0.0) * np.sign(r)
            return d
        out = np.zeros_like(r)
        for k in range(self.poly.shape[1]):
            out += (k + 1) * self.poly[:, k] * r**k
        return out

    def apply(self, z: np.ndarray) -> np.ndarray:
        return np.clip(self.raw(self.ridge(z) - self.shift), 0.0, 1.0)

    def vjp(self, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        r = self.ridge(z) - self.shift
        v = self.raw(r)
        inside = (v >= 0.0) & (v <= 1.0)
        g = grad_out * inside * self.raw_derivative(r)  # (n, out)
        grad_in = np.zeros_like(z, dtype=float)
        for j in range(self.active.shape[0]):
            grad_in[:, self.active[j]] += g[:, j : j + 1] * self.weights[j]
        return grad_in

    def nominal_holder_constant(self) -> float:
        """Upper bound on the Euclidean Hölder constant at exponent ``min(beta, 1)``.

        Kink coordinates satisfy ``|v(x)-v(y)| <= c ||w||_2^beta ||x-y||^beta``;
        polynomial coordinates are Lipschitz with constant ``max|p'| ||w||_2``.
        """
        wnorm = np.linalg.norm(self.weights, axis=1)
        if self.spec.mode == "kink":
            per_unit = self.scale * wnorm**self.spec.beta
        else:
            span = np.maximum(np.abs(self.shift), np.abs(1.0 - self.shift))
            lip = np.zeros_like(span)
            for k in range(self.poly.shape[1]):
                lip += (k + 1) * np.abs(self.poly[:, k]) * span**k
            per_unit = lip * wnorm
        return float(np.sqrt(np.sum(per_unit**2)))


@dataclass(frozen=True, eq=False)
class TargetFunction:
    spec: CompositionSpec
    layers: tuple[LayerParams, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    def layer_in_dim(self, k: int) -> int:
        return self.layers[k - 1].spec.in_dim

    def layer_out_dim(self, k: int) -> int:
        return self.layers[k - 1].spec.out_dim

    def apply_range(self, lo: int, hi: int, z: np.ndarray) -> np.ndarray:
        """Compose layers ``lo..hi`` (1-based, inclusive) on a batch without domain checks.

        An empty range (``lo > hi``) is the identity.
        """
        for k in range(lo, hi + 1):
            z = self.layers[k - 1].apply(z)
        return z

    def vjp_range(self, lo: int, hi: int, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        inputs = [z]
        for k in range(lo, hi):
            inputs.append(self.layers[k - 1].apply(inputs[-1]))
        g = grad_out
        for k in range(hi, lo - 1, -1):
            g = self.layers[k - 1].vjp(inputs[k - lo], g)
        return g

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = _as_batch(x, self.input_dim)
        _check_cube(x)
        return self.apply_range(1, self.depth, x)[:, 0]


def _as_batch(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.shape[1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x


def _check_cube(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("point outside the unit cube")


def _ridge_weights(rng: np.random.Generator, t: int) -> np.ndarray:
    w = rng.uniform(0.5, 1.5, size=t)
    return w / w.sum()


def _layer_params(spec: SmoothLayerSpec, rng: np.random.Generator) -> LayerParams:
    out, t = spec.out_dim, spec.active_vars
    active = np.array([np.sort(rng.choice(spec.in_dim, size=t, replace=False)) for _ in range(out)])
    weights = np.array([_ridge_weights(rng, t) for _ in range(out)])
    shift = rng.uniform(0.25, 0.75, size=out)
    if spec.mode == "kink":
        scale = spec.gain * rng.uniform(0.5, 0.9, size=out)
        offset = rng.uniform(0.0, 0.1, size=out)
        poly = np.zeros((out, 0))
    else:
        scale = np.zeros(out)
        offset = np.full(out, 0.5)
        k = np.arange(1, spec.degree + 1)
        signs = rng.choice([-1.0, 1.0], size=(out, spec.degree))
        poly = signs * rng.uniform(0.3, 1.0, size=(out, spec.degree)) / k
        span = np.maximum(shift, 1.0 - shift)
        excursion = np.sum(np.abs(poly) * span[:, None] ** k, axis=1)
        poly *= np.minimum(1.0, 0.45 / excursion)[:, None] * spec.gain
    return LayerParams(spec, active, weights, shift, scale, offset, poly)


def make_composition(spec: CompositionSpec) -> TargetFunction:
    """Draw closed-form layer parameters; a pure function of ``spec``."""
    spec.validate()
    layers: list[LayerParams] = []
    probe = make_rng(spec.seed, "center-probe").random((4097, spec.input_dim))
    for i, layer_spec in enumerate(spec.layers, start=1):
        params = _layer_params(layer_spec, make_rng(spec.seed, "layer", i))
        if layer_spec.center and layer_spec.mode == "kink":
            median = np.median(params.ridge(probe), axis=0)
            params = LayerParams(
                layer_spec, params.active, params.weights, median, params.scale, params.offset, params.poly
            )
        layers.append(params)
        probe = params.apply(probe)
    return TargetFunction(spec, tuple(layers))


def identity_layer(dim: int = 1) -> LayerParams:
    """Kink layer with ``c=1, b=0, o=0, beta=1``: the identity on ``[0,1]^dim``."""
    spec = SmoothLayerSpec(dim, dim, 1, 1.0, "kink")
    return LayerParams(
        spec,
        active=np.arange(dim).reshape(dim, 1),
        weights=np.ones((dim, 1)),
        shift=np.zeros(dim),
        scale=np.ones(dim),
        offset=np.zeros(dim),
        poly=np.zeros((dim, 0)),
    )


def target_from_layers(layers: Sequence[LayerParams], seed: int = 0) -> TargetFunction:
    spec = CompositionSpec(tuple(p.spec for p in layers), seed=seed)
    return TargetFunction(spec, tuple(layers))


def eval_target(f: TargetFunction, x) -> float | np.ndarray:
    """Evaluate ``f`` at one point (returns a float) or a batch of rows."""
    single = np.ndim(x) <= 1 and np.size(x) == f.input_dim
    values = f(x)
    return float(values[0]) if single else values


def eval_partial(f: TargetFunction, from_layer: int, to_layer: int, z) -> np.ndarray:
    if not 1 <= from_layer <= to_layer <= f.depth:
        raise SpecError(f"layer range ({from_layer}, {to_layer}) outside 1..{f.depth}")
    dim = f.layer_in_dim(from_layer)
    single = np.ndim(z) <= 1 and np.size(z) == dim
    batch = _as_batch(z, dim)
    _check_cube(batch)
    out = f.apply_range(from_layer, to_layer, batch)
    return out[0] if single else out


# --- covariates and samples -------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovariateDistribution:
    kind: str
    dim: int
    slopes: np.ndarray = field(default=None)
    shifts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in ("uniform_cube", "affine_warp"):
            raise SpecError(f"unknown covariate distribution {self.kind!r}")
        if self.kind == "affine_warp":
            slopes = np.asarray(self.slopes, dtype=float).reshape(self.dim)
            shifts = np.asarray(self.shifts, dtype=float).reshape(self.dim)
            if np.any(slopes <= 0) or np.any(shifts < 0) or np.any(shifts + slopes > 1 + 1e-15):
                raise SpecError("affine warp must map the cube into itself")
            object.__setattr__(self, "slopes", slopes)
            object.__setattr__(self, "shifts", shifts)

    @classmethod
    def uniform(cls, dim: int) -> "CovariateDistribution":
        return cls("uniform_cube", dim)

    @classmethod
    def warp(cls, slopes, shifts) -> "CovariateDistribution":
        slopes = np.atleast_1d(np.asarray(slopes, dtype=float))
        return cls("affine_warp", slopes.size, slopes, shifts)

    @classmethod
    def default_shift(cls, dim: int, seed: int) -> "CovariateDistribution":
        rng = make_rng(seed, "default-shift")
        slopes = rng.uniform(0.8, 1.0, size=dim)
        shifts = rng.uniform(0.0, 1.0, size=dim) * (1.0 - slopes)
        return cls.warp(slopes, shifts)

    def to_config(self) -> dict:
        if self.kind == "uniform_cube":
            return {"kind": self.kind, "dim": self.dim}
        return {"kind": self.kind, "dim": self.dim, "slopes": self.slopes.tolist(), "shifts": self.shifts.tolist()}


def sample_covariates(dist: CovariateDistribution, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise SpecError("n must be at least 1")
    u = make_rng(seed, "covariates").random((n, dist.dim))
    if dist.kind == "uniform_cube":
        return u
    return np.clip(dist.shifts + dist.slopes * u, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class RegressionSample:
    inputs: np.ndarray
    outputs: np.ndarray
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.inputs.shape[0] < 1 or self.inputs.shape[0] != self.outputs.shape[0]:
            raise SpecError("sample needs n >= 1 matching input/output rows")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def make_regression_sample(
    f: TargetFunction,
    dist: CovariateDistribution,
    n: int,
    noise_sigma: float,
    seed: int,
    noise: str = "gaussian",
) -> RegressionSample:
    if noise_sigma < 0:
        raise SpecError("noise_sigma must be nonnegative")
    if dist.dim != f.input_dim:
        raise DimensionError(f"distribution dimension {dist.dim} != target input dimension {f.input_dim}")
    x = sample_covariates(dist, n, seed)
    rng = make_rng(seed, "noise")
    if noise == "gaussian":
        xi = rng.normal(0.0, 1.0, size=n) * noise_sigma
    elif noise == "uniform":
        xi = rng.uniform(-1.0, 1.0, size=n) * noise_sigma * np.sqrt(3.0)
    else:
        raise SpecError(f"unknown noise kind {noise!r}")
    return RegressionSample(x, f(x) + xi, float(noise_sigma), int(seed))


def holder_constant_estimate(
    g: Callable[[np.ndarray], np.ndarray],
    alpha: float,
    num_pairs: int,
    seed: int,
    dim: int = 1,
    bounds: tuple[float, float] = (0.0, 1.0),
    min_dist: float | None = None,
) -> float:
    """Lower estimate of the Hölder constant of ``g`` at exponent ``alpha``.

    ``g`` maps a batch ``(n, dim)`` to ``(n,)`` or ``(n, k)``. Pairs are
    independent uniform points by default; with ``min_dist`` the second
    point sits at a log-uniform distance in ``[min_dist, 1]`` from the
    first, which probes local behaviour. The pair stream for a seed is a
    prefix-stable sequence, so the estimate is nondecreasing in
    ``num_pairs``.
    """
    if num_pairs < 1:
        raise SpecError("num_pairs must be at least 1")
    lo, hi = bounds
    u = make_rng(seed, "holder-pairs").random((num_pairs, 2 * dim + 1))
    x = lo + (hi - lo) * u[:, :dim]
    if min_dist is None:
        y = lo + (hi - lo) * u[:, dim : 2 * dim]
    else:
        direction = 2.0 * u[:, dim : 2 * dim] - 1.0
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        direction = np.where(norms > 0, direction / np.where(norms > 0, norms, 1.0), 0.0)
        log_lo = np.log(min_dist)
        dist = np.exp(log_lo + (0.0 - log_lo) * u[:, 2 * dim : 2 * dim + 1]) * (hi - lo)
        y = np.clip(x + dist * direction, lo, hi)
    gap = np.linalg.norm(x - y, axis=1)
    keep = gap > 0
    if not np.any(keep):
        raise SpecError("all sampled pairs are degenerate")
    gx = np.asarray(g(x[keep]), dtype=float).reshape(int(keep.sum()), -1)
    gy = np.asarray(g(y[keep]), dtype=float).reshape(int(keep.sum()), -1)
    ratios = np.linalg.norm(gx - gy, axis=1) / gap[keep] ** alpha
    return float(np.max(ratios))


# --- text serialization -----------------------------------------------------


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def serialize_target(f: TargetFunction) -> str:
    lines = [f"{TARGET_FORMAT} {TARGET_VERSION}", f"seed {f.spec.seed}", f"layers {f.depth}"]
    for i, p in enumerate(f.layers, start=1):
        s = p.spec
        lines.append(
            f"layer {i} {s.mode} {s.in_dim} {s.out_dim} {s.active_vars} {s.beta!r} {s.degree} {int(s.center)} {s.gain!r}"
        )
        for j in range(s.out_dim):
            lines.append("active " + " ".join(str(int(a)) for a in p.active[j]))
            lines.append("weights " + _floats(p.weights[j]))
            lines.append(f"coef {_floats([p.shift[j], p.scale[j], p.offset[j]])}")
            lines.append("poly " + _floats(p.poly[j]) if p.poly.shape[1] else "poly")
    return "\n".join(lines) + "\n"


def deserialize_target(text: str) -> TargetFunction:
    rows = text.splitlines()
    pos = 0

    def take(tag: str) -> list[str]:
        nonlocal pos
        if pos >= len(rows):
            raise FormatError(f"unexpected end of input, expected '{tag}'", pos + 1)
        parts = rows[pos].split()
        if not parts or parts[0] != tag:
            raise FormatError(f"expected '{tag}'", pos + 1)
        pos += 1
        return parts[1:]

    def number(token: str, kind=float):
        try:
            return kind(token)
        except ValueError:
            raise FormatError(f"bad number {token!r}", pos) from None

    if not rows:
        raise FormatError("empty input", 1)
    header = rows[0].split()
    if len(header) != 2 or header[0] != TARGET_FORMAT:
        raise FormatError(f"expected header '{TARGET_FORMAT} {TARGET_VERSION}'", 1)
    if header[1] != TARGET_VERSION:
        raise FormatError(f"unsupported version {header[1]} (this reader handles {TARGET_VERSION})", 1)
    pos = 1
    seed = number(take("seed")[0], int)
    count = number(take("layers")[0], int)
    layers = []
    for _ in range(count):
        fields = take("layer")
        if len(fields) not in (8, 9):
            raise FormatError("layer line needs 8 or 9 fields", pos)
        spec = SmoothLayerSpec(
            in_dim=number(fields[2], int),
            out_dim=number(fields[3], int),
            active_vars=number(fields[4], int),
            beta=number(fields[5]),
            mode=fields[1],
            degree=number(fields[6], int),
            center=bool(number(fields[7], int)),
            gain=number(fields[8]) if len(fields) == 9 else 1.0,
        )
        active, weights, coef, poly = [], [], [], []
        for _ in range(spec.out_dim):
            active.append([number(v, int) for v in take("active")])
            weights.append([number(v) for v in take("weights")])
            c = [number(v) for v in take("coef")]
            if len(c) != 3:
                raise FormatError("coef line needs 3 values", pos)
            coef.append(c)
            poly.append([number(v) for v in take("poly")])
        try:
            coef_arr = np.array(coef)
            layers.append(
                LayerParams(
                    spec,
                    np.array(active).reshape(spec.out_dim, spec.active_vars),
                    np.array(weights).reshape(spec.out_dim, spec.active_vars),
                    coef_arr[:, 0],
                    coef_arr[:, 1],
                    coef_arr[:, 2],
                    np.array(poly, dtype=float).reshape(spec.out_dim, len(poly[0])),
                )
            )
        except ValueError as exc:
            raise FormatError(f"inconsistent layer arrays: {exc}", pos) from None
    try:
        comp = CompositionSpec(tuple(p.spec for p in layers), seed=seed)
    except SpecError as exc:
        raise FormatError(str(exc), pos) from None
    return TargetFunction(comp, tuple(layers))
