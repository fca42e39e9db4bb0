"""Pre-trained models, adapter insertion, baselines and error estimates.

A pre-trained model is a frozen pair (extractor ``g_e``, head ``g_h``)
around an adapter slot. Empirical caulking fits only the adapter ``g_a``
by least squares on the target sample, so the fitted regressor is
``g_h o g_a o g_e``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, DomainError, SpecError
from .fitting import FitConfig, FitTrace, fit_least_squares, multi_restart_fit
from .function_spaces import (
    CovariateDistribution,
    RegressionSample,
    TargetFunction,
    make_regression_sample,
    sample_covariates,
)
from .network import ReluNetwork, ReluNetworkSpec, forward
from .seeding import derive_seed, make_rng


# --- frozen maps ------------------------------------------------------------


class OracleMap:
    """Exact layers ``lo..hi`` of a target; the identity when ``lo > hi``."""

    def __init__(self, target: TargetFunction, lo: int, hi: int):
        self.target, self.lo, self.hi = target, lo, hi
        if lo <= hi:
            self.in_dim = target.layer_in_dim(lo)
            self.out_dim = target.layer_out_dim(hi)
        else:
            # empty range: dimension of the interface between layers hi and lo
            self.in_dim = self.out_dim = target.layer_in_dim(lo) if lo <= target.depth else 1

    @property
    def is_identity(self) -> bool:
        return self.lo > self.hi

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.target.apply_range(self.lo, self.hi, z)

    def vjp(self, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return grad_out
        return self.target.vjp_range(self.lo, self.hi, z, grad_out)


class NetworkMap:
    """Affine maps ``lo..hi`` (1-based) of a network, with ReLUs between them.

    ``relu_in`` applies a ReLU to the input first and ``relu_out`` after the
    last affine map. An empty range is the identity.
    """

    def __init__(self, net: ReluNetwork, lo: int, hi: int, relu_in: bool = False, relu_out: bool = False):
        self.net, self.lo, self.hi = net, lo, hi
        self.relu_in, self.relu_out = relu_in, relu_out
        self.layers = [(net.weights[k - 1], net.biases[k - 1]) for k in range(lo, hi + 1)]
        if self.layers:
            self.in_dim = self.layers[0][0].shape[1]
            self.out_dim = self.layers[-1][0].shape[0]
        else:
            dims = [net.spec.in_dim] + [w.shape[0] for w in net.weights]
            self.in_dim = self.out_dim = dims[lo - 1]

    @property
    def is_identity(self) -> bool:
        return not self.layers

    def as_network(self) -> ReluNetwork:
        """The affine maps as a standalone network (no outer ReLUs)."""
        if not self.layers:
            raise SpecError("empty layer range has no network form")
        hidden = tuple(w.shape[0] for w, _ in self.layers[:-1])
        spec = ReluNetworkSpec(len(self.layers), max(hidden, default=1), self.in_dim, self.out_dim, hidden=hidden)
        return ReluNetwork(spec, tuple(w for w, _ in self.layers), tuple(b for _, b in self.layers))

    def _forward(self, z):
        acts = []
        a = np.maximum(z, 0.0) if (self.relu_in and self.layers) else z
        last = len(self.layers) - 1
        for l, (w, b) in enumerate(self.layers):
            acts.append(a)
            a = a @ w.T + b
            if l < last or self.relu_out:
                a = np.maximum(a, 0.0)
        return a, acts

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self._forward(z)[0]

    def vjp(self, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        if not self.layers:
            return grad_out
        out, acts = self._forward(z)
        g = grad_out
        if self.relu_out:
            g = g * (out > 0.0)
        for l in range(len(self.layers) - 1, -1, -1):
            g = g @ self.layers[l][0]
            if l > 0:
                g = g * (acts[l] > 0.0)
        if self.relu_in:
            g = g * (z > 0.0)
        return g


class IdentityMap:
    def __init__(self, dim: int):
        self.in_dim = self.out_dim = dim

    def __call__(self, z):
        return z

    def vjp(self, z, grad_out):
        return grad_out


# --- models -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PretrainedModel:
    extractor: object
    head: object
    split: tuple[int, int]
    provenance: str  # "oracle" or "empirical"
    m: int | None = None
    middle: object = None  # the block the adapter replaces (ideal adapter for oracle models)
    source_net: ReluNetwork | None = None
    source_trace: FitTrace | None = None

    @property
    def adapter_in_dim(self) -> int:
        return self.extractor.out_dim

    @property
    def adapter_out_dim(self) -> int:
        return self.head.in_dim

    def with_adapter(self, adapter) -> "CaulkedModel":
        return CaulkedModel(self, adapter)


@dataclass(frozen=True, eq=False)
class CaulkedModel:
    pretrained: PretrainedModel
    adapter: object
    trace: FitTrace | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = self.pretrained.extractor(x)
        a = self.adapter(z) if not isinstance(self.adapter, ReluNetwork) else forward(self.adapter, z)
        return np.asarray(self.pretrained.head(a)).reshape(x.shape[0], -1)[:, 0]


@dataclass(frozen=True)
class AdapterSpec:
    depth: int = 0
    width: int = 8
    in_dim: int | None = None
    out_dim: int | None = None
    sparsity: float = math.inf
    bound: float = math.inf

    def __post_init__(self):
        if self.depth < 0 or self.width < 1:
            raise SpecError("adapter depth must be >= 0 and width >= 1")

    def for_model(self, pretrained: PretrainedModel) -> "AdapterSpec":
        return replace(self, in_dim=pretrained.adapter_in_dim, out_dim=pretrained.adapter_out_dim)

    def network_spec(self) -> ReluNetworkSpec:
        if self.in_dim is None or self.out_dim is None:
            raise SpecError("adapter dimensions are not set")
        return ReluNetworkSpec(self.depth + 1, self.width, self.in_dim, self.out_dim, self.sparsity, self.bound)


def predict(model, x: np.ndarray) -> np.ndarray:
    """Scalar predictions ``(n,)`` from a network, target or callable model."""
    if isinstance(model, ReluNetwork):
        return forward(model, np.atleast_2d(x))[:, 0]
    return np.asarray(model(x), dtype=float).reshape(np.shape(x)[0], -1)[:, 0]


def pretrain_oracle(f: TargetFunction, split: tuple[int, int]) -> PretrainedModel:
    """Exact extractor ``f_{i_e-1} o ... o f_1`` and head ``f_H o ... o f_{i_h+1}``."""
    i_e, i_h = split
    if not 1 <= i_e <= i_h <= f.depth:
        raise SpecError(f"split ({i_e}, {i_h}) invalid for {f.depth} layers")
    extractor = OracleMap(f, 1, i_e - 1) if i_e > 1 else IdentityMap(f.input_dim)
    head = OracleMap(f, i_h + 1, f.depth) if i_h < f.depth else IdentityMap(1)
    return PretrainedModel(extractor, head, (i_e, i_h), "oracle", None, OracleMap(f, i_e, i_h))


def pretrain_empirical(
    f: TargetFunction,
    source: CovariateDistribution,
    m: int,
    model_spec: ReluNetworkSpec,
    split: tuple[int, int],
    config: FitConfig,
    noise_sigma: float = 0.1,
    seed: int = 0,
) -> PretrainedModel:
    """Fit a full network on ``m`` source samples and freeze it around affine maps ``i_e..i_h``."""
    if m < 1:
        raise SpecError("source sample size m must be at least 1")
    i_e, i_h = split
    if not 1 <= i_e <= i_h <= model_spec.height:
        raise SpecError(f"split ({i_e}, {i_h}) invalid for a network of height {model_spec.height}")
    if model_spec.in_dim != f.input_dim or model_spec.out_dim != 1:
        raise DimensionError("pre-training network must map the target's input space to a scalar")
    sample = make_regression_sample(f, source, m, noise_sigma, derive_seed(seed, "source-sample", m))
    net, trace = multi_restart_fit(model_spec, sample, replace(config, seed=derive_seed(seed, "source-fit", m)))
    extractor = NetworkMap(net, 1, i_e - 1, relu_out=True) if i_e > 1 else IdentityMap(f.input_dim)
    head = NetworkMap(net, i_h + 1, net.height, relu_in=True) if i_h < net.height else IdentityMap(1)
    middle = NetworkMap(net, i_e, i_h)
    return PretrainedModel(extractor, head, (i_e, i_h), "empirical", m, middle, net, trace)


def caulk_fit(
    pretrained: PretrainedModel,
    adapter_spec: AdapterSpec,
    sample: RegressionSample,
    config: FitConfig,
    init: ReluNetwork | None = None,
    warm_start: bool = False,
) -> CaulkedModel:
    """Least-squares fit of the adapter with extractor and head frozen.

    Extractor features are computed once for the whole sample. With
    ``init`` a single run starts there; otherwise ``config.restarts``
    random starts are tried. ``warm_start`` adds one more start from the
    pre-trained block the adapter replaces (when its shape matches, or for
    oracle models when that block is affine); the lowest final training
    loss wins.
    """
    spec = adapter_spec
    if spec.in_dim is None or spec.out_dim is None:
        spec = spec.for_model(pretrained)
    if spec.in_dim != pretrained.adapter_in_dim:
        raise DimensionError(
            f"extractor/adapter interface: extractor emits {pretrained.adapter_in_dim}, adapter takes {spec.in_dim}"
        )
    if spec.out_dim != pretrained.adapter_out_dim:
        raise DimensionError(
            f"adapter/head interface: adapter emits {spec.out_dim}, head takes {pretrained.adapter_out_dim}"
        )
    features = pretrained.extractor(np.asarray(sample.inputs, dtype=float))
    net_spec = spec.network_spec()
    constraints = net_spec if net_spec.constrained else None
    if init is not None:
        if init.spec.layer_shapes() != net_spec.layer_shapes():
            raise DimensionError("initial adapter does not match the adapter spec")
        net, trace = fit_least_squares(init, sample, config, constraints, pretrained.head, features)
        return CaulkedModel(pretrained, net, trace)
    net, trace = multi_restart_fit(net_spec, sample, config, pretrained.head, features)
    middle = _pretrained_block(pretrained, net_spec) if warm_start else None
    if middle is not None:
        warm, warm_trace = fit_least_squares(middle, sample, config, constraints, pretrained.head, features)
        losses = trace.restart_losses + (warm_trace.final_loss,)
        # the warm run is candidate number `restarts`; strict improvement keeps ties with random starts
        if warm_trace.final_loss < trace.final_loss:
            net = warm
            trace = replace(warm_trace, restart_index=config.restarts)
        trace = replace(trace, restart_losses=losses)
    return CaulkedModel(pretrained, net, trace)


def oracle_affine_block(middle: OracleMap) -> tuple[np.ndarray, np.ndarray] | None:
    """``(W, b)`` of an oracle block made only of degree-1 polynomial layers.

    The layers' clipping to ``[0, 1]`` is dropped, so the map agrees with the
    block wherever the block does not clip. Returns ``None`` for any other block.
    """
    if middle.is_identity:
        return None
    w_total, b_total = None, None
    for p in middle.target.layers[middle.lo - 1 : middle.hi]:
        if p.spec.mode != "polynomial" or p.poly.shape[1] != 1:
            return None
        w = np.zeros((p.spec.out_dim, p.spec.in_dim))
        for j in range(p.spec.out_dim):
            np.add.at(w[j], p.active[j], p.poly[j, 0] * p.weights[j])
        b = p.offset - p.poly[:, 0] * p.shift
        if w_total is None:
            w_total, b_total = w, b
        else:
            w_total, b_total = w @ w_total, w @ b_total + b
    return w_total, b_total


def _pretrained_block(pretrained: PretrainedModel, net_spec: ReluNetworkSpec) -> ReluNetwork | None:
    """The pre-trained maps the adapter replaces, as an adapter-shaped network.

    Network blocks are copied as they are; an affine oracle block becomes a
    single affine map, usable only by a depth-0 adapter.
    """
    middle = pretrained.middle
    if isinstance(middle, OracleMap):
        affine = oracle_affine_block(middle)
        if affine is None or net_spec.height != 1:
            return None
        w, b = affine
        if net_spec.layer_shapes() != [w.shape]:
            return None
        return ReluNetwork(net_spec, (w,), (b,))
    if not isinstance(middle, NetworkMap) or middle.is_identity:
        return None
    block = middle.as_network()
    if block.spec.layer_shapes() != net_spec.layer_shapes():
        return None
    return ReluNetwork(net_spec, block.weights, block.biases)


def scratch_fit(spec: ReluNetworkSpec, sample: RegressionSample, config: FitConfig) -> tuple[ReluNetwork, FitTrace]:
    """Baseline: fit the whole network on the target sample, nothing frozen."""
    return multi_restart_fit(spec, sample, config)


# --- error estimates --------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    std_error: float


def _mc(values: np.ndarray) -> MCEstimate:
    n = values.size
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(float(np.mean(values)), se)


def l2_error(model, f: TargetFunction, dist: CovariateDistribution, n_mc: int, seed: int) -> MCEstimate:
    """Monte Carlo ``E_Q (model(X) - f(X))^2`` with the standard error of the mean."""
    if n_mc < 2:
        raise SpecError("n_mc must be at least 2")
    x = sample_covariates(dist, n_mc, derive_seed(seed, "mc-covariates"))
    d = predict(model, x) - f(x)
    return _mc(d * d)


@dataclass(frozen=True, eq=False)
class ClassificationSample:
    inputs: np.ndarray
    labels: np.ndarray
    seed: int

    def as_regression(self) -> RegressionSample:
        return RegressionSample(self.inputs, self.labels.astype(float), math.nan, self.seed)


def make_classification_sample(f, dist: CovariateDistribution, n: int, seed: int) -> ClassificationSample:
    x = sample_covariates(dist, n, derive_seed(seed, "cls-covariates"))
    p = predict(f, x)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("score function left [0, 1]")
    y = (make_rng(seed, "cls-labels").random(n) < p).astype(int)
    return ClassificationSample(x, y, seed)


class PluginClassifier:
    """``h(x) = 1{score(x) > 1/2}``."""

    def __init__(self, score_model):
        self.score_model = score_model

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (predict(self.score_model, x) > 0.5).astype(int)


def plugin_classify(score_model) -> PluginClassifier:
    return PluginClassifier(score_model)


def excess_error(classifier, f, dist: CovariateDistribution, n_mc: int, seed: int) -> MCEstimate:
    """Excess 0-1 risk via ``E |2 f(X) - 1| 1{h(X) != h*(X)}``."""
    if n_mc < 2:
        raise SpecError("n_mc must be at least 2")
    x = sample_covariates(dist, n_mc, derive_seed(seed, "mc-covariates"))
    p = predict(f, x)
    bayes = (p > 0.5).astype(int)
    return _mc(np.abs(2.0 * p - 1.0) * (classifier(x) != bayes))


def excess_error_by_labels(classifier, f, dist: CovariateDistribution, n_mc: int, seed: int) -> MCEstimate:
    """Excess 0-1 risk from its definition, with freshly drawn labels."""
    if n_mc < 2:
        raise SpecError("n_mc must be at least 2")
    x = sample_covariates(dist, n_mc, derive_seed(seed, "mc-covariates"))
    p = predict(f, x)
    y = (make_rng(seed, "mc-labels").random(n_mc) < p).astype(int)
    bayes = (p > 0.5).astype(int)
    return _mc((classifier(x) != y).astype(float) - (bayes != y))
