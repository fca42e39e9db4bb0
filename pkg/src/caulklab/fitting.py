"""Least-squares fitting of ReLU networks.

The estimator of interest is the exact empirical risk minimizer over a
network class. That argmin is not computable, so fitting here means
first-order descent from several random starts, keeping the best run.
An optional frozen ``head`` map sits after the network; gradients flow
through it (via its ``vjp``) but its parameters never change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, FitError, SpecError
from .function_spaces import RegressionSample
from .network import (
    ReluNetwork,
    ReluNetworkSpec,
    backward,
    forward_cached,
    init_for_data,
    project_constraints,
)
from .seeding import derive_seed, make_rng

IMPROVEMENT_TOL = 1e-10
MAX_HALVINGS = 5
INIT_SCHEMES = ("uniform_scaled", "zero_bias_ridge", "data_centered")


class FrozenMap(Protocol):
    in_dim: int
    out_dim: int

    def __call__(self, z: np.ndarray) -> np.ndarray: ...

    def vjp(self, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.05
    max_epochs: int = 2000
    batch_size: int | None = None  # None means full batch
    restarts: int = 1
    patience: int = 100
    project_every: int = 1
    seed: int = 0
    optimizer: str = "gd"  # "gd" or "adam"
    init_scheme: str = "uniform_scaled"  # or "zero_bias_ridge", "data_centered"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise SpecError("learning_rate must be positive")
        for name in ("max_epochs", "restarts", "patience", "project_every"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise SpecError("patience cannot exceed max_epochs")
        if self.batch_size is not None and self.batch_size < 1:
            raise SpecError("batch_size must be positive")
        if self.optimizer not in ("gd", "adam"):
            raise SpecError(f"unknown optimizer {self.optimizer!r}")
        if self.init_scheme not in INIT_SCHEMES:
            raise SpecError(f"unknown init scheme {self.init_scheme!r}")

    @classmethod
    def from_config(cls, block: dict | None, prefix: str = "fit") -> "FitConfig":
        block = dict(block or {})
        known = set(cls.__dataclass_fields__)
        for key in block:
            if key not in known:
                raise ConfigError(f"{prefix}.{key}", "unknown key")
        try:
            return cls(**block)
        except (TypeError, SpecError) as exc:
            raise ConfigError(prefix, str(exc)) from None

    def to_config(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class FitTrace:
    losses: tuple[float, ...]
    final_loss: float
    restart_index: int = 0
    epochs_run: int = 0
    learning_rate: float = math.nan
    restart_losses: tuple[float, ...] = field(default=())

    def csv_rows(self) -> list[tuple[int, float]]:
        return list(enumerate(self.losses))


def _as_targets(targets: np.ndarray, n: int) -> np.ndarray:
    t = np.asarray(targets, dtype=float)
    if t.ndim <= 1:
        t = t.reshape(-1, 1)
    if t.shape[0] != n:
        raise DimensionError(f"{t.shape[0]} targets for {n} inputs")
    return t


def loss_and_gradient(
    net: ReluNetwork,
    inputs: np.ndarray,
    targets: np.ndarray,
    head: FrozenMap | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mean squared error ``(1/n) sum_i ||f(X_i) - Y_i||^2`` and its exact gradient."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if net.spec.in_dim == 1 else x.reshape(1, -1)
    n = x.shape[0]
    if n < 1:
        raise DimensionError("need at least one sample")
    if x.shape[1] != net.spec.in_dim:
        raise DimensionError(f"inputs have dimension {x.shape[1]}, network expects {net.spec.in_dim}")
    t = _as_targets(targets, n)
    out, cache = forward_cached(net, x)
    pred = out if head is None else head(out)
    if pred.shape != t.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match targets {t.shape}")
    resid = pred - t
    loss = float(np.sum(resid * resid) / n)
    g = (2.0 / n) * resid
    if head is not None:
        g = head.vjp(out, g)
    grads, _ = backward(net, cache, g)
    return loss, grads


def _loss(net, x, t, head) -> float:
    out, _ = forward_cached(net, x)
    pred = out if head is None else head(out)
    r = pred - t
    return float(np.sum(r * r) / x.shape[0])


def finite_diff_gradient(
    net: ReluNetwork,
    inputs: np.ndarray,
    targets: np.ndarray,
    step: float = 1e-5,
    head: FrozenMap | None = None,
) -> list[np.ndarray]:
    """Central differences of the loss, one parameter at a time."""
    if not step > 0:
        raise SpecError("finite-difference step must be positive")
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if net.spec.in_dim == 1 else x.reshape(1, -1)
    t = _as_targets(targets, x.shape[0])
    params = [p.copy() for p in net.params()]
    grads = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            up = _loss(net.with_params(params), x, t, head)
            p[idx] = orig - step
            down = _loss(net.with_params(params), x, t, head)
            p[idx] = orig
            g[idx] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


class _Diverged(Exception):
    pass


def _descend(
    net: ReluNetwork,
    x: np.ndarray,
    t: np.ndarray,
    config: FitConfig,
    lr: float,
    constraints: ReluNetworkSpec | None,
    head: FrozenMap | None,
) -> tuple[list[np.ndarray], list[float]]:
    params = [p.copy() for p in net.params()]
    n = x.shape[0]
    batch = config.batch_size if config.batch_size and config.batch_size < n else None
    rng = make_rng(config.seed, "minibatch") if batch else None
    m = [np.zeros_like(p) for p in params] if config.optimizer == "adam" else None
    v = [np.zeros_like(p) for p in params] if config.optimizer == "adam" else None
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    losses: list[float] = []
    best, best_params, stall = math.inf, params, 0

    def update(grads):
        nonlocal params, step
        step += 1
        if m is None:
            params = [p - lr * g for p, g in zip(params, grads)]
            return
        c1, c2 = 1.0 - b1**step, 1.0 - b2**step
        new = []
        for i, (p, g) in enumerate(zip(params, grads)):
            m[i] = b1 * m[i] + (1.0 - b1) * g
            v[i] = b2 * v[i] + (1.0 - b2) * g * g
            new.append(p - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps))
        params = new

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(config.max_epochs):
            current = net.with_params(params)
            loss, grads = loss_and_gradient(current, x, t, head)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise _Diverged
            losses.append(loss)
            if loss < best - IMPROVEMENT_TOL:
                stall = 0
            else:
                stall += 1
            if loss < best:
                best, best_params = loss, params
            if stall >= config.patience or not any(np.any(g) for g in grads):
                break
            if batch is None:
                update(grads)
            else:
                order = rng.permutation(n)
                for start in range(0, n, batch):
                    idx = order[start : start + batch]
                    _, g = loss_and_gradient(net.with_params(params), x[idx], t[idx], head)
                    update(g)
            if constraints is not None and (epoch + 1) % config.project_every == 0:
                params = project_constraints(net.with_params(params), constraints).params()
    return best_params, losses


def fit_least_squares(
    net_init: ReluNetwork,
    sample: RegressionSample,
    config: FitConfig,
    constraints: ReluNetworkSpec | None = None,
    head: FrozenMap | None = None,
    features: np.ndarray | None = None,
) -> tuple[ReluNetwork, FitTrace]:
    """Descend from ``net_init`` on ``sample``.

    ``features`` replaces ``sample.inputs`` as the network input (used when
    a frozen extractor precomputes them). The returned network is the
    iterate with the lowest recorded training loss, projected onto the
    constraint set when one is given. A non-finite loss halves the learning
    rate and restarts the run; the sixth failure raises ``FitError``.
    """
    x = np.asarray(sample.inputs if features is None else features, dtype=float)
    t = _as_targets(sample.outputs, x.shape[0])
    if constraints is not None:
        net_init = project_constraints(net_init, constraints)
    lr = config.learning_rate
    for _ in range(MAX_HALVINGS + 1):
        try:
            params, losses = _descend(net_init, x, t, config, lr, constraints, head)
            break
        except _Diverged:
            lr /= 2.0
    else:
        raise FitError(f"loss diverged after {MAX_HALVINGS} learning-rate halvings")
    net = net_init.with_params(params)
    if constraints is not None:
        net = project_constraints(net, constraints)
    final = _loss(net, x, t, head)
    return net, FitTrace(tuple(losses), final, 0, len(losses), lr)


def multi_restart_fit(
    spec: ReluNetworkSpec,
    sample: RegressionSample,
    config: FitConfig,
    head: FrozenMap | None = None,
    features: np.ndarray | None = None,
) -> tuple[ReluNetwork, FitTrace]:
    """Best of ``config.restarts`` runs from independent initializations.

    Restart ``r`` initializes from ``derive_seed(config.seed, "restart", r)``.
    Ties on final loss go to the lowest restart index. The spec's (S, B)
    constraints are enforced whenever either is finite.
    """
    constraints = spec if spec.constrained else None
    best = None
    finals = []
    for r in range(config.restarts):
        run_seed = derive_seed(config.seed, "restart", r)
        x = sample.inputs if features is None else features
        init = init_for_data(spec, config.init_scheme, run_seed, x)
        net, trace = fit_least_squares(init, sample, replace(config, seed=run_seed), constraints, head, features)
        finals.append(trace.final_loss)
        if best is None or trace.final_loss < best[1].final_loss:
            best = (net, replace(trace, restart_index=r))
    net, trace = best
    return net, replace(trace, restart_losses=tuple(finals))


def normal_equation_fit(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Ordinary least squares ``[slope..., intercept]`` via ``lstsq``."""
    design = np.column_stack([np.asarray(x, dtype=float).reshape(len(y), -1), np.ones(len(y))])
    coef, *_ = np.linalg.lstsq(design, np.asarray(y, dtype=float), rcond=None)
    return coef


def params_equal(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))
