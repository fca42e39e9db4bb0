"""Rate exponents in closed form, and the sweeps that measure them.

The closed forms give the power of ``n`` in the error bounds: ``2ab/(2ab+1)``
for regression with an ``a``-Hölder head over a ``b``-complex adapter class,
a penalty factor when the pre-trained model itself carries error, half the
regression exponent for plug-in classification, and per-layer exponents for
compositions of sparse Hölder maps.

The sweeps run the corresponding experiments (error against ``n``, against
adapter depth, and against source sample size ``m``) and read slopes off
log-log plots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .caulking import (
    AdapterSpec,
    PretrainedModel,
    caulk_fit,
    excess_error,
    l2_error,
    plugin_classify,
    pretrain_empirical,
    pretrain_oracle,
    scratch_fit,
)
from .errors import SpecError
from .fitting import FitConfig
from .function_spaces import CovariateDistribution, TargetFunction, make_regression_sample
from .network import ReluNetworkSpec
from .parallel import run_cells
from .seeding import derive_seed

MODEL_KINDS = ("caulk", "scratch", "truth")
ALPHA_CONVENTIONS = ("min", "max")
MIN_DEPTH_SLACK = 0.05  # a depth counts as minimal if within 5% of the best


def _check_alpha_beta(alpha: float, beta: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise SpecError(f"alpha must lie in (0, 1], got {alpha}")
    if not beta > 0.0 or not math.isfinite(beta):
        raise SpecError(f"beta must be positive and finite, got {beta}")


def theoretical_exponent(alpha: float, beta: float) -> float:
    """Regression rate exponent ``2ab / (2ab + 1)``."""
    _check_alpha_beta(alpha, beta)
    ab = 2.0 * alpha * beta
    return ab / (ab + 1.0)


def corollary_exponent(alpha: float, beta: float, gamma_m: float) -> float:
    """Regression exponent when the pre-trained pair is only approximately caulkable.

    Multiplies the error-free exponent by ``1 - g / (b (a (b - g) + 1))``;
    ``gamma_m = 0`` recovers :func:`theoretical_exponent`.
    """
    _check_alpha_beta(alpha, beta)
    if not 0.0 <= gamma_m < beta:
        raise SpecError(f"gamma_m must lie in [0, beta), got {gamma_m}")
    penalty = gamma_m / (beta * (alpha * (beta - gamma_m) + 1.0))
    return theoretical_exponent(alpha, beta) * (1.0 - penalty)


def classification_exponent(alpha: float, beta: float) -> float:
    """Plug-in classification exponent ``ab / (2ab + 1)``."""
    _check_alpha_beta(alpha, beta)
    return alpha * beta / (2.0 * alpha * beta + 1.0)


@dataclass(frozen=True)
class CompositionExponents:
    alphas: tuple[float, ...]
    per_layer: tuple[float, ...]
    worst: float
    index_range: tuple[int, int]
    convention: str


def composition_exponents(
    layers: Sequence[tuple[float, int]],
    index_range: tuple[int, int] | None = None,
    convention: str = "min",
) -> CompositionExponents:
    """Per-layer exponents ``2 a_i b_i / (2 a_i b_i + t_i)`` for ``layers = [(b_i, t_i), ...]``.

    ``a_i`` is the product of ``min(1, b_l)`` over the layers after ``i``
    (``max`` under the other convention). ``worst`` is the smallest
    exponent over ``index_range`` (1-based, inclusive), i.e. the slowest rate.
    """
    if convention not in ALPHA_CONVENTIONS:
        raise SpecError(f"unknown alpha convention {convention!r}")
    H = len(layers)
    if H == 0:
        raise SpecError("need at least one layer")
    for beta, t in layers:
        if not beta > 0 or t < 1:
            raise SpecError(f"invalid layer (beta={beta}, t={t})")
    lo, hi = (1, H) if index_range is None else index_range
    if not 1 <= lo <= hi <= H:
        raise SpecError(f"index range ({lo}, {hi}) is empty or outside 1..{H}")
    pick = min if convention == "min" else max
    alphas = []
    for i in range(H):
        a = 1.0
        for beta, _ in layers[i + 1 :]:
            a *= pick(1.0, beta)
        alphas.append(a)
    per_layer = tuple(2 * a * b / (2 * a * b + t) for a, (b, t) in zip(alphas, layers))
    worst = min(per_layer[lo - 1 : hi])
    return CompositionExponents(tuple(alphas), per_layer, worst, (lo, hi), convention)


# --- tables and power-law fits ----------------------------------------------


@dataclass(frozen=True)
class RateRow:
    n: int
    trials: int
    mean_error: float
    std_error: float


@dataclass(frozen=True)
class RateTable:
    rows: tuple[RateRow, ...]
    config_hash: str = ""
    model_kind: str = ""
    train_losses: tuple[float, ...] = field(default=(), compare=False)
    trials: tuple["TrialResult", ...] = field(default=(), compare=False)

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise SpecError("rate table n values must be strictly increasing")
        for r in self.rows:
            if r.trials < 1 or r.mean_error < 0 or r.std_error < 0:
                raise SpecError(f"invalid rate row {r}")

    @classmethod
    def from_arrays(cls, ns, errors, std_errors=None, trials: int = 1, **meta) -> "RateTable":
        std_errors = np.zeros(len(ns)) if std_errors is None else std_errors
        rows = tuple(RateRow(int(n), trials, float(e), float(s)) for n, e, s in zip(ns, errors, std_errors))
        return cls(rows, **meta)

    @property
    def ns(self) -> np.ndarray:
        return np.array([r.n for r in self.rows], dtype=float)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.mean_error for r in self.rows])


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    intercept: float
    r_squared: float
    n_range: tuple[int, int]

    def predict(self, n) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(n, dtype=float) ** self.exponent


def fit_power_law(table: RateTable) -> ExponentFit:
    """OLS of ``ln(mean_error)`` on ``ln(n)``; the slope is the exponent."""
    if len(table.rows) < 3:
        raise SpecError("need at least 3 rows to fit a power law")
    errors = table.errors
    if np.any(errors <= 0):
        raise SpecError("power-law fit needs strictly positive errors")
    x, y = np.log(table.ns), np.log(errors)
    res = stats.linregress(x, y)
    ss_res = float(np.sum((y - (res.intercept + res.slope * x)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # constant data: the fit is exact, call it r^2 = 1
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return ExponentFit(float(res.slope), float(res.intercept), r2, (table.rows[0].n, table.rows[-1].n))


def spearman(values: Sequence[float], positions: Sequence[float] | None = None) -> float:
    """Rank correlation of ``values`` with ``positions`` (default: their order)."""
    positions = np.arange(len(values)) if positions is None else positions
    rho = stats.spearmanr(positions, values).statistic
    return float(rho)


def _aggregate(errors: Sequence[float]) -> tuple[float, float]:
    e = np.asarray(errors, dtype=float)
    se = float(np.std(e, ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0
    return float(np.mean(e)), se


# --- rate sweep ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateSweepSetup:
    """Everything one error-versus-n experiment needs.

    ``model`` chooses the estimator: ``caulk`` fits an adapter into
    ``pretrained``, ``scratch`` fits ``scratch_spec`` end to end, and
    ``truth`` evaluates the target itself (no fitting, zero error).
    """

    target: TargetFunction
    model: str
    n_grid: tuple[int, ...]
    trials: int = 10
    noise_sigma: float = 0.1
    n_mc: int = 20000
    fit: FitConfig = FitConfig()
    dist: CovariateDistribution | None = None
    pretrained: PretrainedModel | None = None
    adapter: AdapterSpec = AdapterSpec()
    scratch_spec: ReluNetworkSpec | None = None
    warm_start: bool = False
    config_hash: str = ""

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise SpecError(f"unknown model kind {self.model!r}")
        if self.trials < 1:
            raise SpecError("trials must be positive")
        if self.model == "caulk" and self.pretrained is None:
            raise SpecError("caulk sweeps need a pretrained model")
        if self.model == "scratch" and self.scratch_spec is None:
            raise SpecError("scratch sweeps need a network spec")
        if self.dist is None:
            object.__setattr__(self, "dist", CovariateDistribution.uniform(self.target.input_dim))


@dataclass(frozen=True)
class TrialResult:
    error: float
    train_loss: float
    n: int = 0
    trial: int = 0
    std_error: float = 0.0  # Monte Carlo error of ``error``
    excess: float = math.nan  # plug-in classification excess risk, scores read as probabilities


def fit_trial(setup: RateSweepSetup, n: int, trial: int, seed: int) -> tuple[object, TrialResult]:
    """Fitted model and its evaluation for one ``(n, trial)`` cell.

    The sample is seeded by ``(seed, "sample", n, trial)`` and the fit by
    ``(seed, "fit", n, trial)``; the Monte Carlo points depend on the trial
    only, so errors at different ``n`` are paired.
    """
    f = setup.target
    mc_seed = derive_seed(seed, "mc", trial)
    if setup.model == "truth":
        err = l2_error(f, f, setup.dist, setup.n_mc, mc_seed)
        return f, TrialResult(err.estimate, 0.0, n, trial, err.std_error, 0.0)
    sample = make_regression_sample(f, setup.dist, n, setup.noise_sigma, derive_seed(seed, "sample", n, trial))
    config = replace(setup.fit, seed=derive_seed(seed, "fit", n, trial))
    if setup.model == "caulk":
        model = caulk_fit(setup.pretrained, setup.adapter, sample, config, warm_start=setup.warm_start)
        loss = model.trace.final_loss
    else:
        model, trace = scratch_fit(setup.scratch_spec, sample, config)
        loss = trace.final_loss
    err = l2_error(model, f, setup.dist, setup.n_mc, mc_seed)
    excess = excess_error(plugin_classify(model), f, setup.dist, setup.n_mc, mc_seed).estimate
    return model, TrialResult(err.estimate, loss, n, trial, err.std_error, excess)


def run_trial(setup: RateSweepSetup, n: int, trial: int, seed: int) -> TrialResult:
    return fit_trial(setup, n, trial, seed)[1]


def run_rate_sweep(setup: RateSweepSetup, seed: int, workers: int | None = 1) -> RateTable:
    """Mean and standard error of the L2 error over ``trials`` per ``n``."""
    grid = tuple(int(n) for n in setup.n_grid)
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise SpecError("n grid must be nonempty and strictly increasing")
    if min(grid) < 1:
        raise SpecError("sample sizes must be positive")
    cells = [((n, t), (setup, n, t, seed)) for n in grid for t in range(setup.trials)]
    results = dict(run_cells(run_trial, cells, workers))
    rows, losses = [], []
    for n in grid:
        per = [results[(n, t)] for t in range(setup.trials)]
        mean, se = _aggregate([r.error for r in per])
        rows.append(RateRow(n, setup.trials, mean, se))
        losses.append(float(np.mean([r.train_loss for r in per])))
    trials = tuple(results[(n, t)] for n in grid for t in range(setup.trials))
    return RateTable(tuple(rows), setup.config_hash, setup.model, tuple(losses), trials)


# --- depth sweep --------------------------------------------------------------


@dataclass(frozen=True)
class DepthRow:
    variant: str
    depth: int
    mean_error: float
    std_error: float
    is_min: bool


@dataclass(frozen=True)
class DepthTable:
    rows: tuple[DepthRow, ...]
    config_hash: str = ""

    def min_depth(self, variant: str) -> int:
        return next(r.depth for r in self.rows if r.variant == variant and r.is_min)

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(r.variant for r in self.rows))


@dataclass(frozen=True, eq=False)
class DepthSweepSetup:
    target: TargetFunction
    variants: tuple[tuple[str, PretrainedModel], ...]
    depths: tuple[int, ...]
    n: int
    trials: int = 5
    width: int = 8
    noise_sigma: float = 0.1
    n_mc: int = 20000
    fit: FitConfig = FitConfig()
    dist: CovariateDistribution | None = None
    config_hash: str = ""

    def __post_init__(self):
        if not self.depths:
            raise SpecError("depth grid is empty")
        if not self.variants:
            raise SpecError("need at least one pretrained variant")
        names = [name for name, _ in self.variants]
        if len(set(names)) != len(names):
            raise SpecError("variant names must be unique")
        if self.dist is None:
            object.__setattr__(self, "dist", CovariateDistribution.uniform(self.target.input_dim))


def _depth_trial(setup: DepthSweepSetup, variant: int, depth: int, trial: int, seed: int) -> float:
    f = setup.target
    _, pretrained = setup.variants[variant]
    # samples depend on the trial only, so every (variant, depth) sees the same data
    sample = make_regression_sample(f, setup.dist, setup.n, setup.noise_sigma, derive_seed(seed, "sample", trial))
    config = replace(setup.fit, seed=derive_seed(seed, "fit", depth, trial))
    model = caulk_fit(pretrained, AdapterSpec(depth, setup.width), sample, config)
    return l2_error(model, f, setup.dist, setup.n_mc, derive_seed(seed, "mc", trial)).estimate


def minimal_depth(depths: Sequence[int], errors: Sequence[float], slack: float = MIN_DEPTH_SLACK) -> int:
    """Smallest depth whose error is within ``slack`` (relative) of the best."""
    best = min(errors)
    return min(d for d, e in zip(depths, errors) if e <= best * (1.0 + slack))


def run_depth_sweep(setup: DepthSweepSetup, seed: int, workers: int | None = 1) -> DepthTable:
    depths = tuple(int(d) for d in setup.depths)
    cells = [
        ((v, d, t), (setup, v, d, t, seed))
        for v in range(len(setup.variants))
        for d in depths
        for t in range(setup.trials)
    ]
    results = dict(run_cells(_depth_trial, cells, workers))
    rows = []
    for v, (name, _) in enumerate(setup.variants):
        stats_ = [_aggregate([results[(v, d, t)] for t in range(setup.trials)]) for d in depths]
        best = minimal_depth(depths, [m for m, _ in stats_])
        rows.extend(DepthRow(name, d, m, s, d == best) for d, (m, s) in zip(depths, stats_))
    return DepthTable(tuple(rows), setup.config_hash)


# --- source-size sweep --------------------------------------------------------


ORACLE = "oracle"


@dataclass(frozen=True)
class MSweepRow:
    m: int | str  # ORACLE for exact pre-training
    exponent: float
    r_squared: float
    table: RateTable | None = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class MSweepSetup:
    """Error-versus-n sweeps for pre-trained models built from ``m`` source samples.

    ``m_grid`` entries are positive integers or ``"oracle"`` (exact outer
    layers). ``source_spec`` is the network fitted on the source sample and
    ``split`` its frozen interface; ``oracle_split`` is the matching split of
    the target composition used for the oracle entry.
    """

    target: TargetFunction
    m_grid: tuple
    n_grid: tuple[int, ...]
    source: CovariateDistribution
    source_spec: ReluNetworkSpec
    split: tuple[int, int]
    oracle_split: tuple[int, int]
    trials: int = 10
    noise_sigma: float = 0.1
    n_mc: int = 20000
    fit: FitConfig = FitConfig()
    source_fit: FitConfig = FitConfig()
    adapter: AdapterSpec = AdapterSpec()
    oracle_adapter: AdapterSpec | None = None
    warm_start: bool = True
    dist: CovariateDistribution | None = None
    config_hash: str = ""

    def __post_init__(self):
        numeric = [m for m in self.m_grid if m != ORACLE]
        if not self.m_grid:
            raise SpecError("m grid is empty")
        if any(not isinstance(m, (int, np.integer)) or m < 1 for m in numeric):
            raise SpecError("m grid entries must be positive integers or 'oracle'")
        if any(b <= a for a, b in zip(numeric, numeric[1:])):
            raise SpecError("m grid must be increasing")
        if ORACLE in self.m_grid and self.m_grid[-1] != ORACLE:
            raise SpecError("'oracle' must come last in the m grid")
        if self.dist is None:
            object.__setattr__(self, "dist", CovariateDistribution.uniform(self.target.input_dim))


def m_sweep_pretrained(setup: MSweepSetup, m, seed: int) -> PretrainedModel:
    if m == ORACLE:
        return pretrain_oracle(setup.target, setup.oracle_split)
    return pretrain_empirical(
        setup.target, setup.source, int(m), setup.source_spec, setup.split, setup.source_fit,
        setup.noise_sigma, derive_seed(seed, "pretrain"),
    )


def run_m_sweep(setup: MSweepSetup, seed: int, workers: int | None = 1) -> list[MSweepRow]:
    rows = []
    for m in setup.m_grid:
        pretrained = m_sweep_pretrained(setup, m, seed)
        adapter = setup.oracle_adapter if m == ORACLE and setup.oracle_adapter is not None else setup.adapter
        rate = RateSweepSetup(
            setup.target, "caulk", setup.n_grid, setup.trials, setup.noise_sigma, setup.n_mc,
            setup.fit, setup.dist, pretrained, adapter, warm_start=setup.warm_start,
            config_hash=setup.config_hash,
        )
        # the target-side seed is shared across m so every m sees the same samples
        table = run_rate_sweep(rate, derive_seed(seed, "target"), workers)
        fit = fit_power_law(table)
        rows.append(MSweepRow(m, fit.exponent, fit.r_squared, table))
    return rows


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent pairs that increase, for a sequence expected to be nonincreasing."""
    return sum(1 for a, b in zip(values, values[1:]) if b > a)
