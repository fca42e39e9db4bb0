"""Numerical checks of the inequalities behind the rate theorems.

Covering numbers of finite function classes are computed exactly (subset
search with branch and bound), which lets the composition covering bound
and the approximation bound be checked with both sides brute-forced. The
sub-Gamma maximal inequality is checked by Monte Carlo, the quadratic
implication by randomized search, and the oracle-inequality shape of the
main bound is reported as a fitted constant.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SpecError
from .function_spaces import holder_constant_estimate
from .network import FiniteNetworkClass, ReluNetwork, forward
from .seeding import derive_seed, make_rng

EXHAUSTIVE_CAP = 24
TRIANGLE_TOL = 1e-9
BALL_RTOL = 1e-9  # relative slack on ball membership, absorbs rounding in distances
GAMMA_GRID = np.logspace(-6, 3, 91)


# --- metric sets and covers ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricPointSet:
    elements: tuple
    distances: np.ndarray

    def __post_init__(self):
        d = np.array(self.distances, dtype=float)
        k = len(self.elements)
        if d.shape != (k, k):
            raise SpecError(f"distance matrix must be {k}x{k}, got {d.shape}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise SpecError("distances must be finite and nonnegative")
        if np.any(np.diag(d) != 0):
            raise SpecError("distance matrix must have a zero diagonal")
        if not np.allclose(d, d.T, rtol=0, atol=TRIANGLE_TOL):
            raise SpecError("distance matrix must be symmetric")
        if k:
            # d[i, k] <= d[i, j] + d[j, k] for all triples, one i at a time
            tol = TRIANGLE_TOL * max(1.0, float(d.max()))
            for i in range(k):
                if (d[i][None, :] - d[i][:, None] - d).max() > tol:
                    raise SpecError("distance matrix violates the triangle inequality")
        d.setflags(write=False)
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "distances", d)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def diameter(self) -> float:
        return float(self.distances.max()) if len(self) else 0.0


@dataclass(frozen=True)
class CoverResult:
    delta: float
    exact_size: int | None
    greedy_size: int
    packing_lower_bound: int
    method: str
    centers: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return self.exact_size if self.exact_size is not None else self.greedy_size


def _within(d: np.ndarray, delta: float) -> np.ndarray:
    return d <= delta * (1.0 + BALL_RTOL)


def _greedy_cover(balls: list[int], full: int) -> list[int]:
    uncovered, chosen = full, []
    while uncovered:
        best = max(range(len(balls)), key=lambda i: (bin(balls[i] & uncovered).count("1"), -i))
        chosen.append(best)
        uncovered &= ~balls[best]
    return chosen


def _exact_cover(balls: list[int], full: int, upper: list[int]) -> list[int]:
    """Smallest set of balls covering ``full``; ``upper`` is a known cover."""
    k = len(balls)
    best = list(upper)
    max_ball = max(bin(b).count("1") for b in balls)
    # balls containing each point, biggest first
    holders = [sorted((i for i in range(k) if balls[i] >> p & 1), key=lambda i: -bin(balls[i]).count("1")) for p in range(k)]

    def search(uncovered: int, chosen: list[int]) -> None:
        nonlocal best
        if not uncovered:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        remaining = bin(uncovered).count("1")
        if len(chosen) + math.ceil(remaining / max_ball) >= len(best):
            return
        # branch on the uncovered point with the fewest covering balls
        point = min((p for p in range(k) if uncovered >> p & 1), key=lambda p: len(holders[p]))
        for i in holders[point]:
            chosen.append(i)
            search(uncovered & ~balls[i], chosen)
            chosen.pop()

    search(full, [])
    return best


def _packing(d: np.ndarray, delta: float) -> int:
    # points pairwise more than 2*delta apart need distinct internal centers
    chosen: list[int] = []
    for i in range(d.shape[0]):
        if all(not _within(d[i, j], 2.0 * delta) for j in chosen):
            chosen.append(i)
    return len(chosen)


def covering_number(points: MetricPointSet, delta: float, mode: str = "exhaustive") -> CoverResult:
    """Internal delta-cover (centers from the set) of a finite metric set.

    ``exhaustive`` finds the minimum by branch and bound (at most 24
    points); ``greedy`` returns the greedy cover size only. Both report a
    packing lower bound: a maximal set of points pairwise farther apart than
    ``2 delta``, no two of which fit in one ball.
    """
    if not delta > 0:
        raise SpecError("delta must be positive")
    if mode not in ("exhaustive", "greedy"):
        raise SpecError(f"unknown covering mode {mode!r}")
    k = len(points)
    if k == 0:
        return CoverResult(delta, 0, 0, 0, mode)
    if mode == "exhaustive" and k > EXHAUSTIVE_CAP:
        raise SpecError(f"exhaustive covering handles at most {EXHAUSTIVE_CAP} points, got {k}")
    d = points.distances
    inside = _within(d, delta)
    balls = [sum(1 << j for j in np.flatnonzero(inside[i])) for i in range(k)]
    full = (1 << k) - 1
    greedy = _greedy_cover(balls, full)
    packing = _packing(d, delta)
    if mode == "greedy":
        return CoverResult(delta, None, len(greedy), packing, mode, tuple(greedy))
    exact = greedy if len(greedy) == packing else _exact_cover(balls, full, greedy)
    return CoverResult(delta, len(exact), len(greedy), packing, mode, tuple(sorted(exact)))


def _evaluate(member, probes: np.ndarray) -> np.ndarray:
    if isinstance(member, ReluNetwork):
        out = forward(member, probes)
    else:
        out = np.asarray(member(probes), dtype=float)
    return out.reshape(probes.shape[0], -1)


def function_values(members: Sequence, probes: np.ndarray) -> np.ndarray:
    """Stack of member outputs on the probes, shape ``(members, probes, out_dim)``."""
    probes = np.asarray(probes, dtype=float)
    if probes.ndim == 1:
        probes = probes.reshape(-1, 1)
    if probes.shape[0] == 0:
        raise SpecError("probe set is empty")
    return np.stack([_evaluate(m, probes) for m in members])


def sup_distances(values: np.ndarray) -> np.ndarray:
    """Pairwise sup over probes of the output-space Euclidean distance."""
    diff = values[:, None, :, :] - values[None, :, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)).max(axis=-1)


def function_class_metric(members, probes: np.ndarray) -> MetricPointSet:
    """Finite function class under the sup norm over ``probes``.

    ``members`` is a :class:`FiniteNetworkClass` or any sequence of
    callables (or networks). For scalar outputs the distance is
    ``max_p |f(p) - g(p)|``.
    """
    items = members.members if isinstance(members, FiniteNetworkClass) else tuple(members)
    return MetricPointSet(items, sup_distances(function_values(items, probes)))


# --- composition covering and approximation bounds ----------------------------


@dataclass(frozen=True, eq=False)
class HolderHead:
    """A frozen head with its Hölder exponent and constant on ``domain``."""

    fn: Callable[[np.ndarray], np.ndarray]
    alpha: float
    constant: float
    domain: tuple[float, float]
    name: str = ""

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(z), dtype=float)


@dataclass(frozen=True, eq=False)
class CoveringInstance:
    """Finite adapter class ``G``, head, extractor and probe sets for the two bounds."""

    adapters: tuple
    head: HolderHead
    extractor: Callable[[np.ndarray], np.ndarray]
    nu_probes: np.ndarray
    adapter_probes: np.ndarray
    name: str = ""
    extractor_name: str = ""
    adapter_names: tuple[str, ...] = ()

    def all_adapter_probes(self) -> np.ndarray:
        """Adapter-domain probes together with the extractor image of the nu probes.

        Including the image makes every sup over the adapter domain dominate
        the corresponding sup over the nu probes, as the bound requires.
        """
        image = np.asarray(self.extractor(self.nu_probes), dtype=float).reshape(len(self.nu_probes), -1)
        base = np.asarray(self.adapter_probes, dtype=float).reshape(-1, image.shape[1])
        return np.vstack([base, image])


def _composed_values(instance: CoveringInstance, adapters) -> np.ndarray:
    z = np.asarray(instance.extractor(instance.nu_probes), dtype=float)
    z = z.reshape(len(instance.nu_probes), -1)
    vals = function_values(adapters, z)  # (k, p, out)
    return np.stack([instance.head(v).reshape(v.shape[0], -1) for v in vals])


def _head_range(values: np.ndarray) -> tuple[float, float]:
    return float(values.min()), float(values.max())


def check_head_precondition(head: HolderHead, values: np.ndarray, num_pairs: int = 20000, seed: int = 0) -> float:
    """Measured Hölder constant of the head; rejects if it exceeds the declared one.

    The adapter outputs on the probes must also stay inside the head's
    declared domain, otherwise the declared constant says nothing.
    """
    lo, hi = _head_range(values)
    dlo, dhi = head.domain
    if lo < dlo - 1e-12 or hi > dhi + 1e-12:
        raise SpecError(f"adapter outputs span [{lo:.4g}, {hi:.4g}], outside the head domain [{dlo}, {dhi}]")
    measured = holder_constant_estimate(head, head.alpha, num_pairs, seed, dim=1, bounds=(dlo, dhi))
    if measured > head.constant * (1.0 + 1e-9):
        raise SpecError(
            f"head {head.name or '?'} is not {head.alpha}-Hölder with constant {head.constant}: "
            f"measured {measured:.6g}"
        )
    return float(measured)


@dataclass
class CoveringReport:
    instance: str
    alpha: float
    c_alpha: float
    measured_constant: float
    deltas: list[float]
    left: list[int]  # N(delta, F) under L-inf(nu)
    right: list[int]  # N((delta / C)^(1/alpha), G) under L-inf
    holds: list[bool]
    passed: bool
    probative: bool = True
    counterexample: dict | None = None

    def to_json(self) -> dict:
        return asdict(self)


def check_composition_covering(
    instance: CoveringInstance,
    deltas: Sequence[float],
    c_alpha: float | None = None,
    check_head: bool = True,
) -> CoveringReport:
    """Exact covering numbers of ``F = {g_h o g_a o g_e}`` against those of ``G``.

    ``c_alpha`` overrides the head's declared constant in the bound (the
    precondition is still checked against the declared constant), which is
    how a deliberately broken bound is injected.
    """
    head = instance.head
    c = head.constant if c_alpha is None else c_alpha
    adapters = instance.adapters
    if len(adapters) > EXHAUSTIVE_CAP:
        raise SpecError(f"adapter class has {len(adapters)} members, above the exhaustive cap {EXHAUSTIVE_CAP}")
    g_values = function_values(adapters, instance.all_adapter_probes())
    measured = check_head_precondition(head, g_values) if check_head else math.nan
    f_set = MetricPointSet(tuple(range(len(adapters))), sup_distances(_composed_values(instance, adapters)))
    g_set = MetricPointSet(tuple(range(len(adapters))), sup_distances(g_values))
    left, right, holds = [], [], []
    counterexample = None
    for delta in deltas:
        nf = covering_number(f_set, delta).exact_size
        if c == 0:
            ng = 1  # a constant head maps every adapter to the same function
        else:
            ng = covering_number(g_set, (delta / c) ** (1.0 / head.alpha)).exact_size
        left.append(nf)
        right.append(ng)
        holds.append(nf <= ng)
        if nf > ng and counterexample is None:
            counterexample = {"delta": delta, "left": nf, "right": ng, "c_alpha": c}
    return CoveringReport(
        instance.name, head.alpha, c, measured, [float(d) for d in deltas], left, right, holds, all(holds),
        counterexample=counterexample,
    )


@dataclass
class ApproximationReport:
    instance: str
    left: float  # min over G of the L2(Q) distance
    left_std_error: float
    right: float  # C * (min over G of the sup distance to the ideal adapter)^alpha
    best_left: int
    best_right: int
    passed: bool
    probative: bool = True

    def to_json(self) -> dict:
        return asdict(self)


def check_approximation_bound(
    instance: CoveringInstance,
    ideal_adapter: Callable[[np.ndarray], np.ndarray],
    q_probes: np.ndarray,
    c_alpha: float | None = None,
    check_head: bool = True,
    tolerance_se: float = 3.0,
) -> ApproximationReport:
    """``min_G ||g_h g_a g_e - g_h g*_a g_e||_{L2(Q)} <= C (min_G ||g_a - g*_a||_inf)^alpha``.

    The left side is a Monte Carlo L2 norm over ``q_probes`` (standard
    error by the delta method); the sup on the right runs over the adapter
    probes plus the extractor image of ``q_probes``.
    """
    head = instance.head
    c = head.constant if c_alpha is None else c_alpha
    q = np.asarray(q_probes, dtype=float)
    if q.ndim == 1:
        q = q.reshape(-1, 1)
    if q.shape[0] < 2:
        raise SpecError("need at least two Q probes")
    z_q = np.asarray(instance.extractor(q), dtype=float).reshape(q.shape[0], -1)
    sup_probes = np.vstack([instance.all_adapter_probes(), z_q])
    members = tuple(instance.adapters)
    g_values = function_values(members, sup_probes)
    star_values = function_values((ideal_adapter,), sup_probes)[0]
    if check_head:
        check_head_precondition(head, np.concatenate([g_values.ravel(), star_values.ravel()]))
    sup_gap = np.sqrt(np.sum((g_values - star_values[None]) ** 2, axis=-1)).max(axis=-1)
    best_right = int(np.argmin(sup_gap))
    right = c * float(sup_gap[best_right]) ** head.alpha
    # left side on the Q probes
    a_q = function_values(members, z_q)
    star_q = np.asarray(ideal_adapter(z_q), dtype=float).reshape(q.shape[0], -1)
    target = head(star_q).reshape(q.shape[0], -1)
    sq = np.array([np.sum((head(v).reshape(q.shape[0], -1) - target) ** 2, axis=1) for v in a_q])
    means = sq.mean(axis=1)
    best_left = int(np.argmin(means))
    left = math.sqrt(means[best_left])
    se_mean = float(np.std(sq[best_left], ddof=1) / math.sqrt(q.shape[0]))
    left_se = se_mean / (2.0 * left) if left > 0 else math.sqrt(se_mean)
    passed = left <= right + tolerance_se * left_se + 1e-12
    return ApproximationReport(instance.name, left, left_se, right, best_left, best_right, passed)


# --- maximal inequality -------------------------------------------------------


def maximal_inequality_bound(n: int, sigma: float, f_scale: float) -> float:
    """``16 inf_g (s^2 ln(N/g) + g max{s^2, 2F^2 ln(N/g)} + 2 g F^2)`` on a log grid.

    The grid runs over ``g`` in ``[1e-6, 1e3]`` (91 points) restricted to
    ``g <= N`` so the logarithm stays nonnegative; minimizing over a grid
    can only overstate the infimum.
    """
    if n < 1:
        raise SpecError("N must be at least 1")
    s2, f2 = sigma * sigma, f_scale * f_scale
    gammas = GAMMA_GRID[GAMMA_GRID <= n]
    logs = np.log(n / gammas)
    values = s2 * logs + gammas * np.maximum(s2, 2.0 * f2 * logs) + 2.0 * gammas * f2
    return float(16.0 * values.min())


@dataclass
class MaximalInequalityResult:
    n: int
    sigma: float
    f_scale: float
    trials: int
    empirical: float
    std_error: float
    bound: float
    holds: bool

    @property
    def ratio(self) -> float:
        return self.bound / self.empirical if self.empirical > 0 else math.inf

    def to_json(self) -> dict:
        return {**asdict(self), "ratio": self.ratio}


def mc_maximal_inequality(
    n: int,
    sigma: float,
    f_scale: float | None = None,
    trials: int = 100_000,
    seed: int = 0,
    chunk_elements: int = 4_000_000,
) -> MaximalInequalityResult:
    """Monte Carlo ``E max_i Z_i^2`` for ``N`` i.i.d. ``N(0, sigma^2)`` against the bound.

    A centered Gaussian is sub-Gamma with variance proxy ``sigma^2`` for any
    scale ``F``; ``f_scale`` defaults to ``sigma``.
    """
    if n < 1:
        raise SpecError("N must be at least 1")
    if trials < 1000:
        raise SpecError("need at least 1000 trials")
    if sigma < 0:
        raise SpecError("sigma must be nonnegative")
    f_scale = sigma if f_scale is None else f_scale
    rng = make_rng(seed, "maximal-inequality", n)
    rows = max(1, chunk_elements // n)
    maxima = np.empty(trials)
    for start in range(0, trials, rows):
        stop = min(trials, start + rows)
        z = rng.standard_normal((stop - start, n)) * sigma
        maxima[start:stop] = np.max(z * z, axis=1)
    empirical = float(maxima.mean())
    se = float(maxima.std(ddof=1) / math.sqrt(trials))
    bound = maximal_inequality_bound(n, sigma, f_scale)
    return MaximalInequalityResult(n, sigma, f_scale, trials, empirical, se, bound, empirical <= bound)


# --- quadratic implication ------------------------------------------------------


QUAD_RTOL = 1e-12  # the conclusion is tight at the premise boundary


def quadratic_conclusion(a: float, b: float, c: float) -> float:
    return a + b * b / 2.0 + b * math.sqrt(a + b * b / 4.0 + c * c)


def quadratic_counterexamples(a: float, b: float, c: float, x_grid: np.ndarray) -> np.ndarray:
    """Grid points where ``x^2 <= a + b sqrt(x^2 + c^2)`` holds but the conclusion fails."""
    if min(a, b, c) < 0:
        raise SpecError("a, b, c must be nonnegative")
    x = np.asarray(x_grid, dtype=float)
    x2 = x * x
    premise = x2 <= a + b * np.sqrt(x2 + c * c)
    bound = quadratic_conclusion(a, b, c)
    fails = x2 > bound * (1.0 + QUAD_RTOL) + 1e-300
    return x[premise & fails]


def check_quadratic_implication(a: float, b: float, c: float, x_grid: np.ndarray) -> bool:
    """True iff no grid point satisfies the premise and violates the conclusion."""
    return quadratic_counterexamples(a, b, c, x_grid).size == 0


def quadratic_grid(a: float, b: float, c: float, points: int = 2001) -> np.ndarray:
    """Dense symmetric grid reaching past the conclusion, plus the premise boundary."""
    edge = math.sqrt(quadratic_conclusion(a, b, c))
    span = 1.5 * edge + 1.0
    grid = np.linspace(-span, span, points)
    near = edge * (1.0 + np.array([-1e-9, -1e-12, 0.0, 1e-12, 1e-9]))
    return np.concatenate([grid, near, -near])


@dataclass
class QuadraticSearchResult:
    triples: int
    grid_points: int
    counterexamples: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def to_json(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def search_quadratic_implication(triples: int = 10_000, seed: int = 0, high: float = 10.0, points: int = 2001) -> QuadraticSearchResult:
    """Random ``(a, b, c)`` in ``[0, high]^3``, a few exact zeros mixed in, each on a dense grid."""
    rng = make_rng(seed, "quadratic")
    abc = rng.uniform(0.0, high, size=(triples, 3))
    # degenerate corners: zero out coordinates at random in a tenth of the triples
    mask = rng.random((triples, 3)) < 0.1
    abc[mask] = 0.0
    result = QuadraticSearchResult(triples, points)
    for a, b, c in abc:
        grid = quadratic_grid(a, b, c, points)
        bad = quadratic_counterexamples(a, b, c, grid)
        if bad.size:
            result.counterexamples.append({"a": a, "b": b, "c": c, "x": float(bad[0])})
    return result


# --- oracle-inequality shape --------------------------------------------------


@dataclass
class ConsistencyReport:
    ns: list[int]
    realized: list[float]
    denominators: list[float]
    c_hat: list[float]
    diverging: bool
    max_c_hat: float

    def to_json(self) -> dict:
        return asdict(self)


def bound_consistency_report(
    ns: Sequence[int],
    realized_mse: Sequence[float],
    approx_error: float,
    log_cover: Sequence[float] | float,
    delta: Sequence[float] | float,
    f_scale: float = 1.0,
    sigma: float = 0.1,
) -> ConsistencyReport:
    """Implied constant ``C_hat = MSE / (approx^2 + (F^2 + s^2) lnN / n + (F + s) delta)`` per ``n``.

    ``log_cover`` and ``delta`` may vary with ``n``. The constant is
    unknown, so nothing passes or fails; ``diverging`` flags a ``C_hat``
    that grows steadily with ``n`` (rank correlation above 0.8 and a final
    value more than twice the first), which would contradict the bound's
    shape.
    """
    k = len(ns)
    if k == 0 or len(realized_mse) != k:
        raise SpecError("need one realized MSE per n")
    covers = np.broadcast_to(np.asarray(log_cover, dtype=float), (k,))
    deltas = np.broadcast_to(np.asarray(delta, dtype=float), (k,))
    values = [approx_error, f_scale, sigma, *covers, *deltas, *realized_mse]
    if min(values) < 0 or min(ns) < 1:
        raise SpecError("all proxies must be nonnegative and n >= 1")
    n_arr = np.asarray(ns, dtype=float)
    denom = approx_error**2 + (f_scale**2 + sigma**2) * covers / n_arr + (f_scale + sigma) * deltas
    if np.any(denom <= 0):
        raise SpecError("bound denominator is zero")
    c_hat = np.asarray(realized_mse, dtype=float) / denom
    diverging = False
    if k >= 3 and np.ptp(c_hat) > 0:
        from scipy.stats import spearmanr

        rho = spearmanr(n_arr, c_hat).statistic
        diverging = bool(rho > 0.8 and c_hat[-1] > 2.0 * c_hat[0])
    return ConsistencyReport(
        [int(n) for n in ns], [float(v) for v in realized_mse], denom.tolist(), c_hat.tolist(),
        diverging, float(c_hat.max()),
    )


def instance_seed(seed: int, *key) -> int:
    return derive_seed(seed, "verify", *key)


# --- generated instances --------------------------------------------------------

# name -> (map, alpha, constant); every constant is exact on [0, 1]
HEADS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], float, float]] = {
    "identity": (lambda z: z, 1.0, 1.0),
    "square": (np.square, 1.0, 2.0),
    "sqrt": (lambda z: np.sqrt(np.clip(z, 0.0, None)), 0.5, 1.0),
    "sine": (lambda z: np.sin(np.pi * z) / np.pi, 1.0, 1.0),
    "logistic": (lambda z: 3.0 * z * (1.0 - z), 1.0, 3.0),
    "vee_sqrt": (lambda z: np.sqrt(np.abs(z - 0.5)), 0.5, 1.0),
    "constant": (lambda z: np.full_like(np.asarray(z, dtype=float), 0.5), 1.0, 0.0),
}

EXTRACTORS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "square": np.square,
    "cosine": lambda x: (1.0 - np.cos(np.pi * x)) / 2.0,
}

GENERATED_HEADS = ("square", "sqrt", "sine", "logistic", "vee_sqrt")
DEFAULT_DELTAS = tuple(round(0.05 * k, 2) for k in range(1, 21))
PROBES_PER_DOMAIN = 256


def make_head(name: str) -> HolderHead:
    if name not in HEADS:
        raise SpecError(f"unknown head {name!r}")
    fn, alpha, constant = HEADS[name]
    return HolderHead(fn, alpha, constant, (0.0, 1.0), name)


def affine_adapter(slope: float, intercept: float) -> ReluNetwork:
    """``z -> slope z + intercept`` as a height-1 network."""
    from .network import ReluNetworkSpec

    spec = ReluNetworkSpec(1, 1, 1, 1)
    return ReluNetwork(spec, (np.array([[float(slope)]]),), (np.array([float(intercept)]),))


class PolynomialMap:
    """``z -> c0 + c1 z + c2 z^2 + ...`` on scalar inputs."""

    def __init__(self, coefficients: Sequence[float]):
        self.coefficients = tuple(float(c) for c in coefficients)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.polynomial.polynomial.polyval(z, self.coefficients)


def generate_instance(index: int, seed: int, ideal: str = "inside") -> dict:
    """JSON-able description of one covering / approximation instance.

    Adapters form a grid of affine maps ``a z + b`` with ``a, b >= 0`` and
    ``a + b <= 1`` (so outputs stay in the head's domain ``[0, 1]``), at most
    20 of them. ``ideal`` places the ideal adapter on the grid (``inside``),
    or off it as an affine or quadratic map (``outside``).
    """
    if ideal not in ("inside", "outside"):
        raise SpecError(f"unknown ideal placement {ideal!r}")
    rng = make_rng(seed, "verify-instance", ideal, index)
    head = GENERATED_HEADS[index % len(GENERATED_HEADS)]
    extractor = tuple(EXTRACTORS)[index % len(EXTRACTORS)]
    na, nb = int(rng.integers(3, 5)), int(rng.integers(3, 6))
    a_hi = float(rng.uniform(0.4, 0.6))
    slopes = np.linspace(float(rng.uniform(0.0, 0.15)), a_hi, na)
    intercepts = np.linspace(0.0, float(rng.uniform(0.3, 1.0 - a_hi)), nb)
    adapters = [[float(a), float(b)] for a in slopes for b in intercepts]
    if ideal == "inside":
        coefficients = adapters[int(rng.integers(len(adapters)))][::-1]
    elif index % 2 == 0:
        a = float(rng.uniform(slopes[0], slopes[-1]))
        coefficients = [float(rng.uniform(0.0, 1.0 - a)), a]
    else:
        c2 = float(rng.uniform(0.2, 0.4))
        coefficients = [float(rng.uniform(0.0, 1.0 - c2)), 0.0, c2]
    return {
        "name": f"{ideal}-{index:02d}",
        "head": head,
        "extractor": extractor,
        "adapters": adapters,
        "ideal": coefficients,
        "probe_seed": derive_seed(seed, "verify-probes", ideal, index),
    }


def build_instance(desc: dict) -> tuple[CoveringInstance, PolynomialMap, np.ndarray]:
    """Instance, ideal adapter and Q probes from a description."""
    try:
        head = make_head(desc["head"])
        extractor = EXTRACTORS[desc["extractor"]]
        adapters = tuple(affine_adapter(a, b) for a, b in desc["adapters"])
        ideal = PolynomialMap(desc["ideal"])
        seed = int(desc["probe_seed"])
    except KeyError as exc:
        raise SpecError(f"instance description lacks or misnames {exc}") from None
    grid = np.linspace(0.0, 1.0, PROBES_PER_DOMAIN)
    instance = CoveringInstance(
        adapters, head, extractor, grid.reshape(-1, 1), grid.reshape(-1, 1),
        desc.get("name", ""), desc["extractor"], tuple(f"{a}z+{b}" for a, b in desc["adapters"]),
    )
    q_probes = make_rng(seed, "q-probes").random((4096, 1))
    return instance, ideal, q_probes


# --- the suite -------------------------------------------------------------------


@dataclass(frozen=True)
class VerifySettings:
    instances: int = 10
    outside_instances: int = 10
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    lemma_ns: tuple[int, ...] = (1, 10, 100, 1000)
    lemma_sigmas: tuple[float, ...] = (0.5, 1.0, 2.0)
    lemma_trials: int = 100_000
    quadratic_triples: int = 10_000
    smoke_class_size: int = 60
    c_alpha_scale: float = 1.0  # multiplies the bound's constant; 1 checks the true bound

    def __post_init__(self):
        if self.instances < 0 or self.outside_instances < 0 or self.quadratic_triples < 0:
            raise SpecError("instance counts must be nonnegative")
        if self.instances + self.outside_instances + len(self.lemma_ns) + self.quadratic_triples == 0:
            raise SpecError("verification suite is empty")
        if not self.c_alpha_scale > 0:
            raise SpecError("c_alpha_scale must be positive")
        if any(not d > 0 for d in self.deltas):
            raise SpecError("deltas must be positive")


@dataclass
class VerifySuiteResult:
    reports: dict
    failures: list[dict]

    @property
    def passed(self) -> bool:
        return not self.failures


def _smoke_covering(size: int, seed: int) -> dict:
    """Greedy covers of a class beyond the exhaustive cap; reported, never judged."""
    rng = make_rng(seed, "verify-smoke")
    grid = np.linspace(0.0, 1.0, PROBES_PER_DOMAIN)
    members = [affine_adapter(a, b) for a, b in rng.uniform(0.0, 0.5, size=(size, 2))]
    metric = function_class_metric(members, grid)
    rows = []
    for delta in (0.05, 0.1, 0.2, 0.4):
        cover = covering_number(metric, delta, "greedy")
        rows.append({"delta": delta, "greedy": cover.greedy_size, "packing": cover.packing_lower_bound})
    return {"probative": False, "class_size": size, "rows": rows}


def run_verify_suite(settings: VerifySettings, seed: int) -> VerifySuiteResult:
    """Every probative check plus the greedy smoke check, with JSON-ready reports."""
    reports: dict = {}
    failures: list[dict] = []
    inside = [generate_instance(i, seed, "inside") for i in range(settings.instances)]
    outside = [generate_instance(i, seed, "outside") for i in range(settings.outside_instances)]

    covering = []
    for desc in inside:
        instance, _, _ = build_instance(desc)
        c = instance.head.constant * settings.c_alpha_scale
        report = check_composition_covering(instance, settings.deltas, c_alpha=c)
        covering.append({**report.to_json(), "description": desc})
        if not report.passed:
            failures.append({"check": "composition_covering", "instance": desc, "counterexample": report.counterexample})
    reports["composition_covering"] = covering

    approximation = []
    for desc in inside + outside:
        instance, ideal, q = build_instance(desc)
        c = instance.head.constant * settings.c_alpha_scale
        report = check_approximation_bound(instance, ideal, q, c_alpha=c)
        approximation.append({**report.to_json(), "description": desc})
        if not report.passed:
            failures.append({"check": "approximation_bound", "instance": desc, "left": report.left, "right": report.right})
    reports["approximation_bound"] = approximation

    maximal = []
    for n in settings.lemma_ns:
        for sigma in settings.lemma_sigmas:
            result = mc_maximal_inequality(n, sigma, trials=settings.lemma_trials, seed=derive_seed(seed, "lemma", n, sigma))
            maximal.append(result.to_json())
            if not result.holds:
                failures.append({"check": "maximal_inequality", **result.to_json()})
    reports["maximal_inequality"] = maximal

    if settings.quadratic_triples:
        quad = search_quadratic_implication(settings.quadratic_triples, derive_seed(seed, "quadratic"))
        reports["quadratic_implication"] = quad.to_json()
        if not quad.passed:
            failures.append({"check": "quadratic_implication", "counterexamples": quad.counterexamples[:10]})

    if settings.smoke_class_size:
        reports["smoke_covering"] = _smoke_covering(settings.smoke_class_size, seed)
    return VerifySuiteResult(reports, failures)
