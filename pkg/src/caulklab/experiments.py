"""Config blocks to library objects.

Each builder reads one block of a parsed config and raises ``ConfigError``
naming the offending key. The sweep builders assemble complete setups for
the rate, depth and source-size experiments.
"""

from __future__ import annotations

import math

from .caulking import AdapterSpec, PretrainedModel, pretrain_empirical, pretrain_oracle
from .config import block, check_keys, config_hash, get_float, get_int, get_int_list, master_seed
from .errors import ConfigError, SpecError
from .fitting import FitConfig
from .function_spaces import CompositionSpec, CovariateDistribution, TargetFunction, make_composition
from .network import ReluNetworkSpec
from .rates import ORACLE, DepthSweepSetup, MSweepSetup, RateSweepSetup, composition_exponents, theoretical_exponent
from .seeding import derive_seed


def build_target(config: dict) -> TargetFunction:
    spec = CompositionSpec.from_config(block(config, "composition"))
    return make_composition(spec)


def build_distribution(raw: dict | None, dim: int, where: str) -> CovariateDistribution:
    if raw is None:
        return CovariateDistribution.uniform(dim)
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected a block")
    kind = raw.get("kind", "uniform_cube")
    try:
        if kind == "uniform_cube":
            check_keys(raw, ("kind",), where)
            return CovariateDistribution.uniform(dim)
        if kind == "affine_warp":
            check_keys(raw, ("kind", "slopes", "shifts"), where)
            return CovariateDistribution.warp(raw["slopes"], raw["shifts"])
        if kind == "default_shift":
            check_keys(raw, ("kind", "seed"), where)
            return CovariateDistribution.default_shift(dim, get_int(raw, "seed", 0, where=where))
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}", "missing") from None
    except (SpecError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.kind", f"unknown distribution {kind!r}")


def build_fit(config: dict, key: str = "fit") -> FitConfig:
    return FitConfig.from_config(config.get(key), key)


def _number(raw: dict, key: str, where: str) -> float:
    if raw.get(key) in ("inf", None):
        return math.inf
    return get_float(raw, key, where=where)


def build_network_spec(raw: dict | None, where: str) -> ReluNetworkSpec:
    if not isinstance(raw, dict):
        raise ConfigError(where, "missing or not a block")
    check_keys(raw, ("height", "width", "in_dim", "out_dim", "sparsity", "bound", "hidden"), where)
    hidden = raw.get("hidden")
    try:
        return ReluNetworkSpec(
            get_int(raw, "height", where=where),
            get_int(raw, "width", where=where),
            get_int(raw, "in_dim", where=where),
            get_int(raw, "out_dim", 1, where=where),
            _number(raw, "sparsity", where),
            _number(raw, "bound", where),
            tuple(hidden) if hidden is not None else None,
        )
    except SpecError as exc:
        raise ConfigError(where, str(exc)) from None


def build_adapter(raw: dict | None, where: str = "adapter") -> AdapterSpec:
    raw = raw or {}
    check_keys(raw, ("depth", "width", "sparsity", "bound"), where)
    try:
        return AdapterSpec(
            get_int(raw, "depth", 0, where=where),
            get_int(raw, "width", 8, where=where),
            sparsity=_number(raw, "sparsity", where),
            bound=_number(raw, "bound", where),
        )
    except SpecError as exc:
        raise ConfigError(where, str(exc)) from None


def _split(raw, where: str) -> tuple[int, int]:
    if not isinstance(raw, list) or len(raw) != 2 or not all(isinstance(v, int) for v in raw):
        raise ConfigError(where, "expected [i_e, i_h]")
    return int(raw[0]), int(raw[1])


PRETRAIN_KEYS = ("mode", "split", "m", "source", "network", "fit", "noise_sigma")


def build_pretrained(config: dict, target: TargetFunction, seed: int) -> PretrainedModel:
    """Oracle or empirical pre-trained model from the ``pretrain`` block."""
    raw = block(config, "pretrain")
    check_keys(raw, PRETRAIN_KEYS, "pretrain")
    mode = raw.get("mode", "oracle")
    split = _split(raw.get("split"), "pretrain.split")
    try:
        if mode == "oracle":
            return pretrain_oracle(target, split)
        if mode == "empirical":
            source = build_distribution(raw.get("source"), target.input_dim, "pretrain.source")
            return pretrain_empirical(
                target, source, get_int(raw, "m", where="pretrain", minimum=1),
                build_network_spec(raw.get("network"), "pretrain.network"), split,
                build_fit(raw, "fit"), get_float(raw, "noise_sigma", 0.1, where="pretrain"),
                derive_seed(seed, "pretrain"),
            )
    except SpecError as exc:
        raise ConfigError("pretrain", str(exc)) from None
    raise ConfigError("pretrain.mode", f"expected 'oracle' or 'empirical', got {mode!r}")


def theoretical_for(config: dict, target: TargetFunction, split: tuple[int, int] | None) -> float:
    """Rate exponent the theory predicts for this experiment.

    A ``theory`` block with ``alpha`` and ``beta`` wins; otherwise the
    slowest per-layer composition exponent over the adapter's layer range.
    """
    theory = config.get("theory")
    if isinstance(theory, dict) and "alpha" in theory and "beta" in theory:
        return theoretical_exponent(get_float(theory, "alpha", where="theory"), get_float(theory, "beta", where="theory"))
    layers = [(p.spec.beta, p.spec.active_vars) for p in target.layers]
    return composition_exponents(layers, split).worst


SWEEP_COMMON = ("master_seed", "output_dir", "composition", "trials", "noise_sigma", "n_mc", "fit", "dist", "theory")


def build_rate_setup(config: dict, model: str | None = None, n_grid: tuple[int, ...] | None = None) -> RateSweepSetup:
    """Rate-sweep setup; ``caulk`` and ``scratch`` commands reuse it with a single ``n``."""
    check_keys(config, SWEEP_COMMON + ("model", "n_grid", "n", "pretrain", "adapter", "scratch", "warm_start"))
    target = build_target(config)
    seed = master_seed(config)
    model = model or config.get("model", "caulk")
    if n_grid is None:
        n_grid = get_int_list(config, "n_grid")
    pretrained = build_pretrained(config, target, seed) if model == "caulk" else None
    scratch = build_network_spec(config.get("scratch"), "scratch") if model == "scratch" else None
    try:
        return RateSweepSetup(
            target, model, n_grid,
            trials=get_int(config, "trials", 10, minimum=1),
            noise_sigma=get_float(config, "noise_sigma", 0.1),
            n_mc=get_int(config, "n_mc", 20000, minimum=2),
            fit=build_fit(config),
            dist=build_distribution(config.get("dist"), target.input_dim, "dist"),
            pretrained=pretrained,
            adapter=build_adapter(config.get("adapter")),
            scratch_spec=scratch,
            warm_start=bool(config.get("warm_start", False)),
            config_hash=config_hash(config),
        )
    except SpecError as exc:
        raise ConfigError("model", str(exc)) from None


def build_depth_setup(config: dict) -> DepthSweepSetup:
    check_keys(config, SWEEP_COMMON + ("variants", "depths", "n", "width"))
    target = build_target(config)
    raw = config.get("variants")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("variants", "expected a non-empty list of {name, split}")
    variants = []
    for i, entry in enumerate(raw):
        where = f"variants[{i}]"
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(where, "expected a block with name and split")
        check_keys(entry, ("name", "split"), where)
        try:
            variants.append((str(entry["name"]), pretrain_oracle(target, _split(entry.get("split"), f"{where}.split"))))
        except SpecError as exc:
            raise ConfigError(f"{where}.split", str(exc)) from None
    try:
        return DepthSweepSetup(
            target, tuple(variants), get_int_list(config, "depths"),
            get_int(config, "n", minimum=1),
            trials=get_int(config, "trials", 5, minimum=1),
            width=get_int(config, "width", 8, minimum=1),
            noise_sigma=get_float(config, "noise_sigma", 0.1),
            n_mc=get_int(config, "n_mc", 20000, minimum=2),
            fit=build_fit(config),
            dist=build_distribution(config.get("dist"), target.input_dim, "dist"),
            config_hash=config_hash(config),
        )
    except SpecError as exc:
        raise ConfigError("variants", str(exc)) from None


def build_m_setup(config: dict) -> MSweepSetup:
    check_keys(config, SWEEP_COMMON + (
        "m_grid", "n_grid", "source", "source_network", "split", "oracle_split",
        "source_fit", "adapter", "oracle_adapter", "warm_start",
    ))
    target = build_target(config)
    m_grid = config.get("m_grid")
    if not isinstance(m_grid, list) or not m_grid:
        raise ConfigError("m_grid", "expected a non-empty list")
    if any(not (m == ORACLE or (isinstance(m, int) and not isinstance(m, bool))) for m in m_grid):
        raise ConfigError("m_grid", f"entries must be integers or {ORACLE!r}")
    oracle_adapter = config.get("oracle_adapter")
    try:
        return MSweepSetup(
            target, tuple(m_grid), get_int_list(config, "n_grid"),
            source=build_distribution(config.get("source"), target.input_dim, "source"),
            source_spec=build_network_spec(config.get("source_network"), "source_network"),
            split=_split(config.get("split"), "split"),
            oracle_split=_split(config.get("oracle_split"), "oracle_split"),
            trials=get_int(config, "trials", 10, minimum=1),
            noise_sigma=get_float(config, "noise_sigma", 0.1),
            n_mc=get_int(config, "n_mc", 20000, minimum=2),
            fit=build_fit(config),
            source_fit=build_fit(config, "source_fit"),
            adapter=build_adapter(config.get("adapter")),
            oracle_adapter=build_adapter(oracle_adapter, "oracle_adapter") if oracle_adapter is not None else None,
            warm_start=bool(config.get("warm_start", True)),
            dist=build_distribution(config.get("dist"), target.input_dim, "dist"),
            config_hash=config_hash(config),
        )
    except SpecError as exc:
        raise ConfigError("m_grid", str(exc)) from None
