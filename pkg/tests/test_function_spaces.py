import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from caulklab.errors import ConfigError, DimensionError, DomainError, FormatError, SpecError
from caulklab.function_spaces import (
    CompositionSpec,
    CovariateDistribution,
    LayerParams,
    SmoothLayerSpec,
    deserialize_target,
    eval_partial,
    eval_target,
    holder_constant_estimate,
    identity_layer,
    make_composition,
    make_regression_sample,
    sample_covariates,
    serialize_target,
    target_from_layers,
)

THREE_LAYER = CompositionSpec(
    (
        SmoothLayerSpec(2, 2, 2, 2.0, "polynomial"),
        SmoothLayerSpec(2, 2, 1, 0.5, "kink"),
        SmoothLayerSpec(2, 1, 2, 2.0, "polynomial"),
    ),
    seed=11,
)


def kink_layer(c, b, o, beta, dim=1):
    spec = SmoothLayerSpec(dim, 1, dim, beta, "kink")
    return LayerParams(spec, np.arange(dim).reshape(1, dim), np.full((1, dim), 1.0 / dim), [b], [c], [o], np.zeros((1, 0)))


def hand_layer(p: LayerParams, z: np.ndarray) -> np.ndarray:
    """Straight-line evaluation of one layer from its stored parameters."""
    out = []
    for j in range(p.spec.out_dim):
        r = sum(p.weights[j, k] * z[p.active[j, k]] for k in range(p.spec.active_vars)) - p.shift[j]
        if p.spec.mode == "kink":
            v = p.scale[j] * abs(r) ** p.spec.beta + p.offset[j]
        else:
            v = p.offset[j] + sum(p.poly[j, k] * r ** (k + 1) for k in range(p.poly.shape[1]))
        out.append(min(1.0, max(0.0, v)))
    return np.array(out)


def test_single_kink_layer_closed_form():
    f = make_composition(CompositionSpec((SmoothLayerSpec(1, 1, 1, 1.0, "kink"),), seed=7))
    p = f.layers[0]
    for x in (0.0, 0.2, 0.5, 0.9):
        expected = min(1.0, max(0.0, p.scale[0] * abs(x - p.shift[0]) + p.offset[0]))
        assert eval_target(f, x) == pytest.approx(expected, abs=1e-15)


def test_identity_composition():
    f = target_from_layers([identity_layer(), identity_layer()])
    assert eval_target(f, 0.3) == pytest.approx(0.3, abs=1e-15)
    xs = np.linspace(0, 1, 11).reshape(-1, 1)
    assert np.allclose(f(xs), xs[:, 0], atol=1e-15)


def test_kink_point_value():
    f = target_from_layers([kink_layer(1.0, 0.5, 0.0, 0.5)])
    assert eval_target(f, 0.5) == 0.0


def test_three_layer_matches_hand_composition():
    f = make_composition(THREE_LAYER)
    points = [(0.25, 0.75), (0.0, 0.0), (1.0, 1.0), (0.5, 0.1), (0.9, 0.3)]
    for x in points:
        z = np.array(x)
        for p in f.layers:
            z = hand_layer(p, z)
        assert eval_target(f, x) == pytest.approx(z[0], abs=1e-14)


def test_middle_layer_by_hand():
    f = make_composition(THREE_LAYER)
    z = np.array([0.1, 0.9])
    assert np.allclose(eval_partial(f, 2, 2, z), hand_layer(f.layers[1], z), atol=1e-15)


def test_each_coordinate_depends_on_t_inputs():
    f = make_composition(THREE_LAYER)
    for p in f.layers:
        assert p.active.shape == (p.spec.out_dim, p.spec.active_vars)
        assert all(len(set(row)) == p.spec.active_vars for row in p.active)


def test_composition_consistency_at_every_split():
    f = make_composition(THREE_LAYER)
    x = np.random.default_rng(0).random((100, 2))
    full = f(x)
    for k in range(1, f.depth):
        mid = eval_partial(f, 1, k, x)
        assert np.allclose(eval_partial(f, k + 1, f.depth, mid)[:, 0], full, atol=1e-15, rtol=0)
    assert np.array_equal(eval_partial(f, 1, f.depth, x)[:, 0], full)


def test_layer_outputs_stay_in_unit_cube():
    f = make_composition(THREE_LAYER)
    z = np.random.default_rng(1).random((10_000, 2))
    for k in range(1, f.depth + 1):
        z = eval_partial(f, k, k, z)
        assert z.min() >= 0.0 and z.max() <= 1.0


def test_rejections():
    with pytest.raises(SpecError, match="layer 2"):
        CompositionSpec((SmoothLayerSpec(2, 3, 2, 1.0), SmoothLayerSpec(2, 1, 2, 1.0)))
    with pytest.raises(SpecError, match="kink mode"):
        CompositionSpec((SmoothLayerSpec(1, 1, 1, 1.5, "kink"),))
    f = make_composition(THREE_LAYER)
    with pytest.raises(DomainError):
        eval_target(f, (1.2, 0.5))
    with pytest.raises(SpecError):
        eval_partial(f, 2, 4, np.array([0.5, 0.5]))
    with pytest.raises(DimensionError):
        f(np.zeros((3, 5)))


def test_generation_is_deterministic():
    a, b = make_composition(THREE_LAYER), make_composition(THREE_LAYER)
    assert serialize_target(a) == serialize_target(b)


def test_serialization_round_trip():
    f = make_composition(CompositionSpec(THREE_LAYER.layers[:2] + (SmoothLayerSpec(2, 1, 2, 1.0, "kink", center=True, gain=2.0),), seed=3))
    g = deserialize_target(serialize_target(f))
    x = np.random.default_rng(2).random((100, 2))
    assert np.array_equal(f(x), g(x))
    assert serialize_target(g) == serialize_target(f)


def test_deserialize_rejects_bad_input():
    text = serialize_target(make_composition(THREE_LAYER))
    with pytest.raises(FormatError, match="version"):
        deserialize_target(text.replace("caulk-target v1", "caulk-target v9"))
    with pytest.raises(FormatError):
        deserialize_target("\n".join(text.splitlines()[:5]))


def test_config_round_trip_and_errors():
    assert CompositionSpec.from_config(THREE_LAYER.to_config()) == THREE_LAYER
    with pytest.raises(ConfigError, match="composition.layers"):
        CompositionSpec.from_config({"seed": 1})
    with pytest.raises(ConfigError, match="beta"):
        CompositionSpec.from_config({"layers": [{"in_dim": 1, "out_dim": 1, "active_vars": 1}]})


def test_sample_covariates():
    dist = CovariateDistribution.uniform(3)
    one = sample_covariates(dist, 1, 0)
    assert one.shape == (1, 3) and one.min() >= 0 and one.max() <= 1
    assert np.array_equal(sample_covariates(dist, 50, 4), sample_covariates(dist, 50, 4))


def test_identity_warp_matches_uniform():
    warp = CovariateDistribution.warp([1.0], [0.0])
    a = sample_covariates(warp, 10_000, 1)[:, 0]
    b = sample_covariates(CovariateDistribution.uniform(1), 10_000, 2)[:, 0]
    assert stats.ks_2samp(a, b).statistic < 0.025


def test_default_shift_stays_in_cube():
    dist = CovariateDistribution.default_shift(4, 9)
    assert np.all((dist.slopes >= 0.8) & (dist.slopes <= 1.0))
    x = sample_covariates(dist, 1000, 0)
    assert x.min() >= 0 and x.max() <= 1


def test_regression_sample_noise():
    f = make_composition(THREE_LAYER)
    dist = CovariateDistribution.uniform(2)
    clean = make_regression_sample(f, dist, 100, 0.0, 5)
    assert np.array_equal(clean.outputs, f(clean.inputs))
    noisy = make_regression_sample(f, dist, 100_000, 0.1, 5)
    resid = noisy.outputs - f(noisy.inputs)
    assert abs(np.var(resid) / 0.01 - 1.0) < 0.03
    again = make_regression_sample(f, dist, 100_000, 0.1, 5)
    assert np.array_equal(noisy.outputs, again.outputs)
    with pytest.raises(SpecError):
        make_regression_sample(f, dist, 10, -1.0, 0)


def test_holder_estimates():
    assert holder_constant_estimate(lambda x: np.zeros(len(x)), 0.7, 1000, 0) == 0.0
    assert holder_constant_estimate(lambda x: x, 1.0, 10_000, 0) >= 0.99
    est = holder_constant_estimate(np.sqrt, 0.5, 100_000, 0)
    assert 0.95 <= est <= 1.0 + 1e-12
    with pytest.raises(SpecError):
        holder_constant_estimate(lambda x: x, 1.0, 0, 0)


def test_holder_estimate_prefix_monotone():
    g = lambda x: np.abs(x - 0.3) ** 0.6
    values = [holder_constant_estimate(g, 0.6, k, 4) for k in (10, 100, 1000)]
    assert values == sorted(values)


def test_kink_exponent_is_exact():
    p = kink_layer(0.8, 0.4, 0.05, 0.5)
    f = target_from_layers([p])
    nominal = p.nominal_holder_constant()
    at_beta = holder_constant_estimate(f, 0.5, 20_000, 0, min_dist=1e-6)
    assert at_beta <= 2 * nominal
    smoother = [holder_constant_estimate(f, a, 20_000, 0, min_dist=1e-6) for a in (0.6, 0.7, 0.9)]
    assert smoother == sorted(smoother) and smoother[0] > at_beta
    assert smoother[-1] > 10 * nominal


@given(st.integers(min_value=0, max_value=2**32), st.floats(min_value=0.05, max_value=1.0))
def test_generated_layers_respect_range(seed, beta):
    spec = CompositionSpec((SmoothLayerSpec(2, 2, 1, beta, "kink"), SmoothLayerSpec(2, 1, 2, 1.5, "polynomial")), seed=seed)
    f = make_composition(spec)
    y = f(np.random.default_rng(seed % 1000).random((200, 2)))
    assert np.all((y >= 0) & (y <= 1))
