import math

import numpy as np
import pytest
from scipy import integrate

from caulklab.caulking import (
    AdapterSpec,
    CaulkedModel,
    make_classification_sample,
    caulk_fit,
    excess_error,
    excess_error_by_labels,
    l2_error,
    plugin_classify,
    predict,
    pretrain_empirical,
    pretrain_oracle,
    scratch_fit,
)
from caulklab.errors import DimensionError, DomainError, SpecError
from caulklab.fitting import FitConfig, params_equal
from caulklab.function_spaces import (
    CompositionSpec,
    CovariateDistribution,
    SmoothLayerSpec,
    eval_partial,
    make_composition,
    make_regression_sample,
)
from caulklab.network import ReluNetworkSpec, forward, init_network

from helpers import reference_target

UNIFORM2 = CovariateDistribution.uniform(2)
FIT = FitConfig(learning_rate=0.01, max_epochs=3000, patience=100, optimizer="adam", restarts=2)


def test_oracle_split_pieces():
    f = reference_target()
    pre = pretrain_oracle(f, (2, 2))
    z = np.random.default_rng(0).random((20, 2))
    assert np.array_equal(pre.extractor(z), eval_partial(f, 1, 1, z))
    assert np.array_equal(pre.head(z)[:, 0], eval_partial(f, 3, 3, z)[:, 0])
    full = pretrain_oracle(f, (1, 3))
    assert np.array_equal(full.extractor(z), z)
    with pytest.raises(SpecError):
        pretrain_oracle(f, (3, 2))


@pytest.mark.parametrize("split", [(1, 1), (2, 2), (2, 3), (1, 3), (3, 3)])
def test_oracle_caulkability(split):
    f = reference_target()
    pre = pretrain_oracle(f, split)
    model = pre.with_adapter(pre.middle)
    x = np.random.default_rng(1).random((100, 2))
    assert np.allclose(model(x), f(x), atol=1e-12, rtol=0)
    assert l2_error(model, f, UNIFORM2, 10_000, 3).estimate <= 1e-20


def test_affine_adapter_recovers_affine_layer():
    f = reference_target()
    pre = pretrain_oracle(f, (2, 2))
    sample = make_regression_sample(f, UNIFORM2, 1024, 0.0, 4)
    model = caulk_fit(pre, AdapterSpec(0), sample, FIT)
    assert l2_error(model, f, UNIFORM2, 20_000, 5).estimate <= 1e-3


def test_freeze_invariant_for_empirical_model():
    f = make_composition(CompositionSpec((SmoothLayerSpec(1, 1, 1, 2.0, "polynomial"),), seed=1))
    spec = ReluNetworkSpec(3, 4, 1, 1)
    pre = pretrain_empirical(f, CovariateDistribution.uniform(1), 64, spec, (2, 2), FitConfig(max_epochs=100, patience=50))
    before = [p.copy() for p in pre.source_net.params()]
    sample = make_regression_sample(f, CovariateDistribution.uniform(1), 64, 0.1, 2)
    caulk_fit(pre, AdapterSpec(0), sample, FitConfig(max_epochs=200, patience=50), warm_start=True)
    assert params_equal(before, pre.source_net.params())
    assert pre.m == 64 and pre.provenance == "empirical"
    with pytest.raises(SpecError):
        pretrain_empirical(f, CovariateDistribution.uniform(1), 0, spec, (2, 2), FitConfig())


def test_zero_init_adapter_descends():
    f = reference_target()
    pre = pretrain_oracle(f, (2, 2))
    sample = make_regression_sample(f, UNIFORM2, 200, 0.0, 6)
    zero = init_network(ReluNetworkSpec(1, 1, 2, 2), "zero_bias_ridge", 0).with_params(
        [np.zeros((2, 2)), np.zeros(2)]
    )
    model = caulk_fit(pre, AdapterSpec(0), sample, FitConfig(learning_rate=0.05, max_epochs=500, patience=500), init=zero)
    assert np.all(np.diff(model.trace.losses) <= 1e-12)
    assert model.trace.losses[-1] < model.trace.losses[0]


def test_interface_mismatch_names_interface():
    pre = pretrain_oracle(reference_target(), (2, 2))
    sample = make_regression_sample(reference_target(), UNIFORM2, 10, 0.0, 0)
    with pytest.raises(DimensionError, match="extractor/adapter"):
        caulk_fit(pre, AdapterSpec(0, in_dim=3, out_dim=2), sample, FIT)
    with pytest.raises(DimensionError, match="adapter/head"):
        caulk_fit(pre, AdapterSpec(0, in_dim=2, out_dim=1), sample, FIT)


def test_pretrain_empirical_easy_target():
    f = make_composition(CompositionSpec((SmoothLayerSpec(1, 1, 1, 2.0, "polynomial"),), seed=3))
    dist = CovariateDistribution.uniform(1)
    spec = ReluNetworkSpec(3, 8, 1, 1)
    config = FitConfig(learning_rate=0.01, max_epochs=3000, patience=100, optimizer="adam", restarts=2)
    pre = pretrain_empirical(f, dist, 4096, spec, (2, 2), config, noise_sigma=0.1, seed=1)
    passthrough = pre.with_adapter(pre.middle.as_network())
    mse = l2_error(passthrough, f, dist, 20_000, 2).estimate
    # the frozen end-to-end model is the fitted source network itself
    direct = l2_error(pre.source_net, f, dist, 20_000, 2).estimate
    assert mse == pytest.approx(direct, rel=1e-9)
    assert mse <= 2 * max(direct, 1e-12)
    again = pretrain_empirical(f, dist, 4096, spec, (2, 2), config, noise_sigma=0.1, seed=1)
    assert params_equal(again.source_net.params(), pre.source_net.params())


def test_scratch_fit_properties():
    spec = ReluNetworkSpec(2, 4, 1, 1)
    truth = init_network(spec, seed=3)
    x = np.random.default_rng(0).random((100, 1))
    from caulklab.function_spaces import RegressionSample
    sample = RegressionSample(x, forward(truth, x)[:, 0], 0.0, 0)
    config = FitConfig(max_epochs=50, patience=10, seed=1)
    a, _ = scratch_fit(spec, sample, config)
    b, _ = scratch_fit(spec, sample, config)
    assert params_equal(a.params(), b.params())


def test_l2_error_examples():
    f = reference_target()
    exact = l2_error(f, f, UNIFORM2, 1000, 0)
    assert exact.estimate == 0.0 and exact.std_error == 0.0
    shifted = l2_error(lambda x: f(x) + 0.1, f, UNIFORM2, 10_000, 0)
    assert abs(shifted.estimate - 0.01) <= 3 * max(shifted.std_error, 1e-15) + 1e-12
    with pytest.raises(SpecError):
        l2_error(f, f, UNIFORM2, 1, 0)


def test_l2_error_matches_quadrature():
    f = make_composition(CompositionSpec((SmoothLayerSpec(1, 1, 1, 2.0, "polynomial", degree=3),), seed=2))
    model = lambda x: 0.5 + 0.2 * np.asarray(x)[:, 0] ** 2
    exact, _ = integrate.quad(lambda t: (model(np.array([[t]]))[0] - f(np.array([[t]]))[0]) ** 2, 0, 1, limit=200)
    est = l2_error(model, f, CovariateDistribution.uniform(1), 200_000, 1).estimate
    assert est == pytest.approx(exact, rel=0.01)


def test_classification_samples():
    one = lambda x: np.ones(len(x))
    half = lambda x: np.full(len(x), 0.5)
    assert make_classification_sample(one, UNIFORM2, 100, 0).labels.min() == 1
    s = make_classification_sample(half, UNIFORM2, 100_000, 1)
    assert abs(s.labels.mean() - 0.5) <= 0.01
    again = make_classification_sample(half, UNIFORM2, 100_000, 1)
    assert np.array_equal(s.labels, again.labels)
    with pytest.raises(DomainError):
        make_classification_sample(lambda x: np.full(len(x), 1.5), UNIFORM2, 10, 0)


def test_excess_error_examples():
    f = lambda x: 0.1 + 0.8 * (np.asarray(x)[:, 0] > 0.5)  # bounded away from 1/2
    assert excess_error(plugin_classify(f), f, UNIFORM2, 10_000, 0).estimate == 0.0
    flipped = plugin_classify(lambda x: 1.0 - f(x))
    ident = excess_error(flipped, f, UNIFORM2, 50_000, 1)
    assert ident.estimate == pytest.approx(0.8, abs=1e-12)
    by_def = excess_error_by_labels(flipped, f, UNIFORM2, 50_000, 1)
    assert abs(by_def.estimate - ident.estimate) <= 3 * math.hypot(by_def.std_error, ident.std_error)



def test_oracle_affine_block_matches_layer():
    from caulklab.caulking import oracle_affine_block

    f = reference_target()
    pre = pretrain_oracle(f, (2, 2))
    w, b = oracle_affine_block(pre.middle)
    z = pre.extractor(np.random.default_rng(0).random((200, 2)))
    exact = pre.middle(z)
    inside = np.all((exact > 0) & (exact < 1), axis=1)
    assert inside.any()
    assert np.allclose((z @ w.T + b)[inside], exact[inside], atol=1e-14)
    assert oracle_affine_block(pretrain_oracle(f, (1, 1)).middle) is None


def test_warm_start_keeps_every_candidate_loss():
    f = reference_target()
    pre = pretrain_oracle(f, (2, 2))
    sample = make_regression_sample(f, UNIFORM2, 256, 0.1, 3)
    config = FitConfig(learning_rate=0.01, max_epochs=300, patience=50, optimizer="adam", restarts=2)
    model = caulk_fit(pre, AdapterSpec(0), sample, config, warm_start=True)
    assert len(model.trace.restart_losses) == 3
    assert model.trace.final_loss == min(model.trace.restart_losses)
