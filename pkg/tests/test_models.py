import doctest

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import nemforecast.models as models
from nemforecast.errors import ConfigError, NonFiniteOutput, ShapeError
from nemforecast.models import (
    ModelConfig,
    ModelFamily,
    build_model,
    fft_periods,
    forecast,
    gradient_check,
    load_checkpoint,
    loss_gradient,
    save_checkpoint,
)
from nemforecast.models.layers import SeriesDecomposition

SMALL = {"model_dim": 16, "n_layers": 1}


def small_config(family, L=96, H=24, C=5, **kw):
    family = ModelFamily.parse(family)
    if family is ModelFamily.DLINEAR:
        return ModelConfig(family, L, H, C, **kw)
    extra = {"cnn_filters": 8, "cnn_kernel": 3} if family is ModelFamily.CNN_LSTM else {}
    return ModelConfig(family, L, H, C, **SMALL, **extra, **kw)


def test_module_doctest():
    assert doctest.testmod(models).failed == 0


def test_nine_families_and_feature_flags():
    assert len(ModelFamily) == 9
    assert {f for f in ModelFamily if not f.uses_time_features} == {
        ModelFamily.LSTM, ModelFamily.CNN_LSTM, ModelFamily.TRANSFORMER}
    assert ModelFamily.parse("cnn-lstm") is ModelFamily.CNN_LSTM
    assert ModelFamily.parse("iTransformer") is ModelFamily.ITRANSFORMER


@pytest.mark.parametrize("L,H", [(336, 48), (48, 8), (672, 96)])
def test_dlinear_parameter_count_closed_form(L, H):
    assert build_model(ModelConfig(ModelFamily.DLINEAR, L, H), 0).parameter_count == 2 * (L * H + H)


@pytest.mark.parametrize("bad", [
    dict(family="LSTM", cnn_filters=32),
    dict(family="DLINEAR", model_dim=32),
    dict(family="CNN_LSTM"),
    dict(family="TIMESNET", extra={"nonsense": 1}),
    dict(family="LSTM", dropout=1.0),
    dict(family="NBEATS"),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ModelConfig(**bad)


def test_timemixer_needs_divisible_lookback():
    with pytest.raises(ConfigError):
        build_model(ModelConfig(ModelFamily.TIMEMIXER, lookback=100, horizon=8, model_dim=8, n_layers=1), 0)


def test_config_dict_round_trip():
    cfg = small_config("CNN_LSTM", C=1)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("family", list(ModelFamily))
@pytest.mark.parametrize("C", [1, 5])
def test_shape_totality_small(family, C):
    model = build_model(small_config(family, C=C), seed=0)
    x = torch.rand(3, 96, C)
    out = model(x)
    assert out.shape == (3, 24)
    assert torch.isfinite(out).all()


@pytest.mark.parametrize("family", list(ModelFamily))
def test_same_seed_same_parameters(family):
    cfg = small_config(family)
    a, b = build_model(cfg, 3), build_model(cfg, 3)
    va = torch.nn.utils.parameters_to_vector(a.parameters())
    assert torch.equal(va, torch.nn.utils.parameters_to_vector(b.parameters()))
    if family is not ModelFamily.DLINEAR:
        c = build_model(cfg, 4)
        assert not torch.equal(va, torch.nn.utils.parameters_to_vector(c.parameters()))


def test_build_model_leaves_global_rng_alone():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    build_model(small_config("LSTM"), 9)
    assert torch.equal(torch.rand(3), expected)


@pytest.mark.parametrize("family", list(ModelFamily))
def test_one_training_step_is_bit_stable(family):
    def step():
        model = build_model(small_config(family), 5)
        g = torch.Generator().manual_seed(0)
        x, y = torch.rand(4, 96, 5, generator=g), torch.rand(4, 24, generator=g)
        opt = torch.optim.Adam(model.parameters(), lr=1e-3)
        torch.manual_seed(0)
        torch.nn.functional.mse_loss(model(x), y).backward()
        opt.step()
        return torch.nn.utils.parameters_to_vector(model.parameters()).detach()

    assert torch.equal(step(), step())


def test_forecast_shape_errors_and_output_type():
    model = build_model(small_config("DLINEAR", C=5), 0)
    with pytest.raises(ShapeError):
        forecast(model, np.zeros((2, 95, 5)))
    with pytest.raises(ShapeError):
        forecast(model, np.zeros((2, 96, 1)))
    out = forecast(model, np.random.default_rng(0).random((1000, 96, 5)), batch_size=128)
    assert out.shape == (1000, 24) and out.dtype == np.float64


def test_forecast_flags_non_finite_output():
    model = build_model(small_config("DLINEAR", C=1), 0)
    with torch.no_grad():
        model.linear_trend.bias.fill_(float("nan"))
    with pytest.raises(NonFiniteOutput):
        forecast(model, np.zeros((2, 96, 1)))


def test_dlinear_constant_window_uses_only_the_trend_head():
    model = build_model(ModelConfig(ModelFamily.DLINEAR, 48, 8, 1), 1)
    with torch.no_grad():
        for lin in (model.linear_seasonal, model.linear_trend):
            lin.weight.copy_(torch.randn_like(lin.weight))
            lin.bias.copy_(torch.randn_like(lin.bias))
    c = 0.37
    x = torch.full((1, 48, 1), c, dtype=torch.float32)
    seasonal, trend = model.decompose(x)
    assert torch.allclose(seasonal, torch.zeros_like(seasonal), atol=1e-6)
    W_t = model.linear_trend.weight.detach().double().numpy()
    b_t = model.linear_trend.bias.detach().double().numpy()
    b_s = model.linear_seasonal.bias.detach().double().numpy()
    expected = W_t @ np.full(48, c) + b_t + b_s
    assert np.allclose(model(x).detach().double().numpy()[0], expected, atol=1e-5)


@given(st.integers(1, 4), st.integers(5, 60), st.sampled_from([3, 5, 25]))
@settings(max_examples=30)
def test_decomposition_reconstructs_input(batch, length, kernel):
    x = torch.randn(batch, length, 1, dtype=torch.float64)
    seasonal, trend = SeriesDecomposition(kernel)(x)
    assert torch.allclose(seasonal + trend, x, atol=1e-12)


@pytest.mark.parametrize("period", [24, 48, 84, 168])
def test_fft_period_of_pure_sinusoid(period):
    L = 336
    t = torch.arange(L, dtype=torch.float64)
    x = torch.sin(2 * np.pi * t / period).reshape(1, L, 1)
    periods, weights, freqs = fft_periods(x, 1)
    assert freqs == [L // period] and periods == [period]
    assert weights.shape == (1, 1)


@pytest.mark.parametrize("C", [1, 3, 5])
@pytest.mark.parametrize("L", [48, 96])
def test_itransformer_has_one_token_per_variate(C, L):
    model = build_model(small_config("ITRANSFORMER", L=L, C=C), 0)
    assert model.tokens(torch.rand(2, L, C)).shape == (2, C, 16)


def test_gradient_check_dlinear():
    model = build_model(ModelConfig(ModelFamily.DLINEAR, 48, 8, 1), 0)
    rng = np.random.default_rng(0)
    err = gradient_check(model, rng.random((2, 48, 1)), rng.random((2, 8)), max_probes=None)
    assert err < 1e-4


def test_gradient_check_lstm():
    model = build_model(ModelConfig(ModelFamily.LSTM, 24, 6, 1, model_dim=8, n_layers=1), 0)
    rng = np.random.default_rng(1)
    assert model.parameter_count < 10_000
    assert gradient_check(model, rng.random((2, 24, 1)), rng.random((2, 6))) < 1e-3


def test_gradient_vanishes_at_perfect_fit():
    model = build_model(ModelConfig(ModelFamily.DLINEAR, 48, 8, 1), 0)
    x = np.random.default_rng(2).random((2, 48, 1))
    with torch.no_grad():
        y = model.double()(torch.as_tensor(x)).numpy()
    assert np.linalg.norm(loss_gradient(model, x, y)) < 1e-8


def test_checkpoint_round_trip(tmp_path):
    model = build_model(small_config("TIMEXER"), 11)
    save_checkpoint(model, tmp_path)
    back = load_checkpoint(tmp_path)
    assert back.config == model.config
    x = np.random.default_rng(0).random((3, 96, 5))
    assert np.array_equal(forecast(back, x), forecast(model, x))
