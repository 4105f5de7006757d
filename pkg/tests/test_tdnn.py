import numpy as np
import pytest

import gradsuite
from fusepath import tensor as tn
from fusepath.tdnn import TdnnConfig, init_params, param_count, se_block, se_res_block, tdnn_forward
from fusepath.tensor import Tensor


def test_se_zero_weights_halves_input(rng):
    x = rng.standard_normal((6, 9))
    out = se_block(Tensor(x), Tensor(np.zeros((2, 6))), Tensor(np.zeros((6, 2)))).data
    np.testing.assert_allclose(out, x / 2)


def test_se_zero_input_gives_zero(rng):
    out = se_block(Tensor(np.zeros((6, 9))), Tensor(rng.standard_normal((2, 6))), Tensor(rng.standard_normal((6, 2))))
    assert np.all(out.data == 0)


def test_se_rejects_mismatched_weights():
    with pytest.raises(tn.ShapeError):
        se_block(Tensor(np.zeros((6, 9))), Tensor(np.zeros((2, 5))), Tensor(np.zeros((5, 2))))


@pytest.mark.parametrize("train", [False, True])
def test_res_block_with_zero_conv_is_identity(rng, train):
    params = init_params(gradsuite.SMALL_TDNN, rng, dtype=np.float64)
    params["tdnn.block0.conv.weight"].data[:] = 0
    x = rng.standard_normal((2, 6, 11))
    y = se_res_block(Tensor(x), params, "tdnn.block0", 2, train=train).data
    np.testing.assert_array_equal(y, x)


@pytest.mark.parametrize("dilation", [1, 2, 3, 4])
@pytest.mark.parametrize("t", [1, 5, 17])
def test_res_block_preserves_length(rng, dilation, t):
    params = init_params(gradsuite.SMALL_TDNN, rng)
    x = Tensor(rng.standard_normal((6, t)).astype(np.float32))
    assert se_res_block(x, params, "tdnn.block2", dilation, train=False).shape == (6, t)


def test_forward_shape_for_one_second():
    cfg = TdnnConfig()
    params = init_params(cfg, np.random.default_rng(0))
    feats = np.random.default_rng(1).standard_normal((98, 20))
    assert tdnn_forward(feats, params, cfg).shape == (98, 64)


def test_forward_rejects_wrong_feature_count():
    cfg = TdnnConfig()
    with pytest.raises(tn.ShapeError):
        tdnn_forward(np.zeros((10, 13)), init_params(cfg, np.random.default_rng(0)), cfg)


def test_eval_forward_is_deterministic_and_batch_independent():
    cfg = gradsuite.SMALL_TDNN
    params = init_params(cfg, np.random.default_rng(2), dtype=np.float64)
    for name in params.buffers:
        params.buffers[name][:] = np.random.default_rng(3).uniform(0.5, 1.5, params.buffers[name].shape)
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((12, 4)), rng.standard_normal((7, 4))
    alone = tdnn_forward(a, params, cfg).data
    np.testing.assert_array_equal(alone, tdnn_forward(a, params, cfg).data)
    batch = np.zeros((2, 12, 4))
    batch[0, :7], batch[1] = b, a
    mask = np.zeros((2, 12), dtype=bool)
    mask[0, :7] = mask[1] = True
    out = tdnn_forward(batch, params, cfg, mask=mask).data
    np.testing.assert_allclose(out[1], alone, atol=1e-12)
    np.testing.assert_allclose(out[0, :7], tdnn_forward(b, params, cfg).data, atol=1e-12)


@pytest.mark.parametrize("cfg", [TdnnConfig(), gradsuite.SMALL_TDNN, TdnnConfig(in_features=13, channels=32, se_bottleneck=8, kernel=5, out_dim=48)])
def test_param_count_closed_form(cfg):
    c, i, k, s, d = cfg.channels, cfg.in_features, cfg.kernel, cfg.se_bottleneck, cfg.out_dim
    expected = (5 * i * c + c) + 2 * c + (3 * c * c + c) + 2 * c + 3 * (k * c * c + c + 2 * c + 2 * s * c) + (c * d + d)
    params = init_params(cfg, np.random.default_rng(0))
    assert params.count() == param_count(cfg) == expected
    assert len(params.buffers) == 2 * 5


def test_config_invariants():
    with pytest.raises(ValueError):
        TdnnConfig(dilations=(2, 3))
    with pytest.raises(ValueError):
        TdnnConfig(channels=8, se_bottleneck=16)


@pytest.mark.parametrize("name", ["se_block", "se_res_block", "tdnn_forward"])
def test_block_gradients(name):
    assert gradsuite.run(name, 0) < 1e-4


def test_gradient_of_mean_wrt_first_conv_weights():
    import gradcheck

    cfg = gradsuite.SMALL_TDNN
    params = init_params(cfg, np.random.default_rng(9), dtype=np.float64)
    feats = np.random.default_rng(10).standard_normal((10, 4))
    w = params["tdnn.conv1.weight"]

    def loss():
        return tn.mean(tdnn_forward(feats, params, cfg, train=True))

    params.zero_grad()
    tn.backward(loss())
    assert gradcheck.max_rel_error(w.grad.copy(), gradcheck.numeric_grad(loss, w, 1e-6)) < 1e-4
