import numpy as np
import pytest

from sinet.arch import ArchTable, parse_table, preset_table
from sinet.blocks import DecoderKind
from sinet.errors import BuildError, ConfigError
from sinet.functional import ConvSpec
from sinet.model import SINet, build_sinet, count_flops, count_params
from sinet.nn import Conv2d
from sinet.tensor import Tensor, no_grad

# (input, output) shapes per row, transcribed from the published encoder tables
PORTRAIT_ROWS = [
    ((3, 224, 224), (12, 112, 112)),
    ((12, 112, 112), (16, 56, 56)),
    ((16, 56, 56), (48, 56, 56)),
    ((48, 56, 56), (48, 56, 56)),
    ((64, 56, 56), (48, 28, 28)),
    ((48, 28, 28), (96, 28, 28)),
] + [((96, 28, 28), (96, 28, 28))] * 7 + [
    ((144, 28, 28), (2, 28, 28)),
]

CITY_ROWS = [
    ((3, 1024, 2048), (16, 512, 1024)),
    ((16, 512, 1024), (20, 256, 512)),
    ((20, 256, 512), (24, 128, 256)),
    ((24, 128, 256), (60, 128, 256)),
    ((60, 128, 256), (60, 128, 256)),
    ((60, 128, 256), (60, 128, 256)),
    ((84, 128, 256), (60, 64, 128)),
    ((60, 64, 128), (84, 64, 128)),
    ((84, 64, 128), (84, 64, 128)),
    ((84, 64, 128), (84, 64, 128)),
    ((84, 64, 128), (84, 64, 128)),
    ((84, 64, 128), (108, 64, 128)),
] + [((108, 64, 128), (108, 64, 128))] * 5 + [
    ((168, 64, 128), (20, 64, 128)),
]


@pytest.fixture(scope="module")
def portrait():
    return build_sinet("portrait")


@pytest.fixture(scope="module")
def city():
    return build_sinet("cityscapes")


def test_portrait_row_shapes(portrait):
    got = [(tuple(i), tuple(o)) for _, i, o in portrait.row_shapes((224, 224))]
    assert len(got) == 14
    assert got == PORTRAIT_ROWS


def test_cityscapes_row_shapes(city):
    got = [(tuple(i), tuple(o)) for _, i, o in city.row_shapes((1024, 2048))]
    assert len(got) == 18
    assert got == CITY_ROWS


def test_build_error_names_row():
    bad = parse_table(open_preset("portrait").replace("48x28x28,   96x28x28", "48x28x28,   90x28x28"))
    assert bad.rows != preset_table("portrait").rows
    with pytest.raises(BuildError) as exc:
        SINet(bad)
    assert exc.value.row in (6, 7)
    assert "row" in str(exc.value)


def open_preset(name):
    from importlib import resources
    return resources.files("sinet.presets").joinpath(f"{name}.arch").read_text()


def test_conv_param_count_closed_form():
    conv = Conv2d(ConvSpec(3, 12, kernel=3, padding=1, has_bias=True), np.random.default_rng(0))
    assert sum(p.data.size for p in conv.parameters()) == 336


def test_pointwise_mac_closed_form():
    conv = Conv2d(ConvSpec(16, 48, kernel=1), np.random.default_rng(0))
    assert conv.macs((16, 56, 56)) == 2_408_448


def test_zero_layer_model_has_no_cost():
    empty = SINet(ArchTable(name="empty", input_hw=(8, 8), num_class=2, rows=(), decoder_taps=()))
    assert count_flops(empty).total_macs == 0
    assert count_params(empty).total_params == 0


def test_params_independent_of_decoder_in_encoder(portrait):
    enc = sum(p.data.size for p in portrait.encoder_parameters())
    for kind in DecoderKind:
        m = build_sinet("portrait", decoder=kind)
        assert sum(p.data.size for p in m.encoder_parameters()) == enc
    gau = build_sinet("portrait", decoder="GAU")
    # the gate adds one 1x1 conv and one BN over the class channels
    assert count_params(gau).total_params - count_params(portrait).total_params == 2 * 2 + 2 * 2


def test_flops_scale_by_four_when_doubling(portrait):
    a = count_flops(portrait, (224, 224)).total_macs
    b = count_flops(portrait, (448, 448)).total_macs
    # only the squeeze-excite FCs (on pooled vectors) do not scale
    assert 3.99 * a < b <= 4 * a
    assert count_params(portrait).total_params == count_params(build_sinet("portrait")).total_params


def test_two_mac_convention_doubles(portrait):
    mac = count_flops(portrait, convention="mac")
    two = count_flops(portrait, convention="2mac")
    assert two.total_flops == 2 * mac.total_flops
    with pytest.raises(ConfigError):
        count_flops(portrait, convention="flops")


def test_summary_records_end_with_total(portrait):
    recs = count_flops(portrait).records()
    assert recs[-1]["layer"] == "TOTAL"
    assert recs[-1]["params"] == sum(r["params"] for r in recs[:-1])


def test_portrait_forward_shape_and_determinism(portrait):
    portrait.eval()
    img = np.random.default_rng(0).random((1, 3, 224, 224), dtype=np.float32)
    with no_grad():
        out = portrait(Tensor(np.concatenate([img, img])))
    assert out.shape == (2, 2, 224, 224)
    np.testing.assert_array_equal(out.data[0], out.data[1])


@pytest.mark.parametrize("kind", list(DecoderKind))
def test_small_forward_each_decoder(kind):
    m = build_sinet("portrait", decoder=kind).eval()
    with no_grad():
        assert m(Tensor(np.zeros((1, 3, 64, 96), np.float32))).shape == (1, 2, 64, 96)


def test_cityscapes_small_forward(city):
    city.eval()
    with no_grad():
        out = city(Tensor(np.zeros((1, 3, 128, 256), np.float32)))
    assert out.shape == (1, 20, 128, 256)


def test_indivisible_input_rejected(portrait):
    with pytest.raises(ConfigError):
        portrait(Tensor(np.zeros((1, 3, 60, 60), np.float32)))
    with pytest.raises(ConfigError):
        build_sinet("cityscapes")(Tensor(np.zeros((1, 3, 72, 128), np.float32)))


def test_num_class_override():
    m = build_sinet("portrait", num_class=3).eval()
    with no_grad():
        assert m(Tensor(np.zeros((1, 3, 32, 32), np.float32))).shape == (1, 3, 32, 32)
    with pytest.raises(ConfigError):
        build_sinet("portrait", num_class=1)


def test_seed_controls_init():
    a, b = build_sinet("tiny", seed=0), build_sinet("tiny", seed=0)
    c = build_sinet("tiny", seed=1)
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert not all(np.array_equal(sa[k], sc[k]) for k in sa)


def test_cityscapes_full_resolution_forward(city):
    city.eval()
    with no_grad():
        out = city(Tensor(np.zeros((1, 3, 1024, 2048), np.float32)))
    assert out.shape == (1, 20, 1024, 2048)
