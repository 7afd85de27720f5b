import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch.func import functional_call

from fd_check import fd_relative_error

from stylegan_desk.latent import broadcast_styles
from stylegan_desk.layers import resample, resample_binomial
from stylegan_desk.synthesis import (Generator, GeneratorConfig, SynthesisNetwork, adain, affine_style,
                                     apply_noise, synthesize)
from stylegan_desk.training import mixed_style_sequence

TINY = dict(resolution=8, z_dim=4, w_dim=4, mapping_depth=2, channel_base=4, channel_min=2)


def tiny_synthesis(**kw):
    torch.manual_seed(0)
    return SynthesisNetwork(GeneratorConfig(**{**TINY, **kw})).double()


# -- AdaIN -----------------------------------------------------------------------


def test_adain_hand_example():
    x = torch.tensor([1.0, 3.0], dtype=torch.float64).view(1, 1, 1, 2)
    out = adain(x, torch.tensor([[2.0]], dtype=torch.float64), torch.tensor([[5.0]], dtype=torch.float64))
    assert torch.allclose(out.flatten(), torch.tensor([3.0, 7.0], dtype=torch.float64), atol=1e-7)


def test_adain_identity_style_on_standardized_input():
    x = torch.randn(2, 3, 5, 5)
    x = (x - x.mean(dim=(2, 3), keepdim=True)) / x.std(dim=(2, 3), unbiased=False, keepdim=True)
    out = adain(x, torch.ones(2, 3), torch.zeros(2, 3))
    assert torch.allclose(out, x, atol=1e-5)


def test_adain_constant_channel_maps_to_bias():
    x = torch.full((1, 1, 4, 4), 2.5)
    out = adain(x, torch.tensor([[3.0]]), torch.tensor([[4.0]]))
    assert torch.allclose(out, torch.full_like(out, 4.0), atol=1e-4)


def test_adain_channel_mismatch_raises():
    with pytest.raises(ValueError):
        adain(torch.zeros(1, 2, 3, 3), torch.ones(1, 3), torch.zeros(1, 3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-2, 1e2), st.floats(-50, 50))
def test_adain_output_statistics_ignore_input_statistics(seed, scale, shift):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(2, 4, 8, 8, generator=g, dtype=torch.float64) * scale + shift
    ys = torch.randn(2, 4, generator=g, dtype=torch.float64) * 3
    yb = torch.randn(2, 4, generator=g, dtype=torch.float64) * 3
    out = adain(x, ys, yb)
    assert torch.allclose(out.mean(dim=(2, 3)), yb, atol=1e-4)
    assert torch.allclose(out.std(dim=(2, 3), unbiased=False), ys.abs(), atol=1e-3)


def test_adain_gradient_check():
    g = torch.Generator().manual_seed(1)
    x = torch.randn(2, 3, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
    ys = torch.randn(2, 3, generator=g, dtype=torch.float64, requires_grad=True)
    yb = torch.randn(2, 3, generator=g, dtype=torch.float64, requires_grad=True)
    assert fd_relative_error(lambda *a: adain(*a).pow(3).sum(), [x, ys, yb]) <= 1e-4


# -- affine style and noise -------------------------------------------------------


def test_affine_style_initial_and_zero_input():
    net = tiny_synthesis()
    w = torch.randn(3, 4, dtype=torch.float64)
    with torch.no_grad():
        net.sites[1].affine.weight.zero_()
    ys, yb = affine_style(net, w, 1)
    assert torch.equal(ys, torch.ones_like(ys)) and torch.equal(yb, torch.zeros_like(yb))
    site = net.sites[2]
    ys, yb = affine_style(net, torch.zeros(1, 4, dtype=torch.float64), 2)
    bias = site.affine.effective_bias()
    assert torch.allclose(ys[0], bias[: site.channels]) and torch.allclose(yb[0], bias[site.channels:])


def test_affine_style_unit_rows():
    net = tiny_synthesis()
    site = net.sites[0]
    k = 2
    with torch.no_grad():
        site.affine.weight.zero_()
        site.affine.weight[: site.channels, k] = 1.0 / site.affine.weight_gain
    w = torch.zeros(1, 4, dtype=torch.float64)
    w[0, k] = 2.0
    ys, _ = affine_style(net, w, 0)
    assert torch.allclose(ys, torch.full_like(ys, 3.0))


def test_affine_style_site_out_of_range():
    with pytest.raises(IndexError):
        affine_style(tiny_synthesis(), torch.zeros(1, 4, dtype=torch.float64), 99)


def test_apply_noise_examples():
    x = torch.randn(2, 3, 4, 4)
    n = torch.randn(2, 1, 4, 4)
    assert torch.equal(apply_noise(x, n, torch.zeros(3)), x)
    assert torch.equal(apply_noise(x, torch.zeros_like(n), torch.randn(3)), x)
    out = apply_noise(torch.zeros(2, 3, 4, 4), n, torch.full((3,), 2.0))
    assert all(torch.equal(out[:, i:i + 1], 2 * n) for i in range(3))
    with pytest.raises(ValueError):
        apply_noise(x, torch.zeros(2, 1, 5, 5), torch.zeros(3))


# -- resampling --------------------------------------------------------------------


@pytest.mark.parametrize("direction", ["up", "down"])
def test_resample_preserves_constants(direction):
    x = torch.full((1, 2, 8, 8), -0.37, dtype=torch.float64)
    y = resample_binomial(x, direction)
    assert y.shape[-1] == (16 if direction == "up" else 4)
    assert torch.allclose(y, torch.full_like(y, -0.37), atol=1e-12)


def test_upsample_impulse_footprint():
    x = torch.zeros(1, 1, 5, 5, dtype=torch.float64)
    x[0, 0, 2, 2] = 1.0
    y = resample_binomial(x, "up")[0, 0]
    k = torch.tensor([1.0, 2.0, 1.0], dtype=torch.float64)
    expected = torch.zeros(10, 10, dtype=torch.float64)
    expected[3:6, 3:6] = torch.outer(k, k) / 4
    assert torch.allclose(y, expected, atol=1e-12)


def test_up_then_down_is_identity_on_constants():
    x = torch.full((1, 1, 4, 4), 1.25, dtype=torch.float64)
    assert torch.allclose(resample_binomial(resample_binomial(x, "up"), "down"), x, atol=1e-12)


def test_downsample_odd_size_raises():
    with pytest.raises(ValueError):
        resample_binomial(torch.zeros(1, 1, 5, 5), "down")
    with pytest.raises(ValueError):
        resample(torch.zeros(1, 1, 5, 5), "down", "nearest")


# -- full synthesis --------------------------------------------------------------------


def test_config_counts_and_shapes():
    cfg = GeneratorConfig(resolution=32)
    assert cfg.num_levels == 4 and cfg.num_styles == 8
    assert [cfg.channels(i) for i in range(4)] == [64, 32, 16, 8]
    G = Generator(GeneratorConfig(**TINY), seed=3)
    img = G(torch.randn(2, 4), rng=torch.Generator().manual_seed(0))
    assert img.shape == (2, 3, 8, 8)
    assert torch.equal(G.synthesis.const, torch.ones_like(G.synthesis.const))


def test_synthesis_is_deterministic():
    net = tiny_synthesis()
    styles = broadcast_styles(torch.randn(2, 4, dtype=torch.float64), net.num_styles)
    noise = net.make_noise(2, torch.Generator().manual_seed(4))
    assert torch.equal(synthesize(net, styles, noise), synthesize(net, styles, noise))
    with pytest.raises(ValueError):
        synthesize(net, styles, noise, GeneratorConfig(resolution=16))


def test_zero_noise_scalings_make_output_noise_independent():
    net = tiny_synthesis()
    styles = broadcast_styles(torch.randn(2, 4, dtype=torch.float64), net.num_styles)
    a = net(styles, rng=torch.Generator().manual_seed(1))
    b = net(styles, rng=torch.Generator().manual_seed(2))
    assert torch.equal(a, b)


def test_noise_off_equals_zeroed_noise_on():
    on = Generator(GeneratorConfig(**TINY, use_noise=True), seed=9).double()
    off = Generator(GeneratorConfig(**TINY, use_noise=False), seed=9).double()
    z = torch.randn(3, 4, dtype=torch.float64)
    assert torch.equal(on(z, rng=torch.Generator().manual_seed(0)), off(z))


def test_nonzero_noise_scalings_change_output():
    net = tiny_synthesis()
    with torch.no_grad():
        net.sites[3].noise_strength.fill_(0.5)
    styles = broadcast_styles(torch.randn(1, 4, dtype=torch.float64), net.num_styles)
    a = net(styles, rng=torch.Generator().manual_seed(1))
    b = net(styles, rng=torch.Generator().manual_seed(2))
    assert not torch.equal(a, b)


@pytest.mark.parametrize("mode", ["constant", "traditional"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_style_locality_under_mixing(mode, k):
    net = tiny_synthesis(input_mode=mode)
    with torch.no_grad():
        for s in net.sites:
            s.noise_strength.normal_()
    w1, w2 = torch.randn(2, 4, dtype=torch.float64), torch.randn(2, 4, dtype=torch.float64)
    L = net.num_styles
    noise = net.make_noise(2, torch.Generator().manual_seed(0))
    _, base = net(broadcast_styles(w1, L), noise, return_activations=True)
    _, mixed = net(mixed_style_sequence(w1, w2, torch.tensor([k, k]), L), noise, return_activations=True)
    for i in range(k):
        assert torch.equal(base[i], mixed[i])
    assert not torch.equal(base[k], mixed[k])


def test_synthesis_gradient_check():
    net = tiny_synthesis()
    with torch.no_grad():
        for s in net.sites:
            s.noise_strength.normal_()
    assert sum(p.numel() for p in net.parameters()) <= 10_000
    styles = broadcast_styles(torch.randn(2, 4, dtype=torch.float64), net.num_styles)
    noise = net.make_noise(2, torch.Generator().manual_seed(0))
    names = [n for n, _ in net.named_parameters()
             if n == "const" or "conv.weight" in n or "affine.weight" in n or "noise_strength" in n]
    assert any("noise_strength" in n for n in names) and "const" in names
    params = dict(net.named_parameters())

    def loss(*values):
        p = {**params, **dict(zip(names, values))}
        return functional_call(net, p, (styles, noise)).pow(2).sum()

    assert fd_relative_error(loss, [params[n] for n in names]) <= 1e-4
