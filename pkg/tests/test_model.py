import pytest
import torch
from torch.nn import functional as F

from yogo.metrics import param_count
from yogo.model import (
    HybridFusionBlock,
    ModelConfig,
    RecurrentCell,
    SequenceState,
    YOGO,
)
from yogo.ops import ConfigError

from test_ops import brute_deform_conv


def tiny_cfg(**kw):
    base = dict(channels=4, frb_backward=1, frb_forward=2, hfb_count=2, fe_resblocks=1)
    base.update(kw)
    return ModelConfig(**base)


def make_model(seed=0, double=True, **kw):
    torch.manual_seed(seed)
    model = YOGO(tiny_cfg(**kw))
    return model.double() if double else model


def zero_all(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def randomize(module, seed=0, scale=0.2):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * scale)
    return module


def rand(*shape, seed=0):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(variant="z"), dict(cell_order="sideways"),
                                    dict(scale_spatial=2), dict(frb_forward=-1),
                                    dict(variant="e", hfb_count=0), dict(kernel_k=2)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            tiny_cfg(**kw).validate()

    def test_direct_fusion_variants_allow_zero_hfb(self):
        tiny_cfg(variant="d", hfb_count=0).validate()


class TestFeatureExtraction:
    def test_shapes(self):
        feats = make_model().extract_features(rand(1, 4, 3, 16, 16))
        assert len(feats) == 4
        assert all(f.shape == (1, 4, 16, 16) for f in feats)

    def test_weight_sharing(self):
        frame = rand(1, 1, 3, 8, 8)
        feats = make_model().extract_features(frame.expand(1, 4, 3, 8, 8))
        assert all(torch.equal(feats[0], f) for f in feats[1:])

    def test_zero_weights(self):
        model = make_model()
        zero_all(model)
        feats = model.extract_features(rand(1, 3, 3, 8, 8))
        assert all(torch.count_nonzero(f) == 0 for f in feats)

    def test_rejects_bad_layout(self):
        with pytest.raises(ConfigError):
            make_model().extract_features(rand(1, 4, 1, 8, 8))


class TestSynthesizeIntermediate:
    def test_identity_construction(self):
        model = make_model()
        with torch.no_grad():
            w = model.synth_fusion.conv.weight
            w.zero_()
            w[:, :4, 0, 0] = torch.eye(4)
            model.synth_fusion.conv.bias.zero_()
        zero_all(model.synth_block)
        f = rand(2, 4, 5, 5)
        assert torch.equal(model.synthesize_intermediate(f, f), f)

    def test_both_neighbours_matter(self):
        model = make_model()
        randomize(model.synth_fusion, 1)
        a, b = rand(1, 4, 5, 5, seed=1), rand(1, 4, 5, 5, seed=2)
        base = model.synthesize_intermediate(a, b)
        assert base.shape == a.shape
        delta = 1e-5 * torch.ones_like(a)
        assert (model.synthesize_intermediate(a + delta, b) - base).abs().max() > 0
        assert (model.synthesize_intermediate(a, b + delta) - base).abs().max() > 0

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            make_model().synthesize_intermediate(rand(1, 4, 4, 4), rand(1, 4, 4, 5))


def plain_conv(dconv, h):
    return F.conv2d(h, dconv.weight, dconv.bias, padding=1)


class TestDFU:
    def test_forward_init_is_plain_conv(self):
        cell = RecurrentCell(4, 2, 1).double()
        h1, h2, f = rand(1, 4, 6, 6, seed=1), rand(1, 4, 6, 6, seed=2), rand(1, 4, 6, 6, seed=3)
        a1, a2 = cell.dfu([h1, h2], f)
        assert (a1 - plain_conv(cell.dconvs[0], h1)).abs().max() <= 1e-12
        assert (a2 - plain_conv(cell.dconvs[1], h2)).abs().max() <= 1e-12

    def test_backward_init_is_plain_conv(self):
        cell = RecurrentCell(4, 1, 1).double()
        h, f = rand(1, 4, 6, 6, seed=1), rand(1, 4, 6, 6, seed=2)
        (a,) = cell.dfu([h], f)
        assert a.shape == h.shape
        assert (a - plain_conv(cell.dconvs[0], h)).abs().max() <= 1e-12

    def test_offset_field_undoes_shift(self):
        cell = RecurrentCell(3, 2, 0).double()
        g = rand(1, 3, 6, 8, seed=4)
        shifted = torch.zeros_like(g)
        shifted[..., 1:] = g[..., :-1]
        with torch.no_grad():
            head = cell.estimators[0].conv_offset
            head.bias.zero_()
            head.bias[1::2] = 1.0  # dx = +1 on every tap
        aligned, _ = cell.dfu([shifted, g], g)
        expected = plain_conv(cell.dconvs[0], g)
        # the last two columns lose content to the shift
        assert (aligned - expected)[..., :-2].abs().max() <= 1e-6

    def test_backward_matches_brute_force(self):
        cell = RecurrentCell(1, 1, 0).double()
        randomize(cell.estimators[0], 5, 0.5)
        h, f = rand(1, 1, 4, 4, seed=5), rand(1, 1, 4, 4, seed=6)
        (a,) = cell.dfu([h], f)
        off = cell.estimators[0](h, f)
        ref = brute_deform_conv(h, off.detach(), cell.dconvs[0].weight.detach(),
                                cell.dconvs[0].bias.detach())
        assert (a - ref).abs().max() <= 1e-6

    def test_shape_errors(self):
        cell = RecurrentCell(2, 2, 0)
        with pytest.raises(ConfigError):
            cell.dfu([torch.zeros(1, 2, 4, 4)], torch.zeros(1, 2, 4, 4))
        with pytest.raises(ConfigError):
            cell.dfu([torch.zeros(1, 2, 4, 4), torch.zeros(1, 2, 4, 5)], torch.zeros(1, 2, 4, 4))


class TestFRU:
    def test_m0_is_pure_fusion(self):
        cell = RecurrentCell(3, 2, 0).double()
        parts = [rand(1, 3, 4, 4, seed=i) for i in range(3)]
        assert torch.equal(cell.fru(parts[:2], parts[2]), cell.fusion(parts))

    def test_zero_residual_weights(self):
        cell = RecurrentCell(3, 2, 4).double()
        for block in cell.frbs:
            zero_all(block)
        parts = [rand(1, 3, 4, 4, seed=i) for i in range(3)]
        assert torch.equal(cell.fru(parts[:2], parts[2]), cell.fusion(parts))

    def test_m2_matches_composition(self):
        cell = randomize(RecurrentCell(2, 2, 2).double(), 7)
        parts = [rand(1, 2, 4, 4, seed=i) for i in range(3)]
        x = F.conv2d(torch.cat(parts, 1), cell.fusion.conv.weight, cell.fusion.conv.bias)
        for block in cell.frbs:
            mid = F.leaky_relu(F.conv2d(x, block.conv1.weight, block.conv1.bias, padding=1), 0.1)
            x = x + F.conv2d(mid, block.conv2.weight, block.conv2.bias, padding=1)
        assert (cell.fru(parts[:2], parts[2]) - x).abs().max() <= 1e-6


def even_indices(n):  # 0-based positions of t = 2, 4, ..., 2n
    return range(1, 2 * n, 2)


class TestPropagate:
    @pytest.mark.parametrize("variant", ["a", "b", "c", "d", "e"])
    def test_lengths(self, variant):
        model = make_model(variant=variant)
        state = model.propagate(model.build_state(rand(1, 3, 3, 6, 6)))
        assert len(state.features) == len(state.backward_hidden) == len(state.forward_hidden) == 5

    def test_zero_weights_zero_hiddens(self):
        model = make_model()
        zero_all(model)
        state = model.propagate(model.build_state(rand(1, 3, 3, 6, 6)))
        for h in state.backward_hidden + state.forward_hidden:
            assert torch.count_nonzero(h) == 0

    def test_variant_a_copies_backward(self):
        model = make_model(variant="a")
        state = model.propagate(model.build_state(rand(1, 2, 3, 6, 6)))
        assert all(hb is hf for hb, hf in zip(state.backward_hidden, state.forward_hidden))

    def test_interaction_changes_even_indices(self):
        e = make_model(seed=3, variant="e")
        b = make_model(seed=3, variant="b")
        # share every weight whose shape matches; the forward fusion of (b)
        # takes the columns of (e) that see the forward hidden and F
        e_state = e.state_dict()
        b_state = b.state_dict()
        for k, v in b_state.items():
            if k in e_state and e_state[k].shape == v.shape:
                b_state[k] = e_state[k].clone()
        w = e_state["forward_cell.fusion.conv.weight"]
        c = e.cfg.channels
        b_state["forward_cell.fusion.conv.weight"] = torch.cat([w[:, :c], w[:, 2 * c:]], 1)
        b.load_state_dict(b_state)
        lr = rand(1, 4, 3, 6, 6, seed=9)
        se = e.propagate(e.build_state(lr))
        sb = b.propagate(b.build_state(lr))
        for t in range(7):
            assert torch.equal(se.backward_hidden[t], sb.backward_hidden[t])
        for t in even_indices(3):
            assert (se.forward_hidden[t] - sb.forward_hidden[t]).abs().max() > 1e-8

    def test_cell_order_changes_output(self):
        a = make_model(seed=1, cell_order="dfu_then_fru")
        b = make_model(seed=1, cell_order="fru_then_dfu")
        assert len(b.forward_cell.estimators) == 1
        lr = rand(1, 2, 3, 6, 6)
        assert not torch.equal(a(lr).frames, b(lr).frames)


def se_oracle(se, x):
    pooled = x.mean(dim=(2, 3))
    hidden = torch.clamp(pooled @ se.fc1.weight.T + se.fc1.bias, min=0)
    return torch.sigmoid(hidden @ se.fc2.weight.T + se.fc2.bias)


def res_branch(block, x):
    mid = F.leaky_relu(F.conv2d(x, block.conv1.weight, block.conv1.bias, padding=1), 0.1)
    return F.conv2d(mid, block.conv2.weight, block.conv2.bias, padding=1)


def hfb_oracle(block, hb, hf, f):
    r1 = res_branch(block.res_b, hb)
    r2 = res_branch(block.res_f, hf)
    g1 = se_oracle(block.se_b, r1)[:, :, None, None]
    g2 = se_oracle(block.se_f, r2)[:, :, None, None]
    return hb + r1, hf + r2, f + g1 * r2 + g2 * r1


class TestHFB:
    def test_zero_residuals_pass_through(self):
        block = HybridFusionBlock(4).double()
        zero_all(block.res_b)
        zero_all(block.res_f)
        xs = [rand(1, 4, 5, 5, seed=i) for i in range(3)]
        out = block(*xs)
        for a, b in zip(out, xs):
            assert torch.equal(a, b)

    def test_matches_equation_oracle(self):
        block = randomize(HybridFusionBlock(2).double(), 11, 0.5)
        xs = [rand(1, 2, 4, 4, seed=i) for i in range(3)]
        for got, want in zip(block(*xs), hfb_oracle(block, *xs)):
            assert got.shape == want.shape
            assert (got - want).abs().max() <= 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            HybridFusionBlock(2)(torch.zeros(1, 2, 3, 3), torch.zeros(1, 2, 3, 3),
                                 torch.zeros(1, 2, 3, 4))


class TestHFM:
    def test_single_block_chain(self):
        model = make_model(hfb_count=1)
        xs = [rand(1, 4, 5, 5, seed=i) for i in range(3)]
        for a, b in zip(model.fusion(*xs), model.fusion.blocks[0](*xs)):
            assert torch.equal(a, b)

    def test_triple_chain_matches_composition(self):
        model = make_model(hfb_count=3)
        randomize(model.fusion, 2, 0.3)
        xs = [rand(1, 4, 4, 4, seed=i) for i in range(3)]
        want = xs
        for block in model.fusion.blocks:
            want = hfb_oracle(block, *want)
        for got, w in zip(model.fusion(*xs), want):
            assert (got - w).abs().max() <= 1e-6

    def test_zero_weights_pass_through(self):
        model = make_model(hfb_count=3)
        zero_all(model.fusion)
        xs = [rand(1, 4, 4, 4, seed=i) for i in range(3)]
        for a, b in zip(model.fusion(*xs), xs):
            assert torch.equal(a, b)


class TestReconstruct:
    def test_shapes(self):
        model = make_model()
        outs = model.reconstruct(*(rand(1, 4, 16, 16, seed=i) for i in range(3)))
        assert all(o.shape == (1, 3, 64, 64) for o in outs)

    def test_zero_weights(self):
        model = make_model()
        zero_all(model)
        outs = model.reconstruct(*(rand(1, 4, 4, 4, seed=i) for i in range(3)))
        assert all(torch.count_nonzero(o) == 0 for o in outs)

    def test_every_stream_has_influence(self):
        model = make_model()
        xs = [rand(1, 4, 3, 3, seed=i).requires_grad_() for i in range(3)]
        sum(o.sum() for o in model.reconstruct(*xs)).backward()
        for x in xs:
            assert x.grad.abs().max() > 0


class TestForward:
    @pytest.mark.parametrize("n_in", [2, 3, 4])
    def test_output_count_law(self, n_in):
        out = make_model(double=False)(torch.rand(1, n_in, 3, 8, 8))
        for stack in out:
            assert stack.shape == (1, 2 * n_in - 1, 3, 32, 32)

    def test_four_frames_32px(self):
        out = make_model(double=False)(torch.rand(1, 4, 3, 32, 32))
        assert out.frames.shape == (1, 7, 3, 128, 128)
        assert out.structures.shape == out.details.shape == out.frames.shape

    def test_bit_identical_reruns(self):
        lr = rand(1, 2, 3, 6, 6)
        a = make_model(seed=5)(lr)
        b = make_model(seed=5)(lr)
        for x, y in zip(a, b):
            assert torch.equal(x, y)

    def test_batch_permutation(self):
        model = make_model()
        lr = rand(3, 2, 3, 6, 6)
        out = model(lr)
        perm = torch.tensor([2, 0, 1])
        permuted = model(lr[perm])
        for x, y in zip(out, permuted):
            assert torch.allclose(x[perm], y, atol=1e-12, rtol=0)

    def test_rejects_single_frame(self):
        with pytest.raises(ConfigError):
            make_model()(rand(1, 1, 3, 6, 6))

    def test_variant_e_reduces_to_d(self):
        e = make_model(seed=8, variant="e", hfb_count=2)
        d = make_model(seed=9, variant="d")
        e_state = e.state_dict()
        d_state = d.state_dict()
        for k in d_state:
            if not k.startswith("fusion."):
                d_state[k] = e_state[k].clone()
        d.load_state_dict(d_state)
        c = e.cfg.channels
        with torch.no_grad():
            for block in e.fusion.blocks:
                zero_all(block.res_b)
                zero_all(block.res_f)
            w = d.fusion.fusion.conv.weight
            w.zero_()
            w[:, 2 * c:, 0, 0] = torch.eye(c)
            d.fusion.fusion.conv.bias.zero_()
            zero_all(d.fusion.blocks)
        lr = rand(1, 3, 3, 6, 6, seed=2)
        for x, y in zip(e(lr), d(lr)):
            assert torch.equal(x, y)


class TestParamCount:
    def test_deterministic(self):
        cfg = tiny_cfg(channels=8)
        assert param_count(cfg) == param_count(cfg)
        model = YOGO(cfg)
        assert param_count(cfg)[0] == sum(p.numel() for p in model.parameters())

    def test_quadratic_in_width(self):
        small, _ = param_count(ModelConfig(channels=32))
        large, _ = param_count(ModelConfig(channels=64))
        assert 3.7 < large / small < 4.1

    def test_breakdown_covers_modules(self):
        _, parts = param_count(ModelConfig(channels=16))
        assert {"fe_conv", "backward_cell", "forward_cell", "fusion", "recon_frame"} <= set(parts)

    def test_state_container_len(self):
        assert len(SequenceState(features=[torch.zeros(1)] * 5)) == 5
