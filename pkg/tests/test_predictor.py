import math

import numpy as np
import pytest
import torch

from geniedrive.core.grid import Command, ControlSignal, RigidTransform2D
from geniedrive.core.synthetic import SceneGenConfig, generate_synthetic_sequence
from geniedrive.predictor.control import COMMAND_INDEX, ControlEmbedder
from geniedrive.predictor.losses import prediction_loss, transform_matrix_loss
from geniedrive.predictor.model import (
    HistoryBuffer,
    McaLayer,
    OccPredictor,
    PredictorConfig,
    TransformHead,
    rollout,
)
from geniedrive.vae.model import TriPlaneVae, VaeConfig


def signal(command=Command.GO_STRAIGHT, waypoints=((1.0, 0.0), (2.0, 0.0))):
    return ControlSignal(command, np.array(waypoints), RigidTransform2D.identity())


def tiny_predictor(channels=16, tokens_dims=(4, 4, 1), **kw):
    torch.manual_seed(0)
    return OccPredictor(PredictorConfig(latent_dims=tokens_dims, channels=channels, **kw))


class TestControlEmbedding:
    def test_deterministic_for_equal_signals(self):
        emb = ControlEmbedder(8)
        a = emb.embed_control(signal())
        b = emb.embed_control(signal())
        assert torch.equal(a.tokens, b.tokens)

    def test_command_changes_only_token_zero(self):
        emb = ControlEmbedder(8)
        straight = emb.embed_control(signal(Command.GO_STRAIGHT))
        left = emb.embed_control(signal(Command.TURN_LEFT))
        assert not torch.equal(straight.tokens[0], left.tokens[0])
        assert torch.equal(straight.tokens[1:], left.tokens[1:])

    def test_token_count_is_waypoints_plus_one(self):
        emb = ControlEmbedder(8)
        for n in (1, 3, 6):
            wps = [(float(i), 0.0) for i in range(n)]
            tokens = emb.embed_control(signal(waypoints=wps)).tokens
            assert tokens.shape == (n + 1, 8)

    def test_all_commands_have_embeddings(self):
        assert set(COMMAND_INDEX) == set(Command)


class TestMcaLayer:
    def test_zeroed_output_projections_give_identity(self):
        torch.manual_seed(1)
        layer = McaLayer(16, 4)
        layer.zero_residual_outputs()
        z = torch.randn(2, 10, 16)
        c = torch.randn(2, 3, 16)
        z2, c2 = layer(z, c)
        assert torch.equal(z2, z)
        assert torch.equal(c2, c)

    def test_single_token_attention_closed_form(self):
        # One occupancy token and one control token, width 2, single head:
        # softmax over one key is 1, so attention output = W_o @ (W_v @ kv').
        torch.manual_seed(2)
        layer = McaLayer(2, 1)
        attn = layer.occ_from_ctrl
        with torch.no_grad():
            attn.attn.in_proj_weight.copy_(torch.arange(12, dtype=torch.float32).reshape(6, 2) * 0.1)
            attn.attn.in_proj_bias.zero_()
            attn.attn.out_proj.weight.copy_(torch.tensor([[0.5, -0.25], [1.0, 0.75]]))
            attn.attn.out_proj.bias.zero_()
        z = torch.tensor([[[0.3, -0.7]]])
        c = torch.tensor([[[1.1, 0.4]]])

        z_norm = attn.norm_q(z)
        c_norm = attn.norm_kv(c)
        w_v = attn.attn.in_proj_weight[4:6]
        w_o = attn.attn.out_proj.weight
        expected = z + (w_o @ (w_v @ c_norm[0, 0]))[None, None]

        out, _ = attn.attn(z_norm, c_norm, c_norm)
        assert torch.allclose(z + out, expected, atol=1e-6)
        assert torch.allclose(attn(z, c), expected, atol=1e-6)

    def test_control_perturbation_reaches_occupancy(self):
        torch.manual_seed(3)
        layer = McaLayer(8, 2).double()
        z = torch.randn(1, 5, 8, dtype=torch.float64)
        c = torch.randn(1, 2, 8, dtype=torch.float64)
        base, _ = layer(z, c)
        eps = 1e-6
        bumped = c.clone()
        bumped[0, 0, 0] += eps
        out, _ = layer(z, bumped)
        assert (out - base).abs().max().item() / eps > 1e-8

    def test_occupancy_perturbation_reaches_control(self):
        torch.manual_seed(4)
        layer = McaLayer(8, 2).double()
        z = torch.randn(1, 5, 8, dtype=torch.float64)
        c = torch.randn(1, 2, 8, dtype=torch.float64)
        _, base = layer(z, c)
        eps = 1e-6
        bumped = z.clone()
        bumped[0, 2, 3] += eps
        _, out = layer(bumped, c)
        assert (out - base).abs().max().item() / eps > 1e-8


class TestTransformHead:
    def test_exact_identity_prediction_has_zero_loss(self):
        gt = torch.eye(3)[None]
        assert transform_matrix_loss(gt, gt).item() == 0.0

    def test_cos_sin_renormalized(self):
        head = TransformHead(4)
        with torch.no_grad():
            head.mlp[0].weight.zero_()
            head.mlp[0].bias.zero_()
            head.mlp[2].weight.zero_()
            head.mlp[2].bias.copy_(torch.tensor([2.0, 0.0, 0.0, 0.0]))
        mat = head(torch.zeros(1, 3, 4))
        assert torch.allclose(mat[0], torch.eye(3), atol=1e-6)

    def test_translation_unit_frobenius(self):
        gt = torch.eye(3)
        gt[0, 2] = 1.0
        pred = torch.eye(3)
        assert transform_matrix_loss(pred[None], gt[None]).item() == pytest.approx(1.0)


class TestPredictionLoss:
    def make_lists(self, mses, betas, lam=0.0):
        preds, tgts, pmats, gmats = [], [], [], []
        for mse in mses:
            # one element with squared error exactly mse
            preds.append(torch.tensor([[math.sqrt(mse)]]))
            tgts.append(torch.tensor([[0.0]]))
            pmats.append(torch.eye(3)[None])
            gmats.append(torch.eye(3)[None])
        return prediction_loss(preds, tgts, pmats, gmats, betas, lam)

    def test_perfect_prediction_is_zero(self):
        total, parts = self.make_lists([0.0, 0.0], (1.0, 1.0), lam=0.5)
        assert total.item() == 0.0
        assert parts["l_reg"].item() == 0.0

    def test_zero_betas_leave_only_regression(self):
        preds = [torch.tensor([[1.0]])]
        tgts = [torch.tensor([[0.0]])]
        pmats = [torch.eye(3)[None]]
        gt = torch.eye(3)
        gt[1, 2] = 2.0
        total, parts = prediction_loss(preds, tgts, pmats, [gt[None]], (0.0,), 0.5)
        assert total.item() == pytest.approx(0.5 * 4.0)

    def test_weighted_sum_arithmetic(self):
        total, _ = self.make_lists([0.5, 0.25], (1.0, 2.0), lam=0.0)
        assert total.item() == pytest.approx(1.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            prediction_loss(
                [torch.zeros(1, 1)], [], [torch.eye(3)[None]], [torch.eye(3)[None]],
                (1.0,), 0.0,
            )


class TestPredictorNetwork:
    def test_output_shape_matches_input(self):
        pred = tiny_predictor()
        T = pred.cfg.n_tokens
        z = torch.randn(2, T, 16)
        c = pred.control_embedder(torch.tensor([0, 1]), torch.randn(2, 3, 2))
        hist = torch.randn(2, 3, T, 16)
        out, mat = pred(z, c, hist)
        assert out.shape == z.shape
        assert mat.shape == (2, 3, 3)

    def test_full_network_residual_identity(self):
        pred = tiny_predictor()
        pred.zero_residual_outputs()
        T = pred.cfg.n_tokens
        z = torch.randn(1, T, 16)
        c = pred.control_embedder(torch.tensor([2]), torch.randn(1, 4, 2))
        hist = torch.randn(1, 3, T, 16)
        out, _ = pred(z, c, hist)
        assert torch.equal(out, z)

    def test_wrong_token_count_rejected(self):
        pred = tiny_predictor()
        z = torch.randn(1, 7, 16)
        c = pred.control_embedder(torch.tensor([0]), torch.randn(1, 2, 2))
        with pytest.raises(ValueError):
            pred(z, c, torch.randn(1, 3, 7, 16))

    def test_gradient_matches_central_differences(self):
        # prediction_loss through the full network, float64, toy dims
        # (h = w = 4, d = 1): gradients w.r.t. input tokens and a weight
        # tensor on each supervision path.
        torch.manual_seed(5)
        pred = OccPredictor(
            PredictorConfig(latent_dims=(4, 4, 1), channels=8, heads=2, history=2)
        ).double()
        T = pred.cfg.n_tokens
        gen = torch.Generator().manual_seed(6)
        z = torch.randn(1, T, 8, dtype=torch.float64, generator=gen, requires_grad=True)
        hist = torch.randn(1, 2, T, 8, dtype=torch.float64, generator=gen)
        target = torch.randn(1, T, 8, dtype=torch.float64, generator=gen)
        cmds = torch.tensor([1])
        wps = torch.randn(1, 3, 2, dtype=torch.float64, generator=gen)
        gt_mat = torch.from_numpy(
            RigidTransform2D(0.2, 0.5, -0.1).as_matrix()
        )[None]

        def loss_fn():
            ctrl = pred.control_embedder(cmds, wps)
            out, mat = pred(z, ctrl, hist)
            total, _ = prediction_loss([out], [target], [mat], [gt_mat], (1.0,), 0.3)
            return total

        params = {
            "z_tokens": z,
            "mca_out": pred.mca[0].occ_self.attn.out_proj.weight,
            "head_w": pred.transform_head.mlp[2].weight,
            "temporal_w": pred.st[0].temporal_mlp[-1].weight,
        }
        total = loss_fn()
        grads = torch.autograd.grad(total, list(params.values()))

        eps = 1e-6
        rng = np.random.default_rng(7)
        for (name, tensor), grad in zip(params.items(), grads):
            flat = tensor.detach().reshape(-1)
            gflat = grad.reshape(-1)
            for idx in rng.choice(flat.numel(), size=min(10, flat.numel()), replace=False):
                with torch.no_grad():
                    orig = flat[idx].item()
                    flat[idx] = orig + eps
                    up = loss_fn().item()
                    flat[idx] = orig - eps
                    down = loss_fn().item()
                    flat[idx] = orig
                fd = (up - down) / (2 * eps)
                auto = gflat[idx].item()
                rel = abs(auto - fd) / max(abs(auto), abs(fd), 1e-6)
                assert rel <= 1e-4, f"{name}[{idx}]: autograd {auto} vs fd {fd}"


class TestHistoryBuffer:
    def test_capacity_and_order(self):
        buf = HistoryBuffer(3)
        for i in range(5):
            buf.push(torch.full((2, 2), float(i)))
        window = buf.stacked()
        assert window.shape[0] == 3
        assert [w[0, 0].item() for w in window] == [2.0, 3.0, 4.0]

    def test_single_entry_pads_to_full_window(self):
        buf = HistoryBuffer(3)
        entry = torch.randn(2, 2)
        buf.push(entry)
        window = buf.stacked()
        assert window.shape[0] == 3
        assert all(torch.equal(window[i], entry) for i in range(3))

    def test_empty_buffer_rejected(self):
        with pytest.raises(ValueError):
            HistoryBuffer(2).stacked()


@pytest.fixture(scope="module")
def setup():
    torch.manual_seed(0)
    vae = TriPlaneVae(VaeConfig(grid_shape=(16, 16, 4), n_classes=5, channels=16))
    pred = OccPredictor(
        PredictorConfig(latent_dims=vae.cfg.latent_dims, channels=16, history=3)
    )
    seq = generate_synthetic_sequence(
        SceneGenConfig(grid_shape=(16, 16, 4), n_classes=5, seq_len=16), seed=5
    )
    return vae, pred, seq


class TestRollout:

    def test_paper_protocol_horizon(self, setup):
        vae, pred, seq = setup
        grids, latents = rollout(seq.frames[:4], seq.controls[3:9], vae, pred)
        assert len(grids) == 6
        assert all(g.shape == (16, 16, 4) for g in grids)

    def test_deterministic(self, setup):
        vae, pred, seq = setup
        a = rollout(seq.frames[:4], seq.controls[3:9], vae, pred)
        b = rollout(seq.frames[:4], seq.controls[3:9], vae, pred)
        assert all(torch.equal(x, y) for x, y in zip(a[1], b[1]))
        assert all(np.array_equal(x.labels, y.labels) for x, y in zip(a[0], b[0]))

    def test_longer_horizon_without_retraining(self, setup):
        vae, pred, seq = setup
        grids, _ = rollout(seq.frames[:4], seq.controls[3:15], vae, pred)
        assert len(grids) == 12

    def test_length_contract_for_all_n(self, setup):
        vae, pred, seq = setup
        for n in (1, 2, 5):
            grids, latents = rollout(seq.frames[:4], seq.controls[3 : 3 + n], vae, pred)
            assert len(grids) == n and len(latents) == n

    def test_single_initial_frame_padded(self, setup):
        vae, pred, seq = setup
        grids, _ = rollout(seq.frames[:1], seq.controls[:2], vae, pred)
        assert len(grids) == 2

    def test_empty_controls_rejected(self, setup):
        vae, pred, seq = setup
        with pytest.raises(ValueError):
            rollout(seq.frames[:4], [], vae, pred)
