import pytest
import torch

from bplcz.contrastive import build_msm, contrastive_loss
from bplcz.encoders import EncoderConfig, similarity_matrices, fuse_similarities
from bplcz.fusion import classification_loss
from bplcz.model import BPLCZModel, CheckpointError, load_checkpoint, save_checkpoint
from gradcheck import probe_parameters, relative_errors

TINY = EncoderConfig(embed_dim=8, conv_channels=(2, 3), text_width=4)


def tiny_model(seed=0):
    torch.manual_seed(seed)
    return BPLCZModel(encoder_cfg=TINY).double()


def tiny_batch(b=4, size=8, seed=1):
    g = torch.Generator().manual_seed(seed)
    sar = torch.randn(b, size, size, 8, generator=g, dtype=torch.float64)
    ms = torch.randn(b, size, size, 10, generator=g, dtype=torch.float64)
    labels = torch.tensor([3, 7, 3, 16][:b])
    return sar, ms, labels


def test_forward_shapes():
    model = tiny_model().float()
    feats, logits = model(torch.randn(3, 32, 32, 8), torch.randn(3, 32, 32, 10))
    assert len(feats) == 7 and all(f.shape == (3, 8) for f in feats)
    assert logits.shape == (3, 17)
    assert model.classifier.cfg.input_dim == 56


def test_text_features_match_direct_encoding():
    model = tiny_model()
    labels = torch.tensor([5, 0, 5, 12])
    fast = model.text_features(labels)
    for i, g in enumerate(model.groups):
        direct = model.encoder.encode_texts(model.catalog.prompts_for(labels.tolist(), g.name), i)
        torch.testing.assert_close(fast[i], direct, rtol=0, atol=1e-12)


def test_contrastive_matches_manual_pipeline():
    model = tiny_model()
    sar, ms, y = tiny_batch()
    feats, _ = model(sar, ms)
    l_con, bundle = model.contrastive(feats, y, 0.25)
    texts = model.text_features(y)
    s = [similarity_matrices(i, t)[0] for i, t in zip(feats, texts)]
    s_hat = [similarity_matrices(i, t)[1] for i, t in zip(feats, texts)]
    manual = contrastive_loss(fuse_similarities(s, 0.25), fuse_similarities(s_hat, 0.25), build_msm(y))
    assert l_con.item() == manual.item()
    for a, b in zip(bundle.per_group_s, bundle.per_group_s_hat):
        torch.testing.assert_close(b, a.T, rtol=0, atol=1e-6)


class TestGradients:
    """Autograd against central finite differences on a float64 tiny model (B=4, d=8)."""

    def _check(self, loss_fn, model, n_probe=150):
        analytic, numeric = probe_parameters(model, loss_fn, n_probe=n_probe, h=1e-5)
        rel = relative_errors(analytic, numeric, floor=1e-6)
        return (rel <= 1e-4).double().mean().item()

    def test_contrastive_loss_gradients(self):
        model = tiny_model()
        sar, ms, y = tiny_batch()

        def loss():
            feats, _ = model(sar, ms)
            return model.contrastive(feats, y, 0.25)[0]

        assert self._check(loss, model) >= 0.95

    def test_classification_loss_gradients(self):
        model = tiny_model()
        sar, ms, y = tiny_batch()

        def loss():
            return classification_loss(model(sar, ms)[1], y)

        assert self._check(loss, model) >= 0.95

    def test_fused_similarity_entry_gradients(self):
        model = tiny_model()
        sar, ms, y = tiny_batch()

        def entry():
            feats, _ = model(sar, ms)
            return model.contrastive(feats, y, 0.25)[1].fused_s[0, 2]

        assert self._check(entry, model) >= 0.95


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = tiny_model().float()
        model.set_normalization(torch.arange(8.0), torch.full((8,), 2.0), torch.zeros(10), torch.ones(10))
        path = save_checkpoint(model, tmp_path / "m.pt")
        back, payload = load_checkpoint(path)
        assert payload["manifest"]["group_order"] == ["VH", "VV", "PolSAR", "RGB", "VRE", "NIR", "SWIR"]
        for (k, a), (_, b) in zip(model.state_dict().items(), back.state_dict().items()):
            assert torch.equal(a, b), k
        x = (torch.randn(2, 32, 32, 8), torch.randn(2, 32, 32, 10))
        model.eval()
        assert torch.equal(model(*x)[1], back(*x)[1])

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.pt")

    def test_garbage(self, tmp_path):
        p = tmp_path / "bad.pt"
        p.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_manifest_mismatch(self, tmp_path):
        model = tiny_model().float()
        path = save_checkpoint(model, tmp_path / "m.pt")
        payload = torch.load(path, weights_only=True)
        payload["manifest"]["encoder"]["embed_dim"] = 16
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="do not match"):
            load_checkpoint(path)

    def test_wrong_version(self, tmp_path):
        model = tiny_model().float()
        path = save_checkpoint(model, tmp_path / "m.pt")
        payload = torch.load(path, weights_only=True)
        payload["manifest"]["version"] = 99
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)
