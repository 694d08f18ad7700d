"""The full band-prompted fusion model and its checkpoint format."""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn

from .bands import default_band_groups, format_band_table, parse_band_table, split_arrays, validate_partition
from .contrastive import build_msm, contrastive_loss, identity_target
from .data import MS_CHANNELS, NUM_CLASSES, SAR_CHANNELS
from .encoders import DualEncoder, EncoderConfig, Tokenizer, similarity_bundle
from .fusion import Classifier, ClassifierConfig, fuse_features
from .prompts import ClassDescription, PromptCatalog, default_catalog

CHECKPOINT_FORMAT = "bplcz-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class BPLCZModel(nn.Module):
    def __init__(self, groups=None, catalog: PromptCatalog | None = None,
                 encoder_cfg: EncoderConfig | None = None, hidden: int | None = None,
                 class_count: int = NUM_CLASSES):
        super().__init__()
        self.groups = default_band_groups() if groups is None else list(groups)
        validate_partition(self.groups)
        self.catalog = default_catalog(self.groups) if catalog is None else catalog
        self.class_count = class_count
        tokenizer = Tokenizer.from_texts(self.catalog.all_prompts())
        self.encoder = DualEncoder([g.width for g in self.groups], tokenizer, encoder_cfg)
        d = self.encoder.cfg.embed_dim
        self.classifier = Classifier(ClassifierConfig(len(self.groups) * d, hidden, class_count))
        self.register_buffer("sar_mean", torch.zeros(SAR_CHANNELS))
        self.register_buffer("sar_std", torch.ones(SAR_CHANNELS))
        self.register_buffer("ms_mean", torch.zeros(MS_CHANNELS))
        self.register_buffer("ms_std", torch.ones(MS_CHANNELS))

    def set_normalization(self, sar_mean, sar_std, ms_mean, ms_std):
        for name, value in zip(("sar_mean", "sar_std", "ms_mean", "ms_std"), (sar_mean, sar_std, ms_mean, ms_std)):
            buf = getattr(self, name)
            buf.copy_(torch.as_tensor(value, dtype=buf.dtype))

    def group_features(self, sar, ms) -> list:
        """Raw per-group image features, one ``[B, d]`` tensor per band group."""
        sar = (sar - self.sar_mean) / self.sar_std
        ms = (ms - self.ms_mean) / self.ms_std
        parts = split_arrays(sar, ms, self.groups)
        return [self.encoder.encode_images(x, i) for i, x in enumerate(parts)]

    def forward(self, sar, ms):
        feats = self.group_features(sar, ms)
        return feats, self.classifier(fuse_features(feats))

    def text_features(self, labels) -> list:
        """Per-group text features of the ground-truth prompts of ``labels``."""
        labels = torch.as_tensor(labels)
        uniq, inverse = torch.unique(labels, return_inverse=True)
        out = []
        for i, g in enumerate(self.groups):
            # each distinct prompt is encoded once; rows are gathered back per sample
            feats = self.encoder.encode_texts(self.catalog.prompts_for(uniq.tolist(), g.name), i)
            out.append(feats[inverse])
        return out

    def contrastive(self, image_feats, labels, alpha: float, use_msm: bool = True):
        bundle = similarity_bundle(image_feats, self.text_features(labels), alpha)
        w = build_msm(labels) if use_msm else identity_target(len(labels))
        return contrastive_loss(bundle.fused_s, bundle.fused_s_hat, w), bundle

    def manifest(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "encoder": self.encoder.cfg.to_dict(),
            "hidden": self.classifier.cfg.hidden,
            "class_count": self.class_count,
            "band_table": format_band_table(self.groups),
            "group_order": [g.name for g in self.groups],
            "descriptions": [[d.class_id, d.class_name, d.extended_description] for d in self.catalog.descriptions],
            "vocabulary": list(self.encoder.tokenizer.vocab),
        }


def save_checkpoint(model: BPLCZModel, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"manifest": model.manifest(), "state_dict": model.state_dict(), "extra": extra or {}}
    torch.save(payload, path)
    return path


def model_from_manifest(manifest: dict) -> BPLCZModel:
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a {CHECKPOINT_FORMAT} file")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
    groups = parse_band_table(manifest["band_table"])
    descriptions = [ClassDescription(int(c), n, t) for c, n, t in manifest["descriptions"]]
    catalog = PromptCatalog(descriptions, groups)
    model = BPLCZModel(groups, catalog, EncoderConfig(**manifest["encoder"]), manifest["hidden"], manifest["class_count"])
    if model.encoder.tokenizer.vocab != manifest["vocabulary"]:
        raise CheckpointError("vocabulary in checkpoint does not match the prompt catalog")
    return model


def load_checkpoint(path):
    """Returns ``(model, payload)``; the model is in eval mode."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
        manifest = payload["manifest"]
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    model = model_from_manifest(manifest)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not match manifest ({exc})") from exc
    model.eval()
    return model, payload
