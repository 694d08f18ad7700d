"""Per-band-group image encoders, prompt text encoder, and cosine similarities."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

PAD, UNK = "<pad>", "<unk>"
_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


@dataclass
class EncoderConfig:
    embed_dim: int = 128
    conv_channels: tuple = (16, 32, 64)
    text_width: int = 64
    text_kernel: int = 3
    share_text_encoder: bool = True
    share_image_encoders: bool = False

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if not self.conv_channels:
            raise ValueError("conv_channels must be non-empty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d


@dataclass
class Tokenizer:
    """Closed word-level vocabulary; index 0 pads, index 1 is unknown."""

    vocab: list = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        self._index = {w: i for i, w in enumerate(self.vocab)}

    @classmethod
    def from_texts(cls, texts) -> "Tokenizer":
        words = sorted({w for t in texts for w in cls.split(t)})
        return cls([PAD, UNK] + words)

    @staticmethod
    def split(text: str) -> list:
        return _TOKEN_RE.findall(text.lower())

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list:
        return [self._index.get(w, 1) for w in self.split(text)]

    def batch(self, texts) -> torch.Tensor:
        ids = [self.encode(t) for t in texts]
        for t, row in zip(texts, ids):
            if not row:
                raise ValueError(f"prompt {t!r} has no tokens")
        out = torch.zeros(len(ids), max(map(len, ids)), dtype=torch.long)
        for i, row in enumerate(ids):
            out[i, : len(row)] = torch.tensor(row)
        return out


def _conv_trunk(in_channels: int, widths) -> nn.Sequential:
    layers = []
    for w in widths:
        layers += [
            nn.Conv2d(in_channels, w, 3, padding=1, bias=False),
            nn.BatchNorm2d(w),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2, ceil_mode=True),
        ]
        in_channels = w
    return nn.Sequential(*layers)


class ImageEncoder(nn.Module):
    """Conv blocks, global average pooling, then a linear map to the embedding."""

    def __init__(self, in_channels: int, cfg: EncoderConfig, trunk: nn.Module | None = None):
        super().__init__()
        self.in_channels = in_channels
        if trunk is None:
            self.adapter = nn.Identity()
            self.trunk = _conv_trunk(in_channels, cfg.conv_channels)
        else:
            # shared trunk: a per-group 1x1 adapter maps C_i channels to the trunk width
            self.adapter = nn.Conv2d(in_channels, cfg.conv_channels[0], 1)
            self.trunk = trunk
        self.head = nn.Linear(cfg.conv_channels[-1], cfg.embed_dim)

    def forward(self, x):
        # x: [B, H, W, C] channel-last
        if x.shape[-1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {x.shape[-1]}")
        x = x.permute(0, 3, 1, 2)
        x = self.trunk(self.adapter(x))
        return self.head(x.mean(dim=(2, 3)))


class TextEncoder(nn.Module):
    """Token embedding, one 1-D convolution over the sequence, masked mean pool, linear."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, cfg.text_width, padding_idx=0)
        self.conv = nn.Conv1d(cfg.text_width, cfg.text_width, cfg.text_kernel, padding=cfg.text_kernel // 2)
        self.head = nn.Linear(cfg.text_width, cfg.embed_dim)

    def forward(self, tokens):
        mask = (tokens != 0).unsqueeze(-1).to(self.embed.weight.dtype)
        h = self.embed(tokens)
        h = F.relu(self.conv(h.transpose(1, 2))).transpose(1, 2)
        pooled = (h * mask).sum(1) / mask.sum(1).clamp_min(1.0)
        return self.head(pooled)


class DualEncoder(nn.Module):
    """One image encoder per band group and a (by default shared) text encoder."""

    def __init__(self, group_widths, tokenizer: Tokenizer, cfg: EncoderConfig | None = None):
        super().__init__()
        self.cfg = cfg or EncoderConfig()
        self.group_widths = list(group_widths)
        self.tokenizer = tokenizer
        trunk = _conv_trunk(self.cfg.conv_channels[0], self.cfg.conv_channels) if self.cfg.share_image_encoders else None
        self.image_encoders = nn.ModuleList(ImageEncoder(c, self.cfg, trunk) for c in self.group_widths)
        n_text = 1 if self.cfg.share_text_encoder else len(self.group_widths)
        self.text_encoders = nn.ModuleList(TextEncoder(len(tokenizer), self.cfg) for _ in range(n_text))

    @property
    def n_groups(self) -> int:
        return len(self.group_widths)

    def encode_images(self, group_batch, group_index: int):
        """Raw (unnormalized) image features ``[B, d]`` for one band group."""
        expected = self.group_widths[group_index]
        if group_batch.shape[-1] != expected:
            raise ValueError(f"group {group_index} expects {expected} channels, got {group_batch.shape[-1]}")
        return self.image_encoders[group_index](group_batch)

    def encode_texts(self, prompts, group_index: int = 0):
        """Raw text features ``[B, d]`` for a list of prompt strings."""
        if not prompts:
            raise ValueError("no prompts to encode")
        for p in prompts:
            if not p or not p.strip():
                raise ValueError("empty prompt")
        tokens = self.tokenizer.batch(prompts)
        enc = self.text_encoders[0 if self.cfg.share_text_encoder else group_index]
        return enc(tokens)


def l2_normalize(x, eps: float = 0.0):
    norms = x.norm(dim=-1, keepdim=True)
    if torch.any(norms <= eps):
        raise ValueError("zero-norm feature row; cosine similarity undefined")
    return x / norms


def similarity_matrices(image_feats, text_feats):
    """Cosine similarities ``(S, S_hat)``: image-to-text and text-to-image, both ``[B, B]``."""
    if image_feats.shape != text_feats.shape or image_feats.dim() != 2:
        raise ValueError(f"feature shapes differ: {tuple(image_feats.shape)} vs {tuple(text_feats.shape)}")
    img = l2_normalize(image_feats)
    txt = l2_normalize(text_feats)
    return img @ txt.T, txt @ img.T


def _compensated_sum(mats):
    """Neumaier summation; float32 and narrower inputs accumulate in float64."""
    dtype = mats[0].dtype
    acc = torch.float64 if dtype in (torch.float16, torch.bfloat16, torch.float32) else dtype
    total = mats[0].to(acc)
    comp = torch.zeros_like(total)
    for m in mats[1:]:
        m = m.to(acc)
        t = total + m
        comp = comp + torch.where(total.abs() >= m.abs(), (total - t) + m, (m - t) + total)
        total = t
    return total + comp


def fuse_similarities(per_group, alpha: float):
    """``alpha`` times the elementwise sum of the per-group matrices.

    The sum is compensated so that the result is rounded once, e.g. seven
    copies of ``M`` with ``alpha=0.25`` give exactly ``1.75 * M``.
    """
    if not len(per_group):
        raise ValueError("no similarity matrices to fuse")
    shape = per_group[0].shape
    for m in per_group:
        if m.shape != shape or m.dim() != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"similarity shapes differ or are not square: {tuple(m.shape)} vs {tuple(shape)}")
    return (alpha * _compensated_sum(list(per_group))).to(per_group[0].dtype)


@dataclass
class SimilarityBundle:
    per_group_s: list
    per_group_s_hat: list
    fused_s: torch.Tensor
    fused_s_hat: torch.Tensor
    alpha: float


def similarity_bundle(image_feats, text_feats, alpha: float) -> SimilarityBundle:
    pairs = [similarity_matrices(i, t) for i, t in zip(image_feats, text_feats)]
    s = [p[0] for p in pairs]
    s_hat = [p[1] for p in pairs]
    return SimilarityBundle(s, s_hat, fuse_similarities(s, alpha), fuse_similarities(s_hat, alpha), alpha)
