"""Concatenation fusion of band-group features, classifier head, and the joint loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .data import NUM_CLASSES


@dataclass
class ClassifierConfig:
    input_dim: int
    hidden: int | None = None
    classes: int = NUM_CLASSES


@dataclass
class LossWeights:
    beta: float = 2.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def fuse_features(per_group_feats):
    """Row-wise concatenation ``[B, n*d]`` in the given group order."""
    if not len(per_group_feats):
        raise ValueError("no features to fuse")
    shape = per_group_feats[0].shape
    for f in per_group_feats:
        if f.dim() != 2 or f.shape != shape:
            raise ValueError(f"feature shapes differ: {tuple(f.shape)} vs {tuple(shape)}")
    return torch.cat(list(per_group_feats), dim=1)


class Classifier(nn.Module):
    def __init__(self, cfg: ClassifierConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.hidden:
            self.net = nn.Sequential(nn.Linear(cfg.input_dim, cfg.hidden), nn.ReLU(), nn.Linear(cfg.hidden, cfg.classes))
        else:
            self.net = nn.Linear(cfg.input_dim, cfg.classes)

    def forward(self, fused):
        if fused.shape[-1] != self.cfg.input_dim:
            raise ValueError(f"classifier expects width {self.cfg.input_dim}, got {fused.shape[-1]}")
        return self.net(fused)


def predict(logits):
    # torch.argmax returns the first maximal index, i.e. ties go to the lowest class
    return torch.argmax(logits, dim=-1)


def classification_loss(logits, labels):
    labels = torch.as_tensor(labels, dtype=torch.long)
    k = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k - 1}]")
    return F.cross_entropy(logits, labels)


def total_loss(logits, labels, l_con, beta: float):
    """``L_cls + beta * l_con``.

    Single-precision terms are added in float64, where the sum of two float32
    values is exact; ``total_loss(.., l, b) - total_loss(.., 0, b)`` then
    equals ``b * l`` bit for bit.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    l_cls = classification_loss(logits, labels)
    weighted = beta * torch.as_tensor(l_con, dtype=l_cls.dtype)
    return l_cls.double() + weighted.double()
