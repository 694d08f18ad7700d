"""Multivariate supervised matrix and the symmetric sigmoid-BCE alignment loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class SupervisedMatrix:
    w: torch.Tensor
    labels: torch.Tensor


def build_msm(labels) -> SupervisedMatrix:
    """``w[j, k] = 1`` iff samples j and k share a label."""
    labels = torch.as_tensor(labels).reshape(-1)
    if labels.numel() < 1:
        raise ValueError("empty label batch")
    w = (labels[:, None] == labels[None, :]).to(torch.get_default_dtype())
    return SupervisedMatrix(w, labels)


def identity_target(batch_size: int) -> SupervisedMatrix:
    """Diagonal-only supervision: each sample is positive only with its own prompt."""
    return SupervisedMatrix(torch.eye(batch_size), torch.arange(batch_size))


def contrastive_loss(fused_s, fused_s_hat, w):
    """Mean of the image-to-text and text-to-image BCE terms.

    Each term is the mean over all B*B entries of ``BCE(sigmoid(S), W)``;
    computed from logits for numerical stability.
    """
    target = w.w if isinstance(w, SupervisedMatrix) else torch.as_tensor(w)
    if fused_s.shape != fused_s_hat.shape or fused_s.shape != target.shape:
        raise ValueError(
            f"shape mismatch: S {tuple(fused_s.shape)}, S_hat {tuple(fused_s_hat.shape)}, W {tuple(target.shape)}"
        )
    target = target.to(fused_s.dtype)
    l_i2t = F.binary_cross_entropy_with_logits(fused_s, target)
    l_t2i = F.binary_cross_entropy_with_logits(fused_s_hat, target)
    return (l_i2t + l_t2i) / 2
