"""Deterministic training loop and evaluation."""

from __future__ import annotations

import logging
import random
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import DatasetSplit, SampleSet, _channel_stats
from .encoders import EncoderConfig
from .fusion import classification_loss, predict, total_loss
from .metrics import EvalReport
from .model import BPLCZModel

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,L_cls,L_con,L,train_OA"


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-4
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 0.002
    alpha: float = 0.25
    beta: float = 2.0
    seed: int = 47
    use_bgp: bool = True
    use_msm: bool = True
    embed_dim: int = 128
    conv_channels: tuple = (16, 32, 64)
    hidden: int | None = None

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("learning_rate", "batch_size", "embed_dim"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("momentum", "weight_decay", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(embed_dim=self.embed_dim, conv_channels=self.conv_channels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d


@dataclass
class EpochRecord:
    epoch: int
    l_cls: float
    l_con: float
    loss: float
    train_oa: float

    def line(self) -> str:
        return f"{self.epoch},{self.l_cls!r},{self.l_con!r},{self.loss!r},{self.train_oa!r}"


@dataclass
class TrainResult:
    model: BPLCZModel
    log: list = field(default_factory=list)

    def log_text(self) -> str:
        return "\n".join([LOG_HEADER] + [r.line() for r in self.log]) + "\n"

    def write_log(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.log_text())
        return path


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, step {step}")
        self.epoch, self.step = epoch, step


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


@contextmanager
def deterministic_torch():
    threads = torch.get_num_threads()
    was_det = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.set_num_threads(threads)
        torch.use_deterministic_algorithms(was_det)


def build_model(cfg: TrainConfig, split: DatasetSplit | None = None) -> BPLCZModel:
    """Seeded model initialization with normalization taken from the training split."""
    seed_everything(cfg.seed)
    model = BPLCZModel(encoder_cfg=cfg.encoder_config(), hidden=cfg.hidden,
                       class_count=split.class_count if split is not None else 17)
    if split is not None:
        if "sar_mean" in split.provenance:
            stats = split.channel_stats()
        else:
            sar_mean, sar_std = _channel_stats(split.train.sar)
            ms_mean, ms_std = _channel_stats(split.train.ms)
            stats = (sar_mean, sar_std, ms_mean, ms_std)
        model.set_normalization(*stats)
    return model


def train(split: DatasetSplit, cfg: TrainConfig, model: BPLCZModel | None = None,
          on_epoch=None) -> TrainResult:
    """Joint classification + band-prompt alignment training with SGD-momentum.

    Each epoch reshuffles the training set with a generator seeded from
    ``cfg.seed``; the last partial batch is kept.
    """
    with deterministic_torch():
        if model is None:
            model = build_model(cfg, split)
        result = TrainResult(model)
        if cfg.epochs == 0:
            return result

        opt = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum,
                              weight_decay=cfg.weight_decay)
        gen = torch.Generator().manual_seed(cfg.seed)
        sar_all = torch.from_numpy(split.train.sar)
        ms_all = torch.from_numpy(split.train.ms)
        y_all = torch.from_numpy(split.train.labels)
        n = len(y_all)
        beta = cfg.beta if cfg.use_bgp else 0.0

        for epoch in range(1, cfg.epochs + 1):
            model.train()
            order = torch.randperm(n, generator=gen)
            sums = np.zeros(3)
            correct = 0
            for step, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                y = y_all[idx]
                feats, logits = model(sar_all[idx], ms_all[idx])
                if cfg.use_bgp:
                    l_con, _ = model.contrastive(feats, y, cfg.alpha, cfg.use_msm)
                else:
                    l_con = torch.zeros((), dtype=logits.dtype)
                loss = total_loss(logits, y, l_con, beta)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(epoch, step, loss.item())
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()

                b = len(y)
                l_cls = classification_loss(logits.detach(), y).item()
                sums += b * np.array([l_cls, l_con.item(), loss.item()])
                correct += int((predict(logits.detach()) == y).sum())
            sums /= n
            rec = EpochRecord(epoch, float(sums[0]), float(sums[1]), float(sums[2]), correct / n)
            result.log.append(rec)
            log.debug("epoch %d L_cls=%.4f L_con=%.4f L=%.4f OA=%.4f", epoch, rec.l_cls, rec.l_con, rec.loss, rec.train_oa)
            if on_epoch is not None:
                on_epoch(rec)
        model.eval()
    return result


@torch.no_grad()
def predict_samples(model: BPLCZModel, samples: SampleSet, batch_size: int = 256):
    """Predicted labels and fused features for every sample, in order."""
    model.eval()
    preds, fused = [], []
    with deterministic_torch():
        for start in range(0, len(samples), batch_size):
            sar = torch.from_numpy(samples.sar[start:start + batch_size])
            ms = torch.from_numpy(samples.ms[start:start + batch_size])
            feats, logits = model(sar, ms)
            preds.append(predict(logits))
            fused.append(torch.cat(feats, dim=1))
    return torch.cat(preds).numpy(), torch.cat(fused).numpy()


def evaluate(model: BPLCZModel, samples: SampleSet, batch_size: int = 256) -> EvalReport:
    y_pred, _ = predict_samples(model, samples, batch_size)
    return EvalReport.from_predictions(samples.labels, y_pred, model.class_count)
