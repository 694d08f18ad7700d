"""Confusion-matrix heatmaps and 2-D projections of fused features."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from sklearn.manifold import TSNE  # noqa: E402

from .data import LCZ_CODES, SampleSet  # noqa: E402
from .metrics import EvalReport  # noqa: E402


def row_normalize(confusion) -> np.ndarray:
    c = np.asarray(confusion, dtype=np.float64)
    rows = c.sum(axis=1, keepdims=True)
    return np.divide(c, rows, out=np.zeros_like(c), where=rows > 0)


def emit_confusion_figure(report: EvalReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    norm = row_normalize(report.confusion)
    k = norm.shape[0]
    codes = LCZ_CODES[:k]
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(norm, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(k), codes)
    ax.set_yticks(range(k), codes)
    ax.set_xlabel("predicted LCZ")
    ax.set_ylabel("true LCZ")
    ax.set_title(f"OA {report.overall_accuracy:.4f}  kappa {report.kappa:.4f}")
    for i in range(k):
        for j in range(k):
            if norm[i, j] >= 0.005:
                ax.text(j, i, f"{norm[i, j]:.2f}", ha="center", va="center", fontsize=5,
                        color="white" if norm[i, j] > 0.5 else "black")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def select_per_class(labels, per_class: int, seed: int) -> np.ndarray:
    """Seeded draw of up to ``per_class`` indices from each class present, sorted."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    picks = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        picks.append(rng.permutation(members)[:per_class])
    return np.sort(np.concatenate(picks))


def project_features(features, seed: int = 47, perplexity: float = 30.0) -> tuple:
    """t-SNE to 2-D; perplexity is clipped below the sample count."""
    n = len(features)
    perplexity = float(min(perplexity, max(1.0, (n - 1) / 3)))
    params = {"method": "t-SNE", "perplexity": perplexity, "init": "pca", "learning_rate": "auto",
              "max_iter": 1000, "random_state": seed, "metric": "euclidean"}
    tsne = TSNE(n_components=2, perplexity=perplexity, init="pca", learning_rate="auto",
                max_iter=1000, random_state=seed, metric="euclidean")
    return tsne.fit_transform(np.asarray(features, dtype=np.float64)), params


def emit_embedding_projection(model, samples: SampleSet, path, per_class: int = 70, seed: int = 47) -> np.ndarray:
    """Scatter of the t-SNE projection of fused features; writes a ``.txt`` sidecar with the settings."""
    from .training import predict_samples

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    idx = select_per_class(samples.labels, per_class, seed)
    subset = samples.subset(idx)
    _, fused = predict_samples(model, subset)
    coords, params = project_features(fused, seed=seed)

    fig, ax = plt.subplots(figsize=(7, 6))
    cmap = plt.get_cmap("tab20")
    for c in np.unique(subset.labels):
        m = subset.labels == c
        ax.scatter(coords[m, 0], coords[m, 1], s=6, color=cmap(int(c) % 20), label=LCZ_CODES[int(c)])
    ax.legend(markerscale=2, fontsize=6, ncol=2, loc="best")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

    params.update({"per_class": per_class, "samples": len(subset), "selection_seed": seed})
    path.with_suffix(".txt").write_text("".join(f"{k}={v}\n" for k, v in params.items()))
    return coords
