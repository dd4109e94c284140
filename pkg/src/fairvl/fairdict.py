"""Learnable visual dictionary: soft assignment, soft reconstruction,
and the reconstruction loss with stop-gradient semantics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, stop_gradient
from .encoders import EmbeddingBatch, ParamStore
from .errors import ConfigError, DimensionError


@dataclass
class Codebook:
    elements: Tensor  # C x D
    lambda_cmt: float = 0.25

    def __post_init__(self):
        if self.elements.ndim != 2 or self.elements.shape[0] < 1:
            raise ConfigError("codebook needs a C x D element matrix with C >= 1")
        if self.lambda_cmt < 0:
            raise ConfigError("lambda_cmt must be >= 0")

    @property
    def C(self) -> int:
        return self.elements.shape[0]

    @property
    def D(self) -> int:
        return self.elements.shape[1]

    @classmethod
    def create(cls, params: ParamStore, C: int, D: int, lambda_cmt: float = 0.25,
               seed: int = 2, scale: float | None = None) -> "Codebook":
        # match the spread of encoder outputs at init
        a = scale if scale is not None else np.sqrt(6.0 / (2 * D))
        rng = np.random.default_rng(seed)
        t = params.add("codebook.elements", rng.uniform(-a, a, size=(C, D)))
        return cls(t, lambda_cmt)


@dataclass
class AssignmentMatrix:
    weights: Tensor  # B x C, rows on the simplex

    @property
    def B(self) -> int:
        return self.weights.shape[0]

    @property
    def C(self) -> int:
        return self.weights.shape[1]


def soft_assign(codebook: Codebook, embeddings: EmbeddingBatch) -> AssignmentMatrix:
    """Softmax over negative squared L2 distances to every element."""
    f = embeddings.vectors
    if f.shape[1] != codebook.D:
        raise DimensionError(
            f"embedding dim {f.shape[1]} != codebook dim {codebook.D}"
        )
    e = codebook.elements
    f2 = (f * f).sum(axis=1, keepdims=True)          # B x 1
    e2 = (e * e).sum(axis=1)                          # C
    logits = -(f2 - 2.0 * (f @ e.T) + e2)             # B x C
    shift = np.max(logits.data, axis=1, keepdims=True)
    ex = (logits - shift).exp()
    return AssignmentMatrix(ex / ex.sum(axis=1, keepdims=True))


def reconstruct(codebook: Codebook, weights: AssignmentMatrix,
                sample_ids: list[int]) -> EmbeddingBatch:
    """Convex combination of the elements per sample."""
    return EmbeddingBatch(weights.weights @ codebook.elements, "reconstructed",
                          list(sample_ids))


def vq_loss(codebook: Codebook, embeddings: EmbeddingBatch,
            reconstructions: EmbeddingBatch,
            sg_targets: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """Mean over the batch of ||f_hat - sg(f)||^2 + lambda_cmt * ||f - sg(f_hat)||^2.

    Only the explicit sg() targets are held constant: the first term still
    back-propagates through the reconstruction's full dependency (codebook
    and, via the assignment weights, the encoder). sg_targets substitutes
    fixed (f, f_hat) target values; finite-difference harnesses use it to
    probe the function whose gradient the stop-gradient semantics define."""
    f, f_hat = embeddings.vectors, reconstructions.vectors
    if f.shape != f_hat.shape:
        raise DimensionError("embedding/reconstruction shape mismatch")
    if sg_targets is None:
        d1 = f_hat - stop_gradient(f)
        d2 = f - stop_gradient(f_hat)
    else:
        d1 = f_hat - Tensor(sg_targets[0])
        d2 = f - Tensor(sg_targets[1])
    per_row = (d1 * d1).sum(axis=1) + codebook.lambda_cmt * (d2 * d2).sum(axis=1)
    return per_row.mean()
