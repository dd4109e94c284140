"""Contrastive text debiasing, text-image alignment, multi-attribute
adversarial discriminators, and the combined training objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat_rows, logsumexp_rows, normalize_rows
from .datamodel import AttributeSchema
from .encoders import MLP, EmbeddingBatch, ParamStore
from .errors import ConfigError, NumericalError, PairingError

LOG_FLOOR = 1e-12
_MASK = -1e30  # additive logit mask; exp underflows to exactly 0


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.07

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("temperature must be > 0")


@dataclass
class Lambdas:
    txt_txt: float = 0.01
    mi: float = 1.0
    adv: float = 1.0
    txt_rimg: float = 10.0

    def __post_init__(self):
        for name in ("txt_txt", "mi", "adv", "txt_rimg"):
            if getattr(self, name) < 0:
                raise ConfigError(f"lambda {name} must be >= 0")


def _check_paired(a: EmbeddingBatch, b: EmbeddingBatch):
    if a.sample_ids != b.sample_ids:
        raise PairingError(
            f"sample ids differ between {a.provenance} and {b.provenance} batches"
        )


def nt_xent(batch1: EmbeddingBatch, batch2: EmbeddingBatch,
            cfg: ContrastiveConfig) -> Tensor:
    """Symmetric contrastive loss over the 2B embeddings: each embedding is
    an anchor once, its counterpart in the other batch is the positive, and
    the candidate set is all other 2B-1 embeddings."""
    _check_paired(batch1, batch2)
    B = batch1.size
    z = normalize_rows(concat_rows([batch1.vectors, batch2.vectors]))
    sims = (z @ z.T) / cfg.tau                       # 2B x 2B cosine/tau
    mask = np.full((2 * B, 2 * B), 0.0)
    np.fill_diagonal(mask, _MASK)
    lse = logsumexp_rows(sims + mask)
    pos_idx = np.concatenate([np.arange(B) + B, np.arange(B)])
    pos_mask = np.zeros((2 * B, 2 * B))
    pos_mask[np.arange(2 * B), pos_idx] = 1.0
    pos = (sims * pos_mask).sum(axis=1)
    return (lse - pos).mean()


def _symmetric_clip_loss(text: EmbeddingBatch, images: EmbeddingBatch,
                         cfg: ContrastiveConfig) -> Tensor:
    """Average over 2B terms of text->image and image->text log-softmax,
    positives on the diagonal."""
    _check_paired(text, images)
    t = normalize_rows(text.vectors)
    v = normalize_rows(images.vectors)
    sims = (t @ v.T) / cfg.tau                        # B x B
    diag_mask = np.eye(text.size)
    pos = (sims * diag_mask).sum(axis=1)
    row_lse = logsumexp_rows(sims)
    col_lse = logsumexp_rows(sims.T)
    return ((row_lse - pos).sum() + (col_lse - pos).sum()) / (2 * text.size)


def alignment_loss(text1: EmbeddingBatch, images: EmbeddingBatch,
                   reconstructed: EmbeddingBatch, cfg: ContrastiveConfig,
                   lambda_txt_rimg: float) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (L_txt_img, L_txt_rimg, combined)."""
    l_ti = _symmetric_clip_loss(text1, images, cfg)
    l_tr = _symmetric_clip_loss(text1, reconstructed, cfg)
    return l_ti, l_tr, l_ti + lambda_txt_rimg * l_tr


class DiscriminatorStack:
    """Shared ReLU trunk plus one linear head per sensitive attribute."""

    TRUNK_HIDDEN = (256, 128, 64)

    def __init__(self, params: ParamStore, schema: AttributeSchema,
                 d_embed: int, seed: int = 3, register: bool = True):
        self.schema = schema
        self.trunk = MLP(params, "discriminator.trunk",
                         [d_embed, *self.TRUNK_HIDDEN], seed=seed, register=register)
        self.heads = [
            MLP(params, f"discriminator.head.{name}",
                [self.TRUNK_HIDDEN[-1], len(values)], seed=seed + 1 + m,
                register=register)
            for m, (name, values) in enumerate(schema.attributes)
        ]
        self.params = params

    def param_names(self) -> list[str]:
        return [n for n in self.params.names() if n.startswith("discriminator.")]

    def predict(self, images: EmbeddingBatch, frozen: bool = False) -> list[Tensor]:
        """Per-attribute B x |groups| probability rows. With frozen=True the
        discriminator parameters are treated as constants, so the main
        model's update can never touch them."""
        h = self.trunk.forward(images.vectors, frozen=frozen).relu()
        out = []
        for head in self.heads:
            logits = head.forward(h, frozen=frozen)
            shift = np.max(logits.data, axis=1, keepdims=True)
            ex = (logits - shift).exp()
            out.append(ex / ex.sum(axis=1, keepdims=True))
        return out


def predict_attributes(stack: DiscriminatorStack, images: EmbeddingBatch,
                       frozen: bool = False) -> list[Tensor]:
    return stack.predict(images, frozen=frozen)


def attribute_cls_loss(predictions: list[Tensor], attribute_values: np.ndarray,
                       attribute_subset: list[int] | None = None) -> Tensor:
    """Cross-entropy of the true group, summed over attributes, averaged
    over the batch."""
    attribute_values = np.asarray(attribute_values, dtype=np.int64)
    B = attribute_values.shape[0]
    indices = range(len(predictions)) if attribute_subset is None else attribute_subset
    total = None
    for m in indices:
        p = predictions[m]
        onehot = np.zeros(p.shape)
        onehot[np.arange(B), attribute_values[:, m]] = 1.0
        term = -(Tensor(onehot) * p.clip_min(LOG_FLOOR).log()).sum() / B
        total = term if total is None else total + term
    return Tensor(0.0) if total is None else total


def adversarial_loss(att_cls: Tensor) -> Tensor:
    """L_adv = -L_att_cls; with frozen discriminators this reverses the
    classification gradient on the encoder/codebook path."""
    return -att_cls


@dataclass
class LossBundle:
    txt_txt: float
    txt_img: float
    txt_rimg: float
    align: float
    vq: float
    mi: float
    att_cls: float
    adv: float
    total: float
    mi_per_attribute: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        d = {
            "L_txt_txt": self.txt_txt, "L_txt_img": self.txt_img,
            "L_txt_rimg": self.txt_rimg, "L_align": self.align,
            "L_VQ": self.vq, "L_MI": self.mi, "L_att_cls": self.att_cls,
            "L_adv": self.adv, "L_total": self.total,
        }
        for k, v in self.mi_per_attribute.items():
            d[f"L_MI[{k}]"] = v
        return d


def total_loss(align: Tensor, txt_txt: Tensor, vq: Tensor, mi: Tensor,
               adv: Tensor, lambdas: Lambdas) -> Tensor:
    components = {"L_align": align, "L_txt_txt": txt_txt, "L_VQ": vq,
                  "L_MI": mi, "L_adv": adv}
    for name, t in components.items():
        if not np.isfinite(t.data):
            raise NumericalError(f"non-finite loss component {name}")
    return (align + lambdas.txt_txt * txt_txt + vq
            + lambdas.mi * mi + lambdas.adv * adv)
