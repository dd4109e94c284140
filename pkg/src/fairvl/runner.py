"""Training loop with the alternating adversarial schedule, zero-shot and
linear-probe evaluation, run configuration, and logging."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, normalize_rows
from .datamodel import AttributeSchema, Batch, Sample, make_batches
from .encoders import (EmbeddingBatch, ImageEncoder, ParamStore, TextEncoder,
                       load_checkpoint, save_checkpoint)
from .errors import ConfigError, NumericalError
from .fairdict import Codebook, reconstruct, soft_assign, vq_loss
from .losses import (ContrastiveConfig, DiscriminatorStack, Lambdas, LossBundle,
                     adversarial_loss, attribute_cls_loss, alignment_loss,
                     nt_xent, total_loss)
from .metrics import FairnessReport, PredictionSet, build_report
from .miestim import estimate_distributions, mi_loss, mi_per_attribute
from .notes import SelectionConfig, embed_tokens, sample_text_pair
from .optim import Adam

_TEMPLATE_CLASS_NOTES = {
    0: "The patient has not been diagnosed with glaucoma.",
    1: "The patient has been diagnosed with glaucoma.",
}


def default_demo_spec(seed: int = 0):
    """Synthetic dataset where both attributes are strongly decodable from
    the raw features and gender correlates with the label, so a naive probe
    picks the demographic shortcut."""
    from .datamodel import SyntheticSpec

    return SyntheticSpec(
        n_samples=4000, bias_strength=2.0, noise_std=0.35,
        class_separation=1.0, seed=seed,
        label_prior_per_group={"gender": [0.7, 0.3]})


def default_demo_config(seed: int = 0, debias: bool = True) -> "RunConfig":
    """Toy-scale training configuration for the debiasing demonstration;
    debias=False zeroes the three debiasing loss weights."""
    kwargs = {} if debias else dict(lambda_mi=0.0, lambda_adv=0.0,
                                    lambda_txt_txt=0.0)
    return RunConfig(epochs=30, seed=seed, lr_main=5e-4, lr_disc=5e-3,
                     tau=0.5, **kwargs)


@dataclass
class RunConfig:
    # operating defaults follow the published tuning of the method
    lambda_txt_txt: float = 0.01
    lambda_adv: float = 1.0
    lambda_mi: float = 1.0
    lambda_cmt: float = 0.25
    lambda_txt_rimg: float = 10.0
    p_txt1: float = 0.5
    codebook_size: int = 64
    batch_size: int = 32
    lr_main: float = 1e-5
    lr_disc: float = 5e-5
    epochs: int = 30
    weight_decay: float = 6e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    tau: float = 0.07
    seed: int = 0
    d_in: int = 32
    vocab_dim: int = 256
    hidden: tuple[int, ...] = (64, 32)
    d_embed: int = 16
    K: int = 5
    debias_attributes: list[str] | None = None
    val_fraction: float = 0.1

    def __post_init__(self):
        for name in ("lambda_txt_txt", "lambda_adv", "lambda_mi", "lambda_cmt",
                     "lambda_txt_rimg"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lr_main <= 0 or self.lr_disc <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.codebook_size < 1:
            raise ConfigError("codebook_size must be >= 1")
        if not 0.0 <= self.p_txt1 <= 1.0:
            raise ConfigError("p_txt1 must lie in [0, 1]")
        self.hidden = tuple(self.hidden)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def lambdas(self) -> Lambdas:
        return Lambdas(txt_txt=self.lambda_txt_txt, mi=self.lambda_mi,
                       adv=self.lambda_adv, txt_rimg=self.lambda_txt_rimg)


class FairModel:
    """Image/text encoders, codebook, and the discriminator stack sharing
    one parameter store."""

    def __init__(self, config: RunConfig, schema: AttributeSchema):
        self.config = config
        self.schema = schema
        self.params = ParamStore()
        seed = config.seed
        self.image_encoder = ImageEncoder(
            self.params, d_in=config.d_in, hidden=config.hidden,
            d_out=config.d_embed, seed=seed)
        self.text_encoder = TextEncoder(
            self.params, vocab_dim=config.vocab_dim, hidden=config.hidden,
            d_out=config.d_embed, seed=seed + 1)
        self.codebook = Codebook.create(
            self.params, C=config.codebook_size, D=config.d_embed,
            lambda_cmt=config.lambda_cmt, seed=seed + 2)
        self.discriminators = DiscriminatorStack(
            self.params, schema, d_embed=config.d_embed, seed=seed + 3)

    def main_param_names(self) -> list[str]:
        return [n for n in self.params.names() if not n.startswith("discriminator.")]

    def encode_images(self, features: np.ndarray, ids) -> EmbeddingBatch:
        return self.image_encoder.encode(features, ids)

    def encode_notes(self, texts: list[str], ids, provenance: str) -> EmbeddingBatch:
        vecs = np.stack([embed_tokens(t, self.config.vocab_dim) for t in texts])
        return self.text_encoder.encode(vecs, ids, provenance=provenance)

    def save(self, path):
        save_checkpoint(path, self.params,
                        config={"run": self.to_config_echo()}, seed=self.config.seed)

    def to_config_echo(self) -> dict:
        return {"config": self.config.to_dict(), "schema": self.schema.to_dict()}

    @classmethod
    def load(cls, path) -> "FairModel":
        state, config_echo, _seed = load_checkpoint(path)
        run = config_echo["run"]
        model = cls(RunConfig.from_dict(run["config"]),
                    AttributeSchema.from_dict(run["schema"]))
        model.params.load_state(state)
        return model


def _subset_indices(config: RunConfig, schema: AttributeSchema) -> list[int]:
    if config.debias_attributes is None:
        return list(range(schema.M))
    names = schema.names
    out = []
    for name in config.debias_attributes:
        if name not in names:
            raise ConfigError(f"unknown debias attribute {name!r}")
        out.append(names.index(name))
    return out


def split_train_val(samples: list[Sample], fraction: float,
                    seed: int) -> tuple[list[Sample], list[Sample]]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    order = rng.permutation(len(samples))
    n_val = int(round(fraction * len(samples)))
    val_idx = set(int(i) for i in order[:n_val])
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def _forward_batch(model: FairModel, batch: Batch, epoch: int, step: int):
    """Sample the per-sample text pair, encode all modalities, soft-assign
    and reconstruct."""
    cfg = model.config
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 3, epoch, step]))
    sel = SelectionConfig(p_txt1=cfg.p_txt1)
    pairs = [sample_text_pair(s.note_variants, sel, rng=rng) for s in batch.samples]
    img = model.encode_images(batch.features(), batch.ids)
    txt1 = model.encode_notes([p[0] for p in pairs], batch.ids, "text1")
    txt2 = model.encode_notes([p[1] for p in pairs], batch.ids, "text2")
    assign = soft_assign(model.codebook, img)
    recon = reconstruct(model.codebook, assign, batch.ids)
    return img, txt1, txt2, assign, recon


def compute_losses(model: FairModel, batch: Batch, epoch: int = 0,
                   step: int = 0, vq_sg_targets=None) -> tuple[Tensor, LossBundle]:
    """Main-model objective on one batch with discriminators frozen.
    Returns the differentiable total and the scalar breakdown.
    vq_sg_targets fixes the stop-gradient targets of the reconstruction
    loss to given arrays (used by finite-difference harnesses)."""
    cfg = model.config
    subset = _subset_indices(cfg, model.schema)
    contrastive = ContrastiveConfig(tau=cfg.tau)
    img, txt1, txt2, assign, recon = _forward_batch(model, batch, epoch, step)
    attrs = batch.attribute_matrix()

    l_tt = nt_xent(txt1, txt2, contrastive)
    l_ti, l_tr, l_align = alignment_loss(txt1, img, recon, contrastive,
                                         cfg.lambda_txt_rimg)
    l_vq = vq_loss(model.codebook, img, recon, sg_targets=vq_sg_targets)
    dist = estimate_distributions(assign, attrs, model.schema)
    l_mi = mi_loss(dist, subset)
    mi_terms = mi_per_attribute(dist, subset)
    preds = model.discriminators.predict(img, frozen=True)
    l_att = attribute_cls_loss(preds, attrs, subset)
    l_adv = adversarial_loss(l_att)
    total = total_loss(l_align, l_tt, l_vq, l_mi, l_adv, cfg.lambdas())

    bundle = LossBundle(
        txt_txt=l_tt.item(), txt_img=l_ti.item(), txt_rimg=l_tr.item(),
        align=l_align.item(), vq=l_vq.item(), mi=l_mi.item(),
        att_cls=l_att.item(), adv=l_adv.item(), total=total.item(),
        mi_per_attribute={
            model.schema.names[m]: t.item() for m, t in zip(subset, mi_terms)
        },
    )
    return total, bundle


def train(config: RunConfig, samples: list[Sample], schema: AttributeSchema,
          checkpoint_path=None, log_path=None,
          ) -> tuple[FairModel, list[dict], list[FairnessReport]]:
    """Alternating per-batch schedule: the discriminators take their step
    on detached embeddings first, then the main model minimizes the total
    objective with the discriminators frozen. Fully deterministic given
    the config seed."""
    model = FairModel(config, schema)
    subset = _subset_indices(config, schema)
    adam_main = Adam(model.params, model.main_param_names(), lr=config.lr_main,
                     weight_decay=config.weight_decay, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)
    adam_disc = Adam(model.params, model.discriminators.param_names(),
                     lr=config.lr_disc, weight_decay=config.weight_decay,
                     beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    train_samples, val_samples = split_train_val(
        samples, config.val_fraction, config.seed)
    cfg_hash = config.hash()
    log_rows: list[dict] = []
    epoch_reports: list[FairnessReport] = []
    t_start = time.monotonic()
    step = 0
    try:
        for epoch in range(config.epochs):
            batch_seed = int(np.random.SeedSequence(
                [config.seed, 4, epoch]).generate_state(1)[0])
            for batch in make_batches(train_samples, config.batch_size,
                                      seed=batch_seed, drop_last=True):
                # discriminator update on a detached copy of the embeddings
                img = model.encode_images(batch.features(), batch.ids)
                img_const = EmbeddingBatch(img.vectors.detach(), "image", batch.ids)
                preds = model.discriminators.predict(img_const, frozen=False)
                l_att_disc = attribute_cls_loss(preds, batch.attribute_matrix(),
                                                subset)
                model.params.zero_grad()
                l_att_disc.backward()
                adam_disc.step()

                # main-model update with discriminators frozen
                total, bundle = compute_losses(model, batch, epoch, step)
                if not np.isfinite(total.data):
                    raise NumericalError("non-finite total loss")
                model.params.zero_grad()
                total.backward()
                adam_main.step()

                row = {"kind": "step", "step": step, "epoch": epoch,
                       "config_hash": cfg_hash}
                row.update(bundle.as_dict())
                row["L_att_cls_disc"] = l_att_disc.item()
                log_rows.append(row)
                step += 1

            if val_samples:
                report = evaluate_zero_shot(model, val_samples)
                epoch_reports.append(report)
                row = {"kind": "epoch", "step": step, "epoch": epoch,
                       "config_hash": cfg_hash, "val_auc": report.auc}
                for name, attr in report.per_attribute.items():
                    row[f"val_dpd[{name}]"] = attr.dpd
                log_rows.append(row)
    except NumericalError:
        if checkpoint_path is not None:
            model.save(checkpoint_path)
        raise

    if checkpoint_path is not None:
        model.save(checkpoint_path)
    if log_path is not None:
        save_train_log(log_rows, log_path)
        meta = {"config_hash": cfg_hash, "seed": config.seed,
                "wall_clock_s": time.monotonic() - t_start}
        Path(str(log_path) + ".meta.json").write_text(json.dumps(meta, indent=2))
    return model, log_rows, epoch_reports


def save_train_log(rows: list[dict], path):
    fields: list[str] = []
    for row in rows:
        for k in row:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


# -- evaluation protocols ---------------------------------------------------

def zero_shot_predict(model: FairModel, features: np.ndarray,
                      class_notes: dict[int, str] | None = None) -> np.ndarray:
    """Positive-class probability from the softmax over cosine similarity
    between each image embedding and the per-label note embeddings."""
    notes = class_notes if class_notes is not None else _TEMPLATE_CLASS_NOTES
    for label in (0, 1):
        if label not in notes:
            raise ConfigError(f"missing class note for label {label}")
    img = model.encode_images(features, list(range(len(features))))
    txt = model.encode_notes([notes[0], notes[1]], [0, 1], "text1")
    zi = normalize_rows(img.vectors).data
    zt = normalize_rows(txt.vectors).data
    logits = (zi @ zt.T) / model.config.tau
    logits = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    probs = ex / ex.sum(axis=1, keepdims=True)
    return probs[:, 1]


def evaluate_zero_shot(model: FairModel, samples: list[Sample],
                       class_notes: dict[int, str] | None = None,
                       threshold: float = 0.5) -> FairnessReport:
    batch = Batch(samples)
    scores = zero_shot_predict(model, batch.features(), class_notes)
    pred = PredictionSet(scores, batch.labels(), batch.attribute_matrix(),
                         threshold=threshold)
    return build_report(pred, model.schema)


def frozen_image_embeddings(model: FairModel, samples: list[Sample]) -> np.ndarray:
    batch = Batch(samples)
    return model.encode_images(batch.features(), batch.ids).vectors.data


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def linear_probe(model: FairModel, train_samples: list[Sample],
                 eval_samples: list[Sample], lr: float = 1e-4,
                 epochs: int = 1000, threshold: float = 0.5) -> PredictionSet:
    """Full-batch logistic regression on frozen image embeddings; encoder
    parameters are never touched."""
    y = Batch(train_samples).labels().astype(np.float64)
    if len(set(y)) < 2:
        raise ConfigError("probe training split contains a single class")
    x_train = frozen_image_embeddings(model, train_samples)
    x_eval = frozen_image_embeddings(model, eval_samples)
    n, d = x_train.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(epochs):
        p = _sigmoid(x_train @ w + b)
        err = p - y
        w -= lr * (x_train.T @ err) / n
        b -= lr * err.mean()
    scores = _sigmoid(x_eval @ w + b)
    eval_batch = Batch(eval_samples)
    return PredictionSet(scores, eval_batch.labels(),
                         eval_batch.attribute_matrix(), threshold=threshold)


def attribute_probe_accuracy(embeddings_train: np.ndarray, groups_train: np.ndarray,
                             embeddings_eval: np.ndarray, groups_eval: np.ndarray,
                             ridge: float = 1e-6) -> float:
    """Closed-form least-squares one-vs-rest probe; measures how linearly
    decodable a sensitive attribute is from a representation."""
    k = int(max(groups_train.max(), groups_eval.max())) + 1
    x = np.hstack([embeddings_train, np.ones((len(embeddings_train), 1))])
    y = np.zeros((len(groups_train), k))
    y[np.arange(len(groups_train)), groups_train] = 1.0
    gram = x.T @ x + ridge * np.eye(x.shape[1])
    wmat = np.linalg.solve(gram, x.T @ y)
    xe = np.hstack([embeddings_eval, np.ones((len(embeddings_eval), 1))])
    pred = np.argmax(xe @ wmat, axis=1)
    return float((pred == groups_eval).mean())
