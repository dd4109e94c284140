"""Group fairness evaluation: AUC, DPD, DEOdds, equity-scaled scores,
group-wise/worst-group breakdowns, and report assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .datamodel import AttributeSchema
from .errors import ConfigError


@dataclass
class PredictionSet:
    scores: np.ndarray           # N real-valued model outputs
    labels: np.ndarray           # N binary ground truth
    attribute_values: np.ndarray  # N x M group indices
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.attribute_values = np.asarray(self.attribute_values, dtype=np.int64)
        n = len(self.scores)
        if len(self.labels) != n or self.attribute_values.shape[0] != n:
            raise ConfigError("prediction set lengths are inconsistent")

    @property
    def predicted(self) -> np.ndarray:
        return (self.scores >= self.threshold).astype(np.int64)

    def subset(self, mask: np.ndarray) -> "PredictionSet":
        return PredictionSet(self.scores[mask], self.labels[mask],
                             self.attribute_values[mask], self.threshold)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float | None:
    """Rank-statistic AUC with midrank tie handling; None when only one
    class is present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def dpd(pred: PredictionSet, m: int) -> float | None:
    """Spread of positive prediction rates across groups present."""
    vals = pred.attribute_values[:, m]
    rates = [pred.predicted[vals == g].mean() for g in np.unique(vals)]
    if len(rates) < 2:
        return None
    return float(max(rates) - min(rates))


def _group_rates(pred: PredictionSet, m: int):
    """(tpr, fpr) per present group; entries are None when the group lacks
    positives / negatives."""
    vals = pred.attribute_values[:, m]
    yhat, y = pred.predicted, pred.labels
    out = {}
    for g in np.unique(vals):
        sel = vals == g
        pos, neg = sel & (y == 1), sel & (y == 0)
        tpr = float(yhat[pos].mean()) if pos.any() else None
        fpr = float(yhat[neg].mean()) if neg.any() else None
        out[int(g)] = (tpr, fpr)
    return out


def deodds(pred: PredictionSet, m: int) -> float | None:
    """max(TPR spread, FPR spread) across groups; a spread needs >= 2
    groups with the relevant class present, and the result is None when
    both spreads are undefined."""
    rates = _group_rates(pred, m)
    tprs = [t for t, _ in rates.values() if t is not None]
    fprs = [f for _, f in rates.values() if f is not None]
    spreads = []
    if len(tprs) >= 2:
        spreads.append(max(tprs) - min(tprs))
    if len(fprs) >= 2:
        spreads.append(max(fprs) - min(fprs))
    if not spreads:
        return None
    return float(max(spreads))


def es_score(overall: float | None, group_scores: list[float | None]) -> float | None:
    """overall / (1 + sum |overall - group|); None if anything is undefined."""
    if overall is None or any(g is None for g in group_scores) or not group_scores:
        return None
    return float(overall / (1.0 + sum(abs(overall - g) for g in group_scores)))


def es_auc(overall_auc, group_aucs) -> float | None:
    return es_score(overall_auc, list(group_aucs))


def weighted_f1(pred: PredictionSet) -> float:
    """Class-frequency-weighted F1 over the two label categories, 0/0 := 0."""
    y, yhat = pred.labels, pred.predicted
    n = len(y)
    total = 0.0
    for c in (0, 1):
        tp = int(((yhat == c) & (y == c)).sum())
        fp = int(((yhat == c) & (y != c)).sum())
        fn = int(((yhat != c) & (y == c)).sum())
        denom = 2 * tp + fp + fn
        f1_c = 2 * tp / denom if denom > 0 else 0.0
        total += (int((y == c).sum()) / n) * f1_c
    return float(total)


def es_f1(overall_f1, group_f1s) -> float | None:
    return es_score(overall_f1, list(group_f1s))


@dataclass
class AttributeReport:
    dpd: float | None
    deodds: float | None
    es_auc: float | None
    group_auc: dict[str, float | None]
    worst_group_auc: float | None
    es_f1: float | None
    group_f1: dict[str, float]
    worst_group_f1: float | None
    flags: list[str] = field(default_factory=list)


@dataclass
class FairnessReport:
    auc: float | None
    weighted_f1: float
    threshold: float
    per_attribute: dict[str, AttributeReport]

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "weighted_f1": self.weighted_f1,
            "threshold": self.threshold,
            "per_attribute": {
                name: {
                    "dpd": a.dpd, "deodds": a.deodds, "es_auc": a.es_auc,
                    "group_auc": a.group_auc, "worst_group_auc": a.worst_group_auc,
                    "es_f1": a.es_f1, "group_f1": a.group_f1,
                    "worst_group_f1": a.worst_group_f1, "flags": a.flags,
                }
                for name, a in self.per_attribute.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        per_attr = {
            name: AttributeReport(
                dpd=a["dpd"], deodds=a["deodds"], es_auc=a["es_auc"],
                group_auc=a["group_auc"], worst_group_auc=a["worst_group_auc"],
                es_f1=a["es_f1"], group_f1=a["group_f1"],
                worst_group_f1=a["worst_group_f1"], flags=list(a["flags"]),
            )
            for name, a in d["per_attribute"].items()
        }
        return cls(auc=d["auc"], weighted_f1=d["weighted_f1"],
                   threshold=d["threshold"], per_attribute=per_attr)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FairnessReport":
        return cls.from_dict(json.loads(text))

    def csv_rows(self) -> list[dict]:
        """One row per attribute/metric/group with an optional flag."""
        rows = [
            {"attribute": "", "metric": "auc", "group": "", "value": self.auc, "flag": ""},
            {"attribute": "", "metric": "weighted_f1", "group": "",
             "value": self.weighted_f1, "flag": ""},
        ]
        for name, a in self.per_attribute.items():
            flag = ";".join(a.flags)
            for metric, value in (("dpd", a.dpd), ("deodds", a.deodds),
                                  ("es_auc", a.es_auc),
                                  ("worst_group_auc", a.worst_group_auc),
                                  ("es_f1", a.es_f1),
                                  ("worst_group_f1", a.worst_group_f1)):
                rows.append({"attribute": name, "metric": metric, "group": "",
                             "value": value, "flag": flag})
            for group, v in a.group_auc.items():
                rows.append({"attribute": name, "metric": "group_auc",
                             "group": group, "value": v, "flag": flag})
            for group, v in a.group_f1.items():
                rows.append({"attribute": name, "metric": "group_f1",
                             "group": group, "value": v, "flag": flag})
        return rows


def build_report(pred: PredictionSet, schema: AttributeSchema) -> FairnessReport:
    """Every metric per attribute plus group-wise and worst-group scores;
    undefined metrics are flagged and skipped, never silently zeroed."""
    overall_auc = auc(pred.scores, pred.labels)
    overall_f1 = weighted_f1(pred)
    per_attr = {}
    for m, (name, values) in enumerate(schema.attributes):
        flags: list[str] = []
        vals = pred.attribute_values[:, m]
        group_auc: dict[str, float | None] = {}
        group_f1: dict[str, float] = {}
        for g, gname in enumerate(values):
            sel = vals == g
            if not sel.any():
                flags.append(f"{gname}: absent from evaluation set")
                continue
            sub = pred.subset(sel)
            a = auc(sub.scores, sub.labels)
            if a is None:
                flags.append(f"{gname}: AUC undefined (single class)")
            group_auc[gname] = a
            group_f1[gname] = weighted_f1(sub)
            if not (sub.labels == 1).any():
                flags.append(f"{gname}: no positives, excluded from TPR spread")
            if not (sub.labels == 0).any():
                flags.append(f"{gname}: no negatives, excluded from FPR spread")

        defined_aucs = [a for a in group_auc.values() if a is not None]
        dpd_v = dpd(pred, m)
        if dpd_v is None:
            flags.append("DPD undefined (< 2 groups present)")
        deodds_v = deodds(pred, m)
        if deodds_v is None:
            flags.append("DEOdds undefined (both spreads lack groups)")
        es_auc_v = es_auc(overall_auc, list(group_auc.values()))
        if es_auc_v is None:
            flags.append("ES-AUC undefined (missing group AUC)")
        per_attr[name] = AttributeReport(
            dpd=dpd_v,
            deodds=deodds_v,
            es_auc=es_auc_v,
            group_auc=group_auc,
            worst_group_auc=min(defined_aucs) if defined_aucs else None,
            es_f1=es_f1(overall_f1, list(group_f1.values())),
            group_f1=group_f1,
            worst_group_f1=min(group_f1.values()) if group_f1 else None,
            flags=flags,
        )
    return FairnessReport(auc=overall_auc, weighted_f1=overall_f1,
                          threshold=pred.threshold, per_attribute=per_attr)


def summarize_over_seeds(values: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation across repeated trials."""
    arr = np.asarray(values, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), sd
