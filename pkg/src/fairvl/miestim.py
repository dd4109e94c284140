"""Dictionary-proxy mutual information: batch estimates of the proxy
feature distribution, attribute marginals/conditionals, entropies (nats),
and the summed MI loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, concat_rows
from .datamodel import AttributeSchema
from .errors import NumericalError
from .fairdict import AssignmentMatrix

LOG_FLOOR = 1e-12


@dataclass
class ProxyDistributions:
    p_feature: Tensor                 # C
    p_attr: list[np.ndarray]          # per attribute: probs over present groups
    p_cond: list[Tensor]              # per attribute: n_present x C
    present_groups: list[np.ndarray]  # per attribute: group indices present


def estimate_distributions(weights: AssignmentMatrix | Tensor,
                           attribute_values: np.ndarray,
                           schema: AttributeSchema) -> ProxyDistributions:
    """In-batch estimates: p(f=e_c) averages the assignment rows; the
    attribute marginal/conditionals use indicator weighting. Groups absent
    from the batch are masked, not zero-filled."""
    w = weights.weights if isinstance(weights, AssignmentMatrix) else as_tensor(weights)
    attribute_values = np.asarray(attribute_values, dtype=np.int64)
    B = w.shape[0]
    p_feature = w.mean(axis=0)

    p_attr, p_cond, present = [], [], []
    for m in range(schema.M):
        vals = attribute_values[:, m]
        groups = np.array(sorted(set(int(v) for v in vals)))
        rows, probs = [], []
        for g in groups:
            ind = (vals == g).astype(np.float64)
            count = ind.sum()
            probs.append(count / B)
            rows.append((Tensor(ind[None, :]) @ w) / count)
        p_attr.append(np.array(probs))
        p_cond.append(concat_rows(rows))
        present.append(groups)
    return ProxyDistributions(p_feature, p_attr, p_cond, present)


def entropy(p) -> Tensor:
    """Shannon entropy in nats, 0*log 0 := 0; probabilities are clamped
    only inside the log."""
    p = as_tensor(p)
    data = p.data
    if np.any(data < -1e-12):
        raise NumericalError("entropy: negative probability")
    total = float(data.sum())
    if abs(total - 1.0) > 1e-9:
        raise NumericalError(f"entropy: probabilities sum to {total}, not 1")
    return -(p * p.clip_min(LOG_FLOOR).log()).sum()


def _row_entropy(rows: Tensor) -> Tensor:
    return -(rows * rows.clip_min(LOG_FLOOR).log()).sum(axis=1)


def mi_per_attribute(dist: ProxyDistributions,
                     attribute_subset: list[int] | None = None) -> list[Tensor]:
    """H(f) - sum_a p(a) H(f | a) for each (selected) attribute."""
    h_feature = -(dist.p_feature * dist.p_feature.clip_min(LOG_FLOOR).log()).sum()
    indices = range(len(dist.p_cond)) if attribute_subset is None else attribute_subset
    out = []
    for m in indices:
        h_cond = (Tensor(dist.p_attr[m]) * _row_entropy(dist.p_cond[m])).sum()
        out.append(h_feature - h_cond)
    return out


def mi_loss(dist: ProxyDistributions,
            attribute_subset: list[int] | None = None) -> Tensor:
    terms = mi_per_attribute(dist, attribute_subset)
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
