"""Self-verification suite: independent brute-force oracles and analytic
fixtures, runnable from the CLI.

The oracles here deliberately avoid the vectorized production code paths:
the MI oracle re-derives every probability with raw Python loops and the
AUC oracle counts positive-negative pairs directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .datamodel import make_schema
from .encoders import EmbeddingBatch, ParamStore, check_gradients
from .errors import FairVLError
from .fairdict import AssignmentMatrix, Codebook, reconstruct, soft_assign, vq_loss
from .losses import ContrastiveConfig, alignment_loss, nt_xent
from .metrics import PredictionSet, auc, deodds, dpd, es_auc, weighted_f1
from .miestim import estimate_distributions, mi_loss


# -- independent oracles ----------------------------------------------------

def mi_bruteforce(weights: np.ndarray, attribute_values: np.ndarray) -> float:
    """Sum over attributes of H(f) - H(f|A), recomputed from the raw
    assignment rows and indicators with plain loops, in nats."""
    B, C = weights.shape
    M = attribute_values.shape[1]

    def h(probs):
        return -sum(p * math.log(p) for p in probs if p > 0.0)

    p_feature = [sum(weights[i][c] for i in range(B)) / B for c in range(C)]
    total = 0.0
    for m in range(M):
        groups = sorted(set(int(a) for a in attribute_values[:, m]))
        cond_term = 0.0
        for g in groups:
            members = [i for i in range(B) if attribute_values[i, m] == g]
            p_a = len(members) / B
            p_cond = [sum(weights[i][c] for i in members) / len(members)
                      for c in range(C)]
            cond_term += p_a * h(p_cond)
        total += h(p_feature) - cond_term
    return total


def auc_paircount(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """O(N^2) pair counting with ties worth 0.5."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    if not pos or not neg:
        return None
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# -- check harness ----------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _fixture_checks() -> list[CheckResult]:
    out = []

    def close(name, got, want, tol=1e-6):
        ok = abs(got - want) < tol
        out.append(CheckResult(name, ok, f"got {got!r}, want {want!r}"))

    schema2 = make_schema([("gender", ["male", "female"])])

    # soft assignment of f=[0] against elements {[0],[1]}
    params = ParamStore()
    cb = Codebook(params.add("codebook.elements", np.array([[0.0], [1.0]])))
    emb = EmbeddingBatch(Tensor(np.array([[0.0]])), "image", [0])
    w = soft_assign(cb, emb).weights.data[0]
    close("soft_assign softmax(0,-1)", w[0], 1.0 / (1.0 + math.exp(-1.0)), 1e-9)

    # reconstruction of the same example
    rec = reconstruct(cb, soft_assign(cb, emb), [0]).vectors.data[0, 0]
    close("reconstruct convex combination", rec, math.exp(-1.0) / (1 + math.exp(-1.0)), 1e-9)

    # VQ fixture: B=1, f=[1,0], f_hat=[0,0], lambda=0.25
    params2 = ParamStore()
    cb2 = Codebook(params2.add("codebook.elements", np.zeros((1, 2))), lambda_cmt=0.25)
    f = EmbeddingBatch(Tensor(np.array([[1.0, 0.0]])), "image", [0])
    fh = EmbeddingBatch(Tensor(np.array([[0.0, 0.0]])), "reconstructed", [0])
    close("vq_loss fixture 1.25", vq_loss(cb2, f, fh).item(), 1.25, 1e-12)

    # NT-Xent fixture
    cfg = ContrastiveConfig(tau=1.0)
    b1 = EmbeddingBatch(Tensor(np.array([[1.0, 0.0], [0.0, 1.0]])), "text1", [0, 1])
    b2 = EmbeddingBatch(Tensor(np.array([[1.0, 0.0], [0.0, 1.0]])), "text2", [0, 1])
    want = -math.log(math.e / (math.e + 2.0))
    close("nt_xent fixture 0.551445", nt_xent(b1, b2, cfg).item(), want, 1e-6)

    # alignment fixture
    imgs = EmbeddingBatch(Tensor(np.array([[1.0, 0.0], [0.0, 1.0]])), "image", [0, 1])
    l_ti, _, _ = alignment_loss(b1, imgs, imgs, cfg, 10.0)
    close("alignment fixture 0.313262", l_ti.item(),
          -math.log(math.e / (math.e + 1.0)), 1e-6)

    # MI worked example
    wmat = np.array([[0.8, 0.2], [0.6, 0.4], [0.3, 0.7], [0.1, 0.9]])
    attrs = np.array([[0], [0], [1], [1]])
    dist = estimate_distributions(AssignmentMatrix(Tensor(wmat)), attrs, schema2)
    close("mi_loss worked example", mi_loss(dist).item(),
          mi_bruteforce(wmat, attrs), 1e-12)
    close("mi_loss fixture 0.132506", mi_loss(dist).item(), 0.132506, 1e-6)

    # metric fixtures
    pred = PredictionSet(np.array([1, 1, 0, 0, 1, 0, 0, 0.0]),
                         np.array([1, 1, 0, 0, 1, 0, 0, 0]),
                         np.array([[0]] * 4 + [[1]] * 4))
    close("dpd fixture 0.25", dpd(pred, 0), 0.25, 1e-12)
    pred2 = PredictionSet(np.array([1, 0, 0, 0, 1, 1.0]),
                          np.array([1, 1, 0, 0, 1, 0]),
                          np.array([[0]] * 4 + [[1]] * 2))
    close("deodds fixture 1.0", deodds(pred2, 0), 1.0, 1e-12)
    close("es_auc fixture", es_auc(0.8, [0.9, 0.7]), 0.8 / 1.2, 1e-12)
    pred3 = PredictionSet(np.array([1, 0, 0, 0.0]), np.array([1, 1, 0, 0]),
                          np.array([[0]] * 4))
    close("weighted_f1 fixture 0.733333", weighted_f1(pred3),
          0.5 * (2 / 3) + 0.5 * (4 / 5), 1e-12)
    close("auc fixture 0.75", auc(np.array([0.8, 0.7, 0.4, 0.3]),
                                  np.array([1, 0, 1, 0])), 0.75, 1e-12)
    return out


def _oracle_checks(n_instances: int = 200, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    schema_cache = {}
    worst_mi = 0.0
    for _ in range(n_instances):
        B = int(rng.integers(2, 17))
        C = int(rng.integers(1, 9))
        M = int(rng.integers(1, 3))
        sizes = tuple(int(rng.integers(2, 4)) for _ in range(M))
        if sizes not in schema_cache:
            schema_cache[sizes] = make_schema(
                [(f"a{m}", [f"g{m}_{k}" for k in range(s)])
                 for m, s in enumerate(sizes)])
        schema = schema_cache[sizes]
        w = rng.dirichlet(np.ones(C), size=B)
        attrs = np.column_stack([rng.integers(0, s, size=B) for s in sizes])
        dist = estimate_distributions(AssignmentMatrix(Tensor(w)), attrs, schema)
        got = mi_loss(dist).item()
        worst_mi = max(worst_mi, abs(got - mi_bruteforce(w, attrs)))
    results = [CheckResult("MI oracle equivalence", worst_mi < 1e-9,
                           f"max |diff| = {worst_mi:.2e} over {n_instances} instances")]

    worst_auc = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, 201))
        scores = np.round(rng.normal(size=n), 1)  # coarse grid forces ties
        labels = rng.integers(0, 2, size=n)
        a, b = auc(scores, labels), auc_paircount(scores, labels)
        if (a is None) != (b is None):
            worst_auc = float("inf")
        elif a is not None:
            worst_auc = max(worst_auc, abs(a - b))
    results.append(CheckResult("AUC oracle equivalence", worst_auc < 1e-12,
                               f"max |diff| = {worst_auc:.2e} over {n_instances} instances"))
    return results


def _gradient_checks(seed: int = 0) -> list[CheckResult]:
    from .datamodel import Batch, SyntheticSpec, generate_synthetic
    from .runner import FairModel, RunConfig, compute_losses
    from .runner import _forward_batch as _fb

    schema = make_schema([("gender", ["male", "female"]),
                          ("language", ["english", "spanish"])])
    spec = SyntheticSpec(n_samples=6, d_in=8, bias_strength=1.0,
                         noise_std=0.5, seed=seed)
    samples = generate_synthetic(spec, schema)
    config = RunConfig(d_in=8, vocab_dim=32, hidden=(8, 8), d_embed=4,
                       codebook_size=5, batch_size=4, seed=seed)
    model = FairModel(config, schema)
    batch = Batch(samples[:4])

    # freeze the stop-gradient targets at the base point so finite
    # differences probe the function the analytic gradient belongs to
    img0, _, _, _assign0, recon0 = _fb(model, batch, 0, 0)
    targets = (img0.vectors.data.copy(), recon0.vectors.data.copy())

    def loss_fn(_params):
        total, _ = compute_losses(model, batch, vq_sg_targets=targets)
        return total

    main_names = model.main_param_names()
    report = check_gradients(loss_fn, model.params, h=1e-5, tol=1e-4,
                             max_coords=250, seed=seed, names=main_names)
    results = [CheckResult("end-to-end gradient check (main params)",
                           report.passed(1e-4),
                           f"max rel err = {report.max_rel_error:.2e} "
                           f"over {report.n_checked} coordinates")]

    # frozen-discriminator coordinates must have exactly zero analytic grad
    model.params.zero_grad()
    total, _ = compute_losses(model, batch)
    total.backward()
    disc_ok = all(
        model.params[n].grad is None or not np.any(model.params[n].grad)
        for n in model.discriminators.param_names())
    results.append(CheckResult("frozen discriminator gradient is zero", disc_ok))
    return results


def run_selfcheck(verbose: bool = True) -> bool:
    results = []
    for fn in (_fixture_checks, _oracle_checks, _gradient_checks):
        try:
            results.extend(fn())
        except FairVLError as e:
            results.append(CheckResult(fn.__name__, False, str(e)))
    all_ok = all(r.ok for r in results)
    if verbose:
        for r in results:
            print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
        print("selfcheck:", "OK" if all_ok else "FAILED")
    return all_ok
