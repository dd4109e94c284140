"""Acceptance gate: the eight headline criteria, one pass/fail line each.

Each test prints `[PASS]`/`[FAIL] <criterion>: <detail>` (visible with
`pytest -s tests/test_acceptance.py`) and then asserts, so the suite both
reports and enforces the criteria at their stated tolerances and budgets.
"""

import time

import numpy as np
import pytest

from fairvl.autodiff import Tensor
from fairvl.datamodel import (Batch, SyntheticSpec, default_schema,
                              generate_synthetic, make_schema)
from fairvl.encoders import EmbeddingBatch, check_gradients
from fairvl.fairdict import Codebook, vq_loss
from fairvl.metrics import PredictionSet, build_report
from fairvl.miestim import estimate_distributions, mi_loss
from fairvl.notes import NoteVariants, SelectionConfig, sample_text_pair
from fairvl.runner import (FairModel, RunConfig, attribute_probe_accuracy,
                           compute_losses, default_demo_config,
                           default_demo_spec, evaluate_zero_shot,
                           frozen_image_embeddings, linear_probe,
                           split_train_val, train)
from fairvl.selfcheck import _fixture_checks, auc_paircount, mi_bruteforce
from fairvl.losses import (ContrastiveConfig, attribute_cls_loss,
                           alignment_loss, nt_xent)
from fairvl.fairdict import reconstruct, soft_assign


def report(name: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_mi_oracle_equivalence():
    """1000 random instances vs the brute-force oracle, within 1e-9."""
    t0 = time.monotonic()
    rng = np.random.default_rng(42)
    worst = 0.0
    schema_cache = {}
    for _ in range(1000):
        b = int(rng.integers(1, 17))
        c = int(rng.integers(1, 9))
        m_count = int(rng.integers(1, 3))
        sizes = tuple(int(rng.integers(2, 4)) for _ in range(m_count))
        if sizes not in schema_cache:
            schema_cache[sizes] = make_schema(
                [(f"a{m}", [f"g{m}_{k}" for k in range(s)])
                 for m, s in enumerate(sizes)])
        w = rng.dirichlet(np.ones(c), size=b)
        attrs = np.column_stack([rng.integers(0, s, size=b) for s in sizes])
        dist = estimate_distributions(Tensor(w), attrs, schema_cache[sizes])
        worst = max(worst, abs(mi_loss(dist).item() - mi_bruteforce(w, attrs)))

    # the fixed worked example
    schema = make_schema([("gender", ["male", "female"])])
    wmat = np.array([[0.8, 0.2], [0.6, 0.4], [0.3, 0.7], [0.1, 0.9]])
    attrs = np.array([[0], [0], [1], [1]])
    fixture = mi_loss(estimate_distributions(Tensor(wmat), attrs, schema)).item()
    elapsed = time.monotonic() - t0
    ok = worst < 1e-9 and abs(fixture - 0.132506) < 1e-6 and elapsed < 30
    report("MI oracle equivalence",
           ok, f"max |diff| = {worst:.2e} over 1000 instances, "
               f"worked example = {fixture:.6f}, {elapsed:.1f}s")


def test_auc_oracle_equivalence():
    """Sort-based AUC vs O(N^2) pair counting on 1000 instances, 1e-12."""
    from fairvl.metrics import auc

    t0 = time.monotonic()
    rng = np.random.default_rng(7)
    worst = 0.0
    n_defined = 0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        scores = np.round(rng.normal(size=n), 1)  # coarse grid forces ties
        labels = rng.integers(0, 2, size=n)
        a, b = auc(scores, labels), auc_paircount(scores, labels)
        if (a is None) != (b is None):
            worst = float("inf")
        elif a is not None:
            n_defined += 1
            worst = max(worst, abs(a - b))
    elapsed = time.monotonic() - t0
    ok = worst < 1e-12 and elapsed < 30
    report("AUC oracle equivalence",
           ok, f"max |diff| = {worst:.2e} over 1000 instances "
               f"({n_defined} defined), {elapsed:.1f}s")


def test_gradient_suite():
    """Central-difference checks per loss on >= 200 coordinates each, plus
    exact zeros for stop-gradient and frozen-discriminator coordinates."""
    t0 = time.monotonic()
    schema = make_schema([("gender", ["male", "female"]),
                          ("language", ["english", "spanish"])])
    spec = SyntheticSpec(n_samples=6, d_in=8, bias_strength=1.0,
                         noise_std=0.5, seed=0)
    samples = generate_synthetic(spec, schema)
    config = RunConfig(d_in=8, vocab_dim=32, hidden=(8, 8), d_embed=4,
                       codebook_size=5, batch_size=4, seed=0)
    model = FairModel(config, schema)
    batch = Batch(samples[:4])
    cfg = ContrastiveConfig(tau=config.tau)
    attrs = batch.attribute_matrix()
    x = batch.features()
    from fairvl.notes import embed_tokens
    t1_vecs = np.stack([embed_tokens(s.note_variants.neutral, 32)
                        for s in batch.samples])
    t2_vecs = np.stack([embed_tokens(s.note_variants.randomized[0], 32)
                        for s in batch.samples])
    image_names = [n for n in model.params.names() if n.startswith("image_encoder.")]
    text_names = [n for n in model.params.names() if n.startswith("text_encoder.")]
    main_names = model.main_param_names()
    disc_names = model.discriminators.param_names()

    def encode_all():
        img = model.encode_images(x, batch.ids)
        t1 = model.text_encoder.encode(t1_vecs, batch.ids, "text1")
        t2 = model.text_encoder.encode(t2_vecs, batch.ids, "text2")
        assign = soft_assign(model.codebook, img)
        recon = reconstruct(model.codebook, assign, batch.ids)
        return img, t1, t2, assign, recon

    # freeze stop-gradient targets at the base point for FD probing
    img0, _, _, _, recon0 = encode_all()
    sg = (img0.vectors.data.copy(), recon0.vectors.data.copy())

    losses = {
        "nt_xent": (lambda p: nt_xent(*encode_all()[1:3], cfg), text_names),
        "alignment": (lambda p: alignment_loss(
            encode_all()[1], encode_all()[0], encode_all()[4], cfg,
            config.lambda_txt_rimg)[2], main_names),
        "vq_loss": (lambda p: vq_loss(model.codebook, encode_all()[0],
                                      encode_all()[4], sg_targets=sg),
                    image_names + ["codebook.elements"]),
        "mi_loss": (lambda p: mi_loss(estimate_distributions(
            encode_all()[3], attrs, schema)),
            image_names + ["codebook.elements"]),
        "attribute_cls_loss": (lambda p: attribute_cls_loss(
            model.discriminators.predict(encode_all()[0], frozen=False),
            attrs), image_names + disc_names),
        "total_loss": (lambda p: compute_losses(
            model, batch, vq_sg_targets=sg)[0], main_names),
    }
    details = []
    ok = True
    for name, (fn, names) in losses.items():
        rep = check_gradients(fn, model.params, h=1e-5, tol=1e-4,
                              max_coords=250, seed=1, names=names)
        ok = ok and rep.passed(1e-4) and rep.n_checked >= 200
        details.append(f"{name}={rep.max_rel_error:.1e}({rep.n_checked})")

    # stop-gradient coordinates: with independent leaves, f receives only
    # the commitment-term gradient and f_hat only the reconstruction-term
    # gradient, exactly
    f = EmbeddingBatch(Tensor(np.array([[1.0, -2.0], [0.5, 3.0]]),
                              requires_grad=True), "image", [0, 1])
    fh = EmbeddingBatch(Tensor(np.array([[0.2, 0.1], [-1.0, 2.0]]),
                               requires_grad=True), "reconstructed", [0, 1])
    cb = Codebook(Tensor(np.zeros((1, 2))), lambda_cmt=0.25)
    vq_loss(cb, f, fh).backward()
    d = f.vectors.data - fh.vectors.data
    sg_ok = (np.array_equal(f.vectors.grad, 2 * 0.25 * d / 2)
             and np.array_equal(fh.vectors.grad, -2 * d / 2))

    # frozen-discriminator coordinates have exactly zero analytic gradient
    model.params.zero_grad()
    total, _ = compute_losses(model, batch)
    total.backward()
    disc_ok = all(model.params[n].grad is None
                  or not np.any(model.params[n].grad) for n in disc_names)

    elapsed = time.monotonic() - t0
    ok = ok and sg_ok and disc_ok and elapsed < 120
    report("gradient suite", ok,
           f"max rel errs {', '.join(details)}; stop-gradient exact zeros: "
           f"{sg_ok}; frozen-discriminator zeros: {disc_ok}; {elapsed:.1f}s")


def test_analytic_fixtures():
    """Every hand-derived fixture reproduces at its stated tolerance."""
    results = _fixture_checks()
    failing = [r for r in results if not r.ok]
    report("analytic fixtures", not failing,
           f"{len(results) - len(failing)}/{len(results)} fixtures match"
           + ("" if not failing
              else "; failing: " + ", ".join(f"{r.name} ({r.detail})"
                                             for r in failing)))


def test_fairness_metric_invariants():
    """Relabel/duplication invariance, ES-AUC <= AUC, worst-group
    minimality: 500 random cases each, zero violations."""
    rng = np.random.default_rng(3)
    schema = make_schema([("gender", ["male", "female"])])
    violations = {"relabel": 0, "duplication": 0, "es_bound": 0, "worst": 0}
    for _ in range(500):
        n = int(rng.integers(4, 80))
        scores = rng.uniform(size=n)
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        groups = rng.integers(0, 2, size=n)
        groups[:2] = [0, 1]
        p = PredictionSet(scores, labels, groups[:, None])
        rep = build_report(p, schema)
        a = rep.per_attribute["gender"]

        flipped = build_report(
            PredictionSet(scores, labels, (1 - groups)[:, None]), schema)
        fa = flipped.per_attribute["gender"]
        if (fa.dpd != a.dpd or fa.deodds != a.deodds or fa.es_auc != a.es_auc
                or fa.worst_group_auc != a.worst_group_auc):
            violations["relabel"] += 1

        dup = build_report(
            PredictionSet(np.r_[scores, scores], np.r_[labels, labels],
                          np.r_[groups, groups][:, None]), schema)
        da = dup.per_attribute["gender"]
        same = (abs(dup.auc - rep.auc) < 1e-12
                and (da.dpd is None) == (a.dpd is None)
                and (da.dpd is None or abs(da.dpd - a.dpd) < 1e-12)
                and (da.es_auc is None) == (a.es_auc is None)
                and (da.es_auc is None or abs(da.es_auc - a.es_auc) < 1e-12))
        if not same:
            violations["duplication"] += 1

        if a.es_auc is not None and a.es_auc > rep.auc + 1e-12:
            violations["es_bound"] += 1
        defined = [v for v in a.group_auc.values() if v is not None]
        if defined and a.worst_group_auc != min(defined):
            violations["worst"] += 1
    total = sum(violations.values())
    report("fairness metric invariants", total == 0,
           f"violations over 500 cases each: {violations}")


@pytest.mark.slow
def test_debiasing_demonstration():
    """Directional debiasing at toy scale: attribute decodability drops
    >= 10 points toward chance, linear-probe DPD decreases in >= 2/3
    seeds, linear-probe AUC stays within 5 points of the ablation."""
    t0 = time.monotonic()
    schema = default_schema()

    def run(seed, debias):
        samples = generate_synthetic(default_demo_spec(seed), schema)
        cfg = default_demo_config(seed, debias=debias)
        model, _, _ = train(cfg, samples, schema)
        eval_s, train_s = split_train_val(samples, 0.5, 123)
        emb_tr = frozen_image_embeddings(model, train_s)
        emb_ev = frozen_image_embeddings(model, eval_s)
        g_tr = Batch(train_s).attribute_matrix()
        g_ev = Batch(eval_s).attribute_matrix()
        acc = np.mean([attribute_probe_accuracy(emb_tr, g_tr[:, m],
                                                emb_ev, g_ev[:, m])
                       for m in range(schema.M)])
        pred = linear_probe(model, train_s, eval_s, lr=1e-2, epochs=1000)
        rep = build_report(pred, schema)
        dpd = np.mean([a.dpd for a in rep.per_attribute.values()
                       if a.dpd is not None])
        return float(acc), float(rep.auc), float(dpd)

    gaps, auc_pairs, dpd_down = [], [], 0
    lines = []
    for seed in (0, 1, 2):
        acc0, auc0, dpd0 = run(seed, debias=False)
        acc1, auc1, dpd1 = run(seed, debias=True)
        # both attributes are binary and balanced: chance = 0.5
        gaps.append(abs(acc0 - 0.5) - abs(acc1 - 0.5))
        auc_pairs.append((auc0, auc1))
        dpd_down += dpd1 < dpd0
        lines.append(f"seed {seed}: probe acc {acc0:.3f}->{acc1:.3f}, "
                     f"AUC {auc0:.3f}->{auc1:.3f}, DPD {dpd0:.3f}->{dpd1:.3f}")
    mean_gap = float(np.mean(gaps))
    auc_drop = float(np.mean([a0 - a1 for a0, a1 in auc_pairs]))
    elapsed = time.monotonic() - t0
    ok = mean_gap >= 0.10 and dpd_down >= 2 and abs(auc_drop) <= 0.05 \
        and elapsed < 900
    report("debiasing demonstration", ok,
           f"mean decodability drop {100 * mean_gap:.1f} pts, DPD down in "
           f"{dpd_down}/3 seeds, mean AUC change {100 * auc_drop:+.1f} pts, "
           f"{elapsed:.0f}s [" + "; ".join(lines) + "]")


def test_determinism(tmp_path):
    """Same config + seed twice: bit-identical checkpoint, log, report."""
    schema = default_schema()
    spec = SyntheticSpec(n_samples=24, d_in=8, bias_strength=1.0, seed=5)
    samples = generate_synthetic(spec, schema)
    cfg = RunConfig(d_in=8, vocab_dim=32, hidden=(8, 8), d_embed=4,
                    codebook_size=5, batch_size=4, epochs=2,
                    val_fraction=0.25, seed=5)
    artifacts = []
    for run_id in ("a", "b"):
        ckpt = tmp_path / f"ckpt_{run_id}.json"
        log = tmp_path / f"log_{run_id}.csv"
        model, _, _ = train(cfg, samples, schema, checkpoint_path=ckpt,
                            log_path=log)
        rep = evaluate_zero_shot(model, samples)
        rep_path = tmp_path / f"report_{run_id}.json"
        rep_path.write_text(rep.to_json())
        artifacts.append((ckpt.read_bytes(), log.read_bytes(),
                          rep_path.read_bytes()))
    same = [artifacts[0][i] == artifacts[1][i] for i in range(3)]
    report("determinism", all(same),
           f"checkpoint identical: {same[0]}, log identical: {same[1]}, "
           f"report identical: {same[2]}")


def test_text_pair_sampler_frequencies():
    """Neutral/variant selection frequencies within 3 sigma at 10k draws."""
    k = 5
    variants = NoteVariants(neutral="n",
                            randomized=tuple(f"r{i}" for i in range(k)))
    n = 10_000
    worst = 0.0
    ok = True
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        rng = np.random.default_rng(2024)
        counts: dict[str, int] = {}
        for _ in range(n):
            t1, _t2 = sample_text_pair(variants, SelectionConfig(p_txt1=p),
                                       rng=rng)
            counts[t1] = counts.get(t1, 0) + 1
        sigma = np.sqrt(p * (1 - p) / n)
        dev = abs(counts.get("n", 0) / n - p)
        ok = ok and dev <= max(3 * sigma, 1e-12)
        worst = max(worst, dev - 3 * sigma)
        q = (1 - p) / k
        sigma_q = np.sqrt(q * (1 - q) / n)
        for i in range(k):
            dev = abs(counts.get(f"r{i}", 0) / n - q)
            ok = ok and dev <= max(3 * sigma_q, 1e-12)
            worst = max(worst, dev - 3 * sigma_q)
    report("text-pair sampler frequencies", ok,
           f"all marginals within 3 sigma at {n} draws for "
           f"p in {{0, 0.25, 0.5, 0.75, 1}} "
           f"(worst margin {worst:+.2e} relative to the bound)")
