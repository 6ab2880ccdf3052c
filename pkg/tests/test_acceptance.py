"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test prints one `[ACCEPTANCE] <criterion>: PASS` line (visible with
`pytest -s` or in the captured output of `pytest -rA`); a failure reads as
the usual pytest failure for that criterion.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from lookalike_lab import analysis as an
from lookalike_lab import datamodel as dm
from lookalike_lab import head, match_engine as me, pairing, scoring, synth
from lookalike_lab.cli import main as cli_main

from test_head import fd_gradient, max_relative_error, random_case
from test_match_engine import make_world, naive_reference


def done(name):
    print(f"[ACCEPTANCE] {name}: PASS")


class TestAcceptance:
    def test_gradient_correctness_200_random_configs(self):
        start = time.monotonic()
        rng = np.random.Generator(np.random.Philox(key=2024))
        for trial in range(200):
            activation = head.IDENTITY if trial % 2 == 0 else head.TANH
            d_in = int(rng.integers(2, 8))
            d_out = int(rng.integers(1, 5))
            params, x1, x2, y = random_case(rng, activation, d_in=d_in, d_out=d_out)
            _, analytic = head.loss_gradient(params, x1, x2, y, 0.5)
            numeric = fd_gradient(params, x1, x2, y, 0.5, step=1e-6)
            err = max_relative_error(analytic.flatten(), numeric)
            assert err <= 1e-4, f"trial {trial}: relative error {err}"
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"gradient check took {elapsed:.1f}s"
        done(f"gradient correctness (200 configs, {elapsed:.1f}s)")

    def test_loss_law_10k_random_inputs(self):
        def reference(p1, p2, y, m):
            dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(p1, p2)))
            return (1 - y) * dist**2 + y * max(0.0, m - dist) ** 2

        rng = np.random.Generator(np.random.Philox(key=777))
        for _ in range(10_000):
            d = int(rng.integers(1, 8))
            p1 = rng.uniform(-3, 3, size=d)
            p2 = rng.uniform(-3, 3, size=d)
            y = int(rng.integers(2))
            m = float(rng.uniform(0.05, 2.0))
            lv = head.contrastive_loss(p1, p2, y, m)
            want = reference(p1, p2, y, m)
            assert math.isclose(lv.value, want, rel_tol=1e-12, abs_tol=1e-15)
            zero_expected = (y == 0 and lv.distance == 0.0) or (y == 1 and lv.distance >= m)
            assert (lv.value == 0.0) == zero_expected
        # exact zeros at both stated conditions
        assert head.contrastive_loss(np.ones(3), np.ones(3), 0, 0.5).value == 0.0
        assert head.contrastive_loss(np.zeros(2), np.array([0.5, 0.0]), 1, 0.5).value == 0.0
        done("loss law (10^4 inputs vs independent reimplementation)")

    def test_synthetic_verification_auc_and_eer(self):
        start = time.monotonic()
        cfg = synth.SynthConfig(n_twin_pairs=100, n_singles=0, images_per_subject=4,
                                dim=16, sigma_image=0.05, delta_twin=0.3, spread=3.0,
                                seed=1234)
        graph, store, _ = synth.generate(cfg)
        owners = tuple(i.rsplit("_i", 1)[0] for i in store.image_ids)
        train_pairs, test_pairs, _ = pairing.build_training_set(
            store, owners, graph, split_fraction=0.8, seed=1234)
        tc = head.TrainConfig(learning_rate=1e-3, margin=0.5, epochs=4,
                              seed=1234, d_out=16)
        params, history = head.train(train_pairs, test_pairs, store, tc)

        index = {img: k for k, img in enumerate(store.image_ids)}
        rows = store.matrix64()
        genuine, impostor = [], []
        for p in test_pairs:
            d = scoring.raw_similarity(params, rows[index[p.a]], rows[index[p.b]])
            (genuine if p.label == pairing.LABEL_SIMILAR else impostor).append(-d)
        curve = an.roc(genuine, impostor)
        m = an.verification_metrics(curve, genuine, impostor)
        elapsed = time.monotonic() - start
        assert m.auc >= 0.99, f"held-out AUC {m.auc}"
        assert m.eer <= 0.05, f"EER {m.eer}"
        assert elapsed < 60.0, f"training run took {elapsed:.1f}s"
        done(f"synthetic verification (AUC {m.auc:.4f}, EER {m.eer:.4f}, {elapsed:.1f}s)")

    def test_match_engine_oracle_workers_and_blocks(self):
        # 20 subjects (<= 50), every worker count and block size bit-equal,
        # moments within 1e-12 of the naive double loop
        graph, store, image_map = make_world(n_twin_pairs=8, n_singles=4, images=3,
                                             seed=99, family=True, incomplete=True)
        assert len(graph.subjects) <= 50
        threshold = 0.6
        reference = None
        for workers in (1, 2, 8):
            for block_size in (1, 7, 64):
                job = me.MatchJob(store=store, graph=graph, image_map=image_map,
                                  kind=me.ComparisonKind(), pair_filter=me.NONMATED_ONLY,
                                  block_size=block_size, bins=128, workers=workers)
                acc = me.run_match(job, retain_threshold=threshold)
                if reference is None:
                    reference = acc
                    hist, stats, retained, subject_max = naive_reference(
                        store, image_map, graph, job.kind, me.NONMATED_ONLY,
                        threshold, 128, acc.bin_edges)
                    assert {(r.image_a, r.image_b) for r in acc.retained} == \
                           {(a, b) for a, b, *_ in retained}
                    for label, st in stats.items():
                        mine = acc.stats[label]
                        assert mine.count == st["count"]
                        assert math.isclose(mine.total, st["total"],
                                            rel_tol=1e-12, abs_tol=1e-12)
                        assert math.isclose(mine.total_sq, st["total_sq"],
                                            rel_tol=1e-12, abs_tol=1e-12)
                        assert np.array_equal(acc.histograms[label], hist[label])
                else:
                    assert acc.retained == reference.retained
                    for label in reference.histograms:
                        assert np.array_equal(acc.histograms[label],
                                              reference.histograms[label])
                    for label in reference.stats:
                        a, b = acc.stats[label], reference.stats[label]
                        assert a.count == b.count
                        assert math.isclose(a.total, b.total, rel_tol=1e-12, abs_tol=1e-12)
                        assert math.isclose(a.total_sq, b.total_sq, rel_tol=1e-12, abs_tol=1e-12)
        done("match-engine oracle (workers 1/2/8 x blocks 1/7/64)")

    def test_metric_oracles(self):
        rng = np.random.Generator(np.random.Philox(key=5150))

        def mw_enumeration(genuine, impostor):
            wins = sum(1 for g in genuine for i in impostor if g > i)
            ties = sum(1 for g in genuine for i in impostor if g == i)
            return (wins + 0.5 * ties) / (len(genuine) * len(impostor))

        for draw in range(100):
            n_g = int(rng.integers(2, 30))
            n_i = int(rng.integers(2, 30))
            g = list(np.round(rng.normal(0.6, 0.3, size=n_g), 2))
            i = list(np.round(rng.normal(0.4, 0.3, size=n_i), 2))
            curve = an.roc(g, i)
            m = an.verification_metrics(curve, g, i)
            # AUC vs Mann-Whitney enumeration, 1e-9
            assert abs(m.auc - mw_enumeration(g, i)) <= 1e-9
            # ROC points vs brute-force counting
            for t, fm, fn in zip(curve.thresholds, curve.fmr, curve.fnmr):
                assert math.isclose(fm, sum(1 for s in i if s >= t) / n_i, abs_tol=1e-12)
                assert math.isclose(fn, sum(1 for s in g if s < t) / n_g, abs_tol=1e-12)
            # EER bracketing: the crossing segment straddles the reported EER
            k = int(np.searchsorted(curve.thresholds, m.eer_threshold, side="right")) - 1
            k = min(max(k, 0), len(curve.thresholds) - 2)
            assert min(curve.fmr[k + 1], curve.fmr[k]) - 1e-12 <= m.eer \
                   <= max(curve.fmr[k], curve.fmr[k + 1]) + 1e-12
            assert min(curve.fnmr[k], curve.fnmr[k + 1]) - 1e-12 <= m.eer \
                   <= max(curve.fnmr[k], curve.fnmr[k + 1]) + 1e-12
        done("metric oracles (AUC/ROC/EER, 100 random draws)")

    def test_threshold_pipeline_exact_against_rescan(self):
        graph, store, image_map = make_world(n_twin_pairs=10, n_singles=6, images=2,
                                             seed=31, family=True)
        job = me.MatchJob(store=store, graph=graph, image_map=image_map,
                          kind=me.ComparisonKind(), pair_filter=me.NONMATED_ONLY,
                          block_size=16)
        full = me.run_match(job, retain_threshold=-1.0)   # retain everything
        t = an.twin_threshold(full, "comparison")
        twin_scores = [r.score for r in full.retained
                       if r.class_label == an.IDENTICAL_TWIN_LABEL]
        assert t.n_pairs == len(twin_scores)
        assert math.isclose(t.value, math.fsum(twin_scores) / len(twin_scores),
                            rel_tol=1e-12, abs_tol=1e-15)

        rows = an.above_threshold_table(full.retained, t.value, full.pair_count)
        kept = [r for r in full.retained if r.score >= t.value]
        assert rows[-1].count == len(kept)
        assert sum(r.count for r in rows[:-1]) == len(kept)   # lossless partition
        for row in rows[:-1]:
            oracle = [r.score for r in kept if r.class_label == row.pair_class]
            assert row.count == len(oracle)
            assert math.isclose(row.mean, np.mean(oracle), rel_tol=1e-12)
            assert row.minimum == min(oracle)
            assert row.maximum == max(oracle)
        done("threshold pipeline (twin threshold + table vs full rescan)")

    def test_inversion_laws_1000_random_lists(self):
        rng = np.random.Generator(np.random.Philox(key=404))
        for _ in range(1000):
            n = int(rng.integers(1, 50))
            raw = rng.uniform(0, 10, size=n)
            inverted, ref = scoring.invert_scores(raw)
            assert int(np.argmax(raw)) == int(np.argmin(inverted))
            if len(np.unique(raw)) == n:
                order_raw = np.argsort(raw)
                order_inv = np.argsort(-inverted)
                assert np.array_equal(order_raw, order_inv)   # strict rank reversal
            assert np.all(inverted >= 0.0)
            assert ref == raw.max()
        done("inversion laws (10^3 random lists)")

    def test_sweep_monotone_and_cli_rerun_byte_identical(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(key=808))
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            maxima = {f"s{k}": float(rng.uniform(0, 2)) for k in range(n)}
            thresholds = np.sort(rng.uniform(-0.2, 2.2, size=8))
            counts = [p.identities for p in an.lookalike_sweep(maxima, thresholds)]
            assert all(a >= b for a, b in zip(counts, counts[1:]))

        # end-to-end CLI determinism
        def run(out_dir: Path) -> dict[str, bytes]:
            cfg = out_dir.parent / f"{out_dir.name}.cfg"
            cfg.write_text(
                f"out_dir = {out_dir}\nseed = 7\n"
                "synth.n_twin_pairs = 5\nsynth.n_singles = 3\n"
                "synth.images_per_subject = 2\nsynth.dim = 8\n"
                "train.learning_rate = 0.001\ntrain.epochs = 2\n"
                "train.steps_per_epoch = 30\ntrain.d_out = 8\n"
                "train.split_fraction = 0.5\n")
            for argv in (["synth"], ["train"],
                         ["match", "--score", "similarity", "--retain-at", "-1"],
                         ["analyze", "baseline", "--match-name", "match_similarity_nonmated"],
                         ["analyze", "sweep", "--match-name", "match_similarity_nonmated"],
                         ["report"]):
                assert cli_main(["--config", str(cfg)] + argv) == 0
            return {str(p.relative_to(out_dir)): p.read_bytes()
                    for p in sorted(out_dir.rglob("*")) if p.is_file()}

        t1 = run(tmp_path / "r1")
        t2 = run(tmp_path / "r2")
        assert t1.keys() == t2.keys()
        for name, blob in t1.items():
            assert blob == t2[name], f"{name} differs between reruns"
        done("sweep monotonicity + byte-identical CLI rerun")

    def test_correlation_and_bland_altman_laws(self):
        # exact linear data
        up = [(x, 3.0 * x - 2.0) for x in (0.0, 1.0, 2.0, 5.0)]
        downward = [(x, -0.5 * x + 4.0) for x in (0.0, 2.0, 3.0)]
        assert math.isclose(an.correlate(up).pearson_r, 1.0)
        assert math.isclose(an.correlate(downward).pearson_r, -1.0)

        # hand-computed two-point limits of agreement
        rep = an.bland_altman([(0.0, 1.0), (1.0, 0.0)], an.MINMAX)
        assert rep.mean_diff == 0.0
        assert math.isclose(rep.loa_low, -1.96)
        assert math.isclose(rep.loa_high, 1.96)

        # r invariance under positive affine rescaling of either axis
        rng = np.random.Generator(np.random.Philox(key=111))
        pts = [(float(x), float(y)) for x, y in rng.normal(0, 1, size=(60, 2))]
        base = an.correlate(pts).pearson_r
        for a, b in ((3.0, -1.0), (0.25, 7.0)):
            assert math.isclose(an.correlate([(a * x + b, y) for x, y in pts]).pearson_r,
                                base, rel_tol=1e-10)
            assert math.isclose(an.correlate([(x, a * y + b) for x, y in pts]).pearson_r,
                                base, rel_tol=1e-10)
        done("correlation r = +/-1, LoA hand case, affine invariance")
