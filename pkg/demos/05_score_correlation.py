#!/usr/bin/env python3
"""How matcher comparison scores relate to learned similarity scores.

The same non-mated pairs are scored twice (cosine comparison vs inverted
head distance), joined per pair, then summarized with a least-squares
trend line and a Bland-Altman agreement plot over normalized scores.
"""
from pathlib import Path

from lookalike_lab import analysis, head, match_engine, synth
from lookalike_lab.svgplot import SvgPlot

out_dir = Path("demo_output")
out_dir.mkdir(exist_ok=True)

config = synth.SynthConfig(n_twin_pairs=12, n_singles=12, images_per_subject=3,
                           dim=16, seed=43)
graph, store, _ = synth.generate(config)
image_map = synth.image_map_for(store)
params = head.init_params(store.dim, 16, seed=43)   # near-identity head

common = dict(store=store, graph=graph, image_map=image_map,
              pair_filter=match_engine.NONMATED_ONLY, block_size=64)
comparison = match_engine.run_match(
    match_engine.MatchJob(kind=match_engine.ComparisonKind(), **common),
    retain_threshold=-1.0)
similarity = match_engine.run_match(
    match_engine.MatchJob(kind=match_engine.SimilarityKind(params), **common),
    retain_threshold=-1.0)

sim_by_pair = {(r.image_a, r.image_b): r.score for r in similarity.retained}
points = [(r.score, sim_by_pair[(r.image_a, r.image_b)]) for r in comparison.retained]

trend = analysis.correlate(points)
print(f"{len(points)} pairs scored under both families")
print(f"Pearson r = {trend.pearson_r:.4f}")
print(f"trend line: similarity = {trend.slope:.4f} * comparison + {trend.intercept:.4f}")

agreement = analysis.bland_altman(points, normalization=analysis.MINMAX)
print(f"Bland-Altman (minmax-normalized): mean diff {agreement.mean_diff:.4f}, "
      f"limits of agreement [{agreement.loa_low:.4f}, {agreement.loa_high:.4f}]")

scatter = SvgPlot("Comparison vs similarity score", "comparison score", "similarity score")
scatter.add_scatter("pairs", [p[0] for p in points], [p[1] for p in points])
lo, hi = min(p[0] for p in points), max(p[0] for p in points)
scatter.add_line("least-squares fit", [lo, hi],
                 [trend.slope * lo + trend.intercept, trend.slope * hi + trend.intercept])
scatter.write(out_dir / "correlation.svg")

ba = SvgPlot("Score agreement", "pair mean (normalized)", "pair difference")
ba.add_scatter("pairs", agreement.means.tolist(), agreement.diffs.tolist())
ba.add_hline(agreement.mean_diff, "mean")
ba.add_hline(agreement.loa_low, "LoA low")
ba.add_hline(agreement.loa_high, "LoA high")
ba.write(out_dir / "bland_altman.svg")
print(f"wrote {out_dir / 'correlation.svg'} and {out_dir / 'bland_altman.svg'}")
