"""
How often are utterances reused?
================================

Plan training sets of growing size from a metadata-only catalog with the
published corpus sizes and count how much of each set is built on
utterances that occur more than once.  No audio is read.
"""

# %%
import numpy as np

from sceneforge.catalog import assign_pools, corpus_stats
from sceneforge.sampler import (
    SamplerConfig,
    corpus_weights,
    expected_duration_shares,
    plan_dataset,
    pool_avg_lengths,
    repetition_stats,
    schedule_epochs,
    simulate_repetition,
)
from sceneforge.synthetic import PUBLISHED_DATASET_SIZES, PUBLISHED_REPETITION, published_catalog

catalog = published_catalog(seed=0)
for cid, st in corpus_stats(catalog).items():
    print(cid, st.rounded())

# %%
# Inverse-length weighting: short-utterance corpora are drawn more often so
# that each corpus contributes the same expected duration.
avg = {c: s.avg_len for c, s in corpus_stats(catalog).items()}
weights = corpus_weights(avg)
shares = expected_duration_shares(weights, avg)
for c in weights:
    print(f"{c:12s} p={weights[c]:.4f}  duration share={shares[c]:.3f}")

# %%
# A real 3 h plan, then its repetition shares.
pools = assign_pools(catalog, seed=0)["train"]
manifest = plan_dataset(3, pools, SamplerConfig(), dataset_seed=0)
report = repetition_stats(manifest, catalog)
print(len(manifest), "scenes (published:", PUBLISHED_DATASET_SIZES[3], ")")
print({c: round(v, 1) for c, v in report.per_corpus.items()}, "total %.1f%%" % report.total)

# %%
# Larger sizes via the bulk simulation (speech draws only), averaged over seeds.
hours = [3, 10, 30, 100, 300]
durs = {c: [i.duration_s for i in v] for c, v in pools.speech.items()}
w = corpus_weights(pool_avg_lengths(pools))
runs = np.array([[r.total for r in simulate_repetition(durs, w, hours, seed=s)] for s in range(5)])
later = np.array([[r.total for r in simulate_repetition(durs, w, hours, seed=s, mode="later")] for s in range(5)])
print(" hours  all-occurrences  later-only  published  epochs")
for k, h in enumerate(hours):
    print(f"{h:6d}  {runs[:, k].mean():15.1f}  {later[:, k].mean():10.1f}  {PUBLISHED_REPETITION[h]['total']:9d}"
          f"  {schedule_epochs(h):6d}")
