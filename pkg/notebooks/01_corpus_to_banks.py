# %% [markdown]
# # From a review corpus to review banks
#
# Builds a small planted corpus, runs the 5-core filter and the per-user time
# split, and looks at what ends up in the banks.

# %%
import numpy as np

from mpcn import data
from mpcn.synthetic import planted_corpus

rows, truth = planted_corpus(n_users=120, n_items=60, per_user=(6, 10), background_vocab=300, seed=1)
print(len(rows), "interactions")
print(rows[0])

# %% [markdown]
# Filtering and splitting. Each user's newest interaction is held out for test,
# the one before it for dev.

# %%
kept = data.k_core_filter(rows, 5)
split = data.time_split(kept)
print(len(kept), "after 5-core;", len(split.train), len(split.dev), len(split.test), "train/dev/test")

# %%
ds = data.prepare(rows, k=5, seed=1, min_count=3)
print(ds.stats())

# %% [markdown]
# Banks hold at most 20 reviews of 30 tokens each, newest first, built from
# training reviews only. ``source`` points back at the interaction a row came from.

# %%
ub = ds.user_banks
owner = 0
n_live = int(ub.review_mask[owner].sum())
print(ub.owner_ids[owner], "has", n_live, "bank reviews")
for r in range(min(3, n_live)):
    src = int(ub.source[owner, r])
    toks = [ds.vocab.itos[t] for t in ub.tokens[owner, r] if t]
    print(src, ds.split.interactions[src].timestamp, " ".join(toks[:12]))

# %%
print("leaks:", data.leaked_reviews(ds))
print("share of UNK tokens:", float(np.mean(ub.tokens[ub.word_mask] == 1)))
