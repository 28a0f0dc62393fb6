# %% [markdown]
# # Where the pointers land
#
# Trains a three-pointer model briefly, classifies the pointer pairs on test
# examples and dumps one example's affinity matrices as CSV.

# %%
import tempfile
from pathlib import Path

import numpy as np

from mpcn import analysis, data
from mpcn.config import MpcnConfig, TrainConfig
from mpcn.model import MPCN
from mpcn.synthetic import planted_corpus
from mpcn.trainer import train

rows, _ = planted_corpus(n_users=200, n_items=80, seed=4)
ds = data.prepare(rows, k=5, seed=4)
model = MPCN.for_dataset(MpcnConfig(d=24, n_pointers=3), ds, seed=0)
train(model, ds.examples("train"), ds.examples("dev"), TrainConfig(max_epochs=6, patience=2))

# %%
rep = analysis.pointer_behavior(model, ds, sample_size=200, seed=0)
print(rep.to_dict())

# %% [markdown]
# A single example, one line per pointer: which user review met which item review.

# %%
ex = ds.examples("test")
_, trace = model.forward(ex.user[:1], ex.item[:1], keep_matrices=True)
print("user reviews", trace.pa[0], "item reviews", trace.pb[0])
print(analysis.classify_pointers(list(zip(trace.pa[0], trace.pb[0]))))

# %%
out = Path(tempfile.mkdtemp())
uid, iid = ds.user_banks.owner_ids[ex.user[0]], ds.item_banks.owner_ids[ex.item[0]]
files = analysis.export_affinity(model, ds, uid, iid, out)
s = analysis.read_affinity_csv(files[0])
live = s > -1e8
print([f.name for f in files])
print("head 0 affinity over live cells: min %.3f max %.3f" % (s[live].min(), s[live].max()))
print("argmax cell", np.unravel_index(np.argmax(s), s.shape))
