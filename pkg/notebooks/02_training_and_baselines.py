# %% [markdown]
# # Training the pointer model next to the id-based baselines
#
# Same snapshot, same protocol (Adam, early stopping on dev MSE). The sizes are
# kept small so this runs in about a minute.

# %%
import numpy as np

from mpcn import data
from mpcn.baselines import BASELINES
from mpcn.config import BaselineConfig, MpcnConfig, TrainConfig
from mpcn.model import MPCN
from mpcn.synthetic import planted_corpus
from mpcn.trainer import evaluate_mse, train

rows, _ = planted_corpus(n_users=300, n_items=120, seed=3)
ds = data.prepare(rows, k=5, seed=3)
train_ex, dev_ex, test_ex = (ds.examples(p) for p in ("train", "dev", "test"))
mean = ds.train_mean()
print(ds.stats())
print("global mean dev MSE", float(np.mean((dev_ex.rating - mean) ** 2)))

# %%
tc = TrainConfig(max_epochs=12, patience=3, seed=0)
results = {}
model = MPCN.for_dataset(MpcnConfig(d=24, n_pointers=2), ds, seed=0)
res = train(model, train_ex, dev_ex, tc)
results["mpcn"] = (res.best_dev_mse, evaluate_mse(model, test_ex), res.best_epoch)

for kind, cls in sorted(BASELINES.items()):
    m = cls(BaselineConfig(d=24), len(ds.user_banks.owner_ids), len(ds.item_banks.owner_ids), mean)
    r = train(m, train_ex, dev_ex, tc)
    results[kind] = (r.best_dev_mse, evaluate_mse(m, test_ex), r.best_epoch)

# %%
print(f"{'model':<6} {'dev':>7} {'test':>7} epoch")
for kind, (dev, test, ep) in results.items():
    print(f"{kind:<6} {dev:7.4f} {test:7.4f} {ep:5d}")

# %% [markdown]
# Per-epoch records are kept on the result; with a ``history_path`` they are
# also streamed as JSON lines.

# %%
for rec in res.history:
    print(rec)
