# %% [markdown]
# # Checking the hand-written gradients
#
# The model runs on a small reverse-mode tape. Here the tape is checked against
# central differences, and the straight-through sampler against its target
# distribution.

# %%
import sys

import numpy as np

from mpcn import autodiff as ad
from mpcn.config import MpcnConfig
from mpcn.model import MPCN

errs = ad.check_ops(seed=0, points=5)
print("worst op error %.2e" % max(errs.values()))

# %%
rng = np.random.default_rng(0)
R, W, V = 3, 4, 10
ut = rng.integers(2, V, (2, R, W))
it = rng.integers(2, V, (2, R, W))
live = np.ones((2, R), bool)
m = MPCN(MpcnConfig(d=4, n_pointers=2, layers=1, fm_factors=2, dropout=0.0, precision=64),
         V, ut, live, it, live, rating_mean=3.0)
for p in m.params.values():
    p.data[...] = rng.normal(0, 0.5, p.shape)
noise = m.sample_noise(rng, 2)
rows = np.arange(2)


def loss():
    pred, _ = m.forward(rows, rows, training=True, pointer_mode="soft", noise=noise)
    return ad.mse(pred, np.array([4.0, 2.0]))


errs = ad.gradcheck(loss, m.params, report=sys.stdout)

# %% [markdown]
# Hard samples are one-hot; their frequencies follow the softmax of the logits.

# %%
logits = np.array([1.0, 0.0, -1.0, 2.0])
y = ad.st_gumbel_softmax(ad.as_tensor(np.tile(logits, (50_000, 1))), 1.0, rng=rng).data
p = np.exp(logits) / np.exp(logits).sum()
print(np.round(y.mean(0), 3), np.round(p, 3))
