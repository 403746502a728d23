"""
Cross-modal retrieval on synthetic data
=======================================

Generate paired image/text features around per-category prototypes, train
both hashing networks against a proxy codebook, and retrieve texts with image
queries (and the reverse) by Hamming ranking.
"""

# %%
import numpy as np

from proxyhash import (
    Hyperparams,
    RetrievalSet,
    SgdConfig,
    SplitSpec,
    encode,
    fit,
    mean_average_precision,
    pr_curve,
    split,
    synth_generate,
)

src = synth_generate(8, 1200, 64, 64, sigma=0.5, multi_label_prob=0.1, seed=7, sigma_is_relative=True)
data = src.data
sp = split(data.n, SplitSpec(query=200, train=1000, seed=1))
train, query, retrieval = data.subset(sp.train), data.subset(sp.query), data.subset(sp.retrieval)

# %%
history = []


def monitor(epoch, img_net, txt_net):
    if epoch % 10 == 0:
        rset = RetrievalSet(encode(txt_net, retrieval.txt), retrieval.labels)
        history.append((epoch, mean_average_precision(encode(img_net, query.img), query.labels, rset)))


model = fit(train, Hyperparams(bits=32), SgdConfig(epochs=40), monitor=monitor)
for epoch, value in history:
    print(f"epoch {epoch:3d}  MAP(i2t) {value:.4f}")

# %%
q_img, q_txt = encode(model.img_net, query.img), encode(model.txt_net, query.txt)
r_img, r_txt = encode(model.img_net, retrieval.img), encode(model.txt_net, retrieval.txt)
print("i2t", mean_average_precision(q_img, query.labels, RetrievalSet(r_txt, retrieval.labels)))
print("t2i", mean_average_precision(q_txt, query.labels, RetrievalSet(r_img, retrieval.labels)))

# %%
# Hash lookup: everything within radius r of the query.
curve = pr_curve(q_img, query.labels, RetrievalSet(r_txt, retrieval.labels))
for p in curve.points[:6]:
    print(f"r={p.radius:2d}  precision {p.precision:.3f}  recall {p.recall:.3f}  retrieved {p.retrieved:.1f}")
