"""
Margin-dynamic softmax and its dual form
========================================

An instance with label set P should sit closer to the mean of its positive
proxies than to any negative proxy, by a margin of mu*k. The loss is a
softmax over the negatives with a margin-shifted positive logit. The same
value comes out of an entropy-regularised maximisation over a closed-form
distribution, which we use here as a cross-check.
"""

# %%
import numpy as np

from proxyhash import ProxyCodebook, dual_form_oracle, margin_dynamic_softmax, margin_satisfied, smoothed_distribution

book = ProxyCodebook(np.array([[1, 1, 1, 1], [-1, -1, -1, -1], [1, -1, 1, -1]]))
labels = [1, 0, 0]

for b in ([1.0, 1.0, 1.0, 1.0], [0.2, 0.1, 0.3, -0.1], [-1.0, -1.0, -1.0, -1.0]):
    loss, grad = margin_dynamic_softmax(np.array(b), labels, book, eta=0.3, mu=0.3)
    dual = dual_form_oracle(np.array(b), labels, book, eta=0.3, mu=0.3)
    print(f"b={b}: loss={loss:.6f} dual={dual:.6f} margin ok={margin_satisfied(np.sign(b), labels, book, 0.3)}")

# %%
# The closed-form distribution puts mass on the margin "slot" (index 0) and
# on each negative category; positives always get zero.
print(smoothed_distribution(np.array([0.2, 0.1, 0.3, -0.1]), labels, book, 0.3, 0.3))
