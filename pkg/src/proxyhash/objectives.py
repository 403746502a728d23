"""Loss functions over continuous codes and their analytic gradients.

Codes are float arrays of shape ``(n, k)`` (or ``(k,)`` for one instance),
labels are multi-hot ``(n, c)`` rows, and the proxy codebook is fixed. Every
loss returns the *sum* over instances together with gradients shaped like
the code inputs. Quantization targets (``sgn`` of the code, or the consensus
code) are treated as constants when differentiating.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .codespace import ProxyCodebook, sgn, surrogate_proxies
from .errors import ConfigError, DimensionError, InvalidInputError, InvalidLabelError


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.05
    beta: float = 0.1
    eta: float = 0.3
    mu: float = 0.3
    lam: float = 0.001
    gamma: float = 0.01
    bits: int = 32

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "gamma"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.eta > 0:
            raise ConfigError("eta must be > 0")
        if not 0 <= self.mu <= 1:
            raise ConfigError("mu must lie in [0, 1]")
        if self.bits < 1:
            raise ConfigError("bits must be positive")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LabelSets:
    positives: tuple[int, ...]
    negatives: tuple[int, ...]

    @classmethod
    def from_row(cls, row) -> "LabelSets":
        row = np.asarray(row).astype(bool)
        pos = tuple(int(i) for i in np.flatnonzero(row))
        if not pos:
            raise InvalidLabelError("an instance needs at least one positive category")
        return cls(pos, tuple(int(i) for i in np.flatnonzero(~row)))

    def to_row(self, c: int) -> np.ndarray:
        row = np.zeros(c, dtype=bool)
        row[list(self.positives)] = True
        return row


def _codes(b, k=None) -> tuple[np.ndarray, bool]:
    b = np.asarray(b, dtype=np.float64)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    if k is not None and b.shape[1] != k:
        raise DimensionError(f"code length {b.shape[1]} != codebook length {k}")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("codes contain non-finite values")
    return b, single


def _labels(labels, n: int, c: int) -> np.ndarray:
    if isinstance(labels, LabelSets):
        labels = labels.to_row(c)
    labels = np.atleast_2d(np.asarray(labels)).astype(bool)
    if labels.shape != (n, c):
        raise DimensionError(f"labels shape {labels.shape} != {(n, c)}")
    empty = np.flatnonzero(~labels.any(axis=1))
    if empty.size:
        raise InvalidLabelError(f"label row {int(empty[0])} has no positive category")
    return labels


def _setup(b, labels, codebook: ProxyCodebook):
    b, single = _codes(b, codebook.k)
    labels = _labels(labels, b.shape[0], codebook.c)
    return b, labels, codebook.codes.astype(np.float64), surrogate_proxies(codebook, labels), single


def _out(grad: np.ndarray, single: bool) -> np.ndarray:
    return grad[0] if single else grad


def bit_balance(proxy_outputs) -> np.ndarray:
    """Per-bit column sums of the ``(c, k)`` continuous proxy outputs."""
    g = np.atleast_2d(np.asarray(proxy_outputs, dtype=np.float64))
    return g.sum(axis=0)


def phnet_loss(proxy_outputs, alpha: float, beta: float):
    """Separation hinge + bit balance + quantization for the proxy network.

    The hinge runs over ordered pairs ``i != j`` so each unordered pair counts
    twice. Returns ``(loss, grad)`` with ``grad`` shaped like the input.
    """
    g = np.atleast_2d(np.asarray(proxy_outputs, dtype=np.float64))
    gram = g @ g.T
    active = gram > 0
    np.fill_diagonal(active, False)
    hinge = gram[active].sum()
    balance = bit_balance(g)
    target = sgn(g)
    resid = g - target
    loss = hinge + alpha * np.dot(balance, balance) + beta * np.sum(resid * resid)
    grad = 2.0 * (active.astype(np.float64) @ g) + 2.0 * alpha * balance + 2.0 * beta * resid
    return float(loss), grad


def margin_u(b, gbar, mu: float, k: int | None = None):
    """Margin-shifted similarity ``b . gbar - mu * k`` (row-wise for batches)."""
    b = np.asarray(b, dtype=np.float64)
    gbar = np.asarray(gbar, dtype=np.float64)
    if b.shape[-1] != gbar.shape[-1]:
        raise DimensionError("code and surrogate proxy lengths differ")
    k = b.shape[-1] if k is None else k
    return np.sum(b * gbar, axis=-1) - mu * k


def _dynamic_lse(first, sims, negatives, eta):
    """Stable ``log(exp(eta*first) + sum_{q in neg} exp(eta*sims_q))`` per row.

    Returns the log-sum-exp and the softmax weights ``(p0, p_neg)`` where
    ``p_neg`` is zero on positive categories.
    """
    logits = np.where(negatives, eta * sims, -np.inf)
    lead = eta * first
    top = np.maximum(lead, logits.max(axis=1))
    e0 = np.exp(lead - top)
    eq = np.exp(logits - top[:, None])
    total = e0 + eq.sum(axis=1)
    return top + np.log(total), e0 / total, eq / total[:, None]


def margin_dynamic_softmax(b, labels, codebook: ProxyCodebook, eta: float, mu: float):
    """Softmax loss whose denominator covers only each row's negative proxies.

    ``-log(exp(eta*u) / (exp(eta*u) + sum_{q in neg} exp(eta * b.g_q)))`` with
    ``u = b . gbar - mu*k``, summed over rows. Returns ``(loss, grad)``.
    """
    b, labels, g, gbar, single = _setup(b, labels, codebook)
    u = margin_u(b, gbar, mu, codebook.k)
    lse, p0, pq = _dynamic_lse(u, b @ g.T, ~labels, eta)
    loss = np.sum(lse - eta * u)
    grad = eta * ((p0 - 1.0)[:, None] * gbar + pq @ g)
    return float(loss), _out(grad, single)


def smoothed_distribution(b, labels, codebook: ProxyCodebook, eta: float, mu: float) -> np.ndarray:
    """Closed-form maximiser of the entropy-regularised dual for one instance.

    Index 0 is the surrogate category; index ``q + 1`` is category ``q``.
    """
    b, labels, g, gbar, _ = _setup(b, labels, codebook)
    u = margin_u(b[0], gbar[0], mu, codebook.k)
    neg = np.flatnonzero(~labels[0])
    w = np.exp(eta * (b[0] @ g[neg].T - u))
    z = 1.0 + w.sum()
    p = np.zeros(codebook.c + 1)
    p[0] = 1.0 / z
    p[neg + 1] = w / z
    return p


def dual_form_oracle(b, labels, codebook: ProxyCodebook, eta: float, mu: float) -> float:
    """Evaluate the dual objective at its closed-form distribution.

    Independent of :func:`margin_dynamic_softmax`; used to cross-check it.
    """
    p = smoothed_distribution(b, labels, codebook, eta, mu)
    b, labels, g, gbar, _ = _setup(b, labels, codebook)
    u = margin_u(b[0], gbar[0], mu, codebook.k)
    neg = np.flatnonzero(~labels[0])
    linear = np.sum(eta * p[neg + 1] * (b[0] @ g[neg].T - u)) + eta * p[0] * (u - u)
    nz = p[p > 0]
    entropy = -np.sum(nz * np.log(nz))
    return float(linear + entropy)


def inter_modal_loss(b_img, b_txt, labels, codebook: ProxyCodebook, eta: float, mu: float):
    """Cross-modal softmax terms: one modality's margin logit in the numerator,
    the other modality's logits in the denominator, both directions.

    Returns ``(loss, grad_img, grad_txt)``.
    """
    bv, labels, g, gbar, single = _setup(b_img, labels, codebook)
    bt, _ = _codes(b_txt, codebook.k)
    if bt.shape != bv.shape:
        raise DimensionError("image and text code batches differ in shape")
    neg = ~labels
    uv = margin_u(bv, gbar, mu, codebook.k)
    ut = margin_u(bt, gbar, mu, codebook.k)
    # numerator u_v, denominator built from the text code
    lse1, p1_0, p1_q = _dynamic_lse(ut, bt @ g.T, neg, eta)
    # numerator u_t, denominator built from the image code
    lse2, p2_0, p2_q = _dynamic_lse(uv, bv @ g.T, neg, eta)
    loss = np.sum(lse1 - eta * uv) + np.sum(lse2 - eta * ut)
    grad_v = eta * (p2_0[:, None] * gbar + p2_q @ g - gbar)
    grad_t = eta * (p1_0[:, None] * gbar + p1_q @ g - gbar)
    return float(loss), _out(grad_v, single), _out(grad_t, single)


def consensus_code(b_img, b_txt) -> np.ndarray:
    b_img = np.asarray(b_img, dtype=np.float64)
    b_txt = np.asarray(b_txt, dtype=np.float64)
    if b_img.shape != b_txt.shape:
        raise DimensionError("consensus inputs differ in shape")
    return sgn(b_img + b_txt)


def quantization_loss(b, target):
    """``||b - target||^2`` summed over rows; ``target`` is held constant."""
    resid = np.asarray(b, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.sum(resid * resid)), 2.0 * resid


def total_objective(b_img, b_txt, labels, codebook: ProxyCodebook, hp: Hyperparams, consensus=None):
    """Intra-modal losses of both modalities, weighted inter-modal coupling and
    quantization toward the consensus codes.

    ``consensus`` defaults to ``sgn(b_img + b_txt)``; the trainer passes the
    codes from the last refresh instead. Returns ``(loss, grad_img, grad_txt)``.
    """
    if consensus is None:
        consensus = consensus_code(b_img, b_txt)
    lv, gv = margin_dynamic_softmax(b_img, labels, codebook, hp.eta, hp.mu)
    lt, gt = margin_dynamic_softmax(b_txt, labels, codebook, hp.eta, hp.mu)
    loss, grad_v, grad_t = lv + lt, gv, gt
    if hp.lam:
        li, giv, git = inter_modal_loss(b_img, b_txt, labels, codebook, hp.eta, hp.mu)
        loss += hp.lam * li
        grad_v = grad_v + hp.lam * giv
        grad_t = grad_t + hp.lam * git
    if hp.gamma:
        qv, dqv = quantization_loss(b_img, consensus)
        qt, dqt = quantization_loss(b_txt, consensus)
        loss += hp.gamma * (qv + qt)
        grad_v = grad_v + hp.gamma * dqv
        grad_t = grad_t + hp.gamma * dqt
    return float(loss), grad_v, grad_t


def pairwise_loss(b, labels, codebook: ProxyCodebook):
    """Logistic code-to-proxy likelihood used by the pairwise ablation.

    With ``theta_j = b . g_j / 2``, returns
    ``sum_j softplus(theta_j) - s_j * theta_j`` and its gradient.
    """
    b, single = _codes(b, codebook.k)
    s = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if s.shape != (b.shape[0], codebook.c):
        raise DimensionError(f"labels shape {s.shape} != {(b.shape[0], codebook.c)}")
    g = codebook.codes.astype(np.float64)
    theta = 0.5 * b @ g.T
    loss = np.sum(np.logaddexp(0.0, theta) - s * theta)
    grad = 0.5 * (expit(theta) - s) @ g
    return float(loss), _out(grad, single)


def pairwise_objective(b_img, b_txt, labels, codebook: ProxyCodebook, hp: Hyperparams, consensus=None):
    """Ablation objective: pairwise loss per modality plus the quantization term."""
    if consensus is None:
        consensus = consensus_code(b_img, b_txt)
    lv, gv = pairwise_loss(b_img, labels, codebook)
    lt, gt = pairwise_loss(b_txt, labels, codebook)
    qv, dqv = quantization_loss(b_img, consensus)
    qt, dqt = quantization_loss(b_txt, consensus)
    loss = lv + lt + hp.gamma * (qv + qt)
    return float(loss), gv + hp.gamma * dqv, gt + hp.gamma * dqt


def margin_satisfied(b, labels, codebook: ProxyCodebook, mu: float):
    """True where ``b . gbar - b . g_q >= mu * k`` for every negative ``q``.

    Scalar for a single code, boolean array for a batch.
    """
    b, labels, g, gbar, single = _setup(b, labels, codebook)
    slack = np.sum(b * gbar, axis=1)[:, None] - b @ g.T
    # integer-valued for binary codes; tolerance absorbs mean-of-codes rounding
    ok = np.where(labels, True, slack >= mu * codebook.k - 1e-9).all(axis=1)
    return bool(ok[0]) if single else ok
