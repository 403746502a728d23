"""Two-phase training: proxy codebook first, then the two modality networks.

Phase one fits the proxy network on the ``c`` one-hot category vectors and
freezes ``sgn`` of its outputs as the codebook. Phase two alternates an image
pass and a text pass per epoch (each updating one network while the other is
held fixed) and then refreshes the per-instance consensus codes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .codespace import PackedCodes, ProxyCodebook, load_codes, save_codes, sgn
from .data_io import PairedDataset
from .errors import ConfigError, TrainingError
from .network import Mlp, backward, build_mlp, forward, load_checkpoint, save_checkpoint, sgd_step
from .objectives import (
    Hyperparams,
    consensus_code,
    margin_dynamic_softmax,
    pairwise_objective,
    phnet_loss,
    total_objective,
)

log = logging.getLogger(__name__)

VARIANTS = ("full", "no-quant", "pairwise")
PHNET_HIDDEN = 512
IMG_HIDDEN = 512
TXT_HIDDEN = 2048


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 150
    seed: int = 0
    phnet_learning_rate: float = 1e-3
    phnet_epochs: int = 3000
    tol: float = 1e-4
    window: int = 10

    def __post_init__(self):
        for name in ("learning_rate", "phnet_learning_rate"):
            lr = getattr(self, name)
            if not 0 <= lr <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {lr}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0 or self.phnet_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.window < 1:
            raise ConfigError("window must be positive")


@dataclass
class TrainState:
    epoch: int = 0
    phnet_losses: list[float] = field(default_factory=list)
    total_losses: list[float] = field(default_factory=list)
    intra_losses: list[float] = field(default_factory=list)
    flip_fractions: list[float] = field(default_factory=list)
    consensus: np.ndarray | None = None
    stopped_early: bool = False


@dataclass
class TrainedModel:
    codebook: ProxyCodebook
    phnet: Mlp
    img_net: Mlp
    txt_net: Mlp
    state: TrainState

    def loss_rows(self):
        """``(epoch, phase, loss)`` rows for the loss CSV, epochs 1-based."""
        rows = [(i + 1, "phnet", v) for i, v in enumerate(self.state.phnet_losses)]
        rows += [(i + 1, "total", v) for i, v in enumerate(self.state.total_losses)]
        rows += [(i + 1, "intra", v) for i, v in enumerate(self.state.intra_losses)]
        return rows

    def network(self, modality: str) -> Mlp:
        if modality == "img":
            return self.img_net
        if modality == "txt":
            return self.txt_net
        raise ConfigError(f"unknown modality {modality!r}; expected 'img' or 'txt'")


def _rngs(seed: int):
    phnet, img, txt, batches = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(s) for s in (phnet, img, txt, batches))


def _plateaued(history: list[float], window: int, tol: float) -> bool:
    """Relative change of the trailing ``window``-epoch mean versus one epoch earlier."""
    if len(history) < window + 1:
        return False
    now = np.mean(history[-window:])
    before = np.mean(history[-window - 1 : -1])
    return abs(now - before) <= tol * max(abs(before), 1e-12)


def _check_finite(value: float, phase: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {phase} loss", epoch)


def _finite_outputs(out: np.ndarray, phase: str, epoch: int) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise TrainingError(f"non-finite {phase} network outputs", epoch)
    return out


def phnet_gradient(outputs: np.ndarray, alpha: float, beta: float):
    """Proxy-network loss and the descent direction used to train it.

    The value is the relaxed loss. The hinge gradient is applied to every
    ordered pair whose continuous *or* binary inner product is positive, so
    pairs whose sign codes still overlap keep being pushed apart after the
    continuous products have gone negative. Once no pair violates either
    condition this is the plain gradient of the relaxed loss.
    """
    loss, grad = phnet_loss(outputs, alpha, beta)
    signs = sgn(outputs).astype(np.float64)
    relaxed = outputs @ outputs.T > 0
    binary = signs @ signs.T > 0
    extra = binary & ~relaxed
    np.fill_diagonal(extra, False)
    grad = grad + 2.0 * (extra.astype(np.float64) @ outputs)
    return loss, grad, int(np.triu(binary, 1).sum())


def train_phnet(c: int, hp: Hyperparams, sgd: SgdConfig, rng: np.random.Generator | None = None):
    """Fit the proxy network full-batch and return ``(codebook, net, losses)``."""
    if c < 1:
        raise ConfigError("need at least one category")
    rng = _rngs(sgd.seed)[0] if rng is None else rng
    net = build_mlp([c, PHNET_HIDDEN, hp.bits], rng)
    y = np.eye(c)
    losses = []
    for epoch in range(1, sgd.phnet_epochs + 1):
        out = _finite_outputs(forward(net, y), "phnet", epoch)
        loss, grad, overlaps = phnet_gradient(out, hp.alpha, hp.beta)
        _check_finite(loss, "phnet", epoch)
        losses.append(loss)
        grads, _ = backward(net, y, grad)
        sgd_step(net, grads, sgd.phnet_learning_rate)
        if overlaps == 0 and _plateaued(losses, sgd.window, sgd.tol):
            break
    codebook = ProxyCodebook(sgn(_finite_outputs(forward(net, y), "phnet", len(losses))))
    log.info("phnet: %d epochs, final loss %.4f", len(losses), losses[-1] if losses else float("nan"))
    return codebook, net, losses


def _objective_fn(variant: str):
    if variant in ("full", "no-quant"):
        return total_objective
    if variant == "pairwise":
        return pairwise_objective
    raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")


def variant_hyperparams(hp: Hyperparams, variant: str) -> Hyperparams:
    _objective_fn(variant)
    return replace(hp, gamma=0.0) if variant == "no-quant" else hp


def train_modalities(
    data: PairedDataset,
    codebook: ProxyCodebook,
    hp: Hyperparams,
    sgd: SgdConfig,
    variant: str = "full",
    monitor: Callable[[int, Mlp, Mlp], None] | None = None,
    rngs=None,
):
    """Alternating mini-batch SGD on the image and text networks.

    ``monitor(epoch, img_net, txt_net)`` runs after every epoch (and once with
    ``epoch=0`` before training). Returns ``(img_net, txt_net, state)``.
    """
    objective = _objective_fn(variant)
    hp = variant_hyperparams(hp, variant)
    if codebook.k != hp.bits:
        raise ConfigError(f"codebook has k={codebook.k}, hyperparameters say {hp.bits}")
    if codebook.c != data.c:
        raise ConfigError(f"codebook has {codebook.c} categories, data has {data.c}")
    _, rng_img, rng_txt, rng_batch = _rngs(sgd.seed) if rngs is None else rngs
    xv = data.img.astype(np.float64)
    xt = data.txt.astype(np.float64)
    labels = data.labels.astype(bool)
    n = data.n
    img_net = build_mlp([data.d_v, IMG_HIDDEN, hp.bits], rng_img)
    txt_net = build_mlp([data.d_t, TXT_HIDDEN, hp.bits], rng_txt)
    state = TrainState(consensus=consensus_code(forward(img_net, xv), forward(txt_net, xt)))
    batch = min(sgd.batch_size, n)
    if monitor:
        monitor(0, img_net, txt_net)

    def one_pass(net, x, other_codes, which, order):
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            own = _finite_outputs(forward(net, x[idx]), which, state.epoch + 1)
            if which == "img":
                loss, grad, _ = objective(own, other_codes[idx], labels[idx], codebook, hp, state.consensus[idx])
            else:
                loss, _, grad = objective(other_codes[idx], own, labels[idx], codebook, hp, state.consensus[idx])
            _check_finite(loss, f"{which} batch", state.epoch + 1)
            grads, _ = backward(net, x[idx], grad)
            sgd_step(net, grads, sgd.learning_rate)

    for epoch in range(1, sgd.epochs + 1):
        one_pass(img_net, xv, _finite_outputs(forward(txt_net, xt), "txt", epoch), "img", rng_batch.permutation(n))
        one_pass(txt_net, xt, _finite_outputs(forward(img_net, xv), "img", epoch), "txt", rng_batch.permutation(n))

        bv = _finite_outputs(forward(img_net, xv), "img", epoch)
        bt = _finite_outputs(forward(txt_net, xt), "txt", epoch)
        fresh = consensus_code(bv, bt)
        state.flip_fractions.append(float(np.mean(fresh != state.consensus)))
        state.consensus = fresh
        total, _, _ = objective(bv, bt, labels, codebook, hp, fresh)
        if variant == "pairwise":
            intra = total
        else:
            intra = margin_dynamic_softmax(bv, labels, codebook, hp.eta, hp.mu)[0]
            intra += margin_dynamic_softmax(bt, labels, codebook, hp.eta, hp.mu)[0]
        _check_finite(total, "objective", epoch)
        state.epoch = epoch
        state.total_losses.append(total / n)
        state.intra_losses.append(intra / n)
        if monitor:
            monitor(epoch, img_net, txt_net)
        if _plateaued(state.total_losses, sgd.window, sgd.tol):
            state.stopped_early = True
            break
    log.info("modalities: %d epochs, final objective %.4f", state.epoch, state.total_losses[-1] if state.total_losses else float("nan"))
    return img_net, txt_net, state


def fit(data: PairedDataset, hp: Hyperparams, sgd: SgdConfig, variant: str = "full", monitor=None) -> TrainedModel:
    """Both training phases end to end."""
    rngs = _rngs(sgd.seed)
    codebook, phnet, ph_losses = train_phnet(data.c, hp, sgd, rngs[0])
    img_net, txt_net, state = train_modalities(data, codebook, hp, sgd, variant, monitor, rngs)
    state.phnet_losses = ph_losses
    return TrainedModel(codebook, phnet, img_net, txt_net, state)


def encode(net: Mlp, features) -> PackedCodes:
    """Binary codes ``sgn(net(x))`` for a feature matrix (or a single vector)."""
    return PackedCodes.from_signs(sgn(forward(net, features)))


MODEL_FILES = ("codebook.pxh", "phnet.pxw", "img.pxw", "txt.pxw")


def save_model(path, model: TrainedModel) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_codes(path / "codebook.pxh", model.codebook.packed())
    save_checkpoint(path / "phnet.pxw", model.phnet)
    save_checkpoint(path / "img.pxw", model.img_net)
    save_checkpoint(path / "txt.pxw", model.txt_net)


def load_model(path) -> TrainedModel:
    path = Path(path)
    codes = load_codes(path / "codebook.pxh")
    return TrainedModel(
        ProxyCodebook(codes.signs()),
        load_checkpoint(path / "phnet.pxw"),
        load_checkpoint(path / "img.pxw"),
        load_checkpoint(path / "txt.pxw"),
        TrainState(),
    )
