"""Linear probes quantifying the static/dynamic disentanglement."""

from __future__ import annotations

import csv
import os

import numpy as np

from . import autodiff as ad
from . import data as dat
from .autodiff import Tensor
from .losses import cross_entropy
from .optim import AdamState, adam_step

PROBE_COLUMNS = ["domain_from_zd", "domain_from_zt",
                 "class_from_zt", "class_from_zd"]


class LinearProbe:
    """Multinomial logistic regression fit with full-batch Adam."""

    def __init__(self, d_in: int, n_classes: int, seed: int = 0):
        rng = np.random.default_rng([seed, 17])
        self.W = Tensor(0.01 * rng.standard_normal((d_in, n_classes)).astype(np.float32))
        self.b = Tensor(np.zeros(n_classes, dtype=np.float32))
        self.mean = np.zeros(d_in, dtype=np.float32)
        self.std = np.ones(d_in, dtype=np.float32)

    def fit(self, X: np.ndarray, y: np.ndarray, steps: int = 200,
            lr: float = 0.05):
        self.mean = X.mean(axis=0).astype(np.float32)
        self.std = (X.std(axis=0) + 1e-6).astype(np.float32)
        Xn = ((X - self.mean) / self.std).astype(np.float32)
        params = [self.W, self.b]
        adam = AdamState(params, lr0=lr, weight_decay=0.0)
        for _ in range(steps):
            with ad.tape_scope() as tape:
                for p in params:
                    tape.watch(p)
                logits = ad.add(ad.matmul(Tensor(Xn), self.W), self.b)
                loss = cross_entropy(logits, y)
                ad.backward(tape, loss)
                grads = [tape.grad(p) for p in params]
            adam_step(adam, params, grads, epoch=0, total_epochs=1)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xn = (X - self.mean) / self.std
        return (Xn @ self.W.data + self.b.data).argmax(axis=-1)

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        return float((self.predict(X) == y).mean())


def probe_report(trainer, train_ds: dat.Dataset, test_ds: dat.Dataset,
                 seed: int = 0) -> dict:
    """Fit 4 probes on frozen train-split latents, score on the test split.

    Probes: domain from the static latent, domain from the time-averaged
    dynamic latent, class from the averaged dynamic latent, class from the
    static latent.
    """
    zd_tr, zt_tr = trainer.latents(train_ds.frames)
    zd_te, zt_te = trainer.latents(test_ds.frames)
    dom_tr = train_ds.domain.astype(np.int64)
    dom_te = test_ds.domain.astype(np.int64)
    cls_tr = train_ds.label.astype(np.int64)
    cls_te = test_ds.label.astype(np.int64)
    n_cls = train_ds.n_classes
    acc = {
        "domain_from_zd": LinearProbe(zd_tr.shape[1], 2, seed)
        .fit(zd_tr, dom_tr).accuracy(zd_te, dom_te),
        "domain_from_zt": LinearProbe(zt_tr.shape[1], 2, seed)
        .fit(zt_tr, dom_tr).accuracy(zt_te, dom_te),
        "class_from_zt": LinearProbe(zt_tr.shape[1], n_cls, seed)
        .fit(zt_tr, cls_tr).accuracy(zt_te, cls_te),
        "class_from_zd": LinearProbe(zd_tr.shape[1], n_cls, seed)
        .fit(zd_tr, cls_tr).accuracy(zd_te, cls_te),
    }
    return acc


def write_probe_csv(path, acc: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(PROBE_COLUMNS)
        w.writerow([f"{acc[c]:.6f}" for c in PROBE_COLUMNS])


def run_probe(run_dir: str, data_dir: str) -> dict:
    from .trainer import load_trainer

    tr = load_trainer(run_dir)
    train_ds = dat.load_dataset(os.path.join(data_dir, "train.bin"))
    test_ds = dat.load_dataset(os.path.join(data_dir, "test.bin"))
    acc = probe_report(tr, train_ds, test_ds, seed=tr.cfg.seed)
    write_probe_csv(os.path.join(run_dir, "probe.csv"), acc)
    return acc


def pixel_domain_probe(frames: np.ndarray, domains: np.ndarray,
                       seed: int = 0) -> LinearProbe:
    """Domain classifier on mean-over-time pixels, for scoring swap panels.

    Pass decoder reconstructions rather than raw frames when the probe will
    score generated panels, so its decision boundary lives on the decoder's
    output distribution instead of the crisper raw-pixel one.
    """
    X = frames.mean(axis=1)
    return LinearProbe(X.shape[1], 2, seed).fit(X, domains.astype(np.int64))
