"""Training loop, evaluation, and the swap demo."""

from __future__ import annotations

import csv
import os

import numpy as np

from . import autodiff as ad
from . import data as dat
from . import losses as L
from . import nn
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_text, parse_config_text
from .model import DisentangledSeqVae, reparameterize
from .optim import AdamState, adam_step, lr_schedule

METRICS_HEADER = ["epoch", "svae", "mi", "adv_f", "adv_r", "adv_v", "ctc",
                  "cls", "total", "src_train_acc", "tgt_test_acc",
                  "pl_coverage", "lr_eff"]

CHECKPOINT_EVERY = 10


class Trainer:
    """Model, heads, and optimizer bundled with named parameters."""

    def __init__(self, cfg: RunConfig, frame_dim: int, n_classes: int):
        cfg.validate()
        self.cfg = cfg
        self.n_classes = n_classes
        rng = np.random.default_rng([cfg.seed, 42])
        self.model = DisentangledSeqVae(rng, frame_dim, cfg.T, cfg.dz_d, cfg.dz_t,
                              cfg.hidden, image_mode=(cfg.mode == "image"),
                              exclusive_dynamic=cfg.exclusive_dynamic)
        self.trn = nn.TrnHead(rng, cfg.T, cfg.dz_t, cfg.relation_dim,
                              hidden=cfg.hidden)
        self.heads = {
            "frame": nn.Mlp(rng, [cfg.dz_t, 64, 2]),
            "relation": nn.Mlp(rng, [cfg.relation_dim, 64, 2]),
            "video": nn.Mlp(rng, [cfg.relation_dim, 64, 2]),
        }
        self.task_head = nn.Linear(rng, cfg.relation_dim, n_classes)
        # keep early logits small so pseudo-label confidences stay below the
        # acceptance threshold until the classifier has genuinely fit
        self.task_head.W.data *= 0.05
        self.gate = nn.GrlGate(cfg.grl_beta)
        self.named = (self.model.params("model")
                      + self.trn.params("trn")
                      + self.heads["frame"].params("head_frame")
                      + self.heads["relation"].params("head_relation")
                      + self.heads["video"].params("head_video")
                      + self.task_head.params("task_head"))
        self.params = [p for _, p in self.named]
        # the domain heads run at a higher learning rate: a head that lags
        # the encoder lets it win the minimax game by rotating the domain
        # direction instead of removing it (visible as CE above chance)
        mult = [8.0 if n.startswith("head_") else 1.0 for n, _ in self.named]
        self.adam = AdamState(self.params, lr0=cfg.lr0,
                              weight_decay=cfg.weight_decay, lr_mult=mult)

    def task_pathway(self):
        """Parameters of the prediction network used for pseudo-labeling."""
        return [(n, p) for n, p in self.named
                if n.startswith(("trn.", "task_head."))]

    # -- inference helpers ---------------------------------------------------

    def predict_logits(self, frames: np.ndarray, chunk: int = 128) -> np.ndarray:
        """Eval-mode class logits (zero-noise latents, deterministic TRN)."""
        out = []
        for k in range(0, len(frames), chunk):
            lat = self.model.sample_latents(frames[k:k + chunk], None)
            Zn = nn.rms_normalize(lat.Z)
            feats = L.video_features(Zn, self.trn, None)
            out.append(self.task_head(feats).data)
        return np.concatenate(out, axis=0)

    def latents(self, frames: np.ndarray, chunk: int = 128):
        """Eval-mode (z_d, mean-over-t z_t) pairs for probing."""
        zd, zt = [], []
        for k in range(0, len(frames), chunk):
            lat = self.model.sample_latents(frames[k:k + chunk], None)
            zd.append(lat.z_d.data)
            zt.append(lat.Z.data.mean(axis=1))
        return np.concatenate(zd), np.concatenate(zt)

    def accuracy(self, ds: dat.Dataset, domain: int) -> float:
        sel = ds.domain == domain
        if not sel.any():
            return float("nan")
        pred = self.predict_logits(ds.frames[sel]).argmax(axis=-1)
        return float((pred == ds.label[sel]).mean())

    # -- persistence -----------------------------------------------------------

    def state_blocks(self):
        return [(n, p.data) for n, p in self.named]

    def load_state(self, ckpt: dict):
        for name, p in self.named:
            if name not in ckpt["params"]:
                raise ValueError(f"checkpoint missing parameter {name!r}")
            p.data = ckpt["params"][name].astype(np.float32).copy()
        self.adam.step = ckpt["adam_step"]
        for i, (name, p) in enumerate(self.named):
            self.adam.m[i] = ckpt["adam_m"][name].astype(np.float32).copy()
            self.adam.v[i] = ckpt["adam_v"][name].astype(np.float32).copy()


def effective_weights(cfg: RunConfig) -> L.LossWeights:
    return L.LossWeights(
        lambda1=0.0 if cfg.no_mi else cfg.lambda1,
        lambda2=0.0 if cfg.no_adv else cfg.lambda2,
        lambda3=0.0 if cfg.no_ctc else cfg.lambda3,
        lambda4=0.0 if cfg.no_cls else cfg.lambda4,
        margin=cfg.margin)


def _zero():
    return Tensor(np.zeros((), dtype=np.float32))


def train_step(tr: Trainer, src: dat.SequenceBatch, tgt: dat.SequenceBatch,
               weights: L.LossWeights, n_src: int, n_tgt: int,
               pseudo, mask, rng: np.random.Generator, epoch: int):
    """One optimization step over a paired source/target half-batch."""
    cfg = tr.cfg
    with ad.tape_scope() as tape:
        for p in tr.params:
            tape.watch(p)

        lat_s = tr.model.sample_latents(src.frames, rng)
        lat_t = tr.model.sample_latents(tgt.frames, rng)
        # downstream heads consume normalized posterior means: per-sample
        # noise at the latent scale swamps the class/domain signal the heads
        # train on, and the raw latent scale is whatever reconstruction set
        zd_s = nn.rms_normalize(reparameterize(lat_s.static, None))
        zd_t = nn.rms_normalize(reparameterize(lat_t.static, None))
        Zm_s = nn.rms_normalize(reparameterize(lat_s.dynamic, None))
        Zm_t = nn.rms_normalize(reparameterize(lat_t.dynamic, None))
        parts = {}

        prior_s = tr.model.prior_rollout(lat_s.Z)
        prior_t = tr.model.prior_rollout(lat_t.Z)
        xhat_s = tr.model.decode(lat_s.z_d, lat_s.Z)
        xhat_t = tr.model.decode(lat_t.z_d, lat_t.Z)
        kl_w = min(1.0, epoch / max(1, cfg.epochs - 1))
        parts["svae"] = ad.mul(ad.add(
            L.svae_loss(src.frames, xhat_s, lat_s.static, lat_s.dynamic,
                        prior_s, kl_w, cfg.free_bits),
            L.svae_loss(tgt.frames, xhat_t, lat_t.static, lat_t.dynamic,
                        prior_t, kl_w, cfg.free_bits)),
            0.5)

        if weights.lambda1 > 0:
            parts["mi"] = ad.mul(ad.add(
                L.mi_loss(lat_s.z_d, lat_s.static, lat_s.Z, lat_s.dynamic, n_src),
                L.mi_loss(lat_t.z_d, lat_t.static, lat_t.Z, lat_t.dynamic, n_tgt)),
                0.5)
        else:
            parts["mi"] = _zero()

        if weights.lambda2 > 0:
            # the adversary sees raw dynamic means: per-sample normalization
            # would hide any domain signal carried by the latent amplitude
            raw_Zm_s = reparameterize(lat_s.dynamic, None)
            raw_Zm_t = reparameterize(lat_t.dynamic, None)
            l_f, l_r, l_v = L.adv_loss(raw_Zm_s, raw_Zm_t, tr.heads, tr.trn,
                                       tr.gate, rng)
            parts["adv_f"], parts["adv_r"], parts["adv_v"] = l_f, l_r, l_v
        else:
            parts["adv_f"], parts["adv_r"], parts["adv_v"] = (_zero(),) * 3

        if weights.lambda3 > 0:
            shuf_s = dat.shuffle_batch(src.frames, rng)
            shuf_t = dat.shuffle_batch(tgt.frames, rng)
            # the triplet works on raw static latents: normalized ones satisfy
            # the margin at vanishing amplitude, which lets the static code
            # collapse while keeping a nominal direction
            raw_zd_s = reparameterize(lat_s.static, None)
            raw_zd_t = reparameterize(lat_t.static, None)
            pos_post = tr.model.encode(
                np.concatenate([shuf_s, shuf_t]))[0]
            pos = reparameterize(pos_post, None)
            anchor = ad.concat([raw_zd_s, raw_zd_t], axis=0)
            neg = ad.concat([
                ad.take(raw_zd_t, (rng.integers(0, len(tgt.frames),
                                                len(src.frames)),)),
                ad.take(raw_zd_s, (rng.integers(0, len(src.frames),
                                                len(tgt.frames)),))], axis=0)
            parts["ctc"] = L.ctc_loss(anchor, pos, neg, weights.margin)
        else:
            parts["ctc"] = _zero()

        if weights.lambda4 > 0:
            y_s = src.visible_labels()
            if pseudo is not None:
                pl = pseudo[tgt.index]
                mk = mask[tgt.index]
                parts["cls"] = L.cls_loss(Zm_s, y_s, Zm_t, pl, mk,
                                          tr.trn, tr.task_head, rng,
                                          cfg.cls_norm_total)
            else:
                parts["cls"] = L.cls_loss(Zm_s, y_s, None, None, None,
                                          tr.trn, tr.task_head, rng,
                                          cfg.cls_norm_total)
        else:
            parts["cls"] = _zero()

        total, report = L.total_loss(parts, weights)
        ad.backward(tape, total)
        grads = [tape.grad(p) for p in tr.params]
    lr = adam_step(tr.adam, tr.params, grads, epoch, cfg.epochs)
    return report, lr


def train(cfg: RunConfig, data_dir: str, out_dir: str,
          resume_from: str | None = None) -> str:
    """Full training run; writes metrics.csv and checkpoints into out_dir."""
    cfg.validate()
    train_ds = dat.load_dataset(os.path.join(data_dir, "train.bin"))
    test_ds = dat.load_dataset(os.path.join(data_dir, "test.bin"))
    if train_ds.T != cfg.T:
        raise ValueError(f"dataset T={train_ds.T} does not match config T={cfg.T}")
    os.makedirs(out_dir, exist_ok=True)

    tr = Trainer(cfg, train_ds.D, train_ds.n_classes)
    weights = effective_weights(cfg)
    n_src = int((train_ds.domain == 0).sum())
    n_tgt = int((train_ds.domain == 1).sum())
    tgt_rows = np.where(train_ds.domain == 1)[0]

    start_epoch = 0
    rows = []
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        tr.load_state(ckpt)
        start_epoch = ckpt["epoch"] + 1
        prev = os.path.join(os.path.dirname(resume_from), "metrics.csv")
        if os.path.exists(prev):
            with open(prev) as f:
                rows = [r for r in csv.reader(f)][1:][:start_epoch]

    with open(os.path.join(out_dir, "config.txt"), "w") as f:
        f.write(config_text(cfg))

    for epoch in range(start_epoch, cfg.epochs):
        pseudo = mask = None
        coverage = 0.0
        use_pl = (not cfg.no_pl and not cfg.no_cls
                  and epoch >= cfg.warmup_epochs)
        if use_pl:
            logits = tr.predict_logits(train_ds.frames[tgt_rows])
            labels, m = L.pseudo_label_select(logits, cfg.eta)
            pseudo = np.full(len(train_ds.label), -1, dtype=np.int64)
            mask = np.zeros(len(train_ds.label), dtype=np.float32)
            pseudo[tgt_rows] = labels
            mask[tgt_rows] = m
            coverage = float(m.mean())

        sums = np.zeros(len(L.LossReport.FIELDS))
        steps = 0
        lr = lr_schedule(cfg.lr0, epoch, cfg.epochs)
        for k, (src, tgt) in enumerate(dat.batch_iter(train_ds, cfg.batch,
                                                      cfg.seed, epoch)):
            rng = np.random.default_rng([cfg.seed, epoch, k])
            report, lr = train_step(tr, src, tgt, weights, n_src, n_tgt,
                                    pseudo, mask, rng, epoch)
            sums += [getattr(report, f) for f in L.LossReport.FIELDS]
            steps += 1
        means = sums / max(steps, 1)

        src_acc = tr.accuracy(train_ds, domain=0)
        tgt_acc = tr.accuracy(test_ds, domain=1)
        rows.append([epoch] + [f"{v:.6f}" for v in means]
                    + [f"{src_acc:.6f}", f"{tgt_acc:.6f}",
                       f"{coverage:.6f}", f"{lr:.8f}"])
        _write_metrics(os.path.join(out_dir, "metrics.csv"), rows)

        if (epoch + 1) % CHECKPOINT_EVERY == 0 or epoch == cfg.epochs - 1:
            save_checkpoint(
                os.path.join(out_dir, "checkpoint.bin"), config_text(cfg),
                epoch, tr.state_blocks(), tr.adam.step, tr.adam.m, tr.adam.v,
                [(n, p.data) for n, p in tr.task_pathway()])
    return out_dir


def _write_metrics(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        w.writerows(rows)


def load_trainer(run_dir: str) -> Trainer:
    """Rebuild a Trainer from a run directory's checkpoint."""
    ckpt = load_checkpoint(os.path.join(run_dir, "checkpoint.bin"))
    cfg = parse_config_text(ckpt["config_text"])
    frame_dim = ckpt["params"]["model.dec_out.W"].shape[1]
    n_classes = ckpt["params"]["task_head.W"].shape[1]
    tr = Trainer(cfg, frame_dim, n_classes)
    tr.load_state(ckpt)
    return tr


def evaluate(run_dir: str, data_dir: str, split: str = "test") -> dict:
    """Top-1 accuracy per domain at the stored checkpoint."""
    tr = load_trainer(run_dir)
    ds = dat.load_dataset(os.path.join(data_dir, f"{split}.bin"))
    return {"source_acc": tr.accuracy(ds, 0), "target_acc": tr.accuracy(ds, 1)}


# ---------------------------------------------------------------------------
# swap demo
# ---------------------------------------------------------------------------

def _panel(rows: list[np.ndarray], T: int) -> np.ndarray:
    """Stack per-row frame strips into a (4*16) x (T*16) x 3 grid."""
    strips = []
    for row in rows:
        frames = row.reshape(T, dat.CANVAS, dat.CANVAS, 3)
        strips.append(np.concatenate(list(frames), axis=1))
    return np.concatenate(strips, axis=0)


def swap_demo(run_dir: str, data_dir: str, n_pairs: int, out_dir: str,
              split: str = "test") -> list[str]:
    """Write per-pair PPM panels: original / recon / dynamic-only / swapped."""
    from .model import swap_static

    tr = load_trainer(run_dir)
    ds = dat.load_dataset(os.path.join(data_dir, f"{split}.bin"))
    if ds.mode != 0:
        raise ValueError("swap demo requires an image-mode dataset")
    os.makedirs(out_dir, exist_ok=True)
    src_rows = np.where(ds.domain == 0)[0][:n_pairs]
    tgt_rows = np.where(ds.domain == 1)[0][:n_pairs]
    if len(src_rows) < n_pairs or len(tgt_rows) < n_pairs:
        raise ValueError("not enough sequences for the requested pairs")
    written = []
    for i, (a, b) in enumerate(zip(src_rows, tgt_rows)):
        out = swap_static(tr.model, ds.frames[a:a + 1], ds.frames[b:b + 1])
        for tag, orig, recon, dyn, swap in (
                ("a", ds.frames[a], out["recon_a"][0], out["dyn_a"][0],
                 out["swap_a"][0]),
                ("b", ds.frames[b], out["recon_b"][0], out["dyn_b"][0],
                 out["swap_b"][0])):
            panel = _panel([orig, recon, dyn, swap], ds.T)
            path = os.path.join(out_dir, f"pair{i:03d}_{tag}.ppm")
            dat.write_ppm(path, panel)
            written.append(path)
    return written


def swap_flip_score(run_dir: str, data_dir: str, n_pairs: int = 40) -> dict:
    """Score cross-domain static swaps with a frozen pixel domain probe.

    The probe is trained on decoder reconstructions of the train split so it
    judges domain on the decoder's output distribution; it is then frozen and
    applied to the swap panels.  Also checks that a self-swap (a sequence's
    own static code) reproduces the reconstruction bitwise.
    """
    from .model import swap_static
    from .probes import pixel_domain_probe

    tr = load_trainer(run_dir)
    train_ds = dat.load_dataset(os.path.join(data_dir, "train.bin"))
    test_ds = dat.load_dataset(os.path.join(data_dir, "test.bin"))
    recons = []
    for k in range(0, len(train_ds.frames), 128):
        recons.append(tr.model.reconstruct(train_ds.frames[k:k + 128])[0].data)
    probe = pixel_domain_probe(np.concatenate(recons), train_ds.domain,
                               seed=tr.cfg.seed)

    src_rows = np.where(test_ds.domain == 0)[0][:n_pairs]
    tgt_rows = np.where(test_ds.domain == 1)[0][:n_pairs]
    n_pairs = min(len(src_rows), len(tgt_rows))
    flips = []
    self_ok = True
    for a, b in zip(src_rows[:n_pairs], tgt_rows[:n_pairs]):
        fa, fb = test_ds.frames[a:a + 1], test_ds.frames[b:b + 1]
        out = swap_static(tr.model, fa, fb)
        same = swap_static(tr.model, fa, fa)
        self_ok &= bool(np.array_equal(same["swap_a"], same["recon_a"]))
        # swap_a carries b's static code: the probe should call it domain 1
        flips.append(int(probe.predict(out["swap_a"].mean(axis=1))[0] == 1))
        flips.append(int(probe.predict(out["swap_b"].mean(axis=1))[0] == 0))
    return {"flip_rate": float(np.mean(flips)), "n_pairs": n_pairs,
            "self_swap_exact": self_ok}
