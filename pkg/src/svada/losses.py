"""Objective terms: ELBO, mutual-information, triplet, adversarial, task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import GaussianPosterior
from .nn import GrlGate, grl_apply, rms_normalize

LN_2PI = float(np.log(2.0 * np.pi))
_DIST_EPS = 1e-12  # keeps sqrt differentiable at zero distance


@dataclass
class LossWeights:
    """Balancing weights for the composite objective plus the triplet margin."""

    lambda1: float = 1.0   # mutual information
    lambda2: float = 1.0   # adversarial alignment
    lambda3: float = 1.0   # contrastive triplet
    lambda4: float = 1.0   # task supervision
    margin: float = 1.0

    def validate(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LossReport:
    svae: float = 0.0
    mi: float = 0.0
    adv_f: float = 0.0
    adv_r: float = 0.0
    adv_v: float = 0.0
    ctc: float = 0.0
    cls: float = 0.0
    total: float = 0.0

    FIELDS = ("svae", "mi", "adv_f", "adv_r", "adv_v", "ctc", "cls", "total")


# ---------------------------------------------------------------------------
# Gaussian building blocks
# ---------------------------------------------------------------------------

def gaussian_kl(q: GaussianPosterior, p: GaussianPosterior) -> Tensor:
    """KL(q || p) between diagonal Gaussians, summed over the last axis.

    0.5 * sum[(sigma_q^2 + (mu_q - mu_p)^2)/sigma_p^2 - 1 + ln sigma_p^2
              - ln sigma_q^2]
    """
    var_ratio = ad.exp(ad.sub(q.logvar, p.logvar))
    diff = ad.sub(q.mean, p.mean)
    sq = ad.mul(ad.mul(diff, diff), ad.exp(ad.mul(p.logvar, -1.0)))
    inner = ad.add(ad.add(var_ratio, sq), ad.sub(p.logvar, q.logvar))
    return ad.mul(ad.sum_(ad.sub(inner, 1.0), axis=inner.data.ndim - 1), 0.5)


def gaussian_kl_per_dim(q: GaussianPosterior, p: GaussianPosterior) -> Tensor:
    """Elementwise KL(q || p) between diagonal Gaussians (no axis reduction)."""
    var_ratio = ad.exp(ad.sub(q.logvar, p.logvar))
    diff = ad.sub(q.mean, p.mean)
    sq = ad.mul(ad.mul(diff, diff), ad.exp(ad.mul(p.logvar, -1.0)))
    inner = ad.add(ad.add(var_ratio, sq), ad.sub(p.logvar, q.logvar))
    return ad.mul(ad.sub(inner, 1.0), 0.5)


def standard_normal_like(t: Tensor) -> GaussianPosterior:
    z = np.zeros(t.shape, dtype=t.dtype)
    return GaussianPosterior(Tensor(z), Tensor(z.copy()))


def gaussian_log_density_matrix(z: Tensor, post: GaussianPosterior) -> Tensor:
    """logq[i, j] = ln N(z_i; mean_j, diag(var_j)) for a batch of M samples."""
    M, d = z.shape
    zi = ad.reshape(z, (M, 1, d))
    mu = ad.reshape(post.mean, (1, M, d))
    lv = ad.reshape(post.logvar, (1, M, d))
    diff = ad.sub(zi, mu)
    quad = ad.mul(ad.mul(diff, diff), ad.exp(ad.mul(lv, -1.0)))
    per_dim = ad.add(ad.add(quad, lv), LN_2PI)
    return ad.mul(ad.sum_(per_dim, axis=2), -0.5)


def _entropy_from_logq(logq: Tensor, N: int) -> Tensor:
    M = logq.shape[0]
    lse = ad.logsumexp(logq, axis=-1)
    return ad.mul(ad.mean_(ad.sub(lse, float(np.log(M * N)))), -1.0)


def entropy_mws(samples: Tensor, post: GaussianPosterior, N: int) -> Tensor:
    """Mini-batch weighted sampling entropy estimate.

    H(z) ~= -(1/M) sum_i [logsumexp_j ln q(z_i|x_j) - ln(M N)], where every
    batch posterior acts as a mixture component and N is the dataset size.
    """
    if samples.shape[0] < 2:
        raise ValueError("entropy_mws needs a batch of at least 2 samples")
    return _entropy_from_logq(gaussian_log_density_matrix(samples, post), N)


# ---------------------------------------------------------------------------
# objective terms
# ---------------------------------------------------------------------------

def svae_loss(x, x_hat: Tensor, static: GaussianPosterior,
              dynamic: GaussianPosterior, prior: GaussianPosterior,
              kl_weight: float = 1.0, free_bits: float = 0.0) -> Tensor:
    """Reconstruction + static KL + sequential dynamic KL, mean over batch.

    ``kl_weight`` scales the dynamic KL term; the trainer anneals it from 0
    to 1 so that the decoder binds to the dynamic latents before the prior
    pressure can inflate the posterior variances (at this model size a
    unit-weight dynamic KL from step one collapses the posterior).

    ``free_bits`` is a per-dimension KL floor: dimensions whose batch-mean
    KL sits below the floor contribute the floor instead, so the prior
    stops squeezing latent dimensions that are already cheap.  Without it
    the posterior re-collapses as soon as the anneal finishes.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    M = x.shape[0]
    diff = ad.sub(x_hat, x)
    recon = ad.mul(ad.sum_(ad.mul(diff, diff)), 0.5 / M)
    kd = gaussian_kl_per_dim(static, standard_normal_like(static.mean))
    kt = gaussian_kl_per_dim(dynamic, prior)
    kd = ad.mean_(kd, axis=0)                      # dz_d
    kt = ad.mul(ad.sum_(kt, axis=0), 1.0 / M)      # T x dz_t
    if free_bits > 0.0:
        # the floor only protects the dynamic code: motion needs capacity
        # held open against the sequential prior, while the static code is
        # kept under full KL pressure so that everything except the
        # triplet-protected domain offset is squeezed out of it
        ft = 0.5 * float(free_bits)
        kt = ad.add(ad.relu(ad.sub(kt, ft)), ft)
    # the anneal only shields the dynamic KL: the static code is protected
    # from collapse by the triplet term, and keeping it under full pressure
    # from the first step squeezes everything but the protected offset
    kl = ad.add(ad.sum_(kd), ad.mul(ad.sum_(kt), float(kl_weight)))
    return ad.add(recon, kl)


def mi_loss(z_d: Tensor, static: GaussianPosterior, Z: Tensor,
            dynamic: GaussianPosterior, N: int) -> Tensor:
    """Total-correlation style dependence between static and dynamic latents.

    sum_t [H(z_d) + H(z_t) - H(z_d, z_t)] with each entropy estimated by
    mini-batch weighted sampling; the joint density factorizes across the
    two posteriors.
    """
    M, T, dz = Z.shape
    logq_d = gaussian_log_density_matrix(z_d, static)
    h_d = _entropy_from_logq(logq_d, N)
    total = None
    for t in range(T):
        z_t = ad.take(Z, (slice(None), t, slice(None)))
        post_t = GaussianPosterior(
            ad.take(dynamic.mean, (slice(None), t, slice(None))),
            ad.take(dynamic.logvar, (slice(None), t, slice(None))))
        logq_t = gaussian_log_density_matrix(z_t, post_t)
        h_t = _entropy_from_logq(logq_t, N)
        h_joint = _entropy_from_logq(ad.add(logq_d, logq_t), N)
        term = ad.sub(ad.add(h_d, h_t), h_joint)
        total = term if total is None else ad.add(total, term)
    return total


def euclidean_distance(a: Tensor, b: Tensor) -> Tensor:
    diff = ad.sub(a, b)
    return ad.sqrt(ad.add(ad.sum_(ad.mul(diff, diff), axis=diff.data.ndim - 1),
                          _DIST_EPS))


def ctc_loss(z_anchor: Tensor, z_shuffled: Tensor, z_other: Tensor,
             margin: float = 1.0) -> Tensor:
    """Hinge on anchor-positive minus anchor-negative static distances."""
    d_pos = euclidean_distance(z_anchor, z_shuffled)
    d_neg = euclidean_distance(z_anchor, z_other)
    return ad.mean_(ad.relu(ad.add(ad.sub(d_pos, d_neg), margin)))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean CE over the batch using the fused log-softmax form."""
    ls = ad.log_softmax(logits, axis=-1)
    picked = ad.take(ls, (np.arange(len(labels)), np.asarray(labels)))
    return ad.mul(ad.mean_(picked), -1.0)


_LOGIT_CAP = 1.5


def _bounded(logits: Tensor) -> Tensor:
    """Squash domain-head logits into (-cap, cap).

    An unbounded adversary saturates its softmax once the domains separate,
    and the reversed gradient the features receive vanishes with it; the
    cap keeps the confusion pressure alive for the whole run.
    """
    return ad.mul(ad.tanh(ad.mul(logits, 1.0 / _LOGIT_CAP)), _LOGIT_CAP)


def adv_loss(Z_s: Tensor, Z_t: Tensor, heads: dict, trn, gate: GrlGate,
             rng: np.random.Generator | None = None):
    """Frame, relation, and video level domain confusion terms.

    The gradient reversal gate sits between the features and each domain
    classifier, so every upstream module receives the inverted gradient.
    """
    Ms, T, dz = Z_s.shape
    Mt = Z_t.shape[0]
    if Ms == 0 or Mt == 0:
        raise ValueError("adv_loss needs sequences from both domains")
    Z = ad.concat([Z_s, Z_t], axis=0)
    d = np.concatenate([np.zeros(Ms, dtype=np.int64), np.ones(Mt, dtype=np.int64)])

    frames = ad.reshape(grl_apply(gate, Z), ((Ms + Mt) * T, dz))
    l_f = cross_entropy(_bounded(heads["frame"](frames)), np.repeat(d, T))

    # normalize relation/video features in front of the domain heads:
    # everything upstream of the reversal gate is an adversary and would
    # otherwise win the game by inflating feature scale until the heads
    # saturate, which destabilizes training without aligning anything
    rel = trn(Z, rng)                                  # M x (T-1) x R
    R = rel.shape[-1]
    rel_n = rms_normalize(rel)
    rel_flat = ad.reshape(grl_apply(gate, rel_n), ((Ms + Mt) * (T - 1), R))
    l_r = cross_entropy(_bounded(heads["relation"](rel_flat)),
                        np.repeat(d, T - 1))

    vid = rms_normalize(ad.mul(ad.sum_(rel, axis=1), 1.0 / (T - 1)))
    l_v = cross_entropy(_bounded(heads["video"](grl_apply(gate, vid))), d)
    return l_f, l_r, l_v


def pseudo_label_select(logits: np.ndarray, eta: float):
    """Argmax labels plus a confidence mask (max softmax prob >= eta)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    labels = p.argmax(axis=-1)          # ties resolve to the lowest index
    mask = (p.max(axis=-1) >= eta).astype(np.float32)
    return labels, mask


def video_features(Z: Tensor, trn, rng: np.random.Generator | None = None) -> Tensor:
    """Mean over relation scales: the video-level input of the task head.

    Unit-RMS normalized so the task head sees a stable input scale and its
    softmax confidences stay calibrated for pseudo-label thresholding.
    """
    rel = trn(Z, rng)
    return rms_normalize(ad.mul(ad.sum_(rel, axis=1), 1.0 / rel.shape[1]))


def cls_loss(Z_s: Tensor, y_s: np.ndarray, Z_t, pseudo, mask, trn, task_head,
             rng: np.random.Generator | None = None,
             normalize_by_total: bool = False) -> Tensor:
    """Source CE plus confidence-masked target pseudo-label CE.

    Normalized by the number of sequences actually contributing; setting
    ``normalize_by_total`` divides by all sequences instead.
    """
    if len(y_s) == 0:
        raise ValueError("cls_loss requires labeled source sequences")
    logits_s = task_head(video_features(Z_s, trn, rng))
    ls = ad.log_softmax(logits_s, axis=-1)
    picked = ad.take(ls, (np.arange(len(y_s)), np.asarray(y_s)))
    total = ad.mul(ad.sum_(picked), -1.0)
    n_t = 0.0
    if Z_t is not None and mask is not None and mask.sum() > 0:
        logits_t = task_head(video_features(Z_t, trn, rng))
        lt = ad.log_softmax(logits_t, axis=-1)
        picked_t = ad.take(lt, (np.arange(len(pseudo)), np.asarray(pseudo)))
        total = ad.add(total, ad.mul(ad.sum_(ad.mul(picked_t,
                       mask.astype(np.float32))), -1.0))
        n_t = float(mask.sum()) if not normalize_by_total else float(len(pseudo))
    elif normalize_by_total and Z_t is not None:
        n_t = float(Z_t.shape[0])
    return ad.mul(total, 1.0 / (len(y_s) + n_t))


def total_loss(parts: dict, weights: LossWeights):
    """Weighted composite objective; returns (scalar Tensor, LossReport)."""
    weights.validate()
    adv = ad.add(ad.add(parts["adv_f"], parts["adv_r"]), parts["adv_v"])
    total = parts["svae"]
    total = ad.add(total, ad.mul(parts["mi"], weights.lambda1))
    total = ad.add(total, ad.mul(adv, weights.lambda2))
    total = ad.add(total, ad.mul(parts["ctc"], weights.lambda3))
    total = ad.add(total, ad.mul(parts["cls"], weights.lambda4))
    report = LossReport(
        svae=parts["svae"].item(), mi=parts["mi"].item(),
        adv_f=parts["adv_f"].item(), adv_r=parts["adv_r"].item(),
        adv_v=parts["adv_v"].item(), ctc=parts["ctc"].item(),
        cls=parts["cls"].item(), total=total.item())
    return total, report
