"""Named gradient-check battery covering every layer and loss term."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import losses as L
from . import nn
from .autodiff import Tensor, grad_check
from .model import GaussianPosterior, DisentangledSeqVae

FLOAT32_TOL = 1e-3
FLOAT64_TOL = 1e-6


def _linear_tanh_sum(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    W = Tensor(rng.standard_normal((4, 5)))
    b = Tensor(rng.standard_normal(5))

    def forward():
        return ad.sum_(ad.tanh(ad.add(ad.matmul(x, W), b)))

    return [x, W, b], forward


def _matmul_chain(rng):
    A = Tensor(rng.standard_normal((3, 4)))
    B = Tensor(rng.standard_normal((4, 2)))

    def forward():
        return ad.sum_(ad.sigmoid(ad.matmul(A, B)))

    return [A, B], forward


def _log_softmax_pick(rng):
    x = Tensor(rng.standard_normal((4, 5)))
    labels = rng.integers(0, 5, size=4)

    def forward():
        return L.cross_entropy(ad.mul(x, 2.0), labels)

    return [x], forward


def _lstm_3steps(rng):
    cell = nn.LstmCell(rng, 3, 4)
    xs = [Tensor(rng.standard_normal((2, 3))) for _ in range(3)]

    def forward():
        h, c = cell.init_state(2, dtype=xs[0].dtype)
        acc = None
        for x in xs:
            h, c = cell.step(x, h, c)
            s = ad.sum_(h)
            acc = s if acc is None else ad.add(acc, s)
        return acc

    return [cell.Wx, cell.Wh, cell.b] + xs, forward


def _grl_net(rng):
    lin1 = nn.Linear(rng, 3, 4)
    lin2 = nn.Linear(rng, 4, 2)
    gate = nn.GrlGate(0.7)
    x = Tensor(rng.standard_normal((3, 3)))

    def forward():
        h = ad.tanh(lin1(x))
        return ad.sum_(ad.tanh(lin2(nn.grl_apply(gate, h))))

    # everything upstream of the gate sees -beta times the true derivative
    scales = [-gate.beta, -gate.beta, 1.0, 1.0, -gate.beta]
    return [lin1.W, lin1.b, lin2.W, lin2.b, x], forward, scales


def _gaussian_kl(rng):
    mq = Tensor(rng.standard_normal((3, 4)))
    lq = Tensor(0.3 * rng.standard_normal((3, 4)))
    mp = Tensor(rng.standard_normal((3, 4)))
    lp = Tensor(0.3 * rng.standard_normal((3, 4)))

    def forward():
        return ad.sum_(L.gaussian_kl(GaussianPosterior(mq, lq),
                                     GaussianPosterior(mp, lp)))

    return [mq, lq, mp, lp], forward


def _svae_tiny(rng):
    model = DisentangledSeqVae(rng, frame_dim=6, T=3, dz_d=2, dz_t=2, hidden=4,
                     image_mode=False)
    frames = rng.uniform(0, 1, size=(2, 3, 6))
    eps_d = rng.standard_normal((2, 2))
    eps_t = rng.standard_normal((2, 3, 2))
    params = [p for _, p in model.params()]

    def forward():
        x = Tensor(frames.astype(params[0].dtype))
        static, dynamic = model.encode(x)
        from .model import reparameterize
        z_d = reparameterize(static, eps_d.astype(params[0].dtype))
        Z = reparameterize(dynamic, eps_t.astype(params[0].dtype))
        prior = model.prior_rollout(Z)
        xhat = model.decode(z_d, Z)
        return L.svae_loss(x, xhat, static, dynamic, prior)

    return params, forward


def _mi_m4(rng):
    M, T, d = 4, 2, 2
    mu_d = Tensor(rng.standard_normal((M, d)))
    lv_d = Tensor(0.2 * rng.standard_normal((M, d)))
    mu_t = Tensor(rng.standard_normal((M, T, d)))
    lv_t = Tensor(0.2 * rng.standard_normal((M, T, d)))
    eps_d = rng.standard_normal((M, d))
    eps_t = rng.standard_normal((M, T, d))

    def forward():
        from .model import reparameterize
        static = GaussianPosterior(mu_d, lv_d)
        dynamic = GaussianPosterior(mu_t, lv_t)
        z_d = reparameterize(static, eps_d.astype(mu_d.dtype))
        Z = reparameterize(dynamic, eps_t.astype(mu_d.dtype))
        return L.mi_loss(z_d, static, Z, dynamic, N=8)

    return [mu_d, lv_d, mu_t, lv_t], forward


def _ctc(rng):
    a = Tensor(rng.standard_normal((4, 3)))
    p = Tensor(rng.standard_normal((4, 3)))
    n = Tensor(rng.standard_normal((4, 3)))

    def forward():
        return L.ctc_loss(a, p, n, margin=1.0)

    return [a, p, n], forward


def _adv_tiny(rng):
    T, dz, R = 3, 2, 4
    Z_s = Tensor(rng.standard_normal((2, T, dz)))
    Z_t = Tensor(rng.standard_normal((2, T, dz)))
    trn = nn.TrnHead(rng, T, dz, feature_dim=R, hidden=4)
    heads = {"frame": nn.Mlp(rng, [dz, 4, 2]),
             "relation": nn.Mlp(rng, [R, 4, 2]),
             "video": nn.Mlp(rng, [R, 4, 2])}
    gate = nn.GrlGate(1.0)
    upstream = [Z_s, Z_t] + [p for _, p in trn.params("t")]
    downstream = []
    for h in heads.values():
        downstream += [p for _, p in h.params("h")]

    def forward():
        l_f, l_r, l_v = L.adv_loss(Z_s, Z_t, heads, trn, gate, rng=None)
        return ad.add(ad.add(l_f, l_r), l_v)

    # latents and relation MLPs sit above a reversal gate; heads do not
    scales = [-1.0] * len(upstream) + [1.0] * len(downstream)
    return upstream + downstream, forward, scales


def _cls_tiny(rng):
    T, dz, R, C = 3, 2, 4, 3
    Z_s = Tensor(rng.standard_normal((3, T, dz)))
    Z_t = Tensor(rng.standard_normal((2, T, dz)))
    trn = nn.TrnHead(rng, T, dz, feature_dim=R, hidden=4)
    head = nn.Linear(rng, R, C)
    y_s = rng.integers(0, C, size=3)
    pseudo = rng.integers(0, C, size=2)
    mask = np.array([1.0, 0.0], dtype=np.float32)
    params = [Z_s, Z_t] + [p for _, p in trn.params("t")] + [head.W, head.b]

    def forward():
        return L.cls_loss(Z_s, y_s, Z_t, pseudo, mask, trn, head, rng=None)

    return params, forward


BATTERY = [
    ("linear_tanh_sum", _linear_tanh_sum),
    ("matmul_sigmoid", _matmul_chain),
    ("log_softmax_ce", _log_softmax_pick),
    ("lstm_3steps", _lstm_3steps),
    ("grl_net", _grl_net),
    ("gaussian_kl", _gaussian_kl),
    ("svae_tiny_model", _svae_tiny),
    ("mi_mws_m4", _mi_m4),
    ("ctc_triplet", _ctc),
    ("adv_three_level", _adv_tiny),
    ("cls_pseudo_masked", _cls_tiny),
]


def run_battery(seed: int = 0) -> list[tuple[str, float, float, bool]]:
    """Returns (name, err_f32, err_f64, passed) per case."""
    results = []
    for name, builder in BATTERY:
        e32 = grad_check(builder, seed, dtype=np.float32)
        e64 = grad_check(builder, seed, dtype=np.float64)
        results.append((name, e32, e64,
                        e32 < FLOAT32_TOL and e64 < FLOAT64_TOL))
    return results
