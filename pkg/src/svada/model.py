"""Disentangling sequential VAE: static appearance vs dynamic motion latents.

The encoder embeds frames and runs a forward LSTM; the static posterior reads
the mean of all hidden states (a whole-sequence summary), the dynamic
posterior at step t reads the state after frames 1..t.  A separate LSTM rolls
out the learned sequential prior over the dynamic latents.  The decoder
reconstructs each frame from the concatenation [z_d || z_t].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import ShapeMismatch, Tensor


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian in (mean, log-variance) parameterization."""

    mean: Tensor
    logvar: Tensor


@dataclass
class LatentBundle:
    """Sampled latents plus the posteriors needed by the losses."""

    z_d: Tensor            # M x dz_d
    Z: Tensor              # M x T x dz_t
    static: GaussianPosterior
    dynamic: GaussianPosterior      # means/logvars stacked M x T x dz_t


def reparameterize(post: GaussianPosterior, noise) -> Tensor:
    """z = mean + exp(logvar/2) * noise; noise=None means eval (z = mean)."""
    if noise is None:
        return post.mean
    std = ad.exp(ad.mul(post.logvar, 0.5))
    return ad.add(post.mean, ad.mul(std, np.asarray(noise, dtype=np.float32)))


class DisentangledSeqVae:
    """Encoder/decoder pair with disentangled static and dynamic latents."""

    def __init__(self, rng: np.random.Generator, frame_dim: int, T: int,
                 dz_d: int = 16, dz_t: int = 16, hidden: int = 128,
                 image_mode: bool = True, exclusive_dynamic: bool = False):
        self.frame_dim, self.T = frame_dim, T
        self.dz_d, self.dz_t, self.hidden = dz_d, dz_t, hidden
        self.image_mode = image_mode
        # exclusive_dynamic conditions q(z_t) on frames 1..t-1 instead of 1..t
        self.exclusive_dynamic = exclusive_dynamic
        side = round((frame_dim / 3) ** 0.5)
        if image_mode and side * side * 3 == frame_dim and side >= 8:
            self.conv = nn.ConvFrameEncoder(rng, side, 3)
            self.encoder = nn.Linear(rng, self.conv.d_out, hidden)
        else:
            self.conv = None
            self.encoder = nn.Linear(rng, frame_dim, hidden)
        self.enc_lstm = nn.LstmCell(rng, hidden, hidden)
        self.static_head = nn.Linear(rng, hidden, 2 * dz_d)
        self.dynamic_head = nn.Linear(rng, hidden, 2 * dz_t)
        self.prior_lstm = nn.LstmCell(rng, dz_t, hidden)
        self.prior_head = nn.Linear(rng, hidden, 2 * dz_t)
        self.dec_in = nn.Linear(rng, dz_d + dz_t, hidden)
        self.dec_mid = nn.Linear(rng, hidden, hidden)
        self.dec_out = nn.Linear(rng, hidden, frame_dim)
        # posterior init: widen the mean columns so latent spread is O(0.5)
        # rather than O(0.05) (downstream heads and the sample-overlap MI
        # estimator both need mean separation on the order of the posterior
        # sigma), and start sigma below 1 so samples are not pure noise
        for head, dz in ((self.static_head, dz_d), (self.dynamic_head, dz_t),
                         (self.prior_head, dz_t)):
            head.W.data[:, :dz] *= 8.0
            head.b.data[dz:] = -2.0

    def params(self, prefix: str = "model"):
        out = []
        if self.conv is not None:
            out += self.conv.params(f"{prefix}.conv")
        out += self.encoder.params(f"{prefix}.encoder")
        out += self.enc_lstm.params(f"{prefix}.enc_lstm")
        out += self.static_head.params(f"{prefix}.static_head")
        out += self.dynamic_head.params(f"{prefix}.dynamic_head")
        out += self.prior_lstm.params(f"{prefix}.prior_lstm")
        out += self.prior_head.params(f"{prefix}.prior_head")
        out += self.dec_in.params(f"{prefix}.dec_in")
        out += self.dec_mid.params(f"{prefix}.dec_mid")
        out += self.dec_out.params(f"{prefix}.dec_out")
        return out

    # -- inference ----------------------------------------------------------

    def encode(self, frames) -> tuple[GaussianPosterior, GaussianPosterior]:
        """Static (whole-sequence) and per-step dynamic posteriors.

        ``frames`` is an M x T x D Tensor or array of flattened frames.
        """
        x = frames if isinstance(frames, Tensor) else Tensor(frames)
        M, T, D = x.shape
        if T != self.T:
            raise ShapeMismatch("encode", x.shape, (M, self.T, D))
        if D != self.frame_dim:
            raise ShapeMismatch("encode", x.shape, (M, T, self.frame_dim))
        flat = ad.reshape(x, (M * T, D))
        if self.conv is not None:
            flat = self.conv(flat)
        emb = ad.tanh(self.encoder(flat))
        emb = ad.reshape(emb, (M, T, self.hidden))
        h, c = self.enc_lstm.init_state(M, dtype=x.dtype)
        states = []
        for t in range(T):
            x_t = ad.take(emb, (slice(None), t, slice(None)))
            h, c = self.enc_lstm.step(x_t, h, c)
            states.append(h)
        if self.exclusive_dynamic:
            zero = Tensor(np.zeros((M, self.hidden), dtype=np.asarray(x.data).dtype))
            dyn_states = [zero] + states[:-1]
        else:
            dyn_states = states
        h_bar = ad.mul(ad.sum_(ad.stack(states, axis=1), axis=1), 1.0 / T)
        s = self.static_head(h_bar)
        static = GaussianPosterior(
            ad.take(s, (slice(None), slice(0, self.dz_d))),
            ad.take(s, (slice(None), slice(self.dz_d, 2 * self.dz_d))))
        mus, logvars = [], []
        for h_t in dyn_states:
            d = self.dynamic_head(h_t)
            mus.append(ad.take(d, (slice(None), slice(0, self.dz_t))))
            logvars.append(ad.take(d, (slice(None), slice(self.dz_t, 2 * self.dz_t))))
        dynamic = GaussianPosterior(ad.stack(mus, axis=1), ad.stack(logvars, axis=1))
        return static, dynamic

    def sample_latents(self, frames, rng: np.random.Generator | None) -> LatentBundle:
        """Encode and reparameterize; rng=None gives deterministic eval means."""
        static, dynamic = self.encode(frames)
        if rng is None:
            return LatentBundle(static.mean, dynamic.mean, static, dynamic)
        eps_d = rng.standard_normal(static.mean.shape).astype(np.float32)
        eps_t = rng.standard_normal(dynamic.mean.shape).astype(np.float32)
        return LatentBundle(reparameterize(static, eps_d),
                            reparameterize(dynamic, eps_t), static, dynamic)

    # -- generation ---------------------------------------------------------

    def prior_rollout(self, Z: Tensor) -> GaussianPosterior:
        """Teacher-forced sequential prior parameters, M x T x dz_t.

        Step 1 has no history and is pinned to N(0, I); step t >= 2 reads the
        prior LSTM state after consuming the sampled z_1 .. z_{t-1}.
        """
        M, T, dz = Z.shape
        dtype = Z.dtype
        zero = Tensor(np.zeros((M, dz), dtype=dtype))
        mus, logvars = [zero], [Tensor(np.zeros((M, dz), dtype=dtype))]
        h, c = self.prior_lstm.init_state(M, dtype=dtype)
        for t in range(1, T):
            z_prev = ad.take(Z, (slice(None), t - 1, slice(None)))
            h, c = self.prior_lstm.step(z_prev, h, c)
            p = self.prior_head(h)
            mus.append(ad.take(p, (slice(None), slice(0, dz))))
            logvars.append(ad.take(p, (slice(None), slice(dz, 2 * dz))))
        return GaussianPosterior(ad.stack(mus, axis=1), ad.stack(logvars, axis=1))

    def decode(self, z_d: Tensor, Z: Tensor) -> Tensor:
        """Per-frame reconstruction means, M x T x D; z_d broadcast over T."""
        M, T, dz_t = Z.shape
        if z_d.shape != (M, self.dz_d):
            raise ShapeMismatch("decode", z_d.shape, (M, self.dz_d))
        zd_rep = ad.add(Tensor(np.zeros((M, T, self.dz_d), dtype=Z.dtype)),
                        ad.reshape(z_d, (M, 1, self.dz_d)))
        zcat = ad.reshape(ad.concat([zd_rep, Z], axis=-1), (M * T, self.dz_d + dz_t))
        hidden = ad.relu(self.dec_in(zcat))
        hidden = ad.relu(self.dec_mid(hidden))
        out = self.dec_out(hidden)
        if self.image_mode:
            out = ad.sigmoid(out)
        return ad.reshape(out, (M, T, self.frame_dim))

    def reconstruct(self, frames, rng: np.random.Generator | None = None):
        lat = self.sample_latents(frames, rng)
        return self.decode(lat.z_d, lat.Z), lat


def swap_static(model: DisentangledSeqVae, frames_a, frames_b) -> dict:
    """Eval-mode cross reconstructions with exchanged static latents.

    Returns straight reconstructions, static-swapped reconstructions, and
    dynamic-only reconstructions (static latent zeroed) for both batches.
    """
    a = frames_a if isinstance(frames_a, Tensor) else Tensor(frames_a)
    b = frames_b if isinstance(frames_b, Tensor) else Tensor(frames_b)
    if a.shape != b.shape:
        raise ShapeMismatch("swap_static", a.shape, b.shape)
    lat_a = model.sample_latents(a, None)
    lat_b = model.sample_latents(b, None)
    zeros_d = Tensor(np.zeros_like(lat_a.z_d.data))
    return {
        "recon_a": model.decode(lat_a.z_d, lat_a.Z).data,
        "recon_b": model.decode(lat_b.z_d, lat_b.Z).data,
        "swap_a": model.decode(lat_b.z_d, lat_a.Z).data,   # a's motion, b's look
        "swap_b": model.decode(lat_a.z_d, lat_b.Z).data,
        "dyn_a": model.decode(zeros_d, lat_a.Z).data,
        "dyn_b": model.decode(zeros_d, lat_b.Z).data,
    }
