"""Layer zoo: linear stacks, LSTM cell, gradient reversal, temporal relations."""

from __future__ import annotations

import itertools

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch, Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


class Linear:
    """y = x W + b with W stored input-major (in x out)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.d_in, self.d_out = d_in, d_out
        self.W = Tensor(glorot(rng, d_in, d_out))
        self.b = Tensor(np.zeros(d_out, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeMismatch("linear", x.shape, self.W.shape)
        return ad.add(ad.matmul(x, self.W), self.b)

    def params(self, prefix: str):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]


class Mlp:
    """Linear stack with an activation between layers, raw output."""

    def __init__(self, rng, dims: list[int], activation: str = "relu"):
        self.layers = [Linear(rng, a, b) for a, b in zip(dims, dims[1:])]
        self.act = {"relu": ad.relu, "tanh": ad.tanh}[activation]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.act(x)
        return x

    def params(self, prefix: str):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.params(f"{prefix}.{i}")
        return out


def classify(head, feat: Tensor) -> Tensor:
    """Raw logits from a head; softmax lives inside the losses."""
    return head(feat)


class ConvFrameEncoder:
    """Shared-kernel patch encoder with coordinate pooling for square frames.

    Each frame is scanned by a bank of kernels shared across positions, and
    the responses are pooled three ways per channel: total mass, x-weighted
    mass, and y-weighted mass.  The weight sharing plus the fixed coordinate
    grids give every input, whatever its palette or glyph, the same spatial
    code, which is what lets sequences from different domains land in a
    shared dynamic-latent geometry.
    """

    def __init__(self, rng: np.random.Generator, side: int, n_channels: int,
                 channels: int = 16, kernel: int = 5, stride: int = 2):
        if side < kernel:
            raise ValueError(f"frame side {side} smaller than kernel {kernel}")
        self.side, self.n_channels = side, n_channels
        self.kernel, self.stride, self.channels = kernel, stride, channels
        pos = range(0, side - kernel + 1, stride)
        self.grid = [(r, c) for r in pos for c in pos]
        P, K = len(self.grid), kernel * kernel * n_channels
        idx = np.empty((P, K), dtype=np.int64)
        for p, (r, c) in enumerate(self.grid):
            patch = [((r + i) * side + (c + j)) * n_channels + ch
                     for i in range(kernel) for j in range(kernel)
                     for ch in range(n_channels)]
            idx[p] = patch
        self._idx = idx.reshape(-1)
        self.W = Tensor(glorot(rng, K, channels))
        self.b = Tensor(np.zeros(channels, dtype=np.float32))
        centers = np.array([(r + (kernel - 1) / 2, c + (kernel - 1) / 2)
                            for r, c in self.grid], dtype=np.float32)
        span = (side - 1) / 2.0
        self.cy = ((centers[:, 0] - span) / span).reshape(1, P, 1)
        self.cx = ((centers[:, 1] - span) / span).reshape(1, P, 1)
        self.r2 = self.cx ** 2 + self.cy ** 2
        self.d_out = 3 * channels + 4

    def __call__(self, x: Tensor) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        N = x.shape[0]
        P, C = len(self.grid), self.channels
        patches = ad.reshape(ad.take(x, (slice(None), self._idx)),
                             (N * P, self.W.shape[0]))
        u = ad.relu(ad.add(ad.matmul(patches, self.W), self.b))
        u = ad.reshape(u, (N, P, C))
        mass = ad.mean_(u, axis=1)
        fx = ad.mean_(ad.mul(u, self.cx), axis=1)
        fy = ad.mean_(ad.mul(u, self.cy), axis=1)
        # channel-pooled normalized moments: which channels fire depends on
        # the glyph's palette, so any per-channel position readout reveals
        # the domain; summing over channels and normalizing by total mass
        # gives centroid/spread features that are palette-blind
        tot = ad.add(ad.sum_(ad.sum_(u, axis=2), axis=1), 1e-4)
        inv = ad.exp(ad.mul(ad.log(tot), -1.0))
        gx = ad.mul(ad.sum_(ad.sum_(ad.mul(u, self.cx), axis=2), axis=1), inv)
        gy = ad.mul(ad.sum_(ad.sum_(ad.mul(u, self.cy), axis=2), axis=1), inv)
        g2 = ad.mul(ad.sum_(ad.sum_(ad.mul(u, self.r2), axis=2), axis=1), inv)
        spread = ad.sub(g2, ad.add(ad.mul(gx, gx), ad.mul(gy, gy)))
        logmass = ad.mul(ad.log(tot), 0.1)
        pooled = ad.stack([gx, gy, spread, logmass], axis=1)
        return ad.concat([mass, fx, fy, pooled], axis=-1)

    def params(self, prefix: str):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]


class LstmCell:
    """Standard LSTM cell; gate order i, f, g, o along the stacked dim."""

    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.d_in, self.hidden = d_in, hidden
        self.Wx = Tensor(glorot(rng, d_in, 4 * hidden))
        self.Wh = Tensor(glorot(rng, hidden, 4 * hidden))
        self.b = Tensor(np.zeros(4 * hidden, dtype=np.float32))

    def init_state(self, batch: int, dtype=np.float32):
        z = np.zeros((batch, self.hidden), dtype=dtype)
        return Tensor(z), Tensor(z.copy())

    def step(self, x_t: Tensor, h: Tensor, c: Tensor):
        if h.shape[-1] != self.hidden:
            raise ShapeMismatch("lstm_step", h.shape, (h.shape[0], self.hidden))
        gates = ad.add(ad.add(ad.matmul(x_t, self.Wx), ad.matmul(h, self.Wh)), self.b)
        H = self.hidden
        i = ad.sigmoid(ad.take(gates, (slice(None), slice(0, H))))
        f = ad.sigmoid(ad.take(gates, (slice(None), slice(H, 2 * H))))
        g = ad.tanh(ad.take(gates, (slice(None), slice(2 * H, 3 * H))))
        o = ad.sigmoid(ad.take(gates, (slice(None), slice(3 * H, 4 * H))))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def params(self, prefix: str):
        return [(f"{prefix}.Wx", self.Wx), (f"{prefix}.Wh", self.Wh),
                (f"{prefix}.b", self.b)]


def lstm_step(cell: LstmCell, x_t: Tensor, h: Tensor, c: Tensor):
    return cell.step(x_t, h, c)


class GrlGate:
    """Identity forward; backward multiplies the upstream gradient by -beta."""

    def __init__(self, beta: float = 1.0):
        if beta < 0:
            raise ValueError("GRL beta must be >= 0")
        self.beta = beta


def grl_apply(gate: GrlGate, x: Tensor) -> Tensor:
    beta = gate.beta

    def bwd(g):
        return (-beta * g,)

    return ad._record(x.data, (x,), bwd)


def rms_normalize(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Scale each trailing-axis vector to unit RMS.

    The latent scale is set by the reconstruction objective, which can leave
    it arbitrarily small; normalizing here keeps every downstream head
    operating on O(1) inputs regardless of where the encoder settles.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    ms = ad.add(ad.mean_(ad.mul(x, x), axis=x.data.ndim - 1), eps)
    inv = ad.exp(ad.mul(ad.log(ms), -0.5))
    return ad.mul(x, ad.reshape(inv, inv.shape + (1,)))


class TrnHead:
    """Per-scale relation MLPs over ordered frame subsets.

    Scale n (2..T) applies g_n to the concatenation of n frame latents in
    temporal order; the k_n sampled subsets per scale are averaged into one
    feature.  Eval mode uses the lexicographically first subsets so that
    inference is deterministic.
    """

    def __init__(self, rng: np.random.Generator, T: int, dz: int,
                 feature_dim: int = 128, hidden: int = 128, k: int = 3):
        if T < 2:
            raise ValueError(f"TRN needs T >= 2, got {T}")
        self.T, self.dz, self.R, self.k = T, dz, feature_dim, k
        self.scale_mlps = [Mlp(rng, [n * dz, hidden, feature_dim])
                           for n in range(2, T + 1)]
        self._subsets = [list(itertools.combinations(range(T), n))
                         for n in range(2, T + 1)]

    def subsets_for(self, n: int, rng: np.random.Generator | None):
        """k subsets of size n; seeded random in training, first-k in eval."""
        pool = self._subsets[n - 2]
        kk = min(self.k, len(pool))
        if rng is None:
            return pool[:kk]
        idx = rng.choice(len(pool), size=kk, replace=False)
        return [pool[i] for i in sorted(idx)]

    def __call__(self, Z: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        """Relation features, shape M x (T-1) x R, row n-2 holds scale n."""
        M, T, dz = Z.shape
        if T != self.T or dz != self.dz:
            raise ShapeMismatch("trn_features", Z.shape, (M, self.T, self.dz))
        per_scale = []
        for n in range(2, T + 1):
            feats = []
            for subset in self.subsets_for(n, rng):
                frames = [ad.take(Z, (slice(None), t, slice(None))) for t in subset]
                feats.append(self.scale_mlps[n - 2](ad.concat(frames, axis=-1)))
            acc = feats[0]
            for f in feats[1:]:
                acc = ad.add(acc, f)
            per_scale.append(ad.mul(acc, 1.0 / len(feats)))
        return ad.stack(per_scale, axis=1)

    def params(self, prefix: str):
        out = []
        for n, mlp in zip(range(2, self.T + 1), self.scale_mlps):
            out += mlp.params(f"{prefix}.g{n}")
        return out


def trn_features(head: TrnHead, Z: Tensor,
                 rng: np.random.Generator | None = None) -> Tensor:
    return head(Z, rng)
