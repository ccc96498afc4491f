"""Recurrent building blocks: LSTM layers/stacks, bidirectional wrapper,
VAE-LSTM generator and the critic network with exposed pooled features.

Cell equations are the standard formulation: sigmoid input/forget/output
gates, tanh cell candidate and output squashing, no peepholes. Forget-gate
biases start at 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import ParamStore, ShapeError, Tensor

LOGVAR_CLAMP = 20.0  # numerical safety for exp(logvar)


@dataclass
class LstmLayerParams:
    """One LSTM layer: input weights (d_in,4h), recurrent weights (h,4h),
    bias (4h,) with gate order input/forget/cell/output."""
    w_in: Tensor
    w_rec: Tensor
    bias: Tensor
    hidden_size: int

    def __post_init__(self):
        h = self.hidden_size
        if self.w_in.shape[1] != 4 * h or self.w_rec.shape != (h, 4 * h) \
                or self.bias.shape != (4 * h,):
            raise ShapeError(
                f"inconsistent LSTM layer shapes: w_in {self.w_in.shape}, "
                f"w_rec {self.w_rec.shape}, bias {self.bias.shape}, h={h}")


def init_lstm_layer(store: ParamStore, prefix: str, d_in: int, hidden: int,
                    rng: np.random.Generator, dtype=None,
                    forget_bias: float = 1.0) -> LstmLayerParams:
    w_in = store.add(f"{prefix}.w_in", ad.xavier_init((d_in, 4 * hidden), rng, dtype))
    w_rec = store.add(f"{prefix}.w_rec", ad.xavier_init((hidden, 4 * hidden), rng, dtype))
    b = np.zeros(4 * hidden, dtype=dtype or ad.DEFAULT_DTYPE)
    b[hidden:2 * hidden] = forget_bias
    bias = store.add(f"{prefix}.bias", ad.parameter(b))
    return LstmLayerParams(w_in, w_rec, bias, hidden)


def init_lstm_stack(store: ParamStore, prefix: str, d_in: int, hidden: int,
                    depth: int, rng: np.random.Generator, dtype=None):
    layers = []
    for i in range(depth):
        layers.append(init_lstm_layer(store, f"{prefix}.l{i}",
                                      d_in if i == 0 else hidden, hidden, rng, dtype))
    return layers


def lstm_forward(layer: LstmLayerParams, seq: Tensor, h0=None, c0=None):
    """Unidirectional pass. Returns (hidden sequence (k,h), (h_final, c_final))."""
    if seq.data.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"sequence must be (k,d) with k>=1, got {seq.shape}")
    if seq.shape[1] != layer.w_in.shape[0]:
        raise ShapeError(
            f"feature dim {seq.shape[1]} does not match input weights {layer.w_in.shape}")
    h = layer.hidden_size
    dtype = seq.data.dtype
    h0_arr = h0.data if isinstance(h0, Tensor) else (
        np.zeros(h, dtype=dtype) if h0 is None else np.asarray(h0, dtype=dtype))
    c0_arr = c0.data if isinstance(c0, Tensor) else (
        np.zeros(h, dtype=dtype) if c0 is None else np.asarray(c0, dtype=dtype))
    if h0_arr.shape != (h,) or c0_arr.shape != (h,):
        raise ShapeError(f"initial states must have shape ({h},)")

    x_proj = ad.add(ad.matmul(seq, layer.w_in), layer.bias)
    hs, cs, tcs, gates = kernels.run_lstm_fwd(x_proj.data, layer.w_rec.data,
                                              h0_arr, c0_arr)
    k = hs.shape[0]

    track = ad.grad_enabled() and (x_proj.requires_grad or layer.w_rec.requires_grad)
    if not track:
        H, C = ad.Tensor(hs), ad.Tensor(cs)
        return H, (ad.take_row(H, k - 1), ad.take_row(C, k - 1))

    zeros = np.zeros_like(hs)  # shared read-only by the backward kernel
    h_prev = np.empty_like(hs)
    h_prev[0] = h0_arr
    h_prev[1:] = hs[:-1]

    def make_vjp(which):
        def vjp(g):
            d_h, d_c = (g, zeros) if which == "h" else (zeros, g)
            d_xp, _, _ = kernels.run_lstm_bwd(layer.w_rec.data, c0_arr,
                                              gates, cs, tcs, d_h, d_c)
            g_xp = d_xp if x_proj.requires_grad else None
            g_rec = h_prev.T @ d_xp if layer.w_rec.requires_grad else None
            return g_xp, g_rec
        return vjp

    H = ad.Tensor(hs, requires_grad=True, parents=(x_proj, layer.w_rec),
                  vjp=make_vjp("h"))
    C = ad.Tensor(cs, requires_grad=True, parents=(x_proj, layer.w_rec),
                  vjp=make_vjp("c"))
    return H, (ad.take_row(H, k - 1), ad.take_row(C, k - 1))


def lstm_stack_forward(layers, seq: Tensor) -> Tensor:
    """Feed the sequence through stacked layers; returns the top layer's outputs."""
    out = seq
    for layer in layers:
        out, _ = lstm_forward(layer, out)
    return out


def bilstm_forward(stacks, seq: Tensor) -> Tensor:
    """Bidirectional stack: each depth runs forward and time-reversed passes
    and concatenates per step to (k, 2h). `stacks` is a list of
    (forward_layer, backward_layer) pairs."""
    if seq.data.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"bilstm needs a non-empty (k,d) sequence, got {seq.shape}")
    if not stacks:
        raise ShapeError("bilstm needs stack depth >= 1")
    out = seq
    for fwd_layer, bwd_layer in stacks:
        h_f, _ = lstm_forward(fwd_layer, out)
        h_b, _ = lstm_forward(bwd_layer, ad.flip_rows(out))
        out = ad.concat([h_f, ad.flip_rows(h_b)], axis=1)
    return out


# ---------------------------------------------------------------------------
# VAE-LSTM generator
# ---------------------------------------------------------------------------

@dataclass
class VaeLstmParams:
    encoder: list = field(default_factory=list)
    w_mu: Tensor = None
    b_mu: Tensor = None
    w_logvar: Tensor = None
    b_logvar: Tensor = None
    decoder: list = field(default_factory=list)
    w_out: Tensor = None
    b_out: Tensor = None
    start_token: Tensor = None
    feature_dim: int = 0
    hidden_size: int = 0
    latent_dim: int = 0


def init_vae(store: ParamStore, d: int, hidden: int, z_dim: int,
             rng: np.random.Generator, depth: int = 2, dtype=None) -> VaeLstmParams:
    dt = dtype or ad.DEFAULT_DTYPE
    enc = init_lstm_stack(store, "encoder", d, hidden, depth, rng, dtype)
    w_mu = store.add("latent.w_mu", ad.xavier_init((hidden, z_dim), rng, dtype))
    b_mu = store.add("latent.b_mu", ad.parameter(np.zeros(z_dim, dtype=dt)))
    w_lv = store.add("latent.w_logvar", ad.xavier_init((hidden, z_dim), rng, dtype))
    b_lv = store.add("latent.b_logvar", ad.parameter(np.zeros(z_dim, dtype=dt)))
    dec = init_lstm_stack(store, "decoder", d + z_dim, hidden, depth, rng, dtype)
    w_out = store.add("output.w", ad.xavier_init((hidden, d), rng, dtype))
    b_out = store.add("output.b", ad.parameter(np.zeros(d, dtype=dt)))
    start = store.add("output.start_token", ad.xavier_init((d,), rng, dtype))
    return VaeLstmParams(enc, w_mu, b_mu, w_lv, b_lv, dec, w_out, b_out, start,
                         d, hidden, z_dim)


def vae_encode(params: VaeLstmParams, seq: Tensor):
    """Latent posterior (mu, logvar) from the final encoder hidden state."""
    h_top = lstm_stack_forward(params.encoder, seq)
    h_fin = ad.take_row(h_top, h_top.shape[0] - 1)
    mu = ad.add(ad.matmul(h_fin, params.w_mu), params.b_mu)
    logvar = ad.clip_values(ad.add(ad.matmul(h_fin, params.w_logvar), params.b_logvar),
                            -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return mu, logvar


def vae_reparam_sample(mu: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, I)."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu/logvar shapes differ: {mu.shape} vs {logvar.shape}")
    eps = ad.tensor(rng.standard_normal(mu.shape[0]).astype(mu.data.dtype))
    std = ad.exp(ad.mul(logvar, 0.5))
    return ad.add(mu, ad.mul(std, eps))


def vae_decode(params: VaeLstmParams, z: Tensor, k: int) -> Tensor:
    """Unroll the decoder k steps conditioned on z.

    Each step consumes the learned start token concatenated with z; the
    emission is generated in reverse time order internally and flipped so
    callers always receive natural time order.
    """
    if k < 1:
        raise ShapeError(f"target length must be >= 1, got {k}")
    step_in = ad.concat([params.start_token, z], axis=0)
    dec_in = ad.tile_rows(step_in, k)
    h_top = lstm_stack_forward(params.decoder, dec_in)
    emitted = ad.add(ad.matmul(h_top, params.w_out), params.b_out)
    return ad.flip_rows(emitted)


def vae_forward(params: VaeLstmParams, seq: Tensor, rng: np.random.Generator):
    """encode -> sample -> decode; returns (reconstruction, mu, logvar)."""
    mu, logvar = vae_encode(params, seq)
    z = vae_reparam_sample(mu, logvar, rng)
    recon = vae_decode(params, z, seq.shape[0])
    return recon, mu, logvar


# ---------------------------------------------------------------------------
# critic
# ---------------------------------------------------------------------------

@dataclass
class CriticParams:
    layers: list
    w_head: Tensor
    b_head: Tensor
    hidden_size: int


def init_critic(store: ParamStore, d: int, hidden: int,
                rng: np.random.Generator, depth: int = 1, dtype=None) -> CriticParams:
    dt = dtype or ad.DEFAULT_DTYPE
    layers = init_lstm_stack(store, "lstm", d, hidden, depth, rng, dtype)
    w_head = store.add("head.w", ad.xavier_init((hidden,), rng, dtype))
    b_head = store.add("head.b", ad.parameter(np.zeros(1, dtype=dt)))
    return CriticParams(layers, w_head, b_head, hidden)


def critic_forward(params: CriticParams, seq: Tensor):
    """Sequence score and pooled features.

    phi is the time-mean of the top LSTM layer's hidden states (fixed size
    regardless of sequence length); the score is an unbounded linear readout
    of phi (no terminal squashing).
    """
    h_top = lstm_stack_forward(params.layers, seq)
    phi = ad.mean_(h_top, axis=0)
    score = ad.add(ad.matmul(phi, params.w_head), params.b_head)
    return score, phi
