"""Cycle-SUM model assembly.

Wires the selector (bidirectional LSTM with a per-frame scoring head), the
two VAE-LSTM generators and the two critics into one forward/backward cycle
computation, and provides test-time score discretization through the
keyshot selection protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import seq_models as sm
from .autodiff import ParamStore, ShapeError, Tensor
from .eval_metrics import ShotSegmentation, frame_to_shot_scores, knapsack_select


@dataclass
class SelectorParams:
    stacks: list          # [(fwd_layer, bwd_layer)] per depth
    w_head: Tensor        # (2h,)
    b_head: Tensor        # (1,)


@dataclass
class Dimensions:
    feature_dim: int
    hidden_size: int
    latent_dim: int
    selector_depth: int = 3
    vae_depth: int = 2
    critic_depth: int = 1


@dataclass
class CycleSumNets:
    """The five networks and their parameter stores."""
    dims: Dimensions
    selector: SelectorParams
    generator_f: sm.VaeLstmParams
    generator_b: sm.VaeLstmParams
    critic_f: sm.CriticParams
    critic_b: sm.CriticParams
    stores: dict = field(default_factory=dict)

    GENERATOR_SIDE = ("selector", "generator_f", "generator_b")
    CRITIC_SIDE = ("critic_f", "critic_b")

    def store_names(self):
        return sorted(self.stores)

    def all_params(self) -> int:
        return sum(s.num_values() for s in self.stores.values())


def init_selector(store: ParamStore, d: int, hidden: int, depth: int,
                  rng: np.random.Generator, dtype=None) -> SelectorParams:
    dt = dtype or ad.DEFAULT_DTYPE
    stacks = []
    for i in range(depth):
        d_in = d if i == 0 else 2 * hidden
        f = sm.init_lstm_layer(store, f"bilstm.l{i}.fwd", d_in, hidden, rng, dtype)
        b = sm.init_lstm_layer(store, f"bilstm.l{i}.bwd", d_in, hidden, rng, dtype)
        stacks.append((f, b))
    w_head = store.add("head.w", ad.xavier_init((2 * hidden,), rng, dtype))
    b_head = store.add("head.b", ad.parameter(np.zeros(1, dtype=dt)))
    return SelectorParams(stacks, w_head, b_head)


def build_nets(feature_dim: int, hidden_size: int = 64, latent_dim: int = 16,
               seed: int = 0, selector_depth: int = 3, vae_depth: int = 2,
               critic_depth: int = 1, dtype=None, init_scale: float = 1.0) -> CycleSumNets:
    """Construct all five networks with seeded Xavier initialization."""
    dims = Dimensions(feature_dim, hidden_size, latent_dim,
                      selector_depth, vae_depth, critic_depth)
    ss = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(5)]
    stores = {name: ParamStore() for name in
              ("selector", "generator_f", "generator_b", "critic_f", "critic_b")}
    selector = init_selector(stores["selector"], feature_dim, hidden_size,
                             selector_depth, rngs[0], dtype)
    gen_f = sm.init_vae(stores["generator_f"], feature_dim, hidden_size,
                        latent_dim, rngs[1], vae_depth, dtype)
    gen_b = sm.init_vae(stores["generator_b"], feature_dim, hidden_size,
                        latent_dim, rngs[2], vae_depth, dtype)
    critic_f = sm.init_critic(stores["critic_f"], feature_dim, hidden_size,
                              rngs[3], critic_depth, dtype)
    critic_b = sm.init_critic(stores["critic_b"], feature_dim, hidden_size,
                              rngs[4], critic_depth, dtype)
    if init_scale != 1.0:
        for store in stores.values():
            for _, t in store.items():
                t.data *= init_scale
    return CycleSumNets(dims, selector, gen_f, gen_b, critic_f, critic_b, stores)


def select(nets: CycleSumNets, o: Tensor) -> Tensor:
    """Frame-wise importance scores in (0,1) from the bidirectional selector."""
    if o.data.ndim != 2 or o.shape[0] < 1:
        raise ShapeError(f"input video must be (k,d) with k>=1, got {o.shape}")
    ctx = sm.bilstm_forward(nets.selector.stacks, o)
    logits = ad.add(ad.matmul(ctx, nets.selector.w_head), nets.selector.b_head)
    return ad.sigmoid(logits)


def weight_frames(o: Tensor, x: Tensor) -> Tensor:
    """Summary features s_t = x_t * o_t (gradients flow to both factors)."""
    return ad.scale_rows(o, x)


@dataclass
class CyclePass:
    """Every intermediate of one full forward/backward cycle."""
    o: Tensor
    x: Tensor
    s: Tensor
    o_hat: Tensor = None
    s_hat: Tensor = None
    s_cycle: Tensor = None
    o_cycle: Tensor = None
    mu_f: Tensor = None
    logvar_f: Tensor = None
    mu_b: Tensor = None
    logvar_b: Tensor = None
    score_o: Tensor = None
    score_o_hat: Tensor = None
    score_s: Tensor = None
    score_s_hat: Tensor = None
    phi_o: Tensor = None
    phi_o_hat: Tensor = None
    phi_s: Tensor = None
    phi_s_hat: Tensor = None


def full_cycle(nets: CycleSumNets, o: Tensor, rng: np.random.Generator,
               use_backward: bool = True, need_cycles: bool = True) -> CyclePass:
    """Run selector, generators and critics over one video.

    Four independent latent samples are drawn (one per generator
    invocation). `use_backward=False` drops everything produced by the
    backward generator/critic (single-GAN variant); `need_cycles=False`
    skips the second-stage generator calls when no cycle loss will consume
    them.
    """
    x = select(nets, o)
    s = weight_frames(o, x)
    mu_f, logvar_f = sm.vae_encode(nets.generator_f, s)
    z_f = sm.vae_reparam_sample(mu_f, logvar_f, rng)
    o_hat = sm.vae_decode(nets.generator_f, z_f, o.shape[0])
    p = CyclePass(o=o, x=x, s=s, o_hat=o_hat, mu_f=mu_f, logvar_f=logvar_f)

    p.score_o, p.phi_o = sm.critic_forward(nets.critic_f, o)
    p.score_o_hat, p.phi_o_hat = sm.critic_forward(nets.critic_f, o_hat)

    if use_backward:
        mu_b, logvar_b = sm.vae_encode(nets.generator_b, o)
        z_b = sm.vae_reparam_sample(mu_b, logvar_b, rng)
        s_hat = sm.vae_decode(nets.generator_b, z_b, o.shape[0])
        p.s_hat, p.mu_b, p.logvar_b = s_hat, mu_b, logvar_b
        p.score_s, p.phi_s = sm.critic_forward(nets.critic_b, s)
        p.score_s_hat, p.phi_s_hat = sm.critic_forward(nets.critic_b, s_hat)
        if need_cycles:
            mu_c1, logvar_c1 = sm.vae_encode(nets.generator_b, o_hat)
            p.s_cycle = sm.vae_decode(
                nets.generator_b, sm.vae_reparam_sample(mu_c1, logvar_c1, rng), o.shape[0])
            mu_c2, logvar_c2 = sm.vae_encode(nets.generator_f, s_hat)
            p.o_cycle = sm.vae_decode(
                nets.generator_f, sm.vae_reparam_sample(mu_c2, logvar_c2, rng), o.shape[0])
    return p


def discretize_scores(x, segments: ShotSegmentation, budget_fraction: float):
    """Binarize importance scores through shot-level knapsack selection.

    Shot scores are frame-score means; shots are chosen by exact 0/1
    knapsack under a floor(budget_fraction * k) frame budget; all frames of
    chosen shots are marked 1. Returns (binary per-frame selection, flag
    set when the budget is too small for any shot).
    """
    if not 0 < budget_fraction < 1:
        raise ValueError(f"budget fraction must be in (0,1), got {budget_fraction}")
    x = np.asarray(x, dtype=float)
    k = segments.n_frames
    capacity = int(math.floor(budget_fraction * k))
    shot_scores = frame_to_shot_scores(x, segments)
    lengths = segments.lengths()
    degenerate = capacity < int(lengths.min())
    chosen = [] if degenerate else knapsack_select(shot_scores, lengths, capacity)
    mask = np.zeros(k, dtype=np.int8)
    for i in chosen:
        a, b = segments.intervals[i]
        mask[a:b] = 1
    return mask, degenerate
