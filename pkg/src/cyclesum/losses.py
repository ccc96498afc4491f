"""Training losses and the weighted overall objective.

Terms (all scalars): sparsity on the importance scores, per-generator
prior KL and feature-space reconstruction, critic/generator adversarial
scores, and L1 cycle consistency. Ablation toggles zero individual terms
out of the total (and out of the graph, so disabled terms contribute no
gradients).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass
class LossWeights:
    """Weighted-sum coefficients and ablation toggles.

    adversarial/generative/cycle are the three balance hyperparameters;
    sparsity_target is the training summary-length fraction.
    """
    adversarial: float = 1.0
    generative: float = 0.5
    cycle: float = 10.0
    sparsity_target: float = 0.3
    enable_gan_f: bool = True
    enable_gan_b: bool = True
    enable_cycle_f: bool = True
    enable_cycle_b: bool = True
    # single-GAN variant: no backward generator/critic at all
    enable_backward_path: bool = True

    def __post_init__(self):
        if self.adversarial < 0 or self.generative < 0 or self.cycle < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0 < self.sparsity_target < 1:
            raise ValueError(f"sparsity target must be in (0,1), got {self.sparsity_target}")
        if not self.enable_backward_path:
            # nothing produced by the backward generator can be penalized
            self.enable_gan_b = False
            self.enable_cycle_f = False
            self.enable_cycle_b = False


VARIANTS = ("cycle-sum", "c", "1g", "2g", "gf", "gb")


def variant_weights(name: str, base: LossWeights | None = None) -> LossWeights:
    """Ablation presets. `name` is one of VARIANTS (full model = 'cycle-sum')."""
    b = base or LossWeights()
    w = LossWeights(b.adversarial, b.generative, b.cycle, b.sparsity_target)
    key = name.lower().removeprefix("cycle-sum").lstrip("-") or "cycle-sum"
    if key == "cycle-sum":
        pass
    elif key == "c":
        w.enable_gan_f = w.enable_gan_b = False
    elif key == "2g":
        w.enable_cycle_f = w.enable_cycle_b = False
    elif key == "1g":
        w.enable_backward_path = False
        w.enable_gan_b = w.enable_cycle_f = w.enable_cycle_b = False
    elif key == "gf":
        w.enable_cycle_b = False
    elif key == "gb":
        w.enable_cycle_f = False
    else:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return w


@dataclass
class LossBreakdown:
    """Scalar value of every loss term for one step."""
    sparsity: float = 0.0
    prior_f: float = 0.0
    prior_b: float = 0.0
    recon_f: float = 0.0
    recon_b: float = 0.0
    gan_f: float = 0.0
    gan_b: float = 0.0
    cycle_f: float = 0.0
    cycle_b: float = 0.0
    total: float = 0.0

    FIELD_ORDER = ("sparsity", "prior_f", "prior_b", "recon_f", "recon_b",
                   "gan_f", "gan_b", "cycle_f", "cycle_b", "total")

    def to_csv_line(self, step: int) -> str:
        vals = [getattr(self, f) for f in self.FIELD_ORDER]
        return ",".join([str(step)] + [repr(float(v)) for v in vals])

    @classmethod
    def from_csv_line(cls, line: str):
        parts = line.strip().split(",")
        step = int(parts[0])
        vals = [float(p) for p in parts[1:]]
        return step, cls(**dict(zip(cls.FIELD_ORDER, vals)))


def sparsity_loss(x: Tensor, target: float):
    """|mean(x) - target|: deviation of the mean importance score."""
    if isinstance(x, Tensor):
        return ad.absolute(ad.sub(ad.mean_(x), target))
    return abs(float(np.mean(x)) - target)


def prior_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)) in closed form."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu/logvar shapes differ: {mu.shape} vs {logvar.shape}")
    inner = ad.sub(ad.add(ad.square(mu), ad.exp(logvar)), ad.add(logvar, 1.0))
    return ad.mul(ad.sum_(inner), 0.5)


def recon_loss(phi_real: Tensor, phi_fake: Tensor, k: int) -> Tensor:
    """Feature-space reconstruction: ||phi_real - phi_fake||_2 / k."""
    if phi_real.shape != phi_fake.shape:
        raise ShapeError(f"phi shapes differ: {phi_real.shape} vs {phi_fake.shape}")
    return ad.mul(ad.sqrt(ad.sum_(ad.square(ad.sub(phi_real, phi_fake)))), 1.0 / k)


def wgan_losses(score_real, score_fake):
    """(critic_objective, generator_loss).

    The critic ascends real-minus-fake; the generator descends -fake, which
    has the same generator gradient as the full gap without coupling to the
    real-sample score.
    """
    return score_real - score_fake, -score_fake


def cycle_loss(seq_a: Tensor, seq_b: Tensor) -> Tensor:
    """L1 cycle consistency: sum(|a - b|) / k."""
    if seq_a.shape != seq_b.shape:
        raise ShapeError(f"cycle sequences differ in shape: {seq_a.shape} vs {seq_b.shape}")
    k = seq_a.shape[0]
    return ad.mul(ad.sum_(ad.absolute(ad.sub(seq_a, seq_b))), 1.0 / k)


def combine_total(weights: LossWeights, sparsity, prior_f=None, prior_b=None,
                  recon_f=None, recon_b=None, gan_f=None, gan_b=None,
                  cycle_f=None, cycle_b=None):
    """Weighted sum of enabled terms. Works on graph tensors and on plain
    floats alike; disabled or missing terms contribute nothing (for tensors
    that also means no gradient)."""
    lam1, lam2, lam3 = weights.adversarial, weights.generative, weights.cycle
    total = sparsity
    if weights.enable_gan_f and gan_f is not None:
        total = total + lam1 * gan_f
    if weights.enable_gan_b and gan_b is not None:
        total = total + lam1 * gan_b
    if prior_f is not None:
        total = total + lam2 * (prior_f + recon_f)
    if weights.enable_backward_path and prior_b is not None:
        total = total + lam2 * (prior_b + recon_b)
    if weights.enable_cycle_f and cycle_f is not None:
        total = total + lam3 * cycle_f
    if weights.enable_cycle_b and cycle_b is not None:
        total = total + lam3 * cycle_b
    return total


def total_loss(cycle_pass, weights: LossWeights) -> LossBreakdown:
    """Assemble the overall objective from a populated cycle pass.

    Returns the per-term scalar breakdown; the differentiable total is
    attached as ``breakdown.total_node``.
    """
    p = cycle_pass
    k = p.o.shape[0]
    sparsity = sparsity_loss(p.x, weights.sparsity_target)
    prior_f = prior_kl(p.mu_f, p.logvar_f)
    recon_f = recon_loss(p.phi_o, p.phi_o_hat, k)
    _, gan_f = wgan_losses(p.score_o, p.score_o_hat)

    prior_b = recon_b = gan_b = cycle_f = cycle_b = None
    if weights.enable_backward_path:
        if p.mu_b is None:
            raise ValueError("backward path enabled but the pass has no backward outputs")
        prior_b = prior_kl(p.mu_b, p.logvar_b)
        recon_b = recon_loss(p.phi_s, p.phi_s_hat, k)
        _, gan_b = wgan_losses(p.score_s, p.score_s_hat)
    if weights.enable_cycle_f:
        if p.s_cycle is None:
            raise ValueError("cycle_f enabled but s_cycle missing from the pass")
        cycle_f = cycle_loss(p.s_cycle, p.s)
    if weights.enable_cycle_b:
        if p.o_cycle is None:
            raise ValueError("cycle_b enabled but o_cycle missing from the pass")
        cycle_b = cycle_loss(p.o_cycle, p.o)

    total_node = combine_total(weights, sparsity, prior_f, prior_b, recon_f,
                               recon_b, gan_f, gan_b, cycle_f, cycle_b)

    def val(t, enabled=True):
        return t.item() if (t is not None and enabled) else 0.0

    breakdown = LossBreakdown(
        sparsity=sparsity.item(),
        prior_f=val(prior_f),
        prior_b=val(prior_b),
        recon_f=val(recon_f),
        recon_b=val(recon_b),
        gan_f=val(gan_f, weights.enable_gan_f),
        gan_b=val(gan_b, weights.enable_gan_b),
        cycle_f=val(cycle_f),
        cycle_b=val(cycle_b),
        total=total_node.item(),
    )
    breakdown.total_node = total_node
    return breakdown
