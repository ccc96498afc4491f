"""Exact identities for discrete mutual information and the variational
discriminator bound, verified numerically on small alphabets.

All quantities are in nats. The convention 0*log(0) = 0 applies throughout,
and conditionals on zero-probability events contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ATOL_DIST = 1e-12
LN2 = float(np.log(2.0))


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteJoint:
    """Joint distribution over two finite alphabets as an (n, m) matrix."""
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.ndim != 2:
            raise DistributionError(f"joint must be a matrix, got shape {p.shape}")
        if np.any(p < 0):
            raise DistributionError("joint entries must be nonnegative")
        if abs(p.sum() - 1.0) > _ATOL_DIST:
            raise DistributionError(f"joint must sum to 1, got {p.sum()!r}")

    def marginal_rows(self) -> np.ndarray:
        return self.p.sum(axis=1)

    def marginal_cols(self) -> np.ndarray:
        return self.p.sum(axis=0)

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator) -> "DiscreteJoint":
        raw = rng.random((n, m))
        return cls(raw / raw.sum())

    @classmethod
    def product(cls, pr: np.ndarray, pc: np.ndarray) -> "DiscreteJoint":
        return cls(np.outer(np.asarray(pr, float), np.asarray(pc, float)))


@dataclass(frozen=True)
class DiscretePair:
    """Two probability vectors on a shared alphabet."""
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        for name, v in (("p", p), ("q", q)):
            if v.ndim != 1:
                raise DistributionError(f"{name} must be a vector")
            if np.any(v < 0):
                raise DistributionError(f"{name} entries must be nonnegative")
            if abs(v.sum() - 1.0) > _ATOL_DIST:
                raise DistributionError(f"{name} must sum to 1, got {v.sum()!r}")
        if p.shape != q.shape:
            raise DistributionError(f"p and q live on different alphabets: {p.shape} vs {q.shape}")

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "DiscretePair":
        a, b = rng.random(n), rng.random(n)
        return cls(a / a.sum(), b / b.sum())


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x*log(y) with 0*log(anything) = 0."""
    out = np.zeros_like(x, dtype=float)
    nz = x > 0
    out[nz] = x[nz] * np.log(y[nz])
    return out


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p||q) in nats; infinite when p puts mass where q has none."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if np.any((p > 0) & (q == 0)):
        return float("inf")
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def mutual_information(joint: DiscreteJoint) -> float:
    """I = sum_{o,s} p(o,s) log(p(o,s) / (p(o)p(s)))."""
    pr = joint.marginal_rows()
    pc = joint.marginal_cols()
    denom = np.outer(pr, pc)
    nz = joint.p > 0
    return float(np.sum(joint.p[nz] * np.log(joint.p[nz] / denom[nz])))


def conditional_kl_form(joint: DiscreteJoint, anchor: str = "rows") -> float:
    """Mutual information as an expected conditional KL.

    anchor='rows': sum_o p(o) KL(p(s|o) || p(s)); anchor='cols' swaps roles.
    Zero-probability conditions contribute nothing.
    """
    p = joint.p if anchor == "rows" else joint.p.T
    marg_a = p.sum(axis=1)
    marg_b = p.sum(axis=0)
    total = 0.0
    for i in range(p.shape[0]):
        if marg_a[i] == 0:
            continue
        cond = p[i] / marg_a[i]
        total += marg_a[i] * kl_divergence(cond, marg_b)
    return float(total)


def verify_symmetric_decomposition(joint: DiscreteJoint):
    """Direct mutual information vs the symmetric half-sum of the two
    anchored conditional-KL forms. Returns (lhs, rhs, |lhs-rhs|)."""
    lhs = mutual_information(joint)
    rhs = 0.5 * (conditional_kl_form(joint, "rows") + conditional_kl_form(joint, "cols"))
    return lhs, rhs, abs(lhs - rhs)


def fenchel_log_conjugate(t: float) -> float:
    """Convex conjugate sup_u {u*t + log u} = -1 - log(-t), defined for t < 0.

    (Equivalently the Fenchel conjugate of u -> -log u; for t >= 0 the
    supremum diverges.)
    """
    if t >= 0:
        raise DistributionError(f"conjugate domain is t < 0, got {t}")
    return -1.0 - float(np.log(-t))


def fenchel_grid_sup(t: float, n_grid: int = 50000, lo: float = 1e-8, hi: float = 1e8) -> float:
    """Grid-search oracle: maximize u*t + log u over a log-spaced u grid."""
    if t >= 0:
        raise DistributionError(f"conjugate domain is t < 0, got {t}")
    u = np.logspace(np.log10(lo), np.log10(hi), n_grid)
    return float(np.max(u * t + np.log(u)))


def gan_bound_value(pair: DiscretePair, T: np.ndarray) -> float:
    """sum_x p(x) log T(x) + sum_x q(x) log(1 - T(x)) for T strictly in (0,1)."""
    T = np.asarray(T, dtype=float)
    if T.shape != pair.p.shape:
        raise DistributionError(f"T must match the alphabet, got {T.shape}")
    if np.any(T <= 0) or np.any(T >= 1):
        raise DistributionError("T must lie strictly inside (0,1)")
    return float(np.sum(_xlogy(pair.p, T)) + np.sum(_xlogy(pair.q, 1.0 - T)))


def jensen_shannon(pair: DiscretePair) -> float:
    m = 0.5 * (pair.p + pair.q)
    return 0.5 * kl_divergence(pair.p, m) + 0.5 * kl_divergence(pair.q, m)


def gan_bound_sup(pair: DiscretePair):
    """Pointwise supremum of the discriminator objective.

    Maximizer T*(x) = p/(p+q); value equals -2 ln 2 + 2 JSD(p||q). Returns
    (sup_value, T_star, identity_value); the closed form and the identity
    must agree to 1e-10 (asserted here).
    """
    p, q = pair.p, pair.q
    denom = p + q
    if np.any(denom <= 0):
        # alphabet points carried by neither distribution contribute nothing
        keep = denom > 0
        p, q, denom = p[keep], q[keep], denom[keep]
    t_star = p / denom
    value = float(np.sum(_xlogy(p, t_star)) + np.sum(_xlogy(q, 1.0 - t_star)))
    identity = -2.0 * LN2 + 2.0 * jensen_shannon(pair)
    if abs(value - identity) > 1e-10:
        raise AssertionError(
            f"sup closed form {value!r} and JSD identity {identity!r} disagree")
    full_t = np.full(pair.p.shape, 0.5)
    full_t[np.asarray(pair.p + pair.q) > 0] = t_star
    return value, full_t, identity


def search_kl_bound_counterexamples(n_pairs: int, alphabet: int,
                                    rng: np.random.Generator):
    """Probe the claim that the negated discriminator supremum upper-bounds
    KL(p||q). Since -sup <= 2 ln 2 while KL is unbounded, counterexamples
    exist; this returns (count, worst (kl, bound, pair)) for transparency
    reporting."""
    count = 0
    worst = None
    for _ in range(n_pairs):
        pair = DiscretePair.random(alphabet, rng)
        kl = kl_divergence(pair.p, pair.q)
        sup, _, _ = gan_bound_sup(pair)
        bound = -sup
        if kl > bound + 1e-12:
            count += 1
            if worst is None or kl - bound > worst[0] - worst[1]:
                worst = (kl, bound, pair)
    # a deterministic extreme case so the report always has one example
    p = np.array([0.999] + [0.001 / (alphabet - 1)] * (alphabet - 1))
    q = np.array([0.001 / (alphabet - 1)] * (alphabet - 1) + [0.999])
    pair = DiscretePair(p / p.sum(), q / q.sum())
    kl = kl_divergence(pair.p, pair.q)
    sup, _, _ = gan_bound_sup(pair)
    if kl > -sup + 1e-12:
        count += 1
        if worst is None or kl - (-sup) > worst[0] - worst[1]:
            worst = (kl, -sup, pair)
    return count, worst
