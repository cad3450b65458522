"""Group-relative policy optimisation for the toy selection policy.

For each query a group of ``G`` outputs is sampled, rewards are centred on
the group mean, and the clipped importance-weighted surrogate minus a KL
penalty toward the frozen initial policy is maximised by gradient ascent.

The importance ratio's denominator is configurable. ``"reference"`` uses the
frozen initial policy, so clipping acts as a trust region around the
starting point. ``"behavior"`` uses the policy that drew the samples, which
makes each step the advantage-weighted log-likelihood gradient.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import GroupTooSmall, NonFiniteGradient
from .parsing import Parsed
from .rewards import RewardWeights, grounding_reward, total_reward
from .toy_policy import PolicyContext, ToySelectionPolicy

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "Rollout",
    "compute_advantages",
    "surrogate_term",
    "kl_bernoulli",
    "objective",
    "objective_grad",
    "train",
]

LOG_RATIO_CAP = 20.0
RATIO_BASELINES = ("reference", "behavior")


@dataclass
class TrainConfig:
    group_size: int = 8
    batch_size: int = 32
    learning_rate: float = 1e-2
    clip_epsilon: float = 0.2
    kl_coeff: float = 0.1
    steps: int = 200
    seed: int = 0
    ratio_baseline: str = "reference"

    def __post_init__(self):
        if self.group_size < 2:
            raise GroupTooSmall("group_size must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_coeff < 0:
            raise ValueError("kl_coeff must be nonnegative")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.ratio_baseline not in RATIO_BASELINES:
            raise ValueError(f"ratio_baseline must be one of {RATIO_BASELINES}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def compute_advantages(rewards: Sequence[float]) -> np.ndarray:
    """Group-relative advantages ``R_i - mean(R)``."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise GroupTooSmall(f"need at least 2 rewards per group, got {r.size}")
    return r - r.mean()


def surrogate_term(ratio: float, advantage: float, clip_epsilon: float = 0.2) -> float:
    """``min(r * A, clip(r, 1 - eps, 1 + eps) * A)``."""
    clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    return min(ratio * advantage, clipped * advantage)


def kl_bernoulli(p, q) -> np.ndarray:
    """Elementwise ``KL(Bern(p) || Bern(q))``."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, p * np.log(p / q), 0.0)
        b = np.where(p < 1, (1 - p) * np.log((1 - p) / (1 - q)), 0.0)
    return a + b


@dataclass(frozen=True)
class Rollout:
    """One sampled output with its reward and group-relative advantage."""

    context_index: int
    selection: frozenset[int]
    answer: str
    reward: float
    advantage: float


def _clipped_log_ratio(policy, base, sel, ctx) -> tuple[float, bool]:
    lr = policy.log_prob(sel, ctx) - base.log_prob(sel, ctx)
    if abs(lr) > LOG_RATIO_CAP:
        return math.copysign(LOG_RATIO_CAP, lr), True
    return lr, False


def objective(
    policy: ToySelectionPolicy,
    ref: ToySelectionPolicy,
    contexts: Sequence[PolicyContext],
    rollouts: Sequence[Rollout],
    config: TrainConfig,
    behavior: ToySelectionPolicy | None = None,
) -> float:
    """Per-step objective for fixed samples: mean clipped surrogate minus ``kl_coeff`` times mean KL.

    The ratio is taken against ``behavior`` when given, else against ``ref``.
    """
    base = behavior if behavior is not None else ref
    groups: dict[int, list[Rollout]] = {}
    for r in rollouts:
        groups.setdefault(r.context_index, []).append(r)
    total = 0.0
    for ci, group in groups.items():
        ctx = contexts[ci]
        surr = 0.0
        for r in group:
            lr, _ = _clipped_log_ratio(policy, base, r.selection, ctx)
            surr += surrogate_term(math.exp(lr), r.advantage, config.clip_epsilon)
        total += surr / len(group) - config.kl_coeff * policy.kl(ref, ctx)
    return total / len(groups)


def objective_grad(
    policy: ToySelectionPolicy,
    ref: ToySelectionPolicy,
    contexts: Sequence[PolicyContext],
    rollouts: Sequence[Rollout],
    config: TrainConfig,
    behavior: ToySelectionPolicy | None = None,
) -> np.ndarray:
    """Analytic gradient of :func:`objective` with respect to ``policy.theta``."""
    base = behavior if behavior is not None else ref
    groups: dict[int, list[Rollout]] = {}
    for r in rollouts:
        groups.setdefault(r.context_index, []).append(r)
    grad = np.zeros_like(policy.theta)
    eps = config.clip_epsilon
    for ci, group in groups.items():
        ctx = contexts[ci]
        g = np.zeros_like(policy.theta)
        for r in group:
            lr, saturated = _clipped_log_ratio(policy, base, r.selection, ctx)
            ratio = math.exp(lr)
            if saturated or r.advantage == 0.0:
                continue
            # the unclipped branch carries gradient only while it is the active minimum;
            # written as a negation so a NaN advantage propagates instead of vanishing
            clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
            if not ratio * r.advantage > clipped * r.advantage:
                g += r.advantage * ratio * policy.grad_log_prob(r.selection, ctx)
        grad += g / len(group) - config.kl_coeff * policy.grad_kl(ref, ctx)
    return grad / len(groups)


@dataclass
class TrainResult:
    policy: ToySelectionPolicy
    reference: ToySelectionPolicy
    metrics: list[dict] = field(default_factory=list)


RewardFn = Callable[[Parsed, PolicyContext], float]


def _default_reward(weights: RewardWeights) -> RewardFn:
    def fn(out: Parsed, ctx: PolicyContext) -> float:
        return total_reward(out, ctx.query, ctx.bank, weights).total

    return fn


def _batch_indices(n: int, config: TrainConfig, step: int) -> np.ndarray:
    rng = np.random.default_rng([config.seed, step])
    size = min(config.batch_size, n)
    return np.sort(rng.choice(n, size=size, replace=False))


def train(
    contexts: Sequence[PolicyContext],
    policy: ToySelectionPolicy,
    config: TrainConfig | None = None,
    weights: RewardWeights | None = None,
    reward_fn: RewardFn | None = None,
    metrics_path: str | Path | None = None,
    snapshot_path: str | Path | None = None,
) -> TrainResult:
    """Run ``config.steps`` GRPO updates on ``policy`` in place.

    Sampling uses ``np.random.default_rng([seed, step, query, rollout])``
    so runs are bit-identical for a fixed seed. Rewards are memoised per
    (query, selection, answer) since they are pure.
    """
    config = config or TrainConfig()
    if not contexts:
        raise ValueError("no training contexts")
    reward_fn = reward_fn or _default_reward(weights or RewardWeights())
    ref = policy.copy()
    cache: dict[tuple, float] = {}
    metrics: list[dict] = []
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for step in range(config.steps):
            rollouts: list[Rollout] = []
            jacc = []
            for ci in _batch_indices(len(contexts), config, step):
                ci = int(ci)
                ctx = contexts[ci]
                outs = []
                for j in range(config.group_size):
                    rng = np.random.default_rng([config.seed, step, ci, j])
                    outs.append(policy.sample(ctx, rng))
                rewards = []
                for out in outs:
                    key = (ci, out.selection, out.answer)
                    if key not in cache:
                        cache[key] = reward_fn(out, ctx)
                    rewards.append(cache[key])
                    jacc.append((grounding_reward(out.selection, ctx.query.gold_evidence) + 1) / 2)
                adv = compute_advantages(rewards)
                rollouts.extend(
                    Rollout(ci, o.selection, o.answer, r, float(a)) for o, r, a in zip(outs, rewards, adv)
                )
            batch = sorted({r.context_index for r in rollouts})
            behavior = policy.copy() if config.ratio_baseline == "behavior" else None
            grad = objective_grad(policy, ref, contexts, rollouts, config, behavior)
            kl = float(np.mean([policy.kl(ref, contexts[ci]) for ci in batch]))
            row = {
                "step": step,
                "mean_reward": float(np.mean([r.reward for r in rollouts])),
                "kl": kl,
                "selection_jaccard": float(np.mean(jacc)),
                "grad_norm": float(np.linalg.norm(grad)),
            }
            if not np.all(np.isfinite(grad)):
                raise NonFiniteGradient(step, {"grad": grad.tolist(), "theta": policy.theta.tolist(), **row})
            policy.theta = policy.theta + config.learning_rate * grad
            metrics.append(row)
            if sink:
                sink.write(json.dumps(row) + "\n")
            log.debug("step %d reward %.4f kl %.5f", step, row["mean_reward"], kl)
    finally:
        if sink:
            sink.close()
    if snapshot_path is not None:
        snap = {"policy": policy.to_dict(), "reference": ref.to_dict(), "config": asdict(config)}
        Path(snapshot_path).write_text(json.dumps(snap, indent=1) + "\n", encoding="utf-8")
    return TrainResult(policy, ref, metrics)
