"""AdamW with decoupled weight decay, cosine warmup schedule, gradient checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fnmatch import fnmatch

import numpy as np

from .params import ParamStore


class OptimError(RuntimeError):
    pass


class GradCheckError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    """Per-parameter first/second moments plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def resolve_lr(lr, name: str) -> float:
    """lr may be a float or an ordered {pattern: lr} mapping."""
    if isinstance(lr, dict):
        for pat, value in lr.items():
            if fnmatch(name, pat):
                return float(value)
        return 0.0
    return float(lr)


def clip_global_norm(store: ParamStore, max_norm: float) -> float:
    """Scale trainable grads so their global L2 norm is at most max_norm."""
    total = 0.0
    grads = [p.grad for p in store if p.trainable]
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for g in grads:
            g *= factor
    return norm


def adamw_step(store: ParamStore, state: OptimizerState, lr) -> None:
    """One decoupled-weight-decay update over the trainable params.

    Frozen params are untouched (values, moments, everything). lr may be a
    {pattern: lr} mapping for per-group rates.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p in store:
        if not p.trainable:
            continue
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise OptimError(f"non-finite gradient in parameter {p.name!r} at step {t}")
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.values)
        v = state.v.get(p.name)
        if v is None:
            v = state.v[p.name] = np.zeros_like(p.values)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step_lr = resolve_lr(lr, p.name)
        if step_lr == 0.0:
            continue
        mhat = m / bc1
        vhat = v / bc2
        p.values -= step_lr * (mhat / (np.sqrt(vhat) + state.eps))
        if state.weight_decay:
            p.values -= step_lr * state.weight_decay * p.values


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""

    base_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if self.base_lr < 0:
            raise ValueError("base_lr must be >= 0")
        if not (0 <= self.warmup_steps <= self.total_steps):
            raise ValueError("need 0 <= warmup_steps <= total_steps")


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 0 or step > schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    if schedule.warmup_steps > 0 and step < schedule.warmup_steps:
        return schedule.base_lr * step / schedule.warmup_steps
    span = max(1, schedule.total_steps - schedule.warmup_steps)
    progress = (step - schedule.warmup_steps) / span
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def grad_check(loss_fn, store: ParamStore, *, eps: float = 1e-4, samples: int = 4,
               seed: int = 0, include: list | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(store) must return (scalar loss Tensor, ParamTensors); runs are
    performed on a float64 copy of the store. Frozen params are excluded.
    """
    work = store.astype(np.float64)
    work.zero_grads()
    loss, pt = loss_fn(work)
    if not np.isfinite(loss.data):
        raise GradCheckError("loss is non-finite at the unperturbed point")
    loss.backward()
    pt.harvest()

    rng = np.random.default_rng(seed)
    params = work.match(include) if include is not None else list(work)
    worst = 0.0
    for p in params:
        if not p.trainable:
            continue
        n = p.values.size
        k = min(samples, n)
        idxs = rng.choice(n, size=k, replace=False)
        for idx in idxs:
            orig = p.values.flat[idx]
            p.values.flat[idx] = orig + eps
            f_plus = loss_fn(work)[0].item()
            p.values.flat[idx] = orig - eps
            f_minus = loss_fn(work)[0].item()
            p.values.flat[idx] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise GradCheckError(f"non-finite loss while perturbing {p.name!r}[{idx}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = float(p.grad.flat[idx])
            rel = abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))
            if rel > worst:
                worst = rel
    return worst
