"""Contrastive losses over two embedding views of the same batch.

Given aligned views h1, h2 of shape (B, T, d), a strategy selects which
pairings contribute terms:

- instance: at each timestep, an embedding attracts its counterpart in the
  other view and repels other instances (both views).
- temporal: within each instance, a timestep attracts its counterpart (and,
  with adjacency on, its own neighbours t-1/t+1) and repels distant
  timesteps in both views.
- cross_scale: after hierarchical pooling, a coarse embedding attracts the
  fine-level window it was pooled from and repels other positions of the
  same instance.

All pairings share one masked log-sum-exp core for the InfoNCE form and one
positive-slot expansion for the triplet form, so excluded pairs (self
similarities, adjacency exclusions) contribute exact zeros with exact zero
gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import numerics as nm
from .errors import ConfigError
from .space import Strategy

TRIPLET_MARGIN = 1.0
# shifting an excluded logit to -750 makes exp underflow to exactly 0.0
EXCLUDE_SHIFT = 750.0


def _wrap_pair(h1, h2) -> tuple[nm.Tensor, nm.Tensor]:
    if isinstance(h1, nm.Tensor) and isinstance(h2, nm.Tensor):
        if h1.tape is not h2.tape:
            raise ConfigError("view tensors must live on the same tape")
        t1, t2 = h1, h2
    else:
        tape = nm.Tape()
        t1 = h1 if isinstance(h1, nm.Tensor) else tape.constant(np.asarray(h1, dtype=np.float64))
        t2 = h2 if isinstance(h2, nm.Tensor) else t1.tape.constant(np.asarray(h2, dtype=np.float64))
    if t1.data.shape != t2.data.shape:
        raise ConfigError(f"views must share a shape, got {t1.data.shape} vs {t2.data.shape}")
    if t1.ndim != 3:
        raise ConfigError(f"views must be (batch, time, dim), got shape {t1.data.shape}")
    return t1, t2


def similarity(a, b, kind: str) -> nm.Tensor:
    """Similarity of two d-vectors: dot product, cosine, or negative distance."""
    if not isinstance(a, nm.Tensor):
        tape = b.tape if isinstance(b, nm.Tensor) else nm.Tape()
        a = tape.constant(np.asarray(a, dtype=np.float64))
    if not isinstance(b, nm.Tensor):
        b = a.tape.constant(np.asarray(b, dtype=np.float64))
    if kind == "dot":
        return nm.sum_(nm.multiply(a, b))
    if kind == "cos":
        num = nm.sum_(nm.multiply(a, b))
        na = nm.sqrt(nm.sum_(nm.multiply(a, a)))
        nb = nm.sqrt(nm.sum_(nm.multiply(b, b)))
        return nm.divide(num, nm.add(nm.multiply(na, nb), 1e-12))
    if kind == "dist":
        diff = nm.sub(a, b)
        return nm.negate(nm.sqrt(nm.sum_(nm.multiply(diff, diff))))
    raise ConfigError(f"unknown similarity {kind!r}")


def _pairwise(ha: nm.Tensor, hb: nm.Tensor, kind: str) -> nm.Tensor:
    """All-pairs similarities over the second-to-last axis: (..., P, d) x (..., Q, d) -> (..., P, Q).

    The distance form expands ||a-b||^2 = |a|^2 + |b|^2 - 2ab to stay at
    matrix-sized intermediates; relu clips the tiny negatives float error
    can produce for near-identical vectors.
    """
    nd = ha.ndim
    swap = tuple(range(nd - 2)) + (nd - 1, nd - 2)
    dots = nm.matmul(ha, nm.transpose(hb, swap))
    if kind == "dot":
        return dots
    na = nm.sum_(nm.multiply(ha, ha), axis=-1, keepdims=True)
    nb = nm.transpose(nm.sum_(nm.multiply(hb, hb), axis=-1, keepdims=True), swap)
    if kind == "cos":
        denom = nm.add(nm.multiply(nm.sqrt(na), nm.sqrt(nb)), 1e-12)
        return nm.divide(dots, denom)
    if kind == "dist":
        sq = nm.relu(nm.sub(nm.add(na, nb), nm.multiply(dots, 2.0)))
        return nm.negate(nm.sqrt(sq))
    raise ConfigError(f"unknown similarity {kind!r}")


@dataclass
class ScaleStack:
    """Embeddings pooled to progressively coarser time resolutions."""

    levels: list[nm.Tensor]
    kernel: int

    @property
    def lengths(self) -> list[int]:
        return [lvl.data.shape[1] for lvl in self.levels]


def hierarchical_scales(h: nm.Tensor, kernel: int, pool: str) -> ScaleStack:
    """Pool the time axis by `kernel` (ceil division) until one step remains.

    kernel 0 keeps only the original resolution.
    """
    if kernel not in (0, 2, 3, 5):
        raise ConfigError(f"pooling kernel {kernel!r} is off grid (0, 2, 3, 5)")
    levels = [h]
    if kernel >= 2:
        while levels[-1].data.shape[1] > 1:
            levels.append(nm.pool1d(levels[-1], kernel, pool))
    return ScaleStack(levels, kernel)


# each "part" is one logits tensor plus boolean masks marking which entries of
# its trailing axis act as positives / negatives for the anchors on the
# remaining axes; masks broadcast against the logits shape
Part = tuple[nm.Tensor, np.ndarray, np.ndarray]


def _masked_max(data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    full = np.broadcast_to(mask, data.shape)
    return np.where(full, data, -np.inf).max(axis=-1)


def _infonce_per_anchor(parts: list[Part], tau: float) -> nm.Tensor:
    """Per-anchor -log(sum_pos e^{s/tau} / sum_pos+neg e^{s/tau}).

    Numerator and denominator each get their own log-sum-exp shift so both
    logs stay finite at any temperature; every anchor must have at least one
    positive somewhere across the parts.
    """
    inv_tau = 1.0 / tau
    scaled = [nm.multiply(logits, inv_tau) for logits, _, _ in parts]
    c_den = reduce(np.maximum, [_masked_max(s.data, p | n) for s, (_, p, n) in zip(scaled, parts)])
    c_num = reduce(np.maximum, [_masked_max(s.data, p) for s, (_, p, _) in zip(scaled, parts)])
    if not np.all(np.isfinite(c_num)):
        raise ConfigError("every anchor needs at least one positive")

    den_terms = []
    num_terms = []
    for s, (_, pos, neg) in zip(scaled, parts):
        allowed = np.broadcast_to(pos | neg, s.data.shape)
        pos_full = np.broadcast_to(pos, s.data.shape)
        den_shift = np.where(allowed, -c_den[..., None], -s.data - EXCLUDE_SHIFT)
        num_shift = np.where(pos_full, -c_num[..., None], -s.data - EXCLUDE_SHIFT)
        den_terms.append(nm.sum_(nm.exp(nm.add(s, s.tape.constant(den_shift))), axis=-1))
        num_terms.append(nm.sum_(nm.exp(nm.add(s, s.tape.constant(num_shift))), axis=-1))
    tape = scaled[0].tape
    den = nm.add(nm.log(reduce(nm.add, den_terms)), tape.constant(c_den))
    num = nm.add(nm.log(reduce(nm.add, num_terms)), tape.constant(c_num))
    return nm.sub(den, num)


# a "slot" is one structured positive position per anchor: a one-hot row mask
# selecting the positive inside a logits tensor, plus a per-anchor validity
# mask for anchors where that position exists (e.g. t-1 at the left edge)
Slot = tuple[nm.Tensor, np.ndarray, np.ndarray]


def _triplet_sums(slots: list[Slot], negs: list[tuple[nm.Tensor, np.ndarray]], tau: float) -> tuple[nm.Tensor, float]:
    """Sum of hinge losses max(0, margin + s_n/tau - s_p/tau) and triple count."""
    inv_tau = 1.0 / tau
    scaled: dict[int, nm.Tensor] = {}

    def get_scaled(t: nm.Tensor) -> nm.Tensor:
        if id(t) not in scaled:
            scaled[id(t)] = nm.multiply(t, inv_tau)
        return scaled[id(t)]

    total = None
    count = 0.0
    for slot_logits, onehot, valid in slots:
        sp = get_scaled(slot_logits)
        pos_val = nm.sum_(nm.multiply(sp, sp.tape.constant(onehot.astype(np.float64))), axis=-1)
        pos_col = nm.reshape(pos_val, pos_val.data.shape + (1,))
        for neg_logits, neg_mask in negs:
            sn = get_scaled(neg_logits)
            weight = np.broadcast_to(
                neg_mask.astype(np.float64) * valid[..., None], sn.data.shape
            ).copy()
            hinge = nm.relu(nm.add(nm.sub(sn, pos_col), TRIPLET_MARGIN))
            term = nm.sum_(nm.multiply(hinge, sn.tape.constant(weight)))
            total = term if total is None else nm.add(total, term)
            count += float(weight.sum())
    return total, count


def _instance_parts(h1: nm.Tensor, h2: nm.Tensor, kind: str):
    """Logits/masks for instance pairing, anchors taken from each view in turn."""
    b = h1.data.shape[0]
    swap_bt = (1, 0, 2)
    f1 = nm.transpose(h1, swap_bt)  # (T, B, d)
    f2 = nm.transpose(h2, swap_bt)
    l12 = _pairwise(f1, f2, kind)
    l21 = nm.transpose(l12, (0, 2, 1))
    l11 = _pairwise(f1, f1, kind)
    l22 = _pairwise(f2, f2, kind)
    eye = np.eye(b, dtype=bool)
    none = np.zeros((b, b), dtype=bool)
    view1 = [(l12, eye, ~eye), (l11, none, ~eye)]
    view2 = [(l21, eye, ~eye), (l22, none, ~eye)]
    return view1, view2, eye


def _temporal_masks(t: int, adjacency: bool):
    eye = np.eye(t, dtype=bool)
    adj = (np.eye(t, k=1) + np.eye(t, k=-1)).astype(bool)
    same_pos = adj if adjacency else np.zeros((t, t), dtype=bool)
    neg = ~(eye | adj) if adjacency else ~eye
    return eye, same_pos, neg


def _temporal_parts(h1: nm.Tensor, h2: nm.Tensor, kind: str, adjacency: bool):
    t = h1.data.shape[1]
    m12 = _pairwise(h1, h2, kind)  # (B, T, T)
    m21 = nm.transpose(m12, (0, 2, 1))
    m11 = _pairwise(h1, h1, kind)
    m22 = _pairwise(h2, h2, kind)
    eye, same_pos, neg = _temporal_masks(t, adjacency)
    view1 = [(m12, eye, neg), (m11, same_pos, neg)]
    view2 = [(m21, eye, neg), (m22, same_pos, neg)]
    return view1, view2, (eye, same_pos, neg)


def infonce_loss(h1, h2, strategy: Strategy, pairing: str) -> tuple[nm.Tensor | None, bool]:
    """Mean per-anchor InfoNCE over anchors from both views; (None, False) if
    the batch/window is too small for the pairing."""
    h1, h2 = _wrap_pair(h1, h2)
    b, t, _ = h1.data.shape
    tau = strategy.temperature
    if pairing == "instance":
        if b < 2:
            return None, False
        view1, view2, _ = _instance_parts(h1, h2, strategy.sim)
    elif pairing == "temporal":
        if t < 2:
            return None, False
        view1, view2, _ = _temporal_parts(h1, h2, strategy.sim, strategy.adjacent)
    else:
        raise ConfigError(f"unknown pairing {pairing!r}")
    per1 = _infonce_per_anchor(view1, tau)
    per2 = _infonce_per_anchor(view2, tau)
    return nm.multiply(nm.add(nm.mean(per1), nm.mean(per2)), 0.5), True


def triplet_loss(h1, h2, strategy: Strategy, pairing: str) -> tuple[nm.Tensor | None, bool]:
    """Mean hinge over every (anchor, positive, negative) triple from both views."""
    h1, h2 = _wrap_pair(h1, h2)
    b, t, _ = h1.data.shape
    tau = strategy.temperature
    if pairing == "instance":
        if b < 2:
            return None, False
        view1, view2, eye = _instance_parts(h1, h2, strategy.sim)
        ones = np.ones(b)

        def slots_for(parts):
            (cross, _, negm), (same, _, _) = parts
            return [(cross, eye, ones)], [(cross, negm), (same, negm)]

    elif pairing == "temporal":
        if t < 2:
            return None, False
        view1, view2, (eye, same_pos, negm) = _temporal_parts(h1, h2, strategy.sim, strategy.adjacent)
        below = np.eye(t, k=-1, dtype=bool)
        above = np.eye(t, k=1, dtype=bool)
        valid_below = (np.arange(t) >= 1).astype(np.float64)
        valid_above = (np.arange(t) <= t - 2).astype(np.float64)
        ones = np.ones(t)

        def slots_for(parts):
            (cross, _, _), (same, _, _) = parts
            slots = [(cross, np.eye(t, dtype=bool), ones)]
            if strategy.adjacent:
                slots.append((same, below, valid_below))
                slots.append((same, above, valid_above))
            return slots, [(cross, negm), (same, negm)]

    else:
        raise ConfigError(f"unknown pairing {pairing!r}")

    totals = []
    count = 0.0
    for parts in (view1, view2):
        slots, negs = slots_for(parts)
        part_sum, part_count = _triplet_sums(slots, negs, tau)
        totals.append(part_sum)
        count += part_count
    if count == 0.0:
        return None, False
    return nm.multiply(reduce(nm.add, totals), 1.0 / count), True


def _window_mask(coarse_len: int, fine_len: int, kernel: int) -> np.ndarray:
    mask = np.zeros((coarse_len, fine_len), dtype=bool)
    for t in range(coarse_len):
        mask[t, t * kernel : min((t + 1) * kernel, fine_len)] = True
    return mask


def cross_scale_loss(stack1: ScaleStack, stack2: ScaleStack, strategy: Strategy) -> tuple[nm.Tensor | None, bool]:
    """Coarse embeddings contrast against their own source window one level
    down, within the same instance and the same view; the two views' stacks
    are averaged. Needs at least two scale levels."""
    if len(stack1.levels) < 2 or len(stack2.levels) < 2:
        return None, False
    kernel = stack1.kernel
    tau = strategy.temperature
    stack_losses = []
    for stack in (stack1, stack2):
        per_anchor = []
        hinge_total = None
        hinge_count = 0.0
        for fine, coarse in zip(stack.levels, stack.levels[1:]):
            fine_len = fine.data.shape[1]
            coarse_len = coarse.data.shape[1]
            logits = _pairwise(coarse, fine, strategy.sim)  # (B, Tc, Ts)
            pos = _window_mask(coarse_len, fine_len, kernel)
            neg = ~pos
            if strategy.loss_type == "infonce":
                per = _infonce_per_anchor([(logits, pos, neg)], tau)
                per_anchor.append(nm.reshape(per, (per.data.size,)))
            else:
                slots = []
                for o in range(kernel):
                    onehot = np.zeros((coarse_len, fine_len), dtype=bool)
                    anchors = np.arange(coarse_len)
                    cols = anchors * kernel + o
                    ok = cols < fine_len
                    onehot[anchors[ok], cols[ok]] = True
                    slots.append((logits, onehot, ok.astype(np.float64)))
                part_sum, part_count = _triplet_sums(slots, [(logits, neg)], tau)
                if part_count > 0.0:
                    hinge_total = part_sum if hinge_total is None else nm.add(hinge_total, part_sum)
                    hinge_count += part_count
        if strategy.loss_type == "infonce":
            stack_losses.append(nm.mean(nm.concat(per_anchor, axis=0)))
        elif hinge_total is not None:
            stack_losses.append(nm.multiply(hinge_total, 1.0 / hinge_count))
        else:
            stack_losses.append(stack1.levels[0].tape.constant(np.float64(0.0)))
    return nm.multiply(nm.add(stack_losses[0], stack_losses[1]), 0.5), True


def strategy_loss(h1, h2, strategy: Strategy) -> nm.Tensor:
    """Mean of the applicable instance/temporal terms across scale levels,
    plus the cross-scale term when enabled.

    Raises if nothing applies (single instance, single timestep, no scales).
    """
    h1, h2 = _wrap_pair(h1, h2)
    loss_fn = infonce_loss if strategy.loss_type == "infonce" else triplet_loss
    stack1 = hierarchical_scales(h1, strategy.kernel, strategy.pool)
    stack2 = hierarchical_scales(h2, strategy.kernel, strategy.pool)

    terms = []
    for l1, l2 in zip(stack1.levels, stack2.levels):
        term, ok = loss_fn(l1, l2, strategy, "instance")
        if ok:
            terms.append(term)
        if strategy.temporal:
            term, ok = loss_fn(l1, l2, strategy, "temporal")
            if ok:
                terms.append(term)

    total = nm.multiply(reduce(nm.add, terms), 1.0 / len(terms)) if terms else None
    if strategy.cross_scale:
        cs, ok = cross_scale_loss(stack1, stack2, strategy)
        if ok:
            total = cs if total is None else nm.add(total, cs)
    if total is None:
        raise ConfigError("no contrast aspects applicable")
    return total
