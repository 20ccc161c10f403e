"""Data augmentations for raw series and view-pair construction.

Six augmentations operate on (B, T, c) float arrays: time-warp resize,
amplitude rescale, additive jitter, timestep masking, frequency-bin masking,
and random cropping. ``make_view_pair`` applies them in one of five fixed
orders; stages ordered before the crop run once on the shared series (so the
two crops carve views out of identical data and the overlap region matches
elementwise), and stages after the crop are drawn independently per view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .space import Strategy, validate

Array = np.ndarray

# stage order per aug_order id; the crop position is the only thing that moves
# among orders 1-5 except order 5, which also swaps resize/rescale around it
AUG_ORDERS: dict[int, tuple[str, ...]] = {
    1: ("resize", "rescale", "freq_mask", "jitter", "point_mask", "crop"),
    2: ("resize", "rescale", "freq_mask", "jitter", "crop", "point_mask"),
    3: ("resize", "rescale", "freq_mask", "crop", "jitter", "point_mask"),
    4: ("resize", "rescale", "crop", "freq_mask", "jitter", "point_mask"),
    5: ("resize", "crop", "rescale", "freq_mask", "jitter", "point_mask"),
}


@dataclass
class ViewPair:
    """Two augmented views plus where their shared segment sits in each."""

    view1: Array
    view2: Array
    align1: int
    align2: int
    common_len: int

    def common_segments(self) -> tuple[Array, Array]:
        c1 = self.view1[:, self.align1 : self.align1 + self.common_len]
        c2 = self.view2[:, self.align2 : self.align2 + self.common_len]
        return c1, c2


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 0.95:
        raise ConfigError(f"augmentation strength must be in [0, 0.95], got {p}")
    return p


def resize(x: Array, p: float, rng: np.random.Generator) -> Array:
    """Per-instance time warp: resample to T' = max(2, round(T*(1+n))) and back,
    n ~ N(0, p) clipped to [-0.5, 0.5]. Linear interpolation both ways."""
    p = _check_p(p)
    if p == 0.0:
        return x
    B, T, c = x.shape
    if T < 2:
        raise DataError("resize needs at least 2 timesteps")
    n = np.clip(rng.normal(0.0, p, size=B), -0.5, 0.5)
    out = np.empty_like(x)
    base = np.arange(T, dtype=np.float64)
    for b in range(B):
        T2 = max(2, int(np.round(T * (1.0 + n[b]))))
        down = np.linspace(0.0, T - 1, T2)
        up = np.linspace(0.0, T2 - 1, T)
        mid_base = np.arange(T2, dtype=np.float64)
        for ch in range(c):
            mid = np.interp(down, base, x[b, :, ch])
            out[b, :, ch] = np.interp(up, mid_base, mid)
    return out


def rescale(x: Array, p: float, rng: np.random.Generator) -> Array:
    """Per-instance amplitude scaling by (1+n), n ~ N(0, p)."""
    p = _check_p(p)
    if p == 0.0:
        return x
    n = rng.normal(0.0, p, size=x.shape[0])
    return x * (1.0 + n)[:, None, None]


def jitter(x: Array, p: float, rng: np.random.Generator) -> Array:
    """Elementwise additive Gaussian noise with std p."""
    p = _check_p(p)
    if p == 0.0:
        return x
    return x + rng.normal(0.0, p, size=x.shape)


def point_mask(x: Array, p: float, rng: np.random.Generator) -> Array:
    """Zero whole timesteps (all channels) with probability p per (instance, t)."""
    p = _check_p(p)
    if p == 0.0:
        return x
    keep = rng.random(x.shape[:2]) >= p
    return x * keep[:, :, None]


def freq_mask(x: Array, p: float, rng: np.random.Generator) -> Array:
    """Zero floor(p * nbins) random one-sided FFT bins per (instance, channel),
    nbins = floor(T/2) + 1 including DC, then inverse-transform."""
    p = _check_p(p)
    if p == 0.0:
        return x
    B, T, c = x.shape
    nbins = T // 2 + 1
    nmask = int(p * nbins)
    if nmask == 0:
        return x
    out = np.empty_like(x)
    for b in range(B):
        for ch in range(c):
            spec = np.fft.rfft(x[b, :, ch])
            idx = rng.choice(nbins, size=nmask, replace=False)
            spec[idx] = 0.0
            out[b, :, ch] = np.fft.irfft(spec, n=T)
    return out


def random_crop(x: Array, p: float, rng: np.random.Generator) -> ViewPair:
    """Two overlapping crops sharing a segment of length T' = max(1, round(p*T)).

    t1 <= t2 < t1' <= t2'; view1 = x[t1:t1'], view2 = x[t2:t2']; the shared
    segment is x[t2:t1'], at offset t2-t1 in view1 and 0 in view2.
    """
    p = float(p)
    if not 0.0 < p <= 0.95:
        raise ConfigError(f"crop needs 0 < p <= 0.95, got {p}")
    T = x.shape[1]
    Tc = max(1, int(np.round(p * T)))
    t2 = int(rng.integers(0, T - Tc + 1))
    t1 = int(rng.integers(0, t2 + 1))
    t1p = t2 + Tc
    t2p = int(rng.integers(t1p, T + 1))
    return ViewPair(
        view1=x[:, t1:t1p],
        view2=x[:, t2:t2p],
        align1=t2 - t1,
        align2=0,
        common_len=Tc,
    )


_AUG_FN = {
    "resize": resize,
    "rescale": rescale,
    "jitter": jitter,
    "point_mask": point_mask,
    "freq_mask": freq_mask,
}


def make_view_pair(x: Array, strategy: Strategy, rng: np.random.Generator) -> ViewPair:
    """Build the two training views for one batch under ``strategy``."""
    s = validate(strategy)
    order = AUG_ORDERS[s.aug_order]
    stages = [(name, getattr(s, f"{name}_p")) for name in order if name != "crop"]
    enabled = [(name, p) for name, p in stages if p > 0.0]

    if s.crop_p == 0.0:
        views = []
        for _ in range(2):
            v = x
            for name, p in enabled:
                v = _AUG_FN[name](v, p, rng)
            views.append(v)
        return ViewPair(views[0], views[1], 0, 0, x.shape[1])

    crop_at = order.index("crop")
    pre = [(n, getattr(s, f"{n}_p")) for n in order[:crop_at] if getattr(s, f"{n}_p") > 0.0]
    post = [(n, getattr(s, f"{n}_p")) for n in order[crop_at + 1 :] if getattr(s, f"{n}_p") > 0.0]

    shared = x
    for name, p in pre:
        shared = _AUG_FN[name](shared, p, rng)
    vp = random_crop(shared, s.crop_p, rng)
    views = []
    for v in (vp.view1, vp.view2):
        for name, p in post:
            v = _AUG_FN[name](v, p, rng)
        views.append(v)
    return ViewPair(views[0], views[1], vp.align1, vp.align2, vp.common_len)
