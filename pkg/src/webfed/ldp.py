"""Local differential privacy for weight vectors.

Each client clips every model coordinate to [-C, C] (so one coordinate
can change a released value by at most 2C), then adds independent
Laplace(0, 2C/eps) noise per coordinate.  The density log-ratio of the
mechanism for any two permissible inputs is bounded by eps, which
``verify_ldp_ratio`` checks numerically.

The eps guarantee is per released coordinate.  Composition across the
~6e3 coordinates of a full model is deliberately not accounted for;
under basic composition the cumulative budget is dimension-fold larger.

Noise is reproducible: the uniform stream comes from a counter-based
Philox generator keyed by a seed derived from (master seed, client
index, round index), and samples are produced by the inverse CDF

    x = -b * sgn(u) * ln(1 - 2|u|),   u uniform on (-0.5, 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigError
from .nn import WeightsBundle
from .seeds import TAG_NOISE, mix, rng_from


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget and clip bound; epsilon=None means noise-free."""

    epsilon: Optional[float]
    clip: float = 1.0

    def __post_init__(self):
        if self.clip <= 0:
            raise ConfigError(f"clip bound must be > 0, got {self.clip}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def sensitivity(self) -> float:
        return 2.0 * self.clip

    @property
    def noise_scale(self) -> float:
        if self.epsilon is None:
            return 0.0
        return self.sensitivity / self.epsilon


def noise_seed(master: int, client_index: int, round_index: int) -> int:
    """64-bit noise seed for one (client, round) pair under a master seed."""
    return mix(master, TAG_NOISE, client_index, round_index)


def clip_weights(w: WeightsBundle, clip: float) -> WeightsBundle:
    """Clamp every coordinate to [-clip, clip]."""
    if clip <= 0:
        raise ConfigError(f"clip bound must be > 0, got {clip}")
    c = np.float32(clip)
    if float(c) > clip:  # float32 rounding must not widen the bound
        c = np.nextafter(c, np.float32(0))
    return WeightsBundle._wrap([(name, np.clip(a, -c, c)) for name, a in w])


def _laplace_from_uniform(u: np.ndarray, b: float) -> np.ndarray:
    """Inverse-CDF transform of uniforms on (-0.5, 0.5) to Laplace(0, b)."""
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_sample(b: float, seed: int, n: int) -> np.ndarray:
    """n i.i.d. Laplace(0, b) draws, deterministic per seed; b=0 -> zeros."""
    if b < 0:
        raise ConfigError(f"noise scale must be >= 0, got {b}")
    if b == 0:
        return np.zeros(n, dtype=np.float64)
    u = rng_from(seed).random(n) - 0.5  # in [-0.5, 0.5)
    # the -0.5 endpoint (probability 2^-53) would hit log(0)
    u = np.maximum(u, np.nextafter(-0.5, 0.0))
    return _laplace_from_uniform(u, float(b))


def perturb(w: WeightsBundle, params: PrivacyParams, seed: int) -> WeightsBundle:
    """Clip, then add per-coordinate Laplace noise (none when noise-free)."""
    clipped = clip_weights(w, params.clip)
    b = params.noise_scale
    if b == 0.0:
        return clipped
    sizes = [a.size for _, a in clipped]
    noise = laplace_sample(b, seed, sum(sizes))
    items, off = [], 0
    for name, a in clipped:
        chunk = noise[off : off + a.size].reshape(a.shape)
        items.append((name, (a + chunk).astype(np.float32)))
        off += a.size
    return WeightsBundle._wrap(items)


def default_ratio_grid(
    params: PrivacyParams, num_x: int = 1000
) -> list[tuple[float, float, float]]:
    """Grid of (v, v', x) triples sweeping the worst-case input pairs."""
    c = params.clip
    xs = np.linspace(-10 * max(params.noise_scale, c), 10 * max(params.noise_scale, c), num_x)
    grid = []
    for v in (-c, 0.0, c):
        for vp in (-c, 0.0, c):
            grid.extend((v, vp, float(x)) for x in xs)
    return grid


def verify_ldp_ratio(
    params: PrivacyParams, grid: Iterable[tuple[float, float, float]]
) -> float:
    """Max |log pdf(x - v) - log pdf(x - v')| of the mechanism over a grid.

    For the Laplace mechanism this is at most |v - v'|/b <= 2C/b = eps,
    so the returned value never exceeds the privacy budget.
    """
    if params.epsilon is None:
        raise ConfigError("verify_ldp_ratio needs a finite epsilon")
    b = params.noise_scale
    ds = params.sensitivity
    worst = 0.0
    for v, vp, x in grid:
        if abs(v - vp) > ds * (1 + 1e-12):
            raise ConfigError(
                f"input pair ({v}, {vp}) violates |v - v'| <= {ds}"
            )
        if abs(v) > params.clip or abs(vp) > params.clip:
            raise ConfigError(f"inputs ({v}, {vp}) outside the clip range")
        ratio = abs(abs(x - vp) - abs(x - v)) / b
        if ratio > worst:
            worst = ratio
    return worst
