"""Rayleigh-fading uplink: gains, throughput, and the transmission decision.

Each device sees an exponentially distributed power gain per round; the
achievable rate against constant noise decides whether it uploads the
whole model, only the pole parameters, or nothing:

    whole  if rate >= u_whole
    pole   if u_pole <= rate < u_whole
    none   otherwise

The closed-form success probability P(rate >= u) = exp(-sigma2*(2^u - 1))
backs the Monte Carlo checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Default threshold rule: rates proportional to payload size (whole model
# carries 40 parameters, a pole-only upload 4), scaled so the whole-model
# upload succeeds with probability 0.95 at the -40 dB reference noise.
WHOLE_PAYLOAD = 40
POLE_PAYLOAD = 4
REFERENCE_SIGMA_DB = -40.0
REFERENCE_WHOLE_SUCCESS = 0.95


class Decision(Enum):
    NONE = "none"
    POLE_ONLY = "pole_only"
    WHOLE = "whole"


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def default_thresholds() -> tuple[float, float]:
    """(u_pole, u_whole) in bits/sec from the payload-proportional rule."""
    sigma2 = db_to_linear(REFERENCE_SIGMA_DB)
    u_whole = math.log2(1.0 - math.log(REFERENCE_WHOLE_SUCCESS) / sigma2)
    u_pole = u_whole * POLE_PAYLOAD / WHOLE_PAYLOAD
    return u_pole, u_whole


@dataclass(frozen=True)
class ChannelConfig:
    """Noise power (linear) and the two code-rate thresholds in bits/sec."""

    sigma2: float
    u_pole: float
    u_whole: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("noise power sigma2 must be positive")
        if not 0 <= self.u_pole <= self.u_whole:
            raise ValueError("thresholds must satisfy 0 <= u_pole <= u_whole")

    @classmethod
    def from_db(
        cls, sigma_db: float, u_pole: float | None = None, u_whole: float | None = None
    ) -> "ChannelConfig":
        """Build from noise in dB; missing thresholds follow the default rule."""
        auto_pole, auto_whole = default_thresholds()
        return cls(
            sigma2=db_to_linear(sigma_db),
            u_pole=auto_pole if u_pole is None else u_pole,
            u_whole=auto_whole if u_whole is None else u_whole,
        )


@dataclass(frozen=True)
class ChannelOutcome:
    """One device-round draw: fading gain, achievable rate, and the decision."""

    gain: float
    rate: float
    decision: Decision


def sample_gain(rng: np.random.Generator) -> float:
    """Unit-mean exponential fading gain via the inverse CDF -ln(1-u)."""
    u = rng.random()
    return -math.log1p(-u)


def throughput(gain: float, sigma2: float) -> float:
    """Achievable rate log2(1 + gain/sigma2) in bits/sec."""
    if sigma2 <= 0:
        raise ValueError("noise power sigma2 must be positive")
    if gain < 0:
        raise ValueError("gain must be nonnegative")
    return math.log2(1.0 + gain / sigma2)


def decide(rate: float, cfg: ChannelConfig) -> Decision:
    """Three-way threshold comparison, boundary inclusive (>=)."""
    if rate >= cfg.u_whole:
        return Decision.WHOLE
    if rate >= cfg.u_pole:
        return Decision.POLE_ONLY
    return Decision.NONE


def draw_outcome(rng: np.random.Generator, cfg: ChannelConfig) -> ChannelOutcome:
    """Sample one gain and run it through the rate and decision chain."""
    g = sample_gain(rng)
    r = throughput(g, cfg.sigma2)
    return ChannelOutcome(g, r, decide(r, cfg))


def success_probability(u: float, sigma2: float) -> float:
    """P(rate >= u) for an exp(1) gain: exp(-sigma2*(2^u - 1))."""
    if u < 0:
        raise ValueError("code rate threshold must be nonnegative")
    if sigma2 <= 0:
        raise ValueError("noise power sigma2 must be positive")
    return math.exp(-sigma2 * (2.0**u - 1.0))
