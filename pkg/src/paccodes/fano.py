"""Fano sequential decoding of PAC codes.

The search walks the code tree depth-first with a running threshold T moved
in steps of delta: advance while the path metric clears T (tightening T on
first visits), retreat while the predecessor still clears it, and lower T
when stuck. Frozen positions are ordinary single-branch tree nodes whose
metric is accrued and whose visits are counted like any other.

The per-branch metric is ``1 - b_i - log2(1 + exp(-(1-2u) z))`` with z the
demapper LLR for the branch's convolution output bit u; the bias b_i is the
per-bit-channel cutoff rate at the operating SNR (a fixed bias equal to the
code rate also works, at some complexity cost at low SNR). The visit count
theta increments on every forward-metric evaluation, so a backtrack-free
decode has theta == N and the per-bit average (ANV) is exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .codec import ConvSpec, Demapper
from .profiles import RateProfile

__all__ = [
    "DEFAULT_DELTA",
    "DEFAULT_MAX_VISITS_PER_BIT",
    "STATUS_DECODED",
    "STATUS_ABORTED",
    "FanoConfig",
    "FanoOutcome",
    "branch_metric",
    "fano_decode",
]

DEFAULT_DELTA = 2.0

# Cap on visits per codeword, scaled by N: sequential decoding has unbounded
# complexity tails above the cutoff region, so runs must surface aborts in
# their statistics rather than loop without bound.
DEFAULT_MAX_VISITS_PER_BIT = 10**6

STATUS_DECODED = "decoded"
STATUS_ABORTED = "aborted-on-max-visits"


@dataclass
class FanoConfig:
    """Search parameters: threshold spacing, per-bit metric bias, visit cap."""

    conv: ConvSpec
    bias: np.ndarray
    delta: float = DEFAULT_DELTA
    max_visits: int | None = None

    def __post_init__(self) -> None:
        if self.delta <= 0.0:
            raise ValueError(f"threshold spacing must be positive, got {self.delta}")
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.bias.ndim != 1:
            raise ValueError("bias must be a 1-D vector (one entry per bit)")
        if self.max_visits is not None and self.max_visits < 1:
            raise ValueError(f"max_visits must be positive, got {self.max_visits}")

    def visits_cap(self, n_bits: int) -> int:
        return self.max_visits if self.max_visits is not None else DEFAULT_MAX_VISITS_PER_BIT * n_bits


@dataclass
class FanoOutcome:
    """Decoded carrier word, visit count, and how the search ended."""

    v_hat: np.ndarray
    theta: int
    status: str = STATUS_DECODED

    @property
    def decoded(self) -> bool:
        return self.status == STATUS_DECODED


def branch_metric(llr: float, u_bit: int, bias_i: float) -> float:
    """1 - bias - log2(1 + exp(-(1-2u)*llr)), stabilized for large |llr|."""
    if u_bit not in (0, 1):
        raise ValueError(f"branch bit must be 0 or 1, got {u_bit}")
    s = llr if u_bit == 0 else -llr
    if s >= 0.0:
        penalty = math.log1p(math.exp(-s)) * _kernels.LOG2E
    else:
        penalty = (-s + math.log1p(math.exp(s))) * _kernels.LOG2E
    return 1.0 - bias_i - penalty


def fano_decode(dm: Demapper, profile: RateProfile, cfg: FanoConfig) -> FanoOutcome:
    """Run the Fano search over a fresh demapper.

    Returns the first accepted full-length path, its visit count theta, and
    a status of ``aborted-on-max-visits`` if the cap was hit first (in which
    case v_hat holds the partial path, zero-extended).
    """
    n_bits = dm.n_bits
    if profile.n_bits != n_bits:
        raise ValueError(f"profile length {profile.n_bits} != demapper length {n_bits}")
    if cfg.bias.shape[0] != n_bits:
        raise ValueError(f"bias length {cfg.bias.shape[0]} != block length {n_bits}")
    if dm.position != 0:
        raise ValueError("fano_decode needs a fresh demapper (position 0)")

    v_hat = np.zeros(n_bits, dtype=np.int8)
    u_hat = np.empty(n_bits, dtype=np.int8)
    mu = np.empty(n_bits + 1, dtype=np.float64)
    ranks = np.empty(n_bits, dtype=np.uint8)
    states = np.empty(n_bits + 1, dtype=np.int64)

    theta, depth, status = _kernels.fano_kernel(
        dm._llrs,
        dm._bits,
        dm._levels,
        profile.mask.astype(np.int8),
        cfg.conv.taps_array(),
        cfg.conv.state_mask,
        cfg.bias,
        cfg.delta,
        cfg.visits_cap(n_bits),
        dm._exact,
        v_hat,
        u_hat,
        mu,
        ranks,
        states,
    )
    dm._pos = depth
    if status == _kernels.STATUS_ABORTED:
        v_hat[depth:] = 0
        return FanoOutcome(v_hat, int(theta), STATUS_ABORTED)
    return FanoOutcome(v_hat, int(theta), STATUS_DECODED)
