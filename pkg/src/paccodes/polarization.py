"""Bit-channel reliability under Gaussian-approximation density evolution.

Under all-zero BPSK transmission the channel LLR is Gaussian with mean
``2/sigma^2`` and variance twice the mean; the recursion below tracks only
the mean through the polarization butterflies:

    check (bad) child:     m- = phi_inv(1 - (1 - phi(m))^2)
    variable (good) child: m+ = 2m

``phi(m)`` is the expected value of ``1 - tanh(L/2)`` for ``L ~ N(m, 2m)``,
evaluated with the usual two-piece fit: an exponential form below
``PHI_CROSSOVER`` and the asymptotic ``sqrt(pi/x) exp(-x/4)`` form above it.

From the means everything else follows: the Bhattacharyya parameter
``Z = exp(-m/4)`` and the cutoff rate ``E0 = 1 - log2(1 + Z)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PHI_CROSSOVER",
    "LLR_MEAN_CAP",
    "ReliabilityTable",
    "phi",
    "phi_inv",
    "ga_llr_means",
    "bhattacharyya_from_mean",
    "cutoff_rate",
    "quantize",
]

# Two-piece phi fit: exp(C1 - C2 * x^C3) below the crossover, the
# sqrt(pi/x) * exp(-x/4) * (1 - 10/(7x)) asymptote above it.
_PHI_C1 = 0.0218
_PHI_C2 = 0.4527
_PHI_C3 = 0.86
PHI_CROSSOVER = 10.0

# Means above this cap are clamped; Z underflows to exactly 0 long before it.
LLR_MEAN_CAP = 1.0e5

# exp(-x/4) underflows past here; phi is treated as exactly 0.
_PHI_UNDERFLOW = 2900.0

_PHI_AT_CROSSOVER = math.exp(_PHI_C1 - _PHI_C2 * PHI_CROSSOVER**_PHI_C3)

_PHI_INV_RTOL = 1e-9


def phi(x: float) -> float:
    """Two-piece approximation of E[1 - tanh(L/2)] for L ~ N(x, 2x), clamped to [0, 1]."""
    if x < 0.0:
        raise ValueError(f"phi argument must be nonnegative, got {x}")
    if x == 0.0:
        return 1.0
    if x < PHI_CROSSOVER:
        return min(1.0, math.exp(_PHI_C1 - _PHI_C2 * x**_PHI_C3))
    if x > _PHI_UNDERFLOW:
        return 0.0
    return math.sqrt(math.pi / x) * math.exp(-x / 4.0) * (1.0 - 10.0 / (7.0 * x))


def phi_inv(y: float) -> float:
    """Inverse of :func:`phi` on (0, 1].

    The exponential piece inverts in closed form; the asymptotic piece is
    bracketed and bisected to relative tolerance 1e-9.
    """
    if not 0.0 < y <= 1.0:
        raise ValueError(f"phi_inv argument must be in (0, 1], got {y}")
    if y >= _PHI_AT_CROSSOVER:
        t = (_PHI_C1 - math.log(y)) / _PHI_C2
        return t ** (1.0 / _PHI_C3) if t > 0.0 else 0.0
    lo = PHI_CROSSOVER
    hi = max(20.0, -4.0 * math.log(y) + 40.0)
    while hi - lo > _PHI_INV_RTOL * lo:
        mid = 0.5 * (lo + hi)
        if phi(mid) > y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ga_llr_means(n_bits: int, noise_variance: float) -> np.ndarray:
    """Mean LLR of every bit channel after log2(n_bits) polarization levels.

    The root mean is ``2/noise_variance`` (unit-energy BPSK). Index ``i`` of
    the returned vector is the channel seen by ``u_i`` in natural order: the
    check child of each butterfly lands at the even offset, the variable
    child at the odd one, so the all-variable (best) channel is the last
    index.
    """
    _require_power_of_two(n_bits)
    if noise_variance <= 0.0:
        raise ValueError(f"noise variance must be positive, got {noise_variance}")
    means = np.array([2.0 / noise_variance])
    levels = n_bits.bit_length() - 1
    log2_sq = 4.0 * math.log(2.0)
    for _ in range(levels):
        nxt = np.empty(2 * means.shape[0])
        for j, m in enumerate(means):
            y = 1.0 - (1.0 - phi(m)) ** 2
            if y <= 0.0:
                # phi underflowed; fall back to the Z-domain asymptote Z- ~ 2Z
                bad = m - log2_sq
            else:
                bad = phi_inv(y)
            # the fit can overshoot tiny means; the check child never beats its parent
            nxt[2 * j] = min(bad, m)
            nxt[2 * j + 1] = min(2.0 * m, LLR_MEAN_CAP)
        means = nxt
    return means


def bhattacharyya_from_mean(llr_mean: float) -> float:
    """Bhattacharyya parameter exp(-m/4) of a BI-AWGN channel with LLR mean m."""
    if llr_mean < 0.0:
        raise ValueError(f"LLR mean must be nonnegative, got {llr_mean}")
    if llr_mean >= LLR_MEAN_CAP:
        return 0.0
    return math.exp(-llr_mean / 4.0)


def cutoff_rate(z: float) -> float:
    """Cutoff rate 1 - log2(1 + Z) of a channel with Bhattacharyya parameter Z."""
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"Bhattacharyya parameter must be in [0, 1], got {z}")
    return 1.0 - math.log2(1.0 + z)


def quantize(x: float, delta: float) -> int:
    """1-bit quantizer: 1 if x >= delta else 0, for thresholds in (0, 1)."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"quantizer threshold must be in (0, 1), got {delta}")
    return 1 if x >= delta else 0


@dataclass
class ReliabilityTable:
    """Per-bit-channel reliability figures at one operating point.

    ``llr_means`` are the GA means, ``bhattacharyya`` the derived Z values in
    [0, 1], and ``cutoff_rates`` the per-channel E0 = 1 - log2(1 + Z).
    """

    n_bits: int
    ebn0_db: float
    code_rate: float
    llr_means: np.ndarray
    bhattacharyya: np.ndarray
    cutoff_rates: np.ndarray

    def __post_init__(self) -> None:
        _require_power_of_two(self.n_bits)
        if not 0.0 < self.code_rate <= 1.0:
            raise ValueError(f"code rate must be in (0, 1], got {self.code_rate}")
        self.llr_means = np.asarray(self.llr_means, dtype=np.float64)
        self.bhattacharyya = np.asarray(self.bhattacharyya, dtype=np.float64)
        self.cutoff_rates = np.asarray(self.cutoff_rates, dtype=np.float64)
        for name in ("llr_means", "bhattacharyya", "cutoff_rates"):
            vec = getattr(self, name)
            if vec.shape != (self.n_bits,):
                raise ValueError(
                    f"{name} must have length {self.n_bits}, got shape {vec.shape}"
                )
        if np.any(self.bhattacharyya < 0.0) or np.any(self.bhattacharyya > 1.0):
            raise ValueError("Bhattacharyya parameters must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_bits": self.n_bits,
                "ebn0_db": self.ebn0_db,
                "code_rate": self.code_rate,
                "llr_means": self.llr_means.tolist(),
                "bhattacharyya": self.bhattacharyya.tolist(),
                "cutoff_rates": self.cutoff_rates.tolist(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ReliabilityTable":
        raw = json.loads(text)
        return cls(
            n_bits=raw["n_bits"],
            ebn0_db=raw["ebn0_db"],
            code_rate=raw["code_rate"],
            llr_means=np.array(raw["llr_means"]),
            bhattacharyya=np.array(raw["bhattacharyya"]),
            cutoff_rates=np.array(raw["cutoff_rates"]),
        )


def _require_power_of_two(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"block length must be a power of 2, got {n}")
