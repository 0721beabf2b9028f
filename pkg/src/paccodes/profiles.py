"""Rate profiles: which carrier positions hold message bits.

A profile is a binary mask of length N; position i carries data iff
mask[i] == 1 (0-based; the hex serialization puts mask[0] in the most
significant bit of the first digit). Besides the mask data model this module
provides the two baseline constructions (polar: most reliable indices;
RM-polar: high Hamming-weight rows filled by reliability), and the prefix
cutoff-rate condition that a profile must satisfy for sequential decoding to
stay cheap.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .polarization import ReliabilityTable

__all__ = [
    "RateProfile",
    "polar_profile",
    "rm_polar_profile",
    "row_weight",
    "to_hex",
    "from_hex",
    "check_complexity_condition",
    "REFERENCE_PROFILES",
    "reference_profile",
    "save_profile_hex",
    "load_profile_hex",
]

_HEX_RE = re.compile(r"^[0-9A-F]+$")


@dataclass(frozen=True, eq=False)
class RateProfile:
    """Binary mask selecting the k data-carrying positions out of n_bits."""

    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask).astype(np.uint8)
        if mask.ndim != 1:
            raise ValueError("profile mask must be a 1-D vector")
        n = mask.shape[0]
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"profile length must be a power of 2, got {n}")
        if np.any(mask > 1):
            raise ValueError("profile mask may only contain 0 and 1")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "_k", int(mask.sum()))
        object.__setattr__(self, "_info_indices", np.flatnonzero(mask))

    @property
    def n_bits(self) -> int:
        return self.mask.shape[0]

    @property
    def k(self) -> int:
        return self._k

    @property
    def rate(self) -> float:
        return self.k / self.n_bits

    @property
    def info_indices(self) -> np.ndarray:
        """Sorted 0-based indices of the data-carrying positions."""
        return self._info_indices

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RateProfile):
            return NotImplemented
        return np.array_equal(self.mask, other.mask)

    def __repr__(self) -> str:
        return f"RateProfile(n={self.n_bits}, k={self.k}, hex={to_hex(self)!r})"

    def to_json(self) -> str:
        return json.dumps({"n": self.n_bits, "k": self.k, "hex": to_hex(self)})

    @classmethod
    def from_json(cls, text: str) -> "RateProfile":
        raw = json.loads(text)
        profile = from_hex(raw["hex"], raw["n"])
        if profile.k != raw["k"]:
            raise ValueError(
                f"profile JSON inconsistent: k={raw['k']} but mask popcount={profile.k}"
            )
        return profile


def polar_profile(table: ReliabilityTable, k: int) -> RateProfile:
    """Select the k most reliable positions by GA mean LLR.

    Ties are broken toward the larger index (the more polarized position).
    """
    n = table.n_bits
    if not 0 <= k <= n:
        raise ValueError(f"k must be in 0..{n}, got {k}")
    # lexsort: primary key last; descending mean, then descending index
    order = np.lexsort((-np.arange(n), -table.llr_means))
    mask = np.zeros(n, dtype=np.uint8)
    mask[order[:k]] = 1
    return RateProfile(mask)


def row_weight(i: int, n_bits: int) -> int:
    """Hamming weight of row i (0-based) of the polar transform matrix: 2^popcount(i)."""
    if not 0 <= i < n_bits:
        raise ValueError(f"row index must be in 0..{n_bits - 1}, got {i}")
    return 1 << int(i).bit_count()


def rm_polar_profile(table: ReliabilityTable, k: int) -> RateProfile:
    """Hybrid profile: all rows above the critical Hamming weight, the rest by reliability.

    Weight classes are taken whole from the heaviest down while they fit; the
    class that no longer fits (the critical weight) is filled from its most
    reliable members (GA means, ties toward the larger index).
    """
    n = table.n_bits
    if not 0 <= k <= n:
        raise ValueError(f"k must be in 0..{n}, got {k}")
    weights = np.array([row_weight(i, n) for i in range(n)])
    mask = np.zeros(n, dtype=np.uint8)
    remaining = k
    for w in sorted(set(weights.tolist()), reverse=True):
        members = np.flatnonzero(weights == w)
        if members.shape[0] <= remaining:
            mask[members] = 1
            remaining -= members.shape[0]
            continue
        if remaining > 0:
            means = table.llr_means[members]
            order = np.lexsort((-members, -means))
            mask[members[order[:remaining]]] = 1
            remaining = 0
        break
    return RateProfile(mask)


def to_hex(profile: RateProfile) -> str:
    """Uppercase hex string of length n_bits/4; mask[0] is the MSB of the first digit."""
    mask = profile.mask
    digits = []
    for i in range(0, mask.shape[0], 4):
        nibble = (mask[i] << 3) | (mask[i + 1] << 2) | (mask[i + 2] << 1) | mask[i + 3]
        digits.append(format(int(nibble), "X"))
    return "".join(digits)


def from_hex(s: str, n_bits: int) -> RateProfile:
    """Parse the hex form; rejects wrong lengths and non-[0-9A-F] characters."""
    if n_bits % 4 != 0:
        raise ValueError(f"hex form needs a length divisible by 4, got {n_bits}")
    if len(s) != n_bits // 4:
        raise ValueError(f"expected {n_bits // 4} hex digits for n={n_bits}, got {len(s)}")
    if not _HEX_RE.match(s):
        raise ValueError(f"profile hex must match [0-9A-F]+, got {s!r}")
    mask = np.empty(n_bits, dtype=np.uint8)
    for i, ch in enumerate(s):
        v = int(ch, 16)
        mask[4 * i] = (v >> 3) & 1
        mask[4 * i + 1] = (v >> 2) & 1
        mask[4 * i + 2] = (v >> 1) & 1
        mask[4 * i + 3] = v & 1
    return RateProfile(mask)


def check_complexity_condition(
    profile: RateProfile, cutoff_rates: np.ndarray
) -> tuple[bool, int | None]:
    """Check the prefix condition lambda_l < sum_{i<=l} E0_i for every l.

    ``lambda_l`` counts the data positions among the first l; the sum is over
    the per-bit-channel cutoff rates. Returns (True, None) when the condition
    holds for all prefixes, else (False, first violating prefix length l).
    """
    rates = np.asarray(cutoff_rates, dtype=np.float64)
    if rates.shape != (profile.n_bits,):
        raise ValueError(
            f"cutoff rates must have length {profile.n_bits}, got shape {rates.shape}"
        )
    lam = np.cumsum(profile.mask.astype(np.int64))
    e0_sum = np.cumsum(rates)
    violations = lam >= e0_sum
    if not violations.any():
        return True, None
    return False, int(np.argmax(violations)) + 1


# Reference profiles shipped with the package (hex form, keyed by
# (n_bits, k, construction Eb/N0 in dB)). These are the published
# Monte-Carlo constructions used as regression anchors and CLI inputs.
REFERENCE_PROFILES: dict[tuple[int, int, float], str] = {
    (256, 128, 1.5): "00000000000001170001013F037F7FFF0001017F077F7FFF177F7FFF7FFFFFFF",
    (256, 128, 2.5): "000000010001011F0001013F077FFFFF0001037F177F7FFF011F1FFF7FFFFFFF",
    (256, 128, 3.0): "000000010001013F0001037F077FFFFF0001077F177F7FFF013F1FFF177F7FFF",
    (64, 32, 3.0): "0001017F017F7FFF",
    (64, 32, 5.0): "0007077F031F17FF",
}


def reference_profile(n_bits: int, k: int, ebn0_db: float) -> RateProfile:
    """Load one of the bundled Monte-Carlo profiles."""
    key = (n_bits, k, float(ebn0_db))
    try:
        return from_hex(REFERENCE_PROFILES[key], n_bits)
    except KeyError:
        available = ", ".join(str(k_) for k_ in sorted(REFERENCE_PROFILES))
        raise KeyError(f"no bundled profile for {key}; available: {available}") from None


def save_profile_hex(profile: RateProfile, path: str) -> None:
    """Write the single-line uppercase hex file form (newline-terminated)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(to_hex(profile) + "\n")


def load_profile_hex(path: str, n_bits: int | None = None) -> RateProfile:
    """Read the hex file form; infers n_bits from the line length if not given."""
    with open(path, encoding="ascii") as fh:
        line = fh.readline().strip()
    n = n_bits if n_bits is not None else 4 * len(line)
    return from_hex(line, n)
