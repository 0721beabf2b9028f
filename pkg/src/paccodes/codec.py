"""PAC transmit chain and the successive-cancellation demapper.

Encoding is ``x = (v T) F^(x)n``: the carrier word v (message bits on the
rate-profile positions, zeros elsewhere) is convolved with the connection
polynomial, then sent through the polar transform. Natural bit order is used
throughout; no bit-reversal permutation is applied.

The :class:`Demapper` serves the per-bit LLRs
``z_i = ln P(u_i=0 | y, u^{i-1}) / P(u_i=1 | y, u^{i-1})`` that the tree
decoders consume, and supports rewinding to any earlier position so that a
sequential decoder can retreat without replaying the whole prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .profiles import RateProfile

__all__ = [
    "ConvSpec",
    "CarrierWord",
    "Demapper",
    "insert_data",
    "extract_data",
    "conv_encode",
    "conv_encode_step",
    "polar_transform",
    "encode",
]


@dataclass(frozen=True)
class ConvSpec:
    """Connection polynomial of the convolutional pre-transform.

    ``taps`` holds the coefficients c_0..c_m, most significant first; c_0
    must be 1 so the induced upper-triangular Toeplitz matrix is invertible.
    """

    taps: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.taps) == 0:
            raise ValueError("connection polynomial must have at least one tap")
        if any(t not in (0, 1) for t in self.taps):
            raise ValueError(f"taps must be bits, got {self.taps}")
        if self.taps[0] != 1:
            raise ValueError("leading tap must be 1 (invertible pre-transform)")

    @classmethod
    def from_octal(cls, g: int | str) -> "ConvSpec":
        """Build from an octal connection polynomial, e.g. 0o3211 or \"3211\"."""
        value = int(str(g).removeprefix("0o"), 8) if isinstance(g, str) else g
        if value <= 0:
            raise ValueError(f"connection polynomial must be positive, got {g}")
        return cls(tuple(int(c) for c in bin(value)[2:]))

    @property
    def memory(self) -> int:
        return len(self.taps) - 1

    @property
    def state_mask(self) -> int:
        return (1 << self.memory) - 1

    def taps_array(self) -> np.ndarray:
        return np.array(self.taps, dtype=np.int64)


@dataclass
class CarrierWord:
    """Length-N carrier vector v with zeros on the frozen positions."""

    bits: np.ndarray
    profile: RateProfile

    def __post_init__(self) -> None:
        self.bits = _as_bits(self.bits)
        if self.bits.shape[0] != self.profile.n_bits:
            raise ValueError(
                f"carrier length {self.bits.shape[0]} != profile length "
                f"{self.profile.n_bits}"
            )
        if np.any(self.bits[self.profile.mask == 0] != 0):
            raise ValueError("frozen positions of a carrier word must be zero")


def insert_data(d: np.ndarray, profile: RateProfile) -> CarrierWord:
    """Place the K message bits on the profile positions, in increasing index order."""
    d = _as_bits(d)
    if d.shape[0] != profile.k:
        raise ValueError(f"message length {d.shape[0]} != profile k {profile.k}")
    v = np.zeros(profile.n_bits, dtype=np.int8)
    v[profile.info_indices] = d
    return CarrierWord(v, profile)


def extract_data(v: np.ndarray, profile: RateProfile) -> np.ndarray:
    """Inverse of :func:`insert_data` on the profile positions."""
    v = _as_bits(v)
    if v.shape[0] != profile.n_bits:
        raise ValueError(f"carrier length {v.shape[0]} != profile length {profile.n_bits}")
    return v[profile.info_indices].copy()


def conv_encode(v: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """GF(2) convolution u_i = sum_j c_j v_{i-j}, truncated to len(v).

    Equivalent to v @ T for the upper-triangular Toeplitz matrix T built
    from the taps. The register starts zeroed.
    """
    v = _as_bits(v)
    u = np.empty_like(v)
    _kernels.conv_encode_inplace(v, spec.taps_array(), u)
    return u


def conv_encode_step(state: int, v_bit: int, spec: ConvSpec) -> tuple[int, int]:
    """One shift-register step: returns (u_bit, next_state).

    ``state`` bit j-1 holds the input bit fed j steps ago; streaming over a
    vector from state 0 reproduces :func:`conv_encode`.
    """
    if v_bit not in (0, 1):
        raise ValueError(f"input bit must be 0 or 1, got {v_bit}")
    taps = spec.taps_array()
    u = int(_kernels.conv_output_bit(state, v_bit, taps))
    nxt = int(_kernels.conv_next_state(state, v_bit, spec.state_mask))
    return u, nxt


def polar_transform(u: np.ndarray) -> np.ndarray:
    """x = u F^(x)n over GF(2), computed with O(N log N) butterflies."""
    u = _as_bits(u)
    _require_power_of_two(u.shape[0])
    x = u.copy()
    _kernels.polar_transform_inplace(x)
    return x


def encode(d: np.ndarray, profile: RateProfile, spec: ConvSpec) -> np.ndarray:
    """Full PAC encoding: polar_transform(conv_encode(insert_data(d)))."""
    return polar_transform(conv_encode(insert_data(d, profile).bits, spec))


class Demapper:
    """Stateful successive-cancellation LLR server over one received word.

    ``next_llr`` returns the decision LLR for the current position given the
    decisions fed so far; ``feed`` fixes a decision and advances; ``rewind``
    moves back to any earlier position, after which replaying decisions
    yields exactly the state of a fresh demapper played forward.

    Instances are single-session objects: not safe for concurrent use, but
    fully independent of each other.
    """

    def __init__(self, channel_llrs: np.ndarray, *, exact: bool = True):
        llrs = np.asarray(channel_llrs, dtype=np.float64)
        if llrs.ndim != 1:
            raise ValueError("channel LLRs must be a 1-D vector")
        _require_power_of_two(llrs.shape[0])
        if not np.all(np.isfinite(llrs)):
            raise ValueError("channel LLRs must be finite")
        self._n_bits = llrs.shape[0]
        self._levels = self._n_bits.bit_length() - 1
        self._llrs = np.zeros((self._levels + 1, self._n_bits))
        self._llrs[0] = llrs
        self._bits = np.zeros((self._levels + 1, self._n_bits), dtype=np.int8)
        self._pos = 0
        self._exact = bool(exact)

    @property
    def n_bits(self) -> int:
        return self._n_bits

    @property
    def position(self) -> int:
        """Index of the next undecided bit (0-based)."""
        return self._pos

    @property
    def exhausted(self) -> bool:
        return self._pos >= self._n_bits

    def next_llr(self) -> float:
        """Decision LLR for the current position."""
        if self.exhausted:
            raise RuntimeError("demapper exhausted: all positions decided")
        return float(
            _kernels.sc_prepare(self._llrs, self._bits, self._levels, self._pos, self._exact)
        )

    def feed(self, u_bit: int) -> None:
        """Fix the decision for the current position and advance."""
        if self.exhausted:
            raise RuntimeError("demapper exhausted: all positions decided")
        if u_bit not in (0, 1):
            raise ValueError(f"decision must be 0 or 1, got {u_bit}")
        _kernels.sc_feed(self._bits, self._levels, self._pos, u_bit)
        self._pos += 1

    def rewind(self, position: int) -> None:
        """Move back to ``position``; decisions before it stay in force."""
        if not 0 <= position <= self._pos:
            raise ValueError(
                f"can only rewind to 0..{self._pos}, got {position}"
            )
        self._pos = position


def _as_bits(vec: np.ndarray) -> np.ndarray:
    arr = np.asarray(vec)
    if arr.ndim != 1:
        raise ValueError("expected a 1-D bit vector")
    out = arr.astype(np.int8)
    if np.any((out != 0) & (out != 1)):
        raise ValueError("bit vectors may only contain 0 and 1")
    return out


def _require_power_of_two(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"block length must be a power of 2, got {n}")
