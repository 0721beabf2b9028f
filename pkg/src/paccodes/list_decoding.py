"""List decoding of PAC codes (successive-cancellation list with pre-transform).

Each path keeps its own demapper state and shift register; at information
positions every surviving path forks on v in {0, 1} and the list keeps the
``list_size`` candidates with the smallest accumulated penalty
``sum_i log2(1 + exp(-(1-2u_i) z_i))``. With exact check-node combining the
penalty telescopes to -log2 P(u | y), so an unpruned list (list_size >=
2^k) returns the maximum-likelihood carrier word.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .codec import ConvSpec
from .profiles import RateProfile

__all__ = ["list_decode", "list_decode_with_metric"]


def list_decode(
    channel_llrs: np.ndarray,
    profile: RateProfile,
    conv: ConvSpec,
    list_size: int,
    *,
    exact: bool = True,
) -> np.ndarray:
    """Return the best-metric carrier word estimate."""
    v_hat, _ = list_decode_with_metric(
        channel_llrs, profile, conv, list_size, exact=exact
    )
    return v_hat


def list_decode_with_metric(
    channel_llrs: np.ndarray,
    profile: RateProfile,
    conv: ConvSpec,
    list_size: int,
    *,
    exact: bool = True,
) -> tuple[np.ndarray, float]:
    """As :func:`list_decode`, but also returns the winning path's penalty."""
    if list_size < 1:
        raise ValueError(f"list size must be >= 1, got {list_size}")
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.shape != (profile.n_bits,):
        raise ValueError(
            f"channel LLRs must have length {profile.n_bits}, got shape {llrs.shape}"
        )
    if not np.all(np.isfinite(llrs)):
        raise ValueError("channel LLRs must be finite")
    v_hat = np.empty(profile.n_bits, dtype=np.int8)
    metric = _kernels.list_kernel(
        llrs,
        profile.mask.astype(np.int8),
        conv.taps_array(),
        conv.state_mask,
        int(list_size),
        bool(exact),
        v_hat,
    )
    return v_hat, float(metric)
