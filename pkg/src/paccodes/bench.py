"""BPSK-AWGN channel model and the Monte-Carlo FER/ANV harness.

Conventions fixed repo-wide:

  * unit-energy BPSK: bit 0 -> +1.0, bit 1 -> -1.0
  * noise variance   sigma^2 = 1 / (2 * R * 10^(EbN0_dB / 10))
  * channel LLR      2 y / sigma^2 (natural log, P(bit=0)/P(bit=1)),
    capped at +-300 before demapping

Randomness comes from counter-based Philox4x64 streams keyed by
``(seed, stream, trial)`` (stream = SNR grid index here, iteration index in
the profile construction), so every trial's data is a pure function of its
key and results do not depend on batching or on how many workers ran them.
The stop rule (first of min_frame_errors / max_trials) is applied at exact
trial granularity by truncating the batch in which it fires.
"""

from __future__ import annotations

import itertools
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import sqrt
from typing import Callable, Iterable, Iterator

import numpy as np

from . import _kernels
from .codec import ConvSpec
from .fano import DEFAULT_DELTA, DEFAULT_MAX_VISITS_PER_BIT
from .polarization import (
    ReliabilityTable,
    bhattacharyya_from_mean,
    cutoff_rate,
    ga_llr_means,
)
from .profiles import RateProfile

__all__ = [
    "LLR_CAP",
    "ChannelParams",
    "SimStats",
    "noise_sigma",
    "modulate",
    "awgn",
    "channel_llr",
    "reliability_table",
    "simulate",
    "collect_failures",
    "SIM_CSV_FIELDS",
    "write_sim_csv",
]

LLR_CAP = 300.0

_DEFAULT_BATCH = 512


def noise_sigma(ebn0_db: float, code_rate: float) -> float:
    """Noise standard deviation for unit-energy BPSK at the given Eb/N0."""
    if code_rate <= 0.0:
        raise ValueError(f"code rate must be positive, got {code_rate}")
    return sqrt(1.0 / (2.0 * code_rate * 10.0 ** (ebn0_db / 10.0)))


@dataclass(frozen=True)
class ChannelParams:
    """Operating point of the BPSK-AWGN link."""

    ebn0_db: float
    code_rate: float

    @property
    def sigma(self) -> float:
        return noise_sigma(self.ebn0_db, self.code_rate)

    @property
    def sigma2(self) -> float:
        return self.sigma**2


def modulate(bits: np.ndarray) -> np.ndarray:
    """BPSK mapping: 0 -> +1.0, 1 -> -1.0."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def awgn(symbols: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation sigma."""
    symbols = np.asarray(symbols, dtype=np.float64)
    return symbols + sigma * rng.standard_normal(symbols.shape)


def channel_llr(y: np.ndarray | float, sigma: float):
    """Channel LLR 2y/sigma^2, capped at +-LLR_CAP."""
    return np.clip(2.0 * np.asarray(y, dtype=np.float64) / (sigma * sigma), -LLR_CAP, LLR_CAP)


def reliability_table(n_bits: int, ebn0_db: float, code_rate: float) -> ReliabilityTable:
    """GA reliability figures for every bit channel at one operating point."""
    sigma = noise_sigma(ebn0_db, code_rate)
    means = ga_llr_means(n_bits, sigma * sigma)
    z = np.array([bhattacharyya_from_mean(m) for m in means])
    e0 = np.array([cutoff_rate(zi) for zi in z])
    return ReliabilityTable(
        n_bits=n_bits,
        ebn0_db=float(ebn0_db),
        code_rate=float(code_rate),
        llr_means=means,
        bhattacharyya=z,
        cutoff_rates=e0,
    )


@dataclass
class SimStats:
    """Accumulated Monte-Carlo counters for one operating point.

    ``theta_sum`` totals the Fano visit counts over all trials (aborted ones
    included, at their capped value); it stays 0 for list-decoder runs, in
    which case ``anv`` is NaN. Merging two SimStats equals the stats of the
    concatenated trial sequences.
    """

    ebn0_db: float
    n_bits: int
    trials: int = 0
    frame_errors: int = 0
    theta_sum: int = 0
    aborts: int = 0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.trials if self.trials else float("nan")

    @property
    def anv(self) -> float:
        if self.trials == 0 or self.theta_sum == 0:
            return float("nan")
        return self.theta_sum / (self.trials * self.n_bits)

    @property
    def fer_ci95(self) -> float:
        """Normal-approximation 95% half-width of the FER estimate."""
        if self.trials == 0:
            return float("nan")
        p = self.fer
        return 1.96 * sqrt(p * (1.0 - p) / self.trials)

    def merge(self, other: "SimStats") -> "SimStats":
        if (self.ebn0_db, self.n_bits) != (other.ebn0_db, other.n_bits):
            raise ValueError("can only merge stats from the same operating point")
        return SimStats(
            ebn0_db=self.ebn0_db,
            n_bits=self.n_bits,
            trials=self.trials + other.trials,
            frame_errors=self.frame_errors + other.frame_errors,
            theta_sum=self.theta_sum + other.theta_sum,
            aborts=self.aborts + other.aborts,
        )


# ---------------------------------------------------------------------------
# Trial streams
# ---------------------------------------------------------------------------

_MAX_SEED = 2**64
_MAX_STREAM = 2**16
_MAX_TRIAL = 2**48


class _TrialRng:
    """Philox4x64 generator re-keyed per trial to (seed, stream, trial)."""

    def __init__(self, seed: int, stream: int):
        if not 0 <= seed < _MAX_SEED:
            raise ValueError(f"seed must be in [0, 2^64), got {seed}")
        if not 0 <= stream < _MAX_STREAM:
            raise ValueError(f"stream must be in [0, 2^16), got {stream}")
        self._seed = seed
        self._stream = stream
        self._bitgen = np.random.Philox(key=0)
        self.generator = np.random.Generator(self._bitgen)

    def select(self, trial: int) -> np.random.Generator:
        if not 0 <= trial < _MAX_TRIAL:
            raise ValueError(f"trial index must be in [0, 2^48), got {trial}")
        state = self._bitgen.state
        state["state"]["counter"][:] = 0
        state["state"]["key"][0] = (self._stream << 48) | trial
        state["state"]["key"][1] = self._seed
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bitgen.state = state
        return self.generator


def _batch_randomness(
    seed: int, stream: int, start: int, count: int, k: int, n_bits: int
) -> tuple[np.ndarray, np.ndarray]:
    """Messages and unit-variance noise for trials [start, start+count)."""
    rng = _TrialRng(seed, stream)
    msgs = np.empty((count, k), dtype=np.uint8)
    noises = np.empty((count, n_bits), dtype=np.float64)
    for t in range(count):
        g = rng.select(start + t)
        msgs[t] = g.integers(0, 2, size=k, dtype=np.uint8)
        noises[t] = g.standard_normal(n_bits)
    return msgs, noises


def _ordered_parallel(fn: Callable, args: Iterable, workers: int) -> Iterator:
    """Map fn over args, yielding results in order; >1 workers use threads."""
    if workers <= 1:
        for a in args:
            yield fn(a)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        arg_iter = iter(args)
        for a in itertools.islice(arg_iter, workers + 2):
            pending.append(pool.submit(fn, a))
        while pending:
            result = pending.popleft().result()
            nxt = next(arg_iter, None)
            if nxt is not None:
                pending.append(pool.submit(fn, nxt))
            yield result


@dataclass
class _FanoBatch:
    start: int
    v_tx: np.ndarray
    v_hat: np.ndarray
    theta: np.ndarray
    abort: np.ndarray


def iter_fano_batches(
    profile: RateProfile,
    conv: ConvSpec,
    sigma: float,
    bias: np.ndarray,
    delta: float,
    max_visits: int,
    *,
    seed: int,
    stream: int,
    max_trials: int,
    batch_size: int = _DEFAULT_BATCH,
    workers: int = 1,
    exact: bool = True,
) -> Iterator[_FanoBatch]:
    """End-to-end Fano trial batches in trial order (encode, AWGN, decode)."""
    n_bits = profile.n_bits
    info_idx = profile.info_indices
    info_mask = profile.mask.astype(np.int8)
    taps = conv.taps_array()
    bias = np.asarray(bias, dtype=np.float64)

    def run(span: tuple[int, int]) -> _FanoBatch:
        start, count = span
        msgs, noises = _batch_randomness(seed, stream, start, count, profile.k, n_bits)
        v_tx = np.zeros((count, n_bits), dtype=np.int8)
        v_tx[:, info_idx] = msgs
        v_hat = np.empty((count, n_bits), dtype=np.int8)
        theta = np.empty(count, dtype=np.int64)
        abort = np.empty(count, dtype=np.uint8)
        _kernels.fano_trials_kernel(
            msgs,
            noises,
            sigma,
            info_idx,
            info_mask,
            taps,
            conv.state_mask,
            bias,
            delta,
            max_visits,
            LLR_CAP,
            exact,
            v_hat,
            theta,
            abort,
        )
        return _FanoBatch(start, v_tx, v_hat, theta, abort)

    spans = [
        (s, min(batch_size, max_trials - s)) for s in range(0, max_trials, batch_size)
    ]
    yield from _ordered_parallel(run, spans, workers)


@dataclass
class _ListBatch:
    start: int
    v_tx: np.ndarray
    v_hat: np.ndarray


def iter_list_batches(
    profile: RateProfile,
    conv: ConvSpec,
    sigma: float,
    list_size: int,
    *,
    seed: int,
    stream: int,
    max_trials: int,
    batch_size: int = _DEFAULT_BATCH,
    workers: int = 1,
    exact: bool = True,
) -> Iterator[_ListBatch]:
    """End-to-end list-decoding trial batches in trial order."""
    n_bits = profile.n_bits
    info_idx = profile.info_indices
    info_mask = profile.mask.astype(np.int8)
    taps = conv.taps_array()

    def run(span: tuple[int, int]) -> _ListBatch:
        start, count = span
        msgs, noises = _batch_randomness(seed, stream, start, count, profile.k, n_bits)
        v_tx = np.zeros((count, n_bits), dtype=np.int8)
        v_tx[:, info_idx] = msgs
        v_hat = np.empty((count, n_bits), dtype=np.int8)
        _kernels.list_trials_kernel(
            msgs,
            noises,
            sigma,
            info_idx,
            info_mask,
            taps,
            conv.state_mask,
            int(list_size),
            LLR_CAP,
            exact,
            v_hat,
        )
        return _ListBatch(start, v_tx, v_hat)

    spans = [
        (s, min(batch_size, max_trials - s)) for s in range(0, max_trials, batch_size)
    ]
    yield from _ordered_parallel(run, spans, workers)


# ---------------------------------------------------------------------------
# FER/ANV sweeps
# ---------------------------------------------------------------------------


def simulate(
    profile: RateProfile,
    conv: ConvSpec,
    decoder: str,
    snr_grid: Iterable[float],
    *,
    min_frame_errors: int = 400,
    max_trials: int = 2_000_000,
    seed: int = 0,
    fano_delta: float = DEFAULT_DELTA,
    list_size: int = 16,
    max_visits: int | None = None,
    workers: int = 1,
    batch_size: int = _DEFAULT_BATCH,
    exact: bool = True,
) -> list[SimStats]:
    """Monte-Carlo FER (and, for Fano, ANV) over an Eb/N0 grid.

    Per point: draw a uniform message, encode, modulate, add noise, demap,
    decode, and count a frame error iff the decoded carrier word differs
    from the transmitted one (decoder aborts count as errors and are also
    reported separately). Stops at the first of ``min_frame_errors`` /
    ``max_trials``, evaluated at exact trial granularity. Results are
    reproducible for a fixed seed regardless of batching or worker count.
    """
    if decoder not in ("fano", "list"):
        raise ValueError(f"decoder must be 'fano' or 'list', got {decoder!r}")
    grid = [float(p) for p in snr_grid]
    if not grid:
        raise ValueError("empty SNR grid")
    results = []
    for stream, ebn0_db in enumerate(grid):
        sigma = noise_sigma(ebn0_db, profile.rate)
        stats = SimStats(ebn0_db=ebn0_db, n_bits=profile.n_bits)
        if decoder == "fano":
            cap = (
                max_visits
                if max_visits is not None
                else DEFAULT_MAX_VISITS_PER_BIT * profile.n_bits
            )
            bias = reliability_table(profile.n_bits, ebn0_db, profile.rate).cutoff_rates
            batches = iter_fano_batches(
                profile,
                conv,
                sigma,
                bias,
                fano_delta,
                cap,
                seed=seed,
                stream=stream,
                max_trials=max_trials,
                batch_size=batch_size,
                workers=workers,
                exact=exact,
            )
            for batch in batches:
                err = (batch.v_hat != batch.v_tx).any(axis=1) | (batch.abort == 1)
                keep = _stop_cut(err, min_frame_errors - stats.frame_errors)
                stats.trials += keep
                stats.frame_errors += int(err[:keep].sum())
                stats.theta_sum += int(batch.theta[:keep].sum())
                stats.aborts += int(batch.abort[:keep].sum())
                if stats.frame_errors >= min_frame_errors:
                    break
        else:
            batches = iter_list_batches(
                profile,
                conv,
                sigma,
                list_size,
                seed=seed,
                stream=stream,
                max_trials=max_trials,
                batch_size=batch_size,
                workers=workers,
                exact=exact,
            )
            for batch in batches:
                err = (batch.v_hat != batch.v_tx).any(axis=1)
                keep = _stop_cut(err, min_frame_errors - stats.frame_errors)
                stats.trials += keep
                stats.frame_errors += int(err[:keep].sum())
                if stats.frame_errors >= min_frame_errors:
                    break
        results.append(stats)
    return results


def collect_failures(
    profile: RateProfile,
    conv: ConvSpec,
    ebn0_db: float,
    n_failures: int,
    *,
    seed: int = 0,
    max_trials: int = 10_000_000,
    fano_delta: float = DEFAULT_DELTA,
    max_visits: int | None = None,
    workers: int = 1,
    batch_size: int = 256,
    exact: bool = True,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], SimStats]:
    """Gather (v, v_hat) pairs from Fano decoding failures at one SNR.

    Aborted trials are counted in the stats but contribute no pair (their
    estimate is undefined). Stops once ``n_failures`` pairs are collected or
    the trial budget runs out.
    """
    sigma = noise_sigma(ebn0_db, profile.rate)
    cap = (
        max_visits
        if max_visits is not None
        else DEFAULT_MAX_VISITS_PER_BIT * profile.n_bits
    )
    bias = reliability_table(profile.n_bits, ebn0_db, profile.rate).cutoff_rates
    stats = SimStats(ebn0_db=float(ebn0_db), n_bits=profile.n_bits)
    failures: list[tuple[np.ndarray, np.ndarray]] = []
    batches = iter_fano_batches(
        profile,
        conv,
        sigma,
        bias,
        fano_delta,
        cap,
        seed=seed,
        stream=0,
        max_trials=max_trials,
        batch_size=batch_size,
        workers=workers,
        exact=exact,
    )
    for batch in batches:
        err = (batch.v_hat != batch.v_tx).any(axis=1) | (batch.abort == 1)
        fail = err & (batch.abort == 0)
        keep = _stop_cut(fail, n_failures - len(failures))
        for t in np.flatnonzero(fail[:keep]):
            failures.append((batch.v_tx[t].copy(), batch.v_hat[t].copy()))
        stats.trials += keep
        stats.frame_errors += int(err[:keep].sum())
        stats.theta_sum += int(batch.theta[:keep].sum())
        stats.aborts += int(batch.abort[:keep].sum())
        if len(failures) >= n_failures:
            break
    return failures, stats


def _stop_cut(flags: np.ndarray, still_needed: int) -> int:
    """Trials to keep from this batch so the hit count stops exactly at target."""
    if still_needed <= 0:
        return 0
    total = int(flags.sum())
    if total < still_needed:
        return flags.shape[0]
    cum = np.cumsum(flags)
    return int(np.searchsorted(cum, still_needed)) + 1


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

SIM_CSV_FIELDS = (
    "ebn0_db",
    "trials",
    "frame_errors",
    "fer",
    "fer_ci95",
    "theta_sum",
    "anv",
    "aborts",
)


def write_sim_csv(stats_list: Iterable[SimStats], path: str) -> None:
    """Write one row per operating point with the fixed schema."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(SIM_CSV_FIELDS) + "\n")
        for s in stats_list:
            row = (
                f"{s.ebn0_db:g}",
                str(s.trials),
                str(s.frame_errors),
                f"{s.fer:.8g}",
                f"{s.fer_ci95:.8g}",
                str(s.theta_sum),
                f"{s.anv:.8g}",
                str(s.aborts),
            )
            fh.write(",".join(row) + "\n")
