"""Monte-Carlo rate-profile construction driven by first-bit-error statistics.

The idea: a sequential decoder that goes wrong at position j usually drags
most of the following bits down with it (the pre-transform plus the
polarized channel's memory make post-FBE bursts long), so the positions
where first bit errors concentrate are the ones not worth assigning data
to. Construction therefore starts from every position whose cutoff rate
clears a quantization threshold delta at the target SNR (which also keeps
the sequential search cheap above that SNR), simulates the code, histograms
the first-bit-error index over decoding failures, and repeatedly removes
the histogram argmax until k positions remain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bench import iter_fano_batches, noise_sigma, _stop_cut
from .codec import ConvSpec
from .fano import DEFAULT_DELTA
from .polarization import ReliabilityTable, quantize
from .profiles import RateProfile, check_complexity_condition

__all__ = [
    "InfeasibleTargetSnr",
    "FbeHistogram",
    "ConstructionConfig",
    "IterationRecord",
    "ConstructionResult",
    "initial_profile",
    "fbe_index",
    "mc_construct",
    "mc_construct_detailed",
    "fbe_error_distribution",
    "mean_post_fbe_error_fraction",
]

# Visit cap per trial while constructing: aborted searches carry no usable
# first-error index, so construction caps visits much lower than decoding
# benchmarks do and simply excludes aborts from the histogram.
CONSTRUCTION_MAX_VISITS_PER_BIT = 10**4


class InfeasibleTargetSnr(ValueError):
    """Raised when the target SNR cannot support the requested rate.

    Carries the achieved quantized-cutoff-rate sum so the caller knows how
    far off the operating point is.
    """

    def __init__(self, required: float, achieved: int):
        self.required = required
        self.achieved = achieved
        super().__init__(
            f"target SNR infeasible: need N*R = {required:g} < "
            f"sum of quantized cutoff rates = {achieved}; raise the target SNR"
        )


@dataclass
class FbeHistogram:
    """First-bit-error index frequencies accumulated over decoding failures."""

    counts: np.ndarray
    trials_observed: int = 0
    failures_observed: int = 0

    @classmethod
    def zeros(cls, n_bits: int) -> "FbeHistogram":
        return cls(counts=np.zeros(n_bits, dtype=np.int64))


@dataclass
class ConstructionConfig:
    """Inputs of one construction run.

    ``delta`` is the quantization threshold on the per-bit cutoff rates;
    per-iteration simulation stops at the first of ``failure_target``
    failures or ``trials_per_iteration`` trials.
    """

    n_bits: int
    k: int
    target_ebn0_db: float
    delta: float = 0.5
    trials_per_iteration: int = 100_000
    failure_target: int = 200
    rng_seed: int = 0
    conv: ConvSpec = field(default_factory=lambda: ConvSpec.from_octal(0o3211))
    fano_delta: float = DEFAULT_DELTA
    max_visits: int | None = None
    batch_size: int = 128
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.k <= self.n_bits:
            raise ValueError(f"need 0 < k <= n_bits, got k={self.k}, n={self.n_bits}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"quantization threshold must be in (0, 1), got {self.delta}")
        if self.trials_per_iteration < 1:
            raise ValueError("trials_per_iteration must be positive")
        if self.failure_target < 1:
            raise ValueError("failure_target must be positive")

    def visits_cap(self) -> int:
        if self.max_visits is not None:
            return self.max_visits
        return CONSTRUCTION_MAX_VISITS_PER_BIT * self.n_bits


@dataclass
class IterationRecord:
    """One removal step: the histogram snapshot and the index taken out."""

    iteration: int
    removed_index: int
    trials: int
    failures: int
    aborts: int
    histogram: np.ndarray
    fallback: bool = False  # no failures observed; least-reliable index removed

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "removed_index": self.removed_index,
            "trials": self.trials,
            "failures": self.failures,
            "aborts": self.aborts,
            "fallback": self.fallback,
            "histogram": self.histogram.tolist(),
        }


@dataclass
class ConstructionResult:
    profile: RateProfile
    initial_profile: RateProfile
    iterations: list[IterationRecord]
    complexity_ok: bool
    first_violation: int | None

    def to_dict(self) -> dict:
        from .profiles import to_hex

        return {
            "n": self.profile.n_bits,
            "k": self.profile.k,
            "initial_size": self.initial_profile.k,
            "profile_hex": to_hex(self.profile),
            "initial_profile_hex": to_hex(self.initial_profile),
            "complexity_ok": self.complexity_ok,
            "first_violation": self.first_violation,
            "iterations": [r.to_dict() for r in self.iterations],
        }


def initial_profile(table: ReliabilityTable, rate: float, delta: float) -> RateProfile:
    """Data positions = indices whose cutoff rate quantizes to 1 at threshold delta.

    Raises :class:`InfeasibleTargetSnr` unless N*rate is strictly below the
    number of selected indices.
    """
    mask = np.array([quantize(e0, delta) for e0 in table.cutoff_rates], dtype=np.uint8)
    selected = int(mask.sum())
    required = table.n_bits * rate
    if not required < selected:
        raise InfeasibleTargetSnr(required, selected)
    return RateProfile(mask)


def fbe_index(v: np.ndarray, v_hat: np.ndarray) -> int | None:
    """Smallest position (0-based) where the two words disagree, or None."""
    v = np.asarray(v)
    v_hat = np.asarray(v_hat)
    if v.shape != v_hat.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {v_hat.shape}")
    diff = v != v_hat
    if not diff.any():
        return None
    return int(np.argmax(diff))


def mc_construct(
    cfg: ConstructionConfig,
    table: ReliabilityTable,
    initial: RateProfile | None = None,
) -> RateProfile:
    """Run the construction and return the final k-position profile."""
    return mc_construct_detailed(cfg, table, initial).profile


def mc_construct_detailed(
    cfg: ConstructionConfig,
    table: ReliabilityTable,
    initial: RateProfile | None = None,
) -> ConstructionResult:
    """Full construction with the per-iteration log.

    Each iteration simulates the current code at the target SNR until the
    failure budget is met, then removes the argmax of the first-bit-error
    histogram (ties toward the smallest index). Runs exactly
    ``initial_size - k`` iterations. An iteration that observes no failures
    removes the least reliable remaining data position instead and is
    flagged in its record. Deterministic for a fixed config, independent of
    batch size and worker count.
    """
    if table.n_bits != cfg.n_bits:
        raise ValueError(f"table is for N={table.n_bits}, config wants N={cfg.n_bits}")
    if abs(table.ebn0_db - cfg.target_ebn0_db) > 1e-9:
        raise ValueError(
            f"table built at {table.ebn0_db} dB, config targets {cfg.target_ebn0_db} dB"
        )
    if initial is None:
        initial = initial_profile(table, cfg.k / cfg.n_bits, cfg.delta)
    elif initial.n_bits != cfg.n_bits:
        raise ValueError("initial profile length does not match the config")
    if initial.k < cfg.k:
        raise ValueError(
            f"initial profile has only {initial.k} data positions, need >= {cfg.k}"
        )

    sigma = noise_sigma(cfg.target_ebn0_db, cfg.k / cfg.n_bits)
    bias = table.cutoff_rates
    profile = initial
    records: list[IterationRecord] = []
    for iteration in range(initial.k - cfg.k):
        hist = FbeHistogram.zeros(cfg.n_bits)
        aborts = 0
        batches = iter_fano_batches(
            profile,
            cfg.conv,
            sigma,
            bias,
            cfg.fano_delta,
            cfg.visits_cap(),
            seed=cfg.rng_seed,
            stream=iteration,
            max_trials=cfg.trials_per_iteration,
            batch_size=cfg.batch_size,
            workers=cfg.workers,
        )
        for batch in batches:
            fail = (batch.v_hat != batch.v_tx).any(axis=1) & (batch.abort == 0)
            keep = _stop_cut(fail, cfg.failure_target - hist.failures_observed)
            for t in np.flatnonzero(fail[:keep]):
                j = int(np.argmax(batch.v_tx[t] != batch.v_hat[t]))
                hist.counts[j] += 1
            hist.trials_observed += keep
            hist.failures_observed += int(fail[:keep].sum())
            aborts += int(batch.abort[:keep].sum())
            if hist.failures_observed >= cfg.failure_target:
                break

        if hist.failures_observed > 0:
            removed = int(np.argmax(hist.counts))
            fallback = False
        else:
            # SNR too generous for the trial budget: drop the least reliable
            # remaining data position so the removal count stays exact.
            info = profile.info_indices
            removed = int(info[np.argmin(table.llr_means[info])])
            fallback = True
        mask = profile.mask.copy()
        if mask[removed] != 1:
            raise RuntimeError(
                f"internal error: removal index {removed} is not a data position"
            )
        mask[removed] = 0
        profile = RateProfile(mask)
        records.append(
            IterationRecord(
                iteration=iteration,
                removed_index=removed,
                trials=hist.trials_observed,
                failures=hist.failures_observed,
                aborts=aborts,
                histogram=hist.counts,
                fallback=fallback,
            )
        )

    ok, first = check_complexity_condition(profile, table.cutoff_rates)
    return ConstructionResult(
        profile=profile,
        initial_profile=initial,
        iterations=records,
        complexity_ok=ok,
        first_violation=first,
    )


def post_fbe_error_counts(
    failures: list[tuple[np.ndarray, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    """Per-offset (wrong, observed) counts after the first bit error.

    Offset t (1-based, stored at index t-1) covers position j+t of each
    failure whose first-bit-error index j leaves that position in range.
    """
    if not failures:
        raise ValueError("need at least one decoding failure")
    n_bits = np.asarray(failures[0][0]).shape[0]
    wrong = np.zeros(n_bits - 1, dtype=np.int64)
    seen = np.zeros(n_bits - 1, dtype=np.int64)
    for v, v_hat in failures:
        j = fbe_index(v, v_hat)
        if j is None:
            raise ValueError("failure list contains an equal (v, v_hat) pair")
        tail = np.asarray(v)[j + 1 :] != np.asarray(v_hat)[j + 1 :]
        wrong[: tail.shape[0]] += tail
        seen[: tail.shape[0]] += 1
    return wrong, seen


def fbe_error_distribution(
    failures: list[tuple[np.ndarray, np.ndarray]],
) -> np.ndarray:
    """Per-offset error frequency after the first bit error.

    For each failure, align at its first-bit-error index j and mark which of
    positions j+1, j+2, ... were decoded wrongly; entry t-1 of the result is
    the fraction of failures (among those long enough to have offset t) with
    an error at j+t. The length equals the largest available offset.
    """
    wrong, seen = post_fbe_error_counts(failures)
    valid = seen > 0
    if not valid.any():
        return np.empty(0)
    last = int(np.flatnonzero(valid)[-1]) + 1
    return wrong[:last] / np.maximum(seen[:last], 1)


def mean_post_fbe_error_fraction(
    failures: list[tuple[np.ndarray, np.ndarray]],
) -> float:
    """Overall fraction of post-FBE positions decoded wrongly (pooled)."""
    if not failures:
        raise ValueError("need at least one decoding failure")
    wrong = 0
    total = 0
    for v, v_hat in failures:
        j = fbe_index(v, v_hat)
        if j is None:
            raise ValueError("failure list contains an equal (v, v_hat) pair")
        tail = np.asarray(v)[j + 1 :] != np.asarray(v_hat)[j + 1 :]
        wrong += int(tail.sum())
        total += tail.shape[0]
    return wrong / total if total else float("nan")
