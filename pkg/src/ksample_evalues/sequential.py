"""Anytime-valid sequential testing over k asynchronous data streams.

Observations arrive in k separate streams at possibly different rates.  A
pre-declared multiplicity m_j per stream defines virtual blocks: a block
completes once every stream j has m_j unconsumed observations, and is scored
by one of the per-block e-values of ``evariables`` after flattening to
k' = sum_j m_j groups with the group means repeated accordingly.  The running
e-process is the product of completed-block e-values; incomplete buffers never
contribute.  Monitoring the product against 1/alpha is valid at every data-
dependent stopping time, so the test may stop or continue freely; the null is
rejected as soon as the product reaches 1/alpha (the boundary itself rejects,
the conservative-safe reading of "exceeds").

Multiplicities may be adapted between blocks; changing them while any
observation is buffered is refused, because it would redefine the block being
filled.

``simulate`` runs seeded campaigns (Type-I error or power, stopping times)
for the shipped stopping policies; policies are pure functions of the public
trace of per-block e-values and cannot peek ahead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .expfam import Alternative, FamilySpec, spawn_generator
from . import evariables as ev


class Decision(str, enum.Enum):
    CONTINUE_OR_STOP_FREELY = "continue_or_stop_freely"
    REJECT_NULL = "reject_null"


class BlockBoundaryError(RuntimeError):
    """Multiplicities were changed while a block was partially filled."""


def expand_multiplicities(
    spec: FamilySpec, alt: Alternative, multiplicities: Sequence[int]
) -> Alternative:
    """Flatten a multiplicity block to sum(m_j) groups with repeated means."""
    if len(multiplicities) != alt.k:
        raise ValueError("need one multiplicity per group")
    if any(int(m) != m or m < 1 for m in multiplicities):
        raise ValueError("multiplicities must be positive integers")
    means: list[float] = []
    for mu, m in zip(alt.mu, multiplicities):
        means.extend([mu] * int(m))
    return Alternative.from_means(spec, means)


class StreamState:
    """Single-writer state of one sequential k-sample test."""

    def __init__(
        self,
        spec: FamilySpec,
        alt: Alternative,
        kind,
        alpha: float,
        multiplicities: Sequence[int] | None = None,
        mixture=None,
    ):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.spec = spec
        self.alt = alt
        self.kind = ev.EValueKind(kind)
        self.alpha = float(alpha)
        self.mixture = mixture
        if self.kind is ev.EValueKind.GRO_M:
            if mixture is None:
                raise ValueError("kind 'gro_m' needs a certified mixture")
            mixture.require_certificate()
        self.multiplicities = tuple(
            int(m) for m in (multiplicities or [1] * alt.k)
        )
        if len(self.multiplicities) != alt.k:
            raise ValueError("need one multiplicity per group")
        self._buffers: list[list[float]] = [[] for _ in range(alt.k)]
        self._flat_alt: Alternative | None = None
        self.blocks_completed = 0
        self.log_evalue = 0.0
        self.block_log_values: list[float] = []

    @property
    def k(self) -> int:
        return self.alt.k

    def _evaluate_block(self, block) -> float:
        if self._flat_alt is None:
            self._flat_alt = expand_multiplicities(
                self.spec, self.alt, self.multiplicities
            )
        return float(
            ev._log_statistic(self.spec, self._flat_alt, block, self.kind, self.mixture)
        )

    def ingest(self, group: int, value: float) -> "StreamState":
        """Append one observation to stream ``group`` (1-based).

        Out-of-support values are rejected with the state unchanged.
        Completes as many blocks as the buffers allow.
        """
        if not 1 <= group <= self.k:
            raise ValueError(f"group must be in 1..{self.k}, got {group}")
        self.spec.check_support(value)
        self._buffers[group - 1].append(float(value))
        self._drain()
        return self

    def ingest_block(self, block) -> "StreamState":
        """Ingest one fully formed block (m_j values per group, in order)."""
        block = np.asarray(block, dtype=float)
        if block.size != sum(self.multiplicities):
            raise ValueError(
                f"block must carry {sum(self.multiplicities)} values"
            )
        pos = 0
        for j, m in enumerate(self.multiplicities):
            for v in block[pos : pos + m]:
                self.ingest(j + 1, v)
            pos += m
        return self

    def _drain(self) -> None:
        while all(
            len(buf) >= m for buf, m in zip(self._buffers, self.multiplicities)
        ):
            flat: list[float] = []
            for j, m in enumerate(self.multiplicities):
                flat.extend(self._buffers[j][:m])
                del self._buffers[j][:m]
            logv = self._evaluate_block(np.asarray(flat))
            self.block_log_values.append(logv)
            self.log_evalue += logv
            self.blocks_completed += 1

    def pending(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self._buffers)

    def decide(self) -> Decision:
        """Anytime-valid monitoring: reject once the e-process reaches 1/alpha."""
        if self.log_evalue >= -math.log(self.alpha):
            return Decision.REJECT_NULL
        return Decision.CONTINUE_OR_STOP_FREELY

    def set_multiplicities(self, new: Sequence[int]) -> "StreamState":
        """Adopt new multiplicities for future blocks; only at a boundary."""
        if any(len(b) for b in self._buffers):
            raise BlockBoundaryError(
                f"multiplicity change refused: pending observations {self.pending()} "
                "belong to a partially filled block"
            )
        if len(new) != self.k:
            raise ValueError("need one multiplicity per group")
        if any(int(m) != m or m < 1 for m in new):
            raise ValueError("multiplicities must be positive integers")
        self.multiplicities = tuple(int(m) for m in new)
        self._flat_alt = None
        return self

    def validity_caveat(self) -> Optional[dict]:
        """For certified mixtures: the Type-I inflation bound accumulated so far.

        A per-block certificate c bounds each block's null expectation, so
        after B blocks the rejection probability is at most alpha * c^B.
        """
        if self.kind is not ev.EValueKind.GRO_M:
            return None
        c = self.mixture.require_certificate().sup_expectation
        return {
            "certified_sup_expectation": c,
            "blocks": self.blocks_completed,
            "type1_bound_factor": c**self.blocks_completed,
        }


class FixedHorizonPolicy:
    """Stop after exactly n blocks."""

    name = "fixed"

    def __init__(self, horizon: int):
        self.horizon = int(horizon)

    def should_stop(self, block_log_values: Sequence[float], alpha: float) -> bool:
        return len(block_log_values) >= self.horizon


class ThresholdCrossingPolicy:
    """Stop at the first threshold crossing, else at the block budget.

    The aggressive optional-stopping policy: it hunts for a rejection.
    """

    name = "threshold"

    def __init__(self, max_blocks: int):
        self.max_blocks = int(max_blocks)

    def should_stop(self, block_log_values: Sequence[float], alpha: float) -> bool:
        if len(block_log_values) >= self.max_blocks:
            return True
        return float(np.sum(block_log_values)) >= -math.log(alpha)


class RandomBudgetPolicy:
    """Stop when a pre-drawn budget of blocks is exhausted."""

    name = "budget"

    def __init__(self, budget: int):
        self.budget = int(budget)

    def should_stop(self, block_log_values: Sequence[float], alpha: float) -> bool:
        return len(block_log_values) >= self.budget


def make_policy(name: str, max_blocks: int, rng=None):
    name = name.strip().lower()
    if name == "fixed":
        return FixedHorizonPolicy(max_blocks)
    if name == "threshold":
        return ThresholdCrossingPolicy(max_blocks)
    if name == "budget":
        if rng is None:
            raise ValueError("budget policy needs an rng to draw the budget")
        return RandomBudgetPolicy(int(rng.integers(1, max_blocks + 1)))
    raise ValueError(f"unknown policy '{name}'; use fixed, threshold or budget")


@dataclass(frozen=True)
class SimulationSummary:
    trials: int
    rejection_rate: float
    rejection_stderr: float
    mean_stop_time: float
    truth: str
    kind: str
    alpha: float
    policy: str
    seed: int
    stop_times: np.ndarray = field(repr=False)
    rejected: np.ndarray = field(repr=False)
    final_log_evalues: np.ndarray = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "trials": self.trials,
            "rejection_rate": self.rejection_rate,
            "rejection_stderr": self.rejection_stderr,
            "mean_stop_time": self.mean_stop_time,
            "truth": self.truth,
            "kind": self.kind,
            "alpha": self.alpha,
            "policy": self.policy,
            "seed": self.seed,
        }


def simulate(
    spec: FamilySpec,
    alt: Alternative,
    kind,
    alpha: float,
    policy,
    trials: int,
    seed: int,
    max_blocks: int = 200,
    truth: str = "null",
    null_mu: float | None = None,
    multiplicities: Sequence[int] | None = None,
    mixture=None,
) -> SimulationSummary:
    """Seeded campaign of sequential tests.

    ``truth`` is "null" (all streams i.i.d. at ``null_mu``, defaulting to the
    pooled mean of the alternative) or "alt" (streams follow the alternative).
    Per-block e-values use the declared alternative either way.  Every trial
    draws from an independent counter-based substream, so campaigns are
    reproducible bit-for-bit and parallelizable across trials.

    ``policy`` is "threshold", "fixed" or "budget" (evaluated vectorized), or
    any object with ``should_stop(block_log_values, alpha)``, consulted after
    every completed block on the trace prefix only.
    """
    kind = ev.EValueKind(kind)
    multiplicities = tuple(int(m) for m in (multiplicities or [1] * alt.k))
    flat_alt = expand_multiplicities(spec, alt, multiplicities)
    kprime = flat_alt.k
    if truth == "null":
        draw_means = [
            null_mu if null_mu is not None else alt.mu0_star
        ] * kprime
    elif truth == "alt":
        draw_means = list(flat_alt.mu)
    else:
        raise ValueError("truth must be 'null' or 'alt'")

    log_thresh = -math.log(alpha)
    # per-trial substreams: draw data (and any policy budget) independently
    blocks = np.empty((trials, max_blocks, kprime))
    budgets = np.zeros(trials, dtype=int)
    for t in range(trials):
        rng = spawn_generator(seed, t)
        if policy == "budget":
            budgets[t] = int(rng.integers(1, max_blocks + 1))
        blocks[t] = np.stack(
            [spec.sample(m, max_blocks, rng) for m in draw_means], axis=-1
        )
    logs = ev._log_statistic(spec, flat_alt, blocks, kind, mixture)
    running = np.cumsum(logs, axis=1)

    if policy == "threshold":
        crossed = running >= log_thresh
        any_cross = crossed.any(axis=1)
        stop_times = np.where(
            any_cross, crossed.argmax(axis=1) + 1, max_blocks
        ).astype(int)
    elif policy == "fixed":
        stop_times = np.full(trials, max_blocks, dtype=int)
    elif policy == "budget":
        stop_times = budgets
    else:
        # custom policy objects: pure function of the trace prefix
        pol = policy
        stop_times = np.full(trials, max_blocks, dtype=int)
        for t in range(trials):
            for b in range(1, max_blocks + 1):
                if pol.should_stop(logs[t, :b], alpha):
                    stop_times[t] = b
                    break
    finals = running[np.arange(trials), stop_times - 1]
    rejected = finals >= log_thresh
    rate = float(rejected.mean())
    se = float(math.sqrt(max(rate * (1.0 - rate), 1e-12) / trials))
    return SimulationSummary(
        trials,
        rate,
        se,
        float(stop_times.mean()),
        truth,
        kind.value,
        float(alpha),
        policy if isinstance(policy, str) else getattr(policy, "name", "custom"),
        int(seed),
        stop_times,
        rejected,
        finals,
    )
