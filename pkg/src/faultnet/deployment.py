"""Random node placement, iid failures and flow pairing.

Every random draw is keyed by ``(base_seed, trial_index, stream)`` through
:class:`numpy.random.SeedSequence`, so any trial can be regenerated in
isolation and in any order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

# Independent sub-streams of one trial.
STREAM_PLACEMENT = 0
STREAM_FAILURES = 1
STREAM_PAIRING = 2
STREAM_CHANNEL = 3


@dataclass(frozen=True)
class SeedSpec:
    base_seed: int
    trial_index: int = 0

    def rng(self, stream: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.base_seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.trial_index), int(stream)),
        )
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class Deployment:
    positions: np.ndarray  # shape (n, 2)

    @property
    def n(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class FailureMask:
    faulty: np.ndarray  # bool, shape (n,)
    q: float

    @property
    def alive(self) -> np.ndarray:
        return ~self.faulty

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(~self.faulty))

    @property
    def n_faulty(self) -> int:
        return int(np.count_nonzero(self.faulty))


@dataclass(frozen=True, eq=False)
class FlowSet:
    pairs: np.ndarray  # int, shape (N_q, 2): (source, destination)

    @property
    def count(self) -> int:
        return len(self.pairs)


def place_nodes(n: int, seed: SeedSpec) -> Deployment:
    if n < 0:
        raise InvalidParameterError(f"n must be >= 0, got {n}")
    pos = seed.rng(STREAM_PLACEMENT).random((n, 2))
    return Deployment(pos)


def sample_failures(d: Deployment, q: float, seed: SeedSpec) -> FailureMask:
    """Mark each node faulty independently with probability ``q``.

    A node is faulty when its uniform draw falls below ``q``. Using the same
    seed with a larger ``q`` therefore only adds failures (coupled sampling).
    """
    if not 0.0 <= q <= 1.0:
        raise InvalidParameterError(f"q must lie in [0, 1], got {q}")
    u = seed.rng(STREAM_FAILURES).random(d.n)
    return FailureMask(u < q, float(q))


def pair_flows(mask: FailureMask, seed: SeedSpec) -> FlowSet:
    """Uniform random perfect matching over the non-faulty nodes.

    With an odd survivor count the node left at the end of the random
    permutation stays unmatched.
    """
    alive = np.flatnonzero(~mask.faulty)
    perm = seed.rng(STREAM_PAIRING).permutation(alive)
    n_pairs = len(perm) // 2
    pairs = perm[: 2 * n_pairs].reshape(n_pairs, 2)
    return FlowSet(pairs.astype(np.int64))
