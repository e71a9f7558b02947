"""Simulated MLaaS-over-TEE oracle with side-channel trace observation.

``observe`` is the only interface the extractor may use: it returns the
true prediction plus a branch trace recovered through one of three
channel models. The perfect channel hands the trace over directly; the
register channel encodes it into history-register doublets, pushes the
enclave-exit doublets on top, reads the register back through predictor
collisions and decodes it; the step-counter channel replays it from
per-instruction retired-branch events.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

from . import phr
from .errors import ChannelDecodeError, TruncatedTraceError
from .trees import BranchTrace, DecisionTree, infer_with_trace

PERFECT = "perfect"
PHR_SGX = "phr_sgx"
STEP_COUNTER_SEV = "step_counter_sev"
_KINDS = (PERFECT, PHR_SGX, STEP_COUNTER_SEV)

DEFAULT_EXIT_DOUBLETS = 103


@dataclass(frozen=True)
class ChannelModel:
    """Which side channel leaks the trace, and its parameters.

    ``flip_noise`` flips each returned trace bit independently with the
    given probability; the prediction itself is never perturbed. The
    register parameters only matter to the ``phr_sgx`` kind.
    """

    kind: str = PERFECT
    phr_exit_doublets: int = DEFAULT_EXIT_DOUBLETS
    phr_capacity: int = phr.PHR_CAPACITY
    doublets_per_node: int = phr.DOUBLETS_PER_NODE
    flip_noise: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not self.phr_exit_doublets < self.phr_capacity:
            raise ValueError("exit doublets must fit inside the register")
        if self.phr_capacity > phr.PHR_CAPACITY:
            raise ValueError(f"register capacity is at most {phr.PHR_CAPACITY} doublets")
        if not 0.0 <= self.flip_noise < 1.0:
            raise ValueError("flip_noise must be in [0, 1)")


def max_extractable_depth(model: ChannelModel) -> int:
    """Deepest leaf whose full trace survives the register budget.

    After the exit code consumes its doublets, the remaining space holds
    whole per-node patterns plus one bare doublet for the decision after
    the root.
    """
    budget = model.phr_capacity - model.phr_exit_doublets
    return (budget - 1) // model.doublets_per_node + 1


@dataclass
class OracleResult:
    label: object
    trace: BranchTrace
    queries_observed: int
    truncated: bool = False


@lru_cache(maxsize=8)
def exit_doublet_sequence(count: int) -> tuple[int, ...]:
    """Fixed pseudorandom doublets the enclave exit pushes, in push order."""
    rng = random.Random(0xE517)
    return tuple(rng.randrange(4) for _ in range(count))


class StepLayout:
    """Simulated code layout for the single-stepped inference binary.

    Each node costs a deterministic number of non-branch steps, then its
    conditional branch; left traversals additionally retire the follow-up
    unconditional jump. Offsets of the conditional steps identify where
    the per-node decisions live in the event log.
    """

    def __init__(self, seed: int = 0, max_depth: int = 64):
        rng = random.Random(seed)
        self.filler_steps = [1 + rng.randrange(3) for _ in range(max_depth)]

    def events_for_trace(self, trace: BranchTrace) -> tuple[list[tuple[int, int]], list[int]]:
        """(event log, node step offsets) for one traversal.

        Events are (retired_conditional, retired_taken) pairs per step.
        """
        log: list[tuple[int, int]] = []
        offsets: list[int] = []
        for i, bit in enumerate(trace):
            log.extend([(0, 0)] * self.filler_steps[i % len(self.filler_steps)])
            offsets.append(len(log))
            if bit == 1:
                log.append((1, 1))  # taken conditional: else/right path
            else:
                log.append((1, 0))  # not taken, then the follow-up jump
                log.append((0, 1))
        log.append((0, 1))  # function return
        return log, offsets


def decode_step_counters(
    event_log: Sequence[tuple[int, int]],
    node_step_offsets: Sequence[int],
) -> BranchTrace:
    """Recover a branch trace from retired-branch counter events.

    At each node offset a conditional must have retired; a taken one is
    the else/right path (bit 1), a not-taken one the then/left path
    (bit 0). The offsets come from knowing the simulated code layout.
    """
    bits = []
    for offset in node_step_offsets:
        if not 0 <= offset < len(event_log):
            raise ChannelDecodeError(f"node step offset {offset} outside the event log")
        conditional, taken = event_log[offset]
        if not conditional:
            raise ChannelDecodeError(f"no retired conditional branch at step {offset}")
        bits.append(1 if taken else 0)
    return BranchTrace(bits)


class ChannelSession:
    """One attack run's exclusive handle on the oracle.

    Owns the query counter and the noise RNG; strict sessions raise on
    register truncation instead of returning a suffix.
    """

    def __init__(self, model: ChannelModel, seed: int = 0, strict: bool = True,
                 layout_seed: int = 0):
        self.model = model
        self.strict = strict
        self.layout_seed = layout_seed
        self.queries_observed = 0
        self._noise_rng = random.Random(seed)
        self._step_layout = StepLayout(layout_seed)
        self.pht_mispredicts = 0

    def reset(self) -> None:
        self.queries_observed = 0


def observe(tree: DecisionTree, x: Sequence[float], session: ChannelSession) -> OracleResult:
    """Query the protected model once and observe its branch trace.

    The returned label is always the true prediction; only the trace goes
    through the configured side channel (and noise, if any).
    """
    model = session.model
    label, true_trace = infer_with_trace(tree, x)
    session.queries_observed += 1
    truncated = False

    if model.kind == PERFECT:
        trace = true_trace
    elif model.kind == STEP_COUNTER_SEV:
        log, offsets = session._step_layout.events_for_trace(true_trace)
        trace = decode_step_counters(log, offsets)
    else:
        trace, truncated = _observe_via_register(true_trace, model, session)
        if truncated and session.strict:
            raise TruncatedTraceError(
                f"leaf depth {len(true_trace)} exceeds the register budget of "
                f"{max_extractable_depth(model)} decisions",
                recovered_depth=len(trace), true_depth=len(true_trace))

    if model.flip_noise > 0.0:
        rng = session._noise_rng
        p = model.flip_noise
        trace = BranchTrace([b ^ 1 if rng.random() < p else b for b in trace])

    return OracleResult(label=label, trace=trace,
                        queries_observed=session.queries_observed,
                        truncated=truncated)


def _observe_via_register(true_trace: BranchTrace, model: ChannelModel,
                          session: ChannelSession) -> tuple[BranchTrace, bool]:
    """Encode, exit, read back via collisions, decode."""
    stream = phr.encode_inference(true_trace, session.layout_seed)
    exit_newest_first = list(reversed(exit_doublet_sequence(model.phr_exit_doublets)))
    register = (exit_newest_first + stream)[:model.phr_capacity]
    register.extend([0] * (model.phr_capacity - len(register)))

    pht = phr.PhtSim()
    recovered = phr.extract_via_collisions(register, pht)
    session.pht_mispredicts += pht.mispredict_counter
    decoded = phr.decode_branch_trace(recovered, model.phr_exit_doublets)
    # The register image alone cannot distinguish an exactly-at-budget
    # trace from a deeper one; the simulator knows the true depth.
    truncated = len(decoded.trace) < len(true_trace)
    return decoded.trace, truncated


def make_oracle(tree: DecisionTree, session: ChannelSession) -> Callable[[Sequence[float]], OracleResult]:
    """Bind a tree and session into the single-argument oracle callable
    the attack logic consumes."""
    return lambda x: observe(tree, x, session)


def label_only_oracle(tree: DecisionTree, session: ChannelSession) -> Callable[[Sequence[float]], object]:
    """Black-box view of the same service: predictions without traces."""
    def query(x):
        return observe(tree, x, session).label
    return query
