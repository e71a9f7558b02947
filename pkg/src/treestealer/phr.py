"""Bit-exact branch-history-register and pattern-history-table simulation.

The history register is a 194-entry shift queue of 2-bit doublets; taken
branches shift in a footprint of (branch, target) addresses, not-taken
branches leave it untouched. A small tagged predictor on top of it makes
the prime/probe readout loop work: writing candidate doublets and counting
mispredictions of a shared test branch recovers the register content one
doublet at a time.

Doublet lists everywhere in this module are newest-first: index 0 is the
most recently shifted-in doublet.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import CollisionAmbiguityError, DoubletDecodeError
from .trees import BranchTrace

PHR_CAPACITY = 194

# Per-node doublet pattern of the simulated inference loop, push order
# (oldest first): eight fixed always-taken branches, then one doublet
# whose value depends on the traversal direction.
COMMON_BLOCK_PUSH_ORDER = (2, 0, 3, 1, 0, 1, 3, 0)
LEFT_DOUBLET = 3   # not-taken conditional, follow-up unconditional jump
RIGHT_DOUBLET = 2  # taken conditional branch
DOUBLETS_PER_NODE = len(COMMON_BLOCK_PUSH_ORDER) + 1

# History windows (in doublets) folded into the predictor index, one per
# table; the base table (window 0) ignores history entirely.
PHT_WINDOWS = (0, 24, 68, 194)
COUNTER_INIT = 3  # weak not-taken
TAG_MASK = 0x1FFF


def footprint(branch_addr: int, target_addr: int) -> int:
    """Doublet shifted in by a taken branch: XOR of branch and target
    address, folded with its own bits 2-3."""
    if branch_addr < 0 or target_addr < 0:
        raise ValueError("addresses must be non-negative")
    x = branch_addr ^ target_addr
    return (x ^ (x >> 2)) & 3


class PhrState:
    """Fixed-capacity queue of 2-bit doublets, index 0 = newest.

    Stored as one integer with the newest doublet in the low two bits;
    untouched positions read as zero, so the length is always exactly
    the capacity.
    """

    __slots__ = ("capacity", "_bits", "_mask")

    def __init__(self, capacity: int = PHR_CAPACITY):
        self.capacity = capacity
        self._bits = 0
        self._mask = (1 << (2 * capacity)) - 1

    def push_taken(self, branch_addr: int, target_addr: int) -> None:
        """Shift by one doublet and insert the branch's footprint."""
        self.push_doublet(footprint(branch_addr, target_addr))

    def push_doublet(self, doublet: int) -> None:
        if doublet not in (0, 1, 2, 3):
            raise ValueError(f"doublet must be 2-bit, got {doublet}")
        self._bits = ((self._bits << 2) | doublet) & self._mask

    def shift(self, n: int) -> None:
        """Insert n zero doublets at the newest end."""
        if not 0 <= n <= self.capacity:
            raise ValueError(f"shift amount {n} outside [0, {self.capacity}]")
        self._bits = (self._bits << (2 * n)) & self._mask

    def clear(self) -> None:
        self._bits = 0

    def write(self, values: Sequence[int]) -> None:
        """Set the newest len(values) doublets (newest-first) and zero the rest."""
        if len(values) > self.capacity:
            raise ValueError(f"{len(values)} doublets exceed capacity {self.capacity}")
        bits = 0
        for i, v in enumerate(values):
            if v not in (0, 1, 2, 3):
                raise ValueError(f"doublet must be 2-bit, got {v}")
            bits |= v << (2 * i)
        self._bits = bits

    def __getitem__(self, index: int) -> int:
        if not 0 <= index < self.capacity:
            raise IndexError(index)
        return (self._bits >> (2 * index)) & 3

    def __len__(self) -> int:
        return self.capacity

    @property
    def doublets(self) -> tuple[int, ...]:
        bits = self._bits
        out = []
        for _ in range(self.capacity):
            out.append(bits & 3)
            bits >>= 2
        return tuple(out)

    def window_bits(self, doublet_count: int) -> int:
        """The newest ``doublet_count`` doublets as one integer."""
        return self._bits & ((1 << (2 * doublet_count)) - 1)

    def __eq__(self, other) -> bool:
        if isinstance(other, PhrState):
            return self.capacity == other.capacity and self._bits == other._bits
        return NotImplemented

    def __hash__(self):
        return hash((self.capacity, self._bits))


def _fold7(x: int, bit_width: int) -> int:
    """XOR-fold a bit string into 7 bits, 7-bit group alignment preserved."""
    w = ((bit_width + 6) // 7) * 7
    while w > 7:
        half = ((w + 13) // 14) * 7  # smallest multiple of 7 >= w / 2
        x = (x & ((1 << half) - 1)) ^ (x >> half)
        w = half
    return x


class PhtSim:
    """Tagged tables of 3-bit saturating counters over folded history.

    Table 0 is indexed by address bits alone; tables 1-3 fold
    progressively longer history windows into a 7-bit index combined
    with bit 6 of the branch address. Tags are the 13 low address bits.
    Prediction comes from the longest-history table holding a matching
    tag, falling back to the base table; counters move one step toward
    each outcome and saturate at [0, 7].
    """

    __slots__ = ("entries", "mispredict_counter")

    def __init__(self):
        self.entries: dict[int, int] = {}
        self.mispredict_counter = 0

    @staticmethod
    def _keys_from_bits(phr_bits: int, branch_addr: int) -> list[int]:
        """Entry keys for tables 0..3, base first, from a raw register int."""
        tag = branch_addr & TAG_MASK
        addr_bit = (branch_addr >> 6) & 1
        keys = [(0 << 25) | (((branch_addr >> 2) & 0x7F) << 13)]
        for table in (1, 2, 3):
            window = PHT_WINDOWS[table]
            window_bits = phr_bits & ((1 << (2 * window)) - 1)
            idx = _fold7(window_bits, 2 * window) ^ (addr_bit << 6)
            keys.append((table << 25) | (idx << 13) | tag)
        return keys

    @staticmethod
    def _keys(phr: PhrState, branch_addr: int) -> list[int]:
        return PhtSim._keys_from_bits(phr._bits, branch_addr)

    def lookup_update(self, phr: PhrState, branch_addr: int, taken: bool) -> tuple[bool, bool]:
        """Predict the branch, update counters, return (predicted_taken,
        mispredicted). Never touches the history register itself."""
        keys = self._keys(phr, branch_addr)
        return self._lookup_update_keys(keys, taken)

    def _lookup_update_keys(self, keys: list[int], taken: bool) -> tuple[bool, bool]:
        entries = self.entries
        provider = keys[0]
        for key in (keys[3], keys[2], keys[1]):
            if key in entries:
                provider = key
                break
        counter = entries.get(provider, COUNTER_INIT)
        predicted = counter >= 4
        mispredicted = predicted != taken
        if mispredicted:
            self.mispredict_counter += 1
        if taken:
            entries[provider] = min(7, counter + 1)
        else:
            entries[provider] = max(0, counter - 1)
        for key in keys[1:]:
            if key not in entries:
                entries[key] = COUNTER_INIT + (1 if taken else -1)
        return predicted, mispredicted


# Address of the shared prime/probe test branch; only its low 13 bits and
# bit 6 matter to the predictor.
_TEST_BRANCH_ADDR = 0x41A4


def extract_via_collisions(
    victim_doublets: Sequence[int],
    pht: PhtSim,
    rounds: int = 8,
    probe_counts: list[list[int]] | None = None,
) -> list[int]:
    """Recover a doublet sequence through enforced predictor collisions.

    For position k the prime path replays the victim and shifts the
    register by capacity-1-k, isolating doublet k at the oldest slot with
    everything newer known, then runs the test branch not-taken. The probe
    path writes each candidate X with the known suffix, runs the test
    branch taken, and counts its mispredictions over ``rounds``
    repetitions; the candidate colliding with the prime entry spikes.

    Predictor entries are flushed between positions: index aliasing with
    saturated leftovers from earlier positions would otherwise drown the
    spike. Pass ``probe_counts`` to record the four per-candidate
    mispredict counts of every position.
    """
    if rounds < 2:
        raise ValueError("rounds must be at least 2 to separate the spike")
    victim = [int(d) for d in victim_doublets]
    if len(victim) > PHR_CAPACITY:
        raise ValueError("victim exceeds register capacity")
    replayed = PhrState()
    replayed.write(victim)
    mask = (1 << (2 * PHR_CAPACITY)) - 1
    oldest_shift = 2 * (PHR_CAPACITY - 1)
    recovered: list[int] = []
    known_bits = 0  # doublets recovered so far, laid out for the next position
    for k in range(len(victim)):
        pht.entries.clear()
        # Prime register content is fixed across rounds: the victim replay
        # shifted so doublet k sits at the oldest slot. A probe register
        # carries the attacker's recovered doublets in the newer slots and
        # the candidate in the oldest one.
        prime_bits = (replayed._bits << (2 * (PHR_CAPACITY - 1 - k))) & mask
        prime_keys = PhtSim._keys_from_bits(prime_bits, _TEST_BRANCH_ADDR)
        # The candidate occupies the oldest slot, outside every window but
        # the full-length one, so the four probes share their other keys.
        shared = PhtSim._keys_from_bits(known_bits, _TEST_BRANCH_ADDR)
        addr_bit_part = ((_TEST_BRANCH_ADDR >> 6) & 1) << 6
        tag = _TEST_BRANCH_ADDR & TAG_MASK
        probe_keys = []
        for x in range(4):
            idx = _fold7(known_bits | (x << oldest_shift), 2 * PHR_CAPACITY) ^ addr_bit_part
            probe_keys.append([shared[0], shared[1], shared[2],
                               (3 << 25) | (idx << 13) | tag])

        counts = [0, 0, 0, 0]
        entries = pht.entries
        pk0, pk1, pk2, pk3 = prime_keys
        mispredicts = 0
        for x in range(4):
            qk0, qk1, qk2, qk3 = probe_keys[x]
            missed = 0
            for _ in range(rounds):
                # Unrolled _lookup_update_keys, prime side (not taken).
                if pk3 in entries:
                    prov = pk3
                elif pk2 in entries:
                    prov = pk2
                elif pk1 in entries:
                    prov = pk1
                else:
                    prov = pk0
                c = entries.get(prov, COUNTER_INIT)
                if c >= 4:
                    mispredicts += 1
                entries[prov] = c - 1 if c > 0 else 0
                if pk1 not in entries:
                    entries[pk1] = COUNTER_INIT - 1
                if pk2 not in entries:
                    entries[pk2] = COUNTER_INIT - 1
                if pk3 not in entries:
                    entries[pk3] = COUNTER_INIT - 1
                # Probe side (taken).
                if qk3 in entries:
                    prov = qk3
                elif qk2 in entries:
                    prov = qk2
                elif qk1 in entries:
                    prov = qk1
                else:
                    prov = qk0
                c = entries.get(prov, COUNTER_INIT)
                if c < 4:
                    mispredicts += 1
                    missed += 1
                entries[prov] = c + 1 if c < 7 else 7
                if qk1 not in entries:
                    entries[qk1] = COUNTER_INIT + 1
                if qk2 not in entries:
                    entries[qk2] = COUNTER_INIT + 1
                if qk3 not in entries:
                    entries[qk3] = COUNTER_INIT + 1
            counts[x] = missed
        pht.mispredict_counter += mispredicts
        if probe_counts is not None:
            probe_counts.append(counts)
        best = max(counts)
        winners = [x for x in range(4) if counts[x] == best]
        if len(winners) != 1:
            raise CollisionAmbiguityError(
                f"no unique mispredict maximum at doublet {k}: counts {counts}",
                position=k)
        recovered.append(winners[0])
        # Re-lay the known suffix for position k+1: everything moves one
        # slot toward the newest end and the new doublet joins below the
        # oldest slot.
        known_bits = (known_bits >> 2) | (winners[0] << (oldest_shift - 2))
    return recovered


@dataclass(frozen=True)
class BranchLayout:
    """Synthetic code addresses of the per-node inference branches.

    The fixed block models eight always-taken branches of the traversal
    loop; the direction comes from the node's conditional branch when
    taken (right) or its follow-up unconditional jump (left). Targets are
    solved so the footprints equal the canonical doublet pattern for any
    seed.
    """

    fixed: tuple[tuple[int, int], ...]
    conditional: tuple[int, int]
    follow_jump: tuple[int, int]

    @classmethod
    def from_seed(cls, seed: int = 0) -> "BranchLayout":
        rng = random.Random(seed)

        def pair(doublet: int) -> tuple[int, int]:
            branch = rng.randrange(0x1000, 0x100000) & ~3
            return branch, branch ^ doublet

        fixed = tuple(pair(d) for d in COMMON_BLOCK_PUSH_ORDER)
        return cls(fixed=fixed, conditional=pair(RIGHT_DOUBLET), follow_jump=pair(LEFT_DOUBLET))


def encode_inference(trace: BranchTrace, layout_seed: int = 0) -> list[int]:
    """Doublets (newest-first) a traversal pushes into the register.

    Per node, the eight-branch common block then the direction doublet:
    3 for a left traversal, 2 for right. Exit-code doublets are the
    channel's business, not emitted here.
    """
    layout = BranchLayout.from_seed(layout_seed)
    pushes: list[int] = []
    for bit in trace:
        for branch, target in layout.fixed:
            pushes.append(footprint(branch, target))
        branch, target = layout.conditional if bit == 1 else layout.follow_jump
        pushes.append(footprint(branch, target))
    pushes.reverse()
    return pushes


class DecodedTrace(NamedTuple):
    trace: BranchTrace
    truncated: bool


# Newest-first rendering of the common block, as it appears when parsing
# the register from the newest end.
_COMMON_NEWEST_FIRST = tuple(reversed(COMMON_BLOCK_PUSH_ORDER))
_DIR_BITS = {LEFT_DOUBLET: 0, RIGHT_DOUBLET: 1}


def decode_branch_trace(doublets: Sequence[int], exit_count: int) -> DecodedTrace:
    """Parse per-node patterns out of a register image (newest-first).

    Drops the newest ``exit_count`` doublets, then consumes 9-doublet
    blocks toward the oldest end. A trailing bare direction doublet is
    the decision right after the root when the budget allows exactly one
    extra. ``truncated`` is set when the data runs to the register's
    oldest edge, i.e. older decisions may have been shifted out; a zero
    tail proves completeness instead.
    """
    if not 0 <= exit_count < len(doublets):
        raise ValueError("exit_count must be inside the register")
    region = [int(d) for d in doublets[exit_count:]]
    bits_deepest_first: list[int] = []
    i = 0
    n = len(region)
    while i < n:
        remaining = n - i
        head = region[i]
        if head == 0:
            if any(region[i:]):
                raise DoubletDecodeError(
                    f"zero doublet inside block {len(bits_deepest_first)}",
                    block_index=len(bits_deepest_first))
            return DecodedTrace(BranchTrace(reversed(bits_deepest_first)), False)
        if head not in _DIR_BITS:
            raise DoubletDecodeError(
                f"doublet {head} is not a direction marker at block "
                f"{len(bits_deepest_first)}", block_index=len(bits_deepest_first))
        block_len = min(DOUBLETS_PER_NODE, remaining)
        expected = _COMMON_NEWEST_FIRST[:block_len - 1]
        got = tuple(region[i + 1:i + block_len])
        if got != expected:
            raise DoubletDecodeError(
                f"fixed doublets {got} != {expected} in block "
                f"{len(bits_deepest_first)}", block_index=len(bits_deepest_first))
        bits_deepest_first.append(_DIR_BITS[head])
        if block_len < DOUBLETS_PER_NODE:
            # Partial pattern at the oldest edge: that node's direction is
            # recovered but anything older was shifted out.
            return DecodedTrace(BranchTrace(reversed(bits_deepest_first)), True)
        i += DOUBLETS_PER_NODE
    # Patterns run flush to the oldest edge; completeness is unknowable.
    return DecodedTrace(BranchTrace(reversed(bits_deepest_first)), True)


def format_doublets(doublets: Sequence[int], group: int = DOUBLETS_PER_NODE) -> str:
    """Space-grouped digit string, newest-first, groups of ``group``."""
    digits = "".join(str(int(d)) for d in doublets)
    return " ".join(digits[i:i + group] for i in range(0, len(digits), group))
