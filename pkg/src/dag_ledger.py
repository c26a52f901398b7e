import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from models import DagBlock, GENESIS_ID

logger = logging.getLogger(__name__)

DEFAULT_PARENTS_K = 2
DEFAULT_CW_THRESHOLD = 100

GENESIS = DagBlock(id=GENESIS_ID, issuer=-1, parents=(), issue_timestamp=0, work=1.0, credits_consumed=0)

_INITIAL_CAPACITY = 1024


@dataclass
class AttachResult:
    attached: List[int] = field(default_factory=list)
    weight_changed: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    pending: bool = False
    duplicate: bool = False


class DagView:
    """One node's replica of the DAG.

    Every attached block gets a local index; its past cone is stored as a
    packed bitset over those indices, so attaching a block increments the
    cumulative weight of its whole past cone with a couple of array ops.
    """

    def __init__(self, genesis: DagBlock = GENESIS) -> None:
        self.blocks: Dict[int, DagBlock] = {}
        self.children: Dict[int, Set[int]] = {}
        self.tips: Set[int] = set()
        self.pending: Dict[int, DagBlock] = {}
        self._waiting: Dict[int, Set[int]] = {}
        self._index: Dict[int, int] = {}
        self._cones: List[np.ndarray] = []
        self._cw = np.zeros(_INITIAL_CAPACITY, dtype=np.int64)
        self._ids = np.zeros(_INITIAL_CAPACITY, dtype=np.int64)
        self._newest: Optional[DagBlock] = None
        self._insert(genesis)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def newest(self) -> DagBlock:
        return self._newest

    def is_solid(self, block: DagBlock) -> bool:
        return all(parent in self.blocks for parent in block.parents)

    def missing_parents(self, block: DagBlock) -> List[int]:
        return [parent for parent in block.parents if parent not in self.blocks]

    def attach(self, block: DagBlock) -> AttachResult:
        if block.id in self.blocks or block.id in self.pending:
            return AttachResult(duplicate=True)
        if block.id in block.parents:
            raise ValueError(f"Block {block.id} references itself")

        missing = self.missing_parents(block)
        if missing:
            self.pending[block.id] = block
            for parent in missing:
                self._waiting.setdefault(parent, set()).add(block.id)
            return AttachResult(pending=True)

        attached = []
        changed = []
        ready = [block]
        while ready:
            current = ready.pop()
            changed.append(self._insert(current))
            attached.append(current.id)
            for child_id in sorted(self._waiting.pop(current.id, ())):
                child = self.pending[child_id]
                if self.is_solid(child):
                    del self.pending[child_id]
                    ready.append(child)

        weight_changed = np.unique(np.concatenate(changed)) if changed else np.empty(0, dtype=np.int64)
        return AttachResult(attached=attached, weight_changed=weight_changed)

    def cumulative_weight(self, block_id: int) -> int:
        index = self._index.get(block_id)
        if index is None:
            raise ValueError(f"Unknown block {block_id}")
        return int(self._cw[index])

    def weight_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        count = len(self._cones)
        return self._ids[:count], self._cw[:count]

    def weights(self) -> Dict[int, int]:
        ids, cw = self.weight_arrays()
        return dict(zip(ids.tolist(), cw.tolist()))

    def select_tips(self, k: int, now: int, rng: np.random.Generator, tip_freshness: int) -> List[int]:
        eligible = sorted(
            tip for tip in self.tips
            if self.blocks[tip].issue_timestamp < now
            and now - self.blocks[tip].issue_timestamp <= tip_freshness
        )
        if not eligible:
            return [self._newest_before(now).id]
        picks = rng.choice(len(eligible), size=min(k, len(eligible)), replace=False)
        return [eligible[i] for i in picks]

    def _newest_before(self, now: int) -> DagBlock:
        if self._newest.issue_timestamp < now or self._newest.id == GENESIS_ID:
            return self._newest
        older = [b for b in self.blocks.values() if b.issue_timestamp < now]
        if not older:
            return self.blocks[GENESIS_ID]
        return max(older, key=lambda b: (b.issue_timestamp, b.id))

    def _insert(self, block: DagBlock) -> np.ndarray:
        index = len(self._cones)
        self._grow(index + 1)

        cone = np.zeros((index + 7) // 8, dtype=np.uint8)
        for parent in block.parents:
            parent_index = self._index[parent]
            parent_cone = self._cones[parent_index]
            cone[:parent_cone.size] |= parent_cone
            cone[parent_index >> 3] |= np.uint8(0x80 >> (parent_index & 7))

        ancestors = np.flatnonzero(np.unpackbits(cone, count=index)) if index else np.empty(0, dtype=np.int64)
        self._cw[ancestors] += 1

        self._cones.append(cone)
        self._index[block.id] = index
        self._ids[index] = block.id
        self.blocks[block.id] = block
        self.children[block.id] = set()
        self.tips.add(block.id)
        for parent in block.parents:
            self.children[parent].add(block.id)
            self.tips.discard(parent)

        if self._newest is None or (block.issue_timestamp, block.id) > (self._newest.issue_timestamp, self._newest.id):
            self._newest = block
        return self._ids[ancestors]

    def _grow(self, size: int) -> None:
        if size <= self._cw.size:
            return
        capacity = max(size, self._cw.size * 2)
        self._cw = np.concatenate([self._cw, np.zeros(capacity - self._cw.size, dtype=np.int64)])
        self._ids = np.concatenate([self._ids, np.zeros(capacity - self._ids.size, dtype=np.int64)])


def select_tips(view: DagView, k: int, now: int, rng: np.random.Generator, tip_freshness: int) -> List[int]:
    return view.select_tips(k, now, rng, tip_freshness)


def attach(view: DagView, block: DagBlock) -> AttachResult:
    return view.attach(block)


def cumulative_weight(view: DagView, block_id: int) -> int:
    return view.cumulative_weight(block_id)


class ConfirmationState:
    def __init__(self, threshold: int = DEFAULT_CW_THRESHOLD) -> None:
        if threshold < 1:
            raise ValueError(f"Confirmation threshold must be at least 1, got {threshold}")
        self.threshold = threshold
        self.locally_confirmed: Set[int] = set()
        self._confirmed_mask = np.zeros(_INITIAL_CAPACITY, dtype=bool)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self.locally_confirmed


def update_confirmations(view: DagView, state: ConfirmationState) -> List[int]:
    ids, cw = view.weight_arrays()
    count = ids.size
    if state._confirmed_mask.size < count:
        grown = np.zeros(max(count, state._confirmed_mask.size * 2), dtype=bool)
        grown[:state._confirmed_mask.size] = state._confirmed_mask
        state._confirmed_mask = grown

    crossed = np.flatnonzero((cw >= state.threshold) & ~state._confirmed_mask[:count])
    if crossed.size == 0:
        return []
    state._confirmed_mask[crossed] = True
    newly = ids[crossed].tolist()
    state.locally_confirmed.update(newly)
    return newly
