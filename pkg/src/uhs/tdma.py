"""Discrete-time TDMA link between sensor nodes and the base node.

Time is a grid of fixed-length slots grouped into superframes; slot 0 of
every superframe is the beacon, the rest are data slots owned by exactly
one node each. A compliant node transmits only in its own slot, which is
what makes the link collision-free. Loss is an independent seeded
Bernoulli draw per transmission.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .errors import CapacityExceeded, DuplicateNode, InvalidConfig, UnregisteredNode
from .sensor import peek_frame_header

DELIVERED = "delivered"
LOST = "lost"
COLLISION = "collision"
IDLE = "idle"


@dataclass
class TdmaSchedule:
    """Superframe geometry plus the node -> data-slot assignment map."""

    superframe_slots: int = 9
    slot_duration_ms: float = 20.0
    assignments: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.superframe_slots < 2:
            raise InvalidConfig("need at least one data slot besides the beacon")
        if self.slot_duration_ms <= 0:
            raise InvalidConfig("slot_duration_ms must be positive")
        taken = list(self.assignments.values())
        if len(set(taken)) != len(taken):
            raise InvalidConfig("slot assignments must be injective")
        for node, slot in self.assignments.items():
            if not 1 <= slot < self.superframe_slots:
                raise InvalidConfig(f"node {node} assigned to invalid slot {slot}")

    @property
    def data_slots(self) -> int:
        return self.superframe_slots - 1

    @property
    def superframe_duration_s(self) -> float:
        return self.superframe_slots * self.slot_duration_ms / 1000.0

    def slot_start_s(self, superframe: int, slot: int) -> float:
        return (superframe * self.superframe_slots + slot) * self.slot_duration_ms / 1000.0

    def register_node(self, node_id: int) -> int:
        """Assign the lowest free data slot; stable for the node's lifetime."""
        if node_id in self.assignments:
            raise DuplicateNode(f"node {node_id} already registered")
        taken = set(self.assignments.values())
        for slot in range(1, self.superframe_slots):
            if slot not in taken:
                self.assignments[node_id] = slot
                return slot
        raise CapacityExceeded(
            f"all {self.data_slots} data slots taken, cannot register node {node_id}"
        )


@dataclass
class ChannelConfig:
    loss_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_probability <= 1.0:
            raise InvalidConfig(
                f"loss_probability must be in [0, 1], got {self.loss_probability}"
            )


@dataclass
class ChannelEvent:
    """Outcome of one slot: the legitimate frames offered in it, plus any
    wrong-slot offers that were dropped as protocol violations."""

    superframe: int
    slot: int
    kind: str
    frames: list[tuple[int, bytes]] = field(default_factory=list)
    violations: list[tuple[int, bytes]] = field(default_factory=list)


class Channel:
    """Single logical timeline for the radio medium; all transmissions go
    through one Channel instance so loss draws are reproducible."""

    def __init__(self, schedule: TdmaSchedule, cfg: ChannelConfig | None = None):
        self.schedule = schedule
        self.cfg = cfg or ChannelConfig()
        self._rng = random.Random(self.cfg.seed)

    def transmit(self, superframe: int, slot: int,
                 offered: dict[int, bytes]) -> ChannelEvent:
        """Resolve one slot. Wrong-slot offers are dropped and recorded;
        two or more legitimate frames collide and all are dropped; a lone
        frame is delivered unless the loss draw kills it."""
        event = ChannelEvent(superframe=superframe, slot=slot, kind=IDLE)
        for node_id in sorted(offered):
            frame = offered[node_id]
            assigned = self.schedule.assignments.get(node_id)
            if assigned is None:
                raise UnregisteredNode(f"node {node_id} has no slot assignment")
            if assigned != slot:
                event.violations.append((node_id, frame))
            else:
                event.frames.append((node_id, frame))
        if len(event.frames) >= 2:
            event.kind = COLLISION
        elif len(event.frames) == 1:
            lost = self._rng.random() < self.cfg.loss_probability
            event.kind = LOST if lost else DELIVERED
        return event


@dataclass
class NodeStats:
    offered: int = 0
    delivered: int = 0
    lost: int = 0
    violation: int = 0
    collision: int = 0

    def conserved(self) -> bool:
        return self.offered == self.delivered + self.lost + self.violation + self.collision


def run_superframes(
    channel: Channel,
    traffic: dict[int, deque],
    n_superframes: int,
) -> tuple[list[ChannelEvent], dict[int, NodeStats]]:
    """Drive compliant traffic for a horizon of superframes.

    Each registered node gets exactly one transmit opportunity per
    superframe (its own slot) and offers the head of its queue there.
    A transmitted frame is consumed whether it was delivered or lost;
    there are no link-layer retransmissions.
    """
    if n_superframes < 1:
        raise InvalidConfig("n_superframes must be >= 1")
    schedule = channel.schedule
    slot_owner = {slot: node for node, slot in schedule.assignments.items()}
    stats = {node: NodeStats() for node in schedule.assignments}
    events = []
    for sf in range(n_superframes):
        for slot in range(schedule.superframe_slots):
            offered: dict[int, bytes] = {}
            owner = slot_owner.get(slot)
            if owner is not None and traffic.get(owner):
                offered[owner] = traffic[owner][0]
            event = channel.transmit(sf, slot, offered)
            events.append(event)
            if owner is not None and offered:
                traffic[owner].popleft()
                st = stats[owner]
                st.offered += 1
                if event.kind == DELIVERED:
                    st.delivered += 1
                elif event.kind == LOST:
                    st.lost += 1
                elif event.kind == COLLISION:
                    st.collision += 1
    return events, stats


def events_to_csv(events: list[ChannelEvent]) -> str:
    """Flatten an event log to `superframe,slot,node,kind,seq` rows.

    Idle slots produce a row with empty node/seq; collisions and
    violations produce one row per involved frame.
    """
    lines = ["superframe,slot,node,kind,seq"]
    for ev in events:
        rows = []
        for node_id, frame in ev.frames:
            _, _, seq, _ = peek_frame_header(frame)
            rows.append((node_id, ev.kind, seq))
        for node_id, frame in ev.violations:
            _, _, seq, _ = peek_frame_header(frame)
            rows.append((node_id, "violation", seq))
        if not rows:
            lines.append(f"{ev.superframe},{ev.slot},,{ev.kind},")
        for node_id, kind, seq in rows:
            lines.append(f"{ev.superframe},{ev.slot},{node_id},{kind},{seq}")
    return "\n".join(lines) + "\n"
