"""Agent registry, mailboxes, and the deterministic round scheduler.

One round steps every registered agent exactly once, in registration
order, over the mailbox snapshot taken at round start.  Envelopes produced
during the round are routed at round end and become visible one round
later, which removes all intra-round ordering ambiguity.

Store commands emitted by an agent's cycle are applied through the
world's command handler immediately after that agent's step; outcomes
flow back to the emitting agent as belief percepts for its next cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from . import bdi
from .terms import Command, Envelope, Performative, Term, encode_blob
from .trace import TraceEvent, TraceLog

#: Applies a command; returns ((trace kind, content line) drafts, percepts).
CommandHandler = Callable[[str, Command], tuple[list[tuple[str, str]], list[bdi.Belief]]]


class RegistrationError(Exception):
    pass


def _no_store(producer: str, command: Command) -> tuple[list[tuple[str, str]], list[bdi.Belief]]:
    reason = encode_blob("no store attached")
    return (
        [("refusal", f"refused(cmd={command.name},reason={reason})")],
        [bdi.Belief("store_refused", (command.conversation, reason, 1))],
    )


class World:
    """All agents, their mailboxes, the round counter, and the trace sink."""

    def __init__(
        self,
        command_handler: CommandHandler | None = None,
        log: TraceLog | None = None,
        rng_seed: int = 0,
    ) -> None:
        self.agents: dict[str, bdi.AgentState] = {}
        self.order: list[str] = []
        self.mailboxes: dict[str, list[Envelope]] = {}
        self.round = 0
        self.rng_seed = rng_seed
        self.command_handler = command_handler or _no_store
        self.log = log or TraceLog()
        self.observers: list[Callable[[TraceEvent], None]] = []
        # message-loss accounting: routed == delivered + failed
        self.routed = 0
        self.delivered = 0
        self.failed = 0

    def emit(self, kind: str, **fields: str) -> TraceEvent:
        event = TraceEvent(seq=self.log.next_seq(), round=self.round, kind=kind, **fields)
        self.log.append(event)
        for observe in self.observers:
            observe(event)
        return event

    def emit_snapshot(self, dump_text: str) -> None:
        self.emit("snapshot", content=encode_blob(dump_text))

    def is_quiescent(self) -> bool:
        for aid in self.order:
            if self.mailboxes[aid]:
                return False
            state = self.agents[aid]
            if state.intentions or state.percepts:
                return False
        # only now is the expensive check worth it: an adopted goal that some
        # plan still serves counts as pending work
        for aid, state in self.agents.items():
            if not state.goals:
                continue
            served = {plan.goal for plan in state.plan_library}
            if any(g.name in served for g in state.goals):
                return False
        return True


def register_agent(world: World, state: bdi.AgentState) -> World:
    if state.id in world.agents:
        raise RegistrationError(f"agent {state.id} already registered")
    world.agents[state.id] = state
    world.order.append(state.id)
    world.mailboxes[state.id] = []
    return world


def route(world: World, envelopes: Sequence[Envelope]) -> World:
    """Append envelopes to receiver mailboxes in list order, tracing each.

    An unknown receiver turns the envelope into a failure reply back to the
    sender, so no message is ever silently lost.
    """
    for env in envelopes:
        if env.sent_round != world.round:
            env = Envelope(
                sender=env.sender,
                receiver=env.receiver,
                performative=env.performative,
                conversation=env.conversation,
                content=env.content,
                sent_round=world.round,
            )
        world.routed += 1
        if env.receiver not in world.agents:
            world.failed += 1
            bounce = Envelope(
                sender=env.receiver,
                receiver=env.sender,
                performative=Performative.FAILURE,
                conversation=env.conversation,
                content=Term("failed", (encode_blob("unknown agent"),)),
                sent_round=world.round,
            )
            world.routed += 1
            world.delivered += 1
            world.mailboxes[env.sender].append(bounce)
            for e in (env, bounce):
                world.emit(
                    "envelope",
                    sender=e.sender,
                    receiver=e.receiver,
                    performative=e.performative.value,
                    conversation=e.conversation,
                    content=e.content.render(),
                )
            continue
        world.delivered += 1
        world.mailboxes[env.receiver].append(env)
        world.emit(
            "envelope",
            sender=env.sender,
            receiver=env.receiver,
            performative=env.performative.value,
            conversation=env.conversation,
            content=env.content.render(),
        )
    return world


def run_round(world: World) -> World:
    """Step every agent once over its round-start mailbox; route at round end."""
    produced: list[Envelope] = []
    for aid in world.order:
        inbox = world.mailboxes[aid]
        state = world.agents[aid]
        if not inbox and not state.percepts and not state.goals and not state.intentions:
            continue  # idle agent, nothing to do this round
        world.mailboxes[aid] = []
        result = bdi.step(state, inbox)
        state = result.state
        for command in result.commands:
            drafts, percepts = world.command_handler(aid, command)
            for kind, content in drafts:
                world.emit(
                    kind,
                    sender=aid,
                    receiver="store",
                    conversation=command.conversation,
                    content=content,
                )
            state = bdi.inject_percepts(state, percepts)
        world.agents[aid] = state
        produced.extend(result.outbox)
    route(world, produced)
    world.round += 1
    return world


@dataclass(frozen=True)
class QuiescenceResult:
    world: World
    rounds_used: int
    quiescent: bool


def run_until_quiescent(world: World, max_rounds: int) -> QuiescenceResult:
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    rounds = 0
    while not world.is_quiescent():
        if rounds >= max_rounds:
            return QuiescenceResult(world, rounds, quiescent=False)
        run_round(world)
        rounds += 1
    return QuiescenceResult(world, rounds, quiescent=True)
