"""The ten functional agents as plan libraries over the BDI kernel.

Every domain agent is a mediated relay: a request from the gateway is
re-issued to the orchestrator under a fresh conversation id, and the
store's answer is forwarded back to whoever opened the original
conversation.  Only the orchestrator ever emits store commands; the
report agent computes its reports itself from queried table rows.

Conversation ids are ``<agent>:<seq>``, optionally suffixed with the
conversation they serve (``FSA:0>GW:2``), so both the opener of any hop
and the originating request are recoverable from the id alone and replies
need no routing tables.
"""

from __future__ import annotations

from collections import defaultdict

from . import bdi, runtime, store as store_mod
from .bdi import (
    Belief,
    BelieveStep,
    BeliefMatch,
    CommandStep,
    MessageDraft,
    MessageMatch,
    Plan,
    SendStep,
    add,
    remove,
)
from .config import RunConfig
from .runtime import World, register_agent
from .store import SCHEMAS, Store
from .trace import TraceLog
from .terms import (
    REPLIES,
    Command,
    Envelope,
    Performative,
    Ratio,
    Refusal,
    Report,
    Scalar,
    Term,
    conversation_origin,
    decode_blob,
    encode_blob,
)

GATEWAY = "GW"
ORCHESTRATOR = "OA"

#: Registration order; Table-style roster with the gateway standing in for
#: the graphical interface agent.
ROSTER = ("GW", "SA", "TA", "ASA", "CSA", "DSA", "FSA", "RA", "RPA", "OA")

#: Which relay agent serves which store command.
AGENT_COMMANDS: dict[str, tuple[str, ...]] = {
    "SA": ("add_student",),
    "TA": ("add_teacher",),
    "ASA": ("admit",),
    "CSA": ("add_class", "assign_teacher", "deliver_lecture"),
    "DSA": ("schedule_exam",),
    "FSA": ("add_program",),
    "RA": ("record_result",),
}

#: Session commands go straight from the gateway to the orchestrator.
DIRECT_COMMANDS = ("open_session", "close_session")

REPORT_KINDS = (
    "graduates_per_year",
    "admissions_per_year",
    "attendance",
    "teacher_student_ratio",
    "lab_student_ratio",
)

#: Store tables each report reads; the query ships only these.
REPORT_SOURCES = {
    "graduates_per_year": "students+programs+classes+results",
    "admissions_per_year": "students",
    "attendance": "lecture_logs",
    "teacher_student_ratio": "students+teachers",
    "lab_student_ratio": "students",
}


def agent_for_command(command: str) -> str:
    for agent, commands in AGENT_COMMANDS.items():
        if command in commands:
            return agent
    if command in DIRECT_COMMANDS:
        return ORCHESTRATOR
    raise KeyError(command)


# -- gateway -----------------------------------------------------------------


def _issue(ctx: bdi.StepCtx) -> list[MessageDraft]:
    receiver = str(ctx.params[0])
    content = Term(str(ctx.params[1]), ctx.params[2:])
    return [
        MessageDraft(
            receiver=receiver,
            performative=Performative.REQUEST,
            conversation=ctx.conversation(),
            content=content,
        )
    ]


def gateway_agent() -> bdi.AgentState:
    """Scenario bridge: injected ``issue`` goals become outbound requests.

    Replies are read off the mailbox by the harness; the gateway keeps no
    plans for them.
    """
    return bdi.make_agent(GATEWAY, [Plan(name="gw_issue", goal="issue", body=(SendStep(_issue),))])


# -- relay agents ------------------------------------------------------------


def _relay_conversation(ctx: bdi.StepCtx) -> str:
    # fresh id for this hop, with the originating conversation as a suffix so
    # the reply can be routed home and store events stay attributable to the
    # request that caused them
    return f"{ctx.conversation()}>{ctx.params[2]}"


def _original_conversation(conversation: str) -> str:
    _, sep, original = conversation.partition(">")
    if not sep:
        raise LookupError(f"no originating conversation in {conversation}")
    return original


def _relay_request(ctx: bdi.StepCtx) -> list[MessageDraft]:
    _, _, _, content_name = ctx.params[:4]
    return [
        MessageDraft(
            receiver=ORCHESTRATOR,
            performative=Performative.REQUEST,
            conversation=_relay_conversation(ctx),
            content=Term(str(content_name), ctx.params[4:]),
        )
    ]


def _relay_reply(ctx: bdi.StepCtx) -> list[MessageDraft]:
    _, performative, conversation, content_name = ctx.params[:4]
    original = _original_conversation(str(conversation))
    return [
        MessageDraft(
            receiver=conversation_origin(original),
            performative=Performative(str(performative)),
            conversation=original,
            content=Term(str(content_name), ctx.params[4:]),
        )
    ]


def relay_agent(agent_id: str, commands: tuple[str, ...]) -> bdi.AgentState:
    plans = [
        Plan(
            name=f"{agent_id.lower()}_{command}",
            goal=f"handle_{command}",
            when=MessageMatch(Performative.REQUEST, command),
            body=(SendStep(_relay_request),),
        )
        for command in commands
    ]
    plans.append(
        Plan(
            name=f"{agent_id.lower()}_forward_reply",
            goal="forward_reply",
            when=MessageMatch(REPLIES, None),
            body=(SendStep(_relay_reply),),
        )
    )
    return bdi.make_agent(agent_id, plans)


# -- report agent ------------------------------------------------------------


def build_report(kind: str, dump_text: str, cfg: RunConfig, generated_round: int = 0) -> Report:
    """Compute one statistical report from a store dump; never absent."""
    if kind not in REPORT_KINDS:
        raise ValueError(f"unknown report kind: {kind}")
    tables = store_mod.parse_dump(dump_text)
    students = tables["students"]
    rows: list[tuple[str, str]] = []

    if kind == "admissions_per_year":
        admitted: dict[str, int] = defaultdict(int)
        for s in students:
            if s["admit_year"]:
                admitted[s["admit_year"]] += 1
        rows = [(year, str(admitted[year])) for year in sorted(admitted, key=int)]
    elif kind == "graduates_per_year":
        # A student graduates in the year their last final-semester result
        # lands, once every final-semester class of their program has one.
        by_program = {p["p_id"]: p["semester_count"] for p in tables["programs"]}
        results = {(r["student_id"], r["class_id"]): r["year"] for r in tables["results"]}
        final_classes: dict[str, list[str]] = defaultdict(list)
        for c in tables["classes"]:
            if by_program.get(c["p_id"]) == c["semester"]:
                final_classes[c["p_id"]].append(c["class_id"])
        graduated: dict[str, int] = defaultdict(int)
        for s in students:
            finals = final_classes.get(s["program_id"], ())
            years = [results.get((s["student_id"], c)) for c in finals]
            if finals and all(y is not None for y in years):
                graduated[max(years, key=int)] += 1
        rows = [(year, str(graduated[year])) for year in sorted(graduated, key=int)]
    elif kind == "attendance":
        rows = [
            (f"{log['class_id']}:{log['subject']}", log["lectures_delivered"])
            for log in tables["lecture_logs"]
        ]
    elif kind == "teacher_student_ratio":
        rows = [("teachers_to_students", Ratio(len(tables["teachers"]), len(students)).render())]
    elif kind == "lab_student_ratio":
        rows = [("labs_to_students", Ratio(cfg.lab_count, len(students)).render())]

    return Report(kind=kind, rows=tuple(rows), generated_round=generated_round)


def _report_query(ctx: bdi.StepCtx) -> list[MessageDraft]:
    kind = str(ctx.params[4])
    return [
        MessageDraft(
            receiver=ORCHESTRATOR,
            performative=Performative.REQUEST,
            conversation=_relay_conversation(ctx),
            content=Term("query", (REPORT_SOURCES.get(kind, "dump"),)),
        )
    ]


def _note_pending_report(ctx: bdi.StepCtx) -> list[bdi.BeliefDelta]:
    original, kind = str(ctx.params[2]), str(ctx.params[4])
    return [add("pending_report", _relay_conversation(ctx), original, kind)]


def _pending_report_of(ctx: bdi.StepCtx) -> tuple[Scalar, ...]:
    conversation = str(ctx.params[2])
    for row in ctx.beliefs.matching("pending_report"):
        if row[0] == conversation:
            return row
    raise LookupError(f"no pending report for {conversation}")


def report_agent(cfg: RunConfig) -> bdi.AgentState:
    broken = cfg.inject == "p11"

    def reply_with_report(ctx: bdi.StepCtx) -> list[MessageDraft]:
        _, performative, _, content_name = ctx.params[:4]
        row = _pending_report_of(ctx)
        original, kind = str(row[1]), str(row[2])
        if Performative(str(performative)) is not Performative.INFORM:
            content = Term("failed", (encode_blob("store query failed"),))
            performative_out = Performative.FAILURE
        elif broken:
            content = Term("report", (kind,))  # guard off: absent result
            performative_out = Performative.INFORM
        else:
            dump_text = decode_blob(str(ctx.params[4]))
            report = build_report(kind, dump_text, cfg)
            blob = encode_blob("\n".join(report.render_lines()))
            content = Term("report", (kind, len(report.rows), blob))
            performative_out = Performative.INFORM
        return [
            MessageDraft(
                receiver=conversation_origin(original),
                performative=performative_out,
                conversation=original,
                content=content,
            )
        ]

    def forget_pending_report(ctx: bdi.StepCtx) -> list[bdi.BeliefDelta]:
        return [remove("pending_report", *_pending_report_of(ctx))]

    plans = [
        Plan(
            name="rpa_report",
            goal="handle_report",
            when=MessageMatch(Performative.REQUEST, "report"),
            body=(BelieveStep(_note_pending_report), SendStep(_report_query)),
        ),
        Plan(
            name="rpa_reply",
            goal="forward_reply",
            when=MessageMatch(REPLIES, None),
            body=(SendStep(reply_with_report), BelieveStep(forget_pending_report)),
        ),
    ]
    return bdi.make_agent("RPA", plans)


# -- orchestrator ------------------------------------------------------------


def _known_command(beliefs: bdi.BeliefBase, params: tuple[Scalar, ...]) -> bool:
    name = str(params[3])
    schema = SCHEMAS.get(name)
    return schema is not None and len(params) - 4 == len(schema)


def _build_command(ctx: bdi.StepCtx) -> list[Command]:
    name = str(ctx.params[3])
    schema = SCHEMAS[name]
    conversation = str(ctx.params[2])
    args = tuple((f.name, value) for f, value in zip(schema, ctx.params[4:]))
    return [Command(name, args, conversation)]


def _reject_malformed(ctx: bdi.StepCtx) -> list[MessageDraft]:
    conversation = str(ctx.params[2])
    return [
        MessageDraft(
            receiver=conversation_origin(conversation),
            performative=Performative.FAILURE,
            conversation=conversation,
            content=Term("failed", (encode_blob("malformed content term"),)),
        )
    ]


def _reply_ok(ctx: bdi.StepCtx) -> list[MessageDraft]:
    conversation, blob = str(ctx.params[0]), str(ctx.params[1])
    return [
        MessageDraft(
            receiver=conversation_origin(conversation),
            performative=Performative.INFORM,
            conversation=conversation,
            content=Term.parse(decode_blob(blob)),
        )
    ]


def _reply_refused(ctx: bdi.StepCtx) -> list[MessageDraft]:
    conversation, reason, fault = str(ctx.params[0]), str(ctx.params[1]), int(ctx.params[2])
    if fault:
        performative, content = Performative.FAILURE, Term("failed", (reason,))
    else:
        performative, content = Performative.REFUSE, Term("refused", (reason,))
    return [
        MessageDraft(
            receiver=conversation_origin(conversation),
            performative=performative,
            conversation=conversation,
            content=content,
        )
    ]


def orchestrator_agent() -> bdi.AgentState:
    plans = [
        Plan(
            name="oa_request",
            goal="oa_handle",
            when=MessageMatch(Performative.REQUEST, None),
            context=_known_command,
            body=(CommandStep(_build_command),),
        ),
        Plan(
            name="oa_malformed",
            goal="oa_handle",
            context=lambda beliefs, params: not _known_command(beliefs, params),
            body=(SendStep(_reject_malformed),),
        ),
        Plan(
            name="oa_store_ok",
            goal="oa_reply_ok",
            when=BeliefMatch("store_ok"),
            body=(SendStep(_reply_ok),),
        ),
        Plan(
            name="oa_store_refused",
            goal="oa_reply_refused",
            when=BeliefMatch("store_refused"),
            body=(SendStep(_reply_refused),),
        ),
    ]
    return bdi.make_agent(ORCHESTRATOR, plans)


def oa_handle(store: Store, msg: Envelope) -> tuple[Envelope, Command | None]:
    """Synchronous request translation, usable without a scheduler.

    Mirrors what the orchestrator's plans do over two cycles: translate the
    request into a store command, execute it, and answer with exactly one
    reply envelope.
    """
    schema = SCHEMAS.get(msg.content.name)
    if msg.performative is not Performative.REQUEST:
        raise ValueError("oa_handle expects a request")
    if schema is None or len(msg.content.args) != len(schema):
        reply = Envelope(
            sender=ORCHESTRATOR,
            receiver=msg.sender,
            performative=Performative.FAILURE,
            conversation=msg.conversation,
            content=Term("failed", (encode_blob("malformed content term"),)),
        )
        return reply, None
    args = tuple((f.name, value) for f, value in zip(schema, msg.content.args))
    command = Command(msg.content.name, args, msg.conversation)
    outcome = store.execute(command)
    if isinstance(outcome.result, Refusal):
        if outcome.result.fault:
            performative = Performative.FAILURE
            content = Term("failed", (encode_blob(outcome.result.reason),))
        else:
            performative = Performative.REFUSE
            content = Term("refused", (encode_blob(outcome.result.reason),))
    else:
        performative, content = Performative.INFORM, outcome.result
    reply = Envelope(
        sender=ORCHESTRATOR,
        receiver=msg.sender,
        performative=performative,
        conversation=msg.conversation,
        content=content,
    )
    return reply, command


# -- world assembly ----------------------------------------------------------


def store_handler(store: Store) -> runtime.CommandHandler:
    """Adapter: command in, trace drafts plus outcome percepts out."""

    def handle(producer: str, command: Command) -> tuple[list[tuple[str, str]], list[Belief]]:
        outcome = store.execute(command)
        if isinstance(outcome.result, Refusal):
            percept = Belief(
                "store_refused",
                (
                    command.conversation,
                    encode_blob(outcome.result.reason),
                    int(outcome.result.fault),
                ),
            )
        else:
            percept = Belief("store_ok", (command.conversation, encode_blob(outcome.result.render())))
        return list(outcome.drafts), [percept]

    return handle


def build_world(cfg: RunConfig | None = None) -> tuple[World, Store]:
    """A fresh world with the full roster registered and the store attached."""
    cfg = cfg or RunConfig()
    store = Store(cfg)
    world = World(
        command_handler=store_handler(store),
        log=TraceLog(header=cfg.header()),
        rng_seed=cfg.seed,
    )
    for agent_id in ROSTER:
        if agent_id == GATEWAY:
            state = gateway_agent()
        elif agent_id == "RPA":
            state = report_agent(cfg)
        elif agent_id == ORCHESTRATOR:
            state = orchestrator_agent()
        else:
            state = relay_agent(agent_id, AGENT_COMMANDS[agent_id])
        register_agent(world, state)
    return world, store
