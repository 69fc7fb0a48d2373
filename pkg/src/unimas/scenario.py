"""Scenario files and the harness that drives them through the world.

A scenario is one command per line, ``VERB key=value ...``; ``#`` starts a
comment.  EXPECT_REFUSAL binds to the command right before it and fails
the run if that command was accepted.  CRASH (or an explicit crash_at
event index) discards the world mid-run, rebuilds the store from its
journal, and re-drives whatever was never acknowledged, which is exactly
the no-loss story the store is supposed to support.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

from . import bdi
from .agents import GATEWAY, REPORT_KINDS, agent_for_command, build_world, store_handler
from .config import RunConfig
from .monitor import Monitor, Verdict, exit_code as verdict_exit_code
from .runtime import World, run_round
from .store import SCHEMAS, Store, recover
from .terms import Scalar, Term, check_scalar, decode_blob, encode_blob, parse_scalar
from .trace import TraceLog


class ScenarioError(Exception):
    def __init__(self, line: int, detail: str) -> None:
        super().__init__(f"line {line}: {detail}")
        self.line = line


@dataclass(frozen=True)
class ScenarioCommand:
    verb: str
    args: tuple[tuple[str, str], ...]
    line: int = 0

    def get(self, key: str, default: str = "") -> str:
        for k, v in self.args:
            if k == key:
                return v
        return default

    def render(self) -> str:
        if not self.args:
            return self.verb
        return f"{self.verb} " + " ".join(f"{k}={v}" for k, v in self.args)


# verb -> (store command, scenario key -> command field)
_VERB_COMMANDS: dict[str, tuple[str, tuple[tuple[str, str], ...]]] = {
    "OPEN_SESSION": ("open_session", (("dept", "dpt_id"),)),
    "CLOSE_SESSION": ("close_session", (("sid", "sid"),)),
    "REGISTER_STUDENT": (
        "add_student",
        (("st_id", "st_id"), ("name", "name"), ("dept", "dpt_id")),
    ),
    "REGISTER_TEACHER": (
        "add_teacher",
        (
            ("name", "name"),
            ("designation", "designation"),
            ("contact", "contact"),
            ("email", "email"),
        ),
    ),
    "ADMIT": ("admit", (("student_id", "student_id"), ("p_id", "p_id"), ("year", "year"))),
    "ADD_PROGRAM": (
        "add_program",
        (
            ("name", "name"),
            ("session", "session"),
            ("semesters", "semester_count"),
            ("fee", "fee"),
        ),
    ),
    "ADD_CLASS": (
        "add_class",
        (
            ("p_id", "p_id"),
            ("semester", "semester"),
            ("subject", "subject"),
            ("day", "day"),
            ("period", "period"),
        ),
    ),
    "ASSIGN_TEACHER": (
        "assign_teacher",
        (("class_id", "class_id"), ("teacher_id", "teacher_id")),
    ),
    "DELIVER_LECTURE": (
        "deliver_lecture",
        (("class_id", "class_id"), ("subject", "subject"), ("times", "times")),
    ),
    "SCHEDULE_EXAM": (
        "schedule_exam",
        (
            ("term", "term"),
            ("class_id", "class_id"),
            ("subject", "subject"),
            ("date", "date"),
        ),
    ),
    "RECORD_RESULT": (
        "record_result",
        (
            ("student_id", "student_id"),
            ("class_id", "class_id"),
            ("subject", "subject"),
            ("marks", "marks"),
            ("year", "year"),
        ),
    ),
}

GENERATE_REPORT = "GENERATE_REPORT"
CRASH = "CRASH"
EXPECT_REFUSAL = "EXPECT_REFUSAL"

VERBS = tuple(_VERB_COMMANDS) + (GENERATE_REPORT, CRASH, EXPECT_REFUSAL)

#: Scenario keys whose command fields are optional (store defaults apply).
_OPTIONAL_KEYS = {"ADMIT": ("year",), "DELIVER_LECTURE": ("times",), "RECORD_RESULT": ("year",)}

#: Verbs allowed without an open session.
_SESSION_EXEMPT = ("OPEN_SESSION", "CLOSE_SESSION", CRASH, EXPECT_REFUSAL)


def parse_scenario(text: str) -> list[ScenarioCommand]:
    commands: list[ScenarioCommand] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        verb, pairs = tokens[0], tokens[1:]
        if verb not in VERBS:
            raise ScenarioError(lineno, f"unknown verb {verb}")
        args: list[tuple[str, str]] = []
        seen: set[str] = set()
        for token in pairs:
            key, eq, value = token.partition("=")
            if not eq or not key:
                raise ScenarioError(lineno, f"expected key=value, got {token!r}")
            if key in seen:
                raise ScenarioError(lineno, f"duplicate key {key}")
            if value:
                try:
                    check_scalar(value)
                except ValueError as exc:
                    raise ScenarioError(lineno, str(exc)) from exc
            seen.add(key)
            args.append((key, value))
        command = ScenarioCommand(verb, tuple(args), lineno)
        _validate_keys(command)
        if verb == EXPECT_REFUSAL:
            if not any(c.verb not in (EXPECT_REFUSAL, CRASH) for c in commands):
                raise ScenarioError(lineno, "EXPECT_REFUSAL has no preceding command")
            if commands and commands[-1].verb == EXPECT_REFUSAL:
                raise ScenarioError(lineno, "EXPECT_REFUSAL already asserted for this command")
        commands.append(command)
    return commands


def _validate_keys(command: ScenarioCommand) -> None:
    lineno = command.line
    given = {k for k, _ in command.args}
    if command.verb == CRASH:
        if given:
            raise ScenarioError(lineno, "CRASH takes no arguments")
        return
    if command.verb == EXPECT_REFUSAL:
        if not given <= {"reason"}:
            raise ScenarioError(lineno, "EXPECT_REFUSAL takes only reason=")
        return
    if command.verb == GENERATE_REPORT:
        kind = command.get("kind")
        if given != {"kind"} or kind not in REPORT_KINDS:
            raise ScenarioError(lineno, f"GENERATE_REPORT needs kind= one of {REPORT_KINDS}")
        return
    _, key_map = _VERB_COMMANDS[command.verb]
    known = {k for k, _ in key_map}
    optional = set(_OPTIONAL_KEYS.get(command.verb, ()))
    if not given <= known:
        raise ScenarioError(lineno, f"unknown key {sorted(given - known)[0]}")
    missing = known - optional - given
    if missing:
        raise ScenarioError(lineno, f"missing key {sorted(missing)[0]}")


def render_scenario(commands: list[ScenarioCommand]) -> str:
    return "\n".join(c.render() for c in commands) + "\n"


def _content_for(command: ScenarioCommand) -> tuple[str, str, tuple[Scalar, ...]]:
    """(receiver, content name, content args in schema order)."""
    if command.verb == GENERATE_REPORT:
        return "RPA", "report", (command.get("kind"),)
    store_command, key_map = _VERB_COMMANDS[command.verb]
    by_field = {f: command.get(k) for k, f in key_map}
    schema = SCHEMAS[store_command]
    args = tuple(
        parse_scalar(by_field[f.name] if by_field.get(f.name, "") != "" else (f.default or ""))
        for f in schema
    )
    return agent_for_command(store_command), store_command, args


@dataclass
class CommandOutcome:
    status: str  # ok | refused | failed | gateway_refused | applied_no_reply | no_reply
    reply: Term | None = None
    reason: str = ""

    @property
    def accepted(self) -> bool:
        return self.status in ("ok", "applied_no_reply")


@dataclass
class RunResult:
    cfg: RunConfig
    outcomes: list[CommandOutcome | None]
    verdicts: list[Verdict]
    expectation_failures: list[str]
    reports: list[str]
    log: TraceLog
    store: Store
    world: World
    rounds_used: int
    quiescent: bool
    monitor: Monitor

    @property
    def exit_code(self) -> int:
        if self.expectation_failures:
            return 2
        return verdict_exit_code(self.verdicts)

    @property
    def trace_hash(self) -> str:
        return self.log.sha256()


class ScenarioRunner:
    """Feeds scenario commands through the gateway, round by round."""

    def __init__(self, cfg: RunConfig | None = None) -> None:
        self.cfg = cfg or RunConfig()
        self.world, self.store = build_world(self.cfg)
        self.monitor = Monitor(self.cfg)
        self.world.observers.append(self.monitor.observe)
        self.pending: dict[str, int] = {}  # conversation -> command index
        self.outcomes: list[CommandOutcome | None] = []
        self.reports: list[str] = []
        self.sessions_open = 0
        self.rounds_used = 0

    # -- outcome intake ---------------------------------------------------

    def _collect_replies(self) -> None:
        for env in self.world.mailboxes[GATEWAY]:
            idx = self.pending.pop(env.conversation, None)
            if idx is None:
                continue
            content = env.content
            if content.name in ("ok", "rows", "report"):
                outcome = CommandOutcome("ok", reply=content)
                if content.name == "ok":
                    self._note_session(idx, content)
                if content.name == "report":
                    self._note_report(content)
            elif content.name == "refused":
                outcome = CommandOutcome("refused", reason=decode_blob(str(content.args[0])))
            else:
                reason = decode_blob(str(content.args[0])) if content.args else "failure"
                outcome = CommandOutcome("failed", reason=reason)
            self.outcomes[idx] = outcome

    def _note_session(self, idx: int, content: Term) -> None:
        verb = self._verbs[idx]
        if verb == "OPEN_SESSION":
            self.sessions_open += 1
        elif verb == "CLOSE_SESSION":
            self.sessions_open = max(0, self.sessions_open - 1)

    def _note_report(self, content: Term) -> None:
        if len(content.args) == 3:
            self.reports.extend(decode_blob(str(content.args[2])).splitlines())

    # -- command injection --------------------------------------------------

    def _inject(self, idx: int, command: ScenarioCommand) -> str:
        """Hand one command to the gateway; returns injected|refused|wait."""
        if command.verb not in _SESSION_EXEMPT and self.sessions_open == 0:
            if any(self._verbs[i] == "OPEN_SESSION" for i in self.pending.values()):
                return "wait"  # a session open is in flight; don't jump the gun
            reason = encode_blob("no open session")
            self.world.emit(
                "refusal",
                sender=GATEWAY,
                receiver="gateway",
                content=f"refused(cmd={command.verb},reason={reason})",
            )
            self.outcomes[idx] = CommandOutcome("gateway_refused", reason="no open session")
            return "refused"
        receiver, name, args = _content_for(command)
        gw = self.world.agents[GATEWAY]
        conversation = f"{GATEWAY}:{gw.next_seq}"
        self.world.agents[GATEWAY] = bdi.adopt_goal(gw, "issue", (receiver, name) + args)
        self.pending[conversation] = idx
        return "injected"

    # -- crash recovery -------------------------------------------------------

    def _crash_and_recover(self, torn: bool) -> None:
        journal = list(self.store.journal_lines)
        if torn and journal:
            journal[-1] = journal[-1][: max(1, len(journal[-1]) // 2)]
        rebuilt, _bad = recover(journal, self.cfg)
        applied = _journal_conversations(rebuilt.journal_lines)
        fresh_world, _ = build_world(self.cfg)
        fresh_world.log = self.world.log  # the trace survives the crash
        fresh_world.observers = self.world.observers
        fresh_world.round = self.world.round
        fresh_world.routed = self.world.routed
        fresh_world.delivered = self.world.delivered
        fresh_world.failed = self.world.failed
        fresh_world.command_handler = store_handler(rebuilt)
        for aid, old_state in self.world.agents.items():
            # conversation ids must stay unique across the restart
            fresh_world.agents[aid] = dc_replace(
                fresh_world.agents[aid], next_seq=old_state.next_seq
            )
        self.world = fresh_world
        self.store = rebuilt
        # a snapshot of the rebuilt store marks the crash boundary on the
        # trace; the monitor re-seeds from it so re-driven commands do not
        # read as duplicates
        self.world.emit_snapshot(rebuilt.dump())
        # anything journaled counts as done even if its reply was lost
        for conversation, idx in list(self.pending.items()):
            if conversation in applied:
                self.outcomes[idx] = CommandOutcome("applied_no_reply")
                self.pending.pop(conversation)
        self.sessions_open = self.store.open_session_count()

    # -- main loop --------------------------------------------------------------

    def run(
        self,
        commands: list[ScenarioCommand],
        crash_at: int | None = None,
        torn: bool = False,
    ) -> RunResult:
        expectations: dict[int, str | None] = {}
        plain: list[ScenarioCommand] = []
        self._verbs: list[str] = []
        crash_positions: set[int] = set()
        for command in commands:
            if command.verb == EXPECT_REFUSAL:
                expectations[len(plain) - 1] = command.get("reason") or None
            elif command.verb == CRASH:
                crash_positions.add(len(plain))
            else:
                plain.append(command)
                self._verbs.append(command.verb)

        self.outcomes = [None] * len(plain)
        queue = list(range(len(plain)))
        cursor = 0
        crash_at_events = -1 if crash_at is None else crash_at
        if crash_at == 0:
            self._crash_and_recover(torn)

        window = self.cfg.pipeline_window
        while True:
            # crash when the journal reaches the requested event index
            if crash_at_events > 0 and len(self.store.journal_lines) >= crash_at_events:
                self._crash_and_recover(torn)
                crash_at_events = -1
                queue, cursor = self._requeue(plain, queue, cursor)
            next_is_crash = cursor < len(queue) and queue[cursor] in crash_positions
            trailing_crash = cursor >= len(queue) and len(plain) in crash_positions
            if (next_is_crash or trailing_crash) and not self.pending:
                crash_positions.discard(queue[cursor] if next_is_crash else len(plain))
                self._crash_and_recover(torn)
                queue, cursor = self._requeue(plain, queue, cursor)
            self._collect_replies()
            while (
                cursor < len(queue)
                and len(self.pending) < window
                and queue[cursor] not in crash_positions
            ):
                idx = queue[cursor]
                if self._inject(idx, plain[idx]) == "wait":
                    break
                cursor += 1
            quiet = self.world.is_quiescent()
            if quiet and self.pending:
                # nothing left that could ever answer these
                for conversation, idx in self.pending.items():
                    self.outcomes[idx] = CommandOutcome("no_reply")
                self.pending.clear()
                continue
            if quiet and cursor >= len(queue) and not crash_positions:
                break
            if self.rounds_used >= self.cfg.max_rounds:
                break
            run_round(self.world)
            self.rounds_used += 1

        quiescent = self.world.is_quiescent() and not self.pending
        self.world.emit_snapshot(self.store.dump())
        self.world.log.close(complete=quiescent)
        verdicts = self.monitor.finalize(trace_complete=quiescent)

        failures = []
        for idx, expected_reason in sorted(expectations.items()):
            outcome = self.outcomes[idx] if 0 <= idx < len(self.outcomes) else None
            line = plain[idx].line
            if outcome is None or outcome.accepted:
                failures.append(f"line {line}: expected refusal, command was accepted")
            elif expected_reason is not None and outcome.reason != expected_reason.replace("_", " "):
                failures.append(
                    f"line {line}: expected refusal {expected_reason!r}, got {outcome.reason!r}"
                )

        return RunResult(
            cfg=self.cfg,
            outcomes=self.outcomes,
            verdicts=verdicts,
            expectation_failures=failures,
            reports=self.reports,
            log=self.world.log,
            store=self.store,
            world=self.world,
            rounds_used=self.rounds_used,
            quiescent=quiescent,
            monitor=self.monitor,
        )

    def _requeue(
        self, plain: list[ScenarioCommand], queue: list[int], cursor: int
    ) -> tuple[list[int], int]:
        """After a crash, line up every command that was never acknowledged."""
        redo = [i for i in range(len(plain)) if self.outcomes[i] is None and i not in queue[cursor:]]
        remaining = redo + [i for i in queue[cursor:]]
        self.pending.clear()
        return remaining, 0


def _journal_conversations(lines: list[str]) -> set[str]:
    """Originating conversations of journaled events (relay suffixes peeled)."""
    out: set[str] = set()
    for line in lines:
        for pair in line.split("|")[2].split(","):
            if pair.startswith("_conv="):
                out.add(pair[len("_conv="):].split(">")[-1])
    return out


def run_scenario(
    commands: list[ScenarioCommand],
    cfg: RunConfig | None = None,
    crash_at: int | None = None,
    torn: bool = False,
) -> RunResult:
    return ScenarioRunner(cfg).run(commands, crash_at=crash_at, torn=torn)


@dataclass(frozen=True)
class CrashVerdict:
    equivalent: bool
    crash_at: int
    baseline_dump: str
    crashed_dump: str


def replay_crash(
    commands: list[ScenarioCommand],
    crash_at: int | None,
    cfg: RunConfig | None = None,
    torn: bool = False,
) -> CrashVerdict:
    """Crash-and-recover equivalence check against the uninterrupted run."""
    cfg = dc_replace(cfg or RunConfig(), pipeline_window=1)
    baseline = run_scenario(commands, cfg)
    crashed = run_scenario(commands, cfg, crash_at=crash_at, torn=torn)
    dump_a, dump_b = baseline.store.dump(), crashed.store.dump()
    return CrashVerdict(
        equivalent=dump_a == dump_b,
        crash_at=-1 if crash_at is None else crash_at,
        baseline_dump=dump_a,
        crashed_dump=dump_b,
    )


@dataclass(frozen=True)
class LoadSummary:
    clients: int
    granted: int
    busy: int
    result: RunResult


def load_test(cfg: RunConfig | None = None, clients: int = 1) -> LoadSummary:
    """Open `clients` sessions without closing; count granted vs busy."""
    if clients < 1:
        raise ValueError("clients must be >= 1")
    cfg = dc_replace(cfg or RunConfig(), pipeline_window=64)
    dept = cfg.cs_roster[0]
    commands = [
        ScenarioCommand("OPEN_SESSION", (("dept", dept),), line=i + 1) for i in range(clients)
    ]
    result = run_scenario(commands, cfg)
    granted = sum(1 for o in result.outcomes if o is not None and o.status == "ok")
    busy = sum(
        1 for o in result.outcomes if o is not None and o.status == "refused" and o.reason == "busy"
    )
    return LoadSummary(clients=clients, granted=granted, busy=busy, result=result)
