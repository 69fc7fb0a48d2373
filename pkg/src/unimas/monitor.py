"""Runtime-verification monitor.

Consumes the totally ordered trace and decides twelve properties:

    P1  registration-uniqueness   no accepted duplicate student id
    P2  scalability-cap           open sessions never exceed the cap
    P3  access-roster             sessions only for roster departments
    P4  duplicate-admission       no accepted second admission
    P5  fee-sync                  every program semester has a fee row
    P6  time-conflict             no two cohort classes share a slot
    P7  term-thresholds           exams only after enough lectures
    P8  datesheet-conflict        one paper per class per day
    P9  no-loss/completeness      no empty required field accepted/persisted
    P10 marks-bounds              accepted marks stay within bounds
    P11 report-not-null           every produced report is well formed
    P12 bounded-liveness          every request answered exactly once in K

Properties judge accepted events and persisted state: a refusal is the
system doing its job, never a violation.  Once violated, a property stays
violated for the run.  The monitor is a pure observer; it shares no code
with the store's own validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .config import RunConfig
from .store import OPTIONAL_ROW_FIELDS, SCHEMAS, TABLE_FIELDS, parse_dump
from .terms import Command, decode_blob
from .trace import ParsedTrace, TraceEvent


class PropertyId(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"
    P6 = "P6"
    P7 = "P7"
    P8 = "P8"
    P9 = "P9"
    P10 = "P10"
    P11 = "P11"
    P12 = "P12"


PROPERTY_TITLES = {
    PropertyId.P1: "registration-uniqueness",
    PropertyId.P2: "scalability-cap",
    PropertyId.P3: "access-roster",
    PropertyId.P4: "duplicate-admission",
    PropertyId.P5: "fee-sync",
    PropertyId.P6: "time-conflict",
    PropertyId.P7: "term-thresholds",
    PropertyId.P8: "datesheet-conflict",
    PropertyId.P9: "no-loss-completeness",
    PropertyId.P10: "marks-bounds",
    PropertyId.P11: "report-not-null",
    PropertyId.P12: "bounded-liveness",
}

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    property: PropertyId
    status: str
    witness_seq: int | None = None
    explanation: str | None = None

    def render(self) -> str:
        seq = "-" if self.witness_seq is None else str(self.witness_seq)
        return f"{self.property.value}|{self.status}|{seq}|{self.explanation or '-'}"


class MonitorFault(Exception):
    """Instrumentation bug: events arrived out of order."""


@dataclass
class _Conversation:
    requests: int = 0
    replies: int = 0
    request_seq: int = 0
    request_round: int = 0
    max_latency: int = 0


class Monitor:
    def __init__(self, cfg: RunConfig | None = None) -> None:
        self.cfg = cfg or RunConfig()
        self._next_seq = 0
        self._violations: dict[PropertyId, tuple[int, str]] = {}
        # incremental mirrors, built only from trace events
        self._st_ids: set[str] = set()
        self._admitted: set[str] = set()
        self._open_sessions = 0
        self._slots: set[tuple[str, str, str, str]] = set()
        self._lectures: dict[str, int] = {}
        self._exam_days: set[tuple[str, str]] = set()
        self._programs: dict[str, int] = {}
        self._conversations: dict[str, _Conversation] = {}

    # -- verdict bookkeeping -------------------------------------------

    def _flag(self, pid: PropertyId, seq: int, explanation: str) -> None:
        if pid not in self._violations:  # monotone: first witness wins
            self._violations[pid] = (seq, explanation)

    @property
    def max_reply_latency(self) -> int:
        if not self._conversations:
            return 0
        return max(c.max_latency for c in self._conversations.values())

    # -- event intake ----------------------------------------------------

    def observe(self, event: TraceEvent) -> None:
        if event.seq != self._next_seq:
            raise MonitorFault(f"expected seq {self._next_seq}, saw {event.seq}")
        self._next_seq += 1

        if event.kind == "envelope":
            self._observe_envelope(event)
        elif event.kind == "domain_event":
            self._observe_domain(event)
        elif event.kind == "session_open":
            self._observe_session_open(event)
        elif event.kind == "session_close":
            self._open_sessions = max(0, self._open_sessions - 1)
        elif event.kind == "snapshot":
            self.check_snapshot(decode_blob(event.content), seq=event.seq)
        # refusals carry no obligations: refusing bad input is correct

    def _observe_envelope(self, event: TraceEvent) -> None:
        conv = self._conversations.setdefault(event.conversation, _Conversation())
        if event.performative == "request":
            conv.requests += 1
            conv.request_seq = event.seq
            conv.request_round = event.round
        else:
            conv.replies += 1
            conv.max_latency = max(conv.max_latency, event.round - conv.request_round)
            if conv.replies > conv.requests:
                self._flag(
                    PropertyId.P12, event.seq, f"extra reply on conversation {event.conversation}"
                )
            if event.performative == "inform" and event.content.startswith("report("):
                self._check_report(event)

    def _check_report(self, event: TraceEvent) -> None:
        try:
            term_args = event.content[len("report(") : -1].split(",")
            if len(term_args) != 3:
                raise ValueError("report content must be (kind, nrows, blob)")
            kind, nrows_text, blob = term_args
            lines = decode_blob(blob).splitlines()
            if int(nrows_text) != len(lines):
                raise ValueError("row count mismatch")
            for line in lines:
                row_kind, _, value = line.split("|")
                if row_kind != kind or value == "":
                    raise ValueError("malformed report row")
        except (ValueError, IndexError) as exc:
            self._flag(PropertyId.P11, event.seq, f"null or malformed report: {exc}")

    def _observe_domain(self, event: TraceEvent) -> None:
        command = Command.parse(event.content, event.conversation)
        self._check_completeness(command, event.seq)
        name = command.name
        get = lambda k: str(command.get(k, ""))

        if name == "add_student":
            st_id = get("st_id")
            if st_id in self._st_ids:
                self._flag(PropertyId.P1, event.seq, f"st_id {st_id} registered twice")
            self._st_ids.add(st_id)
        elif name == "admit":
            student = get("student_id")
            if student in self._admitted:
                self._flag(PropertyId.P4, event.seq, f"student {student} admitted twice")
            self._admitted.add(student)
        elif name == "add_program":
            self._programs[get("p_id")] = int(get("semester_count") or 0)
        elif name == "add_class":
            slot = (get("p_id"), get("semester"), get("day"), get("period"))
            if slot in self._slots:
                self._flag(
                    PropertyId.P6,
                    event.seq,
                    f"slot clash p={slot[0]} semester={slot[1]} timing={slot[2]}/{slot[3]}",
                )
            self._slots.add(slot)
            self._lectures[get("class_id")] = 0
        elif name == "deliver_lecture":
            class_id = get("class_id")
            self._lectures[class_id] = self._lectures.get(class_id, 0) + int(get("times") or 0)
        elif name == "schedule_exam":
            class_id, term, date = get("class_id"), get("term"), get("date")
            minimum = (
                self.cfg.min_lectures_mid if term == "mid" else self.cfg.min_lectures_final
            )
            delivered = self._lectures.get(class_id, 0)
            if delivered < minimum:
                self._flag(
                    PropertyId.P7,
                    event.seq,
                    f"{term} exam after {delivered} lectures, minimum {minimum}",
                )
            day_key = (class_id, date)
            if day_key in self._exam_days:
                self._flag(PropertyId.P8, event.seq, f"class {class_id} examined twice on {date}")
            self._exam_days.add(day_key)
        elif name == "record_result":
            lo, hi = self.cfg.marks_bounds(get("subject"))
            marks = int(get("marks") or 0)
            if not lo <= marks <= hi:
                self._flag(
                    PropertyId.P10, event.seq, f"marks {marks} outside [{lo}, {hi}]"
                )

    def _observe_session_open(self, event: TraceEvent) -> None:
        command = Command.parse(event.content, event.conversation)
        dpt = str(command.get("dpt_id", ""))
        if dpt not in self.cfg.cs_roster:
            self._flag(PropertyId.P3, event.seq, f"session for department {dpt} outside roster")
        if self._open_sessions >= self.cfg.cap:
            self._flag(
                PropertyId.P2,
                event.seq,
                f"session opened with {self._open_sessions} already open, cap {self.cfg.cap}",
            )
        self._open_sessions += 1

    def _check_completeness(self, command: Command, seq: int) -> None:
        schema = SCHEMAS.get(command.name)
        if schema is None:
            return
        for f in schema:
            if f.required and str(command.get(f.name, "")) == "":
                self._flag(
                    PropertyId.P9, seq, f"{command.name} accepted with empty {f.name}"
                )

    # -- state-level rules (independent re-check over a dump) ------------

    def check_snapshot(self, dump_text: str, seq: int = 0) -> list[Verdict]:
        tables = parse_dump(dump_text)
        self._reseed(tables)

        fee_rows = {(r["p_id"], r["semester"]) for r in tables["fees"]}
        for program in tables["programs"]:
            for semester in range(1, int(program["semester_count"]) + 1):
                if (program["p_id"], str(semester)) not in fee_rows:
                    self._flag(
                        PropertyId.P5,
                        seq,
                        f"program {program['p_id']} semester {semester} has no fee row",
                    )

        for table, rows in tables.items():
            optional = OPTIONAL_ROW_FIELDS.get(table, ())
            for row in rows:
                for name in TABLE_FIELDS[table]:
                    if name not in optional and row.get(name, "") == "":
                        self._flag(
                            PropertyId.P9, seq, f"{table} row persisted with empty {name}"
                        )

        slots: set[tuple[str, str, str, str]] = set()
        for c in tables["classes"]:
            slot = (c["p_id"], c["semester"], c["day"], c["period"])
            if slot in slots:
                self._flag(PropertyId.P6, seq, f"persisted slot clash {slot}")
            slots.add(slot)

        days: set[tuple[str, str]] = set()
        for entry in tables["datesheet"]:
            key = (entry["class_id"], entry["date"])
            if key in days:
                self._flag(PropertyId.P8, seq, f"persisted datesheet clash {key}")
            days.add(key)

        return self.verdicts(trace_complete=False)

    def _reseed(self, tables: dict) -> None:
        """Re-derive event-level mirrors from a snapshot.

        A snapshot is ground truth for what is durable, so this keeps the
        monitor consistent across a crash/recovery boundary, where an event
        lost to a torn journal write is legitimately re-driven and must not
        read as a duplicate.
        """
        self._st_ids = {r["st_id"] for r in tables["students"]}
        self._admitted = {r["student_id"] for r in tables["students"] if r["program_id"]}
        self._open_sessions = len(tables["sessions"])
        self._programs = {r["p_id"]: int(r["semester_count"]) for r in tables["programs"]}
        self._slots = {
            (r["p_id"], r["semester"], r["day"], r["period"]) for r in tables["classes"]
        }
        self._lectures = {r["class_id"]: int(r["lectures_delivered"]) for r in tables["lecture_logs"]}
        self._exam_days = {(r["class_id"], r["date"]) for r in tables["datesheet"]}

    # -- final verdicts ----------------------------------------------------

    def finalize(self, trace_complete: bool) -> list[Verdict]:
        return self.verdicts(trace_complete=trace_complete, final=True)

    def verdicts(self, trace_complete: bool, final: bool = False) -> list[Verdict]:
        out: list[Verdict] = []
        for pid in PropertyId:
            if pid in self._violations:
                seq, explanation = self._violations[pid]
                out.append(Verdict(pid, VIOLATED, seq, explanation))
                continue
            if pid is PropertyId.P12 and final:
                out.append(self._liveness_verdict(trace_complete))
            else:
                out.append(Verdict(pid, HOLDS))
        return out

    def _liveness_verdict(self, trace_complete: bool) -> Verdict:
        for conversation, c in sorted(self._conversations.items()):
            if c.requests and c.replies < c.requests:
                if trace_complete:
                    return Verdict(
                        PropertyId.P12,
                        VIOLATED,
                        c.request_seq,
                        f"request {conversation} never answered",
                    )
                return Verdict(
                    PropertyId.P12,
                    INCONCLUSIVE,
                    c.request_seq,
                    f"request {conversation} pending at truncation",
                )
            if c.max_latency > self.cfg.liveness_k:
                return Verdict(
                    PropertyId.P12,
                    VIOLATED,
                    c.request_seq,
                    f"reply to {conversation} after {c.max_latency} rounds, bound {self.cfg.liveness_k}",
                )
        return Verdict(PropertyId.P12, HOLDS)


def render_verdicts(verdicts: list[Verdict]) -> str:
    return "\n".join(v.render() for v in verdicts) + "\n"


def exit_code(verdicts: list[Verdict]) -> int:
    return 2 if any(v.status == VIOLATED for v in verdicts) else 0


def evaluate_trace(parsed: ParsedTrace, cfg: RunConfig) -> list[Verdict]:
    """From-scratch re-evaluation of a recorded trace (the offline path)."""
    monitor = Monitor(cfg)
    for event in parsed.events:
        monitor.observe(event)
    return monitor.finalize(trace_complete=parsed.complete)
