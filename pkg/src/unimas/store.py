"""The single database behind the orchestrator: validated commands, an
append-only journal, deterministic replay, and session admission control.

Commands are validated first (refusals touch nothing), then journaled,
then applied; ``replay`` folds a journal back into an identical store by
re-running the mutations without validation, since journaled events are
facts.  All row values are stored as rendered strings so dumps, journals
and comparisons stay canonical.
"""

from __future__ import annotations

import datetime
import zlib
from dataclasses import dataclass, field

from .config import RunConfig
from .terms import Command, Refusal, Scalar, Term, encode_blob, render_scalar

# Refusal reason literals; the odd spellings are load-bearing.
ALREADY_REGISTERED = "Student Already Registerd"
TEACHER_ALREADY_REGISTERED = "Teacher Already Registerd"
BUSY = "busy"
UNAUTHORIZED = "unauthorized access"
DUPLICATE_ADMISSION = "duplicate admission request"
SAME_TIMING = "same timing"
TEACHER_CONFLICT = "teacher time conflict"
INSUFFICIENT_LECTURES = "insufficient lectures"
SAME_DATE = "same date conflict"
INCOMPLETE = "incomplete record"
MARKS_BOUNDS = "marks out of bounds"


@dataclass(frozen=True)
class Field:
    name: str
    int_typed: bool = False
    required: bool = True
    default: str | None = None


# Command vocabulary: field order is canonical for journal and trace lines.
SCHEMAS: dict[str, tuple[Field, ...]] = {
    "open_session": (Field("dpt_id"),),
    "close_session": (Field("sid", int_typed=True),),
    "add_student": (Field("st_id"), Field("name"), Field("dpt_id")),
    "add_teacher": (Field("name"), Field("designation"), Field("contact"), Field("email")),
    "admit": (
        Field("student_id", int_typed=True),
        Field("p_id", int_typed=True),
        Field("year", int_typed=True, required=False, default="1"),
    ),
    "add_program": (
        Field("name"),
        Field("session"),
        Field("semester_count", int_typed=True),
        Field("fee", int_typed=True),
    ),
    "add_class": (
        Field("p_id", int_typed=True),
        Field("semester", int_typed=True),
        Field("subject"),
        Field("day", int_typed=True),
        Field("period", int_typed=True),
    ),
    "assign_teacher": (Field("class_id", int_typed=True), Field("teacher_id", int_typed=True)),
    "deliver_lecture": (
        Field("class_id", int_typed=True),
        Field("subject"),
        Field("times", int_typed=True, required=False, default="1"),
    ),
    "schedule_exam": (
        Field("term"),
        Field("class_id", int_typed=True),
        Field("subject"),
        Field("date"),
    ),
    "record_result": (
        Field("student_id", int_typed=True),
        Field("class_id", int_typed=True),
        Field("subject"),
        Field("marks", int_typed=True),
        Field("year", int_typed=True, required=False, default="1"),
    ),
    "query": (Field("q"),),
}

TABLE_FIELDS: dict[str, tuple[str, ...]] = {
    "students": ("student_id", "st_id", "name", "dpt_id", "program_id", "admit_year"),
    "teachers": ("teacher_id", "name", "designation", "contact", "email"),
    "programs": ("p_id", "name", "session", "semester_count"),
    "fees": ("p_id", "semester", "amount"),
    "classes": ("class_id", "p_id", "semester", "subject", "day", "period", "teacher_id"),
    "lecture_logs": ("class_id", "subject", "lectures_delivered"),
    "datesheet": ("class_id", "date", "term", "subject"),
    "results": ("student_id", "class_id", "subject", "marks", "year"),
    "sessions": ("sid", "dpt_id"),
}

TABLE_PK: dict[str, tuple[str, ...]] = {
    "students": ("student_id",),
    "teachers": ("teacher_id",),
    "programs": ("p_id",),
    "fees": ("p_id", "semester"),
    "classes": ("class_id",),
    "lecture_logs": ("class_id",),
    "datesheet": ("class_id", "date"),
    "results": ("student_id", "class_id"),
    "sessions": ("sid",),
}

#: Fields that may legitimately be empty in a persisted row.
OPTIONAL_ROW_FIELDS = {
    "students": ("program_id", "admit_year"),
    "classes": ("teacher_id",),
}

Row = dict[str, str]


@dataclass(frozen=True)
class DomainEvent:
    """A journaled, accepted command plus the rows it produced."""

    seq: int
    command: Command
    row_image: tuple[str, ...] = ()


@dataclass(frozen=True)
class Outcome:
    result: Term | Refusal
    drafts: tuple[tuple[str, str], ...] = ()  # (trace kind, content)
    event: DomainEvent | None = None

    @property
    def accepted(self) -> bool:
        return not isinstance(self.result, Refusal)


class JournalCorruption(Exception):
    def __init__(self, seq: int, detail: str) -> None:
        super().__init__(f"journal corrupt at seq {seq}: {detail}")
        self.seq = seq


def _crc(payload: str) -> str:
    return f"{zlib.crc32(payload.encode()) & 0xFFFFFFFF:08x}"


def journal_line(seq: int, command: Command) -> str:
    # _conv ties the event back to the request that caused it, which is how
    # crash recovery tells re-drivable commands from durable ones.
    kv = f"{command.render_args()},_conv={command.conversation}"
    payload = f"{seq}|{command.name}|{kv}"
    return f"{payload}|{_crc(payload)}"


def _pk_key(table: str, row: Row) -> tuple:
    out = []
    for f in TABLE_PK[table]:
        v = row[f]
        out.append(int(v) if v.lstrip("-").isdigit() else v)
    return tuple(out)


def render_row(table: str, row: Row) -> str:
    pk = ":".join(row[f] for f in TABLE_PK[table])
    kv = ",".join(f"{f}={row.get(f, '')}" for f in TABLE_FIELDS[table])
    return f"{table}|{pk}|{kv}"


def parse_dump(text: str) -> dict[str, list[Row]]:
    tables: dict[str, list[Row]] = {name: [] for name in TABLE_FIELDS}
    for line in text.splitlines():
        if not line:
            continue
        table, _, kv = line.split("|", 2)
        if table not in tables:
            raise ValueError(f"unknown table in dump: {table}")
        row: Row = {}
        for pair in kv.split(","):
            k, _, v = pair.partition("=")
            row[k] = v
        tables[table].append(row)
    return tables


class Store:
    def __init__(self, cfg: RunConfig | None = None) -> None:
        self.cfg = cfg or RunConfig()
        self.tables: dict[str, dict[tuple, Row]] = {name: {} for name in TABLE_FIELDS}
        self.journal_lines: list[str] = []
        self.next_seq = 1
        self.counters = {"student_id": 1, "teacher_id": 1, "p_id": 1, "class_id": 1, "sid": 1}
        # uniqueness indexes, maintained by _mutate so replay rebuilds them
        self._st_ids: set[str] = set()
        self._emails: set[str] = set()
        self._slots: set[tuple[str, str, str, str]] = set()
        self._teacher_slots: dict[tuple[str, str, str], str] = {}  # -> class_id
        # dump lines cached per row; re-rendered only on mutation
        self._rendered: dict[str, dict[tuple, str]] = {name: {} for name in TABLE_FIELDS}

    # -- reads ---------------------------------------------------------

    def rows(self, table: str) -> list[Row]:
        return [self.tables[table][k] for k in sorted(self.tables[table])]

    def query(self, table: str, **filters: Scalar) -> list[Row]:
        if table not in self.tables:
            raise KeyError(table)
        wanted = {k: render_scalar(v) for k, v in filters.items()}
        return [
            row
            for row in self.rows(table)
            if all(row.get(k) == v for k, v in wanted.items())
        ]

    def dump(self, tables: tuple[str, ...] | None = None) -> str:
        lines = []
        for table in sorted(tables if tables is not None else self.tables):
            rendered = self._rendered[table]
            for key in sorted(rendered):
                lines.append(rendered[key])
        return "\n".join(lines) + ("\n" if lines else "")

    def open_session_count(self) -> int:
        return len(self.tables["sessions"])

    # -- command pipeline ----------------------------------------------

    def _injected(self, flag: str) -> bool:
        return self.cfg.inject == flag

    def _normalize(self, command: Command) -> tuple[Command | None, Refusal | None]:
        """Fill defaults, check completeness and types; canonical arg order."""
        schema = SCHEMAS.get(command.name)
        if schema is None:
            return None, Refusal("unknown command", fault=True)
        given = {k: render_scalar(v) for k, v in command.args}
        unknown = set(given) - {f.name for f in schema}
        if unknown:
            return None, Refusal(f"unknown field {sorted(unknown)[0]}", fault=True)
        values: list[tuple[str, Scalar]] = []
        for f in schema:
            v = given.get(f.name, "")
            if v == "":
                if f.default is not None:
                    v = f.default
                elif f.required and not self._injected("p9"):
                    return None, Refusal(INCOMPLETE)
            if f.int_typed and v != "":
                if not v.lstrip("-").isdigit():
                    return None, Refusal(f"invalid field {f.name}", fault=True)
                values.append((f.name, int(v)))
            else:
                values.append((f.name, v))
        return Command(command.name, tuple(values), command.conversation), None

    def execute(self, command: Command) -> Outcome:
        """Validate and apply one command; queries are read-only."""
        normalized, refusal = self._normalize(command)
        if refusal is None:
            assert normalized is not None
            if normalized.name == "query":
                return self._run_query(normalized)
            try:
                refusal = self._validate(normalized)
            except (ValueError, KeyError):
                # reachable only with p9 injected and an int field left empty
                refusal = Refusal("invalid field", fault=True)
        if refusal is not None:
            reason = encode_blob(refusal.reason)
            draft = ("refusal", f"refused(cmd={command.name},reason={reason})")
            return Outcome(result=refusal, drafts=(draft,))

        assert normalized is not None
        seq = self.next_seq
        self.next_seq += 1
        self.journal_lines.append(journal_line(seq, normalized))  # journal first
        reply, extra, rows = self._mutate(normalized)
        kind = {
            "open_session": "session_open",
            "close_session": "session_close",
        }.get(normalized.name, "domain_event")
        content_args = normalized.render_args()
        if extra:
            content_args = f"{content_args},{extra}" if content_args else extra
        event = DomainEvent(seq=seq, command=normalized, row_image=tuple(rows))
        return Outcome(
            result=reply,
            drafts=((kind, f"{normalized.name}({content_args})"),),
            event=event,
        )

    def _run_query(self, command: Command) -> Outcome:
        q = str(command.get("q"))
        if q == "dump":
            text = self.dump()
        elif all(t in self.tables for t in q.split("+")):
            text = self.dump(tuple(q.split("+")))
        else:
            reason = encode_blob("unknown table")
            return Outcome(
                result=Refusal("unknown table", fault=True),
                drafts=(("refusal", f"refused(cmd=query,reason={reason})"),),
            )
        return Outcome(result=Term("rows", (encode_blob(text),)))

    # -- validation (business rules; skipped checks are fault injection) --

    def _validate(self, cmd: Command) -> Refusal | None:
        name = cmd.name
        if name == "open_session":
            if str(cmd.get("dpt_id")) not in self.cfg.cs_roster and not self._injected("p3"):
                return Refusal(UNAUTHORIZED)
            if self.open_session_count() >= self.cfg.cap and not self._injected("p2"):
                return Refusal(BUSY)
        elif name == "close_session":
            if (int(cmd.get("sid", 0)),) not in self.tables["sessions"]:
                return Refusal("unknown session", fault=True)
        elif name == "add_student":
            if render_scalar(cmd.get("st_id")) in self._st_ids and not self._injected("p1"):
                return Refusal(ALREADY_REGISTERED)
        elif name == "add_teacher":
            if render_scalar(cmd.get("email")) in self._emails:
                return Refusal(TEACHER_ALREADY_REGISTERED)
        elif name == "admit":
            student = self.tables["students"].get((int(cmd.get("student_id", 0)),))
            if student is None:
                return Refusal("unknown student", fault=True)
            if (int(cmd.get("p_id", 0)),) not in self.tables["programs"]:
                return Refusal("unknown program", fault=True)
            if student["program_id"] != "" and not self._injected("p4"):
                return Refusal(DUPLICATE_ADMISSION)
        elif name == "add_program":
            if str(cmd.get("session")) not in ("morning", "evening"):
                return Refusal("invalid field session", fault=True)
            if int(cmd.get("semester_count", 0)) < 1:
                return Refusal("invalid field semester_count", fault=True)
            if int(cmd.get("fee", -1)) < 0:
                return Refusal("invalid field fee", fault=True)
        elif name == "add_class":
            program = self.tables["programs"].get((int(cmd.get("p_id", 0)),))
            if program is None:
                return Refusal("unknown program", fault=True)
            semester = int(cmd.get("semester", 0))
            if not 1 <= semester <= int(program["semester_count"]):
                return Refusal("invalid semester", fault=True)
            day, period = int(cmd.get("day", -1)), int(cmd.get("period", -1))
            if not (0 <= day <= 4 and 0 <= period <= 7):
                return Refusal("invalid timing", fault=True)
            slot = (render_scalar(cmd.get("p_id")), str(semester), str(day), str(period))
            if slot in self._slots and not self._injected("p6"):
                return Refusal(SAME_TIMING)
        elif name == "assign_teacher":
            target = self.tables["classes"].get((int(cmd.get("class_id", 0)),))
            if target is None:
                return Refusal("unknown class", fault=True)
            teacher_id = render_scalar(cmd.get("teacher_id"))
            if (int(teacher_id),) not in self.tables["teachers"]:
                return Refusal("unknown teacher", fault=True)
            holder = self._teacher_slots.get((teacher_id, target["day"], target["period"]))
            if holder is not None and holder != target["class_id"]:
                return Refusal(TEACHER_CONFLICT)
        elif name in ("deliver_lecture", "schedule_exam"):
            cls = self.tables["classes"].get((int(cmd.get("class_id", 0)),))
            if cls is None:
                return Refusal("unknown class", fault=True)
            if render_scalar(cmd.get("subject")) != cls["subject"]:
                return Refusal("unknown subject", fault=True)
            if name == "deliver_lecture":
                if int(cmd.get("times", 0)) < 1:
                    return Refusal("invalid field times", fault=True)
            else:
                term = str(cmd.get("term"))
                if term not in ("mid", "final"):
                    return Refusal("invalid field term", fault=True)
                try:
                    datetime.date.fromisoformat(str(cmd.get("date")))
                except ValueError:
                    return Refusal("invalid field date", fault=True)
                log = self.tables["lecture_logs"][(int(cmd.get("class_id", 0)),)]
                delivered = int(log["lectures_delivered"])
                minimum = (
                    self.cfg.min_lectures_mid if term == "mid" else self.cfg.min_lectures_final
                )
                if delivered < minimum and not self._injected("p7"):
                    return Refusal(INSUFFICIENT_LECTURES)
                key = (int(cmd.get("class_id", 0)), str(cmd.get("date")))
                if key in self.tables["datesheet"] and not self._injected("p8"):
                    return Refusal(SAME_DATE)
        elif name == "record_result":
            student = self.tables["students"].get((int(cmd.get("student_id", 0)),))
            if student is None:
                return Refusal("unknown student", fault=True)
            if student["program_id"] == "":
                return Refusal("student not admitted", fault=True)
            cls = self.tables["classes"].get((int(cmd.get("class_id", 0)),))
            if cls is None:
                return Refusal("unknown class", fault=True)
            subject = render_scalar(cmd.get("subject"))
            if subject != cls["subject"]:
                return Refusal("unknown subject", fault=True)
            lo, hi = self.cfg.marks_bounds(subject)
            marks = int(cmd.get("marks", 0))
            if not lo <= marks <= hi and not self._injected("p10"):
                return Refusal(MARKS_BOUNDS)
        return None

    # -- mutation (also the replay path; never validates) ----------------

    def _mutate(self, cmd: Command) -> tuple[Term, str, list[str]]:
        """Apply an accepted command; returns (reply, extra trace kv, rows)."""
        name = cmd.name
        a = dict(cmd.args)

        def put(table: str, row: Row) -> str:
            key = _pk_key(table, row)
            line = render_row(table, row)
            self.tables[table][key] = row
            self._rendered[table][key] = line
            return line

        if name == "open_session":
            sid = self.counters["sid"]
            self.counters["sid"] += 1
            row = put("sessions", {"sid": str(sid), "dpt_id": str(a["dpt_id"])})
            return Term("ok", (sid,)), f"sid={sid}", [row]
        if name == "close_session":
            self.tables["sessions"].pop((int(a["sid"]),), None)
            self._rendered["sessions"].pop((int(a["sid"]),), None)
            return Term("ok"), "", []
        if name == "add_student":
            student_id = self.counters["student_id"]
            self.counters["student_id"] += 1
            self._st_ids.add(render_scalar(a["st_id"]))
            row = put(
                "students",
                {
                    "student_id": str(student_id),
                    "st_id": render_scalar(a["st_id"]),
                    "name": render_scalar(a["name"]),
                    "dpt_id": render_scalar(a["dpt_id"]),
                    "program_id": "",
                    "admit_year": "",
                },
            )
            return Term("ok", (student_id,)), f"student_id={student_id}", [row]
        if name == "add_teacher":
            teacher_id = self.counters["teacher_id"]
            self.counters["teacher_id"] += 1
            self._emails.add(render_scalar(a["email"]))
            row = put(
                "teachers",
                {
                    "teacher_id": str(teacher_id),
                    "name": render_scalar(a["name"]),
                    "designation": render_scalar(a["designation"]),
                    "contact": render_scalar(a["contact"]),
                    "email": render_scalar(a["email"]),
                },
            )
            return Term("ok", (teacher_id,)), f"teacher_id={teacher_id}", [row]
        if name == "admit":
            student = self.tables["students"][(int(a["student_id"]),)]
            student = dict(student)
            student["program_id"] = render_scalar(a["p_id"])
            student["admit_year"] = render_scalar(a["year"])
            return Term("ok"), "", [put("students", student)]
        if name == "add_program":
            p_id = self.counters["p_id"]
            self.counters["p_id"] += 1
            rows = [
                put(
                    "programs",
                    {
                        "p_id": str(p_id),
                        "name": render_scalar(a["name"]),
                        "session": render_scalar(a["session"]),
                        "semester_count": render_scalar(a["semester_count"]),
                    },
                )
            ]
            if not self._injected("p5"):
                # fee rows are created atomically with the program
                for semester in range(1, int(a["semester_count"]) + 1):
                    rows.append(
                        put(
                            "fees",
                            {
                                "p_id": str(p_id),
                                "semester": str(semester),
                                "amount": render_scalar(a["fee"]),
                            },
                        )
                    )
            return Term("ok", (p_id,)), f"p_id={p_id}", rows
        if name == "add_class":
            class_id = self.counters["class_id"]
            self.counters["class_id"] += 1
            self._slots.add(
                (
                    render_scalar(a["p_id"]),
                    render_scalar(a["semester"]),
                    render_scalar(a["day"]),
                    render_scalar(a["period"]),
                )
            )
            rows = [
                put(
                    "classes",
                    {
                        "class_id": str(class_id),
                        "p_id": render_scalar(a["p_id"]),
                        "semester": render_scalar(a["semester"]),
                        "subject": render_scalar(a["subject"]),
                        "day": render_scalar(a["day"]),
                        "period": render_scalar(a["period"]),
                        "teacher_id": "",
                    },
                ),
                put(
                    "lecture_logs",
                    {
                        "class_id": str(class_id),
                        "subject": render_scalar(a["subject"]),
                        "lectures_delivered": "0",
                    },
                ),
            ]
            return Term("ok", (class_id,)), f"class_id={class_id}", rows
        if name == "assign_teacher":
            cls = dict(self.tables["classes"][(int(a["class_id"]),)])
            if cls["teacher_id"]:
                self._teacher_slots.pop((cls["teacher_id"], cls["day"], cls["period"]), None)
            cls["teacher_id"] = render_scalar(a["teacher_id"])
            self._teacher_slots[(cls["teacher_id"], cls["day"], cls["period"])] = cls["class_id"]
            return Term("ok"), "", [put("classes", cls)]
        if name == "deliver_lecture":
            log = dict(self.tables["lecture_logs"][(int(a["class_id"]),)])
            count = int(log["lectures_delivered"]) + int(a["times"])
            log["lectures_delivered"] = str(count)
            return Term("ok", (count,)), f"total={count}", [put("lecture_logs", log)]
        if name == "schedule_exam":
            row = put(
                "datesheet",
                {
                    "class_id": render_scalar(a["class_id"]),
                    "date": render_scalar(a["date"]),
                    "term": render_scalar(a["term"]),
                    "subject": render_scalar(a["subject"]),
                },
            )
            return Term("ok"), "", [row]
        if name == "record_result":
            row = put(
                "results",
                {
                    "student_id": render_scalar(a["student_id"]),
                    "class_id": render_scalar(a["class_id"]),
                    "subject": render_scalar(a["subject"]),
                    "marks": render_scalar(a["marks"]),
                    "year": render_scalar(a["year"]),
                },
            )
            return Term("ok"), "", [row]
        raise ValueError(f"no mutation for command {name}")


# -- spec-level convenience wrappers ------------------------------------


def open_session(store: Store, dpt_id: str) -> int | Refusal:
    outcome = store.execute(Command("open_session", (("dpt_id", dpt_id),), "local:0"))
    if isinstance(outcome.result, Refusal):
        return outcome.result
    return int(outcome.result.args[0])


def apply(store: Store, command: Command) -> DomainEvent | Refusal:
    outcome = store.execute(command)
    if isinstance(outcome.result, Refusal):
        return outcome.result
    if outcome.event is None:
        raise ValueError("apply expects a mutating command")
    return outcome.event


def _parse_journal_line(expected_seq: int, line: str) -> Command:
    parts = line.split("|")
    if len(parts) != 4:
        raise JournalCorruption(expected_seq, "bad frame")
    seq_text, name, kv, crc = parts
    if _crc(f"{seq_text}|{name}|{kv}") != crc:
        raise JournalCorruption(expected_seq, "checksum mismatch")
    if not seq_text.isdigit() or int(seq_text) != expected_seq:
        raise JournalCorruption(expected_seq, f"unexpected seq {seq_text!r}")
    if name not in SCHEMAS or name == "query":
        raise JournalCorruption(expected_seq, f"unknown event {name!r}")
    try:
        return Command.parse(f"{name}({kv})", conversation="replay")
    except ValueError as exc:
        raise JournalCorruption(expected_seq, str(exc)) from exc


def recover(journal: list[str], cfg: RunConfig | None = None) -> tuple[Store, int | None]:
    """Fold the valid prefix of a journal into a fresh store.

    Returns (store, None) for a clean journal, or (store built from the
    prefix, seq of the first bad record) when corruption is found.
    """
    store = Store(cfg)
    for line in journal:
        expected = store.next_seq
        try:
            command = _parse_journal_line(expected, line)
            store._mutate(command)
        except JournalCorruption:
            return store, expected
        except Exception:  # a framed-but-inapplicable record is corruption too
            return store, expected
        store.journal_lines.append(line)
        store.next_seq += 1
    return store, None


def replay(journal: list[str], cfg: RunConfig | None = None) -> Store:
    """Fold a journal into a fresh store; raises JournalCorruption."""
    store, bad = recover(journal, cfg)
    if bad is not None:
        raise JournalCorruption(bad, "halted at first bad record")
    return store
