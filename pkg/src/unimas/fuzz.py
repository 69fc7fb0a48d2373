"""Model-based scenario generator.

Keeps a shadow model of the store so generated commands are plausible, and
aims squarely at the boundaries: duplicate ids, occupied slots, lecture
counts landing on 15/16/31/32, marks at the bound and one past it.  The
stream is a pure function of (seed, n_events, config); running it with the
monitor on and no fault injection must never produce a violation, because
every hostile command is one the system is supposed to refuse.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace as dc_replace

from .config import RunConfig
from .scenario import ScenarioCommand, RunResult, run_scenario

# Boundary-pressure tuning constants (harness behavior, not domain claims).
DUPLICATE_ID_BIAS = 0.30
SLOT_PRESSURE_BIAS = 0.20
REPORT_WEIGHT = 1
FORCED_DUPLICATE_ADMIT_EVERY = 200

_WEIGHTED_VERBS = (
    ("REGISTER_STUDENT", 18),
    ("ADMIT", 12),
    ("REGISTER_TEACHER", 8),
    ("ADD_PROGRAM", 4),
    ("ADD_CLASS", 12),
    ("ASSIGN_TEACHER", 8),
    ("DELIVER_LECTURE", 14),
    ("SCHEDULE_EXAM", 10),
    ("RECORD_RESULT", 12),
    ("GENERATE_REPORT", REPORT_WEIGHT),
    ("OPEN_SESSION", 1),
)

_SUBJECTS = ("Math", "Physics", "Programming", "Databases", "Networks", "Logic")
_DATES = tuple(f"2025-05-{day:02d}" for day in range(1, 6))
_REPORTS = (
    "graduates_per_year",
    "admissions_per_year",
    "attendance",
    "teacher_student_ratio",
    "lab_student_ratio",
)


@dataclass
class _Model:
    """Shadow of the store, tracking only what generation needs."""

    st_ids: list[str] = field(default_factory=list)
    students: list[int] = field(default_factory=list)  # registered student ids
    admitted: list[int] = field(default_factory=list)
    teachers: int = 0
    programs: dict[int, int] = field(default_factory=dict)  # p_id -> semesters
    classes: dict[int, tuple[int, int, str, int, int]] = field(default_factory=dict)
    lectures: dict[int, int] = field(default_factory=dict)
    next_st: int = 1
    next_student: int = 1
    next_teacher: int = 1
    next_program: int = 1
    next_class: int = 1


def _cmd(verb: str, **kv: object) -> ScenarioCommand:
    return ScenarioCommand(verb, tuple((k, str(v)) for k, v in kv.items()))


def generate(seed: int, n_events: int, cfg: RunConfig | None = None) -> list[ScenarioCommand]:
    """Deterministic stream of n_events scenario commands."""
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    cfg = cfg or RunConfig()
    rng = random.Random(seed)
    model = _Model()
    out: list[ScenarioCommand] = []

    def register_student() -> ScenarioCommand:
        if model.st_ids and rng.random() < DUPLICATE_ID_BIAS:
            st_id = rng.choice(model.st_ids)  # duplicate pressure
        else:
            st_id = f"C{model.next_st:05d}"
            model.next_st += 1
            model.st_ids.append(st_id)
            model.students.append(model.next_student)
            model.next_student += 1
        return _cmd("REGISTER_STUDENT", st_id=st_id, name=f"S_{st_id}", dept=cfg.cs_roster[0])

    fresh_pool: list[int] = []  # registered but not yet admitted

    def admit(force_duplicate: bool = False) -> ScenarioCommand:
        p_id = rng.choice(sorted(model.programs))
        fresh_pool.extend(s for s in model.students[len(fresh_pool) + len(model.admitted):])
        if model.admitted and (force_duplicate or rng.random() < DUPLICATE_ID_BIAS or not fresh_pool):
            student = rng.choice(model.admitted)
        else:
            student = fresh_pool.pop(rng.randrange(len(fresh_pool)))
            model.admitted.append(student)
        return _cmd("ADMIT", student_id=student, p_id=p_id, year=rng.randint(2023, 2026))

    def add_program() -> ScenarioCommand:
        model.programs[model.next_program] = rng.choice((2, 4, 8))
        model.next_program += 1
        return _cmd(
            "ADD_PROGRAM",
            name=f"prog_{model.next_program - 1}",
            session=rng.choice(("morning", "evening")),
            semesters=model.programs[model.next_program - 1],
            fee=rng.randrange(1000, 9000, 500),
        )

    slots: set[tuple[int, int, int, int]] = set()

    def add_class() -> ScenarioCommand:
        p_id = rng.choice(sorted(model.programs))
        semester = rng.randint(1, model.programs[p_id])
        if model.classes and rng.random() < SLOT_PRESSURE_BIAS:
            # aim at an occupied slot of the same cohort
            cls = rng.choice(sorted(model.classes))
            p_id, semester, _, day, period = model.classes[cls]
        else:
            day, period = rng.randint(0, 4), rng.randint(0, 7)
        occupied = (p_id, semester, day, period) in slots
        if not occupied:
            model.classes[model.next_class] = (p_id, semester, rng.choice(_SUBJECTS), day, period)
            model.lectures[model.next_class] = 0
            model.next_class += 1
            slots.add((p_id, semester, day, period))
        subject = (
            model.classes[model.next_class - 1][2]
            if not occupied
            else rng.choice(_SUBJECTS)
        )
        return _cmd(
            "ADD_CLASS", p_id=p_id, semester=semester, subject=subject, day=day, period=period
        )

    def assign_teacher() -> ScenarioCommand:
        class_id = rng.choice(sorted(model.classes))
        return _cmd("ASSIGN_TEACHER", class_id=class_id, teacher_id=rng.randint(1, model.teachers))

    def deliver_lecture() -> ScenarioCommand:
        class_id = rng.choice(sorted(model.classes))
        current = model.lectures[class_id]
        boundary = rng.choice(
            (
                cfg.min_lectures_mid - 1,
                cfg.min_lectures_mid,
                cfg.min_lectures_final - 1,
                cfg.min_lectures_final,
            )
        )
        times = boundary - current if current < boundary else rng.randint(1, 3)
        subject = model.classes[class_id][2]
        model.lectures[class_id] = current + times
        return _cmd("DELIVER_LECTURE", class_id=class_id, subject=subject, times=times)

    def schedule_exam() -> ScenarioCommand:
        class_id = rng.choice(sorted(model.classes))
        return _cmd(
            "SCHEDULE_EXAM",
            term=rng.choice(("mid", "final")),
            class_id=class_id,
            subject=model.classes[class_id][2],
            date=rng.choice(_DATES),
        )

    def record_result() -> ScenarioCommand:
        class_id = rng.choice(sorted(model.classes))
        subject = model.classes[class_id][2]
        lo, hi = cfg.marks_bounds(subject)
        marks = rng.choice((lo - 1, lo, lo + 1, (lo + hi) // 2, hi - 1, hi, hi + 1))
        student = rng.choice(model.admitted or model.students)
        return _cmd(
            "RECORD_RESULT",
            student_id=student,
            class_id=class_id,
            subject=subject,
            marks=marks,
            year=rng.randint(2023, 2026),
        )

    def register_teacher() -> ScenarioCommand:
        model.teachers += 1
        model.next_teacher += 1
        n = model.next_teacher - 1
        return _cmd(
            "REGISTER_TEACHER",
            name=f"T_{n}",
            designation=rng.choice(("lecturer", "professor")),
            contact=f"0300{n:07d}",
            email=f"t{n}@uni.edu",
        )

    # fixed prelude so every verb's preconditions are satisfiable early
    out.append(_cmd("OPEN_SESSION", dept=cfg.cs_roster[0]))
    out.append(add_program())
    out.append(register_teacher())
    out.append(register_student())
    out.append(register_student())
    out.append(admit())
    out.append(add_class())

    verbs, weights = zip(*_WEIGHTED_VERBS)
    while len(out) < n_events:
        if len(out) % FORCED_DUPLICATE_ADMIT_EVERY == 0 and model.admitted:
            out.append(admit(force_duplicate=True))
            continue
        verb = rng.choices(verbs, weights=weights, k=1)[0]
        if verb == "REGISTER_STUDENT":
            out.append(register_student())
        elif verb == "ADMIT":
            out.append(admit())
        elif verb == "REGISTER_TEACHER":
            out.append(register_teacher())
        elif verb == "ADD_PROGRAM":
            out.append(add_program())
        elif verb == "ADD_CLASS":
            out.append(add_class())
        elif verb == "ASSIGN_TEACHER" and model.teachers and model.classes:
            out.append(assign_teacher())
        elif verb == "DELIVER_LECTURE" and model.classes:
            out.append(deliver_lecture())
        elif verb == "SCHEDULE_EXAM" and model.classes:
            out.append(schedule_exam())
        elif verb == "RECORD_RESULT" and model.classes and model.students:
            out.append(record_result())
        elif verb == "GENERATE_REPORT":
            out.append(_cmd("GENERATE_REPORT", kind=rng.choice(_REPORTS)))
        elif verb == "OPEN_SESSION":
            out.append(_cmd("OPEN_SESSION", dept=cfg.cs_roster[0]))
    return out[:n_events]


def fuzz(seed: int, n_events: int, cfg: RunConfig | None = None) -> RunResult:
    """Generate and run one fuzz stream with the monitor on."""
    cfg = dc_replace(cfg or RunConfig(), seed=seed, pipeline_window=8)
    return run_scenario(generate(seed, n_events, cfg), cfg)
