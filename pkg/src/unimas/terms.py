"""Wire-level value types shared by every layer.

Everything that crosses an agent boundary (message content, store commands,
trace lines) is built from scalars: ints and restricted text tokens.  The
restriction keeps every rendered line (trace, journal, dump) parseable
without an escaping scheme; payloads that need arbitrary text travel as
percent-encoded blobs.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field
from enum import Enum

Scalar = int | str

# Characters that would break the line-oriented wire formats.
_FORBIDDEN = re.compile(r'[|,()" \n\r\t]')


def check_scalar(value: Scalar) -> Scalar:
    """Validate a term argument; raises ValueError on unsafe text."""
    if isinstance(value, bool):
        raise ValueError("bool is not a term scalar")
    if isinstance(value, int):
        return value
    if not isinstance(value, str):
        raise ValueError(f"term scalar must be int or str, got {type(value).__name__}")
    if _FORBIDDEN.search(value):
        raise ValueError(f"unsafe characters in term scalar: {value!r}")
    return value


def encode_blob(text: str) -> str:
    """Encode arbitrary text into a single safe, never-empty scalar token."""
    return "B" + base64.urlsafe_b64encode(text.encode()).decode()


def decode_blob(token: str) -> str:
    if not token.startswith("B"):
        raise ValueError(f"not a blob token: {token[:16]!r}")
    return base64.urlsafe_b64decode(token[1:].encode()).decode()


def render_scalar(value: Scalar) -> str:
    return str(value)


def parse_scalar(token: str) -> Scalar:
    """Canonical inverse of render_scalar: decimal tokens become ints."""
    if token and (token.isdigit() or (token[0] == "-" and token[1:].isdigit())):
        return int(token)
    return token


@dataclass(frozen=True)
class Term:
    """A predicate term: name plus ordered scalar arguments."""

    name: str
    args: tuple[Scalar, ...] = ()

    def __post_init__(self) -> None:
        if not self.name or _FORBIDDEN.search(self.name):
            raise ValueError(f"bad term name: {self.name!r}")
        for a in self.args:
            check_scalar(a)

    def render(self) -> str:
        return f"{self.name}({','.join(render_scalar(a) for a in self.args)})"

    @staticmethod
    def parse(text: str) -> "Term":
        if not text.endswith(")") or "(" not in text:
            raise ValueError(f"bad term syntax: {text!r}")
        name, _, inner = text[:-1].partition("(")
        args = tuple(parse_scalar(t) for t in inner.split(",")) if inner else ()
        return Term(name, args)


class Performative(str, Enum):
    """Speech-act type of a message."""

    REQUEST = "request"
    INFORM = "inform"
    REFUSE = "refuse"
    FAILURE = "failure"


#: Performatives that answer an earlier request.
REPLIES = (Performative.INFORM, Performative.REFUSE, Performative.FAILURE)


@dataclass(frozen=True)
class Envelope:
    """Typed inter-agent message.

    ``sent_round`` is -1 until the router stamps it at delivery time; the
    kernel cannot know the round number.
    """

    sender: str
    receiver: str
    performative: Performative
    conversation: str
    content: Term
    sent_round: int = -1

    def __post_init__(self) -> None:
        if not self.conversation:
            raise ValueError("conversation id must be non-empty")


def conversation_origin(conversation: str) -> str:
    """The agent that opened a conversation (encoded as the id prefix)."""
    return conversation.split(":", 1)[0]


@dataclass(frozen=True)
class Command:
    """A validated store mutation request: name, named args, conversation."""

    name: str
    args: tuple[tuple[str, Scalar], ...]
    conversation: str

    def get(self, key: str, default: Scalar | None = None) -> Scalar | None:
        for k, v in self.args:
            if k == key:
                return v
        return default

    def render_args(self) -> str:
        return ",".join(f"{k}={render_scalar(v)}" for k, v in self.args)

    def render(self) -> str:
        return f"{self.name}({self.render_args()})"

    @staticmethod
    def parse(text: str, conversation: str) -> "Command":
        if not text.endswith(")") or "(" not in text:
            raise ValueError(f"bad command syntax: {text!r}")
        name, _, inner = text[:-1].partition("(")
        args: list[tuple[str, Scalar]] = []
        if inner:
            for pair in inner.split(","):
                k, eq, v = pair.partition("=")
                if not eq:
                    raise ValueError(f"bad command arg: {pair!r}")
                args.append((k, parse_scalar(v)))
        return Command(name, tuple(args), conversation)


@dataclass(frozen=True)
class Refusal:
    """A rejected command or request.

    ``fault`` distinguishes referential/protocol errors (answered with a
    failure performative) from business-rule refusals (answered with refuse).
    """

    reason: str
    fault: bool = False


@dataclass(frozen=True)
class Report:
    """Statistical report: never absent, possibly zero rows."""

    kind: str
    rows: tuple[tuple[str, str], ...] = ()
    generated_round: int = 0

    def render_lines(self) -> list[str]:
        return [f"{self.kind}|{label}|{value}" for label, value in self.rows]


@dataclass(frozen=True)
class Ratio:
    """Explicit numerator/denominator; never divides."""

    numerator: int
    denominator: int

    def render(self) -> str:
        if self.denominator == 0:
            return "undefined"
        return f"{self.numerator}/{self.denominator}"
