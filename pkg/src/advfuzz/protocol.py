"""Messages exchanged between the fuzz loop and the ML component.

Wire format: one record per line, ``seq|kind|sent_at,payload``. Payload
fields are comma separated; inline candidate bytes are base64 (``b64:`` prefix), large
candidates travel as a file reference (``file:`` prefix) under
``out/exchange/``.
"""

from __future__ import annotations

import base64
import enum
import select
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path

from advfuzz.errors import ChannelClosed

INLINE_LIMIT = 4096


class Kind(enum.Enum):
    NEW_INPUT = "NewInput"
    NEW_EDGE = "NewEdge"
    CYCLE_END = "CycleEnd"
    PRIORITY_TARGET = "PriorityTarget"
    CANDIDATE = "Candidate"
    SHUTDOWN = "Shutdown"


@dataclass
class Message:
    kind: Kind
    entry_id: int | None = None
    file_ref: str | None = None
    edge: int | None = None
    cycle: int | None = None
    data: bytes | None = None
    seed_id: int | None = None
    seq: int = -1
    sent_at: float = field(default=0.0)

    # -- constructors ---------------------------------------------------

    @classmethod
    def new_input(cls, entry_id: int, file_ref: str) -> Message:
        return cls(Kind.NEW_INPUT, entry_id=entry_id, file_ref=file_ref)

    @classmethod
    def new_edge(cls, edge: int) -> Message:
        return cls(Kind.NEW_EDGE, edge=edge)

    @classmethod
    def cycle_end(cls, cycle: int) -> Message:
        return cls(Kind.CYCLE_END, cycle=cycle)

    @classmethod
    def priority_target(cls, edge: int) -> Message:
        return cls(Kind.PRIORITY_TARGET, edge=edge)

    @classmethod
    def candidate(cls, data: bytes | None, edge: int, seed_id: int, file_ref: str | None = None) -> Message:
        return cls(Kind.CANDIDATE, data=data, edge=edge, seed_id=seed_id, file_ref=file_ref)

    @classmethod
    def shutdown(cls) -> Message:
        return cls(Kind.SHUTDOWN)

    # -- wire format ----------------------------------------------------

    def payload(self) -> str:
        k = self.kind
        if k is Kind.NEW_INPUT:
            return f"{self.entry_id},{self.file_ref}"
        if k in (Kind.NEW_EDGE, Kind.PRIORITY_TARGET):
            return str(self.edge)
        if k is Kind.CYCLE_END:
            return str(self.cycle)
        if k is Kind.CANDIDATE:
            if self.data is not None:
                body = "b64:" + base64.b64encode(self.data).decode("ascii")
            else:
                body = "file:" + str(self.file_ref)
            return f"{self.edge},{self.seed_id},{body}"
        return ""

    def encode(self) -> bytes:
        return f"{self.seq}|{self.kind.value}|{self.sent_at:.6f},{self.payload()}\n".encode("ascii")

    @classmethod
    def decode(cls, line: bytes | str) -> Message:
        if isinstance(line, bytes):
            line = line.decode("ascii")
        seq_s, kind_s, rest = line.rstrip("\n").split("|", 2)
        sent_s, _, payload = rest.partition(",")
        kind = Kind(kind_s)
        msg = cls(kind, seq=int(seq_s), sent_at=float(sent_s))
        if kind is Kind.NEW_INPUT:
            eid, ref = payload.split(",", 1)
            msg.entry_id, msg.file_ref = int(eid), ref
        elif kind in (Kind.NEW_EDGE, Kind.PRIORITY_TARGET):
            msg.edge = int(payload)
        elif kind is Kind.CYCLE_END:
            msg.cycle = int(payload)
        elif kind is Kind.CANDIDATE:
            edge, seed, body = payload.split(",", 2)
            msg.edge, msg.seed_id = int(edge), int(seed)
            if body.startswith("b64:"):
                msg.data = base64.b64decode(body[4:])
            elif body.startswith("file:"):
                msg.file_ref = body[5:]
            else:
                raise ValueError(f"bad candidate body: {body[:16]!r}")
        return msg

    def load_bytes(self) -> bytes:
        if self.data is not None:
            return self.data
        return Path(self.file_ref).read_bytes()


def make_candidate(data: bytes, edge: int, seed_id: int, exchange_dir: Path | None,
                   name: str, inline_limit: int = INLINE_LIMIT) -> Message:
    """Inline small payloads; spill larger ones to ``exchange_dir``."""
    if len(data) <= inline_limit or exchange_dir is None:
        return Message.candidate(data, edge, seed_id)
    exchange_dir.mkdir(parents=True, exist_ok=True)
    path = exchange_dir / name
    path.write_bytes(data)
    return Message.candidate(None, edge, seed_id, file_ref=str(path))


class Channel:
    """Ordered, lossless message pipe over a connected stream socket.

    Sends never block: bytes the peer cannot take yet stay buffered and are
    flushed on later calls. ``recv(timeout=0)`` returns None when nothing is
    available; a closed peer raises :class:`ChannelClosed`.
    """

    def __init__(self, sock: socket.socket, journal=None):
        self.sock = sock
        self.sock.setblocking(False)
        self._seq = 0
        self._out = bytearray()
        self._in = bytearray()
        self._ready: list[Message] = []
        self._closed = False
        self.journal = journal

    @property
    def pending_out(self) -> int:
        return len(self._out)

    def send(self, msg: Message) -> Message:
        if self._closed:
            raise ChannelClosed("channel closed")
        msg.seq = self._seq
        self._seq += 1
        msg.sent_at = time.time()
        self._out += msg.encode()
        if self.journal is not None:
            self.journal("send", msg)
        self.flush()
        return msg

    def flush(self) -> None:
        while self._out:
            try:
                sent = self.sock.send(self._out)
            except (BlockingIOError, InterruptedError):
                return
            except OSError as exc:
                self._closed = True
                raise ChannelClosed(str(exc)) from exc
            del self._out[:sent]

    def _fill(self, timeout: float | None) -> None:
        if timeout != 0:
            r, _, _ = select.select([self.sock], [], [], timeout)
            if not r:
                return
        while True:
            try:
                chunk = self.sock.recv(65536)
            except (BlockingIOError, InterruptedError):
                break
            except OSError as exc:
                self._closed = True
                raise ChannelClosed(str(exc)) from exc
            if not chunk:
                self._closed = True
                break
            self._in += chunk
        while True:
            nl = self._in.find(b"\n")
            if nl < 0:
                break
            line = bytes(self._in[: nl + 1])
            del self._in[: nl + 1]
            msg = Message.decode(line)
            if self.journal is not None:
                self.journal("recv", msg)
            self._ready.append(msg)

    def recv(self, timeout: float | None = None) -> Message | None:
        """Next message; blocks up to ``timeout`` seconds (None = forever)."""
        if self._out and not self._closed:
            self.flush()
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self._ready:
            if self._closed:
                raise ChannelClosed("peer closed the channel")
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            self._fill(remaining)
            if not self._ready and deadline is not None and time.monotonic() >= deadline:
                if self._closed:
                    raise ChannelClosed("peer closed the channel")
                return None
        return self._ready.pop(0)

    def drain(self) -> list[Message]:
        """Every message available right now (possibly none)."""
        out = []
        while True:
            msg = self.recv(timeout=0)
            if msg is None:
                return out
            out.append(msg)

    def close(self) -> None:
        self._closed = True
        try:
            self.sock.close()
        except OSError:
            pass


def channel_pair(journal_a=None, journal_b=None) -> tuple[Channel, Channel]:
    a, b = socket.socketpair()
    return Channel(a, journal_a), Channel(b, journal_b)
