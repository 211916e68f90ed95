"""Public-coin protocol substrate: coin streams, transcripts, metering,
adversary hooks, and replay.

All verifier randomness flows through the session's CoinSource, so the
public-coin discipline holds by construction; a machine that tries to
supply its own coin function fails the schedule audit.  Transcripts are
bit-exact serializable and replayable: in replay mode recorded payloads
are fed back to the verifier logic and every check is recomputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .coins import CoinSource
from .field import FieldConfig

_U64 = np.uint64

VERIFIER = 0
PROVER = 1

MAGIC = b"UIPT"
VERSION = 1


class TranscriptParseError(Exception):
    def __init__(self, message, offset):
        super().__init__("%s (offset %d)" % (message, offset))
        self.offset = offset


class ReplayMismatch(Exception):
    """Replay saw a record incompatible with the protocol's schedule."""


@dataclass
class Record:
    round: int
    role: int
    payload: np.ndarray  # uint64 raw element values

    def __eq__(self, other):
        return (
            isinstance(other, Record)
            and other.round == self.round
            and other.role == self.role
            and np.array_equal(other.payload, self.payload)
        )


class SessionTranscript:
    """Ordered public-coin/message log of one protocol run."""

    def __init__(self, width: int):
        self.width = width
        self.records: list[Record] = []
        self.outcome = None

    def append(self, role: int, payload) -> Record:
        rec = Record(len(self.records), role, np.asarray(payload, dtype=_U64))
        self.records.append(rec)
        return rec

    def serialize(self) -> bytes:
        out = bytearray()
        out += MAGIC
        out.append(VERSION)
        out.append(self.width)
        out += _varint(len(self.records))
        nbytes = (self.width + 7) // 8
        for rec in self.records:
            out += _varint(rec.round)
            out.append(rec.role)
            out += _varint(int(rec.payload.size))
            for v in rec.payload:
                out += int(v).to_bytes(nbytes, "big")
        return bytes(out)

    @staticmethod
    def parse(data: bytes) -> "SessionTranscript":
        if len(data) < 7:
            raise TranscriptParseError("truncated header", len(data))
        if data[:4] != MAGIC:
            raise TranscriptParseError("bad magic", 0)
        if data[4] != VERSION:
            raise TranscriptParseError("unsupported version", 4)
        width = data[5]
        if width not in (4, 16, 64, 128):
            raise TranscriptParseError("bad field width", 5)
        t = SessionTranscript(width)
        pos = 6
        count, pos = _read_varint(data, pos)
        nbytes = (width + 7) // 8
        mask = (1 << width) - 1
        for i in range(count):
            rnd, pos = _read_varint(data, pos)
            if rnd != i:
                raise TranscriptParseError("rounds not strictly increasing", pos)
            if pos >= len(data):
                raise TranscriptParseError("truncated record", pos)
            role = data[pos]
            pos += 1
            if role not in (VERIFIER, PROVER):
                raise TranscriptParseError("bad role byte", pos - 1)
            n, pos = _read_varint(data, pos)
            end = pos + n * nbytes
            if end > len(data):
                raise TranscriptParseError("truncated payload", pos)
            payload = np.zeros(n, dtype=_U64)
            for j in range(n):
                v = int.from_bytes(data[pos + j * nbytes: pos + (j + 1) * nbytes], "big")
                if v & ~mask:
                    raise TranscriptParseError("element out of range", pos + j * nbytes)
                payload[j] = v
            pos = end
            t.records.append(Record(i, role, payload))
        if pos != len(data):
            raise TranscriptParseError("trailing bytes", pos)
        return t


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _read_varint(data: bytes, pos: int):
    shift = 0
    val = 0
    while True:
        if pos >= len(data):
            raise TranscriptParseError("truncated varint", pos)
        b = data[pos]
        pos += 1
        val |= (b & 0x7F) << shift
        if not b & 0x80:
            return val, pos
        shift += 7
        if shift > 63:
            raise TranscriptParseError("varint too long", pos)


class Meter:
    """Per-(stage, role, round) communication accounting in bits."""

    def __init__(self):
        self.rows = []

    def record(self, stage: str, role: int, rnd: int, bits: int):
        self.rows.append((stage, role, rnd, bits))

    def total_bits(self, stage_prefix: str = "") -> int:
        return sum(
            b for (s, _, _, b) in self.rows if s.startswith(stage_prefix)
        )

    def by_stage(self) -> dict:
        out = {}
        for (s, _, _, b) in self.rows:
            out[s] = out.get(s, 0) + b
        return out


# ---------------------------------------------------------------------------
# adversary strategies


class AdversaryStrategy:
    tag = "HONEST"

    def mutate(self, ctx, payload):
        return payload

    def prover_statements(self, xs):
        return xs


class Honest(AdversaryStrategy):
    pass


@dataclass
class FlipBit(AdversaryStrategy):
    """Flip one bit of the prover payload at a given global prover round."""

    round: int
    offset: int
    tag = "FLIP_BIT"

    def mutate(self, ctx, payload):
        if ctx["prover_round"] != self.round or payload.size == 0:
            return payload
        width = ctx["width"]
        idx = (self.offset // width) % payload.size
        bit = self.offset % width
        out = payload.copy()
        out[idx] = int(out[idx]) ^ (1 << bit)
        return out


@dataclass
class SubstituteMessage(AdversaryStrategy):
    round: int
    payload: tuple
    tag = "SUBSTITUTE_MESSAGE"

    def mutate(self, ctx, payload):
        if ctx["prover_round"] != self.round:
            return payload
        sub = np.asarray(self.payload, dtype=_U64)
        out = payload.copy()
        n = min(out.size, sub.size)
        out[:n] = sub[:n]
        return out


@dataclass
class ChecksumOffset(AdversaryStrategy):
    """Add delta to one committed checksum element in a distance-generation
    round."""

    round: int
    delta: int
    index: int = 0
    tag = "CHECKSUM_OFFSET"

    def mutate(self, ctx, payload):
        if ".cksum." not in ctx["stage"]:
            return payload
        if ctx["local_round"] != self.round or payload.size == 0:
            return payload
        out = payload.copy()
        out[self.index % out.size] = int(out[self.index % out.size]) ^ self.delta
        return out


@dataclass
class WrongInstanceSwap(AdversaryStrategy):
    """Prover behaves prescribed for the batch with statements i and j
    swapped."""

    i: int
    j: int
    tag = "WRONG_INSTANCE_SWAP"

    def prover_statements(self, xs):
        xs = list(xs)
        xs[self.i], xs[self.j] = xs[self.j], xs[self.i]
        return xs


@dataclass
class Custom(AdversaryStrategy):
    fn: object
    tag = "CUSTOM"

    def mutate(self, ctx, payload):
        return self.fn(ctx, payload)


# ---------------------------------------------------------------------------
# the session engine


class Session:
    """Orchestrates one protocol run: coins, messages, metering, adversary
    injection, deviation tracking, and replay."""

    def __init__(self, cfg: FieldConfig, seed=0, adversary=None,
                 replay: SessionTranscript | None = None):
        self.cfg = cfg
        self.coins = CoinSource(seed)
        self.adversary = adversary or Honest()
        self.meter = Meter()
        self.transcript = SessionTranscript(cfg.width)
        self.replaying = replay is not None
        self._replay_records = list(replay.records) if replay else None
        self._replay_pos = 0
        self.prover_rounds = 0
        self.first_deviation = None
        self.warnings = []

    # -- verifier coins ----------------------------------------------------
    def _next_replay(self, role: int, n: int) -> np.ndarray:
        if self._replay_pos >= len(self._replay_records):
            raise ReplayMismatch("transcript exhausted")
        rec = self._replay_records[self._replay_pos]
        self._replay_pos += 1
        if rec.role != role or rec.payload.size != n:
            raise ReplayMismatch(
                "expected role=%d count=%d, got role=%d count=%d"
                % (role, n, rec.role, rec.payload.size)
            )
        self.transcript.records.append(rec)
        return rec.payload

    def coin_bits(self, n: int, stage: str) -> tuple:
        if self.replaying:
            payload = self._next_replay(VERIFIER, n)
            bits = tuple(int(v) & 1 for v in payload)
        else:
            bits = self.coins.draw_bits(n)
            self.transcript.append(VERIFIER, np.array(bits, dtype=_U64))
        self.meter.record(stage, VERIFIER, len(self.transcript.records) - 1, n)
        return bits

    def coin_elements(self, n: int, stage: str) -> np.ndarray:
        if self.replaying:
            payload = self._next_replay(VERIFIER, n)
        else:
            payload = self.coins.draw_elements(n, self.cfg)
            self.transcript.append(VERIFIER, payload)
        self.meter.record(
            stage, VERIFIER, len(self.transcript.records) - 1,
            n * self.cfg.width,
        )
        return payload

    def coin_bytes(self, n: int, stage: str) -> bytes:
        """n random bytes, recorded as 8n bit coins."""
        bits = self.coin_bits(8 * n, stage)
        out = bytearray(n)
        for i, b in enumerate(bits):
            out[i // 8] |= b << (i % 8)
        return bytes(out)

    # -- prover messages -----------------------------------------------------
    def prover_message(self, stage: str, fn, honest_fn=None,
                       bits_per_element=None) -> np.ndarray:
        """Record one prover message.  fn() computes the prover's payload
        (already reflecting any statement-level adversary); honest_fn()
        computes the prescribed payload when it differs from fn."""
        rnd = self.prover_rounds
        self.prover_rounds += 1
        if self.replaying:
            payload = self._next_replay(PROVER, self._peek_count())
        else:
            payload = np.asarray(fn(), dtype=_U64)
            honest = payload if honest_fn is None else np.asarray(
                honest_fn(), dtype=_U64
            )
            ctx = {
                "stage": stage,
                "prover_round": rnd,
                "local_round": _local_round(stage),
                "width": self.cfg.width,
            }
            mutated = np.asarray(self.adversary.mutate(ctx, payload), dtype=_U64)
            if self.first_deviation is None and not np.array_equal(mutated, honest):
                self.first_deviation = rnd
            payload = mutated
            self.transcript.append(PROVER, payload)
        bpe = self.cfg.width if bits_per_element is None else bits_per_element
        self.meter.record(
            stage, PROVER, len(self.transcript.records) - 1,
            int(payload.size) * bpe,
        )
        return payload

    def _peek_count(self) -> int:
        if self._replay_pos >= len(self._replay_records):
            raise ReplayMismatch("transcript exhausted")
        return int(self._replay_records[self._replay_pos].payload.size)

    def warn(self, message: str):
        if message not in self.warnings:
            self.warnings.append(message)

    def finish(self, outcome: str):
        self.transcript.outcome = outcome
        return self.transcript


def _local_round(stage: str) -> int:
    # stage labels end with ".r<k>" for per-round messages
    tail = stage.rsplit("r", 1)
    if len(tail) == 2 and tail[1].isdigit():
        return int(tail[1])
    return -1


# ---------------------------------------------------------------------------
# generic two-machine protocol runner


class AuditError(Exception):
    """A verifier machine violated the public-coin schedule discipline."""


@dataclass
class VerifierMachine:
    """Declarative public-coin verifier: per-round coin widths plus a
    verdict over (coins, answers).  Any custom coin function marks the
    machine as message-dependent and fails the audit."""

    coin_bits_per_round: tuple
    verdict: object  # fn(coins: list[tuple], answers: list[np.ndarray]) -> bool
    coin_fn: object = None


@dataclass
class ProverMachine:
    """next_message(round, coins_so_far) -> payload."""

    next_message: object
    rounds: int


def audit_machine(v: VerifierMachine):
    if v.coin_fn is not None:
        raise AuditError(
            "verifier machine supplies its own coin function; coins must "
            "come from the session stream"
        )
    if any(b < 0 for b in v.coin_bits_per_round):
        raise AuditError("negative coin width")


def run_protocol(prover: ProverMachine, verifier: VerifierMachine,
                 session: Session, stage: str = "proto"):
    """Run a simple schedule-driven protocol; returns (accept, transcript)."""
    audit_machine(verifier)
    if prover.rounds != len(verifier.coin_bits_per_round):
        raise AuditError("machines disagree on the round schedule")
    coins = []
    answers = []
    for r, b in enumerate(verifier.coin_bits_per_round):
        q = session.coin_bits(b, "%s.r%d" % (stage, r))
        coins.append(q)
        payload = session.prover_message(
            "%s.r%d" % (stage, r), lambda r=r: prover.next_message(r, list(coins)),
            bits_per_element=1,
        )
        answers.append(payload)
    ok = bool(verifier.verdict(coins, answers))
    session.finish("accept" if ok else "reject")
    return ok, session.transcript
