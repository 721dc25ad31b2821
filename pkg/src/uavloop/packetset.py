"""Packet-log sessionization and preference-pair dataset construction.

A capture CSV is grouped into sessions (bidirectional endpoint pairs, split
on FIN/RST or idle gaps), each session is sliced into sliding windows of n
context packets plus the packet that actually followed, and every window
yields a preference pair: the true next packet as the chosen continuation
and a single-field corruption of it as the rejected one.  Pairs render to a
plain-text format with one key:value line per field and parse back losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, ParseError

PACKET_COLUMNS = (
    "timestamp",
    "src",
    "dst",
    "sport",
    "dport",
    "flags",
    "seq",
    "ack",
    "length",
)
PACKET_HEADER = ",".join(PACKET_COLUMNS)

# Fields rendered into documents and eligible for corruption, in render order.
KEY_FIELDS = ("sport", "dport", "flags", "seq", "ack", "length")

# Canonical flag letters; parsed and rendered in this order.
FLAG_ALPHABET = "FSRPAUEC"

SESSION_IDLE_TIMEOUT_S = 60.0

_CONTEXT_TAG = "#Context"
_PREVIOUS_TAG = "#Previous_Packet"
_PREDICTED_TAG = "#Predicted_Packet"
_BLOCK_TAG = "#BLOCK"


def canonical_flags(flags: str) -> str:
    """Deduplicate and order flag letters by the canonical alphabet."""
    present = set(flags)
    unknown = present - set(FLAG_ALPHABET)
    if unknown:
        raise ParseError(f"unknown TCP flag letters: {''.join(sorted(unknown))}")
    return "".join(c for c in FLAG_ALPHABET if c in present)


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    src: str
    dst: str
    sport: int
    dport: int
    flags: str
    seq: int
    ack: int
    length: int
    session_id: int = field(default=-1, compare=False)
    index_in_session: int = field(default=-1, compare=False)

    def __post_init__(self) -> None:
        for name in ("sport", "dport"):
            v = getattr(self, name)
            if not (0 <= v <= 65535):
                raise ParseError(f"{name} out of range: {v}")
        for name in ("seq", "ack"):
            v = getattr(self, name)
            if not (0 <= v < 2**32):
                raise ParseError(f"{name} out of range: {v}")
        if self.length < 0:
            raise ParseError(f"length must be non-negative: {self.length}")
        object.__setattr__(self, "flags", canonical_flags(self.flags))

    def key_values(self) -> dict:
        return {name: getattr(self, name) for name in KEY_FIELDS}

    def endpoints(self) -> frozenset:
        return frozenset(((self.src, self.sport), (self.dst, self.dport)))


def parse_packet_csv(text: str) -> list[PacketRecord]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != PACKET_HEADER:
        raise ParseError(f"expected header {PACKET_HEADER!r}", line=1)
    records: list[PacketRecord] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != len(PACKET_COLUMNS):
            raise ParseError(
                f"expected {len(PACKET_COLUMNS)} fields, got {len(cells)}", line=lineno
            )
        try:
            records.append(
                PacketRecord(
                    timestamp=float(cells[0]),
                    src=cells[1],
                    dst=cells[2],
                    sport=int(cells[3]),
                    dport=int(cells[4]),
                    flags=cells[5],
                    seq=int(cells[6]),
                    ack=int(cells[7]),
                    length=int(cells[8]),
                )
            )
        except ParseError as exc:
            if exc.line is None:
                raise ParseError(str(exc), line=lineno) from exc
            raise
        except ValueError as exc:
            raise ParseError(f"bad packet row: {exc}", line=lineno) from exc
    return records


def load_packet_csv(path: str) -> list[PacketRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_packet_csv(fh.read())


def extract_sessions(
    packets: Sequence[PacketRecord] | str,
    idle_timeout_s: float = SESSION_IDLE_TIMEOUT_S,
) -> list[list[PacketRecord]]:
    """Group packets into per-conversation sessions.

    Packets that share a bidirectional (address, port) endpoint pair belong
    to the same conversation; conversations keep first-appearance order, and
    packets within one are ordered by timestamp (stable for ties).  A session
    ends after a packet carrying F or R, or before a gap longer than the idle
    timeout.
    """
    if isinstance(packets, str):
        packets = parse_packet_csv(packets)
    if idle_timeout_s <= 0:
        raise ConfigError(f"idle_timeout_s must be positive, got {idle_timeout_s}")
    groups: dict[frozenset, list[PacketRecord]] = {}
    for rec in packets:
        groups.setdefault(rec.endpoints(), []).append(rec)
    sessions: list[list[PacketRecord]] = []
    for flow in groups.values():
        flow = sorted(flow, key=lambda r: r.timestamp)
        current: list[PacketRecord] = []
        for rec in flow:
            boundary = bool(current) and (
                rec.timestamp - current[-1].timestamp > idle_timeout_s
            )
            if boundary:
                sessions.append(current)
                current = []
            current.append(rec)
            if "F" in rec.flags or "R" in rec.flags:
                sessions.append(current)
                current = []
        if current:
            sessions.append(current)
    tagged: list[list[PacketRecord]] = []
    for sid, sess in enumerate(sessions):
        tagged.append(
            [
                PacketRecord(
                    timestamp=r.timestamp,
                    src=r.src,
                    dst=r.dst,
                    sport=r.sport,
                    dport=r.dport,
                    flags=r.flags,
                    seq=r.seq,
                    ack=r.ack,
                    length=r.length,
                    session_id=sid,
                    index_in_session=i,
                )
                for i, r in enumerate(sess)
            ]
        )
    return tagged


@dataclass(frozen=True)
class PacketWindow:
    context: tuple
    prompt: PacketRecord
    next_packet: PacketRecord

    def __post_init__(self) -> None:
        if len(self.context) < 1:
            raise ConfigError("context must hold at least one packet")


def build_windows(
    sessions: Sequence[Sequence[PacketRecord]], context: int
) -> list[PacketWindow]:
    """Sliding triples: n context packets, the prompt, and its true successor.

    A session of length m yields max(0, m - context - 1) windows.
    """
    if context < 1:
        raise ConfigError(f"context must be positive, got {context}")
    windows: list[PacketWindow] = []
    for sess in sessions:
        for i in range(context, len(sess) - 1):
            windows.append(
                PacketWindow(
                    context=tuple(sess[i - context : i]),
                    prompt=sess[i],
                    next_packet=sess[i + 1],
                )
            )
    return windows


def perturb_field(packet: PacketRecord, fld: str, rng: np.random.Generator) -> PacketRecord:
    """Corrupt one field, guaranteed to differ from the original value."""
    values = packet.key_values()
    if fld in ("sport", "dport"):
        step = int(rng.integers(1, 1001)) * (1 if rng.random() < 0.5 else -1)
        values[fld] = (values[fld] + step) % 65536
    elif fld in ("seq", "ack"):
        step = int(rng.integers(1, 1000001)) * (1 if rng.random() < 0.5 else -1)
        values[fld] = (values[fld] + step) % 2**32
    elif fld == "length":
        new = values[fld]
        while new == values[fld]:
            new = int(rng.integers(0, 1501))
        values[fld] = new
    elif fld == "flags":
        letter = FLAG_ALPHABET[int(rng.integers(0, len(FLAG_ALPHABET)))]
        present = set(values[fld])
        present.symmetric_difference_update(letter)
        values[fld] = "".join(c for c in FLAG_ALPHABET if c in present)
    else:
        raise ConfigError(f"unknown packet field {fld!r}")
    return PacketRecord(
        timestamp=packet.timestamp,
        src=packet.src,
        dst=packet.dst,
        session_id=packet.session_id,
        index_in_session=packet.index_in_session,
        **values,
    )


@dataclass(frozen=True)
class FinetuneSample:
    window: PacketWindow
    chosen: PacketRecord
    rejected: PacketRecord

    def __post_init__(self) -> None:
        if self.chosen != self.window.next_packet:
            raise ConfigError("chosen continuation must be the window's true next packet")
        diffs = diff_fields(self.chosen, self.rejected)
        if len(diffs) != 1:
            raise ConfigError(
                f"rejected packet must differ in exactly one field, differs in {len(diffs)}"
            )


def diff_fields(a: PacketRecord, b: PacketRecord) -> tuple:
    return tuple(f for f in KEY_FIELDS if getattr(a, f) != getattr(b, f))


def make_pair(window: PacketWindow, seed: int = 0) -> FinetuneSample:
    """Build the preference pair for one window; field choice is seeded."""
    rng = np.random.default_rng(seed)
    fld = KEY_FIELDS[int(rng.integers(0, len(KEY_FIELDS)))]
    rejected = perturb_field(window.next_packet, fld, rng)
    return FinetuneSample(window=window, chosen=window.next_packet, rejected=rejected)


def _render_block(packet: PacketRecord) -> str:
    lines = [_BLOCK_TAG]
    for name in KEY_FIELDS:
        lines.append(f"{name}:{getattr(packet, name)}")
    return "\n".join(lines)


def render_document(context: Sequence[PacketRecord], prompt: PacketRecord, predicted: PacketRecord) -> str:
    parts = [_CONTEXT_TAG]
    parts.extend(_render_block(p) for p in context)
    parts.append(_PREVIOUS_TAG)
    parts.append(_render_block(prompt))
    parts.append(_PREDICTED_TAG)
    parts.append(_render_block(predicted))
    return "\n".join(parts)


def render_sample(sample: FinetuneSample) -> str:
    """Chosen document, blank line, rejected document."""
    w = sample.window
    chosen = render_document(w.context, w.prompt, sample.chosen)
    rejected = render_document(w.context, w.prompt, sample.rejected)
    return chosen + "\n\n" + rejected + "\n"


def render_dataset(samples: Sequence[FinetuneSample]) -> str:
    if not samples:
        raise ConfigError("cannot render an empty sample list")
    return "\n".join(render_sample(s) for s in samples)


def _parse_block(lines: list[str], pos: int) -> tuple[dict, int]:
    if pos >= len(lines) or lines[pos] != _BLOCK_TAG:
        raise ParseError(f"expected {_BLOCK_TAG}", line=pos + 1)
    pos += 1
    values: dict = {}
    for name in KEY_FIELDS:
        if pos >= len(lines):
            raise ParseError(f"truncated block, missing {name}", line=pos)
        key, sep, raw = lines[pos].partition(":")
        if not sep or key != name:
            raise ParseError(f"expected field {name!r}, got {lines[pos]!r}", line=pos + 1)
        values[name] = raw if name == "flags" else int(raw)
        pos += 1
    return values, pos


def _block_packet(values: dict) -> PacketRecord:
    return PacketRecord(
        timestamp=0.0, src="", dst="", **values
    )


def parse_document(lines: list[str], pos: int = 0):
    """Parse one rendered document; returns (context, prompt, predicted, pos)."""
    if pos >= len(lines) or lines[pos] != _CONTEXT_TAG:
        raise ParseError(f"expected {_CONTEXT_TAG}", line=pos + 1)
    pos += 1
    context: list[PacketRecord] = []
    while pos < len(lines) and lines[pos] == _BLOCK_TAG:
        values, pos = _parse_block(lines, pos)
        context.append(_block_packet(values))
    if not context:
        raise ParseError("document has an empty context", line=pos + 1)
    if pos >= len(lines) or lines[pos] != _PREVIOUS_TAG:
        raise ParseError(f"expected {_PREVIOUS_TAG}", line=pos + 1)
    values, pos = _parse_block(lines, pos + 1)
    prompt = _block_packet(values)
    if pos >= len(lines) or lines[pos] != _PREDICTED_TAG:
        raise ParseError(f"expected {_PREDICTED_TAG}", line=pos + 1)
    values, pos = _parse_block(lines, pos + 1)
    predicted = _block_packet(values)
    return tuple(context), prompt, predicted, pos


@dataclass(frozen=True)
class ParsedSample:
    context: tuple
    prompt: PacketRecord
    chosen: PacketRecord
    rejected: PacketRecord


def parse_dataset(text: str) -> list[ParsedSample]:
    """Inverse of render_dataset; validates pairing and the one-field rule."""
    docs: list[tuple] = []
    lines = text.splitlines()
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        context, prompt, predicted, pos = parse_document(lines, pos)
        docs.append((context, prompt, predicted))
    if len(docs) % 2 != 0:
        raise ParseError(f"dataset holds {len(docs)} documents, expected an even count")
    samples: list[ParsedSample] = []
    for k in range(0, len(docs), 2):
        c_ctx, c_prompt, chosen = docs[k]
        r_ctx, r_prompt, rejected = docs[k + 1]
        if c_ctx != r_ctx or c_prompt != r_prompt:
            raise ParseError(f"pair {k // 2} has mismatched context or prompt blocks")
        diffs = diff_fields(chosen, rejected)
        if len(diffs) != 1:
            raise ParseError(
                f"pair {k // 2} differs in {len(diffs)} fields, expected exactly 1"
            )
        samples.append(
            ParsedSample(context=c_ctx, prompt=c_prompt, chosen=chosen, rejected=rejected)
        )
    return samples


def build_dataset(
    packets: Sequence[PacketRecord] | str,
    context: int = 3,
    seed: int = 0,
    idle_timeout_s: float = SESSION_IDLE_TIMEOUT_S,
) -> list[FinetuneSample]:
    """Capture to pairs: sessionize, window, corrupt.  Seeded per window."""
    sessions = extract_sessions(packets, idle_timeout_s=idle_timeout_s)
    windows = build_windows(sessions, context)
    return [make_pair(w, seed=seed + i) for i, w in enumerate(windows)]


_HISTOGRAM_BUCKETS = ("0", "1", "2", "3", "4+")


@dataclass(frozen=True)
class FieldScoreReport:
    """Per-field accuracy (percent) and a histogram of per-sample error counts."""

    field_accuracy: dict
    error_histogram: dict
    samples: int

    def to_text(self) -> str:
        lines = []
        for name in KEY_FIELDS:
            lines.append(f"{name}: {self.field_accuracy[name]:.2f}")
        for bucket in _HISTOGRAM_BUCKETS:
            label = f"{bucket} errors" if bucket != "1" else "1 error"
            lines.append(f"{label}: {self.error_histogram[bucket]:.2f}")
        return "\n".join(lines) + "\n"


def score_fields(
    predictions: Sequence[PacketRecord], truths: Sequence[PacketRecord]
) -> FieldScoreReport:
    """Compare predicted packets to ground truth field by field.

    field_accuracy[f] is the percentage of samples whose field f matched;
    error_histogram buckets samples by how many of their six fields were
    wrong.  Percentages are rounded to two decimals.
    """
    if len(predictions) != len(truths):
        raise DimensionError(
            f"prediction count {len(predictions)} does not match truth count {len(truths)}"
        )
    if not predictions:
        raise DimensionError("cannot score an empty prediction list")
    n = len(predictions)
    correct = {name: 0 for name in KEY_FIELDS}
    histogram = {bucket: 0 for bucket in _HISTOGRAM_BUCKETS}
    for pred, truth in zip(predictions, truths):
        wrong = 0
        for name in KEY_FIELDS:
            if getattr(pred, name) == getattr(truth, name):
                correct[name] += 1
            else:
                wrong += 1
        bucket = str(wrong) if wrong < 4 else "4+"
        histogram[bucket] += 1
    return FieldScoreReport(
        field_accuracy={k: round(100.0 * v / n, 2) for k, v in correct.items()},
        error_histogram={k: round(100.0 * v / n, 2) for k, v in histogram.items()},
        samples=n,
    )
