"""Time-tag streams: the interchange format between simulator and analyzer.

On disk a stream is a CSV file with header ``channel,epoch_ps`` where the
channel is ``F`` (laser fire) or ``D`` (detection) and epochs are integer
picoseconds, non-decreasing.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADER = "channel,epoch_ps"


class Channel(enum.IntEnum):
    LASER_FIRE = 0
    DETECTION = 1

    @property
    def code(self) -> str:
        return "F" if self is Channel.LASER_FIRE else "D"


_CODES = {"F": Channel.LASER_FIRE, "D": Channel.DETECTION}


class TimeTagError(ValueError):
    pass


class TimeTagParseError(TimeTagError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TimeTagRecord:
    channel: Channel
    epoch: int  # ps


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Epoch-sorted event records held as parallel arrays."""

    channels: np.ndarray
    epochs: np.ndarray

    def __post_init__(self) -> None:
        ch = np.array(self.channels, dtype=np.uint8)
        ep = np.array(self.epochs, dtype=np.int64)
        if ch.shape != ep.shape or ep.ndim != 1:
            raise TimeTagError("channels and epochs must be 1-D arrays of equal length")
        if len(ep) and (ep[0] < 0):
            raise TimeTagError("epochs must be non-negative")
        if np.any(np.diff(ep) < 0):
            raise TimeTagError("stream is not sorted by epoch")
        if np.any(ch > 1):
            raise TimeTagError("unknown channel code")
        ch.setflags(write=False)
        ep.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "epochs", ep)

    @classmethod
    def empty(cls) -> "TimeTagStream":
        return cls(np.empty(0, np.uint8), np.empty(0, np.int64))

    @classmethod
    def of(cls, channel: Channel, epochs) -> "TimeTagStream":
        """Single-channel stream; epochs are sorted here."""
        ep = np.sort(np.asarray(epochs, dtype=np.int64))
        return cls(np.full(len(ep), int(channel), np.uint8), ep)

    @classmethod
    def from_records(cls, records) -> "TimeTagStream":
        records = list(records)
        return cls(np.array([int(r.channel) for r in records], np.uint8),
                   np.array([r.epoch for r in records], np.int64))

    def __len__(self) -> int:
        return len(self.epochs)

    def __iter__(self):
        for c, e in zip(self.channels.tolist(), self.epochs.tolist()):
            yield TimeTagRecord(Channel(c), e)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return np.array_equal(self.channels, other.channels) and np.array_equal(self.epochs, other.epochs)

    def select(self, channel: Channel) -> np.ndarray:
        return self.epochs[self.channels == int(channel)]

    @property
    def fire_epochs(self) -> np.ndarray:
        return self.select(Channel.LASER_FIRE)

    @property
    def detection_epochs(self) -> np.ndarray:
        return self.select(Channel.DETECTION)

    def window(self, start: int, stop: int) -> "TimeTagStream":
        """Records with start <= epoch < stop."""
        lo, hi = np.searchsorted(self.epochs, [start, stop], side="left")
        return TimeTagStream(self.channels[lo:hi], self.epochs[lo:hi])


def combine(*streams: TimeTagStream) -> TimeTagStream:
    """Merge sorted streams; equal epochs order fire tags before detections."""
    if not streams:
        return TimeTagStream.empty()
    ch = np.concatenate([s.channels for s in streams])
    ep = np.concatenate([s.epochs for s in streams])
    order = np.lexsort((ch, ep))
    return TimeTagStream(ch[order], ep[order])


def write_timetags(stream: TimeTagStream, destination) -> None:
    codes = np.array(["F", "D"])[stream.channels]
    body = "\n".join(f"{c},{e}" for c, e in zip(codes.tolist(), stream.epochs.tolist()))
    with open(destination, "w", newline="") as fh:
        fh.write(HEADER + "\n")
        if body:
            fh.write(body + "\n")


def read_timetags(source) -> TimeTagStream:
    text = Path(source).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != HEADER:
        raise TimeTagParseError(f"expected header {HEADER!r}", 1)
    channels = np.empty(len(lines) - 1, np.uint8)
    epochs = np.empty(len(lines) - 1, np.int64)
    prev = None
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        code, sep, value = line.partition(",")
        ch = _CODES.get(code.strip())
        if not sep or ch is None:
            raise TimeTagParseError(f"malformed record {line!r}", lineno)
        try:
            epoch = int(value)
        except ValueError:
            raise TimeTagParseError(f"malformed epoch {value!r}", lineno) from None
        if epoch < 0:
            raise TimeTagParseError(f"negative epoch {epoch}", lineno)
        if prev is not None and epoch < prev:
            raise TimeTagParseError(f"epoch {epoch} decreases (previous {prev})", lineno)
        channels[i] = ch
        epochs[i] = epoch
        prev = epoch
    return TimeTagStream(channels, epochs)
