"""Threshold classification of (spike count, memory level, correlation) and packet output."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import PacketIOError


class AwarenessClass(str, Enum):
    REGULAR = "Regular"
    ENHANCED = "EnhancedAwareness"
    ELEVATED = "Elevated"
    UNCLASSIFIED = "Unclassified"


HOLD = "hold"


@dataclass(frozen=True)
class Band:
    q_low: float
    q_high: float
    level_min: float
    corr_min: float
    cls: AwarenessClass
    action: str

    def __post_init__(self):
        if not self.q_low < self.q_high:
            raise ValueError("band q range must have q_low < q_high")
        if not self.level_min > 0:
            raise ValueError("band level_min must be > 0")
        if not 0.0 < self.corr_min < 1.0:
            raise ValueError("band corr_min must lie in (0, 1)")
        if self.cls is AwarenessClass.UNCLASSIFIED:
            raise ValueError("a band cannot map to Unclassified")

    def contains(self, q: float) -> bool:
        return self.q_low < q < self.q_high

    def accepts(self, q: float, level: float, correlation: float) -> bool:
        return self.contains(q) and level > self.level_min and correlation > self.corr_min


DEFAULT_BANDS = (
    Band(3, 8, 1.23, 0.85, AwarenessClass.REGULAR, "continue generation"),
    Band(14, 20, 0.21, 0.65, AwarenessClass.ENHANCED, "probe & read-out"),
    Band(22, 23, 0.052, 0.55, AwarenessClass.ELEVATED, "full route & reset"),
)


@dataclass(frozen=True)
class ClassificationThresholds:
    bands: tuple[Band, ...] = DEFAULT_BANDS

    def __post_init__(self):
        bands = tuple(sorted(self.bands, key=lambda b: b.q_low))
        for a, b in zip(bands, bands[1:]):
            if b.q_low < a.q_high:
                raise ValueError("band q ranges must be pairwise disjoint")
        object.__setattr__(self, "bands", bands)


def matching_bands(q: float, level: float, correlation: float,
                   th: ClassificationThresholds) -> list[Band]:
    return [b for b in th.bands if b.accepts(q, level, correlation)]


def classify(q: float, level: float, correlation: float,
             th: ClassificationThresholds = ClassificationThresholds()) -> tuple[AwarenessClass, str]:
    if not all(math.isfinite(x) for x in (q, level, correlation)):
        raise ValueError("classification inputs must be finite")
    for b in th.bands:
        if b.contains(q):
            if level > b.level_min and correlation > b.corr_min:
                return b.cls, b.action
            break
    return AwarenessClass.UNCLASSIFIED, HOLD


@dataclass(frozen=True)
class InformationPacket:
    id: int
    t_emit: float
    cls: AwarenessClass
    level: float
    correlation: float
    q: float
    bloch: tuple[float, float, float]
    theta: tuple[float, ...]
    directive: str

    def to_dict(self) -> dict:
        # field order is part of the output format
        return {
            "id": self.id,
            "t_emit": self.t_emit,
            "class": self.cls.value,
            "level": self.level,
            "correlation": self.correlation,
            "q": _count(self.q),
            "bloch": list(self.bloch),
            "theta": list(self.theta),
            "directive": self.directive,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "InformationPacket":
        return cls(id=int(d["id"]), t_emit=float(d["t_emit"]), cls=AwarenessClass(d["class"]),
                   level=float(d["level"]), correlation=float(d["correlation"]), q=_count(d["q"]),
                   bloch=tuple(float(x) for x in d["bloch"]),
                   theta=tuple(float(x) for x in d["theta"]), directive=str(d["directive"]))

    @classmethod
    def from_json(cls, s: str) -> "InformationPacket":
        return cls.from_dict(json.loads(s))


def _count(q: float) -> int | float:
    # integral counts stay JSON integers; averaged counts may be half-integers
    q = float(q)
    return int(q) if q.is_integer() else q


@dataclass
class RunContext:
    """What the pipeline knows when it is time to decide on a packet."""

    t: float
    q: float
    level: float
    correlation: float
    bloch: Sequence[float]
    theta: Sequence[float]


@dataclass
class PacketEmitter:
    """Single writer for a run: assigns ids and keeps the emitted packets."""

    thresholds: ClassificationThresholds = field(default_factory=ClassificationThresholds)
    next_id: int = 0
    packets: list[InformationPacket] = field(default_factory=list)

    def generate_packet(self, ctx: RunContext) -> InformationPacket | None:
        cls, directive = classify(ctx.q, ctx.level, ctx.correlation, self.thresholds)
        if cls is AwarenessClass.UNCLASSIFIED:
            return None
        corr = min(1.0, max(0.0, float(ctx.correlation)))
        pkt = InformationPacket(id=self.next_id, t_emit=float(ctx.t), cls=cls,
                                level=float(ctx.level), correlation=corr, q=_count(ctx.q),
                                bloch=tuple(float(x) for x in ctx.bloch),
                                theta=tuple(float(x) for x in ctx.theta), directive=directive)
        self.next_id += 1
        self.packets.append(pkt)
        return pkt


def write_packets(packets: Iterable[InformationPacket], path: str | Path) -> Path:
    path = Path(path)
    try:
        lines = [p.to_json() for p in packets]
        path.write_text("".join(line + "\n" for line in lines))
    except (OSError, ValueError, TypeError) as exc:
        raise PacketIOError(f"cannot write packets to {path}: {exc}") from exc
    return path


def read_packets(path: str | Path) -> list[InformationPacket]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PacketIOError(f"cannot read packets from {path}: {exc}") from exc
    return [InformationPacket.from_json(line) for line in text.splitlines() if line.strip()]
