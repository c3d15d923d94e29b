"""Calendar month labels ("YYYY-MM") and the summer/winter season split."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

_LABEL = re.compile(r"^(\d{4})-(\d{2})$")

SUMMER_MONTHS = frozenset({9, 10, 11, 12, 1, 2})


class Season(enum.Enum):
    SUMMER = 0
    WINTER = 1

    @classmethod
    def of(cls, month: "Month | int") -> "Season":
        m = month.month if isinstance(month, Month) else int(month)
        if not 1 <= m <= 12:
            raise ValueError(f"calendar month out of range: {m}")
        return cls.SUMMER if m in SUMMER_MONTHS else cls.WINTER

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, order=True)
class Month:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"calendar month out of range: {self.month}")

    @classmethod
    def parse(cls, label: "str | Month") -> "Month":
        if isinstance(label, Month):
            return label
        m = _LABEL.match(str(label).strip())
        if m is None:
            raise ValueError(f"bad month label {label!r}, expected YYYY-MM")
        return cls(int(m.group(1)), int(m.group(2)))

    def shift(self, k: int) -> "Month":
        idx = self.year * 12 + (self.month - 1) + k
        return Month(idx // 12, idx % 12 + 1)

    @property
    def season(self) -> Season:
        return Season.of(self.month)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(start: "Month | str", count: int) -> list[Month]:
    """Return ``count`` consecutive months beginning at ``start``."""
    start = Month.parse(start)
    return [start.shift(k) for k in range(count)]


def check_consecutive(labels) -> list[Month]:
    months = [Month.parse(x) for x in labels]
    for a, b in zip(months, months[1:]):
        if a.shift(1) != b:
            raise ValueError(f"month labels not consecutive: {a} -> {b}")
    return months
