"""Integer-coded enumerations shared by the graph, walker, pairs and kernels."""

from enum import IntEnum


class EntityKind(IntEnum):
    USER = 0
    ITEM = 1


class LinkKind(IntEnum):
    SCORE = 0
    SOCIAL = 1


class WalkKind(IntEnum):
    POSITIVE = 1
    NEGATIVE = 2
    UNWEIGHTED = 3

    @classmethod
    def parse(cls, value) -> "WalkKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)


class PairSet(IntEnum):
    R = 0
    PLUS = 1
    MINUS = 2
