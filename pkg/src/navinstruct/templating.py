"""Template library mapping (turn, height, relation) keys to instruction text."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .chunking import HorizontalClass, SubTrajectory, VerticalClass, classify_vertical
from .landmarks import Landmark, Relation, classify_landmark_relation

LANDMARK_SLOT = "{landmark}"

HORIZONTAL_PHRASES: dict[HorizontalClass, str] = {
    HorizontalClass.STRAIGHT: "go straight",
    HorizontalClass.SLIGHT_RIGHT: "turn slightly right",
    HorizontalClass.MODERATE_RIGHT: "turn moderately right",
    HorizontalClass.HARD_RIGHT: "turn hardly right",
    HorizontalClass.SLIGHT_RIGHT_REAR: "turn slightly to the right rear",
    HorizontalClass.SHARP_RIGHT_REAR: "turn sharply to the right rear",
    HorizontalClass.BACKWARD: "turn backwards",
    HorizontalClass.SLIGHT_LEFT: "turn slightly left",
    HorizontalClass.MODERATE_LEFT: "turn moderately left",
    HorizontalClass.HARD_LEFT: "turn hardly left",
    HorizontalClass.SLIGHT_LEFT_REAR: "turn slightly to the left rear",
    HorizontalClass.SHARP_LEFT_REAR: "turn sharply to the left rear",
}

# The level row would repeat the relation word ("towards towards"), so its
# vertical word is empty.
VERTICAL_WORDS: dict[VerticalClass, str] = {
    VerticalClass.LEVEL: "",
    VerticalClass.UPWARD: "upwards",
    VerticalClass.DOWNWARD: "downwards",
}

RELATION_PHRASES: dict[Relation, str] = {
    Relation.TOWARDS: "towards",
    Relation.TOWARDS_LEFT_OF: "towards the left of",
    Relation.TOWARDS_RIGHT_OF: "towards the right of",
}


@dataclass(frozen=True)
class TemplateKey:
    horizontal: HorizontalClass
    vertical: VerticalClass
    relation: Relation

    def as_string(self) -> str:
        return f"{self.horizontal.value}/{self.vertical.value}/{self.relation.value}"

    @classmethod
    def from_string(cls, key: str) -> TemplateKey:
        parts = key.split("/")
        if len(parts) != 3:
            raise ValueError(f"malformed template key {key!r}")
        return cls(HorizontalClass(parts[0]), VerticalClass(parts[1]),
                   Relation(parts[2]))


@dataclass
class TemplateLibrary:
    entries: dict[TemplateKey, str]

    def __post_init__(self) -> None:
        if len(self.entries) != 108:
            raise ValueError(f"template library has {len(self.entries)} entries, expected 108")
        for key, text in self.entries.items():
            if not text:
                raise ValueError(f"empty template for key {key.as_string()}")
            if text.count(LANDMARK_SLOT) != 1:
                raise ValueError(f"template for key {key.as_string()} "
                                 f"must contain exactly one {LANDMARK_SLOT} slot")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, key: TemplateKey) -> str:
        return self.entries[key]

    def dump(self, path: str) -> None:
        flat = {key.as_string(): text for key, text in sorted(
            self.entries.items(), key=lambda kv: kv[0].as_string())}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(flat, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> TemplateLibrary:
        with open(path, encoding="utf-8") as fh:
            flat = json.load(fh)
        return cls({TemplateKey.from_string(k): v for k, v in flat.items()})


def _compose(horizontal: HorizontalClass, vertical: VerticalClass,
             relation: Relation | None, landmark: str | None) -> str:
    parts = [HORIZONTAL_PHRASES[horizontal], "and walk"]
    if VERTICAL_WORDS[vertical]:
        parts.append(VERTICAL_WORDS[vertical])
    if relation is not None:
        parts.append(RELATION_PHRASES[relation])
        parts.append(f"the {landmark}")
    return " ".join(parts)


def build_template_library() -> TemplateLibrary:
    """All 108 combinations of 12 turn, 3 height, and 3 relation classes."""
    entries = {}
    for horizontal in HorizontalClass:
        for vertical in VerticalClass:
            for relation in Relation:
                key = TemplateKey(horizontal, vertical, relation)
                entries[key] = _compose(horizontal, vertical, relation,
                                        LANDMARK_SLOT)
    return TemplateLibrary(entries)


@dataclass(frozen=True)
class CraftedInstruction:
    text: str
    key: TemplateKey | None
    landmark_label: str | None


def craft_sub_instruction(sub: SubTrajectory, landmark: Landmark | None,
                          library: TemplateLibrary) -> CraftedInstruction:
    """Fill the matching template for a sub-trajectory.

    Without a landmark there is no relation to express, so the text falls
    back to the turn and height fragments alone.
    """
    vertical = classify_vertical(sub.vertical_delta)
    if landmark is None:
        parts = [HORIZONTAL_PHRASES[sub.horizontal]]
        if VERTICAL_WORDS[vertical]:
            parts.append(f"and walk {VERTICAL_WORDS[vertical]}")
        return CraftedInstruction(" ".join(parts), key=None, landmark_label=None)
    relation = classify_landmark_relation(sub.exit_heading, landmark.heading_bounds)
    key = TemplateKey(sub.horizontal, vertical, relation)
    text = library.get(key).replace(LANDMARK_SLOT, landmark.label)
    return CraftedInstruction(text, key=key, landmark_label=landmark.label)
