"""MOST general-move data card: parameter groups, indices and descriptions."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .trace_io import FormatError

GROUPS = ("A", "B", "G", "P")
GROUP_NAMES = {
    "A": "action distance",
    "B": "body motion",
    "G": "gain control",
    "P": "placement",
}
INDEX_VALUES = (0, 1, 3, 6, 10, 16)


def normalize_label(label: str) -> str:
    return " ".join(label.split())


@dataclass(frozen=True)
class CardEntry:
    group: str
    index: int
    label: str

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown MOST parameter {self.group!r}")
        if self.index not in INDEX_VALUES:
            raise ValueError(f"index {self.index} not one of {INDEX_VALUES}")
        object.__setattr__(self, "label", normalize_label(self.label))
        if not self.label:
            raise ValueError("empty label")


@dataclass(frozen=True)
class DataCard:
    entries: tuple[CardEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            key = (e.group, e.label)
            if key in seen:
                raise ValueError(f"duplicate card row ({e.group}, {e.label!r})")
            seen.add(key)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def group(self, group: str) -> list[CardEntry]:
        return [e for e in self.entries if e.group == group]

    def entry(self, group: str, label: str) -> CardEntry | None:
        label = normalize_label(label)
        for e in self.entries:
            if e.group == group and e.label == label:
                return e
        return None

    def first_at(self, group: str, index: int) -> CardEntry | None:
        """First row of ``group`` printed at ``index``, in card order."""
        for e in self.entries:
            if e.group == group and e.index == index:
                return e
        return None


def lookup(card: DataCard, group: str, label: str) -> int | None:
    """Index of the exact ``(group, label)`` row, or ``None`` when absent.

    Matching is case sensitive; only runs of whitespace are normalized.
    """
    e = card.entry(group, label)
    return None if e is None else e.index


def load_datacard(data: bytes | str) -> DataCard:
    """Parse a card file: one ``group index label`` row per line, UTF-8."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("card file is not valid UTF-8",
                              data[: exc.start].count(b"\n") + 1) from None
    entries = []
    seen: dict[tuple[str, str], int] = {}
    for number, raw in enumerate(data.split("\n"), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split(None, 2)
        if len(parts) < 3:
            raise FormatError("expected: group index label", number)
        group, index_tok, label = parts
        if group not in GROUPS:
            raise FormatError(f"unknown MOST parameter {group!r}", number, 1)
        try:
            index = int(index_tok)
        except ValueError:
            raise FormatError(f"index is not an integer: {index_tok!r}", number,
                              raw.index(index_tok) + 1) from None
        if index not in INDEX_VALUES:
            raise FormatError(f"index {index} not one of {INDEX_VALUES}", number,
                              raw.index(index_tok) + 1)
        label = normalize_label(label)
        if (group, label) in seen:
            raise FormatError(f"duplicate row ({group}, {label!r}), first on line "
                              f"{seen[group, label]}", number)
        seen[group, label] = number
        entries.append(CardEntry(group, index, label))
    return DataCard(tuple(entries))


def dump_datacard(card: DataCard) -> bytes:
    lines = ["# group index label"]
    lines += [f"{e.group} {e.index} {e.label}" for e in card.entries]
    return ("\n".join(lines) + "\n").encode("utf-8")


@lru_cache(maxsize=None)
def default_card() -> DataCard:
    text = resources.files(__package__).joinpath("data/default_card.txt").read_bytes()
    return load_datacard(text)
