"""
Curated regulatory edge database.

The file is tab-separated with four columns per line: source gene, target
gene, mode (Activation, Repression or Unknown) and a ``;``-separated list of
reference ids. Repeated (source, target) pairs collapse to their majority
mode; a tie becomes Unknown.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from ..errors import RegulatoryDbParseError
from ..logger import get_logger

log = get_logger(__name__)

ACTIVATION = "Activation"
REPRESSION = "Repression"
UNKNOWN = "Unknown"
MODES = (ACTIVATION, REPRESSION, UNKNOWN)


@dataclass(frozen=True)
class RegulatoryEdge:
    source: str
    target: str
    mode: str
    references: Tuple[str, ...] = ()

    @property
    def classifiable(self) -> bool:
        return self.mode != UNKNOWN


@dataclass
class RegulatoryDb:
    edges: List[RegulatoryEdge] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.edges)

    def classifiable(self) -> List[RegulatoryEdge]:
        return [edge for edge in self.edges if edge.classifiable]

    def by_source(self) -> Dict[str, List[RegulatoryEdge]]:
        grouped: Dict[str, List[RegulatoryEdge]] = {}
        for edge in self.edges:
            grouped.setdefault(edge.source, []).append(edge)
        return grouped


def collapse_edges(raw: Iterable[RegulatoryEdge]) -> List[RegulatoryEdge]:
    """Merge repeated (source, target) pairs by majority mode, ties to Unknown."""
    modes: Dict[Tuple[str, str], Counter[str]] = {}
    refs: Dict[Tuple[str, str], List[str]] = {}
    for edge in raw:
        key = (edge.source, edge.target)
        modes.setdefault(key, Counter())[edge.mode] += 1
        bucket = refs.setdefault(key, [])
        bucket.extend(ref for ref in edge.references if ref not in bucket)
    collapsed = []
    for key, counter in modes.items():
        ranked = counter.most_common()
        tie = len(ranked) > 1 and ranked[0][1] == ranked[1][1]
        mode = UNKNOWN if tie else ranked[0][0]
        collapsed.append(RegulatoryEdge(source=key[0], target=key[1], mode=mode, references=tuple(refs[key])))
    return collapsed


def _normalize_mode(value: str, line: int) -> str:
    for mode in MODES:
        if value.strip().lower() == mode.lower():
            return mode
    raise RegulatoryDbParseError(line, f"unknown mode '{value}'; expected one of {', '.join(MODES)}")


def load_regulatory_db(path: Path) -> RegulatoryDb:
    """Parse a four-column TSV; blank lines and ``#`` comments are skipped."""
    raw: List[RegulatoryEdge] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.rstrip("\r\n")
            if not text.strip() or text.startswith("#"):
                continue
            fields = text.split("\t")
            if len(fields) != 4:
                raise RegulatoryDbParseError(line_no, f"expected 4 tab-separated columns, found {len(fields)}")
            source, target, mode, references = (value.strip() for value in fields)
            if not source or not target:
                raise RegulatoryDbParseError(line_no, "gene names must be non-empty")
            raw.append(
                RegulatoryEdge(
                    source=source,
                    target=target,
                    mode=_normalize_mode(mode, line_no),
                    references=tuple(ref for ref in references.split(";") if ref),
                )
            )
    db = RegulatoryDb(edges=collapse_edges(raw))
    log.info("regulatory_db_loaded", path=str(path), lines=len(raw), edges=len(db), classifiable=len(db.classifiable()))
    return db
