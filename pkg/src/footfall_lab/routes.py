"""Route complexity score from step-by-step walking directions.

Each directional word found in a step's instruction contributes its weight
divided by the step distance in metres; the score is the sum of all
contributions. Distances are metres, so the score has units of 1/m.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Sequence, TextIO

from .errors import EmptyInput, MalformedRecord, ZeroDistanceStep

# "toward(s)" is a single entry with two spellings
WORD_WEIGHTS = MappingProxyType(
    {
        "head": 1,
        "toward": 1,
        "towards": 1,
        "continue": 1,
        "follow": 1,
        "straight": 1,
        "walk": 1,
        "slight": 2,
        "sharp": 2,
        "turn": 3,
        "cross": 4,
        "upper": 5,
        "take": 5,
        "roundabout": 6,
    }
)

_WORD = re.compile(r"[^\W\d_]+")


@dataclass(frozen=True)
class RouteStep:
    instruction: str
    distance: float
    duration: float | None = None


@dataclass(frozen=True)
class Route:
    duration_s: float
    steps: tuple


@dataclass(frozen=True)
class RouteScore:
    value: float
    contributions: list = field(default_factory=list)


def select_fastest_route(routes: Sequence[Route]) -> Route:
    """Shortest total duration; ties go to fewer steps, then to the earlier route."""
    if not routes:
        raise EmptyInput("no routes to choose from")
    best = min(range(len(routes)), key=lambda i: (routes[i].duration_s, len(routes[i].steps), i))
    return routes[best]


def extract_direction_words(step: RouteStep, table=WORD_WEIGHTS, multi_match=True):
    """Whole-word, case-insensitive matches of table words in a step instruction.

    With ``multi_match`` every occurrence counts; otherwise only the first
    matching word of the step is returned.
    """
    found = []
    for token in _WORD.findall(step.instruction.lower()):
        weight = table.get(token)
        if weight is not None:
            found.append((token, weight))
            if not multi_match:
                break
    return found


def route_score(steps: Sequence[RouteStep], table=WORD_WEIGHTS, multi_match=True) -> RouteScore:
    contributions = []
    for step in steps:
        if not step.distance > 0:
            raise ZeroDistanceStep(f"step {step.instruction!r} has distance {step.distance}")
        for word, weight in extract_direction_words(step, table, multi_match):
            contributions.append((word, weight, step.distance, weight / step.distance))
    return RouteScore(math.fsum(c[3] for c in contributions), contributions)


def load_route_file(stream: TextIO) -> list[tuple[str, list[Route]]]:
    """Read cached routes: one ``{"pair_id", "routes"}`` object or a list of them."""
    try:
        payload = json.load(stream)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(exc.lineno, f"invalid JSON: {exc.msg}") from None
    entries = payload if isinstance(payload, list) else [payload]
    out = []
    for n, entry in enumerate(entries):
        try:
            routes = [
                Route(
                    float(r["duration_s"]),
                    tuple(RouteStep(str(s["text"]), float(s["distance_m"]), s.get("duration_s")) for s in r["steps"]),
                )
                for r in entry["routes"]
            ]
            out.append((str(entry["pair_id"]), routes))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(n + 1, f"route entry {n}: {exc!r}") from None
    return out


def score_route_file(entries, table=WORD_WEIGHTS, multi_match=True):
    """Score the fastest route of every pair; yields ``(pair_id, route_index, route, score)``."""
    for pair_id, routes in entries:
        best = select_fastest_route(routes)
        index = next(i for i, r in enumerate(routes) if r is best)
        yield pair_id, index, best, route_score(best.steps, table, multi_match)


def write_route_scores(rows, stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("pair_id", "route_index", "duration_s", "n_steps", "n_words", "score"))
    for pair_id, index, route, score in rows:
        writer.writerow(
            (pair_id, index, repr(route.duration_s), len(route.steps), len(score.contributions), repr(score.value))
        )
