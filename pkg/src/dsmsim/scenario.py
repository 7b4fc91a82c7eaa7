"""Scenario files: JSON documents describing one deterministic run."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .engines import EngineKind
from .errors import ScenarioParseError, ScenarioValidationError
from .types import Operation, parse_op

_KNOWN_FIELDS = {
    "model", "n", "programs", "seed", "max_latency", "checkpoint_at",
    "crash_at", "initiator", "link_latency", "name",
}


@dataclass(frozen=True)
class Scenario:
    model: EngineKind
    n: int
    programs: tuple
    seed: int = 0
    max_latency: int = 4
    checkpoint_at: tuple = ()
    crash_at: Optional[int] = None
    initiator: int = 0
    link_latency: dict = field(default_factory=dict, hash=False)
    name: str = ""

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    @property
    def op_count(self) -> int:
        return sum(len(p) for p in self.programs)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "model": self.model.value,
            "n": self.n,
            "programs": [[str(op) for op in prog] for prog in self.programs],
            "seed": self.seed,
            "max_latency": self.max_latency,
            "checkpoint_at": list(self.checkpoint_at),
            "crash_at": self.crash_at,
            "initiator": self.initiator,
            "link_latency": {f"{i}->{j}": v for (i, j), v in sorted(self.link_latency.items())},
        }


def _require_int(data: dict, key: str, default=None, minimum=None):
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioParseError(f"expected an integer, got {value!r}", field=key)
    if minimum is not None and value < minimum:
        raise ScenarioValidationError(f"must be >= {minimum}, got {value}", field=key)
    return value


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a JSON object")
    unknown = sorted(set(data) - _KNOWN_FIELDS)
    if unknown:
        raise ScenarioParseError(f"unknown field(s) {unknown}", field=unknown[0])
    for key in ("model", "n", "programs"):
        if key not in data:
            raise ScenarioParseError("missing required field", field=key)
    try:
        model = EngineKind.parse(data["model"])
    except ValueError as exc:
        raise ScenarioParseError(str(exc), field="model") from None

    n = _require_int(data, "n")
    if n < 1:
        raise ScenarioValidationError(f"n must be >= 1, got {n}", field="n")
    raw_programs = data["programs"]
    if not isinstance(raw_programs, list) or not all(isinstance(p, list) for p in raw_programs):
        raise ScenarioParseError("programs must be a list of lists of operation strings", field="programs")
    if len(raw_programs) != n:
        raise ScenarioValidationError(f"expected {n} programs, got {len(raw_programs)}", field="programs")
    programs = []
    for c, prog in enumerate(raw_programs):
        ops = []
        for k, text in enumerate(prog):
            if not isinstance(text, str):
                raise ScenarioParseError(f"operation must be a string, got {text!r}", field=f"programs[{c}][{k}]")
            try:
                ops.append(parse_op(text, k))
            except ValueError as exc:
                raise ScenarioParseError(str(exc), field=f"programs[{c}][{k}]") from None
        programs.append(tuple(ops))

    seed = _require_int(data, "seed", 0)
    max_latency = _require_int(data, "max_latency", 4, minimum=1)
    initiator = _require_int(data, "initiator", 0, minimum=0)
    if initiator >= n:
        raise ScenarioValidationError(f"initiator {initiator} must be < n={n}", field="initiator")

    checkpoint_at = data.get("checkpoint_at", [])
    if not isinstance(checkpoint_at, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in checkpoint_at):
        raise ScenarioParseError("checkpoint_at must be a list of integers", field="checkpoint_at")
    if any(x < 1 for x in checkpoint_at):
        raise ScenarioValidationError("triggers must be >= 1", field="checkpoint_at")
    if any(b <= a for a, b in zip(checkpoint_at, checkpoint_at[1:])):
        raise ScenarioValidationError("triggers must be strictly increasing", field="checkpoint_at")
    crash_at = _require_int(data, "crash_at", None, minimum=1)

    link_latency = {}
    raw_links = data.get("link_latency", {})
    if not isinstance(raw_links, dict):
        raise ScenarioParseError("link_latency must map 'i->j' to ticks", field="link_latency")
    for key, ticks in raw_links.items():
        try:
            src, dst = (int(p) for p in key.split("->"))
        except ValueError:
            raise ScenarioParseError(f"bad link {key!r}; expected 'i->j'", field="link_latency") from None
        if not (0 <= src < n and 0 <= dst < n):
            raise ScenarioValidationError(f"link {key!r} names a node outside [0, {n})", field="link_latency")
        if not isinstance(ticks, int) or isinstance(ticks, bool) or ticks < 1:
            raise ScenarioValidationError(f"link {key!r} latency must be a positive integer", field="link_latency")
        link_latency[(src, dst)] = ticks

    return Scenario(
        model=model, n=n, programs=tuple(programs), seed=seed, max_latency=max_latency,
        checkpoint_at=tuple(checkpoint_at), crash_at=crash_at, initiator=initiator,
        link_latency=link_latency, name=str(data.get("name", "")),
    )


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, line=exc.lineno) from None
    return parse_scenario(data)


def random_programs(rng: random.Random, n: int, total_ops: int, variables=("X", "Y")) -> tuple:
    """Random read/write programs with globally unique write values."""
    per_client = [total_ops // n + (1 if c < total_ops % n else 0) for c in range(n)]
    programs = []
    for c, count in enumerate(per_client):
        ops = []
        for k in range(count):
            var = rng.choice(variables)
            if rng.random() < 0.5:
                ops.append(Operation("W", var, 100 * (c + 1) + k, k))
            else:
                ops.append(Operation("R", var, None, k))
        programs.append(tuple(ops))
    return tuple(programs)


def generate_scenario(model: EngineKind, n: int, seed: int, total_ops: int = 12, max_latency: int = 4) -> Scenario:
    rng = random.Random(f"programs/{n}/{seed}")
    return Scenario(
        model=model, n=n, programs=random_programs(rng, n, total_ops), seed=seed,
        max_latency=max_latency, initiator=rng.randrange(n), name=f"random-n{n}-s{seed}",
    )
