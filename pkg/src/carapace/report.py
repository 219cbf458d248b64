"""Run configuration and the structured-text stats report."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from carapace.adaptive.config import (
    Backend,
    Granularity,
    JitConfig,
    Presort,
    Scope,
    SortPolicy,
    SyncMode,
)
from carapace.interpreter import ExecStats

MODES = ("interp", "jit")


@dataclass(frozen=True)
class RunConfig:
    program: str
    facts: str | None = None
    out: str = "."
    mode: str = "jit"
    jit: JitConfig = field(default_factory=JitConfig)
    seed: int = 0
    stats: str | None = None

    def jit_config(self) -> JitConfig | None:
        return self.jit if self.mode == "jit" else None


def format_threshold(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def config_items(cfg: RunConfig) -> list[tuple[str, str]]:
    j = cfg.jit
    return [
        ("program", cfg.program),
        ("facts", cfg.facts if cfg.facts is not None else "-"),
        ("out", cfg.out),
        ("mode", cfg.mode),
        ("granularity", j.granularity.value),
        ("backend", j.backend.value),
        ("scope", j.scope.value),
        ("sync", j.sync.value),
        ("freshness", format_threshold(j.freshness)),
        ("sort", j.sort_policy.value),
        ("presort", j.presort.value),
        ("seed", str(cfg.seed)),
        ("stats", cfg.stats if cfg.stats is not None else "-"),
    ]


def config_from_items(items: dict[str, str]) -> RunConfig:
    jit = JitConfig(
        granularity=Granularity(items["granularity"]),
        backend=Backend(items["backend"]),
        sync=SyncMode(items["sync"]),
        scope=Scope(items["scope"]),
        freshness=float(items["freshness"]),
        sort_policy=SortPolicy(items["sort"]),
        presort=Presort(items["presort"]),
    )
    none = lambda v: None if v == "-" else v  # noqa: E731
    return RunConfig(items["program"], none(items["facts"]), items["out"], items["mode"],
                     jit, int(items["seed"]), none(items["stats"]))


def render_report(cfg: RunConfig, stats: ExecStats) -> str:
    out = ["[config]"]
    out += [f"{k} = {v}" for k, v in config_items(cfg)]

    out += ["", "[timing]", f"total_s = {stats.wall:.6f}"]
    out += [f"stratum.{s}_s = {t:.6f}" for s, t in sorted(stats.stratum_time.items())]

    out += ["", "[iterations]", f"total = {stats.total_iterations}"]
    out += [f"stratum.{s} = {n}" for s, n in sorted(stats.iterations.items())]

    out += ["", "[cardinalities]", "stratum\titeration\trelation\tderived\tdelta"]
    out += ["\t".join(map(str, row)) for row in stats.cardinality_log]

    out += ["", "[replans]", "node\titeration\tgeneration\tadopted"]
    out += [f"{e.node}\t{e.iteration}\t{e.generation}\t{'yes' if e.adopted else 'no'}"
            for e in stats.replans]

    out += ["", "[probes]", "node\tprobes"]
    out += [f"{node}\t{n}" for node, n in sorted(stats.probes.items())]
    out.append(f"total\t{stats.total_probes}")
    return "\n".join(out) + "\n"


def parse_report(text: str) -> dict[str, object]:
    """Sections as dicts (``key = value``) or lists of row dicts (tables)."""
    sections: dict[str, object] = {}
    name = None
    header: list[str] | None = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("[") and line.endswith("]"):
            name, header = line[1:-1], None
            continue
        if name is None:
            continue
        if "\t" in line:
            cols = line.split("\t")
            if header is None:
                header = cols
                sections[name] = []
            else:
                sections[name].append(dict(zip(header, cols)))
        else:
            key, _, value = line.partition(" = ")
            sections.setdefault(name, {})[key] = value
    return sections


def config_from_report(text: str) -> RunConfig:
    return config_from_items(parse_report(text)["config"])
