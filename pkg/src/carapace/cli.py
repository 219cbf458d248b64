"""Command-line entry point: ``carapace [run|bench|gen-corpus] ...``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from carapace import bench as benchmod
from carapace.adaptive.config import (
    ConfigError,
    Granularity,
    JitConfig,
    Presort,
    Scope,
    SortPolicy,
    SyncMode,
    parse_backend,
    parse_threshold,
)
from carapace.corpus import Limits, gen_corpus
from carapace.engine import solve
from carapace.frontend import DatalogError, ProgramError, parse
from carapace.report import MODES, RunConfig, render_report
from carapace.storage import read_facts, write_relation

log = logging.getLogger("carapace")

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_IO = 0, 1, 2
JIT_FLAGS = ("granularity", "backend", "scope", "sync", "freshness", "sort", "presort")
COMMANDS = ("run", "bench", "gen-corpus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit with 1, not argparse's 2
        raise UsageError(f"{self.prog}: error: {message}")


def _choices(enum_cls) -> list[str]:
    return [e.value for e in enum_cls]


def _add_jit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--granularity", choices=_choices(Granularity))
    p.add_argument("--backend", choices=["irgen", "pipeline", "lambda-alias", "quotes", "bytecode"])
    p.add_argument("--scope", choices=_choices(Scope))
    p.add_argument("--sync", choices=_choices(SyncMode))
    p.add_argument("--freshness", metavar="FLOAT|inf")
    p.add_argument("--sort", choices=_choices(SortPolicy))
    p.add_argument("--presort", choices=_choices(Presort))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carapace", description="Adaptive bottom-up Datalog engine.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="evaluate a program over fact files")
    run.add_argument("--program", required=True, metavar="FILE")
    run.add_argument("--facts", metavar="DIR")
    run.add_argument("--out", default=".", metavar="DIR")
    run.add_argument("--mode", choices=MODES, default="jit")
    _add_jit_flags(run)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--stats", metavar="FILE")

    b = sub.add_parser("bench", help="time the built-in benchmark suite")
    b.add_argument("--suite", default="all",
                   help="comma-separated suite names or 'all': " + ", ".join(benchmod.SUITES))
    b.add_argument("--size", type=int)
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    _add_jit_flags(b)

    g = sub.add_parser("gen-corpus", help="write seeded random programs with fact files")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=200)
    g.add_argument("--out", required=True, metavar="DIR")
    return parser


def jit_from_args(args: argparse.Namespace) -> JitConfig:
    fields = {}
    if args.granularity:
        fields["granularity"] = Granularity(args.granularity)
    if args.backend:
        fields["backend"] = parse_backend(args.backend)
    if args.scope:
        fields["scope"] = Scope(args.scope)
    if args.sync:
        fields["sync"] = SyncMode(args.sync)
    if args.freshness is not None:
        try:
            fields["freshness"] = parse_threshold(args.freshness)
        except ValueError as exc:
            raise UsageError(f"carapace: error: invalid --freshness: {exc}") from None
    if args.sort:
        fields["sort_policy"] = SortPolicy(args.sort)
    if args.presort:
        fields["presort"] = Presort(args.presort)
    return JitConfig(**fields).check()


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    given = [f for f in JIT_FLAGS if getattr(args, f) is not None]
    if args.mode == "interp" and given:
        raise UsageError(f"carapace: error: --{given[0]} is only valid with --mode jit")
    return RunConfig(args.program, args.facts, args.out, args.mode, jit_from_args(args),
                     args.seed, args.stats)


def run(cfg: RunConfig) -> int:
    try:
        source = Path(cfg.program).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"carapace: cannot read program: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        program = parse(source)
    except ProgramError as exc:
        for d in exc.diagnostics:
            print(f"{cfg.program}: {d}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except DatalogError as exc:
        print(f"{cfg.program}: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS

    facts = {}
    if cfg.facts is not None and not Path(cfg.facts).is_dir():
        print(f"carapace: facts directory not found: {cfg.facts}", file=sys.stderr)
        return EXIT_IO
    for rel in sorted(program.edb):
        if cfg.facts is None:
            if rel not in program.edb_facts:
                log.warning("no facts directory given; %s is empty", rel)
            continue
        path = Path(cfg.facts) / f"{rel}.facts"
        if not path.exists():
            if rel not in program.edb_facts:
                log.warning("no facts file for %s; treating it as empty", rel)
            continue
        try:
            facts[rel] = read_facts(path, program.arities[rel], program.symbols)
        except (OSError, ValueError) as exc:
            print(f"carapace: cannot read facts: {exc}", file=sys.stderr)
            return EXIT_IO

    result = solve(program, cfg.jit_config(), facts=facts)
    try:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for rel in program.output_relations():
            write_relation(out / f"{rel}.csv", result.storage.derived(rel), program.symbols)
        if cfg.stats is not None:
            Path(cfg.stats).write_text(render_report(cfg, result.stats), encoding="utf-8")
    except OSError as exc:
        print(f"carapace: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("derived %d tuples in %.3fs", sum(len(v) for v in result.derived().values()),
             result.stats.wall)
    return EXIT_OK


def _bench(args: argparse.Namespace) -> int:
    names = list(benchmod.SUITES) if args.suite == "all" else args.suite.split(",")
    unknown = [n for n in names if n not in benchmod.SUITES]
    if unknown:
        raise UsageError(f"carapace: error: unknown suite {unknown[0]!r}")
    configs = {"interp": None, "jit": jit_from_args(args)}
    rows = benchmod.bench(names, configs, args.size, args.seed, args.repeat, args.warmup)
    sys.stdout.write(benchmod.format_table(rows))
    return EXIT_OK


def _gen_corpus(args: argparse.Namespace) -> int:
    try:
        for bundle in gen_corpus(args.seed, args.count, Limits()):
            bundle.write(args.out)
    except OSError as exc:
        print(f"carapace: cannot write corpus: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _configure_logging() -> None:
    level = os.environ.get("CARAPACE_LOG", "WARNING").upper()
    if level.isdigit():
        value = int(level)
    else:
        value = logging.getLevelName(level)
        if not isinstance(value, int):
            value = logging.WARNING
    logging.basicConfig(level=value, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or (argv[0] not in COMMANDS and argv[0] not in ("-h", "--help")):
        argv.insert(0, "run")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "bench":
            return _bench(args)
        if args.command == "gen-corpus":
            return _gen_corpus(args)
        return run(run_config_from_args(args))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except ConfigError as exc:
        print(f"carapace: error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS


if __name__ == "__main__":
    sys.exit(main())
