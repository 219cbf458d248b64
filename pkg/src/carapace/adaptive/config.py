"""JIT configuration."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class Granularity(enum.Enum):
    ITERATION = "iteration"
    RULE = "rule"
    CQ = "cq"


class Backend(enum.Enum):
    IRGEN = "irgen"
    PIPELINE = "pipeline"
    # accepted for vocabulary compatibility, rejected at engine construction
    QUOTES = "quotes"
    BYTECODE = "bytecode"


class SyncMode(enum.Enum):
    BLOCKING = "blocking"
    ASYNC = "async"


class Scope(enum.Enum):
    FULL = "full"
    SNIPPET = "snippet"


class SortPolicy(enum.Enum):
    CARD_THEN_SEL = "card"
    SEL_THEN_CARD = "sel"
    NONE = "none"


class Presort(enum.Enum):
    OFF = "off"
    RULES_ONLY = "rules"
    FACTS_AND_RULES = "facts-rules"


BACKEND_ALIASES = {"lambda-alias": Backend.PIPELINE, "lambda": Backend.PIPELINE}
UNSUPPORTED_BACKENDS = (Backend.QUOTES, Backend.BYTECODE)


class ConfigError(ValueError):
    pass


class UnsupportedBackend(ConfigError):
    def __init__(self, backend: Backend):
        super().__init__(f"backend '{backend.value}' is unsupported on this build")
        self.backend = backend


def parse_backend(text: str) -> Backend:
    if text in BACKEND_ALIASES:
        return BACKEND_ALIASES[text]
    try:
        return Backend(text)
    except ValueError:
        raise ConfigError(f"unknown backend {text!r}") from None


def parse_threshold(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value < 0:
        raise ConfigError(f"freshness threshold must be a non-negative number or inf, got {text!r}")
    return value


@dataclass(frozen=True)
class JitConfig:
    granularity: Granularity = Granularity.CQ
    backend: Backend = Backend.IRGEN
    sync: SyncMode = SyncMode.BLOCKING
    scope: Scope = Scope.FULL
    freshness: float = 0.25
    sort_policy: SortPolicy = SortPolicy.CARD_THEN_SEL
    presort: Presort = Presort.OFF
    # test knob: seconds the replanning worker sleeps before publishing
    worker_delay: float = 0.0

    def check(self) -> JitConfig:
        if self.backend in UNSUPPORTED_BACKENDS:
            raise UnsupportedBackend(self.backend)
        if self.scope is Scope.SNIPPET and self.backend is not Backend.PIPELINE:
            raise ConfigError("snippet scope requires the pipeline backend")
        if self.freshness < 0 or math.isnan(self.freshness):
            raise ConfigError("freshness threshold must be non-negative")
        if self.worker_delay < 0:
            raise ConfigError("worker delay must be non-negative")
        return self
