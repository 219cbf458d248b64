"""Runtime join-order optimization."""
from carapace.adaptive.config import (
    Backend,
    ConfigError,
    Granularity,
    JitConfig,
    Presort,
    Scope,
    SortPolicy,
    SyncMode,
    UnsupportedBackend,
)

__all__ = [
    "Backend", "ConfigError", "Granularity", "JitConfig", "Presort", "Scope",
    "SortPolicy", "SyncMode", "UnsupportedBackend",
]
