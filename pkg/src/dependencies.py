"""Shared run history store."""
from __future__ import annotations

from runs import RunStore

# Global instance
_store: RunStore | None = None


def init_dependencies(db_path: str | None) -> None:
    """Open the run history store; no path disables it."""
    global _store
    _store = RunStore(db_path) if db_path else None


def get_store() -> RunStore | None:
    return _store
