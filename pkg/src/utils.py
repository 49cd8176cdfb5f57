"""Small helpers shared by the CLI."""
from __future__ import annotations

import asyncio
import logging

logger = logging.getLogger(__name__)


def log_error(error_type: str, message: str, context: str | None = None) -> None:
    """Log error to the logger and, when enabled, to the run history."""
    logger.error(f"{error_type}: {message} (context: {context})")
    try:
        from dependencies import get_store
        store = get_store()
        if store:
            store.log_error(error_type, message, context)
    except Exception:
        pass  # Don't fail if logging fails


async def run_sync(func, *args, **kwargs):
    """Run sync function in thread pool."""
    return await asyncio.to_thread(func, *args, **kwargs)


def safe_name(name: str) -> str:
    """Make a string usable as a file or directory name."""
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in name) or "_"
