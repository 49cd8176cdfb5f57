from __future__ import annotations

import json
import sqlite3
from pathlib import Path

from reports import ExperimentReport


class RunStore:
    """SQLite history of estimation runs and logged errors."""

    def __init__(self, db_path: str = "runs.db") -> None:
        self.db_path = Path(db_path)
        self._ensure_schema()

    def _connect(self) -> sqlite3.Connection:
        return sqlite3.connect(self.db_path)

    def _ensure_schema(self) -> None:
        with self._connect() as conn:
            conn.execute(
                """
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    kind TEXT NOT NULL,
                    inputs TEXT,
                    config TEXT NOT NULL,
                    seed INTEGER,
                    ground_truth REAL,
                    wm3 REAL NOT NULL,
                    wv3 REAL NOT NULL,
                    levels INTEGER NOT NULL,
                    report_path TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
                """
            )
            # Error log table for debugging
            conn.execute(
                """
                CREATE TABLE IF NOT EXISTS error_log (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    error_type TEXT NOT NULL,
                    error_message TEXT NOT NULL,
                    context TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
                """
            )
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_kind ON runs(kind, created_at)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_error_log_time ON error_log(created_at)")
            conn.commit()

    # ========== Runs ==========

    def add_run(
        self,
        kind: str,
        report: ExperimentReport,
        inputs: list[str] | None = None,
        report_path: str | Path | None = None,
    ) -> int:
        with self._connect() as conn:
            cursor = conn.execute(
                """
                INSERT INTO runs (kind, inputs, config, seed, ground_truth, wm3, wv3, levels, report_path)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                (
                    kind,
                    json.dumps(inputs or []),
                    json.dumps(report.config),
                    report.seed,
                    report.ground_truth,
                    report.wm3,
                    report.wv3,
                    len(report.levels),
                    str(report_path) if report_path else None,
                ),
            )
            conn.commit()
            return int(cursor.lastrowid)

    # ========== Error Log ==========

    def log_error(self, error_type: str, error_message: str, context: str | None = None) -> None:
        """Log an error to the database."""
        with self._connect() as conn:
            conn.execute(
                """
                INSERT INTO error_log (error_type, error_message, context)
                VALUES (?, ?, ?)
                """,
                (error_type, error_message, context),
            )
            conn.commit()
