"""SQLite run log for training steps"""

import sqlite3
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

COMPONENT_COLUMNS = ("trans", "rot", "aa", "ec", "coevo", "inter", "dist", "kd")

SCHEMA = """
    CREATE TABLE IF NOT EXISTS runs (
        run_id INTEGER PRIMARY KEY AUTOINCREMENT,
        command TEXT NOT NULL,
        stage TEXT,
        config_hash TEXT NOT NULL,
        seed INTEGER NOT NULL,
        started_at_utc TEXT NOT NULL
    );
    CREATE TABLE IF NOT EXISTS steps (
        run_id INTEGER NOT NULL REFERENCES runs(run_id),
        step INTEGER NOT NULL,
        total REAL NOT NULL,
        trans REAL, rot REAL, aa REAL, ec REAL, coevo REAL,
        inter REAL, dist REAL, kd REAL,
        PRIMARY KEY (run_id, step)
    );
"""


@dataclass
class StepRow:
    run_id: int
    step: int
    total: float
    components: Dict[str, Optional[float]]

    @classmethod
    def from_row(cls, row: sqlite3.Row) -> "StepRow":
        return cls(
            run_id=row["run_id"],
            step=row["step"],
            total=row["total"],
            components={name: row[name] for name in COMPONENT_COLUMNS},
        )


class RunLog:
    """SQLite connection manager for run and step records"""

    def __init__(self, db_path: Path):
        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        with self.get_connection() as conn:
            conn.executescript(SCHEMA)
            conn.commit()

    @contextmanager
    def get_connection(self):
        """Context manager for database connections"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
        finally:
            conn.close()

    def start_run(self, command: str, config_hash: str, seed: int, stage: Optional[str] = None) -> int:
        """Insert a run and return its id"""
        with self.get_connection() as conn:
            cursor = conn.execute(
                """
                INSERT INTO runs (command, stage, config_hash, seed, started_at_utc)
                VALUES (?, ?, ?, ?, ?)
                """,
                (command, stage, config_hash, seed, datetime.now(timezone.utc).isoformat()),
            )
            conn.commit()
            return int(cursor.lastrowid)

    def log_step(self, run_id: int, step: int, total: float, components: Dict[str, Optional[float]]) -> None:
        """Insert or replace one step's loss breakdown"""
        with self.get_connection() as conn:
            conn.execute(
                f"""
                INSERT OR REPLACE INTO steps (run_id, step, total, {", ".join(COMPONENT_COLUMNS)})
                VALUES (?, ?, ?, {", ".join("?" for _ in COMPONENT_COLUMNS)})
                """,
                (run_id, step, total, *(components.get(name) for name in COMPONENT_COLUMNS)),
            )
            conn.commit()

    def get_steps(self, run_id: int) -> List[StepRow]:
        with self.get_connection() as conn:
            cursor = conn.execute(
                f"""
                SELECT run_id, step, total, {", ".join(COMPONENT_COLUMNS)}
                FROM steps
                WHERE run_id = ?
                ORDER BY step ASC
                """,
                (run_id,),
            )
            return [StepRow.from_row(row) for row in cursor.fetchall()]

    def get_totals(self, run_id: int) -> List[float]:
        """Total loss per step, for plotting"""
        return [s.total for s in self.get_steps(run_id)]
