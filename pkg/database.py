import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Optional, Union


class RunDatabase:
    def __init__(self, db_path: Union[str, Path] = 'zmc_runs.db'):
        self.db_path = str(db_path)
        if self.db_path != ':memory:':
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(self.db_path)
        self.create_tables()

    def create_tables(self):
        """Create the run ledger table"""
        cursor = self.conn.cursor()

        # One row per pipeline run
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS pipeline_runs (
                timestamp TEXT NOT NULL,
                run_id TEXT NOT NULL,
                case_name TEXT NOT NULL,
                exit_status INTEGER NOT NULL,
                gauss_max REAL,
                compatibility_max REAL,
                PRIMARY KEY (timestamp, run_id)
            )
        ''')

        self.conn.commit()

    def log_run(self, run_id: str, timestamp: datetime, case: str, exit_status: int,
                gauss_max: Optional[float], compatibility_max: Optional[float]):
        """Log the outcome of one pipeline run"""
        cursor = self.conn.cursor()
        cursor.execute('''
            INSERT INTO pipeline_runs (timestamp, run_id, case_name, exit_status, gauss_max, compatibility_max)
            VALUES (?, ?, ?, ?, ?, ?)
        ''', (timestamp.isoformat(), run_id, case, exit_status, gauss_max, compatibility_max))
        self.conn.commit()

    def get_run_history(self, case: str):
        """Get all runs of one case, oldest first"""
        cursor = self.conn.cursor()
        cursor.execute('''
            SELECT timestamp, run_id, exit_status, gauss_max, compatibility_max FROM pipeline_runs
            WHERE case_name = ?
            ORDER BY timestamp
        ''', (case,))
        return cursor.fetchall()

    def close(self):
        """Close database connection"""
        self.conn.close()


def clear_database(db_path: Union[str, Path] = 'zmc_runs.db'):
    """Clear all runs from the ledger"""
    db = RunDatabase(db_path)
    cursor = db.conn.cursor()
    cursor.execute('DELETE FROM pipeline_runs')
    db.conn.commit()
    print("Run ledger cleared successfully")
    db.close()
