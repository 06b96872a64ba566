from datetime import datetime, timedelta, timezone

from database import RunDatabase, clear_database


def test_log_and_history(tmp_path):
    path = tmp_path / "ledger" / "runs.db"
    db = RunDatabase(path)
    start = datetime(2026, 1, 1, tzinfo=timezone.utc)
    db.log_run("b", start + timedelta(minutes=1), "case_i", 1, 0.25, None)
    db.log_run("a", start, "case_i", 0, 1e-12, 2e-12)
    db.log_run("c", start, "lorentzian", 0, 0.0, 0.0)

    history = db.get_run_history("case_i")
    assert [row[1] for row in history] == ["a", "b"]
    assert history[0][2] == 0
    assert history[1][3] == 0.25
    assert history[1][4] is None
    assert db.get_run_history("one_lift") == []
    db.close()


def test_in_memory():
    db = RunDatabase(":memory:")
    db.log_run("x", datetime.now(timezone.utc), "case_ii", 0, 0.0, 0.0)
    assert len(db.get_run_history("case_ii")) == 1
    db.close()


def test_clear(tmp_path, capsys):
    path = tmp_path / "runs.db"
    db = RunDatabase(path)
    db.log_run("x", datetime.now(timezone.utc), "case_i", 0, 0.0, 0.0)
    db.close()

    clear_database(path)
    assert "cleared" in capsys.readouterr().out
    db = RunDatabase(path)
    assert db.get_run_history("case_i") == []
    db.close()
