import json
from pathlib import Path

import pytest

from config import (DEFAULT_N, ConfigError, env_db_path, env_log_level, env_out_dir, load_config,
                    parse_surface, validate)
from constructors import CASES

from conftest import CONFIG_DIR


def minimal(**overrides):
    doc = {
        "schema_version": 1,
        "case": "case_i",
        "ambient": {"family": "neutral", "L0": 0},
        "lambda": {"source": "expression", "expr": "0"},
        "functions": {"gamma": "0", "p_plus": "1", "p_minus": "0"},
    }
    doc.update(overrides)
    return doc


def error_path(doc):
    with pytest.raises(ConfigError) as info:
        validate(doc)
    return info.value.path


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_bundled_configs_validate(path):
    config = load_config(path)
    assert config.case in CASES
    assert config.out_dir.parts[0] == "out"


class TestValidate:
    def test_defaults(self):
        config = validate(minimal())
        assert config.domain.n == DEFAULT_N
        assert config.domain.u_range == (0.0, 1.0)
        assert config.pipeline.integrate_frame and config.pipeline.export
        assert not config.pipeline.reproject
        assert config.signs.epsilon == 1
        assert config.perturb is None
        assert config.source["source"] == "expression"
        assert set(config.functions) == {"gamma", "p_plus", "p_minus"}

    def test_grid_defaults_to_129(self):
        assert validate(minimal()).domain.n == 129
        doc = minimal(domain={"u": [0, 1], "v": [0, 1]})
        assert validate(doc).domain.n == 129

    def test_constants_default_to_zero(self):
        doc = minimal(case="flat_normal", functions={"P_plus": "s*t"})
        config = validate(doc)
        assert config.constants == {"c": 0.0}
        assert config.functions["P_plus"].variables == ("s", "t")

    def test_overrides_update_raw(self):
        config = validate(minimal()).with_grid(17).with_tolerance(1e-3).with_out_dir("elsewhere")
        assert config.domain.n == 17
        assert config.tolerances.verdict == 1e-3
        assert config.raw["domain"]["n"] == 17
        assert config.raw["out"] == "elsewhere"

    @pytest.mark.parametrize("overrides, expected", [
        ({"schema_version": 2}, "schema_version"),
        ({"case": "nosuch"}, "case"),
        ({"ambient": {"family": "lorentzian", "L0": 0}}, "ambient.family"),
        ({"ambient": {"family": "neutral"}}, "ambient.L0"),
        ({"ambient": {"family": "neutral", "L0": float("inf")}}, "ambient"),
        ({"signs": {"epsilon": 0}}, "signs.epsilon"),
        ({"signs": {"epsilon": True}}, "signs.epsilon"),
        ({"signs": {"delta": 1}}, "signs.delta"),
        ({"domain": {"n": 3}}, "domain.n"),
        ({"domain": {"u": [1, 0]}}, "domain.u"),
        ({"lambda": {"source": "goursat"}}, "lambda.source"),
        ({"lambda": {"source": "liouville", "p": "x"}}, "lambda.q"),
        ({"functions": {"gamma": "0", "p_plus": "1"}}, "functions.p_minus"),
        ({"functions": {"gamma": "u*(", "p_plus": "1", "p_minus": "0"}}, "functions.gamma"),
        ({"functions": {"gamma": "0", "p_plus": "1", "p_minus": "0", "C": "1"}}, "functions.C"),
        ({"constants": {"c": 1}}, "constants.c"),
        ({"tolerances": {"verdict": -1}}, "tolerances.verdict"),
        ({"pipeline": {"export": "yes"}}, "pipeline.export"),
        ({"perturb": {"field": "gamma"}}, "perturb.field"),
        ({"expect": {"integrable": True}}, "expect.integrable"),
    ])
    def test_error_paths(self, overrides, expected):
        assert error_path(minimal(**overrides)) == expected

    def test_parse_error_mentions_offset(self):
        with pytest.raises(ConfigError, match="offset"):
            validate(minimal(functions={"gamma": "u*(", "p_plus": "1", "p_minus": "0"}))

    def test_one_lift_needs_system(self):
        doc = minimal(case="one_lift", functions={"P_tilde_minus": "0"})
        del doc["lambda"]
        assert error_path(doc) == "system"

    def test_one_lift_goursat_system(self):
        doc = minimal(case="one_lift", functions={"P_tilde_minus": "0"},
                      system={"source": "goursat",
                              "f1": {"along_s": "0", "along_t": "0"},
                              "f2": {"along_s": "s", "along_t": "0"}})
        del doc["lambda"]
        config = validate(doc)
        along_s, along_t = config.source["f2"]
        assert along_s.variables == ("s",)
        assert along_t.variables == ("t",)

    def test_goursat_boundary_incomplete(self):
        doc = minimal(case="flat_normal", functions={"P_plus": "0"},
                      **{"lambda": {"source": "goursat", "along_s": "0"}})
        assert error_path(doc) == "lambda"


def test_parse_surface_prefers_uv():
    assert parse_surface("u + v", "x").variables == ("u", "v")
    assert parse_surface("s - t", "x").variables == ("s", "t")
    with pytest.raises(ConfigError):
        parse_surface("u + t", "x")


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"case\": ")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(minimal(out="results")))
        config = load_config(path)
        assert config.out_dir == Path("results")
        assert config.raw["functions"]["p_plus"] == "1"


class TestEnvironment:
    def test_defaults(self, monkeypatch):
        for name in ("ZMC_OUT_DIR", "ZMC_LOG_LEVEL", "ZMC_DB_PATH"):
            monkeypatch.delenv(name, raising=False)
        assert env_out_dir() == "out"
        assert env_log_level() == "WARNING"
        assert env_db_path("results") == Path("results") / "runs.db"

    def test_overrides(self, monkeypatch, tmp_path):
        monkeypatch.setenv("ZMC_OUT_DIR", str(tmp_path))
        monkeypatch.setenv("ZMC_DB_PATH", str(tmp_path / "ledger.db"))
        assert env_out_dir() == str(tmp_path)
        assert env_db_path("ignored") == tmp_path / "ledger.db"
        assert validate(minimal()).out_dir == tmp_path
