"""
Tests de configuración, catálogo y reportes
"""
import io
import json
import sys

import pytest
from pydantic import ValidationError

from src.catalog import Catalog, get_catalog
from src.config import DEFAULT_DATA_DIR, configure_logging, get_logger, get_settings, load_settings
from src.errors import CatalogError
from src.models import EntryResult, Verdict, VerificationReport


class TestSettings:
    def test_defaults(self):
        settings = get_settings()
        assert settings.engine.max_jet_order == 5
        assert settings.numgrid.overflow_guard == 1e8
        assert settings.catalog.data_dir == DEFAULT_DATA_DIR

    def test_singleton(self):
        assert get_settings() is get_settings()

    def test_yaml_override(self, tmp_path, monkeypatch):
        path = tmp_path / "config.yaml"
        path.write_text("engine:\n  probe_trials: 7\nnumgrid:\n  grids: [8, 16]\n", encoding="utf-8")
        monkeypatch.setenv("HYPERLIE_CONFIG", str(path))
        settings = load_settings()
        assert settings.engine.probe_trials == 7
        assert settings.numgrid.grids == [8, 16]
        assert settings.engine.max_jet_order == 5

    def test_env_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HYPERLIE_MAX_JET_ORDER", "7")
        monkeypatch.setenv("HYPERLIE_DATA_DIR", str(tmp_path))
        settings = load_settings()
        assert settings.engine.max_jet_order == 7
        assert settings.catalog.data_dir == tmp_path

    def test_invalid_jet_order(self, monkeypatch):
        monkeypatch.setenv("HYPERLIE_MAX_JET_ORDER", "1")
        with pytest.raises(ValidationError):
            load_settings()

    def test_missing_yaml_uses_defaults(self, tmp_path):
        settings = load_settings(tmp_path / "missing.yaml")
        assert settings.logging.level == "INFO"


class TestLogging:
    def test_logs_follow_replaced_stderr(self, monkeypatch):
        first = io.StringIO()
        monkeypatch.setattr(sys, "stderr", first)
        configure_logging()
        first.close()

        second = io.StringIO()
        monkeypatch.setattr(sys, "stderr", second)
        get_logger("hyperlie.test").info("grid_solved", n=16)

        record = json.loads(second.getvalue())
        assert record["event"] == "grid_solved"
        assert record["n"] == 16

    def test_level_filters(self, monkeypatch):
        monkeypatch.setenv("HYPERLIE_LOG_LEVEL", "WARNING")
        stream = io.StringIO()
        monkeypatch.setattr(sys, "stderr", stream)
        configure_logging(load_settings())
        get_logger("hyperlie.test").info("ignored")
        assert stream.getvalue() == ""


class TestCatalog:
    def test_isolated_data_dir(self, data_dir):
        catalog = Catalog(data_dir)
        assert catalog.condition_header("u") == "func F(u);"
        assert catalog.condition_header("ux") == ""
        assert catalog.printed_conditions()[0]["label"] == "u-m2-f"
        assert catalog.problem("flat")["exact"] == "x + y"

    def test_missing_file(self, data_dir):
        with pytest.raises(CatalogError):
            Catalog(data_dir).claws()

    def test_invalid_json(self, tmp_path):
        (tmp_path / "claws.json").write_text("{", encoding="utf-8")
        with pytest.raises(CatalogError):
            Catalog(tmp_path).claws()

    def test_data_dir_from_environment(self, data_dir, monkeypatch):
        monkeypatch.setenv("HYPERLIE_DATA_DIR", str(data_dir))
        assert get_catalog().data_dir == data_dir

    def test_builtin_catalog(self):
        catalog = get_catalog()
        assert set(catalog.table_names()) >= {"thm22", "table1", "table2"}
        assert len(catalog.t_functions()) == 3


class TestVerificationReport:
    def test_counts(self):
        report = VerificationReport(table="demo", entries=[
            EntryResult(label="a", verdict=Verdict.HOLDS),
            EntryResult(label="b", verdict=Verdict.FAILS, residual="u"),
            EntryResult(label="c", verdict=Verdict.UNDECIDED),
        ])
        assert report.passed == 1
        assert report.failed == 2
        assert not report.all_passed
        assert report.entry("b").residual == "u"
        assert report.entry("z") is None

    def test_summary(self):
        report = VerificationReport(table="demo", entries=[EntryResult(label="a", verdict=Verdict.HOLDS)])
        data = report.summary()
        assert data["all_passed"] is True
        assert data["entries"][0]["verdict"] == "holds"
        assert "schema_version" in data
