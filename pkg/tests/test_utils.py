import logging

import pytest

import errors
import utils


class TestGetConfig:
    def test_reads_yaml(self, tmp_path):
        path = tmp_path / "config.yml"
        path.write_text("solver:\n  rel_gap: 0.01\n", encoding="utf-8")
        assert utils.get_config(path, logging.getLogger(__name__)) == {"solver": {"rel_gap": 0.01}}

    def test_missing_path__raises(self, tmp_path, caplog):
        with pytest.raises(ValueError):
            utils.get_config(tmp_path / "absent.yml", logging.getLogger(__name__))
        assert errors.UT_PATH_DOES_NOT_EXIST in caplog.text


class TestWriteYaml:
    def test_keeps_key_order(self, tmp_path):
        path = tmp_path / "out.yml"
        utils.write_yaml(path, {"name": "toy", "base_mva": 100})
        assert path.read_text(encoding="utf-8").splitlines() == ["name: toy", "base_mva: 100"]


class TestConfigHash:
    def test_independent_of_key_order(self):
        assert utils.config_hash({"a": 1, "b": [1, 2]}) == utils.config_hash({"b": [1, 2], "a": 1})

    def test_sensitive_to_values(self):
        assert utils.config_hash({"a": 1}) != utils.config_hash({"a": 2})


class TestLogAndRaise:
    def test_prefixes_error_key(self, mocker):
        logger_func = mocker.Mock()
        with pytest.raises(KeyError):
            utils.log_and_raise(logger_func, "boom", KeyError("x"), "XX_KEY")
        logger_func.assert_called_once_with("XX_KEY: boom")
