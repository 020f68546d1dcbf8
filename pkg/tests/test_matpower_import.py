from typing import Callable, Type, Optional

import pytest

import const
import errors
import matpower_import
from matpower_import import MatpowerImportError

CASE_TEXT = """mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	135	1	1.06	0.94;
	2	2	21.7	12.7	0	0	1	1	0	135	1	1.06	0.94;  % load bus
];
mpc.branch = [
	1	2	0.0192	0.0575	0.0528	130	130	130	0	0	1;
	2	1	0.05	0.2	0	0	0	0	0	0	0;
];
"""


def mock_log_and_raise_func(
    logger_func: Callable,
    error_message: str,
    exception: Type[BaseException],
    error_key: Optional[str] = None,
):
    raise exception


@pytest.fixture(autouse=True)
def mock_log_and_raise(mocker):
    mock = mocker.patch(
        "matpower_import.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


@pytest.fixture
def case_file(tmp_path):
    path = tmp_path / "case2.m"
    path.write_text(CASE_TEXT, encoding="utf-8")
    return path


class TestMatpowerImport:
    def test_read_tables(self, case_file):
        tables = matpower_import.read_matpower(case_file)
        assert tables["base_mva"] == 100.0
        assert tables["bus"].shape == (2, 13)
        assert tables["branch"].shape == (2, 11)
        assert tables["bus"][1, 2] == pytest.approx(21.7)

    def test_merge_drops_off_branches(self, case_file):
        merged = matpower_import.merge_into_document({const.MATPOWER_SOURCE: str(case_file)}, case_file)
        assert const.MATPOWER_SOURCE not in merged
        assert merged[const.BASE_MVA] == 100.0
        assert len(merged[const.LINES]) == 1
        assert merged[const.LINES][0][const.RATING_MVA] == 130.0
        assert merged[const.BUSES][0][const.REFERENCE]
        assert not merged[const.BUSES][1][const.REFERENCE]
        assert merged[const.BUSES][1][const.V_MAX] == pytest.approx(1.06)

    def test_document_sections_take_precedence(self, case_file):
        buses = [{const.BUS_ID: 1, const.V_MIN: 0.9, const.V_MAX: 1.1}]
        merged = matpower_import.merge_into_document({const.BASE_MVA: 50.0, const.BUSES: buses}, case_file)
        assert merged[const.BASE_MVA] == 50.0
        assert merged[const.BUSES] == buses

    def test_missing_file__raises(self, mock_log_and_raise, tmp_path):
        with pytest.raises(MatpowerImportError):
            matpower_import.read_matpower(tmp_path / "nope.m")
        assert errors.MI_PATH_DOES_NOT_EXIST in mock_log_and_raise.call_args[0]

    def test_missing_branch_table__raises(self, mock_log_and_raise, tmp_path):
        path = tmp_path / "bad.m"
        path.write_text(CASE_TEXT.split("mpc.branch")[0], encoding="utf-8")
        with pytest.raises(MatpowerImportError):
            matpower_import.read_matpower(path)
        assert errors.MI_MISSING_TABLE in mock_log_and_raise.call_args[0]

    def test_short_row__raises(self, mock_log_and_raise, tmp_path):
        path = tmp_path / "short.m"
        path.write_text("mpc.baseMVA = 100;\nmpc.bus = [\n\t1\t3\t0;\n];\n", encoding="utf-8")
        with pytest.raises(MatpowerImportError):
            matpower_import.read_matpower(path)
        assert errors.MI_BAD_ROW in mock_log_and_raise.call_args[0]
