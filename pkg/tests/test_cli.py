import numpy as np
import pytest

from qflow import models
from qflow.cli import main


def run(argv):
    return main(argv)


def read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        comment = fh.readline()
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(x) for x in row] for row in rows])
    return comment, header, data


class TestFigureCommands:
    def test_fig1a_values(self, tmp_path):
        out = tmp_path / "fig1a.csv"
        assert run(["fig1a", "--tmax", "2", "--step", "0.01",
                    "--out", str(out)]) == 0
        comment, header, data = read_csv(out)
        assert comment.startswith("# qflow 0.1.0 command=fig1a")
        assert header[0] == "t"
        assert data[0, 1:] == pytest.approx([1.0, 1.0, 1.0])
        i = np.argmin(np.abs(data[:, 0] - 1.0))
        want = 1 / 9 + (4 / 9) * (np.exp(-1) + np.exp(-2))
        assert data[i, 2] == pytest.approx(want, abs=1e-9)

    def test_fig1b_values(self, tmp_path):
        out = tmp_path / "fig1b.csv"
        assert run(["fig1b", "--tmax", "1", "--step", "0.05",
                    "--out", str(out)]) == 0
        _, header, data = read_csv(out)
        assert data[0, 1:] == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
        i = np.argmin(np.abs(data[:, 0] - 1.0))
        want = 4 / 81 * (1 - np.exp(-1)) ** 2 * (2 + 2 * np.exp(-1) + 5 * np.exp(-2))
        assert data[i, 2] == pytest.approx(want, abs=1e-9)

    def test_fig1b_stationary_tail(self, tmp_path):
        out = tmp_path / "fig1b_tail.csv"
        assert run(["fig1b", "--tmax", "20", "--step", "0.5",
                    "--phi-over-gamma", "1", "--out", str(out)]) == 0
        _, _, data = read_csv(out)
        assert data[-1, 1] == pytest.approx(8 / 81, abs=1e-3)

    def test_fig2_revival_flags(self, tmp_path):
        out = tmp_path / "fig2.csv"
        assert run(["fig2", "--tmax", "4", "--step", "0.01",
                    "--omega-over-gamma", "0,5", "--out", str(out)]) == 0
        _, header, data = read_csv(out)
        # drive-free column monotone, strong drive revives
        assert data[:, 2].max() == 0.0
        assert data[:, 4].max() == 1.0


class TestDeterminism:
    def test_identical_bytes_same_seed(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert run(["fig1a", "--tmax", "1.5", "--step", "0.01",
                        "--out", str(path), "--seed", "7"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_jobs_do_not_change_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["fig1b", "--tmax", "1", "--step", "0.05",
                    "--out", str(a), "--jobs", "1"]) == 0
        assert run(["fig1b", "--tmax", "1", "--step", "0.05",
                    "--out", str(b), "--jobs", "3"]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestSweepCommands:
    def test_td_monotone_static(self, tmp_path):
        out = tmp_path / "td.csv"
        assert run(["td", "--tmax", "2", "--step", "0.05",
                    "--out", str(out)]) == 0
        _, _, data = read_csv(out)
        assert data[0, 1] == pytest.approx(1.0)
        assert data[:, 2].max() == 0.0

    def test_bound_slack_nonnegative(self, tmp_path):
        out = tmp_path / "bound.csv"
        assert run(["bound", "--tmax", "1.5", "--step", "0.1",
                    "--out", str(out)]) == 0
        _, header, data = read_csv(out)
        slack = data[:-1, header.index("slack_next")]
        assert slack.min() > -1e-9

    def test_bound_slack_on_exchange_model(self, tmp_path):
        path = tmp_path / "exchange.json"
        models.save_model(models.exchange_preset(), path)
        out = tmp_path / "bound.csv"
        assert run(["bound", "--model", str(path), "--tmax", "3",
                    "--step", "0.25", "--out", str(out)]) == 0
        _, header, data = read_csv(out)
        slack = data[:-1, header.index("slack_next")]
        assert slack.min() > -1e-9

    def test_cpf_random_scheme_null_on_bystander(self, tmp_path):
        out = tmp_path / "cpf.csv"
        assert run(["cpf", "--scheme", "r", "--tmax", "2", "--step", "0.5",
                    "--out", str(out)]) == 0
        _, _, data = read_csv(out)
        assert np.abs(data[:, 2:]).max() < 1e-10

    def test_model_file_loading(self, tmp_path):
        path = tmp_path / "model.json"
        models.save_model(models.exchange_preset(), path)
        out = tmp_path / "td.csv"
        assert run(["td", "--model", str(path), "--tmax", "2",
                    "--step", "0.05", "--out", str(out)]) == 0
        _, _, data = read_csv(out)
        assert data[0, 1] == pytest.approx(1.0)

    def test_check_bystander_text(self, tmp_path, capsys):
        assert run(["check-bystander", "--omega", "2"]) == 0
        captured = capsys.readouterr()
        assert "bystander=true" in captured.out
        path = tmp_path / "model.json"
        models.save_model(models.exchange_preset(), path)
        assert run(["check-bystander", "--model", str(path)]) == 0
        captured = capsys.readouterr()
        assert "bystander=false" in captured.out


class TestExitCodes:
    def test_missing_model_file_is_config_error(self, tmp_path, capsys):
        assert run(["td", "--model", str(tmp_path / "nope.json")]) == 2

    def test_invalid_rates_are_config_errors(self, capsys):
        assert run(["td", "--gamma", "-1"]) == 2

    def test_validate_passes(self, tmp_path):
        out = tmp_path / "validate.txt"
        assert run(["validate", "--out", str(out)]) == 0
        text = out.read_text()
        assert "FAIL" not in text
        assert "PASS" in text
