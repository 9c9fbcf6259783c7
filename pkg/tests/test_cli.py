import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from orthoconv.cli import main
from orthoconv.core import Architecture, KernelTensor, glorot_uniform_init


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def run_err(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def random_kernel_file(tmp_path):
    path = tmp_path / "r.json"
    glorot_uniform_init(Architecture(2, 3, 2, 3, 1), 3).save(path)
    return path


class TestExists:
    def test_false(self, capsys):
        code, report = run(capsys, "exists", "-d", 2, "-M", 8, "-C", 4, "-k", 1, "-S", 2)
        assert code == 0
        assert report["outputs"]["exists"] is False
        assert report["outputs"]["case"] == "RO"
        assert set(report) == {"command", "inputs", "outputs", "version", "elapsed_ms"}
        assert isinstance(report["elapsed_ms"], int)

    def test_true(self, capsys):
        code, report = run(capsys, "exists", "-d", 2, "-M", 64, "-C", 3, "-k", 3, "-S", 1)
        assert code == 0 and report["outputs"]["exists"] is True and report["outputs"]["case"] == "CO"

    def test_even_kernel(self, capsys):
        code, out, err = run_err(capsys, "exists", "-d", 2, "-M", 6, "-C", 3, "-k", 4, "-S", 1)
        assert code == 2 and out == ""
        assert "EvenKernel" in err

    def test_missing_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["exists", "-d", "2"])
        assert exc.value.code == 2


class TestRoundTrip:
    def test_construct_lorth_residual(self, capsys, tmp_path):
        path = tmp_path / "o.json"
        code, report = run(capsys, "construct", "-d", 2, "-M", 5, "-C", 2, "-k", 3, "-S", 2, "--out", path)
        assert code == 0
        assert KernelTensor.load(path).data.tolist() == np.reshape(report["outputs"]["kernel"]["data"], (5, 2, 3, 3)).tolist()
        code, report = run(capsys, "lorth", "--kernel", path)
        assert code == 0 and report["outputs"]["lorth"] <= 1e-12
        code, report = run(capsys, "residual", "--kernel", path, "-N", 3)
        assert code == 0 and report["outputs"]["err_f"] <= 1e-10

    def test_construct_ineligible(self, capsys):
        code, _ = run(capsys, "construct", "-d", 2, "-M", 4, "-C", 2, "-k", 1, "-S", 2)
        assert code == 2


class TestKernelCommands:
    def test_residual_theorems(self, capsys, random_kernel_file):
        code, report = run(capsys, "residual", "--kernel", random_kernel_file, "-N", 8, "--check-theorems",
                           "--aip-samples", 10)
        out = report["outputs"]
        assert code == 0
        assert out["frobenius_identity_gap"] <= 1e-9 and out["sandwich_satisfied"] is True
        assert out["aip_worst_violation"] <= 1e-10

    def test_residual_theorems_need_size(self, capsys, random_kernel_file):
        code, _ = run(capsys, "residual", "--kernel", random_kernel_file, "-N", 4, "--check-theorems")
        assert code == 2

    def test_dense_guard(self, capsys, random_kernel_file):
        code, _ = run(capsys, "residual", "--kernel", random_kernel_file, "-N", 8, "--max-dense-entries", 100)
        assert code == 2

    def test_singvals_consistent_with_residual(self, capsys, random_kernel_file):
        _, full = run(capsys, "singvals", "--kernel", random_kernel_file, "-N", 6, "--full")
        _, resid = run(capsys, "residual", "--kernel", random_kernel_file, "-N", 6)
        values = np.array(full["outputs"]["values"])
        assert full["outputs"]["mode"] == "Full"
        assert np.max(np.abs(values**2 - 1)) == pytest.approx(resid["outputs"]["err_s"], rel=1e-8)
        _, ext = run(capsys, "singvals", "--kernel", random_kernel_file, "-N", 6, "--extremal")
        assert ext["outputs"]["sigma_max"] == pytest.approx(values[0], abs=1e-6)
        assert ext["outputs"]["sigma_min"] == pytest.approx(values[-1], abs=1e-6)

    def test_singvals_full_needs_unit_stride(self, capsys, tmp_path):
        path = tmp_path / "s.json"
        glorot_uniform_init(Architecture(1, 2, 1, 3, 2), 0).save(path)
        code, _ = run(capsys, "singvals", "--kernel", path, "-N", 4, "--full")
        assert code == 2

    def test_gradcheck(self, capsys, random_kernel_file):
        code, report = run(capsys, "gradcheck", "--kernel", random_kernel_file)
        assert code == 0 and report["outputs"]["passed"]

    def test_bad_kernel_file(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"d": 1, "M": 1, "C": 1, "k": 3, "S": 1, "data": [1.0]}))
        assert run(capsys, "lorth", "--kernel", path)[0] == 2
        assert run(capsys, "lorth", "--kernel", tmp_path / "missing.json")[0] == 2
        path.write_text("not json")
        assert run(capsys, "lorth", "--kernel", path)[0] == 2

    def test_obstruction(self, capsys, tmp_path):
        path = tmp_path / "co.json"
        glorot_uniform_init(Architecture(1, 4, 1, 3, 1), 1).save(path)
        code, report = run(capsys, "obstruction", "--kernel", path, "-N", 5)
        assert code == 0 and report["outputs"]["gap"] >= 1 / 3
        code, report = run(capsys, "obstruction", "--kernel", path, "-N", 5, "--padding", "same_zero")
        assert code == 0 and report["outputs"]["off_center_energy"] > 0


class TestExperiments:
    def test_optimize(self, capsys, tmp_path):
        out, trace = tmp_path / "k.json", tmp_path / "t.json"
        code, report = run(capsys, "optimize", "-d", 1, "-M", 4, "-C", 2, "-k", 3, "-S", 2, "--steps", 50,
                           "--out", out, "--trace", trace)
        assert code == 0
        assert len(json.loads(trace.read_text())) == 51
        assert KernelTensor.load(out).arch == Architecture(1, 4, 2, 3, 2)
        assert report["outputs"]["lorth_final"] == pytest.approx(0.6060245652428446, rel=1e-9)

    def test_optimize_deterministic(self, capsys):
        args = ("optimize", "-d", 1, "-M", 2, "-C", 1, "-k", 3, "-S", 1, "--steps", 40, "--seed", 7)
        first = run(capsys, *args)[1]["outputs"]
        second = run(capsys, *args)[1]["outputs"]
        assert first == second

    def test_sweep(self, capsys, tmp_path):
        path = tmp_path / "s.csv"
        code, report = run(capsys, "sweep", "-d", 1, "--M-range", "1-2", "--C-range", "1,2", "--S-set", "1",
                           "--k-set", "3", "--steps", 20, "--spectrum-n", 6, "--workers", 1, "--out", path)
        assert code == 0
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:5] == ["d", "M", "C", "k", "S"]
        assert len(rows) - 1 == report["outputs"]["eligible"] == 4

    def test_sweep_count_only(self, capsys):
        code, report = run(capsys, "sweep", "-d", 2, "--M-range", "1-64", "--C-range", "1-64", "--S-set", "1,2,4",
                           "--k-set", "1,3,5,7", "--count-only")
        assert code == 0 and report["outputs"] == {"total": 49152, "eligible": 44924, "excluded": 4228}

    def test_sweep_needs_out(self, capsys):
        code, _ = run(capsys, "sweep", "-d", 1, "--M-range", "1", "--C-range", "1", "--S-set", "1", "--k-set", "1")
        assert code == 2

    def test_square_case(self, capsys):
        code, report = run(capsys, "square-case", "-d", 1, "-M", 2, "-C", 1, "-k", 3, "-S", 2, "--runs", 2,
                           "--steps", 50)
        assert code == 0 and 0 <= report["outputs"]["success_rate"] <= 1
        code, _ = run(capsys, "square-case", "-d", 1, "-M", 3, "-C", 1, "-k", 3, "-S", 2, "--runs", 2)
        assert code == 2

    def test_stability(self, capsys, tmp_path):
        kernel, out = tmp_path / "o.json", tmp_path / "st.csv"
        run(capsys, "construct", "-d", 1, "-M", 2, "-C", 2, "-k", 3, "-S", 1, "--out", kernel)
        code, report = run(capsys, "stability", "--kernel", kernel, "--Ns", "5,10", "--out", out)
        assert code == 0
        assert [row["N"] for row in report["outputs"]["rows"]] == [5, 10]
        assert len(out.read_text().splitlines()) == 3

    def test_stability_random_kernel(self, capsys, tmp_path):
        kernel = tmp_path / "g.json"
        glorot_uniform_init(Architecture(1, 2, 1, 3, 1), 0).save(kernel)
        code, report = run(capsys, "stability", "--kernel", kernel, "--Ns", "5")
        assert code == 0 and report["outputs"]["rows"][0]["within_bound"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "orthoconv", "exists", "-d", "1", "-M", "5", "-C", "2",
                           "-k", "3", "-S", "4"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["outputs"]["exists"] is True


def test_contract_violation_exit(capsys, tmp_path, monkeypatch):
    import orthoconv.cli as cli

    monkeypatch.setattr(cli, "GRADCHECK_TOL", 0.0)
    path = tmp_path / "g.json"
    glorot_uniform_init(Architecture(1, 2, 1, 3, 1), 0).save(path)
    code, report = run(capsys, "gradcheck", "--kernel", path)
    assert code == 3
    assert report["outputs"]["passed"] is False
