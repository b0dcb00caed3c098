import csv
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mismc import cli
from mismc.cli import (
    ConfigError,
    ExperimentConfig,
    build_index_set,
    fmt,
    load_config,
    main,
    task_seed,
)
from mismc.multiindex import mi
from mismc.smc import SMCRunError


def write_config(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


BASE_TOY = """
[experiment]
model = toy1d
estimator = MLSMC-RE
eps = 0.2 0.1
repeats = 2
seed = 7
max_level = 3

[allocation]
pilot_samples = 50
"""


class TestFormatting:
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_seventeen_digit_roundtrip(self, x):
        assert float(fmt(x)) == x

    def test_plain_decimal_or_exponent(self):
        assert fmt(0.5) == "0.5"
        assert "e" in fmt(1e-300)


class TestConfigLoading:
    def test_minimal_config(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.ini", "[experiment]\nmodel = toy1d\n"))
        assert cfg.model == "toy1d"
        assert cfg.estimator == "MISMC-RE-TD"

    def test_full_config(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.ini", BASE_TOY))
        assert cfg.eps == (0.2, 0.1)
        assert cfg.repeats == 2
        assert cfg.pilot_samples == 50

    @pytest.mark.parametrize(
        "text",
        [
            "[experiment]\nmodel = toy1d\n[mystery]\nx = 1\n",  # unknown section
            "[experiment]\nmodel = toy1d\ncolour = red\n",  # unknown key
            "[experiment]\nmodel = banana\n",  # unknown model
            "[experiment]\nmodel = toy1d\nestimator = MAGIC\n",
            "[experiment]\nmodel = toy1d\neps = 0.1 0.2\n",  # not decreasing
            "[experiment]\nmodel = toy1d\neps = -0.1\n",
            "[experiment]\nmodel = toy1d\nrepeats = 1\n",
            "[experiment]\nmodel = toy1d\nrepeats = soon\n",
            "[experiment]\nmodel = toy1d\nbias_const = 0\n",
            "[experiment]\nmodel = toy1d\n[smc]\nsystematic = maybe\n",
            "[experiment]\nmodel = toy1d\n[rates]\nlines = axis0, spiral\n",
            "[experiment]\nmodel = toy1d\n[rates]\nmode = bootstrap\n",
            "[experiment]\nmodel = toy1d\n[reference]\nmethod = guess\n",
            "[smc]\nj = 5\n",  # missing model
        ],
    )
    def test_rejected_configs(self, tmp_path, text):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path / "bad.ini", text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")


class TestIndexSetConstruction:
    def test_sets_grow_as_eps_shrinks(self):
        cfg = ExperimentConfig(model="elliptic2d")
        for kind in ("MISMC-RE-TP", "MISMC-RE-TD", "MLSMC-RE"):
            coarse = build_index_set(cfg, kind, 0.1)
            fine = build_index_set(cfg, kind, 0.01)
            assert set(coarse.members) <= set(fine.members)

    def test_level_cap_respected(self):
        cfg = ExperimentConfig(model="elliptic2d", max_level=2)
        iset = build_index_set(cfg, "MISMC-RE-TP", 1e-4)
        assert max(max(a) for a in iset) <= 2

    def test_bias_const_shrinks_sets(self):
        lo = ExperimentConfig(model="elliptic2d", bias_const=1.0)
        hi = ExperimentConfig(model="elliptic2d", bias_const=4.0)
        assert len(build_index_set(hi, "MISMC-RE-TD", 0.01)) <= len(
            build_index_set(lo, "MISMC-RE-TD", 0.01)
        )


class TestTaskSeeds:
    def test_distinct_and_stable(self):
        a = task_seed(7, 1, 2)
        assert a == task_seed(7, 1, 2)
        assert a != task_seed(7, 1, 3)
        assert a != task_seed(8, 1, 2)
        assert 0 <= a < 2**63


class TestGenerateData:
    @pytest.mark.parametrize(
        "model,fname,header",
        [
            ("toy1d", "toy1d_observations.csv", ["z", "y"]),
            ("elliptic2d", "elliptic2d_observations.csv", ["z1", "z2", "y"]),
            ("lgc", "lgc_points.csv", ["z1", "z2"]),
            ("lgp", "lgp_points.csv", ["z1", "z2"]),
        ],
    )
    def test_writes_expected_schema(self, tmp_path, model, fname, header):
        rc = main(["--out-dir", str(tmp_path), "generate-data", "--model", model])
        assert rc == 0
        with open(tmp_path / fname) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == header
        assert len(rows) > 1

    def test_deterministic_bytes(self, tmp_path):
        main(["--out-dir", str(tmp_path / "a"), "generate-data", "--model", "toy1d"])
        main(["--out-dir", str(tmp_path / "b"), "generate-data", "--model", "toy1d"])
        assert (tmp_path / "a/toy1d_observations.csv").read_bytes() == (
            tmp_path / "b/toy1d_observations.csv"
        ).read_bytes()

    def test_unknown_model_exits_2(self, tmp_path, capsys):
        rc = main(["--out-dir", str(tmp_path), "generate-data", "--model", "banana"])
        assert rc == 2
        assert "config error" in capsys.readouterr().err


class TestComplexityCommand:
    def test_run_and_output_schema(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.ini", BASE_TOY)
        rc = main(["--out-dir", str(tmp_path / "out"), "complexity", "--config", cfg_path])
        assert rc == 0
        with open(tmp_path / "out/complexity_toy1d_MLSMC-RE.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "estimator", "eps", "repeat", "estimate", "reference", "sq_error", "cost_units", "seed",
        ]
        assert len(rows) == 1 + 2 * 2  # header + repeats x eps
        for row in rows[1:]:
            assert row[0] == "MLSMC-RE"
            assert float(row[5]) >= 0.0
        with open(tmp_path / "out/complexity_toy1d_MLSMC-RE_summary.csv") as fh:
            srows = list(csv.reader(fh))
        assert srows[0] == ["estimator", "eps", "mse", "mean_cost", "slope"]
        assert (tmp_path / "out/complexity_toy1d_MLSMC-RE.svg").exists()

    def test_byte_identical_across_thread_counts(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.ini", BASE_TOY)
        main(["--threads", "1", "--out-dir", str(tmp_path / "t1"), "complexity", "--config", cfg_path])
        main(["--threads", "4", "--out-dir", str(tmp_path / "t4"), "complexity", "--config", cfg_path])
        for name in ("complexity_toy1d_MLSMC-RE.csv", "complexity_toy1d_MLSMC-RE_summary.csv"):
            assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()

    def test_missing_eps_exits_2(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "c.ini", "[experiment]\nmodel = toy1d\n")
        rc = main(["--out-dir", str(tmp_path), "complexity", "--config", cfg_path])
        assert rc == 2
        assert "eps ladder" in capsys.readouterr().err

    def test_numerical_abort_exits_3(self, tmp_path, capsys, monkeypatch):
        cfg_path = write_config(tmp_path / "c.ini", BASE_TOY)

        def boom(cfg, threads=1):
            raise SMCRunError("all particle weights vanished")

        monkeypatch.setattr(cli, "run_complexity_study", boom)
        rc = main(["--out-dir", str(tmp_path), "complexity", "--config", cfg_path])
        assert rc == 3
        assert "numerical abort" in capsys.readouterr().err


class TestRatesCommand:
    def test_run_and_output_schema(self, tmp_path):
        cfg_path = write_config(
            tmp_path / "r.ini",
            """
[experiment]
model = toy1d
seed = 5

[rates]
lines = axis0
min_level = 1
max_level = 4
samples = 2000
realisations = 1
""",
        )
        rc = main(["--out-dir", str(tmp_path / "out"), "rates", "--config", cfg_path])
        assert rc == 0
        with open(tmp_path / "out/rates_toy1d_summary.csv") as fh:
            rows = {(r[1], r[2]): r for r in list(csv.reader(fh))[1:]}
        # nominal rates for this model: mean -2, second moment -4, cost +1
        assert float(rows[("axis0", "abs_mean")][3]) == pytest.approx(-2.0, abs=0.3)
        assert float(rows[("axis0", "second_moment")][3]) == pytest.approx(-4.0, abs=0.5)
        assert float(rows[("axis0", "cost")][3]) == pytest.approx(1.0, abs=1e-9)
        assert (tmp_path / "out/rates_toy1d_axis0.csv").exists()
        assert (tmp_path / "out/rates_toy1d_axis0.svg").exists()

    def test_thread_determinism(self, tmp_path):
        cfg_path = write_config(
            tmp_path / "r.ini",
            """
[experiment]
model = toy1d

[rates]
lines = axis0
min_level = 1
max_level = 3
samples = 500
realisations = 1
""",
        )
        main(["--threads", "1", "--out-dir", str(tmp_path / "t1"), "rates", "--config", cfg_path])
        main(["--threads", "3", "--out-dir", str(tmp_path / "t3"), "rates", "--config", cfg_path])
        assert (tmp_path / "t1/rates_toy1d_axis0.csv").read_bytes() == (
            tmp_path / "t3/rates_toy1d_axis0.csv"
        ).read_bytes()


class TestReferenceCommand:
    def test_toy_reference_matches_quadrature_oracle(self, tmp_path):
        import numpy as np

        from mismc.models import Toy1DModel

        cfg_path = write_config(tmp_path / "c.ini", "[experiment]\nmodel = toy1d\nmax_level = 6\n")
        rc = main(["--out-dir", str(tmp_path / "out"), "reference", "--config", cfg_path])
        assert rc == 0
        with open(tmp_path / "out/reference_toy1d.csv") as fh:
            rows = list(csv.reader(fh))
        value = float(rows[1][2])
        model = Toy1DModel()
        xs = np.linspace(-1.0, 1.0, 400_001)
        w = np.exp(model.exact_log_likelihood(xs[:, None]))
        oracle = float(np.trapezoid(w * xs**2, xs) / np.trapezoid(w, xs))
        assert value == pytest.approx(oracle, abs=1e-4)

    def test_quadrature_reference_rejected_for_log_gaussian(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "c.ini", "[experiment]\nmodel = lgc\n")
        rc = main(["--out-dir", str(tmp_path), "reference", "--config", cfg_path])
        assert rc == 2
        assert "mlsmc" in capsys.readouterr().err


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "mismc.cli", "--out-dir", str(tmp_path),
             "generate-data", "--model", "toy1d"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "toy1d_observations.csv" in proc.stdout

    def test_bad_arguments_exit_2(self):
        assert main(["frobnicate"]) == 2
