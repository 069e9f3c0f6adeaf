import csv
import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from fogbench import cli
from fogbench.atmosphere import beta_from_visibility
from fogbench.config import ExperimentConfig, config_from_dict, load_config
from fogbench.errors import ValidationError
from fogbench.files import (
    TRACE_HEADER,
    fmt,
    parse_trace_csv,
    pgm_bytes,
    read_csv_dicts,
    read_manifest,
    read_pgm,
    read_trace_csv,
    write_pgm,
    write_trace_csv,
)
from fogbench.fitting import FitParams, synthetic_trace
from fogbench.scene import FrameBuffer, TargetTrace

SMALL = """
seed = 7
frames = 3
render_scale = 0.125
targets = [0.05, 0.5, 0.9]

[fog]
types = ["radiation"]
visibility_ranges_m = [[20, 30]]
"""


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


@pytest.fixture(scope="module")
def small_config(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("cfg") / "small.toml"
    path.write_text(SMALL)
    return path


@pytest.fixture(scope="module")
def small_run(tmp_path_factory, small_config) -> Path:
    out = tmp_path_factory.mktemp("run") / "small"
    assert cli.main(["simulate", "--config", str(small_config), "--out", str(out)]) == 0
    return out


def noise_free_csv(path: Path, rhos=(0.9,), truth=FitParams(0.4, 0.2, 5.0, 0.03), visibility=50.0):
    beta = float(beta_from_visibility(visibility))
    depth = np.arange(50) * 2 + 1.0
    write_trace_csv(path, [synthetic_trace(truth, beta, depth, rho=r) for r in rhos])
    return truth


# --------------------------------------------------------------------------
# trace CSV


class TestTraceCsv:
    unit = st.floats(0.0, 1.0, allow_nan=False)

    @settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        st.lists(st.tuples(st.floats(1e-3, 1e3), unit, unit), min_size=1, max_size=20, unique_by=lambda t: fmt(t[0])),
        unit,
    )
    def test_round_trip_at_nine_digits(self, tmp_path, rows, rho):
        rows = sorted(rows)
        t = TargetTrace.from_bins(rho, [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
        path = tmp_path / "t.csv"
        write_trace_csv(path, [t])
        groups = read_trace_csv(path)
        back = groups[float(fmt(rho))]
        for got, want in zip(
            (back.binned.center_m, back.binned.mean, back.binned.std), (t.binned.center_m, t.binned.mean, t.binned.std)
        ):
            np.testing.assert_array_equal(got, [float(fmt(v)) for v in want])
        first = path.read_bytes()
        write_trace_csv(path, groups.values())
        assert path.read_bytes() == first

    def test_header_is_exact(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace_csv(path, [TargetTrace.from_bins(0.5, [1.0], [0.25])])
        assert path.read_text().splitlines()[0] == ",".join(TRACE_HEADER)

    def test_groups_by_rho(self):
        text = "depth_m,intensity_mean,intensity_std,target_rho\n1,0.1,0,0.05\n1,0.5,0,0.9\n2,0.2,0,0.05\n"
        traces = parse_trace_csv(text)
        assert sorted(traces) == [0.05, 0.9]
        assert list(traces[0.05].binned.center_m) == [1.0, 2.0]

    def test_wide_adapter_keeps_per_target_depths(self):
        text = "x_5,mean_5,std_5,x_90,mean_90,std_90\n1.0,0.1,0.01,1.2,0.8,0.02\n2.0,0.12,0.01,,,\n"
        traces = parse_trace_csv(text)
        assert list(traces[0.05].binned.center_m) == [1.0, 2.0]
        assert list(traces[0.9].binned.center_m) == [1.2]
        assert traces[0.9].binned.std[0] == 0.02

    def test_header_only_is_schema_error(self):
        with pytest.raises(ValidationError, match="no data rows"):
            parse_trace_csv(",".join(TRACE_HEADER) + "\n")

    def test_unknown_column(self):
        with pytest.raises(ValidationError, match="unknown column") as err:
            parse_trace_csv("depth_m,intensity_mean,intensity_std,target_rho,colour\n1,0.1,0,0.5,red\n")
        assert err.value.path.endswith(":1")

    @pytest.mark.parametrize(
        "row, message",
        [("1,abc,0,0.5", "not a number"), ("0,0.1,0,0.5", "depth_m"), ("1,1.5,0,0.5", "intensity_mean"),
         ("1,0.1,0,2", "target_rho"), ("1,0.1,0", "fields"), ("1,nan,0,0.5", "finite")],
    )
    def test_malformed_row_names_line(self, row, message):
        text = "depth_m,intensity_mean,intensity_std,target_rho\n1,0.1,0,0.5\n\n" + row + "\n"
        with pytest.raises(ValidationError, match=message) as err:
            parse_trace_csv(text, "trace.csv")
        assert err.value.path == "trace.csv:4"


# --------------------------------------------------------------------------
# frames


class TestPgm:
    @pytest.mark.parametrize("bit_depth", [8, 10, 12, 16])
    def test_round_trip(self, tmp_path, bit_depth):
        rng = np.random.default_rng(bit_depth)
        px = rng.integers(0, 2**bit_depth, size=(5, 7), dtype=np.uint16)
        path = tmp_path / "f.pgm"
        write_pgm(path, FrameBuffer(7, 5, bit_depth, px))
        back = read_pgm(path)
        assert (back.width, back.height, back.bit_depth) == (7, 5, bit_depth)
        np.testing.assert_array_equal(back.pixels, px)

    def test_big_endian_samples(self):
        data = pgm_bytes(FrameBuffer(2, 1, 12, np.array([[0x0102, 0x0FFF]], dtype=np.uint16)))
        assert data == b"P5\n2 1\n4095\n\x01\x02\x0f\xff"

    def test_rejects_other_formats(self, tmp_path):
        path = tmp_path / "f.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(ValidationError):
            read_pgm(path)


# --------------------------------------------------------------------------
# configuration


class TestConfig:
    def test_defaults_are_the_chamber_grid(self):
        cfg = load_config(None)
        assert len(cfg.scenarios) == 1 and len(cfg.sensors) == 2 and [t.rho for t in cfg.targets] == [0.05, 0.5, 0.9]
        assert [f.visibility_m for f in cfg.fog] == [15, 25, 35, 55] * 2

    def test_shipped_config_matches_defaults(self):
        shipped = load_config(Path(__file__).parents[1] / "configs" / "chamber_default.toml")
        assert shipped.to_dict() == ExperimentConfig().validate().to_dict()
        assert shipped.out == "fogbench_run"

    @pytest.mark.parametrize(
        "data, path",
        [
            ({"sensors": [{"kind": "standard"}, {"kind": "gated", "gating": {"t_gate_ns": -1}}]}, "sensors[1].gating"),
            ({"sensors": [{"kind": "lidar"}]}, "sensors[0].kind"),
            ({"fog": {"visibility_ranges_m": [[30, 20]]}}, "fog.visibility_ranges_m[0]"),
            ({"fog": {"types": ["haze"]}}, "fog.types[0]"),
            ({"seed": -1}, "seed"),
            ({"seed": 2**64}, "seed"),
            ({"step_m": 0}, "step_m"),
            ({"targets": [0.5, 1.5]}, "targets[1]"),
            ({"colour": "red"}, "colour"),
            ({"sensors": []}, "sensors"),
        ],
    )
    def test_errors_carry_a_field_path(self, data, path):
        with pytest.raises(ValidationError) as err:
            config_from_dict(data)
        assert err.value.path is not None and err.value.path.startswith(path)

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = [")
        with pytest.raises(ValidationError):
            load_config(path)

    def test_flags_override_config(self, small_config, tmp_path):
        args = cli.build_parser().parse_args(["simulate", "--config", str(small_config), "--seed", "99", "--step", "0.2"])
        cfg = cli.resolve_config(args)
        assert cfg.seed == 99 and cfg.step_m == 0.2 and cfg.frames == 3

    def test_out_precedence(self, monkeypatch, tmp_path):
        parser = cli.build_parser()
        cfg = ExperimentConfig(out=str(tmp_path / "from_config"))
        default = Path("default")
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "from_env"))
        flag = parser.parse_args(["simulate", "--out", str(tmp_path / "from_flag")])
        plain = parser.parse_args(["simulate"])
        assert cli.resolve_out(flag, cfg, default) == tmp_path / "from_flag"
        assert cli.resolve_out(plain, cfg, default) == tmp_path / "from_config"
        assert cli.resolve_out(plain, ExperimentConfig(), default) == tmp_path / "from_env"
        monkeypatch.delenv(cli.ENV_OUT)
        assert cli.resolve_out(plain, ExperimentConfig(), default) == default


# --------------------------------------------------------------------------
# simulate


class TestSimulate:
    def test_cardinality(self, small_run):
        manifest = read_manifest(small_run)
        assert len(manifest["jobs"]) == 2
        assert len(list((small_run / "traces").glob("*.csv"))) == 6
        assert sum(len(j["traces"]) for j in manifest["jobs"]) == 6
        assert sorted(manifest["outputs"]) == sorted(
            str(p.relative_to(small_run)) for p in small_run.rglob("*") if p.is_file() and p.name != "manifest.json"
        )

    def test_manifest_hashes_match(self, small_run):
        manifest = read_manifest(small_run)
        for rel, digest in manifest["outputs"].items():
            assert hashlib.sha256((small_run / rel).read_bytes()).hexdigest() == digest

    def test_rerun_is_byte_identical(self, small_run, small_config, tmp_path):
        again = tmp_path / "again"
        assert cli.main(["simulate", "--config", str(small_config), "--out", str(again), "--jobs", "2"]) == 0
        assert tree_digest(again) == tree_digest(small_run)

    def test_seed_changes_outputs(self, small_run, small_config, tmp_path):
        other = tmp_path / "other"
        assert cli.main(["simulate", "--config", str(small_config), "--out", str(other), "--seed", "8"]) == 0
        assert tree_digest(other) != tree_digest(small_run)

    def test_env_fallback(self, small_config, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env_out"))
        assert cli.main(["simulate", "--config", str(small_config)]) == 0
        assert (tmp_path / "env_out" / "manifest.json").is_file()

    def test_invalid_config_exits_1(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('[[sensors]]\nkind = "sonar"\n')
        assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "x")]) == 1
        assert "sensors[0].kind" in capsys.readouterr().err

    def test_bad_seed_flag_exits_1(self):
        with pytest.raises(SystemExit) as err:
            cli.main(["simulate", "--seed", "-3"])
        assert err.value.code == 1

    def test_unwritable_out_exits_2(self, small_config, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("not a directory")
        assert cli.main(["simulate", "--config", str(small_config), "--out", str(blocker / "run")]) == 2


# --------------------------------------------------------------------------
# fit


class TestFitCommand:
    def test_noise_free_round_trip(self, tmp_path):
        truth = noise_free_csv(tmp_path / "synthetic.csv")
        assert cli.main(["fit", str(tmp_path / "synthetic.csv"), "--visibility", "50", "--out", str(tmp_path)]) == 0
        rows = read_csv_dicts(tmp_path / "fit_results.csv")
        assert len(rows) == 1
        row = rows[0]
        assert row["source"] == "synthetic.csv" and row["converged"] == "true"
        for key, want in zip(("i0", "i_inf", "d0_m", "beta_a_per_m"), truth):
            assert float(row[key]) == pytest.approx(want, rel=1e-6)
        curves = read_csv_dicts(tmp_path / "fit_curves.csv")
        assert float(curves[0]["depth_m"]) == 1.0 and float(curves[-1]["depth_m"]) == 99.0

    def test_one_row_per_rho_group(self, tmp_path):
        noise_free_csv(tmp_path / "t.csv", rhos=(0.05, 0.5, 0.9))
        assert cli.main(["fit", str(tmp_path / "t.csv"), "--visibility", "50", "--out", str(tmp_path)]) == 0
        assert [float(r["target_rho"]) for r in read_csv_dicts(tmp_path / "fit_results.csv")] == [0.05, 0.5, 0.9]

    def test_header_only_exits_1(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text(",".join(TRACE_HEADER) + "\n")
        assert cli.main(["fit", str(path), "--visibility", "30", "--out", str(tmp_path)]) == 1
        assert "no data rows" in capsys.readouterr().err

    def test_malformed_row_exit_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text(",".join(TRACE_HEADER) + "\n1,0.2,0,0.5\n2,x,0,0.5\n")
        assert cli.main(["fit", str(path), "--visibility", "30", "--out", str(tmp_path)]) == 1
        assert "bad.csv:3" in capsys.readouterr().err

    def test_visibility_required_for_csv(self, tmp_path):
        noise_free_csv(tmp_path / "t.csv")
        assert cli.main(["fit", str(tmp_path / "t.csv"), "--out", str(tmp_path)]) == 1

    def test_missing_file_exits_2(self, tmp_path):
        assert cli.main(["fit", str(tmp_path / "nope.csv"), "--visibility", "30"]) == 2

    def test_strict_non_convergence_exits_3(self, tmp_path, monkeypatch):
        from fogbench import harness
        from fogbench.fitting import FitProblem, fit_adapted_model

        noise_free_csv(tmp_path / "t.csv")
        # an iteration cap of one forces a non-converged result
        monkeypatch.setattr(harness, "fit_trace", lambda t, b: fit_adapted_model(FitProblem(t, b), max_iterations=1))
        args = ["fit", str(tmp_path / "t.csv"), "--visibility", "50", "--out", str(tmp_path)]
        assert cli.main(args) == 0
        assert read_csv_dicts(tmp_path / "fit_results.csv")[0]["converged"] == "false"
        assert cli.main([*args, "--strict"]) == 3

    def test_run_directory(self, small_run, tmp_path):
        assert cli.main(["fit", str(small_run), "--out", str(tmp_path)]) == 0
        rows = read_csv_dicts(tmp_path / "fit_results.csv")
        assert len(rows) == 3 and all(r["source"].endswith("_standard") for r in rows)
        assert all(float(r["visibility_m"]) == 25.0 for r in rows)


# --------------------------------------------------------------------------
# metrics


class TestMetricsCommand:
    def test_constant_frames(self, tmp_path):
        paths = []
        for k in range(3):
            p = tmp_path / f"f{k}.pgm"
            write_pgm(p, FrameBuffer(4, 4, 12, np.full((4, 4), 1000, dtype=np.uint16)))
            paths.append(str(p))
        assert cli.main(["metrics", *paths, "--out", str(tmp_path)]) == 0
        row = read_csv_dicts(tmp_path / "entropy.csv")[0]
        assert float(row["entropy_mean"]) == 0.0 and float(row["entropy_std"]) == 0.0 and row["frames"] == "3"

    def test_identical_traces(self, tmp_path):
        path = tmp_path / "flat.csv"
        write_trace_csv(path, [TargetTrace.from_bins(r, np.arange(1.0, 20.0), np.full(19, 0.3)) for r in (0.05, 0.5, 0.9)])
        assert cli.main(["metrics", str(path), "--out", str(tmp_path)]) == 0
        row = read_csv_dicts(tmp_path / "contrast.csv")[0]
        assert float(row["michelson"]) == 0.0 and float(row["rms"]) == 0.0
        assert len(read_csv_dicts(tmp_path / "peaks.csv")) == 3

    def test_missing_rho_triple_exits_1(self, tmp_path):
        path = tmp_path / "two.csv"
        write_trace_csv(path, [TargetTrace.from_bins(r, np.arange(1.0, 20.0), np.full(19, 0.3)) for r in (0.05, 0.9)])
        assert cli.main(["metrics", str(path), "--out", str(tmp_path)]) == 1

    def test_bad_window_exits_1(self, small_run):
        assert cli.main(["metrics", str(small_run), "--window", "10", "5"]) == 1

    def test_run_directory_entropy_monotone(self, tmp_path):
        cfg = tmp_path / "grid.toml"
        cfg.write_text(
            'frames = 4\nrender_scale = 0.125\n[fog]\ntypes = ["radiation"]\nvisibilities_m = [20, 30, 40, 60]\n'
            '[[sensors]]\nkind = "standard"\n'
        )
        run = tmp_path / "run"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(run)]) == 0
        assert cli.main(["metrics", str(run)]) == 0
        rows = read_csv_dicts(run / "entropy.csv")
        by_v = sorted((float(r["visibility_m"]), float(r["entropy_mean"])) for r in rows)
        assert [v for v, _ in by_v] == [20, 30, 40, 60]
        values = [h for _, h in by_v]
        assert all(b >= a for a, b in zip(values, values[1:]))
        with open(run / "contrast.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 4
