import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import coupledrom as cr
from coupledrom.cli import main
from coupledrom.errors import ConfigError
from coupledrom.experiments import config_from_dict
from coupledrom.library import heat_laplace_pair, steady_pair_2d
from coupledrom.problems import problem_from_dict, problem_to_dict
from coupledrom.storage import (
    fmt_float,
    hash_bundle,
    load_bundle,
    read_matrix,
    write_bundle,
    write_matrix,
)


class TestMatrixFile:
    @given(
        rows=st.integers(1, 7),
        cols=st.integers(1, 7),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=30, deadline=None)
    def test_round_trip_bit_identical(self, tmp_path_factory, rows, cols, seed):
        path = tmp_path_factory.mktemp("mat") / "m.rombin"
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((rows, cols)) * 10.0 ** rng.integers(-200, 200)
        write_matrix(path, X)
        Y = read_matrix(path)
        assert X.shape == Y.shape
        assert X.tobytes() == Y.tobytes()

    def test_special_values_survive(self, tmp_path):
        X = np.array([[0.0, -0.0], [np.inf, -np.inf], [np.nan, 1e-308]])
        write_matrix(tmp_path / "s.rombin", X)
        Y = read_matrix(tmp_path / "s.rombin")
        assert X.tobytes() == Y.tobytes()

    def test_header_layout(self, tmp_path):
        path = tmp_path / "h.rombin"
        write_matrix(path, np.zeros((3, 2)))
        raw = path.read_bytes()
        assert raw[:4] == b"ROMB"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:16], "little") == 3
        assert int.from_bytes(raw[16:24], "little") == 2
        assert len(raw) == 24 + 8 * 6

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.rombin"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ConfigError):
            read_matrix(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.rombin"
        write_matrix(path, np.ones((2, 2)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ConfigError):
            read_matrix(path)


@given(st.floats(allow_nan=False, allow_infinity=False))
@settings(max_examples=200, deadline=None)
def test_fmt_float_round_trips(x):
    assert float(fmt_float(x)) == x


def test_problem_spec_json_round_trip():
    for spec in (steady_pair_2d(), heat_laplace_pair()):
        data = json.loads(json.dumps(problem_to_dict(spec)))
        again = problem_from_dict(data)
        assert problem_to_dict(again) == problem_to_dict(spec)


@pytest.fixture(scope="module")
def artifacts():
    spec = steady_pair_2d(master_subdivisions=(6, 6), slave_subdivisions=(3, 3))
    training = cr.run_training(spec, 8, seed=4)
    return cr.build_artifacts(training, (1e-4, 1e-4, 1e-4))


class TestBundle:
    def test_write_load_round_trip(self, tmp_path, artifacts):
        write_bundle(tmp_path / "b", artifacts, timings={"offline_s": 1.0})
        loaded = load_bundle(tmp_path / "b")
        assert np.array_equal(loaded.master.basis.V, artifacts.master.basis.V)
        assert np.array_equal(loaded.slave.basis.V, artifacts.slave.basis.V)
        assert np.array_equal(loaded.reducer.full_transfer, artifacts.reducer.full_transfer)
        assert np.array_equal(loaded.reducer.deim.indices, artifacts.reducer.deim.indices)
        assert loaded.tolerances == artifacts.tolerances
        # loaded artifacts answer queries identically
        a = cr.online_steady(artifacts, [1.0, 1.0], [])
        b = cr.online_steady(loaded, [1.0, 1.0], [])
        assert np.allclose(a.slave_solution, b.slave_solution, atol=1e-14)

    def test_hash_ignores_timings(self, tmp_path, artifacts):
        write_bundle(tmp_path / "b1", artifacts, timings={"offline_s": 1.0})
        write_bundle(tmp_path / "b2", artifacts, timings={"offline_s": 99.0})
        assert hash_bundle(tmp_path / "b1") == hash_bundle(tmp_path / "b2")

    def test_double_offline_bit_identical(self, tmp_path):
        spec = steady_pair_2d(master_subdivisions=(4, 4), slave_subdivisions=(2, 2))
        for name in ("r1", "r2"):
            art = cr.offline(spec, n_train=5, tolerances=(1e-3, 1e-3, 1e-3), seed=21)
            write_bundle(tmp_path / name, art)
        assert hash_bundle(tmp_path / "r1") == hash_bundle(tmp_path / "r2")

    def test_missing_manifest_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ConfigError):
            load_bundle(tmp_path / "empty")


def make_config(tmp_path, grid=False, unsteady=False, n_train=6, n_test=3):
    if unsteady:
        problem = heat_laplace_pair(
            master_subdivisions=(4, 4, 4), slave_subdivisions=(2, 2, 2), n_steps=10
        )
    else:
        problem = steady_pair_2d(master_subdivisions=(6, 6), slave_subdivisions=(3, 3))
    tols = [1e-2, 1e-4] if grid else 1e-4
    config = {
        "problem": problem_to_dict(problem),
        "training": {
            "n_train": n_train,
            "seed": 7,
            "tolerances": {"master": tols, "slave": tols, "interface": tols},
        },
        "testing": {"n_test": n_test, "seed": 77},
        "outputs": {"directory": str(tmp_path / "out")},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=1))
    return path


class TestCli:
    def test_offline_then_online(self, tmp_path, capsys):
        config = make_config(tmp_path)
        assert main(["offline", "--config", str(config)]) == 0
        bundles = sorted((tmp_path / "out").glob("bundle_*"))
        assert len(bundles) == 1
        capsys.readouterr()
        assert main(
            [
                "online",
                "--bundle",
                str(bundles[0]),
                "--mu1",
                "1.5,2.0",
                "--compare-fom",
            ]
        ) == 0
        out = capsys.readouterr().out
        payload = json.loads(out[out.index("{"):])
        for key in ("online_s", "fom_s", "speedup", "rel_error", "bound", "bound_valid"):
            assert key in payload
        assert payload["bound_valid"] is True
        assert (bundles[0] / "online").exists()

    def test_online_solution_file_readable(self, tmp_path, capsys):
        config = make_config(tmp_path)
        main(["offline", "--config", str(config)])
        bundle = sorted((tmp_path / "out").glob("bundle_*"))[0]
        capsys.readouterr()
        main(["online", "--bundle", str(bundle), "--mu1", "1.0,1.0"])
        out = capsys.readouterr().out
        payload = json.loads(out[out.index("{"):])
        solution = read_matrix(bundle / "online" / payload["solution_file"])
        assert solution.shape[0] > 0

    def test_out_of_range_query_warns_but_succeeds(self, tmp_path, capsys):
        config = make_config(tmp_path)
        main(["offline", "--config", str(config)])
        bundle = sorted((tmp_path / "out").glob("bundle_*"))[0]
        capsys.readouterr()
        assert main(["online", "--bundle", str(bundle), "--mu1", "40.0,1.0"]) == 0
        out = capsys.readouterr().out
        payload = json.loads(out[out.index("{"):])
        assert payload["warnings"]

    def test_sweep_csv(self, tmp_path):
        config = make_config(tmp_path, grid=True)
        assert main(["sweep", "--config", str(config)]) == 0
        csv_path = tmp_path / "out" / "sweep.csv"
        lines = csv_path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header == [
            "eps_master",
            "eps_interface",
            "eps_slave",
            "mean_error",
            "mean_bound",
            "online_s",
        ]
        rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
        assert len(rows) == 8
        # floats round-trip through the 17-digit format
        for row in rows:
            for key in header:
                assert fmt_float(float(row[key])) == row[key]
        # componentwise-tighter tolerances never make the error much worse
        parsed = [
            (
                float(r["eps_master"]),
                float(r["eps_interface"]),
                float(r["eps_slave"]),
                float(r["mean_error"]),
            )
            for r in rows
        ]
        for a in parsed:
            for b in parsed:
                if a[0] <= b[0] and a[1] <= b[1] and a[2] <= b[2]:
                    assert a[3] <= 2.0 * b[3]

    def test_sweep_single_point(self, tmp_path):
        config = make_config(tmp_path)
        assert main(["sweep", "--config", str(config)]) == 0
        lines = (tmp_path / "out" / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_fom_verb(self, tmp_path, capsys):
        config = make_config(tmp_path)
        assert main(["fom", "--config", str(config), "--mu1", "1.0,1.0"]) == 0
        assert (tmp_path / "out" / "fom_slave.rombin").exists()

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"problem\": {}}")
        assert main(["offline", "--config", str(bad)]) == 2
        assert main(["offline", "--config", str(tmp_path / "missing.json")]) == 2

    def test_invalid_tolerance_exit_code(self, tmp_path):
        config = json.loads(make_config(tmp_path).read_text())
        config["training"]["tolerances"]["master"] = 2.0
        path = tmp_path / "bad_tol.json"
        path.write_text(json.dumps(config))
        assert main(["offline", "--config", str(path)]) == 2

    def test_numeric_error_exit_code(self, tmp_path):
        config = json.loads(make_config(tmp_path).read_text())
        config["problem"]["master"]["forcing"] = []
        path = tmp_path / "zero.json"
        path.write_text(json.dumps(config))
        assert main(["offline", "--config", str(path)]) == 3

    def test_console_entry_point(self, tmp_path):
        config = make_config(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "coupledrom.cli", "offline", "--config", str(config)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "sha256" in proc.stdout

    def test_unsteady_roundtrip(self, tmp_path, capsys):
        config = make_config(tmp_path, unsteady=True)
        assert main(["offline", "--config", str(config)]) == 0
        bundle = sorted((tmp_path / "out").glob("bundle_*"))[0]
        capsys.readouterr()
        assert main(
            ["online", "--bundle", str(bundle), "--mu1", "2.0", "--compare-fom"]
        ) == 0
        out = capsys.readouterr().out
        payload = json.loads(out[out.index("{"):])
        assert payload["bound_valid"] is True
        solution = read_matrix(bundle / "online" / payload["solution_file"])
        assert solution.shape[1] == 11  # states as columns, n_steps + 1


def test_config_validation_field_paths():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"problem": {"master": {}, "slave": {}}})
    assert "master" in str(err.value)


def test_unwritable_output_directory_is_config_error(tmp_path):
    config = json.loads(make_config(tmp_path).read_text())
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory")
    config["outputs"]["directory"] = str(blocker / "nested")
    path = tmp_path / "bad_out.json"
    path.write_text(json.dumps(config))
    assert main(["offline", "--config", str(path)]) == 2


def test_offline_tolerance_grid_emits_bundle_per_triple(tmp_path, capsys):
    config = make_config(tmp_path, grid=True)
    assert main(["offline", "--config", str(config)]) == 0
    bundles = sorted((tmp_path / "out").glob("bundle_*"))
    assert len(bundles) == 8  # 2x2x2 grid
    for b in bundles:
        assert (b / "manifest.json").exists()


def test_rom_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("ROM_THREADS", "2")
    config = make_config(tmp_path)
    assert main(["offline", "--config", str(config)]) == 0
    assert sorted((tmp_path / "out").glob("bundle_*"))


def test_partial_write_cleanup_on_failure(tmp_path, artifacts, monkeypatch):
    import coupledrom.storage as storage

    calls = {"n": 0}
    original = storage.write_matrix

    def failing(path, array):
        calls["n"] += 1
        if calls["n"] > 3:
            raise OSError("disk full")
        return original(path, array)

    monkeypatch.setattr(storage, "write_matrix", failing)
    target = tmp_path / "bundle"
    with pytest.raises(OSError):
        write_bundle(target, artifacts)
    assert not target.exists()  # files written before the failure were removed
