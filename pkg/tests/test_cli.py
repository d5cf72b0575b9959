"""CLI tests: config parsing and validation, end-to-end runs with
byte-identical re-execution, error exit codes, sweeps and preset listing."""

import hashlib
import json
from pathlib import Path

import pytest

from stefanlab import cli


BASE_CONFIG = """\
[scenario]
preset = stefan-1d-p2-twophase
nodes = 41
t_end = 0.02

[modulus]
r0 = 0.2
center = 0.5

[checks]
run = conservation, weakform, caccioppoli, truncation, modulus

[output]
directory = {outdir}
"""


def _write(tmp_path, text, name="config.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestValidate:
    def test_valid_config(self, tmp_path):
        path = _write(tmp_path, BASE_CONFIG.format(outdir=tmp_path / "out"))
        assert cli.main(["validate", str(path)]) == 0

    def test_missing_required_field_named(self, tmp_path, capsys):
        path = _write(tmp_path, "[scenario]\nnodes = 41\nt_end = 0.01\ndt = 1e-3\n")
        assert cli.main(["validate", str(path)]) == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert record["field"] == "scenario.p"

    def test_unknown_key_rejected(self, tmp_path, capsys):
        path = _write(tmp_path, "[scenario]\npreset = constant\nwibble = 1\n")
        assert cli.main(["validate", str(path)]) == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert record["field"] == "scenario.wibble"

    def test_unknown_section_rejected(self, tmp_path):
        path = _write(tmp_path, "[scenario]\npreset = constant\n\n[bogus]\nx = 1\n")
        assert cli.main(["validate", str(path)]) == 2

    def test_unknown_check_rejected(self, tmp_path):
        path = _write(tmp_path,
                      "[scenario]\npreset = constant\n\n[checks]\nrun = sorcery\n")
        assert cli.main(["validate", str(path)]) == 2

    def test_explicit_scenario_keys(self, tmp_path):
        text = """\
[scenario]
dim = 1
nodes = 31
p = 3.0
latent_heat = 0.8
jump_location = 0.7
mollify_eps = 0.05
beta = tanh:0.4,0.5
field = anisotropic:1.0
initial = bump
initial_params = base=0.2, amplitude=0.5, width=0.3
boundary = zero-flux
t_end = 0.01
dt = 1e-3
"""
        path = _write(tmp_path, text)
        assert cli.main(["validate", str(path)]) == 0


class TestRun:
    def test_constant_preset_all_pass(self, tmp_path):
        text = """\
[scenario]
preset = constant

[checks]
run = conservation, truncation

[output]
directory = {out}
""".format(out=tmp_path / "out")
        path = _write(tmp_path, text)
        assert cli.main(["run", str(path)]) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["all_pass"]
        assert set(summary["checks"]) == {"conservation", "truncation"}
        for entry in summary["checks"].values():
            assert entry["pass"]
            assert entry["label"]

    def test_full_pipeline_and_rerun_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        path = _write(tmp_path, BASE_CONFIG.format(outdir=out1))
        assert cli.main(["run", str(path), "--output", str(out1)]) == 0
        assert cli.main(["run", str(path), "--output", str(out2)]) == 0
        assert _tree_hash(out1) == _tree_hash(out2)
        summary = json.loads((out1 / "summary.json").read_text())
        assert summary["all_pass"]
        assert (out1 / "resolved_config.ini").exists()
        assert (out1 / "ledger.json").exists()
        assert (out1 / "oscillation.csv").exists()
        assert summary["artifact_hashes"]
        # recorded hashes match the files on disk
        for rel, digest in summary["artifact_hashes"].items():
            data = (out1 / rel).read_bytes()
            assert hashlib.sha256(data).hexdigest() == digest

    def test_snapshot_sidecars(self, tmp_path):
        out = tmp_path / "out"
        path = _write(tmp_path, BASE_CONFIG.format(outdir=out))
        cli.main(["run", str(path), "--output", str(out)])
        bins = sorted((out / "snapshots").glob("*.bin"))
        sides = sorted((out / "snapshots").glob("*.json"))
        assert bins and len(bins) == len(sides)
        side = json.loads(sides[0].read_text())
        assert side["dtype"] == "<f8" and side["order"] == "row-major"
        import numpy as np

        data = np.frombuffer(bins[0].read_bytes()).reshape(side["shape"])
        assert data.shape == (41,)

    def test_config_error_exit_and_record(self, tmp_path):
        path = _write(tmp_path, "[scenario]\nnodes = 41\n")
        out = tmp_path / "err"
        assert cli.main(["run", str(path), "--output", str(out)]) == 2
        record = json.loads((out / "error.json").read_text())
        assert record["code"] == 2
        assert "scenario" in record["field"]

    def test_solver_failure_exit_three(self, tmp_path):
        text = """\
[scenario]
preset = stefan-1d-p2-twophase
nodes = 31
t_end = 0.004
step_rtol = 1e-300

[checks]
run = conservation

[output]
directory = {out}
""".format(out=tmp_path / "out")
        path = _write(tmp_path, text)
        out = tmp_path / "out"
        assert cli.main(["run", str(path), "--output", str(out)]) == 3
        record = json.loads((out / "error.json").read_text())
        assert record["code"] == 3
        assert record["time"] is not None

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUTPUT_ROOT, str(tmp_path / "root"))
        cfg = cli.parse_config(_write(tmp_path, BASE_CONFIG.format(outdir="rel/out")))
        assert str(cfg.output_dir).startswith(str(tmp_path / "root"))


class TestSweep:
    def test_eps_sweep_aggregates(self, tmp_path):
        text = """\
[scenario]
preset = stefan-1d-p2-twophase
nodes = 41
t_end = 0.01

[checks]
run = conservation

[output]
directory = {out}

[sweep]
axis = eps
values = 0.1, 0.05
""".format(out=tmp_path / "out")
        path = _write(tmp_path, text)
        out = tmp_path / "out"
        assert cli.main(["sweep", str(path), "--output", str(out)]) == 0
        agg = (out / "aggregated.csv").read_text().strip().split("\n")
        assert len(agg) == 3  # header + two runs
        assert "conservation.pass" in agg[0]
        assert (out / "run_000_eps-0.1" / "summary.json").exists()
        assert (out / "run_001_eps-0.05" / "summary.json").exists()

    def test_empty_axis_behaves_like_run(self, tmp_path):
        text = """\
[scenario]
preset = constant

[checks]
run = conservation

[output]
directory = {out}
""".format(out=tmp_path / "out")
        path = _write(tmp_path, text)
        out = tmp_path / "out"
        assert cli.main(["sweep", str(path), "--output", str(out)]) == 0
        assert (out / "run_000_single" / "summary.json").exists()
        agg = (out / "aggregated.csv").read_text().strip().split("\n")
        assert len(agg) == 2


class TestPresetsVerb:
    def test_listing(self, capsys):
        assert cli.main(["presets"]) == 0
        text = capsys.readouterr().out
        assert "stefan-1d-p2-twophase" in text
        assert "constant" in text
