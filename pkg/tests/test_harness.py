import json
import subprocess
import sys
from pathlib import Path

import pytest

from sensornet.cli import main
from sensornet.harness import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, ConfigError, load_config, run

GOLDEN = Path(__file__).parent / "data" / "golden"
WINDOW = [1600000000, 1602592000]
CORPUS = {"edges": str(GOLDEN / "edges.tsv"), "events": str(GOLDEN / "events.tsv"), "window": WINDOW}

CONFIGS = {
    "fig1": {"generate": {"model": "ba", "n": 600, "m": 3}, "replicates": 3, "gammas": [0.05, 1.0],
             "gamma": 0.05},
    "fig2a": {"generate": {"model": "ba", "n": 600, "m": 3}, "sizes": [20, 60], "replicates": 6,
              "sir": {"lambda": 0.3, "gamma_rec": 0.02, "n_cascades": 3, "t_end": 300}},
    "fig2bc": {**CORPUS, "sizes": [6, 10], "replicates": 5,
               "per_tag": {"size": 6, "replicates": 4, "min_samples": 1}},
    "fig3": {**CORPUS, "tags": ["wave", "noise"], "size": 6, "replicates": 10, "null_replicates": 30},
    "fig4": {**CORPUS, "size": 20, "betweenness_cap": 1000},
    "samplemath": {"N": 5000, "S": 200, "x_s": 3, "n_s": 4, "X_grid": [10, 50, 100, 500, 1000]},
}


def _write(tmp_path, kind, **extra):
    path = tmp_path / f"{kind}.json"
    path.write_text(json.dumps({"kind": kind, "seed": 42, **CONFIGS[kind], **extra}))
    return path


def _contents(out: Path) -> dict:
    return {f.name: f.read_bytes() for f in sorted(out.iterdir()) if f.name != "manifest.json"}


@pytest.mark.parametrize("kind", sorted(CONFIGS))
def test_kind_runs_and_is_byte_identical(tmp_path, kind):
    cfg_path = _write(tmp_path, kind)
    outs = []
    for i, threads in enumerate((1, 1, 3)):
        out = tmp_path / f"out{i}"
        assert run(load_config(cfg_path, out=out, threads=threads)) == EXIT_OK
        outs.append(out)
    first = _contents(outs[0])
    assert first, "no data outputs written"
    assert _contents(outs[1]) == first
    assert _contents(outs[2]) == first
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["config"]["kind"] == kind and manifest["config"]["seed"] == 42
    assert sorted(manifest["outputs"]) == sorted(first)
    for info in manifest["inputs"].values():
        assert len(info["sha256"]) == 64
    other = json.loads((outs[2] / "manifest.json").read_text())
    for m in (manifest, other):
        m.pop("wall_time_s")
        m.pop("threads")
    assert manifest == other


def test_seed_changes_outputs(tmp_path):
    cfg_path = _write(tmp_path, "fig2a")
    run(load_config(cfg_path, out=tmp_path / "a"))
    run(load_config(cfg_path, out=tmp_path / "b", seed=43))
    assert _contents(tmp_path / "a") != _contents(tmp_path / "b")


def test_missing_input_exits_2_without_output(tmp_path, capsys):
    cfg_path = _write(tmp_path, "fig3", events=str(tmp_path / "nope.tsv"))
    out = tmp_path / "out"
    assert main(["fig3", "--config", str(cfg_path), "--out", str(out)]) == EXIT_INVALID
    assert not out.exists()
    assert "not found" in capsys.readouterr().err


def test_impossible_design_exits_2(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "samplemath", "seed": 1, "N": 10, "S": 2}))
    assert main(["samplemath", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "x_s" in capsys.readouterr().err


def test_missing_seed_is_invalid(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "samplemath", "N": 10, "S": 2}))
    with pytest.raises(ConfigError, match="seed"):
        load_config(path, out=tmp_path / "o")
    assert main(["samplemath", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert main(["samplemath", "--config", str(path), "--out", str(tmp_path / "o"), "--seed", "1"]) == EXIT_INVALID
    path.write_text(json.dumps({"kind": "samplemath", "N": 10, "S": 2, "x_s": 1, "n_s": 2}))
    assert main(["samplemath", "--config", str(path), "--out", str(tmp_path / "o"), "--seed", "1"]) == EXIT_OK


def test_kind_mismatch_and_unknown_generator(tmp_path):
    cfg_path = _write(tmp_path, "fig1")
    with pytest.raises(ConfigError):
        load_config(cfg_path, kind="fig2a", out=tmp_path / "o")
    bad = _write(tmp_path, "fig1", generate={"model": "lattice"})
    assert main(["fig1", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert not (tmp_path / "o").exists()


def test_runtime_failure_exits_1_without_partial_output(tmp_path):
    # samples larger than the graph cannot be drawn
    cfg_path = _write(tmp_path, "fig2a", sizes=[5000])
    out = tmp_path / "out"
    assert main(["fig2a", "--config", str(cfg_path), "--out", str(out)]) == EXIT_RUNTIME
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".sensornet-")]


def test_thread_precedence(tmp_path, monkeypatch):
    cfg_path = _write(tmp_path, "samplemath", threads=2)
    assert load_config(cfg_path, out=tmp_path / "o").threads == 2
    monkeypatch.setenv("SENSORNET_THREADS", "3")
    assert load_config(cfg_path, out=tmp_path / "o").threads == 3
    assert load_config(cfg_path, out=tmp_path / "o", threads=4).threads == 4


def test_console_module_entry_point(tmp_path):
    cfg_path = _write(tmp_path, "samplemath")
    out = tmp_path / "cli"
    proc = subprocess.run([sys.executable, "-m", "sensornet", "samplemath", "--config", str(cfg_path),
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    lines = (out / "detection_s1.csv").read_text().splitlines()
    assert lines[0] == "X_alpha,probability" and len(lines) == 6
