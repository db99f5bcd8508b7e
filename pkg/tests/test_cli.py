import json

import pytest

from simiep.checks import desk_config
from simiep.cli import main
from simiep.io import file_digest, read_csv

SMALL = dict(Nx=3, Ny=3, L=2, K=2, M=3, U=8, optimizer={"T": 3, "descent": {"max_inner": 10}},
             sweep={"frames": 2, "strategies": ["rom", "random_phase", "zf"]})


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(desk_config(**SMALL, out_dir=str(tmp_path / "out")).model_dump_json())
    return path


def _run(cfg_file, *args):
    return main([args[0], "--config", str(cfg_file), *args[1:]])


def test_run_outputs(cfg_file, tmp_path):
    assert _run(cfg_file, "run") == 0
    out = tmp_path / "out"
    summary = json.loads((out / "run_summary.json").read_text())
    assert len(summary["selected_antennas"]) == 2
    assert all(1 <= a <= 3 for a in summary["selected_antennas"])
    assert sum(summary["power_fraction"]) == pytest.approx(1)
    assert summary["final_min_margin"] >= summary["initial_min_margin"]
    meta, rows = read_csv(out / "run_history.csv")
    assert meta["master_seed"] == "0" and "config_hash" in meta
    assert {r["block"] for r in rows} == {"as", "phases", "pa"}
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["output_digests"]["history"] == file_digest(out / "run_history.csv")


def test_run_without_as_and_pa(cfg_file, tmp_path):
    assert _run(cfg_file, "run", "--no-as", "--no-pa") == 0
    summary = json.loads((tmp_path / "out" / "run_summary.json").read_text())
    assert summary["selected_antennas"] == [1, 2]
    assert summary["power_fraction"] == pytest.approx([0.5, 0.5])


def test_sweep_rerun_identical(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert _run(cfg_file, "sweep") == 0
    first = json.loads((out / "sweep_manifest.json").read_text())
    assert _run(cfg_file, "sweep", "--threads", "2") == 0
    second = json.loads((out / "sweep_manifest.json").read_text())
    assert first["content_hash"] == second["content_hash"]
    _, rows = read_csv(out / "sweep.csv")
    assert len(rows) == 21
    assert _run(cfg_file, "sweep", "--seed", "9") == 0
    third = json.loads((out / "sweep_manifest.json").read_text())
    assert third["content_hash"] != first["content_hash"]


def test_trace_heatmap_constellation(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert _run(cfg_file, "trace") == 0
    _, rows = read_csv(out / "trace.csv")
    margins = [float(r["min_margin"]) for r in rows]
    assert all(b >= a - 1e-12 for a, b in zip(margins, margins[1:]))
    _, layers = read_csv(out / "trace_layers.csv")
    assert {r["layer"] for r in layers} <= {"1", "2"}
    for strategy in ("random_phase", "rom", "rom_ao"):
        assert _run(cfg_file, "heatmap", "--strategy", strategy) == 0
        _, hm = read_csv(out / "heatmap.csv")
        assert len(hm) == 4
    assert _run(cfg_file, "constellation", "--strategy", "zf") == 0
    _, cons = read_csv(out / "constellation.csv")
    assert len(cons) == 2 * 8


def test_exit_codes(tmp_path, cfg_file):
    assert _run(cfg_file, "run", "--threads", "0") == 1
    with pytest.raises(SystemExit) as err:
        main(["nope"])
    assert err.value.code == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"K": 9, "M": 2}')
    assert main(["run", "--config", str(bad)]) == 2
    assert _run(cfg_file, "heatmap", "--strategy", "zf") == 2
    blocked = tmp_path / "file"
    blocked.write_text("")
    assert _run(cfg_file, "run", "--out-dir", str(blocked / "sub")) == 1
