"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 1-8 are read from a single ``check --full`` run at one worker;
criterion 9 reruns ``check --full`` and a sweep at eight workers and
compares content digests.
"""

import json
import time

import pytest

from simiep.checks import desk_config
from simiep.cli import main
from simiep.io import file_digest, read_csv

pytestmark = pytest.mark.slow

BUDGET_S = {1: 10, 2: 30, 3: 5, 4: 30, 5: 5, 6: 1, 7: 60, 8: 15 * 60}
SWEEP = {"frames": 20, "strategies": ["rom", "random_phase", "quantized2", "quantized4", "zf", "rom_ao"]}


def _check(out, threads):
    t0 = time.perf_counter()
    code = main(["check", "--full", "--threads", str(threads), "--out-dir", str(out)])
    return code, time.perf_counter() - t0


def _sweep(cfg_path, out, threads):
    t0 = time.perf_counter()
    code = main(["sweep", "--config", str(cfg_path), "--threads", str(threads), "--out-dir", str(out)])
    manifest = json.loads((out / "sweep_manifest.json").read_text())
    return code, manifest["content_hash"], time.perf_counter() - t0


@pytest.fixture(scope="module")
def full_check(tmp_path_factory):
    out = tmp_path_factory.mktemp("check1")
    code, seconds = _check(out, 1)
    _, rows = read_csv(out / "check.csv")
    return out, code, rows, seconds


def _criterion(rows, n):
    items = [r for r in rows if int(r["criterion"]) == n]
    assert items, f"no check items for criterion {n}"
    return items


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(full_check, report, n):
    _, _, rows, _ = full_check
    items = _criterion(rows, n)
    # items of one criterion come from one timed call, so the seconds are shared
    seconds = max(float(r["seconds"]) for r in items)
    failed = [r for r in items if r["passed"] != "True"]
    in_time = seconds < BUDGET_S[n]
    ok = not failed and in_time
    detail = "; ".join(f"{r['name']}: {r['detail']}" for r in (failed or items))
    report(f"[{'PASS' if ok else 'FAIL'}] criterion {n} ({seconds:.1f} s, budget {BUDGET_S[n]} s): {detail}")
    assert in_time, f"criterion {n} took {seconds:.1f} s"
    assert not failed, detail


def test_criterion_9(full_check, report, tmp_path_factory):
    out1, code1, _, _ = full_check
    out8 = tmp_path_factory.mktemp("check8")
    cfg_path = tmp_path_factory.mktemp("cfg") / "sweep.json"
    cfg_path.write_text(desk_config(L=3, sweep=SWEEP).model_dump_json())

    code8, check_s = _check(out8, 8)
    same_check = file_digest(out1 / "check.csv") == file_digest(out8 / "check.csv")
    s1, hash1, _ = _sweep(cfg_path, tmp_path_factory.mktemp("sweep1"), 1)
    s8, hash8, sweep_s = _sweep(cfg_path, tmp_path_factory.mktemp("sweep8"), 8)
    rerun_s = check_s + sweep_s
    ok = same_check and hash1 == hash8 and code1 == code8 and s1 == s8 == 0 and rerun_s < 300
    report(f"[{'PASS' if ok else 'FAIL'}] criterion 9 ({rerun_s:.1f} s rerun at 8 workers, budget 300 s): "
           f"check digest equal {same_check}, exit codes {code1}/{code8}; "
           f"sweep content hash {hash1[:12]} vs {hash8[:12]}")
    assert same_check
    assert hash1 == hash8
    assert code1 == code8 and s1 == s8 == 0
    assert rerun_s < 300
