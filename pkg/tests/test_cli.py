import json

import pytest

from tcoarsen.cli import main
from tcoarsen.coarsen import CoarsenConfig, coarsen
from tcoarsen.printer import print_kernel

from conftest import DATA, GOLDEN, load

FIG3 = str(DATA / "multiplication.cl")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_coarsen_to_stdout(capsys):
    code, out, _ = run(capsys, "coarsen", FIG3, "--degree", "2")
    assert code == 0
    assert out == print_kernel(coarsen(load("multiplication.cl"), CoarsenConfig(
        "consecutive", 2)))


def test_coarsen_gapped_with_manifest(tmp_path, capsys):
    out = tmp_path / "g.cl"
    code, _, _ = run(capsys, "coarsen", FIG3, "--kind", "gapped", "--degree", "2",
                     "--extent", "N", "-o", out)
    assert code == 0
    assert out.read_text() == print_kernel(coarsen(load("multiplication.cl"),
                                                   CoarsenConfig("gapped", 2, "N")))
    manifest = json.loads((tmp_path / "g.cl.manifest.json").read_text())
    assert manifest["schema"] == "tcoarsen-run/1" and manifest["command"] == "coarsen"
    assert manifest["config"]["kind"] == "gapped" and manifest["outputs"] == [str(out)]


def test_degree_one_is_identity(capsys):
    code, out, _ = run(capsys, "coarsen", FIG3, "--degree", "1")
    assert code == 0 and out == print_kernel(load("multiplication.cl"))


def test_attributes(capsys):
    code, out, _ = run(capsys, "coarsen", FIG3, "--degree", "2", "--simd", "4",
                       "--compute-units", "2")
    assert code == 0
    assert "num_simd_work_items(4)" in out and "num_compute_units(2)" in out


@pytest.mark.parametrize("argv", [
    ["--kind", "gapped", "--degree", "2"],
    ["--degree", "0"],
    ["--kind", "gapped", "--degree", "2", "--extent", "M"],
])
def test_coarsen_usage_errors(capsys, argv):
    code, _, err = run(capsys, "coarsen", FIG3, *argv)
    assert code == 2 and err.startswith("tcoarsen: ")


def test_parse_error_diagnostic(tmp_path, capsys):
    bad = tmp_path / "bad.cl"
    bad.write_text("__kernel void k(__global float *a) {\n  a[0] = ;\n}\n")
    code, _, err = run(capsys, "coarsen", bad)
    assert code == 2 and f"{bad}:2:" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["coarsen"])
    assert info.value.code == 2


def test_verify_pass(tmp_path, capsys):
    out = tmp_path / "c.cl"
    run(capsys, "coarsen", FIG3, "--degree", "4", "-o", out)
    verdicts = tmp_path / "v.jsonl"
    code, stdout, _ = run(capsys, "verify", FIG3, out, "--global-size", "64",
                          "--degree", "4", "--trials", "2", "-o", verdicts)
    assert code == 0
    lines = [json.loads(l) for l in verdicts.read_text().splitlines()]
    assert [v["status"] for v in lines] == ["match", "match"]
    assert lines[0]["compared"] == ["in0", "in1", "out0"]
    assert stdout.splitlines() == verdicts.read_text().splitlines()


def test_verify_reports_mismatch(tmp_path, capsys):
    _, good, _ = run(capsys, "coarsen", FIG3, "--degree", "2")
    broken = tmp_path / "broken.cl"
    broken.write_text(good.replace("float r0_1 = in1[gid_1];", "float r0_1 = in1[gid_0];"))
    code, stdout, err = run(capsys, "verify", FIG3, broken, "--global-size", "32",
                            "--degree", "2", "--dump", tmp_path / "dump")
    assert code == 1
    verdict = json.loads(stdout)
    assert verdict["status"] == "mismatch"
    m = verdict["mismatch"]
    assert m["pointer"] == "out0" and m["index"] % 2 == 1
    assert m["original_writer"] == m["index"]
    assert "out0[" in err
    assert (tmp_path / "dump" / "trial0_inputs.json").exists()


@pytest.mark.parametrize("g, degree", [(30, 4), (32, 3)])
def test_verify_precondition(tmp_path, capsys, g, degree):
    out = tmp_path / "c.cl"
    run(capsys, "coarsen", FIG3, "--degree", "4", "-o", out)
    code, _, err = run(capsys, "verify", FIG3, out, "--global-size", g, "--degree", degree)
    assert code == 2 and "degree" in err


def test_verify_extent_precondition(tmp_path, capsys):
    out = tmp_path / "g.cl"
    run(capsys, "coarsen", FIG3, "--kind", "gapped", "--degree", "4", "--extent", "N",
        "-o", out)
    code, _, err = run(capsys, "verify", FIG3, out, "--global-size", "32", "--degree", "4",
                       "--scalar", "N=30")
    assert code == 2 and "N=30" in err


def test_verify_guard_tails(tmp_path, capsys):
    out = tmp_path / "t.cl"
    run(capsys, "coarsen", FIG3, "--kind", "gapped", "--degree", "4", "--extent", "N",
        "--tail-policy", "guard-tails", "-o", out)
    code, _, _ = run(capsys, "verify", FIG3, out, "--global-size", "30", "--degree", "4",
                     "--trials", "2")
    assert code == 0


@pytest.mark.parametrize("golden, argv", [
    ("lsu_baseline.json", []),
    ("lsu_consecutive_c8.json", ["--degree", "8"]),
    ("lsu_gapped_c8.json", ["--kind", "gapped", "--degree", "8", "--extent", "N"]),
])
def test_analyze_goldens(tmp_path, capsys, golden, argv):
    src = tmp_path / "k.cl"
    if argv:
        run(capsys, "coarsen", FIG3, *argv, "-o", src)
    else:
        src = FIG3
    code, out, _ = run(capsys, "analyze", src)
    assert code == 0 and out == (GOLDEN / golden).read_text()
    report = tmp_path / "r.json"
    run(capsys, "analyze", src, "-o", report)
    assert report.read_bytes() == (GOLDEN / golden).read_bytes()


def test_genbench_single(tmp_path, capsys):
    code, _, _ = run(capsys, "genbench", "--ai", "4", "--access", "indirect",
                     "--irregularity", "8", "--n", "256", "-o", tmp_path)
    assert code == 0
    info = json.loads((tmp_path / "mb_ai4_indirect_none.buffers.json").read_text())
    assert info["irregularity"] == 8 and info["index_file"] == "mb_ai4_indirect_none.idx.json"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "genbench" and len(manifest["outputs"]) == 4


def test_genbench_spec_file(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"ai": 1, "divergence": "if-in", "divergence_degree": 2}))
    code, _, _ = run(capsys, "genbench", "--spec", spec, "--n", "64", "-o", tmp_path / "o")
    assert code == 0 and (tmp_path / "o" / "mb_ai1_direct_if_in_deg2.cl").exists()


def test_genbench_invalid_spec(tmp_path, capsys):
    code, _, err = run(capsys, "genbench", "--ai", "0", "--n", "64", "-o", tmp_path)
    assert code == 2 and "arithmetic intensity" in err


def test_genbench_grid(tmp_path, capsys):
    code, _, _ = run(capsys, "genbench", "--grid", "--n", "4096", "-o", tmp_path)
    assert code == 0
    index = json.loads((tmp_path / "grid.json").read_text())
    assert len(index) == 17
    assert all((tmp_path / e["file"]).exists() for e in index)


def test_genbench_unreachable_hit_rate(tmp_path, capsys):
    code, out, err = run(capsys, "genbench", "--hit-rate", "0.2", "--n", 1 << 20,
                         "-o", tmp_path)
    assert code == 0
    assert json.loads(out)["reachable"] is False and "unreachable" in err
    assert not list(tmp_path.glob("*.cl"))


def test_genbench_reachable_hit_rate(tmp_path, capsys):
    code, out, _ = run(capsys, "genbench", "--hit-rate", "0.7", "--n", "65536",
                       "-o", tmp_path)
    cal = json.loads(out)
    assert code == 0 and cal["reachable"]
    assert (tmp_path / f"mb_ai6_indirect_none_d{cal['D']}.cl").exists()


def test_calibrate(tmp_path, capsys):
    code, out, _ = run(capsys, "calibrate", "--target", "0.8", "--n", "65536")
    cal = json.loads(out)
    assert code == 0 and cal["reachable"] and set(cal) == {"target", "achieved", "D",
                                                           "reachable"}
    code, _, _ = run(capsys, "calibrate", "--target", "0.8", "--line-bytes", "24")
    assert code == 2


def test_run(tmp_path, capsys):
    run(capsys, "genbench", "--n", "64", "--ai", "1", "-o", tmp_path)
    kernel = tmp_path / "mb_ai1_direct_none.cl"
    import numpy as np
    from tcoarsen.bufio import read_buffers, write_buffers
    from tcoarsen.interp import BufferSet
    rng = np.random.default_rng(0)
    arrays = {f"in{i}": rng.random(64, dtype=np.float32) for i in range(8)}
    arrays["out0"] = np.zeros(64, dtype=np.float32)
    write_buffers(BufferSet(arrays, {"N": 64}), tmp_path / "in.json")
    code, out, _ = run(capsys, "run", kernel, "--buffers", tmp_path / "in.json",
                       "--global-size", "16", "-o", tmp_path / "res.json")
    assert code == 0 and json.loads(out)["work_items"] == 16
    result = read_buffers(tmp_path / "res.json")
    assert np.count_nonzero(result.arrays["out0"]) == 64
    assert (tmp_path / "res.stats.json").exists()
    assert (tmp_path / "res.json.manifest.json").exists()


def test_genbench_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "genbench", "--full-grid", "--n", "512", "--seed", "7", "-o", tmp_path / d)
    files = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "manifest.json")
    assert len(files) > 56
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
