import json
import subprocess
import sys

import numpy as np
import pytest

from sympose import __version__
from sympose.cli import config_hash, main
from sympose.geometry import RigidTransform, random_rotations
from sympose.metrics import add_s, amgpd
from sympose.primitives import GroupedPrimitives


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["detect", "--shape", "pyramid:4", "-o", str(d / "sym.json")]) == 0
    assert main(["gp", str(d / "sym.json"), "-o", str(d / "gp.json")]) == 0
    return d


def _pairs(path, rng, n, exact_first=True):
    lines = []
    for i in range(n):
        R1, R2 = random_rotations(2, rng)
        t1 = rng.normal(size=3).tolist()
        if exact_first and i == 0:
            R2, t2 = R1, t1
        else:
            t2 = (np.array(t1) + rng.normal(0, 0.05, 3)).tolist()
        T_dot = {"R": R2.tolist(), "t": t2} if i % 2 else RigidTransform(R2, t2).as_matrix().tolist()
        lines.append(json.dumps({"object_id": f"o{i}", "T_hat": {"R": R1.tolist(), "t": t1}, "T_dot": T_dot}))
    path.write_text("\n".join(lines) + "\n")
    return path


def _csv_body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith(f"# sympose {__version__} seed=")
    return lines[1:]


def test_detect_report(work):
    d = json.loads((work / "sym.json").read_text())
    assert d["category"] == "cat2" and d["schema"] == 1
    assert d["meta"]["seed"] == 0 and len(d["meta"]["config_hash"]) == 16


def test_detect_missing_file_exit_2(tmp_path, capsys):
    assert main(["detect", str(tmp_path / "nope.obj")]) == 2
    assert "no such file" in capsys.readouterr().err


def test_detect_malformed_file_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 zz 0\n")
    assert main(["detect", str(p)]) == 2
    assert "bad.obj:2" in capsys.readouterr().err


def test_gp_is_idempotent(work):
    assert main(["gp", str(work / "sym.json"), "-o", str(work / "gp2.json")]) == 0
    assert (work / "gp.json").read_bytes() == (work / "gp2.json").read_bytes()
    gp = json.loads((work / "gp.json").read_text())
    assert [len(g) for g in gp["groups"]] == [1, 1, 1, 4]


def test_gp_for_cone(tmp_path):
    assert main(["gp", "--shape", "cone", "-o", str(tmp_path / "c.json")]) == 0
    assert len(json.loads((tmp_path / "c.json").read_text())["groups"]) == 3


def test_dist_matches_library(work, rng):
    pairs = _pairs(work / "pairs.jsonl", rng, 60)
    out = work / "d.csv"
    assert main(["dist", str(work / "gp.json"), str(pairs), "--metric", "amgpd", "-o", str(out)]) == 0
    body = _csv_body(out)
    assert body[0] == "object_id,amgpd"
    gp = GroupedPrimitives.from_dict(json.loads((work / "gp.json").read_text()))
    recs = [json.loads(line) for line in pairs.read_text().splitlines()]
    for line, rec in zip(body[1:], recs):
        oid, v = line.split(",")
        Th = RigidTransform(rec["T_hat"]["R"], rec["T_hat"]["t"])
        td = rec["T_dot"]
        Td = RigidTransform(td["R"], td["t"]) if isinstance(td, dict) else \
            RigidTransform(np.array(td)[:3, :3], np.array(td)[:3, 3])
        assert oid == rec["object_id"]
        assert abs(float(v) - amgpd(gp, Th, Td)) < 1e-9
    assert float(body[1].split(",")[1]) < 1e-12  # identity pair
    auc = (work / "d_auc.csv").read_text().splitlines()
    assert auc[1] == "metric,auc,max_threshold" and auc[2].startswith("amgpd,")


def test_dist_add_s_and_all(work, rng, models):
    pairs = _pairs(work / "p2.jsonl", rng, 5)
    out = work / "all.csv"
    assert main(["dist", str(work / "gp.json"), str(pairs), "--metric", "all", "--shape", "pyramid:4",
                 "-o", str(out)]) == 0
    body = _csv_body(out)
    assert body[0] == "object_id,agpd,mgpd,amgpd,add,adds"
    m = models("pyramid:4")
    rec = json.loads(pairs.read_text().splitlines()[1])
    Th = RigidTransform(rec["T_hat"]["R"], rec["T_hat"]["t"])
    Td = RigidTransform(rec["T_dot"]["R"], rec["T_dot"]["t"])
    assert abs(float(body[2].split(",")[5]) - add_s(m.points.points, Th, Td, m.index)) < 1e-9


def test_dist_errors(work, rng, tmp_path, capsys):
    pairs = _pairs(tmp_path / "p.jsonl", rng, 2)
    with pytest.raises(SystemExit) as e:
        main(["dist", str(work / "gp.json"), str(pairs), "--metric", "vsd"])
    assert e.value.code == 2
    assert main(["dist", str(work / "gp.json"), str(pairs), "--metric", "adds"]) == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"T_hat": {"R": [[2, 0, 0], [0, 1, 0], [0, 0, 1]]}, "T_dot": {"R": np.eye(3).tolist()}}))
    assert main(["dist", str(work / "gp.json"), str(bad)]) == 2
    assert main(["dist", str(work / "gp.json"), str(pairs), "--units", "metric", "-o", str(tmp_path / "m.csv")]) == 3
    capsys.readouterr()


def test_validate_exit_and_determinism(work):
    args = ["validate", str(work / "gp.json"), "-N", "3000", "--seed", "4"]
    assert main(args + ["-o", str(work / "a.csv"), "--report", str(work / "r.json"),
                        "--minima", str(work / "m.csv")]) == 0
    assert main(args + ["-o", str(work / "b.csv")]) == 0
    assert (work / "a.csv").read_bytes() == (work / "b.csv").read_bytes()
    body = _csv_body(work / "a.csv")
    assert body[0] == "v_x,v_y,v_z,d" and len(body) == 3001
    rep = json.loads((work / "r.json").read_text())
    assert rep["all_correct"] is True and rep["N"] == 3000 and rep["meta"]["seed"] == 4
    assert _csv_body(work / "m.csv")[0].startswith("index,")
    assert main(["validate", str(work / "gp.json"), "-N", "50"]) == 3


def test_validate_reports_add_s_spurious_minima(tmp_path):
    code = main(["validate", "--shape", "clamp", "--metric", "adds", "-N", "20000", "-o", str(tmp_path / "c.csv")])
    assert code == 1


def test_slice(work):
    out = work / "s.csv"
    assert main(["slice", str(work / "gp.json"), "--axis", "z", "--steps", "72", "-o", str(out)]) == 0
    body = _csv_body(out)
    assert body[0] == "angle_deg,d" and len(body) == 74
    assert body[1] == "0,0"
    assert main(["slice", str(work / "gp.json"), "--steps", "10"]) == 3
    assert main(["slice", str(work / "gp.json"), "--axis", "1,2"]) == 2


def test_fit_output(tmp_path, capsys):
    args = ["fit", "--shape", "cone", "--loss", "amgpd,adds", "--trials", "2", "--seed", "3", "--max-iter", "40"]
    assert main(args + ["-o", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["-o", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    body = _csv_body(tmp_path / "a.csv")
    assert len(body) == 1 + 2 * 2
    assert "% correct over 2 trials" in capsys.readouterr().err
    assert main(["fit", "--shape", "cone", "--loss", "vsd"]) == 2


def test_config_hash_tracks_flags():
    assert config_hash({"a": 1}) == config_hash({"a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "sympose", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
