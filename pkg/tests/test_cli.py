import xml.etree.ElementTree as ET

import numpy as np

from ctrlbench import cli
from ctrlbench.metrics import LearningCurve, write_curve_csv


def train(tmp_path, *extra):
    out = tmp_path / "runs"
    code = cli.main(["train", "--algo", "p3o", "--env", "counting", "--seeds", "0,1",
                     "--workers", "2", "--max-steps", "200", "--out", str(out),
                     "--set", "rollout_len=16", "--set", "eval_interval=50", *extra])
    return code, out


def test_train_two_seeds(stub_envs, tmp_path):
    code, out = train(tmp_path)
    assert code == cli.EXIT_OK
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert csvs == ["p3o-counting-h16-s0.csv", "p3o-counting-h16-s1.csv"]
    manifest = (out / "manifest.txt").read_text()
    assert "seed 0: p3o-counting-h16-s0.csv ok" in manifest
    assert "seed 1: p3o-counting-h16-s1.csv ok" in manifest
    assert (out / "p3o-counting-h16-s0.npz").exists()


def test_manifest_hash_stable(stub_envs, tmp_path):
    _, out = train(tmp_path)
    first = (out / "manifest.txt").read_text()
    _, out = train(tmp_path)
    assert (out / "manifest.txt").read_text() == first
    assert first.splitlines()[1].startswith("config_hash = ")


def test_parallel_seeds_flag(stub_envs, tmp_path):
    code, out = train(tmp_path, "--parallel-seeds")
    assert code == cli.EXIT_OK and len(list(out.glob("*.csv"))) == 2


def test_config_errors_exit_one(tmp_path, capsys):
    assert cli.main(["train", "--set", "gamma=2", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "gamma" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    assert cli.main(["train", "--set", "nonsense"]) == cli.EXIT_CONFIG


def _write(tmp_path, name, algo, env, hidden, xs, ys):
    c = LearningCurve(run_id=name, algo=algo, env=env, hidden=hidden)
    for x, y in zip(xs, ys):
        c.append(x, x // 10, y)
    path = tmp_path / f"{name}.csv"
    write_curve_csv(path, c)
    return str(path)


def test_report_hand_aggregate(tmp_path):
    a = _write(tmp_path, "a", "p3o", "pendulum", 16, [0, 10, 20], [0.0, 10.0, 20.0])
    b = _write(tmp_path, "b", "p3o", "pendulum", 16, [0, 10, 20], [0.0, 20.0, 40.0])
    prefix = str(tmp_path / "rep")
    assert cli.main(["report", a, b, "--window", "1", "--grid-size", "3", "--out", prefix]) == 0
    rows = (tmp_path / "rep.csv").read_text().splitlines()
    assert rows[0] == "algo,hidden,grid,mean,std,n_runs"
    assert rows[1:] == ["p3o,16,0.0,0.0,0.0,2", "p3o,16,10.0,15.0,5.0,2", "p3o,16,20.0,30.0,10.0,2"]


def test_report_byte_identical_and_valid_svg(tmp_path):
    paths = [_write(tmp_path, f"r{i}", algo, "pendulum", h, [0, 50, 100, 150],
                    list(np.linspace(-1000, -200 * (i + 1), 4)))
             for i, (algo, h) in enumerate([("p3o", 16), ("p3o", 64), ("nes", 16)])]
    outs = []
    for axis in ("steps", "wall"):
        for _ in range(2):
            prefix = str(tmp_path / f"rep-{axis}")
            assert cli.main(["report", *paths, "--axis", axis, "--out", prefix]) == 0
            outs.append(((tmp_path / f"rep-{axis}.csv").read_bytes(),
                         (tmp_path / f"rep-{axis}.svg").read_bytes()))
    assert outs[0] == outs[1] and outs[2] == outs[3]
    steps_svg = ET.fromstring(outs[0][1])
    wall_svg = ET.fromstring(outs[2][1])
    ns = "{http://www.w3.org/2000/svg}"
    lines = steps_svg.findall(f"{ns}polyline")
    assert len(lines) == 3
    dashed = [pl.get("stroke-dasharray") is not None for pl in lines]
    assert dashed == [True, True, False]  # nes h16, p3o h16, p3o h64 in sorted order
    assert "log scale" in outs[2][1].decode() and "log scale" not in outs[0][1].decode()
    assert wall_svg.tag == f"{ns}svg"


def test_report_constant_curve(tmp_path):
    a = _write(tmp_path, "c", "d3pg", "pendulum", 64, [0, 10, 20], [-7.0, -7.0, -7.0])
    prefix = str(tmp_path / "flat")
    assert cli.main(["report", a, "--out", prefix]) == 0
    rows = [r.split(",") for r in (tmp_path / "flat.csv").read_text().splitlines()[1:]]
    assert len(rows) == 100
    assert {r[3] for r in rows} == {"-7.0"} and {r[4] for r in rows} == {"0.0"}


def test_report_mixed_envs_exit_one(tmp_path, capsys):
    a = _write(tmp_path, "a", "p3o", "pendulum", 16, [0, 10], [0.0, 1.0])
    b = _write(tmp_path, "b", "p3o", "lander_lite", 16, [0, 10], [0.0, 1.0])
    assert cli.main(["report", a, b, "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert "several environments" in capsys.readouterr().err


def test_report_missing_file(tmp_path):
    assert cli.main(["report", str(tmp_path / "nope.csv")]) == cli.EXIT_CONFIG


def test_evaluate_checkpoint(tmp_path, capsys):
    out = tmp_path / "runs"
    assert cli.main(["train", "--algo", "cmaes", "--env", "pendulum", "--seeds", "0",
                     "--workers", "1", "--max-steps", "3000", "--out", str(out),
                     "--set", "test_episodes=1"]) == 0
    capsys.readouterr()
    ckpt = out / "cmaes-pendulum-h16-s0.npz"
    assert cli.main(["evaluate", str(ckpt), "--episodes", "2"]) == 0
    value = float(capsys.readouterr().out.strip())
    assert -2000 < value <= 0


def test_failed_seed_exit_two(stub_envs, tmp_path, monkeypatch):
    from ctrlbench import envs
    from .test_harness import Exploding
    monkeypatch.setitem(envs.ENVS, "counting", Exploding)
    out = tmp_path / "runs"
    code = cli.main(["train", "--algo", "ca3c", "--env", "counting", "--seeds", "0",
                     "--workers", "2", "--max-steps", "5000", "--out", str(out),
                     "--set", "eval_interval=50"])
    assert code == cli.EXIT_RUN
    assert "seed 0: ca3c-counting-h16-s0.csv failed" in (out / "manifest.txt").read_text()
    assert (out / "ca3c-counting-h16-s0.csv").read_text().count("\n") >= 2
