import hashlib
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from invader_replicator.cli import main

LAM = "id,lambda\n1,1.0\n2,0.674\n3,0.536\n4,0.342\n"


def schema(name):
    return json.loads(resources.files("invader_replicator").joinpath(f"schemas/{name}.json").read_text())


@pytest.fixture
def lam_file(tmp_path):
    p = tmp_path / "lam.csv"
    p.write_text(LAM)
    return p


def run_json(args, tmp_path, name="out.json"):
    out = tmp_path / name
    assert main([*args, "--out", str(out)]) == 0
    return json.loads(out.read_text())


def test_equilibrium_json_valid(lam_file, tmp_path):
    doc = run_json(["equilibrium", "--lambdas", str(lam_file), "--candidates", str(tmp_path / "c.csv")], tmp_path)
    jsonschema.validate(doc, schema("equilibrium"))
    assert doc["k"] == 3
    assert (tmp_path / "c.csv").read_text().startswith("subset,k,q,feasible,stable")


def test_simulate_json_and_csv(lam_file, tmp_path):
    doc = run_json(["simulate", "--lambdas", str(lam_file), "--record-every", "500", "--format", "json"], tmp_path)
    jsonschema.validate(doc, schema("simulate"))
    assert doc["survivors"] == [1, 2, 3]
    assert main(["simulate", "--lambdas", str(lam_file), "--t-max", "1", "--out", str(tmp_path / "t.csv")]) == 0
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "tau,z_1,z_2,z_3,z_4,Q"


def test_prob_json(tmp_path):
    doc = run_json(["prob", "--N", "4", "--k", "2", "--samples", "20000", "--format", "json"], tmp_path)
    jsonschema.validate(doc, schema("prob"))
    assert doc["pmf"][0]["p"] == pytest.approx(4.5 - 6 * np.log(2), abs=0.01)


def test_invade_and_assemble(lam_file, tmp_path):
    doc = run_json(["invade", "--residents", str(lam_file), "--invader", "0.5"], tmp_path)
    jsonschema.validate(doc, schema("invade"))
    assert doc["kind"] == "augmentation_less_fit"
    doc = run_json(["assemble", "--invaders", "random:50:3", "--format", "json"], tmp_path, "a.json")
    jsonschema.validate(doc, schema("assemble"))
    assert doc["steps"][0]["outcome"] == "founder"


def test_basin_and_transform(tmp_path):
    neg = tmp_path / "neg.csv"
    neg.write_text("id,lambda\n1,-0.4\n2,-0.45\n")
    doc = run_json(["basin", "--lambdas", str(neg), "--grid", "8", "--format", "json"], tmp_path)
    jsonschema.validate(doc, schema("basin"))
    assert doc["threshold"] == pytest.approx(0.4 / 0.85)
    pos = tmp_path / "pos.csv"
    pos.write_text(LAM)
    for target in ("lv", "sis-case-ii", "sis-case-iii"):
        doc = run_json(["transform", "--to", target, "--lambdas", str(pos)], tmp_path, f"{target}.json")
        jsonschema.validate(doc, schema("transform"))


def test_hypothesis_and_ensemble(tmp_path):
    sites = tmp_path / "sites"
    sites.mkdir()
    lam = np.array([1.0, 0.8, 0.7, 0.55, 0.5])
    for name, q in (("a", 0.3), ("b", 0.4), ("c", 0.35)):
        z = 1 - q / lam
        z = z / z.sum()
        (sites / f"{name}.csv").write_text("id,z\n" + "".join(f"s{i},{float(v)!r}\n" for i, v in enumerate(z)))
    doc = run_json(["hypothesis-test", "--sites", str(sites)], tmp_path)
    jsonschema.validate(doc, schema("hypothesis_test"))
    doc = run_json(["ensemble", "--N-list", "10", "20", "--runs", "200", "--format", "json"], tmp_path, "e.json")
    jsonschema.validate(doc, schema("ensemble"))


def test_exit_codes(tmp_path, capsys):
    assert main(["bogus"]) == 1
    assert main([]) == 1
    assert main(["equilibrium", "--lambdas", str(tmp_path / "missing.csv")]) == 2
    assert main(["prob", "--N", "5", "--k", "1"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("id,lambda\n1,0.5\n2,-0.2\n3,0.1\n")
    assert main(["invade", "--residents", str(bad), "--invader", "0.3"]) == 2


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_reproducible_outputs(tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["prob", "--N", "6", "--all-k", "--samples", "5000", "--format", "json", "--seed", "7"]
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert _digest(a) == _digest(b)
    # the environment seed is used when --seed is absent
    monkeypatch.setenv("REPLICATOR_SEED", "7")
    c = tmp_path / "c.json"
    assert main([*args[:-2], "--out", str(c)]) == 0
    assert _digest(a) == _digest(c)


def test_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 7\n[prob]\nsamples = 5000\nall_k = true\n')
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["prob", "--N", "6", "--config", str(cfg), "--format", "json", "--out", str(a)]) == 0
    assert main(["prob", "--N", "6", "--all-k", "--samples", "5000", "--seed", "7", "--format", "json",
                 "--out", str(b)]) == 0
    assert _digest(a) == _digest(b)
    cfg.write_text("nonsense_key = 1\n")
    assert main(["prob", "--N", "6", "--k", "2", "--config", str(cfg)]) == 2
