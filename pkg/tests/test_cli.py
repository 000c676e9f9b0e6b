"""Command-line front-end: outputs, exit codes, determinism, round trips."""

import json

import numpy as np
import pytest

from todalab import cli
from todalab import correlator as co
from todalab import rootdata as rd
from todalab import surface as sf
from todalab.correlator import CorrelatorSpec, InsertionSpec


@pytest.fixture()
def spec_files(tmp_path):
    rs = rd.build_root_system(rd.LieType("A", 1))
    fd = rd.fold(rs, rd.outer_automorphisms(rs)[0])
    s = sf.closed_double(sf.grid_surface(5, 5), euler_char=-2)
    bc = rd.background_charges(rs, fd, 1.0)
    good = CorrelatorSpec(surface=s, rs=rs, folding=fd, gamma=1.0,
                          mu_bulk=np.array([1.0]), mu_boundary=None,
                          insertions=InsertionSpec(bulk=((3, 0.3 * bc.Q),)))
    bad = CorrelatorSpec(surface=s, rs=rs, folding=fd, gamma=1.0,
                         mu_bulk=np.array([1.0]), mu_boundary=None,
                         insertions=InsertionSpec(bulk=((3, 1.0 * bc.Q),)))
    good_path = tmp_path / "good.json"
    bad_path = tmp_path / "bad.json"
    good_path.write_text(json.dumps(co.spec_to_dict(good)))
    bad_path.write_text(json.dumps(co.spec_to_dict(bad)))
    surf_path = tmp_path / "grid.json"
    sf.dump_surface(sf.grid_surface(5, 5), surf_path)
    return {"good": str(good_path), "bad": str(bad_path), "surface": str(surf_path),
            "dir": tmp_path}


def run(args):
    return cli.main(args)


def test_fold_table_row(tmp_path):
    out = tmp_path / "fold.json"
    assert run(["fold", "--type", "A4", "--tau", "swap", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["result"]["table_row"] == "folded=B2 d_N=2 kappa_sq=1"
    assert doc["result"]["folded_type"] == "B2"
    assert doc["result"]["d_N"] == 2
    assert "config_hash" in doc and "conventions" in doc


def test_lie_report_reparses(tmp_path):
    out = tmp_path / "lie.json"
    assert run(["lie", "--type", "G2", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    rs = rd.root_system_from_dict(doc["result"])
    assert str(rs.lie_type) == "G2"


def test_seiberg_exit_codes_and_margins(spec_files, tmp_path):
    out = tmp_path / "s.json"
    assert run(["seiberg", "--spec", spec_files["good"], "-o", str(out)]) == 0
    assert run(["seiberg", "--spec", spec_files["bad"], "-o", str(out)]) == 2
    doc = json.loads(out.read_text())
    assert doc["result"]["verdict"] is False
    assert doc["result"]["condition_2_margins"][0]["margins"]  # margins reported


def test_estimate_deterministic_bytes(spec_files, tmp_path):
    o1, o2 = tmp_path / "e1.json", tmp_path / "e2.json"
    base = ["estimate", "--spec", spec_files["good"], "--n", "2000", "--seed", "5"]
    assert run(base + ["-o", str(o1)]) == 0
    assert run(base + ["-o", str(o2)]) == 0
    assert o1.read_bytes() == o2.read_bytes()
    doc = json.loads(o1.read_text())
    assert doc["result"]["value"] > 0
    assert doc["seed"] == 5
    assert doc["conventions"]["partition_normalization"] == "omitted"


def test_estimate_requires_seed(spec_files, capsys):
    with pytest.raises(SystemExit) as exc:
        run(["estimate", "--spec", spec_files["good"], "--n", "10"])
    assert exc.value.code == 2


def test_missing_input_is_io_error(tmp_path):
    assert run(["estimate", "--spec", str(tmp_path / "nope.json"),
                "--n", "10", "--seed", "1"]) == 4


def test_sample_and_dump(spec_files, tmp_path):
    dump = tmp_path / "x.bin"
    out = tmp_path / "sample.json"
    rc = run(["sample", "--surface", spec_files["surface"], "--type", "A2",
              "--kind", "neumann", "--n", "64", "--seed", "3",
              "--dump", str(dump), "-o", str(out)])
    assert rc == 0
    from todalab import fields as fl

    X, meta = fl.load_samples(dump)
    assert X.shape == (64, 25, 2)
    assert meta["seed"] == 3


def test_gmc_csv_schema(spec_files, tmp_path):
    out = tmp_path / "scan.csv"
    rc = run(["gmc", "--surface", spec_files["surface"], "--type", "A2",
              "--gamma", "0.8", "--n", "2000", "--seed", "4",
              "--p-grid", "0.5,1.0", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "p,estimate,stderr,verdict,mesh_level"
    assert len(lines) == 3


def test_walg_parity_report(tmp_path):
    out = tmp_path / "w.json"
    assert run(["walg", "--n", "4", "--parity", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["result"]["parity_signs"] == {"2": 1, "3": -1, "4": 1}


def test_weylcheck_passes(spec_files, tmp_path):
    out = tmp_path / "wc.json"
    rc = run(["weylcheck", "--surface", spec_files["surface"], "--type", "A2",
              "--gamma", "0.9", "--seed", "2", "-o", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["result"]["pass"] is True


def test_estimate_report_round_trips(spec_files, tmp_path):
    out = tmp_path / "e.json"
    run(["estimate", "--spec", spec_files["good"], "--n", "1000", "--seed", "8",
         "-o", str(out)])
    doc = json.loads(out.read_text())
    # the report re-parses under the same schema keys
    assert set(doc) == {"command", "config_hash", "seed", "versions",
                        "conventions", "result"}
    assert set(doc["result"]) >= {"value", "stderr", "seiberg", "diagnostics"}


def test_estimate_trace_csv(spec_files, tmp_path):
    out = tmp_path / "e.json"
    trace = tmp_path / "trace.csv"
    rc = run(["estimate", "--spec", spec_files["good"], "--n", "1000", "--seed", "8",
              "-o", str(out), "--trace", str(trace)])
    assert rc == 0
    lines = trace.read_text().strip().split("\n")
    assert lines[0] == "n_samples,value,stderr"
    assert len(lines) == 5
