import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mptp.cli import ConfigError, RunConfig, cmd_selftest, cmd_solve, cmd_sweep, main
from mptp.morse_index import IndexReport

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def quad_config(tmp_path, **overrides):
    data = {
        "potential": {"kind": "builtin-quadratic", "n": 1, "box": [[-4.0, 4.0]]},
        "endpoints": {"minus": [1.0], "plus": [2.0]},
        "mode": "free-T",
        "k": 0.0,
        "sigma": {"value": 0.5},
        "tau": 2.0,
        "N": 200,
        "seed": 0,
        "output": str(tmp_path / "out"),
    }
    data.update(overrides)
    f = tmp_path / "config.json"
    f.write_text(json.dumps(data))
    return f


def hash_dir(path, skip=("manifest.json",)):
    out = {}
    for f in sorted(Path(path).iterdir()):
        if f.name in skip:
            continue
        out[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    return out


def test_config_validation_unknown_key(tmp_path):
    f = quad_config(tmp_path)
    data = json.loads(f.read_text())
    data["bogus"] = 1
    f.write_text(json.dumps(data))
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.load(f)


def test_config_validation_bad_tau_exit_code(tmp_path):
    f = quad_config(tmp_path, tau=1e-4)
    rc = main(["solve", "--config", str(f)])
    assert rc == 2


def test_config_error_names_field(tmp_path, capsys):
    f = quad_config(tmp_path, tau=1e-4)
    main(["solve", "--config", str(f)])
    err = capsys.readouterr().err
    assert "tau" in err


def test_env_override(tmp_path):
    f = quad_config(tmp_path)
    cfg = RunConfig.load(f, environ={"MPTP_TOLERANCES_KERNELTOL": "1e-5"})
    assert cfg.tolerances["kernelTol"] == 1e-5
    cfg2 = RunConfig.load(f, environ={"MPTP_N": "99"})
    assert cfg2.N == 99


def test_solve_artifacts_and_determinism(tmp_path, quad):
    f = quad_config(tmp_path)
    cfg = RunConfig.load(f, environ={})
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cmd_solve(cfg, out1) == 0
    assert cmd_solve(cfg, out2) == 0
    assert hash_dir(out1) == hash_dir(out2)
    header = json.loads((out1 / "path.json").read_text())
    assert header["converged"] is True
    assert abs(header["T"] - np.arccosh(2.0)) < 5e-3
    assert header["mFixed"] == 0 and header["mFree"] == 0
    # path CSV parses back losslessly
    from mptp.action import path_from_csv
    p = path_from_csv((out1 / "path.csv").read_text(), header["T"],
                      header["sigma"], header["k"])
    assert p.N == header["N"]
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["toolVersion"]
    assert {f["name"] for f in manifest["files"]} == {"path.csv", "path.json"}
    recorded = {f["name"]: f["sha256"] for f in manifest["files"]}
    assert recorded["path.csv"] == hashlib.sha256(
        (out1 / "path.csv").read_bytes()).hexdigest()


def test_sweep_artifacts_roundtrip_and_determinism(tmp_path, dwell):
    data = json.loads((CONFIG_DIR / "double_well_sweep.json").read_text())
    data["sigma"] = {"start": 0.05, "stop": 0.5, "count": 6}
    data["N"] = 100
    f = tmp_path / "sweep.json"
    f.write_text(json.dumps(data))
    cfg = RunConfig.load(f, environ={})
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert cmd_sweep(cfg, out1) == 0
    assert cmd_sweep(cfg, out2) == 0
    assert hash_dir(out1) == hash_dir(out2)
    sweep_rows = (out1 / "sweep.csv").read_text().strip().splitlines()
    assert sweep_rows[0] == IndexReport.CSV_HEADER
    assert len(sweep_rows) == 7
    sigmas = []
    for row in sweep_rows[1:]:
        rep = IndexReport.from_csv_row(row)
        sigmas.append(rep.sigma)
        assert rep.case == "fixed-T-na"
    assert sigmas == sorted(sigmas)
    bifs = json.loads((out1 / "bifurcations.json").read_text())
    assert isinstance(bifs, list) and len(bifs) == 1
    assert set(bifs[0]) >= {"sigmaStar", "kernelDim", "sign", "mode", "verdict"}
    branch = (out1 / "branch_000.csv").read_text().strip().splitlines()
    assert branch[0] == "sigma,s,slope"
    assert len(branch) > 1


def test_quadratic_sweep_empty_bifurcations(tmp_path):
    data = json.loads((CONFIG_DIR / "quadratic_sweep.json").read_text())
    data["sigma"]["count"] = 5
    data["N"] = 100
    f = tmp_path / "qs.json"
    f.write_text(json.dumps(data))
    cfg = RunConfig.load(f, environ={})
    out = tmp_path / "out"
    assert cmd_sweep(cfg, out) == 0
    assert json.loads((out / "bifurcations.json").read_text()) == []
    summary = json.loads((out / "summary.json").read_text())
    assert summary["sfSigma"] == 0
    assert summary["decompositionHolds"] is True
    assert summary["verdict"] == "positively-stable"


def test_sweep_fold_truncation_partial_outputs(tmp_path):
    data = json.loads((CONFIG_DIR / "double_well_free_T.json").read_text())
    data["sigma"] = {"start": 0.3, "stop": 0.8, "count": 5}
    data["N"] = 100
    f = tmp_path / "fold.json"
    f.write_text(json.dumps(data))
    cfg = RunConfig.load(f, environ={})
    out = tmp_path / "out"
    with pytest.warns(UserWarning):
        rc = cmd_sweep(cfg, out)
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["truncated"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert any("fold" in d for d in manifest["diagnostics"])
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert 2 <= len(rows) < 6


def test_solve_boundary_case_header(tmp_path):
    # double well at k = 0: below k0, the cap binds and T = tau is reported
    f = quad_config(
        tmp_path,
        potential={"kind": "builtin-double-well-1d", "n": 1,
                   "box": [[-2.5, 2.5]]},
        endpoints={"minus": [-1.0], "plus": [1.0]},
        sigma={"value": 0.2},
        tau=3.0,
        N=100)
    cfg = RunConfig.load(f, environ={})
    out = tmp_path / "out"
    assert cmd_solve(cfg, out) == 0
    header = json.loads((out / "path.json").read_text())
    assert header["boundaryT"] is True
    assert header["T"] == 3.0
    assert header["gradT"] < 0


def test_solve_nonconvergent_exit_code(tmp_path, capsys):
    # a cold start in a basin without a critical point fails with exit 1
    f = quad_config(
        tmp_path,
        potential={"kind": "builtin-double-well-1d", "n": 1,
                   "box": [[-2.5, 2.5]]},
        endpoints={"minus": [-1.0], "plus": [1.0]},
        mode="fixed-T",
        sigma={"value": 0.6},
        tau=4.0,
        N=100)
    cfg = RunConfig.load(f, environ={})
    assert cmd_solve(cfg, tmp_path / "out") == 1
    assert "did not converge" in capsys.readouterr().err


def test_solve_polynomial_and_fixed_T_modes(tmp_path):
    f = quad_config(
        tmp_path,
        potential={"kind": "polynomial", "n": 1,
                   "coeffs": [[0.25, 4], [-0.5, 2], [0.25, 0]],
                   "box": [[-2.5, 2.5]]},
        endpoints={"minus": [-1.0], "plus": [1.0]},
        mode="fixed-T",
        sigma={"value": 0.05},
        tau=4.0,
        N=150)
    cfg = RunConfig.load(f, environ={})
    out = tmp_path / "out"
    assert cmd_solve(cfg, out) == 0
    header = json.loads((out / "path.json").read_text())
    # the polynomial is the double well; symmetric transition at T = tau,
    # below the first bifurcation the path is a minimizer
    assert header["T"] == 4.0
    assert header["mFixed"] == 0
    assert abs(header["om_value"] - header["action"]) < 1e-12


def test_selftest_passes_and_is_fast():
    import time
    t0 = time.time()
    assert cmd_selftest(environ={}) == 0
    assert time.time() - t0 <= 60


def test_selftest_detects_kernel_tol_sabotage(capsys):
    rc = cmd_selftest(environ={"MPTP_TOLERANCES_KERNELTOL": "1e-1"})
    out = capsys.readouterr().out
    assert rc == 1
    assert "FAIL" in out and "conjugate" in out


def test_cli_subprocess_entry():
    proc = subprocess.run([sys.executable, "-m", "mptp.cli", "selftest"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert "PASS" in proc.stdout
