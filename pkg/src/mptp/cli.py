"""Command line entry points: solve, sweep, selftest.

Configuration is a single JSON document; MPTP_-prefixed environment variables
override dotted keys (MPTP_TOLERANCES_KERNELTOL -> tolerances.kernelTol).
All floating point output uses 17 significant digits so reruns are
byte-identical and artifacts round-trip losslessly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .action import FMT, write_path
from .bifurcation import (BifurcationError, classify_stability,
                          continue_family, crossing_curve,
                          detect_bifurcations, spectral_flow_sigma)
from .morse_index import IndexReport, correction_index
from .potential import PotentialModel, PotentialError
from .solver import (SolveConfig, check_energy_identity, minimize_fixed_T,
                     minimize_free_T_multistart)

ENV_PREFIX = "MPTP_"


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "potential": {"kind": str, "n": int, "coeffs": list, "box": list},
    "endpoints": {"minus": list, "plus": list},
    "mode": str,
    "k": float,
    "sigma": {"value": float, "start": float, "stop": float, "count": int},
    "tau": float,
    "N": int,
    "M": int,
    "tolerances": {"tolGrad": float, "kernelTol": float, "inertiaTol": float,
                   "deltaSigma": float},
    "seed": int,
    "multiStart": int,
    "output": str,
    "emit": {"paths": bool, "sweep": bool, "bifurcations": bool,
             "branches": bool},
}

_DEFAULTS = {
    "mode": "free-T",
    "k": 0.0,
    "tau": 2.0,
    "N": 200,
    "M": None,
    "seed": 0,
    "multiStart": 0,
    "output": "out",
    "tolerances": {"tolGrad": 1e-10, "kernelTol": 1e-8, "inertiaTol": 1e-9,
                   "deltaSigma": None},
    "emit": {"paths": True, "sweep": True, "bifurcations": True,
             "branches": True},
}


def _env_overrides(environ):
    """Map MPTP_SECTION_KEY variables onto dotted config paths."""
    flat = {}
    for section, fields in _SCHEMA.items():
        if isinstance(fields, dict):
            for key in fields:
                flat[f"{section}.{key}".upper().replace(".", "_")] = (section, key)
        else:
            flat[section.upper()] = (section,)
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = flat.get(name[len(ENV_PREFIX):])
        if path is None:
            continue
        try:
            out[path] = json.loads(raw)
        except json.JSONDecodeError:
            out[path] = raw
    return out


@dataclass
class RunConfig:
    potential: dict
    endpoints: dict
    mode: str
    k: float
    sigma: dict
    tau: float
    N: int
    M: object
    tolerances: dict
    seed: int
    multi_start: int
    output: str
    emit: dict
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def load(cls, file, environ=None):
        with open(file) as fh:
            data = json.load(fh)
        return cls.from_dict(data, environ)

    @classmethod
    def from_dict(cls, data, environ=None):
        unknown = set(data) - set(_SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = json.loads(json.dumps(_DEFAULTS))
        for key, val in data.items():
            if isinstance(_SCHEMA.get(key), dict) and isinstance(val, dict):
                sub_unknown = set(val) - set(_SCHEMA[key])
                if sub_unknown:
                    raise ConfigError(
                        f"unknown keys in '{key}': {sorted(sub_unknown)}")
                merged.setdefault(key, {})
                merged[key] = {**merged.get(key, {}), **val}
            else:
                merged[key] = val
        for path, val in _env_overrides(environ or os.environ).items():
            cur = merged
            for part in path[:-1]:
                cur = cur.setdefault(part, {})
            cur[path[-1]] = val
        for required in ("potential", "endpoints", "sigma"):
            if required not in merged or not merged[required]:
                raise ConfigError(f"missing required config key '{required}'")
        cfg = cls(
            potential=merged["potential"],
            endpoints=merged["endpoints"],
            mode=merged["mode"],
            k=float(merged["k"]),
            sigma=merged["sigma"],
            tau=float(merged["tau"]),
            N=int(merged["N"]),
            M=merged["M"],
            tolerances=merged["tolerances"],
            seed=int(merged["seed"]),
            multi_start=int(merged["multiStart"]),
            output=str(merged["output"]),
            emit=merged["emit"],
            raw=merged,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.mode not in ("fixed-T", "free-T"):
            raise ConfigError(f"mode: must be 'fixed-T' or 'free-T', got {self.mode!r}")
        if self.tau <= 1e-3:
            raise ConfigError(f"tau: must exceed Tmin=1e-3, got {self.tau}")
        if self.N < 2:
            raise ConfigError(f"N: must be >= 2, got {self.N}")
        for name, val in self.tolerances.items():
            if val is not None and not (float(val) > 0):
                raise ConfigError(f"tolerances.{name}: must be positive, got {val}")
        if "minus" not in self.endpoints or "plus" not in self.endpoints:
            raise ConfigError("endpoints: needs 'minus' and 'plus'")
        if not ({"value"} <= set(self.sigma)
                or {"start", "stop", "count"} <= set(self.sigma)):
            raise ConfigError("sigma: needs 'value' or 'start'/'stop'/'count'")
        try:
            PotentialModel.from_config(self.potential)
        except PotentialError as exc:
            raise ConfigError(f"potential: {exc}") from exc

    def model(self):
        return PotentialModel.from_config(self.potential)

    def solve_config(self):
        return SolveConfig(N=self.N,
                           tol_grad=float(self.tolerances["tolGrad"]),
                           tau=self.tau, seed=self.seed,
                           multi_start=self.multi_start)

    def sigma_grid(self):
        if "value" in self.sigma:
            return np.array([float(self.sigma["value"])])
        return np.linspace(float(self.sigma["start"]),
                           float(self.sigma["stop"]),
                           int(self.sigma["count"]))

    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _json_dump(obj, file):
    with open(file, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, default=float)
        fh.write("\n")


def _sha256(file):
    h = hashlib.sha256()
    with open(file, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


class _Manifest:
    def __init__(self, config: RunConfig):
        self.data = {"configHash": config.config_hash(),
                     "toolVersion": __version__,
                     "stages": {},
                     "files": [],
                     "diagnostics": []}
        self._t0 = None
        self._stage = None

    def start(self, stage):
        self._stage = stage
        self._t0 = time.perf_counter()

    def stop(self):
        if self._stage is not None:
            self.data["stages"][self._stage] = time.perf_counter() - self._t0
            self._stage = None

    def add_file(self, path):
        path = Path(path)
        self.data["files"].append({"name": path.name,
                                   "sha256": _sha256(path),
                                   "bytes": path.stat().st_size})

    def note(self, msg):
        self.data["diagnostics"].append(msg)

    def write(self, out_dir):
        _json_dump(self.data, Path(out_dir) / "manifest.json")


def cmd_solve(config: RunConfig, out_dir) -> int:
    """One solve at fixed sigma; emits path CSV + JSON header with indices."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(config)
    model = config.model()
    cfg = config.solve_config()
    grid = config.sigma_grid()
    sigma = float(grid[0])
    xm = config.endpoints["minus"]
    xp = config.endpoints["plus"]
    manifest.start("solve")
    if config.mode == "fixed-T":
        res = minimize_fixed_T(model, sigma, config.tau, xm, xp, cfg, k=config.k)
    else:
        res = minimize_free_T_multistart(model, sigma, config.k, xm, xp, cfg)
    manifest.stop()
    if not res.converged:
        print(f"solve did not converge (residual {res.residual:.3e})",
              file=sys.stderr)
        return 1
    manifest.start("analyze")
    report = correction_index(res.path, model)
    energy = check_energy_identity(res, model, config.k)
    manifest.stop()
    manifest.start("emit")
    csv_file = out / "path.csv"
    json_file = out / "path.json"
    write_path(res.path, model, csv_file, json_file)
    with open(json_file) as fh:
        header = json.load(fh)
    header.update({
        "converged": res.converged,
        "boundaryT": res.boundary_T,
        "residual": res.residual,
        "iterations": res.iterations,
        "mFixed": report.m_fixed,
        "mFree": report.m_free,
        "nCorrection": report.n_correction,
        "energyIdentity": energy.ok,
        "gradT": res.grad_T,
    })
    _json_dump(header, json_file)
    manifest.stop()
    for f in (csv_file, json_file):
        manifest.add_file(f)
    manifest.write(out)
    print(f"solved: T={FMT % res.path.T} action={FMT % header['action']} "
          f"boundaryT={res.boundary_T}")
    return 0


def cmd_sweep(config: RunConfig, out_dir, threads=1) -> int:
    """Continue the family over sigma, analyze, and emit all artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(config)
    model = config.model()
    cfg = config.solve_config()
    grid = config.sigma_grid()
    if grid.size < 2:
        print("sweep needs a sigma grid with at least 2 points", file=sys.stderr)
        return 2
    xm = config.endpoints["minus"]
    xp = config.endpoints["plus"]
    manifest.start("continue")
    family = continue_family(model, grid, config.mode, config.k, config.tau,
                             cfg, xm, xp)
    manifest.stop()
    if family.meta.truncated:
        manifest.note(family.meta.diagnostic)
    manifest.start("indices")
    reports = family.all_reports(threads=threads)
    manifest.stop()

    files = []
    if config.emit.get("sweep", True):
        sweep_file = out / "sweep.csv"
        with open(sweep_file, "w") as fh:
            fh.write(IndexReport.CSV_HEADER + "\n")
            for rep in reports:
                fh.write(rep.csv_row() + "\n")
        files.append(sweep_file)
    if config.emit.get("paths", True):
        for j, path in enumerate(family.paths):
            csv_file = out / f"path_{j:03d}.csv"
            json_file = out / f"path_{j:03d}.json"
            write_path(path, model, csv_file, json_file)
            files.extend([csv_file, json_file])

    manifest.start("bifurcations")
    sf_report = None
    points = []
    try:
        sf_report = spectral_flow_sigma(family)
    except BifurcationError as exc:
        manifest.note(f"spectral flow unavailable: {exc}")
    points = detect_bifurcations(family)
    verdict = None
    try:
        verdict = classify_stability(family)
    except BifurcationError as exc:
        manifest.note(f"stability not classified: {exc}")
    manifest.stop()

    if config.emit.get("bifurcations", True):
        bif_file = out / "bifurcations.json"
        payload = []
        for p in points:
            entry = p.as_json()
            entry["verdict"] = verdict.verdict if verdict else "not-classified"
            payload.append(entry)
        _json_dump(payload, bif_file)
        files.append(bif_file)
        summary = {
            "sfSigma": sf_report.sf_sigma if sf_report else None,
            "sfHamiltonian": sf_report.sf_hamiltonian if sf_report else None,
            "sfA": sf_report.sf_a if sf_report else None,
            "decompositionHolds": sf_report.decomposition_holds if sf_report else None,
            "verdict": verdict.verdict if verdict else "not-classified",
            "truncated": family.meta.truncated,
        }
        summary_file = out / "summary.json"
        _json_dump(summary, summary_file)
        files.append(summary_file)

    manifest.start("branches")
    if config.emit.get("branches", True):
        for i, p in enumerate(points):
            if p.kernel_dim != 1:
                continue
            try:
                branch = crossing_curve(family, p.sigma_star, 1.0)
            except BifurcationError as exc:
                manifest.note(f"branch {i} not tracked: {exc}")
                continue
            branch_file = out / f"branch_{i:03d}.csv"
            with open(branch_file, "w") as fh:
                fh.write("sigma,s,slope\n")
                for sg, sv in zip(branch.sigmas, branch.s_values):
                    if np.isfinite(sv):
                        fh.write(f"{FMT % sg},{FMT % sv},{FMT % branch.slope_ratio}\n")
            files.append(branch_file)
    manifest.stop()

    for f in files:
        manifest.add_file(f)
    manifest.write(out)
    n_pts = len(points)
    print(f"sweep: {len(family.paths)} samples, {n_pts} bifurcation(s), "
          f"verdict={verdict.verdict if verdict else 'n/a'}")
    return 0


def cmd_selftest(environ=None) -> int:
    from .selftest import run_selftest
    tolerances = dict(_DEFAULTS["tolerances"])
    for path, val in _env_overrides(environ or os.environ).items():
        if path[0] == "tolerances":
            tolerances[path[1]] = val
    results = run_selftest(tolerances)
    width = max(len(name) for name, _ok, _detail in results)
    failures = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        failures += 0 if ok else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mptp",
        description="Most probable transition paths: solve, sweep, selftest")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
    p = sub.add_parser("selftest")
    p.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    if args.command == "selftest":
        return cmd_selftest()
    try:
        config = RunConfig.load(args.config)
    except (ConfigError, PotentialError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or config.output
    try:
        if args.command == "solve":
            return cmd_solve(config, out_dir)
        return cmd_sweep(config, out_dir, threads=max(1, args.threads))
    except BifurcationError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
