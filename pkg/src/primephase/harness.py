"""Seeded experiment runner: sparse (M, K) sweeps, image recovery, noise study.

Every trial is a pure function of its derived seed, so results do not depend
on the number of worker processes or the order in which trials finish.
Wall-clock timings are written to a separate file to keep ``results.csv``
and ``results.json`` byte-reproducible.
"""

import csv
import enum
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import container
from ._validation import ConfigError, check_count, check_nonnegative
from .ambiguity import DFT_AMBIGUITIES, is_success, nse
from .cprime import CprimeConfig, DEFAULT_RHO_PATH, solve_cprime, solve_cprime_path
from .imaging import (GrayImage, PatchGrid, assemble_patches, capped_psnr, extract_patches,
                      load_image, ssim, synthetic_texture)
from .measurements import (AWGN, DegenerateMeasurementError, awgn_variance, build_complex_gaussian,
                           build_partial_dft, sparse_ground_truth, synthesize,
                           verify_modulus_noise_advantage)
from .scprime import ScprimeConfig, solve_scprime

SCHEMA = 1
TEXTURE_RESOURCE = "texture256.pgm"
# first-order (Taylor) regime of the modulus-noise analysis: noise std at most
# this fraction of the rms clean intensity, i.e. SNR >= 20 dB
TAYLOR_FRACTION = 0.1


class ExperimentKind(enum.Enum):
    SPARSE_SWEEP = "sparse-sweep"
    IMAGE_RECOVERY = "image-recovery"
    NOISE_STUDY = "noise-study"


def hash64(*parts):
    """Deterministic 64-bit seed from a master seed and trial labels."""
    h = hashlib.blake2b(repr(tuple(parts)).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


SWEEP_DEFAULTS = {"n": 64, "m_list": [16, 32, 64], "k_list": [2, 4, 8], "trials": 50,
                  "fix_ensemble": False, "amplitude": "gaussian",
                  "solver": {"mode": "path", "rho_factor": 0.1, "rho_path": list(DEFAULT_RHO_PATH),
                             "restarts": 4, "max_iter": 300, "tol": 1e-8}}
IMAGE_DEFAULTS = {"image": "texture", "sampling_rate": 0.5, "snr_db": 15.0, "patch": 8,
                  "stride": 8, "trials": 1,
                  "solver": {"mu": 0.5, "rho": None, "rho_factor": 0.1, "n_atoms": 128,
                             "max_iter": 500, "e_bound_rule": "atom-count", "tol": 0.0}}
NOISE_DEFAULTS = {"n": 16, "m": 64, "snr_list": [40.0, 30.0, 20.0, 10.0, 0.0, -10.0],
                  "trials": 100000}
_DEFAULTS = {ExperimentKind.SPARSE_SWEEP: SWEEP_DEFAULTS,
             ExperimentKind.IMAGE_RECOVERY: IMAGE_DEFAULTS,
             ExperimentKind.NOISE_STUDY: NOISE_DEFAULTS}


@dataclass
class ExperimentSpec:
    """A validated experiment description (JSON ``"schema": 1``).

    ``params`` holds the kind-specific fields merged over their defaults;
    ``params["solver"]`` the solver settings.
    """

    kind: ExperimentKind
    master_seed: int
    params: dict

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("experiment spec must be a JSON object")
        if d.get("schema") != SCHEMA:
            raise ConfigError(f"unsupported spec schema {d.get('schema')!r}; expected {SCHEMA}")
        try:
            kind = ExperimentKind(d.get("kind"))
        except ValueError:
            raise ConfigError(f"unknown experiment kind {d.get('kind')!r}") from None
        defaults = _DEFAULTS[kind]
        unknown = set(d) - set(defaults) - {"schema", "kind", "master_seed"}
        if unknown:
            raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
        params = json.loads(json.dumps(defaults))
        for key, value in d.items():
            if key == "solver":
                if not isinstance(value, dict):
                    raise ConfigError("solver must be an object")
                extra = set(value) - set(defaults["solver"])
                if extra:
                    raise ConfigError(f"unknown solver fields: {sorted(extra)}")
                params["solver"].update(value)
            elif key in defaults:
                params[key] = value
        spec = cls(kind, check_count(d.get("master_seed", 0), "master_seed", minimum=0), params)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"spec file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def validate(self):
        p = self.params
        check_count(p["trials"], "trials")
        if self.kind is ExperimentKind.SPARSE_SWEEP:
            n = check_count(p["n"], "n")
            for m in p["m_list"]:
                if check_count(m, "m") > n:
                    raise ConfigError(f"m={m} exceeds n={n}")
            for k in p["k_list"]:
                if isinstance(k, int) and k == 0:
                    raise ConfigError("K = 0 gives a zero signal; NSE is undefined")
                if check_count(k, "k") > n:
                    raise ConfigError(f"k={k} exceeds n={n}")
            if p["solver"]["mode"] not in ("path", "fixed"):
                raise ConfigError("solver.mode must be 'path' or 'fixed'")
            check_count(p["solver"]["restarts"], "restarts")
            check_count(p["solver"]["max_iter"], "max_iter")
        elif self.kind is ExperimentKind.IMAGE_RECOVERY:
            rate = check_nonnegative(p["sampling_rate"], "sampling_rate")
            if round(rate * check_count(p["patch"], "patch") ** 2) < 1:
                raise ConfigError("sampling_rate * N must give at least one measurement")
            check_count(p["stride"], "stride")
            if p["snr_db"] is not None:
                float(p["snr_db"])
        else:
            check_count(p["n"], "n")
            check_count(p["m"], "m")
            check_count(p["trials"], "trials", minimum=2)
        return self

    def to_dict(self):
        return {"schema": SCHEMA, "kind": self.kind.value, "master_seed": self.master_seed,
                **self.params}


@dataclass
class TrialResult:
    seed: int
    nse: float = None
    success: bool = None
    psnr_x: float = None
    ssim_x: float = None
    psnr_dz: float = None
    ssim_dz: float = None
    iterations: int = 0
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nse is not None and self.success != is_success(self.nse):
            raise ValueError("success flag inconsistent with nse")


# ---------------------------------------------------------------- sparse sweep

def _sweep_trial(task):
    params, master, m, k, t = task
    n = params["n"]
    sol = params["solver"]
    seed = hash64(master, "trial", m, k, t)
    ens_seed = hash64(master, "ensemble", m) if params["fix_ensemble"] else hash64(seed, "ensemble")
    ens = build_partial_dft(n, m, ens_seed)
    truth = sparse_ground_truth(n, k, hash64(seed, "truth"), params["amplitude"])
    samples = synthesize(ens, truth)
    start = time.perf_counter()
    if sol["mode"] == "path":
        result = solve_cprime_path(ens, samples, tuple(sol["rho_path"]), sol["restarts"],
                                   sol["max_iter"], sol["tol"], hash64(seed, "solver"))
        state, states = result.best, [s for run in result.runs for s in run]
    else:
        cfg = CprimeConfig(rho_factor=sol["rho_factor"], max_iter=sol["max_iter"],
                           tol=sol["tol"], rng_seed=hash64(seed, "solver"))
        state = solve_cprime(ens, samples, cfg)
        states = [state]
    wall = (time.perf_counter() - start) * 1e3
    value = nse(state.x, truth.x_true, DFT_AMBIGUITIES)
    backtracks = np.concatenate([s.backtrack_counts for s in states])
    margins = np.concatenate([s.exit_margins for s in states])
    margins = margins[np.isfinite(margins)]
    monotone = all(np.all(np.diff(s.objective_trace) <= 1e-9 * (1 + s.objective_trace[:-1]))
                   for s in states)
    extra = {"m": m, "k": k, "trial": t,
             "max_backtracks": int(backtracks.max()) if backtracks.size else 0,
             "min_exit_margin": float(margins.min()) if margins.size else 0.0,
             "monotone": bool(monotone)}
    trace = (state.objective_trace, state.backtrack_counts) if t == 0 else None
    return TrialResult(seed, value, is_success(value), iterations=sum(s.n_iter for s in states),
                       wall_ms=wall, extra=extra), trace


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def run_sparse_sweep(spec, jobs=1, trace_dir=None):
    """Recovery probability and NMSE for every (M, K) cell.

    Returns ``(cells, trials)``: one aggregate dict per cell in grid order,
    and the per-trial results sorted by (M, K, trial index).
    """
    if spec.kind is not ExperimentKind.SPARSE_SWEEP:
        raise ConfigError("run_sparse_sweep needs a sparse-sweep spec")
    p = spec.params
    tasks = [(p, spec.master_seed, m, k, t) for m in p["m_list"] for k in p["k_list"]
             for t in range(p["trials"])]
    out = _map(_sweep_trial, tasks, jobs)
    trials = [r for r, _ in out]
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
        for r, trace in out:
            if trace is not None:
                container.write_trace_csv(Path(trace_dir) / f"trace_M{r.extra['m']}_K{r.extra['k']}.csv",
                                          *trace)
    cells = []
    for m in p["m_list"]:
        for k in p["k_list"]:
            rs = [r for r in trials if r.extra["m"] == m and r.extra["k"] == k]
            nses = [r.nse for r in rs]
            cells.append({
                "m": m, "k": k, "trials": len(rs),
                "successes": sum(r.success for r in rs),
                "recovery_prob": sum(r.success for r in rs) / len(rs),
                "nmse": math.fsum(nses) / len(nses),
                "mean_iterations": math.fsum(r.iterations for r in rs) / len(rs),
                "max_backtracks": max(r.extra["max_backtracks"] for r in rs),
                "min_exit_margin": min(r.extra["min_exit_margin"] for r in rs),
                "all_monotone": all(r.extra["monotone"] for r in rs),
                "mean_time_ms": math.fsum(r.wall_ms for r in rs) / len(rs),
            })
    return cells, trials


# --------------------------------------------------------------- image recovery

def resolve_image(ref):
    """``"texture"`` is the shipped 256x256 texture; ``"synthetic:SIZE[:SEED]"``
    generates one; anything else is a file path."""
    if ref in (None, "texture"):
        with resources.as_file(resources.files("primephase.data") / TEXTURE_RESOURCE) as path:
            return load_image(path)
    if isinstance(ref, str) and ref.startswith("synthetic:"):
        parts = ref.split(":")[1:]
        try:
            size, seed = int(parts[0]), int(parts[1]) if len(parts) > 1 else 0
        except (ValueError, IndexError):
            raise ConfigError(f"bad synthetic image reference {ref!r}") from None
        return synthetic_texture(size, seed)
    return load_image(ref)


def patches_to_image(X, grid, width, height):
    """Image from complex patch columns: per-pixel modulus, overlap-averaged.

    Each recovered patch is known only up to a global phase; for a
    nonnegative image the modulus removes it.
    """
    g = PatchGrid(grid.patch_w, grid.patch_h, grid.stride, np.abs(X).astype(np.complex128),
                  grid.rows, grid.cols)
    return assemble_patches(g, width, height)


def run_image_recovery(spec, image=None, jobs=1, return_states=False):
    """Patch-based SC-PRIME recovery and PSNR/SSIM of ``X*`` and ``D*Z*``.

    With ``trials > 1`` the noise (and solver initialization) is redrawn
    per trial and metrics are averaged.
    """
    if spec.kind is not ExperimentKind.IMAGE_RECOVERY:
        raise ConfigError("run_image_recovery needs an image-recovery spec")
    p = spec.params
    img = image if image is not None else resolve_image(p["image"])
    if not isinstance(img, GrayImage):
        img = GrayImage(img)
    grid = extract_patches(img, p["patch"], p["patch"], p["stride"])
    n = p["patch"] ** 2
    m = int(round(p["sampling_rate"] * n))
    sol = p["solver"]
    if sol["n_atoms"] >= grid.n_patches:
        raise ConfigError(f"n_atoms={sol['n_atoms']} must be below the patch count {grid.n_patches}")
    ens = build_complex_gaussian(n, m, hash64(spec.master_seed, "image-ensemble"))
    tasks = [(p, spec.master_seed, t, img, grid, ens) for t in range(p["trials"])]
    results = _map(_image_trial, tasks, jobs)
    rows = [r for r, _ in results]
    report = {"width": img.width, "height": img.height, "n": n, "m": m,
              "patches": grid.n_patches, "trials": len(rows)}
    for key in ("psnr_x", "ssim_x", "psnr_dz", "ssim_dz"):
        report[key] = math.fsum(getattr(r, key) for r in rows) / len(rows)
    report["iterations"] = rows[0].iterations
    report["rho"] = rows[0].extra["rho"]
    report["discarded"] = sum(r.extra["discarded"] for r in rows)
    report["trace"] = results[0][1].objective_trace.tolist()
    if return_states:
        return report, rows, [s for _, s in results]
    return report, rows


def _image_trial(task):
    p, master, t, img, grid, ens = task
    sol = p["solver"]
    seed = hash64(master, "image-trial", t)
    noise = None if p["snr_db"] is None else AWGN(float(p["snr_db"]))
    samples = synthesize(ens, grid.patch_matrix, noise, hash64(seed, "noise"))
    cfg = ScprimeConfig(mu=sol["mu"], rho=sol["rho"], rho_factor=sol["rho_factor"],
                        n_atoms=sol["n_atoms"], max_iter=sol["max_iter"],
                        e_bound_rule=sol["e_bound_rule"], tol=sol["tol"],
                        rng_seed=hash64(seed, "solver"))
    start = time.perf_counter()
    state = solve_scprime(ens, samples, cfg)
    wall = (time.perf_counter() - start) * 1e3
    rec_x = patches_to_image(state.X, grid, img.width, img.height)
    rec_dz = patches_to_image(state.model, grid, img.width, img.height)
    r = TrialResult(seed, psnr_x=capped_psnr(rec_x, img), ssim_x=ssim(rec_x, img),
                    psnr_dz=capped_psnr(rec_dz, img), ssim_dz=ssim(rec_dz, img),
                    iterations=state.n_iter, wall_ms=wall,
                    extra={"rho": state.rho, "discarded": samples.discarded_count, "trial": t})
    return r, state


# ------------------------------------------------------------------ noise study

def run_noise_study(spec):
    """Modulus- vs intensity-domain noise statistics across an SNR grid."""
    if spec.kind is not ExperimentKind.NOISE_STUDY:
        raise ConfigError("run_noise_study needs a noise-study spec")
    p = spec.params
    ens = build_complex_gaussian(p["n"], p["m"], hash64(spec.master_seed, "noise-ensemble"))
    attempt = 0
    while True:
        # resample the signal until every |a_i^H x| is usable
        x = sparse_ground_truth(p["n"], p["n"], hash64(spec.master_seed, "noise-signal", attempt))
        amp = np.abs(ens.forward(x.x_true))
        if np.all(amp >= 1e-6):
            break
        attempt += 1
    clean = amp ** 2
    rows = []
    for snr in p["snr_list"]:
        var = awgn_variance(clean, float(snr))
        try:
            rep = verify_modulus_noise_advantage(ens, x, var, p["trials"],
                                                 hash64(spec.master_seed, "noise-mc", snr))
        except DegenerateMeasurementError as exc:
            raise ConfigError(str(exc)) from None
        sigma = math.sqrt(var)
        in_taylor = clean >= sigma / TAYLOR_FRACTION
        rows.append({
            "snr_db": float(snr), "noise_var": float(var),
            "var_ratio_median": float(np.median(rep.var_ratio)),
            "var_ratio_taylor_median": float(np.median(rep.var_ratio[in_taylor])) if in_taylor.any() else None,
            "mean_ratio_median": float(np.median(rep.mean_ratio)),
            "intensity_ratio_median": float(np.median(rep.intensity_ratio)),
            "modulus_better_fraction": float(np.mean(rep.modulus_var <= rep.intensity_var)),
            "discarded_fraction": float(np.mean(rep.discarded_fraction)),
            "outside_taylor_regime": bool(sigma > TAYLOR_FRACTION * math.sqrt(np.mean(clean ** 2))),
            "below_half_count": int(np.count_nonzero(~rep.advantage)),
            "measurements": int(rep.amplitude.size),
        })
    return rows


# ----------------------------------------------------------------------- output

def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else
                        (repr(float(row[c])) if isinstance(row[c], float) else row[c]) for c in columns])


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")


SWEEP_COLUMNS = ["m", "k", "trials", "successes", "recovery_prob", "nmse", "mean_iterations",
                 "max_backtracks", "min_exit_margin", "all_monotone"]
IMAGE_COLUMNS = ["width", "height", "n", "m", "patches", "trials", "psnr_x", "ssim_x",
                 "psnr_dz", "ssim_dz", "iterations", "rho", "discarded"]
NOISE_COLUMNS = ["snr_db", "noise_var", "var_ratio_median", "var_ratio_taylor_median",
                 "mean_ratio_median", "intensity_ratio_median", "modulus_better_fraction",
                 "discarded_fraction", "outside_taylor_regime", "below_half_count", "measurements"]


def run_and_write(spec, out_dir, jobs=1):
    """Run ``spec`` and write results.csv, results.json, timings.json and traces."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    timings = {}
    if spec.kind is ExperimentKind.SPARSE_SWEEP:
        cells, trials = run_sparse_sweep(spec, jobs, trace_dir=out / "traces")
        for c in cells:
            timings[f"M{c['m']}_K{c['k']}_mean_ms"] = c.pop("mean_time_ms")
        _write_csv(out / "results.csv", cells, SWEEP_COLUMNS)
        doc = {"spec": spec.to_dict(), "cells": cells,
               "trials": [{**{k: v for k, v in asdict(r).items() if k not in ("wall_ms", "extra")},
                           **r.extra} for r in trials]}
    elif spec.kind is ExperimentKind.IMAGE_RECOVERY:
        report, rows = run_image_recovery(spec, jobs=jobs)
        trace = report.pop("trace")
        (out / "traces").mkdir(exist_ok=True)
        container.write_trace_csv(out / "traces" / "trace_image.csv", trace)
        timings["trial_ms"] = [r.wall_ms for r in rows]
        _write_csv(out / "results.csv", [report], IMAGE_COLUMNS)
        doc = {"spec": spec.to_dict(), "report": report,
               "trials": [{k: v for k, v in asdict(r).items() if k != "wall_ms"} for r in rows]}
    else:
        rows = run_noise_study(spec)
        _write_csv(out / "results.csv", rows, NOISE_COLUMNS)
        doc = {"spec": spec.to_dict(), "rows": rows}
    _dump(out / "results.json", doc)
    timings["total_ms"] = (time.perf_counter() - start) * 1e3
    _dump(out / "timings.json", timings)
    return doc


def default_jobs():
    raw = os.environ.get("PRIMEPHASE_JOBS")
    if raw is None or raw == "":
        return 1
    try:
        return check_count(int(raw), "PRIMEPHASE_JOBS")
    except ValueError:
        raise ConfigError(f"PRIMEPHASE_JOBS must be a positive integer, got {raw!r}") from None
