"""On-disk trajectory directories and run manifests.

A trajectory directory holds one LGF1 file per frame (``u_0000.lgf`` ...),
``dual.npy`` (cell vectors of ``z``, shape ``(K, *cells, dim)``),
``boundary_flux.npy`` (``(K, nb)``), ``boundary_data.npy`` (``(K+1, nb)``),
``mask.npy`` for masked grids, ``index.csv`` and ``trajectory.json``.
Every file is written deterministically.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import time
from typing import Dict, Optional

import numpy as np

from . import __version__
from . import grid as gr
from . import lagrangian as lg
from .errors import InvalidParam
from .solver import StepStats, Trajectory

MANIFEST = "manifest.json"


def _save_npy(path, arr) -> None:
    # np.save writes only a header and the raw buffer, so bytes are reproducible
    np.save(path, np.ascontiguousarray(arr), allow_pickle=False)


def frame_name(k: int) -> str:
    return f"u_{k:04d}.lgf"


def save_trajectory(directory, traj: Trajectory, meta: Optional[dict] = None) -> list:
    """Write ``traj`` into ``directory``; returns the relative paths written."""
    os.makedirs(directory, exist_ok=True)
    g = traj.grid
    written = []
    for k, f in enumerate(traj.u.frames):
        gr.write_field(os.path.join(directory, frame_name(k)), f)
        written.append(frame_name(k))
    if traj.z:
        _save_npy(os.path.join(directory, "dual.npy"),
                  np.stack([gr.cell_vectors(z) for z in traj.z]))
        _save_npy(os.path.join(directory, "boundary_flux.npy"),
                  np.stack([np.asarray(z.boundary, dtype=float) for z in traj.z]))
        written += ["dual.npy", "boundary_flux.npy"]
    _save_npy(os.path.join(directory, "boundary_data.npy"), np.stack([t.values for t in traj.g]))
    written.append("boundary_data.npy")
    if g.mask is not None:
        _save_npy(os.path.join(directory, "mask.npy"), g.mask.astype(np.uint8))
        written.append("mask.npy")
    spec_d = traj.spec.to_dict()
    base = traj.spec.base
    if base.kind is lg.Kind.WEIGHTED_TV:
        w = base.weight
        if not isinstance(w, gr.ScalarField):
            raise InvalidParam("only field weights can be stored with a trajectory")
        gr.write_field(os.path.join(directory, "weights.lgf"), w)
        spec_d["weights"] = "weights.lgf"
        written.append("weights.lgf")
    with open(os.path.join(directory, "index.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t", "energy", "inner_iters", "gap", "gap_max", "converged"])
        for s in traj.stats:
            w.writerow([s.k, repr(float(s.t)), repr(float(s.energy)), s.inner_iters,
                        repr(float(s.gap)), repr(float(s.gap_max)), int(s.converged)])
    written.append("index.csv")
    reg = traj.spec_mu.kind is lg.Kind.REGULARIZED
    info = {"format": "lgflow-trajectory", "version": 1, "grid": g.to_dict(),
            "spec": spec_d, "mu": float(traj.spec_mu.mu) if reg else 0.0,
            "tau": traj.tau, "method": traj.method, "steps": traj.n_steps,
            "times": [float(t) for t in traj.times]}
    if meta:
        info["meta"] = meta
    _write_json(os.path.join(directory, "trajectory.json"), info)
    written.append("trajectory.json")
    return written


def load_trajectory(directory) -> Trajectory:
    """Read a directory written by :func:`save_trajectory`."""
    path = os.path.join(directory, "trajectory.json")
    try:
        with open(path) as fh:
            info = json.load(fh)
    except FileNotFoundError:
        raise InvalidParam(f"{directory}: no trajectory.json") from None
    except json.JSONDecodeError as exc:
        raise InvalidParam(f"{path}: {exc}") from None
    mask = None
    if os.path.exists(os.path.join(directory, "mask.npy")):
        mask = np.load(os.path.join(directory, "mask.npy")).astype(bool)
    K = int(info["steps"])
    frames = [gr.read_field(os.path.join(directory, frame_name(k)), mask) for k in range(K + 1)]
    g = frames[0].grid
    spec = lg.spec_from_dict(info["spec"], g, base_dir=directory)
    spec_mu = lg.with_mu(spec, float(info.get("mu", 0.0)))
    gb = np.load(os.path.join(directory, "boundary_data.npy"))
    traces = [gr.BoundaryTrace(g, v) for v in gb]
    zs = []
    if os.path.exists(os.path.join(directory, "dual.npy")):
        zc = np.load(os.path.join(directory, "dual.npy"))
        zb = np.load(os.path.join(directory, "boundary_flux.npy"))
        if zc.shape != (K,) + g.cells + (g.dim,) or zb.shape != (K, g.n_boundary):
            raise InvalidParam(f"{directory}: dual arrays do not match the grid")
        zs = [gr.VectorField.from_cell_vectors(g, c, boundary=b) for c, b in zip(zc, zb)]
    stats = _read_index(os.path.join(directory, "index.csv"))
    times = np.asarray(info["times"], dtype=float)
    return Trajectory(gr.TimeSeries(times, frames), zs, traces, stats, spec, spec_mu,
                      float(info["tau"]), info.get("method", "primal_dual"))


def _read_index(path):
    if not os.path.exists(path):
        return []
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append(StepStats(int(r["k"]), float(r["t"]), int(r["inner_iters"]),
                                 float(r["energy"]), float(r["gap"]), float(r["gap_max"]),
                                 0.0, bool(int(r["converged"]))))
    return out


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, command: str, config_hash: Optional[str], seed: Optional[int],
                   outputs, extra: Optional[dict] = None) -> Dict:
    """Manifest with per-file hashes and a combined ``outputs_hash``.

    The timestamp honours ``SOURCE_DATE_EPOCH`` so that whole directories
    can be made byte-identical; ``outputs_hash`` is reproducible regardless.
    """
    files = {rel: sha256_file(os.path.join(directory, rel)) for rel in sorted(set(outputs))}
    combined = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in files.items()).encode()).hexdigest()
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    created = int(stamp) if stamp is not None else int(time.time())
    man = {"tool": "lgflow", "version": __version__, "command": command,
           "config_hash": config_hash, "seed": seed,
           "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(created)),
           "outputs": files, "outputs_hash": combined}
    if extra:
        man.update(extra)
    _write_json(os.path.join(directory, MANIFEST), man)
    return man


def copy_into(src, directory, name=None) -> str:
    os.makedirs(directory, exist_ok=True)
    name = name or os.path.basename(src)
    shutil.copyfile(src, os.path.join(directory, name))
    return name
