import hashlib
import json
import os

import numpy as np
import pytest

from lgflow import grid as gr
from lgflow import lagrangian as lg
from lgflow import problems
from lgflow import solver as sv
from lgflow import store
from lgflow.errors import InvalidParam


@pytest.fixture(scope="module")
def traj():
    return sv.solve(problems.bump2d(n=12, T=0.02), sv.SolveConfig(tau=0.01, method="newton",
                                                                 mu=0.05))


def listing(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


def test_round_trip(tmp_path, traj):
    store.save_trajectory(tmp_path, traj, {"note": "x"})
    back = store.load_trajectory(tmp_path)
    assert np.array_equal(back.u.stack(), traj.u.stack())
    assert np.array_equal(back.times, traj.times)
    for a, b in zip(back.z, traj.z):
        assert np.array_equal(gr.cell_vectors(a), gr.cell_vectors(b))
        assert np.array_equal(a.boundary, b.boundary)
    for a, b in zip(back.g, traj.g):
        assert np.array_equal(a.values, b.values)
    assert back.tau == traj.tau and back.method == traj.method
    assert back.spec.to_dict() == traj.spec.to_dict()
    assert back.spec_mu.mu == pytest.approx(0.05)
    assert [s.energy for s in back.stats] == [s.energy for s in traj.stats]
    assert json.load(open(tmp_path / "trajectory.json"))["meta"] == {"note": "x"}


def test_saves_are_byte_identical(tmp_path, traj):
    store.save_trajectory(tmp_path / "a", traj)
    store.save_trajectory(tmp_path / "b", traj)
    assert listing(tmp_path / "a") == listing(tmp_path / "b")


def test_masked_round_trip(tmp_path):
    p = problems.radial_annulus(n=16, T=0.02)
    t = sv.solve(p, sv.SolveConfig(tau=0.01, method="newton", mu=0.05))
    written = store.save_trajectory(tmp_path, t)
    assert "mask.npy" in written
    back = store.load_trajectory(tmp_path)
    assert np.array_equal(back.grid.mask, p.grid.mask)
    assert np.array_equal(back.u.stack(), t.u.stack())


def test_weighted_round_trip(tmp_path):
    g = gr.GridSpec((10,), 0.1)
    w = gr.ScalarField(g, 1.0 + g.centers[..., 0])
    spec = lg.weighted_tv(w)
    u0 = gr.ScalarField(g, (g.centers[..., 0] > 0.5).astype(float))
    t = sv.solve(sv.Problem(g, 0.02, u0, spec, 0.0), sv.SolveConfig(tau=0.01))
    assert "weights.lgf" in store.save_trajectory(tmp_path, t)
    back = store.load_trajectory(tmp_path)
    assert back.spec.kind is lg.Kind.WEIGHTED_TV
    assert np.array_equal(back.u.stack(), t.u.stack())


def test_load_errors(tmp_path, traj):
    with pytest.raises(InvalidParam):
        store.load_trajectory(tmp_path)
    (tmp_path / "trajectory.json").write_text("{broken")
    with pytest.raises(InvalidParam):
        store.load_trajectory(tmp_path)
    d = tmp_path / "t"
    store.save_trajectory(d, traj)
    np.save(d / "dual.npy", np.zeros((1, 2, 2, 2)))
    with pytest.raises(InvalidParam):
        store.load_trajectory(d)


def test_manifest_hashes(tmp_path, traj, monkeypatch):
    outs = store.save_trajectory(tmp_path, traj)
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    man = store.write_manifest(tmp_path, "solve", "abc", 7, outs)
    assert man["created_utc"] == "1970-01-01T00:00:00Z"
    assert man["seed"] == 7 and man["config_hash"] == "abc"
    for rel, h in man["outputs"].items():
        assert hashlib.sha256(open(tmp_path / rel, "rb").read()).hexdigest() == h
    assert json.load(open(tmp_path / store.MANIFEST)) == man
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1000000000")
    man2 = store.write_manifest(tmp_path, "solve", "abc", 7, outs)
    assert man2["outputs_hash"] == man["outputs_hash"]
    assert man2["created_utc"] != man["created_utc"]


def test_manifest_detects_change(tmp_path, traj):
    outs = store.save_trajectory(tmp_path, traj)
    h1 = store.write_manifest(tmp_path, "solve", None, None, outs)["outputs_hash"]
    np.save(tmp_path / "dual.npy", 2 * np.load(tmp_path / "dual.npy"))
    h2 = store.write_manifest(tmp_path, "solve", None, None, outs)["outputs_hash"]
    assert h1 != h2


def test_frame_name():
    assert store.frame_name(7) == "u_0007.lgf"
