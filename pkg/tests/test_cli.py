import numpy as np
import pytest

from specgan.cli import main
from specgan.fileio import read_cloud, write_obj, write_off
from specgan.geometry import icosphere
from specgan.datasets import ellipsoid_meshes
from specgan.metrics import MetricReport, roundtrip_error
from specgan.sh_core import SMV, load_smv, save_smv

TOY = """bandlimit = 4
t_prime = 2
noise_dim = 8
cond_dim = 10
hidden = 16
disc_hidden = 16
batch = 8
reg_batch = 2
lr_forward = 1e-4
lr_backward = 1e-5
lr_disc = 1e-4
outer_iters = 1
gen_iters = 5
reg_iters = 2
"""


@pytest.fixture(scope="module")
def encoded(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    meshes, _ = ellipsoid_meshes(12, np.random.default_rng(0))
    (root / "meshes").mkdir()
    for i, m in enumerate(meshes):
        write_obj(m, root / "meshes" / f"e{i:02d}.obj")
    assert main(["encode", str(root / "meshes"), "-M", "4", "--out", str(root / "smv")]) == 0
    (root / "toy.cfg").write_text(TOY)
    return root


@pytest.fixture(scope="module")
def checkpoint(encoded):
    ck = encoded / "ck"
    assert main(["train", str(encoded / "smv"), "--config", str(encoded / "toy.cfg"), "--out", str(ck)]) == 0
    return ck


def test_encode_spheres(tmp_path):
    (tmp_path / "m").mkdir()
    for i in range(5):
        write_off(icosphere(2, radius=1 + i), tmp_path / "m" / f"s{i}.off")
    assert main(["encode", str(tmp_path / "m"), "-M", "8", "--out", str(tmp_path / "o")]) == 0
    files = sorted((tmp_path / "o").glob("*.smv"))
    assert len(files) == 5
    for f in files:
        c = load_smv(f).coeffs
        assert abs(c[0]) > 10 * np.abs(c[1:]).max()
    report = (tmp_path / "o" / "miss_report.csv").read_text().splitlines()
    assert report[0] == "mesh,miss_rate,status" and len(report) == 6


def test_encode_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["encode", str(tmp_path / "empty"), "-M", "8", "--out", str(tmp_path / "o")]) == 3


def test_encode_skips_bad_and_nonpolar(tmp_path, capsys):
    d = tmp_path / "m"
    d.mkdir()
    write_obj(icosphere(1), d / "good.obj")
    (d / "broken.obj").write_text("v x y z\n")
    (d / "open.obj").write_text("v 1 -1 -1\nv 1 1 -1\nv 1 0 1\nv -0.1 0 0\nf 1 2 3\n")
    assert main(["encode", str(d), "-M", "4", "--out", str(tmp_path / "o")]) == 0
    assert [p.name for p in (tmp_path / "o").glob("*.smv")] == ["good.smv"]
    report = (tmp_path / "o" / "miss_report.csv").read_text()
    assert "broken.obj,,unreadable" in report and "non-polar" in report


def test_encode_roundtrip_quality(encoded):
    meshes, _ = ellipsoid_meshes(3, np.random.default_rng(0))
    assert all(roundtrip_error(m, 4) < 0.01 for m in meshes)


def test_decode_dc_only(tmp_path):
    s = SMV.zeros(4)
    s[0, 0] = 2 * np.sqrt(np.pi) * 0.5
    save_smv(s, tmp_path / "dc.smv")
    assert main(["decode", str(tmp_path / "dc.smv"), "--out", str(tmp_path / "o"), "--format", "xyz"]) == 0
    pts = read_cloud(tmp_path / "o" / "dc.xyz").points
    assert len(pts) == 64
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 0.5, rtol=1e-14)


def test_decode_batch_stable_names(tmp_path):
    rng = np.random.default_rng(1)
    (tmp_path / "in").mkdir()
    for i in range(100):
        s = SMV.zeros(2)
        s[0, 0] = 3.0 + rng.uniform()
        save_smv(s, tmp_path / "in" / f"shape_{i:03d}.smv")
    assert main(["decode", str(tmp_path / "in"), "--out", str(tmp_path / "o")]) == 0
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == [f"shape_{i:03d}.ply" for i in range(100)]


def test_train_writes_checkpoint_and_log(checkpoint):
    for name in ("gen_1.nnw", "gen_3.nnw", "disc_2.nnw", "partition.txt", "norm.txt",
                 "config.txt", "feature.nnw", "progress.json"):
        assert (checkpoint / name).exists()
    rows = (checkpoint / "train_log.csv").read_text().splitlines()
    assert rows[0] == "phase,iter,net,loss"
    phases = {r.split(",")[0] for r in rows[1:]}
    assert phases == {"forward", "backward", "regularize"}


def test_train_deterministic(encoded, checkpoint):
    other = encoded / "ck_again"
    assert main(["train", str(encoded / "smv"), "--config", str(encoded / "toy.cfg"), "--out", str(other)]) == 0
    for f in checkpoint.iterdir():
        assert f.read_bytes() == (other / f.name).read_bytes(), f.name


def test_train_resume_matches(encoded):
    cfg2 = encoded / "toy2.cfg"
    cfg2.write_text(TOY.replace("outer_iters = 1", "outer_iters = 2"))
    a, b = encoded / "resume_a", encoded / "resume_b"
    assert main(["train", str(encoded / "smv"), "--config", str(encoded / "toy.cfg"), "--out", str(a)]) == 0
    assert main(["train", str(encoded / "smv"), "--config", str(cfg2), "--out", str(a), "--resume"]) == 0
    assert main(["train", str(encoded / "smv"), "--config", str(cfg2), "--out", str(b)]) == 0
    for name in ("gen_1.nnw", "gen_3.nnw", "disc_1.nnw", "optimizer.npz", "progress.json", "train_log.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_train_errors(encoded, tmp_path):
    cfg = str(encoded / "toy.cfg")
    assert main(["train", str(tmp_path / "missing"), "--config", cfg, "--out", str(tmp_path / "x")]) == 3
    assert main(["train", str(encoded / "smv"), "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "x")]) == 2
    (tmp_path / "bad.cfg").write_text("t_prime = 3\n")
    assert main(["train", str(encoded / "smv"), "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "x")]) == 2
    # flag overrides config: bandlimit 6 no longer matches the M=4 dataset
    assert main(["train", str(encoded / "smv"), "--config", cfg, "-M", "6", "--out", str(tmp_path / "x")]) == 2
    assert main(["train", str(encoded / "smv"), "--config", cfg, "--out", str(tmp_path / "y"), "--resume"]) == 3


def test_generate(checkpoint, tmp_path):
    assert main(["generate", str(checkpoint), "--count", "0", "--out", str(tmp_path / "none")]) == 0
    assert list((tmp_path / "none").iterdir()) == []
    for d in ("a", "b"):
        assert main(["generate", str(checkpoint), "--count", "50", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 100
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for f in (tmp_path / "a").glob("*.smv"):
        assert np.all(np.isfinite(load_smv(f).coeffs))


def test_generate_nan_abort(checkpoint, tmp_path):
    import shutil

    from specgan.neural import load_mlp, save_mlp

    bad = tmp_path / "bad"
    shutil.copytree(checkpoint, bad)
    net = load_mlp(bad / "gen_1.nnw")
    net.layers[0].bias[:] = np.nan
    save_mlp(net, bad / "gen_1.nnw")
    assert main(["generate", str(bad), "--count", "2", "--out", str(tmp_path / "o")]) == 4
    assert main(["generate", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == 3


def test_eval(encoded, checkpoint, tmp_path):
    ref = tmp_path / "ref"
    assert main(["decode", str(encoded / "smv"), "--out", str(ref)]) == 0
    assert main(["eval", str(ref), str(ref), "--out", str(tmp_path / "self.txt")]) == 0
    rep = MetricReport.from_text((tmp_path / "self.txt").read_text())
    assert rep.mmd_cd == 0.0 and rep.mmd_emd == 0.0 and rep.n_reference == 12
    # smv directories are decoded on the fly
    assert main(["eval", str(encoded / "smv"), str(ref), "--out", str(tmp_path / "smv.txt")]) == 0
    assert MetricReport.from_text((tmp_path / "smv.txt").read_text()).mmd_cd == 0.0
    assert main(["eval", str(tmp_path / "nothing"), str(ref)]) == 3
