"""CLI subcommands, flags, and exit codes, driven in-process."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from flowrestore.cli import main
from flowrestore.flowfield import load_field, save_field
from flowrestore.netpbm import write_netpbm


@pytest.fixture(scope="session")
def cli_env(image_field, blob_images, tmp_path_factory):
    """Checkpoint + config file shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    ckpt = root / "field16.ckpt"
    save_field(image_field, ckpt)
    cfg = root / "exp.ini"
    cfg.write_text(f"""
[task]
operator = identity-noise
noise_std = 0.1

[data]
size = 16
count = 2

[field]
checkpoint = {ckpt}

[solver]
lam = 0.94
n = 40
k = 30

[run]
seeds = 0 1
out = {root / 'out'}
""")
    image = root / "input.pgm"
    write_netpbm(image, blob_images[0])
    return {"root": root, "cfg": cfg, "ckpt": ckpt, "image": image}


def _digests(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*"))
            if p.is_file() and p.suffix != ".log"}


class TestExperiment:
    def test_runs_and_reruns_identically(self, cli_env, capsys):
        rc = main(["experiment", "--config", str(cli_env["cfg"])])
        assert rc == 0
        out = capsys.readouterr().out
        assert "psnr" in out and "report" in out
        outdir = cli_env["root"] / "out"
        first = _digests(outdir)
        assert any(name.endswith("report.csv") for name in first)
        assert main(["experiment", "--config", str(cli_env["cfg"])]) == 0
        assert _digests(outdir) == first

    def test_seed_and_out_flags(self, cli_env, tmp_path):
        rc = main(["experiment", "--config", str(cli_env["cfg"]),
                   "--seed", "5", "--out", str(tmp_path / "solo")])
        assert rc == 0
        report = (tmp_path / "solo" / "report.csv").read_text()
        assert "seeds=5" in report
        assert (tmp_path / "solo" / "seed-5" / "metrics.csv").exists()


class TestRestore:
    def test_restore_default_image(self, cli_env, tmp_path, capsys):
        rc = main(["restore", "--config", str(cli_env["cfg"]),
                   "--out", str(tmp_path / "r")])
        assert rc == 0
        assert "psnr=" in capsys.readouterr().out
        for name in ("clean.pgm", "degraded.pgm", "restored.pgm",
                     "trajectory.csv"):
            assert (tmp_path / "r" / name).exists()

    def test_restore_supplied_image(self, cli_env, tmp_path):
        rc = main(["restore", "--config", str(cli_env["cfg"]),
                   "--image", str(cli_env["image"]),
                   "--out", str(tmp_path / "r2")])
        assert rc == 0
        header = (tmp_path / "r2" / "trajectory.csv").read_text().splitlines()
        assert header[0] == "k,level,psnr,ssim,fidelity,step_norm"


class TestExitCodes:
    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["experiment", "--config",
                     str(tmp_path / "nope.ini")]) == 4

    def test_bad_config_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[solver]\nlam = 2.0\n")
        assert main(["experiment", "--config", str(bad)]) == 2

    def test_missing_checkpoint_is_config_error(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[run]\nout = %s\n" % (tmp_path / "o"))
        assert main(["experiment", "--config", str(cfg)]) == 2

    def test_missing_image_is_io_error(self, cli_env):
        assert main(["restore", "--config", str(cli_env["cfg"]),
                     "--image", "no-such.pgm"]) == 4

    def test_divergence_is_exit_3(self, cli_env, tmp_path):
        cfg = tmp_path / "div.ini"
        cfg.write_text(cli_env["cfg"].read_text().replace(
            "lam = 0.94", "lam = 0.94\nh = 6.0\nn = 80"))
        rc = main(["restore", "--config", str(cfg), "--unsafe-h",
                   "--out", str(tmp_path / "d")])
        assert rc == 3
        # without the flag the same config is rejected up front
        assert main(["restore", "--config", str(cfg),
                     "--out", str(tmp_path / "d2")]) == 2

    def test_bad_ablate_values(self, cli_env):
        assert main(["ablate", "--config", str(cli_env["cfg"]),
                     "--axis", "lipschitz", "--values", "0.1"]) == 2


class TestReports:
    def test_simulate_sde(self, cli_env, tmp_path, capsys):
        rc = main(["simulate-sde", "--config", str(cli_env["cfg"]),
                   "--out", str(tmp_path / "sde")])
        assert rc == 0
        assert "sup=" in capsys.readouterr().out
        text = (tmp_path / "sde" / "discrepancy.csv").read_text()
        assert text.startswith("t,per_step,relative")
        assert "# policy=matched" in text

    def test_simulate_sde_refined(self, cli_env, tmp_path):
        rc = main(["simulate-sde", "--config", str(cli_env["cfg"]),
                   "--policy", "refined", "--refine", "8", "--noise-free",
                   "--out", str(tmp_path / "sder")])
        assert rc == 0
        assert "# policy=refined" in (
            tmp_path / "sder" / "discrepancy.csv").read_text()

    def test_certify_bounds(self, cli_env, tmp_path, capsys):
        rc = main(["certify-bounds", "--config", str(cli_env["cfg"]),
                   "--paths", "40", "--out", str(tmp_path / "cert")])
        assert rc == 0
        assert "violations=" in capsys.readouterr().out
        text = (tmp_path / "cert" / "certificate.csv").read_text()
        assert text.startswith("t,lhs,rhs,margin,se")
        assert "case=strongly-convex" in text

    def test_certify_rejects_strongly_convex_on_blur(self, cli_env,
                                                     tmp_path):
        cfg = tmp_path / "blur.ini"
        cfg.write_text(cli_env["cfg"].read_text().replace(
            "operator = identity-noise", "operator = gaussian-blur"))
        assert main(["certify-bounds", "--config", str(cfg),
                     "--case", "strongly-convex",
                     "--out", str(tmp_path / "c")]) == 2

    def test_oracle_field(self, tmp_path, capsys):
        rc = main(["oracle-field", "--mean", "0.2,0.8", "--std", "0.5",
                   "--points", "4", "--out", str(tmp_path / "orc")])
        assert rc == 0
        lines = (tmp_path / "orc" / "oracle.csv").read_text().splitlines()
        assert lines[0] == "t,offset,u0,u1"
        assert len(lines) == 1 + 16  # header + 4x4 grid


def test_train_small_roundtrip(tmp_path, capsys):
    ckpt = tmp_path / "tiny.ckpt"
    cfg = tmp_path / "train.ini"
    cfg.write_text(f"""
[data]
size = 12

[field]
checkpoint = {ckpt}

[train]
epochs = 40
batch_size = 32
hidden = 24 24
""")
    rc = main(["train", "--config", str(cfg)])
    assert rc == 0
    assert "wrote" in capsys.readouterr().out
    field = load_field(ckpt)
    assert field.dim == 144 and field.hidden == (24, 24)
