import json
import subprocess
import sys

import pytest

from tensorpatch.weights_io import load_weights

from conftest import constant_oracle_cmd


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "tensorpatch.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
    )


@pytest.fixture()
def toy_file(tmp_path):
    out = tmp_path / "toy.safetensors"
    proc = run_cli("gen-fixture", "--out", out, "--layers", 3, "--dim", 12)
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture()
def pattern_file(tmp_path):
    from tensorpatch.fixtures import toy_pattern_dict

    p = tmp_path / "pattern.json"
    p.write_text(json.dumps(toy_pattern_dict(3)))
    return p


class TestGenFixture:
    def test_emits_loadable_weights_and_summary_json(self, tmp_path):
        out = tmp_path / "w.safetensors"
        proc = run_cli("gen-fixture", "--out", out, "--layers", 2, "--dim", 16)
        assert proc.returncode == 0
        summary = json.loads(proc.stdout)
        assert summary["layers"] == 2 and summary["dim"] == 16
        w = load_weights(out)
        assert "layers.1.fc.out" in w

    def test_noise_flags(self, tmp_path):
        clean = tmp_path / "clean.safetensors"
        noisy = tmp_path / "noisy.safetensors"
        assert run_cli("gen-fixture", "--out", clean, "--layers", 2, "--dim", 12).returncode == 0
        proc = run_cli(
            "gen-fixture", "--out", noisy, "--layers", 2, "--dim", 12,
            "--noise-sigma", 0.2, "--noise-target", "last-fc",
        )
        assert proc.returncode == 0
        wc, wn = load_weights(clean), load_weights(noisy)
        assert wc.entry("layers.1.fc.in").raw != wn.entry("layers.1.fc.in").raw
        assert wc.entry("layers.0.fc.in").raw == wn.entry("layers.0.fc.in").raw

    def test_random_flag(self, tmp_path):
        out = tmp_path / "rand.safetensors"
        proc = run_cli("gen-fixture", "--out", out, "--layers", 2, "--dim", 12, "--random")
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["random"] is True

    def test_bad_dim_is_config_error(self, tmp_path):
        proc = run_cli("gen-fixture", "--out", tmp_path / "x", "--layers", 2, "--dim", 4)
        assert proc.returncode == 2
        assert "dim" in proc.stderr


class TestDecompose:
    def test_per_layer_cp_patch(self, toy_file, pattern_file, tmp_path):
        out = tmp_path / "patched.safetensors"
        proc = run_cli(
            "decompose", "--weights", toy_file, "--pattern", pattern_file,
            "--strategy", "per-layer", "--layer", 2, "--kind", "fc",
            "--method", "cp", "--rank", 2, "--seed", 7, "--restarts", 1, "--out", out,
        )
        assert proc.returncode == 0, proc.stderr
        verdict = json.loads(proc.stdout)
        assert 0.0 <= verdict["relative_error"] <= 1.0
        assert verdict["rank"] == 2
        patched = load_weights(out)
        original = load_weights(toy_file)
        changed = [n for n in original if patched.entry(n).raw != original.entry(n).raw]
        assert sorted(changed) == ["layers.2.fc.in", "layers.2.fc.out"]

    def test_tucker_with_rank_triple(self, toy_file, pattern_file, tmp_path):
        out = tmp_path / "patched.safetensors"
        proc = run_cli(
            "decompose", "--weights", toy_file, "--pattern", pattern_file,
            "--strategy", "global", "--kind", "qkvo",
            "--method", "tucker", "--ranks-3", "4,4,3", "--out", out,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["rank"] == [4, 4, 3]

    def test_segment_strategy(self, toy_file, pattern_file, tmp_path):
        out = tmp_path / "patched.safetensors"
        proc = run_cli(
            "decompose", "--weights", toy_file, "--pattern", pattern_file,
            "--strategy", "segment", "--segment", "last", "--kind", "fc",
            "--method", "svd", "--rank", 3, "--out", out,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["target"] == "last"

    def test_missing_layer_flag_is_config_error(self, toy_file, pattern_file, tmp_path):
        proc = run_cli(
            "decompose", "--weights", toy_file, "--pattern", pattern_file,
            "--strategy", "per-layer", "--kind", "fc", "--method", "cp",
            "--rank", 2, "--out", tmp_path / "o",
        )
        assert proc.returncode == 2
        assert "--layer" in proc.stderr

    def test_missing_weights_file_is_io_error(self, pattern_file, tmp_path):
        proc = run_cli(
            "decompose", "--weights", tmp_path / "nope.safetensors",
            "--pattern", pattern_file, "--strategy", "global", "--kind", "fc",
            "--method", "cp", "--rank", 2, "--out", tmp_path / "o",
        )
        assert proc.returncode == 3

    def test_unknown_flag_is_usage_error(self):
        proc = run_cli("decompose", "--frobnicate")
        assert proc.returncode == 2


class TestSweepCommand:
    def test_end_to_end_sweep(self, toy_file, pattern_file, tmp_path):
        out_dir = tmp_path / "sweep_out"
        cfg = {
            "weights_path": str(toy_file),
            "pattern_path": str(pattern_file),
            "strategy": "PerLayer",
            "kind": "FC",
            "method": "CP",
            "ranks": [1, 2],
            "layers": [2],
            "fit": {"seed": 0, "restarts": 0, "max_iters": 50},
            "oracle_cmd": constant_oracle_cmd(tmp_path),
            "out_dir": str(out_dir),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        proc = run_cli("sweep", "--config", cfg_path)
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout)
        assert summary["rows"] == 3
        assert (out_dir / "report.json").exists()
        assert (out_dir / "report.csv").exists()

    def test_invalid_config_is_config_error(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"strategy": "Sideways"}))
        proc = run_cli("sweep", "--config", cfg_path)
        assert proc.returncode == 2

    def test_missing_config_file_is_io_error(self, tmp_path):
        proc = run_cli("sweep", "--config", tmp_path / "missing.json")
        assert proc.returncode == 3
