import subprocess
import sys

import pytest

TOYEVAL = [sys.executable, "-m", "toyeval.cli"]
TENSORPATCH = [sys.executable, "-m", "tensorpatch.cli"]


def run_harness(*args, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    full_env.pop("TRAWL_WEIGHTS", None)
    if env and "TRAWL_WEIGHTS" in env:
        full_env["TRAWL_WEIGHTS"] = env["TRAWL_WEIGHTS"]
    return subprocess.run(
        TOYEVAL + [str(a) for a in args], capture_output=True, text=True, env=full_env
    )


def gen_fixture(out_path, *extra):
    """Generate a toy weights file via the fixture-generator CLI."""
    proc = subprocess.run(
        TENSORPATCH
        + ["gen-fixture", "--out", str(out_path), "--layers", "6", "--dim", "16"]
        + [str(a) for a in extra],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        pytest.skip(f"fixture generator unavailable: {proc.stderr.strip()}")
    return out_path


@pytest.fixture(scope="session")
def clean_fixture(tmp_path_factory):
    return gen_fixture(tmp_path_factory.mktemp("weights") / "clean.safetensors")


@pytest.fixture(scope="session")
def random_fixture(tmp_path_factory):
    return gen_fixture(tmp_path_factory.mktemp("weights") / "random.safetensors", "--random")
