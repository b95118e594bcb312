import json
import shlex
import sys
from pathlib import Path

import pytest

from tensorpatch.fixtures import build_toy_weights, toy_pattern_dict
from tensorpatch.weights_io import save_weights

TESTS_DIR = Path(__file__).parent
WEIGHT_DEVIATION_ORACLE = TESTS_DIR / "oracle_scripts" / "weight_deviation.py"


def write_oracle_script(directory: Path, name: str, body: str) -> str:
    """Write a small oracle script and return a command string to run it."""
    path = directory / name
    path.write_text(body)
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(path))}"


def constant_oracle_cmd(directory: Path, accuracy=0.5, loss=1.0) -> str:
    body = f"import json\nprint(json.dumps({{'accuracy': {accuracy}, 'loss': {loss}}}))\n"
    return write_oracle_script(directory, "const_oracle.py", body)


def deviation_oracle_cmd(clean_path: Path) -> str:
    return (
        f"{shlex.quote(sys.executable)} {shlex.quote(str(WEIGHT_DEVIATION_ORACLE))} "
        f"--clean {shlex.quote(str(clean_path))}"
    )


@pytest.fixture(scope="session")
def toy_env(tmp_path_factory):
    """Canonical toy model (L=6, dim=16) with its pattern file, built once."""
    root = tmp_path_factory.mktemp("toy")
    weights_path = root / "toy.safetensors"
    pattern_path = root / "toy_pattern.json"
    save_weights(build_toy_weights(num_layers=6, dim=16, seed=0), weights_path)
    pattern_path.write_text(json.dumps(toy_pattern_dict(6)))
    return {"weights": weights_path, "pattern": pattern_path, "root": root}
