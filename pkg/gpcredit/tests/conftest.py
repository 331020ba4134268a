import pytest
import os
from pathlib import Path
from typing import List

import numpy as np

# Add parent directory to path for imports
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from dataset import Dataset
from expr_tree import ConstNode, ExprTree, FeatureNode, FunctionNode
from models import EvolutionParams

REPO_ROOT = Path(__file__).resolve().parents[2]
DATA_DIR = REPO_ROOT / "data"
PROFILE_DIR = REPO_ROOT / "profiles"


def feature(i: int) -> FeatureNode:
    return FeatureNode(i)


def const(v: float) -> ConstNode:
    return ConstNode(v)


def fn(op: str, left, right) -> FunctionNode:
    return FunctionNode(op, (left, right))


def write_credit_csv(path: Path, n_majority: int, n_minority: int, seed: int = 3,
                     n_features: int = 4, header: bool = False,
                     majority_value: str = "good", minority_value: str = "bad") -> Path:
    """Write a synthetic imbalanced credit file; the minority class sits higher on x0"""
    rng = np.random.default_rng(seed)
    lines = []
    if header:
        lines.append(",".join([f"a{i}" for i in range(n_features)] + ["class"]))
    rows = [(majority_value, 0.0)] * n_majority + [(minority_value, 1.5)] * n_minority
    for label, shift in rows:
        values = rng.normal(0.0, 1.0, n_features)
        values[0] += shift
        lines.append(",".join([repr(float(v)) for v in values] + [label]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_profile(path: Path, data_file: Path, minority_value: str = "bad", **extra) -> Path:
    lines = [f"path={data_file}", "label_column=-1", f"minority_value={minority_value}"]
    lines += [f"{key}={value}" for key, value in extra.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def toy_dataset() -> Dataset:
    """Four rows, two features: rows 0-1 minority, rows 2-3 majority"""
    return Dataset(
        features=np.array([[0.9, 0.1], [0.4, 0.6], [0.2, 0.3], [0.8, 0.5]]),
        labels=np.array(["1", "1", "0", "0"]),
        minority_label="1",
        name="toy",
    )


@pytest.fixture
def separable_dataset() -> Dataset:
    """x0 >= 0.5 exactly marks the minority class"""
    rng = np.random.default_rng(11)
    features = rng.uniform(0.0, 1.0, size=(60, 3))
    features[:20, 0] = rng.uniform(0.55, 1.0, 20)
    features[20:, 0] = rng.uniform(0.0, 0.45, 40)
    labels = np.array(["bad"] * 20 + ["good"] * 40)
    return Dataset(features, labels, "bad", name="separable")


@pytest.fixture
def perfect_tree() -> ExprTree:
    """Perfect classifier for separable_dataset"""
    return ExprTree(fn("sub", feature(0), const(0.5)))


@pytest.fixture
def sample_trees() -> List[ExprTree]:
    return [
        ExprTree(const(0.5)),
        ExprTree(fn("sub", feature(0), feature(1))),
        ExprTree(fn("pdiv", const(1.0), const(0.0))),
        ExprTree(fn("sub", fn("mul", feature(1), const(0.412)), fn("pdiv", feature(0), feature(1)))),
    ]


@pytest.fixture
def small_params() -> EvolutionParams:
    """Parameters small enough for unit tests"""
    return EvolutionParams(
        population_size=30,
        generations=5,
        tournament_size=3,
        max_depth=8,
        init_depth_range=(2, 4),
        elitism_count=1,
        seed=1,
    )


@pytest.fixture
def credit_csv(tmp_path) -> Path:
    return write_credit_csv(tmp_path / "credit.csv", n_majority=70, n_minority=30)


@pytest.fixture
def credit_profile(tmp_path, credit_csv) -> Path:
    return write_profile(tmp_path / "credit.profile", credit_csv)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
