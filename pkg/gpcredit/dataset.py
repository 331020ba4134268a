import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from errors import ConfigurationError, DatasetError, DatasetParseError, SchemaError
from models import ClassFractions, DatasetProfile, SplitSpec, build_model

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off", ""}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with binary labels and a designated minority class.

    Arrays are copied and frozen on construction so a Dataset can be shared
    between evaluation workers.
    """
    features: np.ndarray          # shape (n_rows, attribute_count)
    labels: np.ndarray            # one label literal per row
    minority_label: str
    name: str = "dataset"
    row_ids: Optional[np.ndarray] = field(default=None, repr=False)  # rows in the source file

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise DatasetError(f"Features must be a 2-D matrix, got shape {features.shape}")
        labels = np.array(self.labels, dtype=str)
        if labels.shape != (features.shape[0],):
            raise DatasetError("Labels must hold exactly one entry per row")
        row_ids = (
            np.arange(features.shape[0]) if self.row_ids is None else np.array(self.row_ids, dtype=np.int64)
        )
        for array in (features, labels, row_ids):
            array.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "row_ids", row_ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def attribute_count(self) -> int:
        return self.features.shape[1]

    @cached_property
    def minority_mask(self) -> np.ndarray:
        mask = self.labels == self.minority_label
        mask.setflags(write=False)
        return mask

    @property
    def n_minority(self) -> int:
        return int(self.minority_mask.sum())

    @property
    def n_majority(self) -> int:
        return len(self) - self.n_minority

    def subset(self, indices: np.ndarray, name: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            minority_label=self.minority_label,
            name=name or self.name,
            row_ids=self.row_ids[indices],
        )

    def require_both_classes(self, purpose: str = "evaluation") -> None:
        """Raise ConfigurationError unless both classes have at least one row"""
        if self.n_minority == 0 or self.n_majority == 0:
            raise ConfigurationError(
                f"Dataset '{self.name}' needs both classes for {purpose} "
                f"(minority: {self.n_minority}, majority: {self.n_majority})"
            )


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-attribute minimum and maximum used for min-max scaling"""
    minimums: np.ndarray
    maximums: np.ndarray

    def scale(self, features: np.ndarray, clip: bool = True) -> np.ndarray:
        """Min-max scale a feature matrix with these statistics.

        Constant attributes map to 0. With `clip`, values outside the
        original range are clipped into [0, 1].
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.minimums.shape[0]:
            raise SchemaError(
                f"Data has shape {features.shape}, statistics cover {self.minimums.shape[0]} attributes"
            )
        span = self.maximums - self.minimums
        constant = span == 0
        scaled = (features - self.minimums) / np.where(constant, 1.0, span)
        scaled[:, constant] = 0.0
        if clip:
            scaled = np.clip(scaled, 0.0, 1.0)
        return scaled

    def apply(self, d: Dataset, clip: bool = True) -> Dataset:
        """Scale another dataset with these statistics"""
        return Dataset(self.scale(d.features, clip), d.labels, d.minority_label, name=d.name, row_ids=d.row_ids)


def _read_frame(path: Path, header: bool, delimiter: str) -> pd.DataFrame:
    if not path.is_file():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    sep = r"\s+" if delimiter == "whitespace" else delimiter
    try:
        frame = pd.read_csv(path, sep=sep, header=0 if header else None, dtype=str,
                            skipinitialspace=True, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: file contains no rows") from None
    except pd.errors.ParserError as e:
        raise DatasetError(f"{path}: {e}") from None
    if frame.empty:
        raise DatasetError(f"{path}: file contains no rows")
    return frame


def _parse_numeric(path: Path, raw: pd.DataFrame, columns: List[int]) -> np.ndarray:
    """Convert string cells to floats, reporting the first bad cell by file row and column"""
    numeric = raw.apply(lambda series: pd.to_numeric(series.str.strip(), errors="coerce"))
    bad = np.argwhere(numeric.isna().to_numpy())
    if bad.size:
        row, feature = (int(v) for v in bad[0])
        raise DatasetParseError(path, row + 1, columns[feature], raw.iat[row, feature])
    return numeric.to_numpy(dtype=np.float64)


def load_features(path: PathLike, header: bool = False, delimiter: str = ",") -> np.ndarray:
    """Read an unlabelled file where every column is a feature"""
    path = Path(path)
    frame = _read_frame(path, header, delimiter)
    return _parse_numeric(path, frame, list(range(frame.shape[1])))


def load_csv(path: PathLike,
             label_column: int,
             minority_value: str,
             header: bool = False,
             delimiter: str = ",",
             name: Optional[str] = None) -> Dataset:
    """
    Load a delimited text file with one label column.

    Args:
        path: Data file
        label_column: Index of the label column (negative counts from the end)
        minority_value: Label literal of the minority (positive) class
        header: Whether the first line is a header row
        delimiter: "," or "whitespace"
        name: Dataset name used in logs and reports

    Returns:
        Dataset with rows in file order
    """
    path = Path(path)
    frame = _read_frame(path, header, delimiter)
    n_columns = frame.shape[1]
    column = label_column + n_columns if label_column < 0 else label_column
    if not 0 <= column < n_columns:
        raise SchemaError(f"{path}: label column {label_column} out of range for {n_columns} columns")

    labels = frame.iloc[:, column].str.strip().to_numpy(dtype=str)
    features = _parse_numeric(path, frame.drop(columns=frame.columns[column]),
                              [c for c in range(n_columns) if c != column])

    distinct = sorted(set(labels))
    minority_value = str(minority_value).strip()
    if len(distinct) != 2:
        raise SchemaError(f"{path}: expected exactly 2 distinct labels, found {len(distinct)}: {distinct[:5]}")
    if minority_value not in distinct:
        raise SchemaError(f"{path}: minority value '{minority_value}' not among labels {distinct}")

    dataset = Dataset(features, labels, minority_value, name=name or path.stem)
    logger.info(
        f"Loaded dataset - Name: {dataset.name} - Rows: {len(dataset)} - "
        f"Attributes: {dataset.attribute_count} - Minority: {dataset.n_minority}"
    )
    return dataset


def normalize(d: Dataset) -> Tuple[Dataset, NormStats]:
    """Min-max scale every attribute to [0, 1] using statistics of the whole dataset"""
    if len(d) == 0:
        raise ConfigurationError(f"Cannot normalize empty dataset '{d.name}'")
    stats = NormStats(d.features.min(axis=0), d.features.max(axis=0))
    return stats.apply(d), stats


def _split_count(n: int, fraction: float) -> int:
    # Exact decimal arithmetic keeps e.g. 0.29 * 100 from flooring to 28
    return int(Fraction(repr(fraction)) * n)


def stratified_split(d: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """
    Split each class independently so both splits keep the class imbalance.

    Per class the rows are shuffled with the split seed; the first
    floor(n * train_fraction) go to training, the next floor(n * test_fraction)
    to testing and the remainder is discarded.
    """
    rng = np.random.default_rng(spec.seed)
    train_parts, test_parts = [], []
    for role, mask, fractions in (
        ("minority", d.minority_mask, spec.minority),
        ("majority", ~d.minority_mask, spec.majority),
    ):
        rows = rng.permutation(np.flatnonzero(mask))
        n_train = _split_count(len(rows), fractions.train_fraction)
        n_test = _split_count(len(rows), fractions.test_fraction)
        if n_train < 1 or n_test < 1:
            raise ConfigurationError(
                f"Split of '{d.name}' leaves an empty {role} partition "
                f"(rows: {len(rows)}, train: {n_train}, test: {n_test})"
            )
        train_parts.append(rows[:n_train])
        test_parts.append(rows[n_train:n_train + n_test])

    train = d.subset(np.sort(np.concatenate(train_parts)), name=f"{d.name}-train")
    test = d.subset(np.sort(np.concatenate(test_parts)), name=f"{d.name}-test")
    logger.debug(
        f"Stratified split - Seed: {spec.seed} - Train: {train.n_minority}+{train.n_majority} - "
        f"Test: {test.n_minority}+{test.n_majority}"
    )
    return train, test


def _parse_bool(key: str, value: Optional[str]) -> bool:
    word = (value or "").strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ConfigurationError(f"Invalid {key}: expected a boolean, got '{value}'")


def load_profile(path: PathLike) -> DatasetProfile:
    """
    Read a dataset profile: a key-value file in .env syntax.

    Required keys are `path` and `minority_value`; `label_column`, `header`,
    `delimiter`, `name` and the four `<minority|majority>_<train|test>_fraction`
    keys are optional. A relative `path` is resolved against the profile's
    directory.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Dataset profile not found: {path}")
    values = dotenv_values(path)

    missing = [key for key in ("path", "minority_value") if not values.get(key)]
    if missing:
        raise ConfigurationError(f"Invalid {path}: missing key(s) {', '.join(missing)}")

    data_path = Path(values["path"])
    if not data_path.is_absolute():
        data_path = path.parent / data_path

    def fractions(role: str) -> ClassFractions:
        given = {}
        for part in ("train_fraction", "test_fraction"):
            key = f"{role}_{part}"
            if not values.get(key):
                continue
            try:
                given[part] = float(values[key])
            except ValueError:
                raise ConfigurationError(f"Invalid {key}: '{values[key]}'") from None
        return build_model(ClassFractions, **given)

    try:
        label_column = int(values.get("label_column") or -1)
    except ValueError:
        raise ConfigurationError(f"Invalid label_column: '{values.get('label_column')}'") from None

    return build_model(
        DatasetProfile,
        name=values.get("name") or path.stem,
        path=data_path,
        label_column=label_column,
        minority_value=values["minority_value"],
        header=_parse_bool("header", values.get("header")),
        delimiter=values.get("delimiter") or ",",
        minority=fractions("minority"),
        majority=fractions("majority"),
    )


def load_dataset(profile: DatasetProfile) -> Dataset:
    """Load the data file a profile describes"""
    return load_csv(
        profile.path,
        label_column=profile.label_column,
        minority_value=profile.minority_value,
        header=profile.header,
        delimiter=profile.delimiter,
        name=profile.name,
    )
