"""Imbalance-aware fitness functions for GP classifiers.

A tree predicts the minority class when its output is >= 0. Fitness always
contains the sum of the minority and majority hit rates; the error-based
variants add how far the misclassified outputs sit on the wrong side of
zero, summarized per class by the extreme range, the mean or the median.
"""
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence, Tuple

import numpy as np

from errors import ConfigurationError
from expr_tree import ExprTree, evaluate

if TYPE_CHECKING:
    from dataset import Dataset


class FitnessKind(str, Enum):
    """The four fitness functions, in declaration (and reporting) order"""
    EQUAL = "equal"
    ERRORS = "errors"
    ERRORS_MEAN = "errors-mean"
    ERRORS_MEDIAN = "errors-median"

    @classmethod
    def parse(cls, name: str) -> "FitnessKind":
        try:
            return cls(name.strip())
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise ConfigurationError(f"Invalid fitness '{name}': expected one of {choices}") from None

    @property
    def label(self) -> str:
        """Classifier label used in result tables, e.g. C_errors_mean"""
        return "C_" + self.value.replace("-", "_")

    @property
    def maximum(self) -> float:
        return 2.0 if self is FitnessKind.EQUAL else 4.0


@dataclass(frozen=True)
class ConfusionCounts:
    """Outcome tallies; positive means the minority class"""
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def n_minority(self) -> int:
        return self.tp + self.fn

    @property
    def n_majority(self) -> int:
        return self.tn + self.fp

    @property
    def tp_rate(self) -> float:
        return self.tp / self.n_minority

    @property
    def tn_rate(self) -> float:
        return self.tn / self.n_majority

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.n_minority + self.n_majority)


@dataclass(frozen=True)
class Metrics:
    """Test-set rates reported for a classifier"""
    tp_rate: float
    tn_rate: float
    accuracy: float

    @classmethod
    def from_counts(cls, c: ConfusionCounts) -> "Metrics":
        if c.n_minority == 0 or c.n_majority == 0:
            raise ConfigurationError(
                f"Metrics need both classes (minority: {c.n_minority}, majority: {c.n_majority})"
            )
        return cls(tp_rate=c.tp_rate, tn_rate=c.tn_rate, accuracy=c.accuracy)


@dataclass(frozen=True)
class ErrorSamples:
    """Scaled magnitudes of the incorrect outputs, grouped by true class"""
    minority: Tuple[float, ...] = ()
    majority: Tuple[float, ...] = ()


def scale_error(gpout: float) -> float:
    """Map |gpout| into [0, 1): 0 for no error, approaching 1 for large errors"""
    magnitude = abs(gpout)
    return magnitude / (1.0 + magnitude)


def _scale_errors(gpouts: np.ndarray) -> Tuple[float, ...]:
    magnitudes = np.abs(gpouts)
    return tuple((magnitudes / (1.0 + magnitudes)).tolist())


def collect_outcomes(tree: ExprTree, data: "Dataset") -> Tuple[ConfusionCounts, ErrorSamples]:
    """
    Apply the sign rule to every example and tally the outcomes.

    Returns the confusion counts and, for each misclassified example, the
    scaled magnitude of its output filed under its true class.
    """
    data.require_both_classes("fitness evaluation")
    gpout = evaluate(tree, data.features)
    is_minority = data.minority_mask
    predicted_minority = gpout >= 0

    missed_minority = is_minority & ~predicted_minority
    false_alarm = ~is_minority & predicted_minority
    counts = ConfusionCounts(
        tp=int(np.count_nonzero(is_minority & predicted_minority)),
        fn=int(np.count_nonzero(missed_minority)),
        tn=int(np.count_nonzero(~is_minority & ~predicted_minority)),
        fp=int(np.count_nonzero(false_alarm)),
    )
    samples = ErrorSamples(
        minority=_scale_errors(gpout[missed_minority]),
        majority=_scale_errors(gpout[false_alarm]),
    )
    return counts, samples


def f_equal(c: ConfusionCounts) -> float:
    """Minority hit rate plus majority hit rate, in [0, 2]"""
    if c.n_minority == 0 or c.n_majority == 0:
        raise ConfigurationError(
            f"Fitness needs both classes (minority: {c.n_minority}, majority: {c.n_majority})"
        )
    return c.tp / c.n_minority + c.tn / c.n_majority


def err_range(samples: Sequence[float]) -> float:
    """Midpoint of the largest and smallest incorrect magnitudes; 0 if none"""
    if len(samples) == 0:
        return 0.0
    return (max(samples) + min(samples)) / 2


def err_mean(samples: Sequence[float]) -> float:
    """Arithmetic mean of the incorrect magnitudes; 0 if none"""
    if len(samples) == 0:
        return 0.0
    return float(np.mean(samples))


def err_median(samples: Sequence[float]) -> float:
    """Median of the incorrect magnitudes; 0 if none.

    Even-length lists average the two middle values so the result stays in [0, 1].
    """
    m = len(samples)
    if m == 0:
        return 0.0
    ordered = sorted(samples)
    middle = m // 2
    if m % 2:
        return ordered[middle]
    return (ordered[middle - 1] + ordered[middle]) / 2


ESTIMATORS = {
    FitnessKind.ERRORS: err_range,
    FitnessKind.ERRORS_MEAN: err_mean,
    FitnessKind.ERRORS_MEDIAN: err_median,
}


def fitness(kind: FitnessKind, c: ConfusionCounts, e: ErrorSamples) -> float:
    """Fitness of one evaluation under the given kind (higher is better)"""
    accuracy_term = f_equal(c)
    if kind is FitnessKind.EQUAL:
        return accuracy_term
    estimator = ESTIMATORS[kind]
    return accuracy_term + (1.0 - estimator(e.minority)) + (1.0 - estimator(e.majority))


@dataclass(frozen=True)
class FitnessFunction:
    """Picklable fitness handle: (tree, dataset) -> fitness"""
    kind: FitnessKind

    def __call__(self, tree: ExprTree, data: "Dataset") -> float:
        counts, samples = collect_outcomes(tree, data)
        return fitness(self.kind, counts, samples)
