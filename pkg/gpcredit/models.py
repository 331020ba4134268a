from pathlib import Path
from typing import List, Optional, Tuple, Type, TypeVar
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigurationError
from fitness import FitnessKind

MAX_SEED = 2 ** 64 - 1

M = TypeVar("M", bound=BaseModel)


def build_model(model_cls: Type[M], **values) -> M:
    """Construct a model, turning pydantic validation failures into ConfigurationError.

    The message names the first failing field so the CLI can report it directly.
    """
    try:
        return model_cls(**values)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ())) or model_cls.__name__
        raise ConfigurationError(f"Invalid {location}: {first.get('msg')}") from e


class EvolutionParams(BaseModel):
    """Evolutionary parameters for a single GP run"""
    model_config = ConfigDict(frozen=True)

    population_size: int = Field(500, ge=1)
    generations: int = Field(1000, ge=0)   # 0 returns the best initial individual
    p_crossover: float = Field(0.9, ge=0.0, le=1.0)
    p_mutation: float = Field(0.1, ge=0.0, le=1.0)
    tournament_size: int = Field(3, ge=1)
    max_depth: int = Field(17, ge=0)
    init_depth_range: Tuple[int, int] = (2, 6)
    elitism_count: int = Field(1, ge=0)
    seed: int = Field(0, ge=0, le=MAX_SEED)

    @field_validator("init_depth_range")
    @classmethod
    def _check_depth_range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        low, high = value
        if low < 0 or high < low:
            raise ValueError(f"expected 0 <= min <= max, got {value}")
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "EvolutionParams":
        if abs(self.p_crossover + self.p_mutation - 1.0) > 1e-9:
            raise ValueError("p_crossover + p_mutation must equal 1")
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size must not exceed population_size")
        if self.elitism_count > self.population_size:
            raise ValueError("elitism_count must not exceed population_size")
        if self.init_depth_range[1] > self.max_depth:
            raise ValueError("init_depth_range max must not exceed max_depth")
        return self

    def with_seed(self, seed: int) -> "EvolutionParams":
        return self.model_copy(update={"seed": seed})

    def with_population(self, population_size: int) -> "EvolutionParams":
        """Copy with a new population size, shrinking the tournament if needed"""
        return build_model(
            EvolutionParams,
            **{
                **self.model_dump(),
                "population_size": population_size,
                "tournament_size": min(self.tournament_size, population_size),
                "elitism_count": min(self.elitism_count, population_size),
            },
        )


class ClassFractions(BaseModel):
    """Share of one class that goes to the training and test splits"""
    model_config = ConfigDict(frozen=True)

    train_fraction: float = Field(0.5, ge=0.0, le=1.0)
    test_fraction: float = Field(0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_total(self) -> "ClassFractions":
        if self.train_fraction + self.test_fraction > 1.0 + 1e-12:
            raise ValueError("train_fraction + test_fraction must not exceed 1")
        return self


class SplitSpec(BaseModel):
    """Per-class stratified split specification"""
    model_config = ConfigDict(frozen=True)

    minority: ClassFractions = ClassFractions()
    majority: ClassFractions = ClassFractions()
    seed: int = Field(0, ge=0, le=MAX_SEED)

    def with_seed(self, seed: int) -> "SplitSpec":
        return self.model_copy(update={"seed": seed})


class DatasetProfile(BaseModel):
    """Schema of a credit dataset file plus its split fractions"""
    model_config = ConfigDict(frozen=True)

    name: str
    path: Path
    label_column: int = -1        # -1 is the last column
    minority_value: str
    header: bool = False
    delimiter: str = ","          # "," or "whitespace"
    minority: ClassFractions = ClassFractions()
    majority: ClassFractions = ClassFractions()

    @field_validator("delimiter")
    @classmethod
    def _check_delimiter(cls, value: str) -> str:
        if value not in (",", "whitespace"):
            raise ValueError("delimiter must be ',' or 'whitespace'")
        return value

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(minority=self.minority, majority=self.majority, seed=seed)


class RunConfig(BaseModel):
    """Fully resolved configuration for the run and sweep commands"""
    model_config = ConfigDict(frozen=True)

    dataset_profile: Path
    fitness: List[FitnessKind] = [FitnessKind.EQUAL]
    params: EvolutionParams = EvolutionParams()
    n_runs: int = Field(30, ge=1)
    output_dir: Path = Path("./results")
    jobs: int = Field(1, ge=1)
    fixed_split: bool = False
    sizes: Optional[List[int]] = None

    @field_validator("dataset_profile")
    @classmethod
    def _check_profile_exists(cls, value: Path) -> Path:
        if not value.is_file():
            raise ValueError(f"dataset profile not found: {value}")
        return value

    @field_validator("fitness")
    @classmethod
    def _check_fitness(cls, value: List[FitnessKind]) -> List[FitnessKind]:
        if not value:
            raise ValueError("at least one fitness kind is required")
        return value

    @field_validator("sizes")
    @classmethod
    def _check_sizes(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and (not value or any(size < 1 for size in value)):
            raise ValueError("sizes must be a non-empty list of positive counts")
        return value
