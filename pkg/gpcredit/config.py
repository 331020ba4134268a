import os
from dataclasses import dataclass, field
from typing import Tuple
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(f"GPCREDIT_{name}", default))


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(f"GPCREDIT_{name}", default))


def _env_sizes(name: str, default: Tuple[int, ...]) -> Tuple[int, ...]:
    raw = os.getenv(f"GPCREDIT_{name}")
    if not raw:
        return default
    return tuple(int(part) for part in raw.split(",") if part.strip())


@dataclass
class Config:
    """Configuration settings for the GP credit classifier"""
    # Experimental protocol (evolutionary parameter table)
    N_RUNS: int = field(default_factory=lambda: _env_int("N_RUNS", 30))
    POPULATION_SIZE: int = field(default_factory=lambda: _env_int("POPULATION_SIZE", 500))
    GENERATIONS: int = field(default_factory=lambda: _env_int("GENERATIONS", 1000))
    P_CROSSOVER: float = field(default_factory=lambda: _env_float("P_CROSSOVER", 0.9))
    P_MUTATION: float = field(default_factory=lambda: _env_float("P_MUTATION", 0.1))
    TOURNAMENT_SIZE: int = field(default_factory=lambda: _env_int("TOURNAMENT_SIZE", 3))

    # Tree shape and survival
    MAX_DEPTH: int = field(default_factory=lambda: _env_int("MAX_DEPTH", 17))
    INIT_DEPTH_MIN: int = field(default_factory=lambda: _env_int("INIT_DEPTH_MIN", 2))
    INIT_DEPTH_MAX: int = field(default_factory=lambda: _env_int("INIT_DEPTH_MAX", 6))
    ELITISM_COUNT: int = field(default_factory=lambda: _env_int("ELITISM_COUNT", 1))

    # Reproducibility and workers
    SEED: int = field(default_factory=lambda: _env_int("SEED", 0))
    JOBS: int = field(default_factory=lambda: _env_int("JOBS", 1))

    # Population-size sweep
    SWEEP_SIZES: Tuple[int, ...] = field(
        default_factory=lambda: _env_sizes("SWEEP_SIZES", (100, 200, 300, 400, 500))
    )

    # CI-speed preset, not the published setting
    SCALED_POPULATION: int = 100
    SCALED_GENERATIONS: int = 100
    SCALED_RUNS: int = 10

    # Output and logging
    OUTPUT_DIR: str = field(default_factory=lambda: os.getenv("GPCREDIT_OUTPUT_DIR", "./results"))
    LOG_FILE: str = field(default_factory=lambda: os.getenv("GPCREDIT_LOG_FILE", "gp_credit.log"))
    LOG_LEVEL: str = field(default_factory=lambda: os.getenv("GPCREDIT_LOG_LEVEL", "INFO"))

config = Config()
