import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import dotenv_values

from config import Config, config
from dataset import load_csv, load_dataset, load_features, load_profile, normalize
from errors import ConfigurationError, DatasetError
from evaluation import metrics, run_protocol, sweep, write_run_outputs, write_sweep
from expr_tree import ParseError, TreeStructureError, parse_sexpr
from fitness import FitnessKind
from gp_engine import ClassLabel, predict_minority
from models import EvolutionParams, RunConfig, build_model

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Keys accepted in --config files; each matches an argparse destination
CONFIG_KEYS = {
    "dataset", "fitness", "seed", "population", "generations", "n_runs", "sizes", "output",
    "jobs", "fixed_split", "crossover", "mutation", "tournament", "max_depth", "elitism",
}
_INT_KEYS = {"seed", "population", "generations", "n_runs", "jobs", "tournament", "max_depth", "elitism"}
_FLOAT_KEYS = {"crossover", "mutation"}


def configure_logging(level: str, log_file: Optional[str]) -> None:
    """Console plus file logging in the project-wide format"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, delay=True))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, handlers=handlers)


def _sizes(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated counts, got '{text}'") from None


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    # Every default is None so explicitly given flags can be told apart from
    # config-file and preset values; the documented defaults live in Config.
    parser.add_argument("--dataset", help="dataset profile file")
    parser.add_argument("--config", help="key-value run-config file (flags override it)")
    parser.add_argument("--fitness",
                        help="fitness kind(s), comma-separated: equal, errors, errors-mean, errors-median "
                             "(default: equal)")
    parser.add_argument("--seed", type=int, help=f"base seed; run i uses seed+i (default: {config.SEED})")
    parser.add_argument("--population", type=int, help=f"population size (default: {config.POPULATION_SIZE})")
    parser.add_argument("--generations", type=int, help=f"number of generations (default: {config.GENERATIONS})")
    parser.add_argument("--n-runs", dest="n_runs", type=int, help=f"independent runs (default: {config.N_RUNS})")
    parser.add_argument("--crossover", type=float, help=f"crossover probability (default: {config.P_CROSSOVER})")
    parser.add_argument("--mutation", type=float, help=f"mutation probability (default: {config.P_MUTATION})")
    parser.add_argument("--tournament", type=int, help=f"tournament size (default: {config.TOURNAMENT_SIZE})")
    parser.add_argument("--max-depth", dest="max_depth", type=int,
                        help=f"maximum tree depth (default: {config.MAX_DEPTH})")
    parser.add_argument("--elitism", type=int, help=f"elites per generation (default: {config.ELITISM_COUNT})")
    parser.add_argument("--output", help=f"output directory (default: {config.OUTPUT_DIR})")
    parser.add_argument("--jobs", type=int, help=f"parallel workers (default: {config.JOBS})")
    parser.add_argument("--fixed-split", dest="fixed_split", action="store_true", default=None,
                        help="use one train/test split (base seed) for every run")
    parser.add_argument("--scaled", action="store_true",
                        help=f"CI preset: population {config.SCALED_POPULATION}, "
                             f"generations {config.SCALED_GENERATIONS}, runs {config.SCALED_RUNS} "
                             f"(not the published setting)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpcredit",
        description="Genetic-programming classifiers for imbalanced credit datasets",
    )
    parser.add_argument("--log-level", dest="log_level", default=config.LOG_LEVEL, help="logging level")
    parser.add_argument("--log-file", dest="log_file", default=config.LOG_FILE,
                        help="log file ('' disables file logging)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the multi-run protocol and write result tables")
    _add_run_options(run)

    sweep_parser = commands.add_parser("sweep", help="average best fitness across population sizes")
    _add_run_options(sweep_parser)
    sweep_parser.add_argument("--sizes", type=_sizes,
                              help="population sizes, comma-separated (default: "
                                   + ",".join(str(s) for s in config.SWEEP_SIZES) + ")")

    predict = commands.add_parser("predict", help="classify rows with a saved tree")
    predict.add_argument("tree_file", help="s-expression tree file")
    predict.add_argument("data_file", help="data file to classify")
    predict.add_argument("--label-column", dest="label_column", type=int,
                         help="label column index; enables metrics (-1 = last column)")
    predict.add_argument("--minority-value", dest="minority_value", help="minority label literal")
    predict.add_argument("--header", action="store_true", help="data file has a header row")
    predict.add_argument("--delimiter", default=",", choices=[",", "whitespace"], help="field delimiter")
    predict.add_argument("--profile", help="normalize with the full-data statistics of this dataset profile")
    return parser


def _config_file_values(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    if not Path(path).is_file():
        raise ConfigurationError(f"Invalid config: file not found: {path}")
    values: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        if key not in CONFIG_KEYS:
            logger.warning(f"Ignoring unknown config key - File: {path} - Key: {key}")
            continue
        if raw is None or raw == "":
            continue
        try:
            if key in _INT_KEYS:
                values[key] = int(raw)
            elif key in _FLOAT_KEYS:
                values[key] = float(raw)
            elif key == "sizes":
                values[key] = _sizes(raw)
            elif key == "fixed_split":
                values[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                values[key] = raw
        except (ValueError, argparse.ArgumentTypeError):
            raise ConfigurationError(f"Invalid {key}: '{raw}' in {path}") from None
    return values


def _layered(args: argparse.Namespace, settings: Config) -> Dict[str, Any]:
    """Merge built-ins, the scaled preset, the config file and explicit flags, lowest first"""
    merged: Dict[str, Any] = {
        "fitness": FitnessKind.EQUAL.value,
        "seed": settings.SEED,
        "population": settings.POPULATION_SIZE,
        "generations": settings.GENERATIONS,
        "n_runs": settings.N_RUNS,
        "sizes": list(settings.SWEEP_SIZES),
        "output": settings.OUTPUT_DIR,
        "jobs": settings.JOBS,
        "fixed_split": False,
        "tournament": settings.TOURNAMENT_SIZE,
        "max_depth": settings.MAX_DEPTH,
        "elitism": settings.ELITISM_COUNT,
        "crossover": None,
        "mutation": None,
        "dataset": None,
    }
    if args.scaled:
        merged.update(population=settings.SCALED_POPULATION,
                      generations=settings.SCALED_GENERATIONS,
                      n_runs=settings.SCALED_RUNS)
    merged.update(_config_file_values(args.config))
    merged.update({key: value for key, value in vars(args).items()
                   if key in CONFIG_KEYS and value is not None})

    # One probability implies the other
    crossover, mutation = merged["crossover"], merged["mutation"]
    if crossover is None and mutation is None:
        crossover, mutation = settings.P_CROSSOVER, settings.P_MUTATION
    elif crossover is None:
        crossover = 1.0 - mutation
    elif mutation is None:
        mutation = 1.0 - crossover
    merged["crossover"], merged["mutation"] = crossover, mutation
    return merged


def resolve_run_config(args: argparse.Namespace, settings: Config = config) -> RunConfig:
    """Build a validated RunConfig from flags, config file and defaults"""
    merged = _layered(args, settings)
    if not merged["dataset"]:
        raise ConfigurationError("Invalid dataset_profile: no dataset profile given (use --dataset)")

    kinds = [FitnessKind.parse(name) for name in str(merged["fitness"]).split(",") if name.strip()]
    params = build_model(
        EvolutionParams,
        population_size=merged["population"],
        generations=merged["generations"],
        p_crossover=merged["crossover"],
        p_mutation=merged["mutation"],
        tournament_size=merged["tournament"],
        max_depth=merged["max_depth"],
        init_depth_range=(settings.INIT_DEPTH_MIN, min(settings.INIT_DEPTH_MAX, merged["max_depth"])),
        elitism_count=merged["elitism"],
        seed=merged["seed"],
    )
    return build_model(
        RunConfig,
        dataset_profile=Path(merged["dataset"]),
        fitness=kinds,
        params=params,
        n_runs=merged["n_runs"],
        output_dir=Path(merged["output"]),
        jobs=merged["jobs"],
        fixed_split=merged["fixed_split"],
        sizes=merged["sizes"],
    )


def cmd_run(run_config: RunConfig) -> int:
    """Run the protocol for every requested fitness kind and write the result tables"""
    profile = load_profile(run_config.dataset_profile)
    data, _ = normalize(load_dataset(profile))
    summaries = [
        run_protocol(profile, kind, run_config.params, run_config.n_runs,
                     jobs=run_config.jobs, fixed_split=run_config.fixed_split, data=data)
        for kind in run_config.fitness
    ]
    table = write_run_outputs(summaries, run_config.output_dir)
    print(f"Dataset: {profile.name} - Runs: {run_config.n_runs} - Output: {run_config.output_dir}")
    print(table.text, end="")
    return 0


def cmd_sweep(run_config: RunConfig) -> int:
    """Population-size sweep for a single fitness kind"""
    if len(run_config.fitness) != 1:
        names = ",".join(kind.value for kind in run_config.fitness)
        raise ConfigurationError(f"Invalid fitness: sweep takes exactly one fitness kind, got '{names}'")
    profile = load_profile(run_config.dataset_profile)
    data, _ = normalize(load_dataset(profile))
    kind = run_config.fitness[0]
    result = sweep(profile, kind, run_config.sizes, run_config.params, run_config.n_runs,
                   jobs=run_config.jobs, fixed_split=run_config.fixed_split, data=data)
    path = Path(run_config.output_dir) / "sweep.csv"
    write_sweep(result, path)
    print(f"Dataset: {profile.name} - Fitness: {kind.value} - Output: {path}")
    for size, value in result.final.items():
        print(f"Population {size}: mean best fitness {value:.6f}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    """Print one predicted class per row, plus metrics when labels are available"""
    tree = parse_sexpr(Path(args.tree_file).read_text(encoding="utf-8"))

    labelled = args.label_column is not None
    if labelled:
        if args.minority_value is None:
            raise ConfigurationError("Invalid minority_value: --minority-value is required with --label-column")
        data = load_csv(args.data_file, args.label_column, args.minority_value,
                        header=args.header, delimiter=args.delimiter)
        features = data.features
    else:
        data = None
        features = load_features(args.data_file, header=args.header, delimiter=args.delimiter)

    if tree.max_feature_index() >= features.shape[1]:
        raise TreeStructureError(
            f"Tree uses x{tree.max_feature_index()} but {args.data_file} has {features.shape[1]} attributes"
        )

    if args.profile:
        _, stats = normalize(load_dataset(load_profile(args.profile)))
        features = stats.scale(features)
        if data is not None:
            data = stats.apply(data)

    for is_minority in predict_minority(tree, features):
        print((ClassLabel.MINORITY if is_minority else ClassLabel.MAJORITY).value)

    if data is not None:
        result = metrics(tree, data)
        print(f"TP Rate: {result.tp_rate:.3f} - TN Rate: {result.tn_rate:.3f} - Accuracy: {result.accuracy:.3f}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_file or None)

    try:
        if args.command == "predict":
            return cmd_predict(args)
        run_config = resolve_run_config(args)
        if args.command == "sweep":
            return cmd_sweep(run_config)
        return cmd_run(run_config)
    except (ConfigurationError, DatasetError, ParseError, TreeStructureError, FileNotFoundError) as e:
        logger.error(f"Command failed - Command: {args.command} - Error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
