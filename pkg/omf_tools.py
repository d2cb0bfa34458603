"""!
@file omf_tools.py
@brief Command-line front end: train dictionaries, solve single lasso problems, project vectors, run
factorization presets and merge metrics for plotting.
@details Every subcommand reads and writes the matrix file formats of data_io. Training runs write their outputs
(dictionary.bin, metrics.csv, experiment.cfg, run.log) into one output directory.
@author Leland Green
@version 0.1.0
@date_created 2025-02-26
@date_modified 2025-04-04
@license MIT
"""

__author__ = "Leland Green"

from _version import version
__version__ = version
__date_created__ = "2025-02-26"
__license__ = "MIT"

f"""
OMF Tools Version: {__version__}

Version 0.1.0: Initial release. Online dictionary learning and matrix factorization from the command line.

Author: {__author__}
Date Created: {__date_created__}
License: {__license__}

First install the required packages:
    pip install -r requirements.txt

Then you can run:
    python omf_tools.py -h
For usage information.
"""

import argparse
import configparser
import csv
import os
import sys
import traceback
from dataclasses import asdict, dataclass, fields
from datetime import datetime

import numpy as np

from data_io import (SUPPORTED_RASTERS, MatrixFormatError, PatchSpec, RasterFormatError, images_to_patches,
                     load_matrix, load_vector, preprocess, save_matrix, split_columns, synth_planted)
from factorization_presets import (DEFAULT_PREPROCESSING, FactorizationKind, PresetKind, factorize,
                                   group_factorize, make_preset)
from file_tools import find_files_in_directory, get_matching_files
from online_learner import LearnerMode, OnlineLearner
from projections import (ConstraintKind, ConstraintSet, elastic_net_value, project_elastic_net)
from sparse_coding import PenaltyConfig, StopRule, kkt_residual, lars_lasso_path, lasso_objective

CONSTRAINTS = ("l2", "nonneg", "elastic", "fused")
PENALTIES = ("l1", "elastic", "group")
COMPARE_HEADER = ("run", "wall_clock_s", "test_obj")
SEED_VARIABLE = "OMF_SEED"
SECTION = "experiment"


def _optional(parse):
    def parse_optional(text):
        return None if text.strip().lower() in ("", "none") else parse(text.strip())
    return parse_optional


def _boolean(text):
    value = text.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"Not a boolean: {text!r}")


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """!
    @brief One experiment: data source, problem, learner knobs, split and outputs.
    @details Exactly one of data (matrix file), images (directory of PGM/PPM files) and synthetic
    ("m,k,n,s,sigma") names the samples. center/normalize None use the preset's preprocessing.
    """
    data: str | None = None
    images: str | None = None
    synthetic: str | None = None
    patch: int = 8
    channels: int = 1
    max_patches: int = 20000
    preset: str = "dict_learn"
    k: int = 256
    l1_weight: float | None = None
    batch_size: int = 512
    forget_exponent: float = 0.0
    forget_start: int | None = None
    warmup: float = 0.0
    epochs: float = 1.0
    iterations: int | None = None
    purge: bool = False
    constraint: str = "l2"
    gamma: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    penalty: str = "l1"
    l2_weight: float = 0.0
    group_size: int = 1
    mode: str = "online"
    test_fraction: float = 0.1
    checkpoint_growth: float = 1.5
    eval_size: int = 1000
    center: bool | None = None
    normalize: bool | None = None
    output: str = "omf_run"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        sources = [s for s in (self.data, self.images, self.synthetic) if s is not None]
        if len(sources) != 1:
            raise ValueError("Give exactly one data source: --data, --images or --synthetic.")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}.")
        FactorizationKind(self.preset)
        LearnerMode(self.mode)
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {', '.join(CONSTRAINTS)}, got {self.constraint!r}.")
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {', '.join(PENALTIES)}, got {self.penalty!r}.")
        if self.patch < 1 or self.channels not in (1, 3) or self.max_patches < 1 or self.group_size < 1:
            raise ValueError("patch, max_patches and group_size must be >= 1; channels must be 1 or 3.")
        if self.synthetic is not None:
            self.synthetic_model()

    # --- text form -----------------------------------------------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{name} = {_format(value)}\n" for name, value in asdict(self).items())

    @staticmethod
    def parse_text(text: str) -> dict:
        """!@brief Parses flat key = value lines into a dict of typed values (unknown keys are an error)."""
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(f"[{SECTION}]\n" + text)
        except configparser.Error as e:
            raise ValueError(f"Malformed experiment configuration: {e}") from e
        values = {}
        for key, raw in parser[SECTION].items():
            if key not in _FIELD_PARSERS:
                raise ValueError(f"Unknown experiment setting {key!r}.")
            try:
                values[key] = _FIELD_PARSERS[key](raw)
            except ValueError as e:
                raise ValueError(f"Bad value for {key}: {raw!r} ({e})") from e
        return values

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls(**cls.parse_text(text))

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())

    # --- mapping onto the library ------------------------------------------------------------------------------

    def synthetic_model(self):
        try:
            m, k, n, s, sigma = self.synthetic.split(",")
            return int(m), int(k), int(n), int(s), float(sigma)
        except ValueError as e:
            raise ValueError(f"Synthetic source must read 'm,k,n,s,sigma', got {self.synthetic!r}.") from e

    def preset_kind(self) -> PresetKind:
        kind = FactorizationKind(self.preset)
        if self.penalty == "group":
            if kind not in (FactorizationKind.DICT_LEARN, FactorizationKind.GROUP_DICT_LEARN):
                raise ValueError(f"The group penalty only applies to dictionary learning, not {kind.value}.")
            kind = FactorizationKind.GROUP_DICT_LEARN
        gamma = self.gamma if kind == FactorizationKind.SPCA else 0.0
        return PresetKind(kind, self.l1_weight, gamma)

    def preprocessing(self):
        center, normalize = DEFAULT_PREPROCESSING[self.preset_kind().kind]
        return (center if self.center is None else self.center,
                normalize if self.normalize is None else self.normalize)

    def learner_overrides(self) -> dict:
        kind = self.preset_kind().kind
        nonneg = kind in (FactorizationKind.NMF, FactorizationKind.NNSC)
        overrides = dict(batch_size=self.batch_size, forget_exponent=self.forget_exponent,
                         forget_start=self.forget_start, warmup=self.warmup, epochs=self.epochs,
                         iterations=self.iterations, purge_fixed_dataset=self.purge, mode=LearnerMode(self.mode),
                         rng_seed=self.seed, threads=self.threads, checkpoint_growth=self.checkpoint_growth,
                         eval_size=self.eval_size)
        if self.constraint == "nonneg":
            overrides["constraint"] = ConstraintSet(ConstraintKind.NONNEG_L2_BALL)
        elif self.constraint == "elastic" and kind != FactorizationKind.SPCA:
            overrides["constraint"] = ConstraintSet(ConstraintKind.ELASTIC_NET_BALL, gamma=self.gamma, nonneg=nonneg)
        elif self.constraint == "fused":
            overrides["constraint"] = ConstraintSet(ConstraintKind.FUSED_LASSO_BALL, gamma1=self.gamma1,
                                                    gamma2=self.gamma2)
        if self.penalty == "elastic":
            overrides["penalty"] = PenaltyConfig(l2_weight=self.l2_weight)
        return overrides


_FIELD_PARSERS = {
    "data": _optional(str), "images": _optional(str), "synthetic": _optional(str), "patch": int, "channels": int,
    "max_patches": int, "preset": str.strip, "k": int, "l1_weight": _optional(float), "batch_size": int,
    "forget_exponent": float, "forget_start": _optional(int), "warmup": float, "epochs": float,
    "iterations": _optional(int), "purge": _boolean, "constraint": str.strip, "gamma": float, "gamma1": float,
    "gamma2": float, "penalty": str.strip, "l2_weight": float, "group_size": int, "mode": str.strip,
    "test_fraction": float, "checkpoint_growth": float, "eval_size": int, "center": _optional(_boolean),
    "normalize": _optional(_boolean), "output": str.strip, "seed": int, "threads": int,
}
assert set(_FIELD_PARSERS) == {f.name for f in fields(ExperimentConfig)}


# --- shared plumbing ---------------------------------------------------------------------------------------------

def load_samples(config: ExperimentConfig, verbose=False) -> np.ndarray:
    """!@brief The m x n sample matrix named by the configuration's data source."""
    if config.data is not None:
        return load_matrix(config.data)
    if config.images is not None:
        paths = find_files_in_directory(config.images, SUPPORTED_RASTERS, verbose)
        if not paths:
            raise ValueError(f"No PGM/PPM images found in {config.images}.")
        if verbose:
            print(f"Extracting up to {config.max_patches} patches of {config.patch}x{config.patch} "
                  f"from {len(paths)} image(s)...")
        return images_to_patches(paths, PatchSpec(config.patch, 1, config.channels), config.max_patches, config.seed)
    m, k, n, s, sigma = config.synthetic_model()
    X, _ = synth_planted(m, k, n, s, sigma, config.seed)
    return X


def _as_groups(X, size):
    return [X[:, i:i + size] for i in range(0, X.shape[1], size)]


def _timestamp():
    return datetime.now().strftime("%Y-%m-%d %H:%M:%S")


def write_run_log(output_dir, title, config: ExperimentConfig, summary, verbose=False):
    """!@brief Appends the configuration and a summary block to run.log (and echoes it when verbose)."""
    lines = [f'=== {_timestamp()} {title} for "{config.output}" ===']
    lines += [f"{name} = {_format(value)}" for name, value in asdict(config).items()]
    lines += summary
    lines.append(f"=== {_timestamp()} End of run ===")
    with open(os.path.join(output_dir, "run.log"), "a") as log_file:
        for line in lines:
            if verbose:
                print(line)
            log_file.write(line + "\n")


def _prepare(config: ExperimentConfig, verbose):
    os.makedirs(config.output, exist_ok=True)
    X = load_samples(config, verbose)
    train_X, test_X = split_columns(X, config.test_fraction, config.seed)
    if verbose:
        print(f"Samples: {X.shape[1]} of dimension {X.shape[0]} ({train_X.shape[1]} train, {test_X.shape[1]} test)")
    return train_X, test_X


def _trace_summary(trace, dictionary):
    last = trace[-1]
    return [f"Iterations: {last.iteration}", f"Wall clock (s): {last.wall_clock_s:.6f}",
            f"Train objective: {last.train_obj:.10g}", f"Test objective: {last.test_obj:.10g}",
            f"Surrogate objective: {last.surrogate_obj:.10g}", f"Mean nonzeros per code: {last.mean_nnz:.4f}",
            f"Dictionary: {dictionary.m} x {dictionary.k}, density {dictionary.density():.4f}"]


# --- subcommands -------------------------------------------------------------------------------------------------

def cmd_train(config: ExperimentConfig, verbose=False) -> int:
    """!
    @brief Online or batch training; writes dictionary.bin, metrics.csv, experiment.cfg and run.log.
    @return Exit code 0.
    """
    train_X, test_X = _prepare(config, verbose)
    center, normalize = config.preprocessing()
    train_X = preprocess(train_X, center, normalize)
    test_X = preprocess(test_X, center, normalize)
    learner_config = make_preset(config.preset_kind(), train_X.shape[0], config.k, **config.learner_overrides())
    learner = OnlineLearner(learner_config, verbose)
    if learner_config.group_coding:
        dictionary, trace = learner.train_groups(_as_groups(train_X, config.group_size),
                                                 _as_groups(test_X, config.group_size))
    else:
        dictionary, trace = learner.train(train_X, test_X)
    save_matrix(dictionary.atoms, os.path.join(config.output, "dictionary.bin"))
    trace.write_csv(os.path.join(config.output, "metrics.csv"))
    config.save(os.path.join(config.output, "experiment.cfg"))
    write_run_log(config.output, "OMF training run", config, _trace_summary(trace, dictionary), verbose)
    print(f"Saved dictionary and metrics to: {config.output}")
    return 0


def cmd_factorize(config: ExperimentConfig, verbose=False) -> int:
    """!@brief Runs a factorization preset; like train, plus codes.bin and the dictionary density."""
    train_X, test_X = _prepare(config, verbose)
    center, normalize = config.preprocessing()
    preset = config.preset_kind()
    overrides = config.learner_overrides()
    if preset.kind == FactorizationKind.GROUP_DICT_LEARN:
        dictionary, group_codes, trace = group_factorize(
            _as_groups(train_X, config.group_size), preset, config.k, _as_groups(test_X, config.group_size),
            normalize=normalize, verbose=verbose, **overrides)
        codes = np.hstack(group_codes)
        density = dictionary.density()
    else:
        result = factorize(train_X, preset, config.k, test_X, center, normalize, verbose, **overrides)
        dictionary, codes, trace, density = result.dictionary, result.codes, result.trace, result.density
    save_matrix(dictionary.atoms, os.path.join(config.output, "dictionary.bin"))
    save_matrix(codes, os.path.join(config.output, "codes.bin"))
    trace.write_csv(os.path.join(config.output, "metrics.csv"))
    config.save(os.path.join(config.output, "experiment.cfg"))
    write_run_log(config.output, f"OMF {preset.kind.value} factorization", config,
                  _trace_summary(trace, dictionary), verbose)
    print(f"density {density:.6f}")
    return 0


def cmd_lasso(args) -> int:
    """!@brief Codes one signal; writes the k x 1 code and prints kkt_residual, nnz and objective."""
    x = load_vector(args.signal)
    D = load_matrix(args.dictionary)
    if x.size != D.shape[0]:
        raise ValueError(f"Signal length {x.size} does not match the dictionary's {D.shape[0]} rows.")
    if args.budget is not None:
        stop = StopRule.l1_budget(args.budget)
    elif args.epsilon is not None:
        stop = StopRule.residual(args.epsilon)
    else:
        stop = StopRule.at_lambda(args.l1_weight)
    path = lars_lasso_path(x, D, PenaltyConfig(l2_weight=args.l2_weight, nonneg=args.nonneg), stop)
    code = path.end_solution
    penalty = PenaltyConfig(path.end_lambda, args.l2_weight, args.nonneg)
    save_matrix(code, args.output, text=args.text)
    print(f"kkt_residual {kkt_residual(x, D, code, path.end_lambda, args.l2_weight, args.nonneg):.6e}")
    print(f"nnz {np.count_nonzero(code)}")
    print(f"objective {lasso_objective(x, D, code, penalty):.17g}")
    if args.verbose:
        print(f"Path: {len(path.breakpoints)} breakpoints, stopped at lambda {path.end_lambda:.6g} "
              f"({path.stop_reason.value}); code written to {args.output}")
    return 0


def cmd_project(args) -> int:
    """!@brief Projects one vector; writes it and prints constraint_value."""
    b = load_vector(args.vector)
    if args.constraint == "elastic":
        u = project_elastic_net(b, args.gamma, args.tau, args.nonneg, args.seed)
        value = elastic_net_value(u, args.gamma)
    else:
        if args.constraint == "l2":
            kind = ConstraintKind.NONNEG_L2_BALL if args.nonneg else ConstraintKind.L2_BALL
            constraint = ConstraintSet(kind, radius=args.tau)
        elif args.constraint == "nonneg":
            constraint = ConstraintSet(ConstraintKind.NONNEG_L2_BALL, radius=args.tau)
        else:
            constraint = ConstraintSet(ConstraintKind.FUSED_LASSO_BALL, gamma1=args.gamma1, gamma2=args.gamma2,
                                       radius=args.tau)
        u = constraint.project(b, args.seed)
        value = constraint.value(u)
    save_matrix(u, args.output, text=args.text)
    print(f"constraint_value {value:.17g}")
    return 0


def _run_label(path):
    name = os.path.basename(path)
    if name == "metrics.csv":
        return os.path.basename(os.path.dirname(os.path.abspath(path)))
    return os.path.splitext(name)[0]


def cmd_compare(args) -> int:
    """!@brief Merges metrics.csv files into one long-format CSV: run, wall_clock_s, test_obj."""
    paths = get_matching_files(args.inputs, [".csv"], args.verbose)
    if not paths:
        raise ValueError(f"No metrics files match: {' '.join(args.inputs)}")
    rows = []
    for path in paths:
        label = _run_label(path)
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = {"wall_clock_s", "test_obj"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path} is not a metrics file: missing column(s) {', '.join(sorted(missing))}.")
            for line_number, row in enumerate(reader, start=2):
                try:
                    float(row["wall_clock_s"])
                    float(row["test_obj"])
                except (TypeError, ValueError) as e:
                    raise ValueError(f"{path}:{line_number}: malformed metrics row.") from e
                rows.append((label, row["wall_clock_s"].strip(), row["test_obj"].strip()))
    with open(args.output, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COMPARE_HEADER)
        writer.writerows(rows)
    print(f"Merged {len(rows)} rows from {len(paths)} run(s) into: {args.output}")
    return 0


# --- argument parsing --------------------------------------------------------------------------------------------

class UsageParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


## Flags of train/factorize that override ExperimentConfig fields (flag, config field, type, help).
EXPERIMENT_FLAGS = [
    ("--data", "data", str, "Matrix file of samples (one per column)."),
    ("--images", "images", str, "Directory of PGM/PPM images to sample patches from."),
    ("--synthetic", "synthetic", str, "Planted synthetic samples 'm,k,n,s,sigma'."),
    ("--patch", "patch", int, "Patch edge in pixels. Default: 8."),
    ("--channels", "channels", int, "Patch channels, 1 (gray) or 3 (RGB). Default: 1."),
    ("--max-patches", "max_patches", int, "Maximum number of patches. Default: 20000."),
    ("--preset", "preset", str, "Problem: dict_learn, nmf, nnsc, spca or group_dict_learn."),
    ("--k", "k", int, "Number of atoms. Default: 256."),
    ("--lambda", "l1_weight", float, "Sparsity weight. Default: the preset's (1.2/sqrt(m) for dict_learn)."),
    ("--eta", "batch_size", int, "Mini-batch size. Default: 512."),
    ("--rho", "forget_exponent", float, "Forgetting exponent of beta_t = (1 - 1/t)^rho. Default: 0."),
    ("--forget-start", "forget_start", int, "First iteration where forgetting applies. Default: one epoch."),
    ("--t0", "warmup", float, "Warm-up t0 of the statistics. Default: 0."),
    ("--epochs", "epochs", float, "Passes over the training set. Default: 1."),
    ("--iterations", "iterations", int, "Number of iterations (overrides --epochs)."),
    ("--constraint", "constraint", str, "Column constraint: l2, nonneg, elastic or fused."),
    ("--gamma", "gamma", float, "Elastic-net constraint weight (spca)."),
    ("--gamma1", "gamma1", float, "Fused-lasso constraint l1 weight."),
    ("--gamma2", "gamma2", float, "Fused-lasso constraint fusion weight."),
    ("--penalty", "penalty", str, "Coding penalty: l1, elastic or group."),
    ("--lambda2", "l2_weight", float, "Elastic-net coding weight lambda2."),
    ("--group-size", "group_size", int, "Signals per group for the group penalty. Default: 1."),
    ("--mode", "mode", str, "online or batch. Default: online."),
    ("--test-fraction", "test_fraction", float, "Held-out fraction of the samples. Default: 0.1."),
    ("--checkpoint-growth", "checkpoint_growth", float, "Geometric spacing of checkpoints. Default: 1.5."),
    ("--eval-size", "eval_size", int, "Training samples used for the train objective. Default: 1000."),
    ("--seed", "seed", int, f"Random seed. Default: ${SEED_VARIABLE} or 0."),
    ("--threads", "threads", int, "Worker threads for coding. Default: 1."),
]


## Closed value sets of experiment flags; argparse reports anything else as a usage error.
FLAG_CHOICES = {
    "preset": [kind.value for kind in FactorizationKind],
    "constraint": CONSTRAINTS,
    "penalty": PENALTIES,
    "mode": [mode.value for mode in LearnerMode],
}


def _add_experiment_flags(parser):
    parser.add_argument("--config", "-c", type=str, help="Experiment file of 'key = value' lines.")
    for flag, dest, kind, text in EXPERIMENT_FLAGS:
        parser.add_argument(flag, dest=dest, type=kind, default=None, choices=FLAG_CHOICES.get(dest), help=text)
    parser.add_argument("--purge", dest="purge", action="store_true", default=None,
                        help="Purge statistics older than one epoch (fixed training sets).")
    parser.add_argument("--center", dest="center", action=argparse.BooleanOptionalAction, default=None,
                        help="Center each sample. Default: the preset's choice.")
    parser.add_argument("--normalize", dest="normalize", action=argparse.BooleanOptionalAction, default=None,
                        help="Scale each sample to unit norm. Default: the preset's choice.")
    parser.add_argument("--output", "-o", dest="output", type=str, default=None,
                        help="Output directory. Default: omf_run.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose mode")


def experiment_from_args(args, environ=None) -> ExperimentConfig:
    """!@brief Config file values, overridden by command-line flags; the seed falls back to $OMF_SEED."""
    environ = os.environ if environ is None else environ
    values = {}
    if args.config:
        with open(args.config) as f:
            values.update(ExperimentConfig.parse_text(f.read()))
    for name in _FIELD_PARSERS:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    if "seed" not in values and environ.get(SEED_VARIABLE):
        try:
            values["seed"] = int(environ[SEED_VARIABLE])
        except ValueError as e:
            raise ValueError(f"{SEED_VARIABLE} must be an integer, got {environ[SEED_VARIABLE]!r}.") from e
    return ExperimentConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(description=f"OMF Tools v{__version__} by {__author__}: online dictionary learning "
                                     "and sparse matrix factorization.",
                         epilog='Example usage: "python omf_tools.py train --images photos --k 256 --eta 512 '
                                '--epochs 2 -o run1" learns 256 atoms of 8x8 patches and writes dictionary.bin, '
                                "metrics.csv, experiment.cfg and run.log into run1. Existing outputs are overwritten "
                                "without prompting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    train_parser = commands.add_parser("train", help="Learn a dictionary.")
    _add_experiment_flags(train_parser)
    train_parser.set_defaults(func=lambda a: cmd_train(experiment_from_args(a), a.verbose))

    factor_parser = commands.add_parser("factorize", help="Run a factorization preset and write its codes too.")
    _add_experiment_flags(factor_parser)
    factor_parser.set_defaults(func=lambda a: cmd_factorize(experiment_from_args(a), a.verbose))

    lasso_parser = commands.add_parser("lasso", help="Solve one lasso problem with the homotopy.")
    lasso_parser.add_argument("signal", type=str, help="Vector file x.")
    lasso_parser.add_argument("dictionary", type=str, help="Matrix file D (atoms with norm <= 1).")
    stop = lasso_parser.add_mutually_exclusive_group(required=True)
    stop.add_argument("--lambda", dest="l1_weight", type=float, help="Penalty weight lambda.")
    stop.add_argument("--budget", type=float, help="l1 budget T: ||alpha||_1 <= T.")
    stop.add_argument("--epsilon", type=float, help="Residual level: ||x - D alpha||^2 <= epsilon.")
    lasso_parser.add_argument("--lambda2", dest="l2_weight", type=float, default=0.0, help="Elastic-net lambda2.")
    lasso_parser.add_argument("--nonneg", action="store_true", help="Non-negative code.")
    lasso_parser.add_argument("--output", "-o", type=str, default="code.bin", help="Code file. Default: code.bin.")
    lasso_parser.add_argument("--text", action="store_true", help="Write the text matrix format.")
    lasso_parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose mode")
    lasso_parser.set_defaults(func=cmd_lasso)

    project_parser = commands.add_parser("project", help="Project a vector onto a constraint set.")
    project_parser.add_argument("vector", type=str, help="Vector file b.")
    project_parser.add_argument("--constraint", choices=CONSTRAINTS, default="l2",
                                help="l2: ||u||^2 <= tau; nonneg: same with u >= 0; "
                                     "elastic: ||u||_1 + gamma/2 ||u||^2 <= tau; "
                                     "fused: ||u||^2 + gamma1 ||u||_1 + gamma2 FL(u) <= tau.")
    project_parser.add_argument("--gamma", type=float, default=0.0, help="Elastic-net weight. 0 gives the l1 ball.")
    project_parser.add_argument("--gamma1", type=float, default=0.0, help="Fused-lasso l1 weight.")
    project_parser.add_argument("--gamma2", type=float, default=0.0, help="Fused-lasso fusion weight.")
    project_parser.add_argument("--tau", type=float, default=1.0, help="Radius. Default: 1.")
    project_parser.add_argument("--nonneg", action="store_true", help="Also require u >= 0 (l2, elastic).")
    project_parser.add_argument("--seed", type=int, default=0, help="Pivot seed of the elastic-net projection.")
    project_parser.add_argument("--output", "-o", type=str, default="projected.bin", help="Output vector file.")
    project_parser.add_argument("--text", action="store_true", help="Write the text matrix format.")
    project_parser.set_defaults(func=cmd_project)

    compare_parser = commands.add_parser("compare", help="Merge metrics.csv files for plotting.")
    compare_parser.add_argument("inputs", nargs="+", help="metrics.csv files or wildcard patterns.")
    compare_parser.add_argument("--output", "-o", type=str, default="compare.csv", help="Merged CSV file.")
    compare_parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose mode")
    compare_parser.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    """!
    @brief Parses the command line and runs one subcommand.
    @return Exit code: 0 success, 1 usage error, 2 data error, 3 numerical failure.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    print(f"OMF Tools {__version__} - {args.command} at {_timestamp()}", file=sys.stderr)
    try:
        return args.func(args)
    except (MatrixFormatError, RasterFormatError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except ArithmeticError as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return 3
    except Exception:
        print(f"Error: {traceback.format_exc()}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
