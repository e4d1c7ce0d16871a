"""Command-line front end wiring the pipeline end-to-end.

Every subcommand takes ``--out-dir`` and writes all of its artifacts
there, along with a resolved-config JSON (``<command>.config.json``)
that captures every parameter after defaulting. ``elastinet replay``
re-executes such a config into a fresh directory and reproduces the
artifacts byte-for-byte. While a run is in flight a ``.partial`` marker
sits in the output directory; it is removed only after the last
artifact (the resolved config) has been written, so its presence always
flags an incomplete output set.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np
import threadpoolctl

from . import data as edata
from . import validation as val
from .errors import ConfigError, DataError, NumericalError
from .network import WIDTH, init_model, load_model, save_model
from .training import (CONSTRAINTS, LossWeights, TrainConfig, train,
                       transfer_train)

PROG = "elastinet"
CONFIG_VERSION = 1
MARKER_NAME = ".partial"

# Keeps the threadpool controller alive for the life of the process;
# releasing it would restore the original BLAS pool sizes.
_THREAD_LIMITER = None


class _Param:
    """One CLI parameter: flag spelling, type, default, and help text."""

    def __init__(self, name, type=str, default=None, help="", choices=None,
                 required=False, kind="value", path=False):
        self.name = name
        self.type = type
        self.default = default
        self.help = help
        self.choices = choices
        self.required = required
        self.kind = kind  # "value" | "flag" | "list"
        self.path = path  # absolutized at the command line (not on replay)

    @property
    def flag(self):
        return "--" + self.name.replace("_", "-")

    def add_to(self, parser):
        if self.kind == "flag":
            parser.add_argument(self.flag, dest=self.name,
                                action="store_true", help=self.help)
        elif self.kind == "list":
            parser.add_argument(self.flag, dest=self.name, type=self.type,
                                nargs="+", default=self.default,
                                required=self.required, help=self.help)
        else:
            parser.add_argument(self.flag, dest=self.name, type=self.type,
                                default=self.default, choices=self.choices,
                                required=self.required, help=self.help)

    def coerce(self, value):
        """Validate/convert a value coming from a replayed config."""
        try:
            if self.kind == "flag":
                if not isinstance(value, bool):
                    raise ValueError("expected a boolean")
                return value
            if value is None:
                if self.required:
                    raise ValueError("required parameter is null")
                return None
            if self.kind == "list":
                return [self.type(v) for v in value]
            value = self.type(value)
            if self.choices is not None and value not in self.choices:
                raise ValueError(f"must be one of {self.choices}")
            return value
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"config parameter {self.name!r}: {exc}") from exc


_DATA_PARAMS = [
    _Param("series", kind="list", path=True,
           help="stress-series CSV files to assemble the dataset from"),
    _Param("dataset", path=True,
           help="prebuilt dataset JSON (alternative to --series)"),
    _Param("split", type=float, default=0.7,
           help="training fraction when building from --series"),
    _Param("split_seed", type=int, default=0,
           help="seed for the train/validation shuffle"),
]

_OPTIM_PARAMS = [
    _Param("epochs", type=int, default=1000, help="training epochs"),
    _Param("batch", type=int, default=512, help="minibatch size"),
    _Param("learning_rate", type=float, default=0.002,
           help="optimizer step size"),
    _Param("beta1", type=float, default=0.9, help="first-moment decay"),
    _Param("beta2", type=float, default=0.999, help="second-moment decay"),
    _Param("epsilon", type=float, default=1e-7,
           help="optimizer denominator floor"),
    _Param("seed", type=int, default=0,
           help="seed for batch shuffling and penalty rotations"),
    _Param("rotations", type=int, default=4,
           help="random rotations per epoch for the objectivity penalty"),
]

_WEIGHT_PARAMS = [
    _Param("w_stress", type=float, default=1.0,
           help="weight of the stress-residual loss"),
    _Param("w_penalty_energy", type=float, default=1.0,
           help="weight of the penalty's energy-mismatch leg"),
    _Param("w_penalty_stress", type=float, default=1.0,
           help="weight of the penalty's stress-mismatch leg"),
    _Param("w_penalty_tangent", type=float, default=1.0,
           help="weight of the penalty's tangent-mismatch leg"),
]

_SPECS = {
    "gen-data": [
        _Param("dt", type=float, default=0.1,
               help="record spacing in picoseconds"),
        _Param("duration", type=float, default=300.0,
               help="ramp duration in picoseconds"),
        _Param("noise_amplitude", type=float, default=0.05,
               help="stress noise level in GPa (0 disables noise)"),
        _Param("noise_correlation", type=float, default=10.0,
               help="noise autocorrelation length in records"),
        _Param("seed", type=int, default=0,
               help="base noise seed; path i uses seed + i"),
        _Param("truth", default="ambient",
               choices=("ambient", "high-pressure"),
               help="reference stiffness driving the synthetic stress"),
        _Param("paths", kind="list",
               help="protocol names to generate (default: all fifteen)"),
    ],
    "filter": [
        _Param("inputs", kind="list", required=True, path=True,
               help="stress-series CSV files to smooth"),
        _Param("window", type=int, default=300,
               help="moving-average window in records"),
    ],
    "train": _DATA_PARAMS + [
        _Param("variant", default="SE", choices=("SE", "PF"),
               help="energy-conjugate pair (ignored when --dataset is given)"),
        _Param("constraint", choices=CONSTRAINTS,
               help="optional physics penalty trained alongside the loss"),
        _Param("init_seed", type=int, default=0,
               help="seed for the network weight initialization"),
        _Param("width", type=int, default=WIDTH,
               help="hidden-layer width of the energy network"),
        _Param("save_dataset", kind="flag",
               help="also write the assembled dataset as dataset.json"),
    ] + _OPTIM_PARAMS + _WEIGHT_PARAMS,
    "transfer": _DATA_PARAMS + [
        _Param("model", required=True, path=True,
               help="pre-trained model JSON to extend"),
        _Param("constraint", required=True, choices=CONSTRAINTS,
               help="physics penalty added for the continued training"),
    ] + _OPTIM_PARAMS + _WEIGHT_PARAMS,
    "validate": [
        _Param("model", required=True, path=True,
               help="model JSON to audit"),
        _Param("which", default="all",
               choices=("ellipticity", "growth", "convexity", "anisotropy",
                        "all"),
               help="which audit to run"),
        _Param("f_range", kind="flag",
               help="search ellipticity over the protocol deformation box, "
                    "not just one state"),
        _Param("directions", type=int, default=1000,
               help="sphere-grid size for the direction searches"),
        _Param("iterations", type=int, default=10000,
               help="hill-climb iterations per candidate"),
        _Param("opt_seed", type=int, default=0,
               help="seed for the hill-climb proposals"),
        _Param("grid_points", type=int, default=5,
               help="points per deformation axis in --f-range mode"),
        _Param("pairs", type=int, default=200,
               help="sampled deformation pairs for the convexity audit"),
        _Param("pair_seed", type=int, default=0,
               help="seed for the convexity pair sampler"),
        _Param("min_training_j", type=float,
               help="smallest det F seen in training, annotated on the "
                    "growth report"),
        _Param("sweep_axes", help="compress these axes (e.g. 'x' or 'xy') in "
                                  "a load sweep of ellipticity/anisotropy"),
        _Param("sweep_to", type=float, default=0.92,
               help="final stretch of the sweep"),
        _Param("sweep_steps", type=int,
               help="number of sweep states (omit for single-state audits)"),
    ],
    "tangents": [
        _Param("model", required=True, path=True,
               help="model JSON to tabulate"),
        _Param("pressures", kind="list", default=["1e-4", "5"],
               help="Cauchy pressures in GPa, or 'reference' for F = I"),
        _Param("j_min", type=float, default=0.5,
               help="lower det F bound of the pressure scan"),
        _Param("j_max", type=float, default=1.05,
               help="upper det F bound of the pressure scan"),
        _Param("scan_points", type=int, default=200,
               help="scan resolution before root refinement"),
    ],
}

_COMMANDS = {}


def _register(name):
    def deco(fn):
        _COMMANDS[name] = fn
        return fn
    return deco


# ------------------ shared plumbing ------------------

def _apply_thread_cap(threads):
    global _THREAD_LIMITER
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)
    _THREAD_LIMITER = threadpoolctl.threadpool_limits(limits=threads)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _load_series_files(files):
    series = []
    for path in files:
        try:
            series.append(edata.load_series(path))
        except OSError as exc:
            raise DataError(f"cannot read series file {path}: {exc}") from exc
    return series


def _dataset_for(params, variant):
    has_series = bool(params.get("series"))
    has_dataset = params.get("dataset") is not None
    if has_series == has_dataset:
        raise ConfigError("provide exactly one of --series and --dataset")
    if has_dataset:
        try:
            dataset = edata.load_dataset(params["dataset"])
        except OSError as exc:
            raise DataError(f"cannot read dataset file "
                            f"{params['dataset']}: {exc}") from exc
        if variant is not None and dataset.variant != variant:
            raise ConfigError(
                f"dataset variant {dataset.variant} does not match the "
                f"requested {variant}")
        return dataset
    series = _load_series_files(params["series"])
    return edata.build_dataset(series, variant, split=params["split"],
                               seed=params["split_seed"])


def _load_model_checked(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc


def _train_config(params):
    return TrainConfig(epochs=params["epochs"], batch=params["batch"],
                       learning_rate=params["learning_rate"],
                       beta1=params["beta1"], beta2=params["beta2"],
                       epsilon=params["epsilon"], seed=params["seed"],
                       rotations=params["rotations"])


def _loss_weights(params):
    return LossWeights(w_S=params["w_stress"],
                       w_P=params["w_penalty_stress"],
                       w_psi=params["w_penalty_energy"],
                       w_C=params["w_penalty_tangent"])


# ------------------ subcommands ------------------

@_register("gen-data")
def cmd_gen_data(out_dir, params):
    """Synthesize one stress-series CSV per loading protocol."""
    protocol = edata.default_paths(dt=params["dt"],
                                   duration=params["duration"])
    by_name = {p.name: p for p in protocol}
    names = params["paths"]
    if names is None:
        chosen = protocol
    else:
        unknown = sorted(set(names) - set(by_name))
        if unknown:
            raise ConfigError(
                f"unknown path names {unknown}; valid names: "
                f"{sorted(by_name)}")
        chosen = [by_name[n] for n in names]
    params["paths"] = [p.name for p in chosen]
    truth = (edata.GroundTruthModel.ambient() if params["truth"] == "ambient"
             else edata.GroundTruthModel.high_pressure())
    for i, path in enumerate(chosen):
        noise = None
        if params["noise_amplitude"] > 0.0:
            noise = edata.NoiseModel(params["noise_amplitude"],
                                     params["noise_correlation"],
                                     params["seed"] + i)
        series = edata.synthesize_stress(path, truth, noise)
        edata.save_series(series, os.path.join(out_dir, path.name + ".csv"))


@_register("filter")
def cmd_filter(out_dir, params):
    """Smooth stress series with the spectral moving-average filter."""
    names = [os.path.basename(p) for p in params["inputs"]]
    if len(set(names)) != len(names):
        raise ConfigError("input series files must have distinct basenames")
    for path, name in zip(params["inputs"], names):
        series = _load_series_files([path])[0]
        filtered = edata.filter_series(series, window=params["window"])
        edata.save_series(filtered, os.path.join(out_dir, name))


@_register("train")
def cmd_train(out_dir, params):
    """Train a fresh energy network and write the model plus its loss trace."""
    variant = params["variant"]
    dataset = _dataset_for(params, variant if not params.get("dataset")
                           else None)
    params["variant"] = dataset.variant
    model = init_model(params["init_seed"], dataset.variant,
                       width=params["width"], normalizer=dataset.normalizer)
    trained, trace = train(model, dataset, _train_config(params),
                           weights=_loss_weights(params),
                           constraint=params["constraint"])
    save_model(trained, os.path.join(out_dir, "model.json"))
    trace.to_csv(os.path.join(out_dir, "loss.csv"))
    if params["save_dataset"]:
        edata.save_dataset(dataset, os.path.join(out_dir, "dataset.json"))


@_register("transfer")
def cmd_transfer(out_dir, params):
    """Continue training a saved model with an added physics penalty."""
    model = _load_model_checked(params["model"])
    dataset = _dataset_for(params, model.variant)
    trained, trace = transfer_train(model, dataset, _train_config(params),
                                    params["constraint"],
                                    weights=_loss_weights(params))
    save_model(trained, os.path.join(out_dir, "model.json"))
    trace.to_csv(os.path.join(out_dir, "loss.csv"))


def _sweep_states(params):
    axes = params["sweep_axes"]
    steps = params["sweep_steps"]
    if (axes is None) != (steps is None):
        raise ConfigError("--sweep-axes and --sweep-steps go together")
    if axes is None:
        return None, None
    idx = sorted({"xyz".find(c) for c in axes})
    if -1 in idx or not axes:
        raise ConfigError(f"sweep axes must be drawn from 'xyz', got {axes!r}")
    if steps < 2:
        raise ConfigError(f"sweep needs at least 2 steps, got {steps}")
    if not 0.0 < params["sweep_to"]:
        raise ConfigError("sweep target stretch must be positive")
    lams = np.linspace(1.0, params["sweep_to"], steps)
    fs = []
    for lam in lams:
        f = np.eye(3)
        for a in idx:
            f[a, a] = lam
        fs.append(f)
    return np.array(fs), [float(lam) for lam in lams]


@_register("validate")
def cmd_validate(out_dir, params):
    """Run the post-training audits and write their reports."""
    model = _load_model_checked(params["model"])
    which = params["which"]
    fs, labels = _sweep_states(params)
    if fs is not None and which in ("growth", "convexity"):
        raise ConfigError("sweeps apply to the ellipticity and anisotropy "
                          "audits only")

    def out(name):
        return os.path.join(out_dir, name)

    if which in ("ellipticity", "all"):
        if fs is not None:
            sweep = val.ellipticity_sweep(
                model, fs, labels=labels,
                n_directions=params["directions"],
                iterations=params["iterations"], seed=params["opt_seed"])
            _write_text(out("ellipticity-sweep.json"),
                        json.dumps(sweep, indent=2, sort_keys=True))
            val.sweep_csv(sweep, out("ellipticity-sweep.csv"))
        else:
            rep = val.strong_ellipticity_test(
                model, f_range=params["f_range"],
                n_directions=params["directions"],
                iterations=params["iterations"], seed=params["opt_seed"],
                grid_points=params["grid_points"])
            rep.to_json(out("ellipticity.json"))
            _write_text(out("ellipticity.txt"), rep.to_text())
    if which in ("growth", "all"):
        rep = val.growth_test(model,
                              min_training_j=params["min_training_j"])
        rep.to_json(out("growth.json"))
        _write_text(out("growth.txt"), rep.to_text())
        rep.to_csv(out("growth.csv"))
    if which in ("convexity", "all"):
        rep = val.convexity_check(model, n_pairs=params["pairs"],
                                  seed=params["pair_seed"])
        rep.to_json(out("convexity.json"))
        _write_text(out("convexity.txt"), rep.to_text())
    if which in ("anisotropy", "all"):
        if fs is not None:
            rep = val.anisotropy_sweep(model, fs, labels=labels,
                                       n_directions=params["directions"],
                                       iterations=params["iterations"],
                                       seed=params["opt_seed"])
        else:
            rep = val.AnisotropyReport()
            rep.append(val.anisotropy_index(
                model, n_directions=params["directions"],
                iterations=params["iterations"], seed=params["opt_seed"],
                label="reference"))
        rep.to_json(out("anisotropy.json"))
        _write_text(out("anisotropy.txt"), rep.to_text())
        rep.to_csv(out("anisotropy.csv"))


def _state_label(token):
    if token == "reference":
        return token
    # normalize through float so '5', '5.0' and '5e0' name the same file
    return f"p{float(token):g}".replace("+", "")


@_register("tangents")
def cmd_tangents(out_dir, params):
    """Write the 13-coefficient tangent tables at the requested states."""
    model = _load_model_checked(params["model"])
    labels = []
    for token in params["pressures"]:
        if token != "reference":
            try:
                float(token)
            except ValueError as exc:
                raise ConfigError(f"pressure {token!r} is neither a number "
                                  "nor 'reference'") from exc
        labels.append(_state_label(token))
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate requested states: {labels}")
    for token, label in zip(params["pressures"], labels):
        if token == "reference":
            table = val.tangent_table(model)
        else:
            table = val.tangent_table(
                model, pressure=float(token),
                j_bounds=(params["j_min"], params["j_max"]),
                scan_points=params["scan_points"])
        stem = os.path.join(out_dir, f"table-{label}")
        table.to_json(stem + ".json")
        _write_text(stem + ".txt", table.to_text())
        table.to_csv(stem + ".csv")


# ------------------ driver ------------------

def _params_from_args(command, args):
    params = {}
    for p in _SPECS[command]:
        value = getattr(args, p.name)
        if p.path and value is not None:
            value = ([os.path.abspath(v) for v in value]
                     if p.kind == "list" else os.path.abspath(value))
        params[p.name] = value
    return params


def _params_from_config(command, raw):
    spec = {p.name: p for p in _SPECS[command]}
    unknown = sorted(set(raw) - set(spec))
    if unknown:
        raise ConfigError(f"config has unknown parameters {unknown} "
                          f"for command {command!r}")
    missing = sorted(set(spec) - set(raw))
    if missing:
        raise ConfigError(f"config is missing parameters {missing} "
                          f"for command {command!r}")
    return {name: spec[name].coerce(raw[name]) for name in spec}


def _run(command, out_dir, params, threads):
    _apply_thread_cap(threads)
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, MARKER_NAME)
    _write_text(marker, "run in progress")
    _COMMANDS[command](out_dir, params)
    config = {"version": CONFIG_VERSION, "command": command,
              "threads": threads, "params": params}
    _write_text(os.path.join(out_dir, f"{command}.config.json"),
                json.dumps(config, indent=2, sort_keys=True))
    os.remove(marker)
    return 0


def _cmd_replay(args):
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.config} is not valid JSON: {exc}") from exc
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {doc.get('version')!r}")
    command = doc.get("command")
    if command not in _SPECS:
        raise ConfigError(f"config names unknown command {command!r}")
    params = _params_from_config(command, doc.get("params", {}))
    threads = doc.get("threads")
    if threads is not None:
        threads = int(threads)
    return _run(command, args.out_dir, params, threads)


def build_parser():
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Learn stored-energy functionals from stress data and "
                    "audit them.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    descriptions = {
        "gen-data": "Synthesize stress series for the loading protocols.",
        "filter": "Smooth stress series with the spectral moving average.",
        "train": "Train an energy network on stress data.",
        "transfer": "Continue training a model with a physics penalty.",
        "validate": "Audit a model (ellipticity, growth, convexity, "
                    "anisotropy).",
        "tangents": "Tabulate the monoclinic tangent coefficients.",
    }
    for command, spec in _SPECS.items():
        p = sub.add_parser(
            command, help=descriptions[command],
            description=descriptions[command],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        for param in spec:
            param.add_to(p)
        p.add_argument("--out-dir", dest="out_dir", required=True,
                       help="directory receiving all artifacts")
        p.add_argument("--threads", dest="threads", type=int, default=None,
                       help="cap the numeric thread pools")
    rp = sub.add_parser(
        "replay", help="Re-run a resolved config byte-identically.",
        description="Re-run a resolved config byte-identically.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    rp.add_argument("config", help="a <command>.config.json from a past run")
    rp.add_argument("--out-dir", dest="out_dir", required=True,
                    help="directory receiving all artifacts")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _cmd_replay(args)
        params = _params_from_args(args.command, args)
        return _run(args.command, args.out_dir, params, args.threads)
    except ConfigError as exc:
        print(f"{PROG}: config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"{PROG}: data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"{PROG}: numerical failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"{PROG}: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
