"""Command line: generate, train, evaluate, inspect, prune and report.

Settings come from built-in defaults, then an optional flat JSON file given
with ``--config``, then command-line flags, later sources winning. Every
output directory gets a ``config.json`` echo that can be fed back through
``--config`` to repeat the run.
"""

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import parameter_match_report
from .errors import ConfigError, DataError, NumericAbort, SeqKanError, UsageError
from .introspect import DEFAULT_T_RANGE, export_splines, write_dominance, write_expression_comparison
from .kan import parse_edge, prune_below, prune_edge
from .models import ARCHITECTURES, atomic_write, build_model, dumps, load_model, save_model, seqkan_param_count
from .pendulum import (
    DATASET_FORMAT,
    Dataset,
    GeneratorConfig,
    Normalizer,
    build_splits,
    integrate,
    metadata,
)
from .train import LABELS, TrainConfig, evaluate, train

log = logging.getLogger("seqkan")

SPLITS = ("train", "interpolation", "extrapolation")
TEST_SPLITS = ("interpolation", "extrapolation")
ECHO_KEYS = {"command", "format_version", "version"}


@dataclass
class RunConfig:
    # generator
    g: float = 9.81
    dt: float = 0.02
    theta0: float = 0.5
    theta0_interp: float = 0.3
    omega0: float = 0.0
    n_steps: int = 420
    length_law: str = "exponential"
    length: float = 0.1
    rate: float = 5.88e-3
    # training
    epochs: int = 3000
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lam: float = 1e-3
    arch: list = field(default_factory=lambda: list(ARCHITECTURES))
    seeds: list = field(default_factory=lambda: [0])
    # paths
    data_dir: str = "data"
    model_dir: str = "models"
    out_dir: str = "out"
    # pruning / analysis
    prune_threshold: float = 0.01
    t_start: int = DEFAULT_T_RANGE[0]
    t_end: int = DEFAULT_T_RANGE[1]

    def generator(self, interp=False):
        return GeneratorConfig(
            g=self.g,
            dt=self.dt,
            theta0=self.theta0_interp if interp else self.theta0,
            omega0=self.omega0,
            n_steps=self.n_steps,
            length_law=self.length_law,
            length=self.length,
            rate=self.rate,
        )

    def training(self, seed):
        return TrainConfig(self.epochs, self.lr, self.beta1, self.beta2, self.eps, self.lam, seed)

    def check(self):
        unknown = [a for a in self.arch if a not in ARCHITECTURES]
        if unknown:
            raise ConfigError(f"unknown architecture {unknown[0]!r}; choose from {', '.join(ARCHITECTURES)}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        self.generator()
        self.training(self.seeds[0])
        return self


def load_config(path, overrides):
    values = {}
    if path:
        path = Path(path)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    known = {f.name for f in fields(RunConfig)}
    values = {k: v for k, v in values.items() if k not in ECHO_KEYS}
    bad = sorted(set(values) - known)
    if bad:
        raise ConfigError(f"unknown config key {bad[0]!r}")
    values.update({k: v for k, v in overrides.items() if v is not None and k in known})
    for k in ("arch", "seeds"):
        if k in values and not isinstance(values[k], list):
            values[k] = [values[k]]
    try:
        return RunConfig(**values).check()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def write_echo(outdir, cfg, command):
    echo = {"command": command, "format_version": DATASET_FORMAT, "version": __version__, **asdict(cfg)}
    atomic_write(Path(outdir) / "config.json", dumps(echo))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"not found: {path}")
    return path.read_text()


def load_datasets(data_dir):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"dataset directory not found: {data_dir}")
    meta = json.loads(_read(data_dir / "metadata.json"))
    if meta.get("format_version") != DATASET_FORMAT:
        raise DataError(f"{data_dir}: unsupported dataset format {meta.get('format_version')!r}")
    sets = {name: Dataset.from_jsonl(name, _read(data_dir / f"{name}.jsonl")) for name in SPLITS}
    return sets, Normalizer.from_dict(meta["normalization"]), meta


# commands


def cmd_generate(cfg, out=None):
    out = Path(out or cfg.data_dir)
    cfg_a, cfg_b = cfg.generator(), cfg.generator(interp=True)
    splits, (traj_a, traj_b) = build_splits(cfg_a, cfg_b)
    norm = Normalizer.fit(splits[0])
    atomic_write(out / "trajectory_train.csv", traj_a.to_csv())
    atomic_write(out / "trajectory_interp.csv", traj_b.to_csv())
    for ds in splits:
        atomic_write(out / f"{ds.name}.jsonl", ds.to_jsonl())
    meta = metadata(cfg_a, cfg_b, splits, norm)
    atomic_write(out / "metadata.json", dumps(meta))
    write_echo(out, cfg, "generate")
    for ds in splits:
        log.info("%s: %d windows, base rates %s", ds.name, len(ds), ds.base_rates())
    return meta


def cmd_train(cfg, data=None, out=None):
    sets, norm, _ = load_datasets(data or cfg.data_dir)
    out = Path(out or cfg.model_dir)
    tr = sets["train"]
    X = norm(tr.X)
    target = seqkan_param_count()
    summary = {"parameter_match": parameter_match_report(target), "runs": []}
    for key in ("rnn", "lstm"):
        m = summary["parameter_match"][key]
        log.info("%s hidden=%d params=%d (seqkan %d, %+.1f%%)%s", key, m["hidden"], m["params"], target,
                 100 * m["overshoot"], "" if m["within_slack"] else " exceeds parity slack")
    for arch in cfg.arch:
        for seed in cfg.seeds:
            model = build_model(arch, seed)
            try:
                result = train(model, X, tr.y_energy, tr.y_eq, cfg.training(seed))
            except NumericAbort as exc:
                raise NumericAbort(f"{arch} seed {seed}: {exc}", exc.diagnostics) from None
            model.meta.update({"seed": seed, "final_bce": result.bce[-1], "final_objective": result.objective[-1],
                               "normalization": norm.to_dict()})
            stem = f"{arch}_seed{seed}"
            save_model(model, out / f"{stem}.json")
            rows = ((i, f"{o:.17g}", f"{b:.17g}") for i, (o, b) in enumerate(zip(result.objective, result.bce)))
            atomic_write(out / f"{stem}_loss.csv", _csv(["epoch", "objective", "bce"], rows))
            summary["runs"].append({"architecture": arch, "seed": seed, "params": model.n_params,
                                    "final_bce": result.bce[-1], "final_objective": result.objective[-1]})
            log.info("trained %s: final bce %.5f", stem, result.bce[-1])
    atomic_write(out / "training.json", dumps(summary))
    write_echo(out, cfg, "train")
    return summary


def _model_files(model_dir, archs, seeds):
    files = {}
    for arch in archs:
        for seed in seeds:
            path = Path(model_dir) / f"{arch}_seed{seed}.json"
            if not path.is_file():
                raise DataError(f"model file not found: {path}")
            files[(arch, seed)] = path
    return files


def evaluate_model(model, sets, norm, splits=SPLITS):
    return {name: evaluate(model, norm(sets[name].X), sets[name].y_energy, sets[name].y_eq) for name in splits}


def best_seed(per_seed):
    """Seed with the lowest final training loss; the test splits play no part in the choice."""
    return min(per_seed, key=lambda s: (per_seed[s]["final_bce"], s))


def table_rows(report):
    rows = []
    for split in TEST_SPLITS:
        for arch, entry in report["architectures"].items():
            cells = entry["best"]["metrics"][split]
            row = [split, arch, entry["best"]["seed"]]
            for label in LABELS:
                c = cells[label]
                row += [f"{c['roc_auc']:.4f}", f"{c['pr_auc']:.4f}"] if "roc_auc" in c else ["", ""]
            rows.append(row)
    return rows


TABLE_HEADER = ["split", "model", "seed", "energy_roc_auc", "energy_pr_auc", "eq_roc_auc", "eq_pr_auc"]


def cmd_evaluate(cfg, data=None, models=None, out=None):
    sets, norm, _ = load_datasets(data or cfg.data_dir)
    files = _model_files(models or cfg.model_dir, cfg.arch, cfg.seeds)
    report = {"format_version": DATASET_FORMAT, "architectures": {}}
    for arch in cfg.arch:
        per_seed = {}
        for seed in cfg.seeds:
            model = load_model(files[(arch, seed)])
            per_seed[seed] = {
                "final_bce": model.meta.get("final_bce", float("inf")),
                "params": model.n_params,
                "metrics": evaluate_model(model, sets, norm),
            }
        chosen = best_seed(per_seed)
        report["architectures"][arch] = {
            "params": per_seed[chosen]["params"],
            "seeds": {str(s): v for s, v in per_seed.items()},
            "best": {"seed": chosen, **per_seed[chosen]},
        }
    out = Path(out or cfg.out_dir)
    atomic_write(out / "report.json", dumps(report))
    atomic_write(out / "table1.csv", _csv(TABLE_HEADER, table_rows(report)))
    write_echo(out, cfg, "evaluate")
    return report


def cmd_inspect(cfg, model_path=None, out=None):
    out = Path(out or cfg.out_dir)
    written = {}
    if model_path:
        model = load_model(model_path)
        if not hasattr(model, "edges"):
            raise UsageError(f"{model.architecture} has no spline edges to export")
        written["splines"] = [str(p) for p in export_splines(model, out)]
    t_range = (cfg.t_start, cfg.t_end)
    traj = integrate(cfg.generator())
    written["expressions"] = write_expression_comparison(traj, out, t_range)
    written["dominance"] = write_dominance(traj, out, t_range)
    fixed = GeneratorConfig(**{**asdict(cfg.generator()), "length_law": "constant"})
    written["dominance_fixed_length"] = write_dominance(integrate(fixed), out, t_range, "dominance_fixed_length")
    atomic_write(out / "inspect.json", dumps(written))
    write_echo(out, cfg, "inspect")
    return written


PRUNE_HEADER = ["model", "pruned", "split", "label", "metric", "before", "after", "delta"]


def prune_delta_rows(name, pruned, before, after):
    rows = []
    for split in before:
        for label in LABELS:
            for metric in ("roc_auc", "pr_auc"):
                b, a = before[split][label].get(metric), after[split][label].get(metric)
                if b is None or a is None:
                    continue
                rows.append([name, " ".join(pruned), split, label, metric, f"{b:.6f}", f"{a:.6f}", f"{a - b:+.6f}"])
    return rows


def cmd_prune(cfg, model_path, edges=None, threshold=None, out=None, data=None, report_dir=None):
    if not edges and threshold is None:
        raise UsageError("give --edge specs or --threshold")
    model = load_model(model_path)
    if not hasattr(model, "edges"):
        raise UsageError(f"{model.architecture} has no prunable edges")
    sets = norm = None
    if data:
        sets, norm, _ = load_datasets(data)
        before = evaluate_model(model, sets, norm, TEST_SPLITS)
    if edges:
        pruned = []
        for spec in edges:
            prune_edge(model, *parse_edge(spec))
            pruned.append(spec)
    else:
        pruned = prune_below(model, threshold)
    model.meta.setdefault("provenance", []).append(
        {"action": "prune", "source": str(model_path), "edges": pruned, "threshold": threshold}
    )
    out = Path(out or model_path)
    save_model(model, out)
    result = {"model": str(out), "pruned": pruned}
    if sets is not None:
        after = evaluate_model(model, sets, norm, TEST_SPLITS)
        rows = prune_delta_rows(Path(model_path).stem, pruned, before, after)
        report = Path(report_dir or cfg.out_dir) / "pruning.csv"
        text = report.read_text() if report.is_file() else _csv(PRUNE_HEADER, [])
        atomic_write(report, text + _csv(PRUNE_HEADER, rows).split("\n", 1)[1])
        result["delta"] = {f"{r[2]}/{r[3]}/{r[4]}": float(r[7]) for r in rows}
        result["report"] = str(report)
    log.info("pruned %s", ", ".join(pruned) or "nothing")
    return result


def cmd_report(cfg, out=None):
    """Whole pipeline into one directory tree."""
    root = Path(out or cfg.out_dir)
    data, models, evald = root / "data", root / "models", root / "eval"
    cmd_generate(cfg, data)
    cmd_train(cfg, data, models)
    report = cmd_evaluate(cfg, data, models, evald)
    if "seqkan" in report["architectures"]:
        seed = report["architectures"]["seqkan"]["best"]["seed"]
        best = models / f"seqkan_seed{seed}.json"
        cmd_inspect(cfg, best, root / "inspect")
        pruned = root / "prune" / f"seqkan_seed{seed}_pruned.json"
        cmd_prune(cfg, best, threshold=cfg.prune_threshold, out=pruned, data=data, report_dir=evald)
    write_echo(root, cfg, "report")
    return report


# argument parsing


def _common(p):
    p.add_argument("--config", help="flat JSON config; flags override its values")


def _generator_flags(p):
    p.add_argument("--dt", type=float)
    p.add_argument("--theta0", type=float)
    p.add_argument("--theta0-interp", dest="theta0_interp", type=float)
    p.add_argument("--omega0", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--length-law", dest="length_law", choices=["exponential", "constant"])
    p.add_argument("--length", type=float, help="base pendulum length")
    p.add_argument("--rate", type=float, help="base-10 length growth per step")


def _train_flags(p):
    p.add_argument("--arch", nargs="+", choices=list(ARCHITECTURES))
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lam", type=float, help="sparsity penalty weight")


def build_parser():
    parser = argparse.ArgumentParser(prog="seqkan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write trajectories and the three splits")
    _common(p)
    _generator_flags(p)
    p.add_argument("--out", dest="data_dir")

    p = sub.add_parser("train", help="train models on the train split")
    _common(p)
    _train_flags(p)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--out", dest="model_dir")

    p = sub.add_parser("evaluate", help="score trained models on every split")
    _common(p)
    _train_flags(p)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--models", dest="model_dir")
    p.add_argument("--out", dest="out_dir")

    p = sub.add_parser("inspect", help="export splines and the expression and dominance analyses")
    _common(p)
    _generator_flags(p)
    p.add_argument("--model")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--t-start", dest="t_start", type=int)
    p.add_argument("--t-end", dest="t_end", type=int)

    p = sub.add_parser("prune", help="mask KAN edges and re-save the model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--edge", action="append", help="layer:in:out, repeatable")
    p.add_argument("--threshold", type=float, help="mask edges below this fraction of the layer max importance")
    p.add_argument("--out-model", dest="out_model")
    p.add_argument("--data", help="dataset dir; when given, the AUC change is appended to pruning.csv")
    p.add_argument("--out", dest="out_dir")

    p = sub.add_parser("report", help="generate, train, evaluate, inspect and prune in one go")
    _common(p)
    _generator_flags(p)
    _train_flags(p)
    p.add_argument("--out", dest="out_dir")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    cfg = load_config(getattr(args, "config", None), vars(args))
    cmd = args.command
    if cmd == "generate":
        result = cmd_generate(cfg)["splits"]
    elif cmd == "train":
        result = cmd_train(cfg)
    elif cmd == "evaluate":
        result = cmd_evaluate(cfg)
        result = table_rows(result)
    elif cmd == "inspect":
        result = cmd_inspect(cfg, args.model)
    elif cmd == "prune":
        result = cmd_prune(cfg, args.model, args.edge, args.threshold, args.out_model, args.data, args.out_dir)
    else:
        result = table_rows(cmd_report(cfg))
    return cmd, result


def main(argv=None):
    try:
        cmd, result = run(argv)
    except SeqKanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, NumericAbort) and exc.diagnostics:
            print(json.dumps(exc.diagnostics, indent=1, sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return DataError.exit_code
    if cmd in ("evaluate", "report"):
        print(_csv(TABLE_HEADER, result), end="")
    else:
        print(json.dumps(result, indent=1, sort_keys=True, default=_jsonable))
    return 0


def _jsonable(o):
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
