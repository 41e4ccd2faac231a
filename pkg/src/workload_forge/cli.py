"""workload-forge command line: mock -> ingest -> train -> generate -> evaluate.

Config precedence: command-line flags override --config JSON values, which
override built-in defaults. The effective configuration of every workdir
command is echoed to <workdir>/effective_config.json. All randomness flows
from explicit seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_LOCK_NAME = ".lock"


def _apply_thread_cap():
    cap = os.environ.get("WORKLOAD_FORGE_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 1")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if v < 0:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 0")
    return v


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{text!r} must be strictly between 0 and 1")
    return v


class _Lock:
    """Guard against concurrent commands on one work directory."""

    def __init__(self, workdir: Path):
        self.path = workdir / _LOCK_NAME
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"work directory is locked by {self.path}; remove it if no other "
                f"command is running")
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)
        return False


def _load_config(path):
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise RuntimeError(f"{path}: config must be a JSON object")
    return obj


def _effective(args, names, config):
    """flags > config file > defaults (argparse defaults are None for merged keys)."""
    out = {}
    for name, default in names.items():
        flag = getattr(args, name, None)
        if flag is not None:
            out[name] = flag
        elif name in config:
            out[name] = config[name]
        else:
            out[name] = default
    return out


def _echo_config(workdir: Path, command, eff):
    payload = {"command": command}
    payload.update({k: v for k, v in sorted(eff.items())})
    with open(workdir / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _profile_from(eff):
    from .mock import DEFAULT_PROFILE, MockProfile
    prof = eff.get("profile")
    if prof is None:
        return DEFAULT_PROFILE
    if isinstance(prof, str):
        with open(prof, "r", encoding="utf-8") as fh:
            prof = json.load(fh)
    return MockProfile.from_dict(prof)


# -- commands -----------------------------------------------------------------

def cmd_mock(args):
    config = _load_config(args.config)
    eff = _effective(args, {"n": 1000, "seed": 7, "out": "mock_trace.csv",
                            "profile": None, "catalog": None}, config)
    from .ingest import write_raw_trace
    from .mock import generate_mock_trace

    profile = _profile_from(eff)
    out = Path(eff["out"])
    catalog_path = Path(eff["catalog"]) if eff["catalog"] else out.with_suffix(".sites.json")
    records, catalog = generate_mock_trace(profile, eff["n"], eff["seed"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_raw_trace(records, out)
    with open(catalog_path, "w", encoding="utf-8") as fh:
        fh.write(catalog.to_json())
        fh.write("\n")
    print(f"wrote {len(records)} rows to {out}; site catalog at {catalog_path}")
    return EXIT_OK


def cmd_ingest(args):
    config = _load_config(args.config)
    eff = _effective(args, {"input": None, "catalog": None, "workdir": ".",
                            "split_fraction": 0.8, "seed": 7,
                            "malformed_tolerance": 0.01}, config)
    if not eff["input"] or not eff["catalog"]:
        raise RuntimeError("ingest requires --input and --catalog")
    from .ingest import SiteCatalog, build_job_table, filter_daod, parse_records, split_train_test

    workdir = Path(eff["workdir"])
    workdir.mkdir(parents=True, exist_ok=True)
    with _Lock(workdir):
        _echo_config(workdir, "ingest", eff)
        catalog = SiteCatalog.load(eff["catalog"])
        fmt = "jsonl" if str(eff["input"]).endswith(".jsonl") else "csv"
        with open(eff["input"], "r", encoding="utf-8", newline="") as fh:
            parsed = parse_records(fh, format=fmt, malformed_tolerance=eff["malformed_tolerance"])
        filtered = filter_daod(parsed.records)
        funnel = {
            "stages": [
                {"stage": "rows_read", "count": parsed.rows_read},
                {"stage": "well_formed", "count": len(parsed.records)},
                {"stage": "daod", "count": filtered.output_count},
            ],
            "malformed_rows": parsed.malformed,
            "unparseable_names": filtered.unparseable,
        }
        if filtered.output_count == 0:
            from .tables import JOB_SCHEMA, Table
            empty = Table(JOB_SCHEMA, {f.name: [] for f in JOB_SCHEMA})
            empty.write_csv(workdir / "train.csv")
            empty.write_csv(workdir / "test.csv")
            funnel["stages"].append({"stage": "train_split", "count": 0})
            funnel["stages"].append({"stage": "test_split", "count": 0})
            print("warning: no DAOD rows survived filtering; wrote empty outputs",
                  file=sys.stderr)
        else:
            table = build_job_table(filtered.records, catalog)
            train, test = split_train_test(table, eff["split_fraction"], eff["seed"])
            train.write_csv(workdir / "train.csv")
            test.write_csv(workdir / "test.csv")
            funnel["stages"].append({"stage": "train_split", "count": train.n_rows})
            funnel["stages"].append({"stage": "test_split", "count": test.n_rows})
        with open(workdir / "funnel.json", "w", encoding="utf-8") as fh:
            json.dump(funnel, fh, indent=2)
            fh.write("\n")
    print(f"funnel: {[s['count'] for s in funnel['stages']]}")
    return EXIT_OK


def _parse_hidden(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).split(",") if v)


def cmd_train(args):
    config = _load_config(args.config)
    eff = _effective(args, {"workdir": ".", "model": "ddpm", "seed": 7, "steps": 5000,
                            "k": 5, "timesteps": 100, "batch_size": 256,
                            "learning_rate": 2e-4, "hidden": "256,256", "emb_dim": 32,
                            "quantiles": None}, config)
    from . import diffusion, smote
    from .preprocess import TableEncoder
    from .tables import JOB_SCHEMA, Table

    workdir = Path(eff["workdir"])
    workdir.mkdir(parents=True, exist_ok=True)
    with _Lock(workdir):
        _echo_config(workdir, "train", eff)
        train_table = Table.read_csv(workdir / "train.csv", JOB_SCHEMA)
        if train_table.n_rows == 0:
            raise RuntimeError("train.csv is empty; nothing to fit")
        encoder = TableEncoder.fit(train_table, q=eff["quantiles"])
        encoder.save(workdir / "encoder.json")
        encoded = encoder.encode(train_table)

        if eff["model"] == "smote":
            model = smote.fit(encoded, k=eff["k"])
            smote.save(model, workdir / "model.smte", workdir / "model.json",
                       workdir / "encoder.json")
            print(f"smote model over {encoded.n_rows} rows (k={model.k})")
        elif eff["model"] == "ddpm":
            cfg = diffusion.TrainConfig(
                steps=eff["steps"], learning_rate=eff["learning_rate"],
                batch_size=min(eff["batch_size"], encoded.n_rows),
                seed=eff["seed"], T=eff["timesteps"],
                hidden=_parse_hidden(eff["hidden"]), emb_dim=eff["emb_dim"])
            model = diffusion.train(encoded, cfg)
            diffusion.save_checkpoint(model, workdir / "model.tdpm")
            with open(workdir / "model.tdpm.loss.json", "w", encoding="utf-8") as fh:
                json.dump({"steps": model.steps_run, "final_loss": model.final_loss,
                           "loss_curve": model.loss_curve}, fh)
                fh.write("\n")
            with open(workdir / "model.json", "w", encoding="utf-8") as fh:
                json.dump({"type": "ddpm", "checkpoint": str(workdir / "model.tdpm"),
                           "encoder": str(workdir / "encoder.json")}, fh, indent=2)
                fh.write("\n")
            print(f"ddpm trained {model.steps_run} steps; final loss "
                  f"{model.final_loss if model.loss_curve else float('nan'):.5f}")
        else:
            raise RuntimeError(f"unknown model {eff['model']!r} (expected smote or ddpm)")
    return EXIT_OK


def cmd_generate(args):
    config = _load_config(args.config)
    eff = _effective(args, {"workdir": ".", "n": 1000, "seed": 7}, config)
    from . import diffusion, smote
    from .preprocess import TableEncoder

    workdir = Path(eff["workdir"])
    with _Lock(workdir):
        _echo_config(workdir, "generate", eff)
        meta_path = workdir / "model.json"
        if not meta_path.exists():
            raise RuntimeError(f"{meta_path} not found; run train first")
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        encoder = TableEncoder.load(meta["encoder"])
        if meta["type"] == "smote":
            model = smote.load(meta_path, layout=encoder.layout)
            encoded = model.sample(eff["n"], eff["seed"])
        elif meta["type"] == "ddpm":
            model = diffusion.load_checkpoint(meta["checkpoint"])
            if model.schema_hash and model.schema_hash != encoder.layout.schema_hash():
                raise RuntimeError("checkpoint schema hash does not match encoder.json")
            encoded = diffusion.sample(model, eff["n"], eff["seed"], layout=encoder.layout)
        else:
            raise RuntimeError(f"unknown model type {meta['type']!r} in model.json")
        synth = encoder.decode(encoded)
        synth.write_csv(workdir / "synth.csv")
    print(f"wrote {synth.n_rows} synthetic rows to {workdir / 'synth.csv'}")
    return EXIT_OK


def cmd_evaluate(args):
    config = _load_config(args.config)
    eff = _effective(args, {"workdir": ".", "seed": 7, "iterations": 50, "depth": 6},
                     config)
    from .gbdt import GbdtConfig
    from .metrics import EvaluateConfig, evaluate
    from .tables import JOB_SCHEMA, Table

    workdir = Path(eff["workdir"])
    with _Lock(workdir):
        _echo_config(workdir, "evaluate", eff)
        for name in ("train.csv", "test.csv", "synth.csv"):
            if not (workdir / name).exists():
                raise RuntimeError(f"{workdir / name} not found")
        train = Table.read_csv(workdir / "train.csv", JOB_SCHEMA)
        test = Table.read_csv(workdir / "test.csv", JOB_SCHEMA)
        synth = Table.read_csv(workdir / "synth.csv", JOB_SCHEMA)
        cfg = EvaluateConfig(gbdt=GbdtConfig(iterations=eff["iterations"],
                                             max_depth=eff["depth"], seed=eff["seed"]))
        report = evaluate(train, synth, test, cfg)
        with open(workdir / "report.json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")

    model_name = "synth"
    meta_path = workdir / "model.json"
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as fh:
            model_name = json.load(fh).get("type", model_name)
    print("model     WD      JSD     diff-CORR  DCR      diff-MLEF")
    print(f"{model_name:<9} {report.wd['mean']:<7.3f} {report.jsd['mean']:<7.3f} "
          f"{report.diff_corr:<10.3f} {report.dcr:<8.3f} {report.diff_mlef:.3f}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="workload-forge",
        description="surrogate-model pipeline for distributed-computing job records")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--workdir", help="work directory (default: current)")
        sp.add_argument("--seed", type=_nonneg_int, help="explicit random seed")

    sp = sub.add_parser("mock", help="generate a seeded mock job trace + site catalog")
    common(sp)
    sp.add_argument("--n", type=_positive_int, help="number of job rows")
    sp.add_argument("--out", help="output trace CSV path")
    sp.add_argument("--profile", help="mock profile JSON path")
    sp.add_argument("--catalog", help="site catalog output path")
    sp.set_defaults(func=cmd_mock)

    sp = sub.add_parser("ingest", help="parse, filter, derive and split a raw trace")
    common(sp)
    sp.add_argument("--input", help="raw trace CSV/JSONL path")
    sp.add_argument("--catalog", help="site catalog JSON path")
    sp.add_argument("--split-fraction", dest="split_fraction", type=_fraction)
    sp.add_argument("--malformed-tolerance", dest="malformed_tolerance", type=float)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("train", help="fit encoders and train a generator on train.csv")
    common(sp)
    sp.add_argument("--model", choices=("smote", "ddpm"))
    sp.add_argument("--steps", type=_nonneg_int, help="ddpm optimizer steps")
    sp.add_argument("--k", type=_positive_int, help="smote neighbor count")
    sp.add_argument("--timesteps", type=_positive_int, help="ddpm diffusion timesteps")
    sp.add_argument("--batch-size", dest="batch_size", type=_positive_int)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float)
    sp.add_argument("--hidden", help="comma-separated hidden widths, e.g. 256,256")
    sp.add_argument("--emb-dim", dest="emb_dim", type=_positive_int)
    sp.add_argument("--quantiles", type=_positive_int, help="quantile resolution")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="sample synthetic rows from the trained model")
    common(sp)
    sp.add_argument("--n", type=_positive_int, help="rows to synthesize")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("evaluate", help="score synth.csv against train/test")
    common(sp)
    sp.add_argument("--iterations", type=_positive_int, help="regressor iterations")
    sp.add_argument("--depth", type=_positive_int, help="regressor max depth")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # runtime/data errors exit 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
