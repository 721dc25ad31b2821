"""Command-line front end for the telemetry anomaly pipeline.

Every command reads an optional key=value config file, applies flag
overrides, writes its products into --out, and finishes with a
run_manifest.json recording the command, the effective config (paths
excluded), input digests, and output names.  All outputs are deterministic
for a given config and input data; nothing depends on wall-clock time.

Exit codes: 0 success, 2 missing input file, 3 configuration problem,
4 runtime failure inside the pipeline.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import forecast as fc
from . import inject as inj
from . import packetset as ps
from . import synthetic as syn
from . import telemetry as tel
from . import tiersim as ts
from .config import RunConfig, schema_keys
from .detect import detect as run_detect
from .detect import metrics_json, record_losses, records_csv
from .errors import ConfigError, PipelineError


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are config errors (exit 3), not argparse's default exit 2.
    def error(self, message):
        raise ConfigError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file")
    for key in schema_keys():
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)


def _effective_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        config = RunConfig.load(args.config)
    else:
        config = RunConfig.default()
    for key in schema_keys():
        value = getattr(args, key, None)
        if value is not None:
            config = config.override(key, value)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uavloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse/impute telemetry, write a clean CSV")
    _add_config_flags(p)

    p = sub.add_parser("inject", help="write a labeled CSV with injected anomalies")
    p.add_argument("--scheme", required=True, choices=("nth", "random", "variance", "poisson"))
    _add_config_flags(p)

    p = sub.add_parser("train", help="train a window predictor on clean telemetry")
    p.add_argument("--mode", default="reconstruction", choices=("reconstruction", "forecast"))
    _add_config_flags(p)

    p = sub.add_parser("detect", help="score a labeled CSV with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--train-losses", dest="train_losses", default=None)
    _add_config_flags(p)

    p = sub.add_parser("forecast", help="evaluate a trained forecaster on the test split")
    p.add_argument("--model", required=True)
    _add_config_flags(p)

    p = sub.add_parser("packetset", help="packet preference-pair tools")
    psub = p.add_subparsers(dest="subcommand", required=True)
    b = psub.add_parser("build", help="build preference pairs from a packet log")
    _add_config_flags(b)
    s = psub.add_parser("score", help="field-level scoring of predicted packets")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    _add_config_flags(s)

    p = sub.add_parser("simulate", help="stream a series through a tier at one batch size")
    _add_config_flags(p)

    p = sub.add_parser("experiment", help="end-to-end experiment recipes")
    esub = p.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("nth", "inject every nth record, train, detect"),
        ("variance-sweep", "detection metrics across set-value targets"),
        ("poisson", "Poisson-gap injection, train, detect"),
        ("batch-sweep", "elapsed time and metrics across batch sizes"),
    ):
        e = esub.add_parser(name, help=help_text)
        _add_config_flags(e)

    return parser


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _finish(out_dir: str, command: str, config: RunConfig, inputs: dict, outputs: list) -> int:
    manifest = {
        "command": command,
        "config": config.echo(),
        "inputs": {name: _sha256(path) for name, path in sorted(inputs.items())},
        "outputs": sorted(outputs),
    }
    _write_text(
        os.path.join(out_dir, "run_manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )
    for name in sorted(outputs):
        print(os.path.join(out_dir, name))
    return 0


def _out_dir(config: RunConfig) -> str:
    path = config["out"]
    os.makedirs(path, exist_ok=True)
    return path


def _load_or_synth(config: RunConfig) -> tuple[tel.TelemetrySeries, dict]:
    """Load --data if set, else generate the bundled synthetic mission."""
    path = config["data"]
    if path:
        series = tel.load_sensor_csv(path)
        if series.has_missing():
            series = tel.impute_missing(series, config["impute_policy"])
        return series, {"data": path}
    series = syn.synth_mission(
        n_records=config["records"],
        seed=config["seed"],
        start_timestamp=config["start_timestamp"],
        cadence_us=config["cadence_us"],
        noise_level=config["noise_level"],
    )
    return series, {}


def _inject_series(series: tel.TelemetrySeries, config: RunConfig, scheme: str) -> inj.LabeledSeries:
    spec = config.perturb_spec()
    if scheme == "nth":
        return inj.inject_every_nth(series, config["n"], spec)
    if scheme == "random":
        return inj.inject_random(
            series, config["fraction"], spec, seed=config["seed"], selection=config["selection"]
        )
    if scheme == "variance":
        return inj.inject_variance(series, config["feature"], config["set_value"], config["n"])
    if scheme == "poisson":
        return inj.inject_poisson(series, config["poisson_lambda"], spec, seed=config["seed"])
    raise ConfigError(f"unknown injection scheme {scheme!r}")


def _norm_stats(config: RunConfig, full: tel.TelemetrySeries, train: tel.TelemetrySeries):
    scope = config["norm_scope"]
    if scope == "train":
        return tel.fit_normalize(train)
    if scope == "global":
        return tel.fit_normalize(full)
    if scope == "none":
        return None
    raise ConfigError(f"unknown norm_scope {scope!r}")


def _maybe_normalize(series: tel.TelemetrySeries, stats) -> tel.TelemetrySeries:
    return series if stats is None else tel.apply_normalize(series, stats)


def _train_predictor(config: RunConfig, series: tel.TelemetrySeries, mode: str):
    """Split, normalize, window, and train; returns the fitted pieces."""
    parts = tel.split(series, config.split_spec())
    stats = _norm_stats(config, series, parts.train)
    pcfg = config.predictor_config(mode)
    train_series = _maybe_normalize(parts.train, stats)
    horizon = pcfg.horizon if mode == "forecast" else 1
    train_windows = tel.window(train_series, pcfg.seq_len, config["stride"], mode, horizon)
    val_windows = None
    if len(parts.val) >= pcfg.seq_len + (horizon if mode == "forecast" else 0):
        val_windows = tel.window(
            _maybe_normalize(parts.val, stats), pcfg.seq_len, config["stride"], mode, horizon
        )
    predictor = fc.init_predictor(pcfg, train_windows.feature_count, norm_stats=stats)
    predictor = fc.train(predictor, train_windows, val_windows)
    _, train_losses = record_losses(predictor, train_windows)
    return parts, stats, predictor, train_windows, train_losses


def _history_csv(predictor) -> str:
    lines = ["epoch,train_mse,val_mse"]
    for i, stat in enumerate(predictor.history, start=1):
        val = "" if stat.val_mse is None else repr(stat.val_mse)
        lines.append(f"{i},{stat.train_mse!r},{val}")
    return "\n".join(lines) + "\n"


def _losses_csv(losses) -> str:
    lines = ["index,loss"]
    lines.extend(f"{i},{float(v)!r}" for i, v in enumerate(losses))
    return "\n".join(lines) + "\n"


def _parse_losses_csv(text: str) -> list:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "index,loss":
        raise ConfigError("loss file must start with an index,loss header")
    return [float(ln.split(",")[1]) for ln in lines[1:]]


def cmd_ingest(args, config: RunConfig) -> int:
    out = _out_dir(config)
    series, inputs = _load_or_synth(config)
    tel.save_sensor_csv(series, os.path.join(out, "clean.csv"))
    return _finish(out, "ingest", config, inputs, ["clean.csv"])


def cmd_inject(args, config: RunConfig) -> int:
    out = _out_dir(config)
    series, inputs = _load_or_synth(config)
    labeled = _inject_series(series, config, args.scheme)
    inj.save_labeled_csv(labeled, os.path.join(out, "labeled.csv"))
    return _finish(
        out, f"inject {args.scheme}", config, inputs, ["labeled.csv", "labeled.csv.meta.json"]
    )


def cmd_train(args, config: RunConfig) -> int:
    out = _out_dir(config)
    series, inputs = _load_or_synth(config)
    _, _, predictor, _, train_losses = _train_predictor(config, series, args.mode)
    fc.save_predictor(predictor, os.path.join(out, "model.ckpt"))
    _write_text(os.path.join(out, "history.csv"), _history_csv(predictor))
    _write_text(os.path.join(out, "train_losses.csv"), _losses_csv(train_losses))
    return _finish(
        out,
        f"train {args.mode}",
        config,
        inputs,
        ["model.ckpt", "history.csv", "train_losses.csv"],
    )


def _detection_outputs(out: str, config: RunConfig, result) -> list:
    report = ts.emit_report(
        result,
        mission_id=f"mission-{config['seed']}",
        tier=config["tier"],
        timestamp=0.0,
    )
    _write_text(os.path.join(out, "metrics.json"), metrics_json(result))
    _write_text(os.path.join(out, "records.csv"), records_csv(result))
    _write_text(os.path.join(out, "report.jsonl"), report.to_json() + "\n")
    return ["metrics.json", "records.csv", "report.jsonl"]


def cmd_detect(args, config: RunConfig) -> int:
    out = _out_dir(config)
    if not config["data"]:
        raise ConfigError("detect needs --data pointing at a labeled CSV")
    predictor = fc.load_predictor(args.model)
    labeled = inj.load_labeled_csv(config["data"])
    inputs = {"data": config["data"], "model": args.model}
    train_losses = None
    if args.train_losses:
        with open(args.train_losses, "r", encoding="utf-8") as fh:
            train_losses = _parse_losses_csv(fh.read())
        inputs["train_losses"] = args.train_losses
    eval_series = _maybe_normalize(labeled.series, predictor.norm_stats)
    eval_windows = tel.window(eval_series, predictor.config.seq_len, 1, "reconstruction")
    result = run_detect(
        predictor,
        eval_windows,
        train_losses=train_losses,
        anomaly_ratio=config["anomaly_ratio"],
        labels=labeled.labels,
        threshold_source=config["threshold_source"],
    )
    outputs = _detection_outputs(out, config, result)
    return _finish(out, "detect", config, inputs, outputs)


def cmd_forecast(args, config: RunConfig) -> int:
    out = _out_dir(config)
    predictor = fc.load_predictor(args.model)
    series, inputs = _load_or_synth(config)
    inputs["model"] = args.model
    parts = tel.split(series, config.split_spec())
    test_series = _maybe_normalize(parts.test, predictor.norm_stats)
    pcfg = predictor.config
    if pcfg.horizon == pcfg.seq_len:
        mode, horizon = "reconstruction", 1
    else:
        mode, horizon = "forecast", pcfg.horizon
    test_windows = tel.window(test_series, pcfg.seq_len, config["stride"], mode, horizon)
    report = fc.evaluate_forecast(predictor, test_windows)
    baseline = fc.persistence_predictions(test_windows)
    base_mse = float(((baseline - test_windows.targets) ** 2).mean())
    text = report.to_text() + f"persistence_mse: {base_mse!r}\n"
    _write_text(os.path.join(out, "forecast_report.txt"), text)
    return _finish(out, "forecast", config, inputs, ["forecast_report.txt"])


def cmd_packetset_build(args, config: RunConfig) -> int:
    out = _out_dir(config)
    path = config["data"]
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        inputs = {"data": path}
    else:
        text = syn.synth_packet_log(seed=config["seed"])
        inputs = {}
    samples = ps.build_dataset(
        text,
        context=config["context"],
        seed=config["seed"],
        idle_timeout_s=config["session_timeout_s"],
    )
    _write_text(os.path.join(out, "samples.txt"), ps.render_dataset(samples))
    return _finish(out, "packetset build", config, inputs, ["samples.txt"])


def cmd_packetset_score(args, config: RunConfig) -> int:
    out = _out_dir(config)
    pred = ps.load_packet_csv(args.pred)
    truth = ps.load_packet_csv(args.truth)
    report = ps.score_fields(pred, truth)
    _write_text(os.path.join(out, "score_report.txt"), report.to_text())
    inputs = {"pred": args.pred, "truth": args.truth}
    return _finish(out, "packetset score", config, inputs, ["score_report.txt"])


def _labeled_for_stream(config: RunConfig) -> tuple[inj.LabeledSeries, dict]:
    """Labeled data for latency runs: load a labeled CSV or synth + inject."""
    path = config["data"]
    if path:
        return inj.load_labeled_csv(path), {"data": path}
    series, _ = _load_or_synth(config)
    return _inject_series(series, config, "nth"), {}


def cmd_simulate(args, config: RunConfig) -> int:
    out = _out_dir(config)
    labeled, inputs = _labeled_for_stream(config)
    detector = ts.PersistenceDetector(config["anomaly_ratio"])
    stats, reports = ts.simulate_stream(
        labeled,
        config.tier(),
        config["batch_size"],
        config.latency_model(),
        detector,
        mission_id=f"mission-{config['seed']}",
    )
    payload = {
        "batch_size": stats.batch_size,
        "records": stats.records,
        "n_batches": stats.n_batches,
        "elapsed_s": stats.elapsed_s,
        "metrics": None if stats.metrics is None else stats.metrics.as_dict(),
    }
    _write_text(os.path.join(out, "stats.json"), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _write_text(os.path.join(out, "report.jsonl"), "".join(r.to_json() + "\n" for r in reports))
    return _finish(out, "simulate", config, inputs, ["stats.json", "report.jsonl"])


def _run_detection_experiment(config: RunConfig, scheme: str):
    """Shared recipe: train on clean splits, inject into raw test, detect."""
    series, inputs = _load_or_synth(config)
    parts, stats, predictor, _, train_losses = _train_predictor(config, series, "reconstruction")
    labeled = _inject_series(parts.test, config, scheme)
    eval_series = _maybe_normalize(labeled.series, stats)
    eval_windows = tel.window(eval_series, predictor.config.seq_len, 1, "reconstruction")
    result = run_detect(
        predictor,
        eval_windows,
        train_losses=train_losses,
        anomaly_ratio=config["anomaly_ratio"],
        labels=labeled.labels,
        threshold_source=config["threshold_source"],
    )
    return inputs, labeled, result


def _cmd_experiment_detection(config: RunConfig, scheme: str, command: str) -> int:
    out = _out_dir(config)
    inputs, labeled, result = _run_detection_experiment(config, scheme)
    inj.save_labeled_csv(labeled, os.path.join(out, "labeled.csv"))
    outputs = ["labeled.csv", "labeled.csv.meta.json"]
    outputs += _detection_outputs(out, config, result)
    return _finish(out, command, config, inputs, outputs)


def cmd_experiment_nth(args, config: RunConfig) -> int:
    return _cmd_experiment_detection(config, "nth", "experiment nth")


def cmd_experiment_poisson(args, config: RunConfig) -> int:
    return _cmd_experiment_detection(config, "poisson", "experiment poisson")


def cmd_experiment_variance_sweep(args, config: RunConfig) -> int:
    out = _out_dir(config)
    series, inputs = _load_or_synth(config)
    parts, stats, predictor, _, train_losses = _train_predictor(config, series, "reconstruction")

    def evaluator(labeled: inj.LabeledSeries):
        eval_series = _maybe_normalize(labeled.series, stats)
        eval_windows = tel.window(eval_series, predictor.config.seq_len, 1, "reconstruction")
        result = run_detect(
            predictor,
            eval_windows,
            train_losses=train_losses,
            anomaly_ratio=config["anomaly_ratio"],
            labels=labeled.labels,
            threshold_source=config["threshold_source"],
        )
        return result.metrics

    rows = inj.variance_sweep(
        parts.test, config["feature"], config.variance_target_list(), config["n"], evaluator
    )
    lines = ["target_value,accuracy,precision,recall,f_score"]
    for target, m in rows:
        lines.append(f"{target!r},{m.accuracy!r},{m.precision!r},{m.recall!r},{m.f_score!r}")
    _write_text(os.path.join(out, "sweep.csv"), "\n".join(lines) + "\n")
    return _finish(out, "experiment variance-sweep", config, inputs, ["sweep.csv"])


def cmd_experiment_batch_sweep(args, config: RunConfig) -> int:
    out = _out_dir(config)
    labeled, inputs = _labeled_for_stream(config)
    detector = ts.PersistenceDetector(config["anomaly_ratio"])
    results = ts.run_batch_experiment(
        labeled,
        config.batch_list(),
        config.tier(),
        config.latency_model(),
        detector,
        mission_id=f"mission-{config['seed']}",
    )
    _write_text(os.path.join(out, "sweep.csv"), ts.batch_experiment_csv(results))
    return _finish(out, "experiment batch-sweep", config, inputs, ["sweep.csv"])


_COMMANDS = {
    "ingest": cmd_ingest,
    "inject": cmd_inject,
    "train": cmd_train,
    "detect": cmd_detect,
    "forecast": cmd_forecast,
    "packetset build": cmd_packetset_build,
    "packetset score": cmd_packetset_score,
    "simulate": cmd_simulate,
    "experiment nth": cmd_experiment_nth,
    "experiment poisson": cmd_experiment_poisson,
    "experiment variance-sweep": cmd_experiment_variance_sweep,
    "experiment batch-sweep": cmd_experiment_batch_sweep,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        name = args.command
        if getattr(args, "subcommand", None):
            name = f"{args.command} {args.subcommand}"
        config = _effective_config(args)
        return _COMMANDS[name](args, config)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
