"""Command-line interface.

Subcommands: ``probe`` (metrics for one container), ``evaluate`` (grouped
rank correlations plus report artifacts for a manifest), and the family
generators ``synth``, ``train-toy`` and ``grid``. All outputs are
deterministic for fixed flags; GENPROBE_THREADS caps metric-computation
parallelism (0 or unset picks the CPU count).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import families, metrics, report, stats, store

log = logging.getLogger(__name__)

EXIT_FORMAT_ERROR = 2
EXIT_NO_LAYERS = 3
EXIT_TOO_MANY_FAILURES = 4

FAILURE_BUDGET = 0.10


def _thread_count() -> int:
    raw = os.environ.get("GENPROBE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _parse_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def probe_container(path, use_lrf: bool):
    """Shared probe path: read, filter, per-layer metrics, aggregate."""
    tensors = store.read_container(path)
    eligible = [t for t in tensors if metrics.eligible_layer(t)]
    if not eligible:
        return None
    layers = [metrics.probe_layer(t, use_lrf=use_lrf) for t in eligible]
    model = metrics.aggregate_model(layers)
    return layers, model


def _metric_key(metric_id: str, use_lrf: bool) -> str:
    return ("lrf." if use_lrf else "") + metric_id


def cmd_probe(args) -> int:
    wanted = _parse_list(args.metrics)
    unknown = set(wanted) - set(metrics.MODEL_METRIC_IDS)
    if unknown:
        print(f"unknown metrics: {sorted(unknown)}", file=sys.stderr)
        return EXIT_FORMAT_ERROR
    try:
        probed = probe_container(args.weights, args.lrf)
    except store.ContainerError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FORMAT_ERROR
    if probed is None:
        print("no eligible weight layers in container", file=sys.stderr)
        return EXIT_NO_LAYERS
    layers, model = probed
    model_values = {_metric_key(m, args.lrf): model.value(m) for m in wanted}

    if args.csv:
        lines = ["scope,name,metric,value"]
        for lm in layers:
            for field in ("sq", "er", "fro", "spec"):
                lines.append(f"layer,{lm.layer_name},{field},{getattr(lm, field)!r}")
        for metric_id, value in model_values.items():
            lines.append(f"model,,{metric_id},{value!r}")
        print("\n".join(lines))
    else:
        payload = {
            "layers": [
                {
                    "name": lm.layer_name,
                    "sq": lm.sq,
                    "er": lm.er,
                    "fro": lm.fro,
                    "spec": lm.spec,
                    "degenerate": lm.degenerate,
                }
                for lm in layers
            ],
            "model": model_values,
            "depth": model.depth,
            "lrf": args.lrf,
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _model_metrics_for_record(manifest_dir: Path, record: store.RunRecord, use_lrf: bool, cache: dict):
    path = Path(record.weights_path)
    if not path.is_absolute():
        path = manifest_dir / path
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    key = (digest, use_lrf)
    if key not in cache:
        probed = probe_container(path, use_lrf)
        if probed is None:
            raise metrics.EmptyModel(f"{record.weights_path}: no eligible layers")
        cache[key] = probed[1]
    return cache[key]


def cmd_evaluate(args) -> int:
    wanted = _parse_list(args.metrics)
    unknown = set(wanted) - set(metrics.MODEL_METRIC_IDS)
    if unknown:
        print(f"unknown metrics: {sorted(unknown)}", file=sys.stderr)
        return EXIT_FORMAT_ERROR
    targets = _parse_list(args.targets)
    group_by = _parse_list(args.group_by)
    try:
        records = store.read_manifest(args.manifest)
    except (store.ManifestError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FORMAT_ERROR

    manifest_dir = Path(args.manifest).resolve().parent
    cache: dict = {}
    entries: list[tuple[store.RunRecord, metrics.ModelMetrics]] = []
    failures = 0

    def compute(record):
        return _model_metrics_for_record(manifest_dir, record, args.lrf, cache)

    workers = min(_thread_count(), max(len(records), 1))
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: _try_compute(compute, r), records))
    else:
        results = [_try_compute(compute, r) for r in records]
    for record, mm in zip(records, results):
        if mm is None:
            failures += 1
        else:
            entries.append((record, mm))

    if records and failures / len(records) > FAILURE_BUDGET:
        print(
            f"{failures}/{len(records)} records failed metric computation",
            file=sys.stderr,
        )
        return EXIT_TOO_MANY_FAILURES

    cells = stats.grouped_correlations(entries, group_by, wanted, targets)
    scatter_points: dict[tuple, list[tuple[float, float]]] = {}
    for record, mm in entries:
        group = tuple(stats.record_group_value(record, k) for k in group_by)
        for base_id in wanted:
            metric_id = _metric_key(base_id, mm.lrf_applied)
            value = mm.value(base_id)
            for target in targets:
                tv = (
                    record.test_accuracy
                    if target == "test_accuracy"
                    else record.train_accuracy - record.test_accuracy
                )
                scatter_points.setdefault((group, metric_id, target), []).append((value, tv))

    bundle = report.write_report(args.out, cells, scatter_points, group_by)
    print(bundle.correlations_csv)
    return 0


def _try_compute(compute, record):
    try:
        return compute(record)
    except (store.ContainerError, metrics.EmptyModel, OSError) as exc:
        log.warning("record %s epoch %d failed: %s", record.model_id, record.epoch, exc)
        return None


def _parse_shapes(text: str) -> tuple[tuple[int, int], ...]:
    shapes = []
    for part in _parse_list(text):
        m, n = part.lower().split("x")
        shapes.append((int(m), int(n)))
    return tuple(shapes)


def cmd_synth(args) -> int:
    low, high = (float(v) for v in args.decay_range.split(":"))
    spec = families.SpectrumFamilySpec(
        n_models=args.n_models,
        layer_shapes=_parse_shapes(args.layer_shapes),
        decay_range=(low, high),
        link=args.link,
        seed=args.seed,
    )
    manifest = families.synth_family(spec, args.out)
    print(manifest)
    return 0


def cmd_train_toy(args) -> int:
    config = families.ToyTrainConfig(
        hidden=args.width,
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        n_train=args.n_train,
        n_test=args.n_test,
        data_seed=args.data_seed,
        init_seed=args.init_seed,
        separation=args.separation,
    )
    records = families.train_toy(config, args.out)
    print(Path(args.out) / "manifest.jsonl")
    log.info("trained %d epochs, final test accuracy %.4f", len(records), records[-1].test_accuracy)
    return 0


def cmd_grid(args) -> int:
    manifest = families.grid_family(
        lrs=[float(v) for v in _parse_list(args.lrs)],
        wds=[float(v) for v in _parse_list(args.wds)],
        widths=[int(v) for v in _parse_list(args.widths)],
        seeds=[int(v) for v in _parse_list(args.seeds)],
        out_dir=args.out,
        epochs=args.epochs,
    )
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probe", help="per-layer and model-level metrics for one container")
    p.add_argument("--weights", required=True)
    p.add_argument("--lrf", action="store_true", help="shrink spectra by EVB factorization first")
    p.add_argument("--metrics", default=",".join(metrics.MODEL_METRIC_IDS))
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", default=True)
    fmt.add_argument("--csv", action="store_true", default=False)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("evaluate", help="grouped rank correlations for a run manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--group-by", default="", help="comma-separated record/hyperparameter keys")
    p.add_argument("--metrics", default=",".join(metrics.MODEL_METRIC_IDS))
    p.add_argument("--targets", default=",".join(stats.TARGETS))
    p.add_argument("--lrf", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="planted-spectrum synthetic family")
    p.add_argument("--n-models", type=int, required=True)
    p.add_argument("--layer-shapes", default="16x32,32x64")
    p.add_argument("--decay-range", default="0.2:2.0")
    p.add_argument("--link", default="linear")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-toy", help="train one toy MLP, saving weights per epoch")
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--width", type=int, default=24)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--n-train", type=int, default=2048)
    p.add_argument("--n-test", type=int, default=2048)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--data-seed", type=int, required=True)
    p.add_argument("--init-seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("grid", help="train a hyperparameter grid into one manifest")
    p.add_argument("--lrs", default=",".join(f"{v:g}" for v in families.DEFAULT_GRID_LRS))
    p.add_argument("--wds", default=",".join(f"{v:g}" for v in families.DEFAULT_GRID_WDS))
    p.add_argument("--widths", default=",".join(str(v) for v in families.DEFAULT_GRID_WIDTHS))
    p.add_argument("--seeds", default=",".join(str(v) for v in families.DEFAULT_GRID_SEEDS))
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except families.DivergenceDetected as exc:
        print(f"DivergenceDetected: {exc}", file=sys.stderr)
        return 1
    except (store.ContainerError, store.ManifestError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FORMAT_ERROR


if __name__ == "__main__":
    sys.exit(main())
