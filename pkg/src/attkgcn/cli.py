"""Command-line surface: gen, train, eval, recommend, sweep.

Configuration precedence is flags > config file > documented defaults. Every
run writes its fully resolved configuration next to its outputs; re-running a
command from that file reproduces the metrics bit-exactly.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .interactions import load_interactions, split
from .kg import load_triples
from .metrics import topk_recommend
from .model import AGGREGATORS, AttKGCN, HyperParams
from .numerics import load_params, save_params
from .synthgen import SynthConfig, generate, paper_scale_preset
from .training import eval_seed_sequences, evaluate_split, train

SWEEP_AXES = ("k", "d", "h", "aggregator", "attention")

_INT_KEYS = {
    "k", "dim", "depth", "batch", "epochs", "patience", "seed", "user", "top_n",
    "seeds", "jobs", "users", "items", "extra_entities", "relations",
    "noise_relations", "categories", "triples_per_item", "positives_per_user",
}
_FLOAT_KEYS = {"lr", "l2"}
_STR_KEYS = {
    "kg", "ratings", "item_map", "out", "checkpoint", "aggregator", "attention",
    "axis", "values", "preset",
}
VALID_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS

DEFAULTS = {
    "k": 8,
    "dim": 32,
    "depth": 2,
    "lr": 0.01,
    "l2": 1e-4,
    "batch": 32,
    "epochs": 20,
    "aggregator": "sum",
    "attention": "on",
    "patience": 5,
    "seed": 1,
    "top_n": 10,
    "seeds": 5,
    "jobs": 1,
    "users": 50,
    "items": 200,
    "extra_entities": 300,
    "relations": 6,
    "noise_relations": 2,
    "categories": 4,
    "triples_per_item": 8,
    "positives_per_user": 20,
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation."""

    k: int = 8
    dim: int = 32
    depth: int = 2
    lr: float = 0.01
    l2: float = 1e-4
    batch: int = 32
    epochs: int = 20
    aggregator: str = "sum"
    attention: str = "on"
    patience: int = 5
    seed: int = 1
    kg: str | None = None
    ratings: str | None = None
    item_map: str | None = None
    out: str | None = None
    checkpoint: str | None = None
    user: int | None = None
    top_n: int = 10
    axis: str | None = None
    values: str | None = None
    seeds: int = 5
    jobs: int = 1
    users: int = 50
    items: int = 200
    extra_entities: int = 300
    relations: int = 6
    noise_relations: int = 2
    categories: int = 4
    triples_per_item: int = 8
    positives_per_user: int = 20
    preset: str | None = None

    def hyperparams(self) -> HyperParams:
        return HyperParams(
            k=self.k,
            dim=self.dim,
            depth=self.depth,
            l2=self.l2,
            lr=self.lr,
            batch=self.batch,
            aggregator=self.aggregator,
            attention=self.attention == "on",
            seed=self.seed,
            epochs=self.epochs,
            patience=self.patience,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            users=self.users,
            items=self.items,
            extra_entities=self.extra_entities,
            relations=self.relations,
            noise_relations=self.noise_relations,
            categories=self.categories,
            triples_per_item=self.triples_per_item,
            positives_per_user=self.positives_per_user,
            seed=self.seed,
        )

    def resolved_lines(self) -> str:
        parts = []
        for f in sorted(fld.name for fld in fields(self)):
            value = getattr(self, f)
            if value is None:
                continue
            if isinstance(value, float):
                value = repr(value)
            parts.append(f"{f}={value}")
        return "\n".join(parts) + "\n"


def _convert(key: str, raw: str, where: str):
    if key not in VALID_KEYS:
        raise ConfigError(
            f"{where}: unknown key {key!r}; valid keys: {', '.join(sorted(VALID_KEYS))}"
        )
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse value {raw!r} for key {key!r}") from exc
    if key == "aggregator" and raw not in AGGREGATORS:
        raise ConfigError(
            f"{where}: invalid aggregator {raw!r}; valid values: {', '.join(AGGREGATORS)}"
        )
    if key == "attention" and raw not in ("on", "off"):
        raise ConfigError(f"{where}: attention must be 'on' or 'off', got {raw!r}")
    if key == "axis" and raw not in SWEEP_AXES:
        raise ConfigError(f"{where}: invalid axis {raw!r}; valid values: {', '.join(SWEEP_AXES)}")
    return raw


def parse_config_file(path) -> dict:
    """Read "key=value" lines; '#' starts a comment, blank lines ignored."""
    overrides: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            overrides[key] = _convert(key, value, f"{path}:{lineno}")
    return overrides


def parse_config(flag_overrides: dict, config_path=None) -> RunConfig:
    """Resolve flags > config file > defaults into a concrete RunConfig."""
    file_overrides = parse_config_file(config_path) if config_path else {}
    resolved: dict = dict(DEFAULTS)
    preset = flag_overrides.get("preset", file_overrides.get("preset"))
    if preset is not None:
        if preset != "paper":
            raise ConfigError(f"unknown preset {preset!r}; valid values: paper")
        base = paper_scale_preset()
        resolved.update(
            users=base.users,
            items=base.items,
            extra_entities=base.extra_entities,
            relations=base.relations,
            noise_relations=base.noise_relations,
            categories=base.categories,
            triples_per_item=base.triples_per_item,
            positives_per_user=base.positives_per_user,
            preset="paper",
        )
    resolved.update(file_overrides)
    resolved.update({k: v for k, v in flag_overrides.items() if v is not None})
    for key, value in list(resolved.items()):
        if isinstance(value, str) and key in (_INT_KEYS | _FLOAT_KEYS):
            resolved[key] = _convert(key, value, "flags")
        elif key in ("aggregator", "attention", "axis") and value is not None:
            resolved[key] = _convert(key, str(value), "flags")
    return RunConfig(**resolved)


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + n.replace('_', '-') for n in missing)}")


def _hp(cfg: RunConfig) -> HyperParams:
    hp = cfg.hyperparams()
    try:
        hp.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return hp


def _write_resolved(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(cfg.resolved_lines(), encoding="utf-8")


def _load_dataset(cfg: RunConfig):
    graph = load_triples(cfg.kg)
    iset = split(load_interactions(cfg.ratings, cfg.item_map), cfg.seed)
    return graph, iset


def cmd_gen(cfg: RunConfig) -> int:
    _require(cfg, "out")
    out = Path(cfg.out)
    paths = generate(cfg.synth_config(), out)
    _write_resolved(cfg, out)
    print(f"wrote {paths.kg}")
    print(f"wrote {paths.ratings}")
    print(f"wrote {paths.item_map}")
    print(f"wrote {paths.ground_truth}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "kg", "ratings", "item_map", "out")
    graph, iset = _load_dataset(cfg)
    out = Path(cfg.out)

    def progress(rec: dict) -> None:
        print(
            f"epoch {rec['epoch']:3d}  loss {rec['train_loss']:.4f}  "
            f"train_auc {rec['train_auc']:.4f}  val_auc {rec['val_auc']:.4f}"
        )

    best, report = train(_hp(cfg), graph, iset, progress=progress)
    _write_resolved(cfg, out)
    report.write(out / "report.jsonl")
    save_params(best, out / "checkpoint.txt")
    print(
        f"best_epoch {report.final['best_epoch']}  test_auc {report.final['test_auc']:.4f}  "
        f"test_f1 {report.final['test_f1']:.4f}"
    )
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "kg", "ratings", "item_map", "checkpoint", "out")
    graph, iset = _load_dataset(cfg)
    params = load_params(cfg.checkpoint)
    model = AttKGCN(graph, _hp(cfg), params)
    neg_ss, field_ss = eval_seed_sequences(cfg.seed)
    result = {}
    for split_name in ("train", "validation", "test"):
        metrics = evaluate_split(model, iset, split_name, neg_ss, field_ss)
        result[split_name] = metrics
    out = Path(cfg.out)
    _write_resolved(cfg, out)
    payload = json.dumps(result, sort_keys=True, indent=2)
    (out / "eval.json").write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def cmd_recommend(cfg: RunConfig) -> int:
    _require(cfg, "kg", "ratings", "item_map", "checkpoint", "user")
    graph, iset = _load_dataset(cfg)
    params = load_params(cfg.checkpoint)
    model = AttKGCN(graph, _hp(cfg), params)
    dense_user = iset.user_dense(cfg.user)
    exclude = {inter.item for inter in iset.train if inter.user == dense_user}
    _, field_ss = eval_seed_sequences(cfg.seed)
    ranked = topk_recommend(model, iset, dense_user, cfg.top_n, exclude, field_ss)
    lines = [
        f"{cfg.user}\t{rank}\t{int(iset.items_raw[item])}\t{prob:.6f}"
        for rank, (item, prob) in enumerate(ranked, start=1)
    ]
    body = "\n".join(lines) + ("\n" if lines else "")
    sys.stdout.write(body)
    if cfg.out is not None:
        out = Path(cfg.out)
        _write_resolved(cfg, out)
        (out / "recommendations.tsv").write_text(body, encoding="utf-8")
    return 0


def _axis_values(axis: str, raw: str) -> list:
    tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not tokens:
        raise ConfigError("sweep values must be a non-empty comma-separated list")
    if axis in ("k", "d", "h"):
        try:
            return [int(tok) for tok in tokens]
        except ValueError as exc:
            raise ConfigError(f"axis {axis!r} expects integer values, got {raw!r}") from exc
    if axis == "aggregator":
        for tok in tokens:
            if tok not in AGGREGATORS:
                raise ConfigError(
                    f"invalid aggregator {tok!r}; valid values: {', '.join(AGGREGATORS)}"
                )
        return tokens
    for tok in tokens:
        if tok not in ("on", "off"):
            raise ConfigError(f"attention axis expects on/off values, got {tok!r}")
    return tokens


def _apply_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "k":
        return replace(cfg, k=value)
    if axis == "d":
        return replace(cfg, dim=value)
    if axis == "h":
        return replace(cfg, depth=value)
    if axis == "aggregator":
        return replace(cfg, aggregator=value)
    return replace(cfg, attention=value)


def _sweep_cell(args: tuple) -> dict:
    cfg, axis, value, seed = args
    cell_cfg = replace(_apply_axis(cfg, axis, value), seed=seed)
    graph, iset = _load_dataset(cell_cfg)
    _, report = train(_hp(cell_cfg), graph, iset)
    best_epoch = report.final["best_epoch"]
    val_auc = float("nan")
    for rec in report.epochs:
        if rec["epoch"] == best_epoch:
            val_auc = rec["val_auc"]
    return {
        "test_auc": report.final["test_auc"],
        "test_f1": report.final["test_f1"],
        "val_auc": val_auc,
    }


def run_sweep(cfg: RunConfig, axis: str, values: list, seeds: int, jobs: int = 1):
    """One full train+eval per (value, seed); rows aggregate over seeds.

    Returns (header row, data rows). A failed cell is reported on stderr and
    aggregated over its surviving seeds; row order follows the input values.
    """
    cells = [(cfg, axis, value, cfg.seed + i) for value in values for i in range(seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_cell, cell) for cell in cells]
            outcomes = []
            for cell, fut in zip(cells, futures):
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # cell failure is not fatal to the sweep
                    print(
                        f"sweep cell {axis}={cell[2]} seed={cell[3]} failed: {exc}",
                        file=sys.stderr,
                    )
                    outcomes.append(None)
    else:
        outcomes = []
        for cell in cells:
            try:
                outcomes.append(_sweep_cell(cell))
            except Exception as exc:  # cell failure is not fatal to the sweep
                print(f"sweep cell {axis}={cell[2]} seed={cell[3]} failed: {exc}", file=sys.stderr)
                outcomes.append(None)

    header = [
        "axis", "value",
        "test_auc_mean", "test_auc_std",
        "test_f1_mean", "test_f1_std",
        "val_auc_mean", "val_auc_std",
        "n_seeds",
    ]
    rows = []
    for vi, value in enumerate(values):
        cell_results = [
            outcomes[vi * seeds + si] for si in range(seeds) if outcomes[vi * seeds + si]
        ]
        if cell_results:
            def stats(key: str) -> tuple[float, float]:
                arr = np.array([c[key] for c in cell_results], dtype=np.float64)
                std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                return float(arr.mean()), std

            ta = stats("test_auc")
            tf = stats("test_f1")
            va = stats("val_auc")
            rows.append(
                [axis, str(value), repr(ta[0]), repr(ta[1]), repr(tf[0]), repr(tf[1]),
                 repr(va[0]), repr(va[1]), str(len(cell_results))]
            )
        else:
            rows.append([axis, str(value)] + ["nan"] * 6 + ["0"])
    return header, rows


def cmd_sweep(cfg: RunConfig) -> int:
    _require(cfg, "kg", "ratings", "item_map", "out", "axis", "values")
    values = _axis_values(cfg.axis, cfg.values)
    header, rows = run_sweep(cfg, cfg.axis, values, cfg.seeds, cfg.jobs)
    out = Path(cfg.out)
    _write_resolved(cfg, out)
    table = "\t".join(header) + "\n" + "\n".join("\t".join(r) for r in rows) + "\n"
    (out / "sweep.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--kg")
    shared.add_argument("--ratings")
    shared.add_argument("--item-map", dest="item_map")
    shared.add_argument("--config")
    shared.add_argument("--out")
    shared.add_argument("--seed", type=int)

    hyper = argparse.ArgumentParser(add_help=False)
    hyper.add_argument("--k", type=int)
    hyper.add_argument("--dim", type=int)
    hyper.add_argument("--depth", type=int)
    hyper.add_argument("--lr", type=float)
    hyper.add_argument("--l2", type=float)
    hyper.add_argument("--batch", type=int)
    hyper.add_argument("--epochs", type=int)
    hyper.add_argument("--aggregator", choices=list(AGGREGATORS))
    hyper.add_argument("--attention", choices=["on", "off"])
    hyper.add_argument("--patience", type=int)

    parser = argparse.ArgumentParser(prog="attkgcn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", parents=[shared], help="generate a synthetic dataset")
    p_gen.add_argument("--users", type=int)
    p_gen.add_argument("--items", type=int)
    p_gen.add_argument("--extra-entities", dest="extra_entities", type=int)
    p_gen.add_argument("--relations", type=int)
    p_gen.add_argument("--noise-relations", dest="noise_relations", type=int)
    p_gen.add_argument("--categories", type=int)
    p_gen.add_argument("--triples-per-item", dest="triples_per_item", type=int)
    p_gen.add_argument("--positives-per-user", dest="positives_per_user", type=int)
    p_gen.add_argument("--preset", choices=["paper"])

    sub.add_parser("train", parents=[shared, hyper], help="train and checkpoint a model")

    p_eval = sub.add_parser("eval", parents=[shared, hyper], help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint")

    p_rec = sub.add_parser("recommend", parents=[shared, hyper], help="top-N items for a user")
    p_rec.add_argument("--checkpoint")
    p_rec.add_argument("--user", type=int)
    p_rec.add_argument("--top-n", dest="top_n", type=int)

    p_sweep = sub.add_parser("sweep", parents=[shared, hyper], help="hyperparameter sweep table")
    p_sweep.add_argument("--axis", choices=list(SWEEP_AXES))
    p_sweep.add_argument("--values")
    p_sweep.add_argument("--seeds", type=int)
    p_sweep.add_argument("--jobs", type=int)

    return parser


_HANDLERS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "recommend": cmd_recommend,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    flag_overrides = {
        k: v for k, v in vars(ns).items() if k not in ("command", "config") and v is not None
    }
    try:
        cfg = parse_config(flag_overrides, ns.config)
        return _HANDLERS[ns.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
