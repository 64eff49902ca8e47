"""Command-line pipeline: generate, walk, train, align, eval, project, experiment.

Every stage reads its inputs from and writes its outputs to ``--output-dir``
(default ``$CONCEPTALIGN_OUTPUT_DIR`` or ``runs``). Exit codes: 0 success,
1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from .align import load_alignment, save_alignment
from .corpus import load_corpus, save_corpus
from .embed import load_embedding, save_embedding
from .experiment import (
    VARIANTS,
    ExperimentConfig,
    common_from_map,
    dumps,
    report_document,
    run_trials,
    stage_align,
    stage_corpus,
    stage_eval,
    stage_graph,
    stage_train,
    trial_graph_seed,
)
from .graphsys import load_graph, save_graph
from .project import emit_plot, project_embedding, project_space

ENV_OUTPUT_DIR = "CONCEPTALIGN_OUTPUT_DIR"

GRAPH = "graph.txt"
STATES, LAWS = "states.txt", "laws.txt"
STATE_EMB, LAW_EMB = "states.emb", "laws.emb"
ALIGNMENT = "alignment.txt"
REPORT = "report.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, path, detail: str):
        super().__init__(f"{stage}: {path}: {detail}")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicit flags override the config file
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--n", type=int, help="number of states")
    p.add_argument("--rho", type=float, help="laws per state")
    p.add_argument("--d", type=int, help="embedding dimension")
    p.add_argument("--window", type=int)
    p.add_argument("--n-sequences", type=int, dest="n_sequences")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--metric", choices=("l2", "l1"))
    p.add_argument("--pairing", choices=("frequency", "source"))
    p.add_argument("--outlier-z", type=float, dest="outlier_z")
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--output-dir", dest="output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conceptalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("generate", "sample the oriented graph"),
        ("walk", "emit paired state/law walk corpora"),
        ("train", "train the two skip-gram spaces"),
        ("align", "fit the alignment map"),
        ("eval", "evaluate the common space"),
        ("project", "write 2-D PCA plots"),
        ("experiment", "run the full pipeline over many trials"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_config_args(p)
        if name == "experiment":
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from exc
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if "output_dir" not in values:
        values["output_dir"] = os.environ.get(ENV_OUTPUT_DIR, "runs")
    cfg = ExperimentConfig.from_dict(values)
    cfg.validate()
    return cfg


def _read(stage: str, loader, path, *a):
    if not Path(path).exists():
        raise StageError(stage, path, "missing input (run the upstream stage first)")
    try:
        return loader(path, *a)
    except (ValueError, KeyError) as exc:
        raise StageError(stage, path, f"corrupt input: {exc}") from exc


def cmd_generate(cfg: ExperimentConfig, out: Path) -> str:
    g = stage_graph(cfg, trial_graph_seed(cfg.seed, 0))
    save_graph(g, out / GRAPH)
    return f"generate: {g.n} states, {g.m} laws (rho={g.density:.3g}) -> {out / GRAPH}"


def cmd_walk(cfg: ExperimentConfig, out: Path) -> str:
    g = _read("walk", load_graph, out / GRAPH)
    corpus = stage_corpus(cfg, g)
    save_corpus(corpus, out / STATES, out / LAWS)
    return f"walk: {len(corpus)} sequences -> {out / STATES}, {out / LAWS}"


def cmd_train(cfg: ExperimentConfig, out: Path) -> str:
    g = _read("train", load_graph, out / GRAPH)
    corpus = _read("train", lambda p: load_corpus(p, out / LAWS, g), out / STATES)
    states, laws = stage_train(cfg, corpus, g.seed)
    save_embedding(states, out / STATE_EMB)
    save_embedding(laws, out / LAW_EMB)
    return (f"train: {len(states)} state vectors, {len(laws)} law vectors, d={cfg.d} "
            f"-> {out / STATE_EMB}, {out / LAW_EMB}")


def cmd_align(cfg: ExperimentConfig, out: Path) -> str:
    g = _read("align", load_graph, out / GRAPH)
    states = _read("align", load_embedding, out / STATE_EMB)
    laws = _read("align", load_embedding, out / LAW_EMB)
    amap = stage_align(cfg, states, laws, g.seed)
    save_alignment(amap, out / ALIGNMENT)
    return f"align: {cfg.variant}, residual {amap.residual:.4g} -> {out / ALIGNMENT}"


def _common(stage: str, out: Path):
    states = _read(stage, load_embedding, out / STATE_EMB)
    laws = _read(stage, load_embedding, out / LAW_EMB)
    amap = _read(stage, load_alignment, out / ALIGNMENT)
    return states, laws, common_from_map(amap, states, laws)


def cmd_eval(cfg: ExperimentConfig, out: Path) -> str:
    g = _read("eval", load_graph, out / GRAPH)
    _, _, common = _common("eval", out)
    report = stage_eval(cfg, common, g.seed)
    (out / REPORT).write_text(dumps(report_document(cfg, g.seed, report)), encoding="utf-8")
    t10, t30, t50, avg = report.headline
    return (f"eval: Top10 {t10:.1f}  Top30 {t30:.1f}  Top50 {t50:.1f}  Avg {avg:.1f}  "
            f"midpoint/triangle hit rate {report.midpoint.combined_rate:.2f} -> {out / REPORT}")


def cmd_project(cfg: ExperimentConfig, out: Path) -> str:
    states, laws, common = _common("project", out)
    emit_plot(project_embedding(states, "state"), out / "states_pca")
    emit_plot(project_embedding(laws, "law"), out / "laws_pca")
    emit_plot(project_space(common), out / "common_pca")
    return f"project: {common.n + common.m} points -> {out / 'common_pca.svg'}"


def cmd_experiment(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> str:
    agg, per = run_trials(cfg, n_jobs=jobs)
    trial_dir = out / "trials"
    trial_dir.mkdir(parents=True, exist_ok=True)
    for i, (gseed, report) in enumerate(per):
        (trial_dir / f"trial_{i:04d}.json").write_text(
            dumps(report_document(cfg, gseed, report)), encoding="utf-8")
    # the output location is not a parameter; keep reports location-independent
    params = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    doc = {"config": params, "aggregate": agg.to_dict(),
           "graph_seeds": [g for g, _ in per]}
    (out / "aggregate.json").write_text(dumps(doc), encoding="utf-8")
    m, s = agg.mean, agg.std
    return (f"experiment: {agg.trials} trials ({cfg.variant})  "
            + "  ".join(f"{k} {m[k]:.1f}+-{s[k]:.1f}" for k in ("top10", "top30", "top50", "avg"))
            + f" -> {out / 'aggregate.json'}")


COMMANDS = {
    "generate": cmd_generate, "walk": cmd_walk, "train": cmd_train, "align": cmd_align,
    "eval": cmd_eval, "project": cmd_project,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ValueError as exc:
        print(f"conceptalign {args.command}: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(dumps(cfg.to_dict()), encoding="utf-8")
        if args.command == "experiment":
            line = cmd_experiment(cfg, out, args.jobs)
        else:
            line = COMMANDS[args.command](cfg, out)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 2
        print(f"conceptalign {args.command}: {exc}", file=sys.stderr)
        return 2
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
