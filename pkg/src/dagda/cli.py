"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data or validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import data_io, pipeline
from .config import FIELD_TYPES, RunConfig, load_config
from .errors import ConfigError, DagdaError, NumericalError, ValidationError
from .graph import build_graph
from .metrics import EvalReport

log = logging.getLogger("dagda")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", default=".", help="output directory")
    for f in fields(RunConfig):
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        kw = dict(dest=f.name, default=None, metavar="VALUE")
        if FIELD_TYPES[f.name] == "bool":
            kw.update(nargs="?", const="true")
        p.add_argument(*flags, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dagda", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    _add_common(p)

    p = sub.add_parser("anchors", help="train the anchor model (or PCA anchors)")
    p.add_argument("dataset")
    _add_common(p)

    p = sub.add_parser("align", help="train the alignment model on seen classes")
    p.add_argument("dataset")
    p.add_argument("anchors")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a trained alignment model")
    p.add_argument("dataset")
    p.add_argument("anchors")
    p.add_argument("model")
    _add_common(p)

    p = sub.add_parser("run", help="anchors + align + eval in one go, optionally repeated")
    p.add_argument("dataset")
    _add_common(p)

    p = sub.add_parser("sweep-alpha", help="full pipeline for each alpha in --alphas")
    p.add_argument("dataset")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    _add_common(p)

    p = sub.add_parser("export-anchors", help="write anchors as a text matrix with node labels")
    p.add_argument("anchors")
    p.add_argument("--dataset", dest="names_from", help="dataset dir supplying class/attribute names")
    _add_common(p)
    return parser


def _resolve_config(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name) is not None}
    return load_config(args.config, overrides)


def _echo(cfg: RunConfig, out: Path, command: str) -> None:
    text = cfg.to_text()
    (out / f"{command}_config.txt").write_text(text)
    sys.stdout.write(f"# effective configuration ({command})\n{text}")


def _load_dataset(path, cfg: RunConfig) -> data_io.Dataset:
    if cfg.drop_empty_attrs:
        return pipeline.drop_empty_attributes(data_io.read_dataset(path)).validate()
    return data_io.load_dataset(path)


def _write_trace(path: Path, trace) -> None:
    path.write_text("".join(f"{i} {v:.17g}\n" for i, v in enumerate(trace)))


def _write_report(out: Path, report: EvalReport, stem: str = "report") -> None:
    (out / f"{stem}.txt").write_text(report.to_text())
    (out / f"{stem}.csv").write_text(report.to_table())
    sys.stdout.write(report.to_text())


def cmd_synth(args, cfg: RunConfig, out: Path) -> None:
    ds = data_io.synth_dataset(cfg.synth_config())
    data_io.save_dataset(out, ds)
    print(f"wrote synthetic dataset to {out}: {ds.X.shape[0]} samples, "
          f"{ds.num_classes} classes, {ds.C.shape[1]} attributes")


def cmd_anchors(args, cfg: RunConfig, out: Path) -> None:
    ds = _load_dataset(args.dataset, cfg)
    g = build_graph(ds.C)
    anchors, model = pipeline.run_anchor_stage(g, cfg)
    pipeline.save_anchor_checkpoint(out / "anchors.ckpt", anchors, model, cfg, g.num_attrs)
    if model is not None:
        _write_trace(out / "anchor_trace.txt", model.loss_trace)
        print(f"anchor loss {model.loss_trace[0]:.6g} -> {model.loss_trace[-1]:.6g}")
    print(f"wrote {out / 'anchors.ckpt'} ({anchors.U.shape[0]} x {anchors.dim})")


def _load_anchors_for(path, ds: data_io.Dataset, cfg: RunConfig):
    anchors, _, header = pipeline.load_anchor_checkpoint(path)
    if anchors.num_classes != ds.num_classes or anchors.U.shape[0] != ds.num_classes + ds.C.shape[1]:
        raise ValidationError(f"{path}: anchors do not match the dataset's class/attribute counts")
    if cfg.anchor_dim and cfg.anchor_dim != anchors.dim:
        raise ConfigError(f"{path}: anchor dim {anchors.dim} differs from configured {cfg.anchor_dim}")
    return anchors


def cmd_align(args, cfg: RunConfig, out: Path) -> None:
    ds = _load_dataset(args.dataset, cfg)
    anchors = _load_anchors_for(args.anchors, ds, cfg)
    model = pipeline.run_align_stage(ds, anchors, cfg)
    pipeline.save_align_checkpoint(out / "align.ckpt", model)
    _write_trace(out / "align_trace.txt", model.loss_trace)
    print(f"alignment loss {model.loss_trace[0]:.6g} -> {model.loss_trace[-1]:.6g}")


def cmd_eval(args, cfg: RunConfig, out: Path) -> None:
    ds = _load_dataset(args.dataset, cfg)
    anchors = _load_anchors_for(args.anchors, ds, cfg)
    model = pipeline.load_align_checkpoint(args.model)
    try:
        report = pipeline.evaluate(ds, anchors, model, cfg)
    except ValidationError as exc:
        raise type(exc)(f"{args.dataset}: {exc}") from exc
    _write_report(out, report)


def _mean_report(reports: list[EvalReport]) -> EvalReport:
    if len(reports) == 1:
        return reports[0]
    keys = [k for k in ("mca", "mca_s", "mca_u", "H") if getattr(reports[0], k) is not None]
    classes = sorted(reports[0].per_class)
    return EvalReport(mode=reports[0].mode,
                      per_class={c: float(np.mean([r.per_class[c] for r in reports])) for c in classes},
                      counts=dict(reports[0].counts),
                      **{k: float(np.mean([getattr(r, k) for r in reports])) for k in keys})


def cmd_run(args, cfg: RunConfig, out: Path) -> None:
    ds = _load_dataset(args.dataset, cfg)
    reports = [pipeline.run_pipeline(ds, cfg.replace(seed=cfg.seed + i)).report
               for i in range(cfg.repeats)]
    _write_report(out, _mean_report(reports))


def _sweep_point(ds: data_io.Dataset, cfg: RunConfig, alpha: float) -> str:
    try:
        scores = [pipeline.run_pipeline(ds, cfg.replace(alpha=alpha, seed=cfg.seed + i,
                                                        mode="conventional")).report.mca
                  for i in range(cfg.repeats)]
        return f"{alpha!r},{np.mean(scores):.17g},ok,"
    except DagdaError as exc:
        msg = str(exc).replace(",", ";").replace("\n", " ")
        return f"{alpha!r},,error,{type(exc).__name__}: {msg}"


def cmd_sweep_alpha(args, cfg: RunConfig, out: Path) -> None:
    ds = _load_dataset(args.dataset, cfg)
    alphas = sorted(cfg.alpha_list())
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, [ds] * len(alphas), [cfg] * len(alphas), alphas))
    else:
        rows = [_sweep_point(ds, cfg, a) for a in alphas]
    table = "alpha,mca,status,message\n" + "\n".join(rows) + "\n"
    (out / "sweep.csv").write_text(table)
    sys.stdout.write(table)


def cmd_export_anchors(args, cfg: RunConfig, out: Path) -> None:
    anchors, _, header = pipeline.load_anchor_checkpoint(args.anchors)
    nc = anchors.num_classes
    na = anchors.U.shape[0] - nc
    cnames = anames = None
    if args.names_from:
        ds = _load_dataset(args.names_from, cfg)
        cnames, anames = ds.class_names, ds.attr_names
    data_io.save_matrix(out / "anchors.txt", anchors.U)
    lines = ["row\tkind\tindex\tname"]
    for r in range(nc + na):
        kind, idx = ("class", r) if r < nc else ("attribute", r - nc)
        names = cnames if kind == "class" else anames
        name = names[idx] if names and idx < len(names) else ""
        lines.append(f"{r}\t{kind}\t{idx}\t{name}")
    (out / "anchor_nodes.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {nc + na} anchor rows to {out / 'anchors.txt'}")


COMMANDS = {
    "synth": cmd_synth,
    "anchors": cmd_anchors,
    "align": cmd_align,
    "eval": cmd_eval,
    "run": cmd_run,
    "sweep-alpha": cmd_sweep_alpha,
    "export-anchors": cmd_export_anchors,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _echo(cfg, out, args.command)
        COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
