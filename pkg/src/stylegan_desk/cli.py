"""Command line entry point: train, generate, mix, truncate-sweep, metrics, report."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import torch

from . import experiments as ex
from .checkpoint import load_checkpoint
from .images import save_grid
from .latent import sample_z
from .metrics import MetricReport, PathLengthConfig, perceptual_path_length
from .metrics.report import append_reports

log = logging.getLogger("stylegan_desk")


def _output_root(arg):
    return Path(arg or os.environ.get(ex.OUTPUT_ENV, "runs"))


def cmd_train(args):
    overrides = list(args.set or [])
    if args.out or os.environ.get(ex.OUTPUT_ENV):
        overrides.append(f"output_dir={_output_root(args.out)}")
    if args.config:
        plan = ex.load_plan(args.config, overrides)
    else:
        values = dict(item.split("=", 1) for item in overrides)
        plan = ex.build_plan(args.preset, values)
    run_dir = ex.run_experiment(plan, stop_after_images=args.stop_after_images, figures=not args.no_figures)
    print(run_dir)
    return 0


def cmd_generate(args):
    G = ex.load_generator(args.checkpoint)
    z = torch.stack([sample_z(args.seed + i, 1, G.config.z_dim)[0] for i in range(args.count)])
    g = torch.Generator()
    g.manual_seed(args.seed)
    with torch.no_grad():
        imgs = G(z.to(G.w_avg.dtype), rng=g, psi=args.psi, cutoff=args.cutoff)
    cols = args.cols or min(args.count, 8)
    rows = -(-args.count // cols)
    pad = rows * cols - args.count
    if pad:
        imgs = torch.cat([imgs, torch.full_like(imgs[:1], -1.0).expand(pad, -1, -1, -1)])
    save_grid(imgs, args.out, rows, cols)
    print(args.out)
    return 0


def cmd_mix(args):
    G = ex.load_generator(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = list(range(args.seed, args.seed + args.count))
    dst = list(range(args.seed + 1000, args.seed + 1000 + args.count))
    ranges = ex.style_ranges(G.num_styles)
    if args.slots:
        lo, hi = (int(v) for v in args.slots.split(":"))
        ranges = {"custom": (lo, hi)}
    for label, slots in ranges.items():
        if slots[0] >= slots[1]:
            continue
        grid = ex.mixing_grid(G, src, dst, slots)
        save_grid(grid, out / f"mixing_{label}.png", args.count + 1, args.count + 1)
    print(out)
    return 0


def cmd_truncate_sweep(args):
    G = ex.load_generator(args.checkpoint)
    psis = [float(p) for p in args.psi.split(",")]
    cutoff = args.cutoff if args.cutoff is not None else ex.truncation_cutoff(G.config)
    seeds = list(range(args.seed, args.seed + args.count))
    sheet = ex.truncation_sheet(G, seeds, psis, cutoff)
    save_grid(sheet, args.out, len(seeds), len(psis))
    print(args.out)
    return 0


def cmd_metrics(args):
    G = ex.load_generator(args.checkpoint)
    _, meta = load_checkpoint(args.checkpoint)
    plan = ex.ExperimentPlan.from_dict(meta["plan"])
    reports = []
    for name in args.metric:
        if name in ("ppl_z", "ppl_w"):
            cfg = PathLengthConfig(space=name[-1], sample_count=args.samples, seed=args.seed,
                                   endpoints_only=args.endpoints_only, crop=args.crop, metric=args.distance,
                                   z_dim=G.config.z_dim, distribution=G.config.latent_distribution)
            value = perceptual_path_length(G.synthesis_fn(), G.mapping, cfg)
            reports.append(MetricReport(name, value, cfg.to_dict(), args.seed, space=name[-1],
                                        images_seen=meta["images_seen"]))
        elif name == "fid_proxy":
            plan.metrics.fid_samples = args.samples
            plan.metrics.seed = args.seed
            plan.metrics.names = ["fid_proxy"]
            dataset = ex.load_dataset(plan.dataset)
            rep = ex.evaluate_metrics(G, plan, ex.real_features(dataset, args.samples),
                                      images_seen=meta["images_seen"])
            reports.append(rep["fid_proxy"])
        else:
            raise SystemExit(f"unsupported metric {name!r}")
    for r in reports:
        print(json.dumps(r.to_dict(), default=str))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        append_reports(reports, out / "reports.jsonl", out / "reports.csv")
    return 0


def cmd_report(args):
    result = ex.emit_report(args.runs, args.out)
    for w in result["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(result["out_dir"])
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="stylegan-desk")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train per a plan file or preset")
    t.add_argument("--config", help="INI plan file")
    t.add_argument("--preset", choices=sorted(ex.PRESETS), default="config_f")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a plan key")
    t.add_argument("--out", help=f"output root (default ${ex.OUTPUT_ENV} or ./runs)")
    t.add_argument("--stop-after-images", type=int)
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample an image grid from a checkpoint")
    g.add_argument("checkpoint")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--cols", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--psi", type=float, default=1.0)
    g.add_argument("--cutoff", type=int)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("mix", help="coarse / middle / fine style-mixing grids")
    m.add_argument("checkpoint")
    m.add_argument("--out", required=True)
    m.add_argument("--count", type=int, default=4)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--slots", help="custom slot range lo:hi copied from the sources")
    m.set_defaults(func=cmd_mix)

    s = sub.add_parser("truncate-sweep", help="truncation sheet over psi values")
    s.add_argument("checkpoint")
    s.add_argument("--out", required=True)
    s.add_argument("--psi", default="-1,-0.5,0,0.5,0.7,1")
    s.add_argument("--cutoff", type=int)
    s.add_argument("--count", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_truncate_sweep)

    q = sub.add_parser("metrics", help="evaluate metrics on a checkpoint")
    q.add_argument("checkpoint")
    q.add_argument("--metric", action="append", choices=["ppl_z", "ppl_w", "fid_proxy"], required=True)
    q.add_argument("--samples", type=int, default=10_000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--endpoints-only", action="store_true")
    q.add_argument("--crop", action="store_true")
    q.add_argument("--distance", default="proxy")
    q.add_argument("--out", help="directory for reports.jsonl / reports.csv")
    q.set_defaults(func=cmd_metrics)

    r = sub.add_parser("report", help="convergence plots and summary table")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
