"""Experiment orchestration: plans, presets A-F, training runs, figures and reports."""

import configparser
import copy
import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data import FLIP_SENSITIVE, SYNTH_ATTRIBUTES, DatasetSpec, load_dataset
from .images import save_grid
from .latent import TruncationParams, broadcast_styles, estimate_w_center, sample_z, truncate_w
from .metrics import (ClassifierConfig, MetricReport, PathLengthConfig, SeparabilityConfig,
                      config_hash, extract_features, fid, perceptual_path_length, separability_score,
                      train_attribute_classifier)
from .metrics.report import append_reports
from .synthesis import GENERATOR_PRESETS, Generator, GeneratorConfig
from .training import Trainer, TrainConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ENV = "STYLEGAN_DESK_OUTPUT"
METRIC_COLUMNS = ["images_seen", "fid_proxy", "ppl_z", "ppl_w", "separability"]
CHECKPOINT_NAME = "checkpoint.sgdk"

_TRAIN_PRESETS = {
    "a": dict(loss_kind="wgan_gp", p_mix=0.0),
    "b": dict(loss_kind="nonsat_r1", p_mix=0.0),
    "c": dict(loss_kind="nonsat_r1", p_mix=0.0),
    "d": dict(loss_kind="nonsat_r1", p_mix=0.0),
    "e": dict(loss_kind="nonsat_r1", p_mix=0.0),
    "f": dict(loss_kind="nonsat_r1", p_mix=0.9),
}
PRESETS = {f"config_{k}": {"generator": GENERATOR_PRESETS[k], "train": _TRAIN_PRESETS[k]}
           for k in GENERATOR_PRESETS}


@dataclass
class MetricSettings:
    names: List[str] = field(default_factory=lambda: ["fid_proxy", "ppl_z", "ppl_w"])
    fid_samples: int = 2000
    ppl_samples: int = 10_000
    ppl_epsilon: float = 1e-4
    ppl_crop: bool = False
    ppl_metric: str = "proxy"
    separability_pool: int = 20_000
    classifier_images: int = 20_000
    w_avg_samples: int = 100_000
    seed: int = 1234


@dataclass
class ExperimentPlan:
    name: str = "run"
    preset: Optional[str] = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetSpec = field(default_factory=lambda: DatasetSpec("synthetic:2"))
    metrics: MetricSettings = field(default_factory=MetricSettings)
    schedule: List[int] = field(default_factory=lambda: [0])
    checkpoint_every: int = 50_000
    output_dir: str = "runs"
    psi_grid: List[float] = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 0.7, 1.0])

    def validate(self):
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("metric schedule must be strictly increasing in images_seen")
        if self.dataset.resolution != self.generator.resolution:
            raise ValueError("dataset and generator resolutions differ")
        if self.dataset.mirror_augment and self.dataset.source.startswith("synthetic:"):
            factors = int(self.dataset.source.split(":", 1)[1])
            bad = FLIP_SENSITIVE & set(SYNTH_ATTRIBUTES[:factors])
            if bad:
                raise ValueError(f"mirror augmentation with flip-sensitive attributes {sorted(bad)}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    @property
    def hash(self):
        d = self.to_dict()
        d.pop("output_dir")
        return config_hash(d)

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d.get("name", "run"), preset=d.get("preset"),
            generator=GeneratorConfig.from_dict(d.get("generator", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            dataset=DatasetSpec(**d["dataset"]) if "dataset" in d else DatasetSpec("synthetic:2"),
            metrics=MetricSettings(**d.get("metrics", {})),
            schedule=list(d.get("schedule", [0])),
            checkpoint_every=d.get("checkpoint_every", 50_000),
            output_dir=d.get("output_dir", "runs"),
            psi_grid=list(d.get("psi_grid", [-1.0, -0.5, 0.0, 0.5, 0.7, 1.0])),
        )


# -- declarative config files -------------------------------------------------

_SECTIONS = {"generator": GeneratorConfig, "train": TrainConfig, "dataset": DatasetSpec,
             "metrics": MetricSettings}
_TOP_LEVEL = {"name": str, "preset": str, "schedule": list, "checkpoint_every": int,
              "output_dir": str, "psi_grid": list}


def _coerce(raw: str, kind):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in (list, List[int], List[float], List[str]):
        if not raw:
            return []
        parts = [p.strip() for p in raw.split(",")]
        out = []
        for p in parts:
            try:
                out.append(int(p))
            except ValueError:
                try:
                    out.append(float(p))
                except ValueError:
                    out.append(p)
        return out
    if kind is Optional[str]:
        return None if raw.lower() in ("", "none") else raw
    return kind(raw)


def _field_type(cls, key):
    for f in fields(cls):
        if f.name == key:
            t = f.type
            return {"int": int, "float": float, "bool": bool, "str": str}.get(t, t) if isinstance(t, str) else t
    raise KeyError(f"unknown key {key!r} for {cls.__name__}")


def build_plan(preset: Optional[str] = None, values: Optional[dict] = None) -> ExperimentPlan:
    """Plan from a preset name plus ``{"section.key" or "key": raw string}`` overrides."""
    sections = {"generator": {}, "train": {}, "dataset": {"source": "synthetic:2"}, "metrics": {}}
    top = {}
    if preset:
        if preset not in PRESETS:
            raise KeyError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        for sec, kv in PRESETS[preset].items():
            sections[sec].update(kv)
        top["preset"] = preset
    for dotted, raw in (values or {}).items():
        if "." in dotted:
            sec, key = dotted.split(".", 1)
            if sec not in _SECTIONS:
                raise KeyError(f"unknown config section {sec!r}")
            sections[sec][key] = _coerce(raw, _field_type(_SECTIONS[sec], key)) if isinstance(raw, str) else raw
        else:
            if dotted not in _TOP_LEVEL:
                raise KeyError(f"unknown top-level key {dotted!r}")
            top[dotted] = _coerce(raw, _TOP_LEVEL[dotted]) if isinstance(raw, str) else raw
    res = sections["generator"].get("resolution")
    if res is not None:
        sections["dataset"].setdefault("resolution", res)
    plan = ExperimentPlan(
        name=top.get("name", preset or "run"), preset=top.get("preset"),
        generator=GeneratorConfig(**sections["generator"]), train=TrainConfig(**sections["train"]),
        dataset=DatasetSpec(**sections["dataset"]), metrics=MetricSettings(**sections["metrics"]),
        schedule=top.get("schedule", [0]), checkpoint_every=top.get("checkpoint_every", 50_000),
        output_dir=top.get("output_dir", os.environ.get(OUTPUT_ENV, "runs")),
        psi_grid=top.get("psi_grid", [-1.0, -0.5, 0.0, 0.5, 0.7, 1.0]),
    )
    return plan.validate()


def load_plan(path, overrides: Optional[List[str]] = None) -> ExperimentPlan:
    """Read an INI-style plan; ``overrides`` are ``section.key=value`` strings."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise FileNotFoundError(f"cannot read config {path}")
    exp = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    version = int(exp.pop("schema_version", SCHEMA_VERSION))
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema_version {version}")
    preset = exp.pop("preset", None)
    values = dict(exp)
    for sec in _SECTIONS:
        if parser.has_section(sec):
            values.update({f"{sec}.{k}": v for k, v in parser[sec].items()})
    for item in overrides or []:
        key, _, raw = item.partition("=")
        if key.strip() == "preset":
            preset = raw.strip()
        else:
            values[key.strip()] = raw
    return build_plan(preset, values)


def write_plan(plan: ExperimentPlan, path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    d = plan.to_dict()

    def fmt(v):
        return ",".join(str(x) for x in v) if isinstance(v, list) else str(v)

    parser["experiment"] = {"schema_version": str(SCHEMA_VERSION), "name": plan.name,
                            "schedule": fmt(plan.schedule), "checkpoint_every": str(plan.checkpoint_every),
                            "output_dir": plan.output_dir, "psi_grid": fmt(plan.psi_grid)}
    for sec in _SECTIONS:
        parser[sec] = {k: fmt(v) for k, v in d[sec].items() if v is not None}
    with open(path, "w") as fh:
        parser.write(fh)


# -- metric evaluation ----------------------------------------------------------


def real_features(dataset, count):
    return extract_features(dataset.images[:count])


@torch.no_grad()
def generated_images(G, count, seed, batch=500):
    g = torch.Generator()
    g.manual_seed(seed)
    out = []
    for start in range(0, count, batch):
        n = min(batch, count - start)
        z = sample_z(seed + start, n, G.config.z_dim, G.config.latent_distribution)
        out.append(G.synthesis(G.styles(z.to(G.w_avg.dtype)), rng=g))
    return torch.cat(out)


def evaluate_metrics(G, plan: ExperimentPlan, real_feats, classifiers=None, images_seen=None):
    """All scheduled metrics on a snapshot ``G``; returns {name: MetricReport}."""
    ms = plan.metrics
    G = copy.deepcopy(G).eval()
    reports = {}
    if "fid_proxy" in ms.names:
        t0 = time.perf_counter()
        feats = extract_features(generated_images(G, ms.fid_samples, ms.seed))
        cfg = {"samples": ms.fid_samples, "extractor": "random_conv", "plan": plan.hash}
        reports["fid_proxy"] = MetricReport("fid_proxy", fid(real_feats, feats), cfg, ms.seed,
                                            wall_time=time.perf_counter() - t0, images_seen=images_seen)
    for space in ("z", "w"):
        name = f"ppl_{space}"
        if name not in ms.names:
            continue
        t0 = time.perf_counter()
        cfg = PathLengthConfig(space=space, epsilon=ms.ppl_epsilon, sample_count=ms.ppl_samples,
                               crop=ms.ppl_crop, metric=ms.ppl_metric, seed=ms.seed,
                               z_dim=G.config.z_dim, distribution=G.config.latent_distribution)
        value = perceptual_path_length(G.synthesis_fn(), G.mapping, cfg)
        reports[name] = MetricReport(name, value, {**cfg.to_dict(), "plan": plan.hash}, ms.seed, space=space,
                                     wall_time=time.perf_counter() - t0, images_seen=images_seen)
    if "separability" in ms.names and classifiers:
        t0 = time.perf_counter()
        cfg = SeparabilityConfig(space="w", pool_size=ms.separability_pool, keep=ms.separability_pool // 2,
                                 seed=ms.seed, z_dim=G.config.z_dim, distribution=G.config.latent_distribution)
        res = separability_score(G.synthesis_fn(), G.mapping, classifiers, cfg)
        reports["separability"] = MetricReport(
            "separability", res.score, {**cfg.to_dict(), "plan": plan.hash}, ms.seed, space="w",
            wall_time=time.perf_counter() - t0, images_seen=images_seen,
            notes={"entropies": res.entropies, "skipped": res.skipped, "convention": res.convention})
    return reports


def train_classifiers(dataset, plan: ExperimentPlan, cache_path: Path):
    if dataset.labels is None:
        return []
    if cache_path.exists():
        tensors, meta = load_checkpoint(cache_path)
    else:
        tensors, meta = {}, {"attributes": dataset.attributes}
        cfg = ClassifierConfig(train_images=plan.metrics.classifier_images, seed=plan.metrics.seed)
        for i in range(dataset.labels.shape[1]):
            net = train_attribute_classifier(dataset.images, dataset.labels[:, i], cfg)
            for k, v in net.state_dict().items():
                tensors[f"{i}.{k}"] = v
        save_checkpoint(cache_path, tensors, meta)
    nets = []
    from .discriminator import Discriminator
    for i in range(len(meta["attributes"])):
        net = Discriminator(dataset.resolution, ClassifierConfig.channel_base, mbstd_group=0)
        net.load_state_dict({k.split(".", 1)[1]: v for k, v in tensors.items() if k.split(".", 1)[0] == str(i)})
        nets.append(net.eval())
    return nets


# -- figures ----------------------------------------------------------------------


def style_ranges(num_styles: int):
    """Split style slots into coarse / middle / fine thirds by resolution level."""
    levels = num_styles // 2
    a = max(1, round(levels / 3))
    b = max(a + 1, round(2 * levels / 3)) if levels > 2 else levels
    return {"coarse": (0, 2 * a), "middle": (2 * a, 2 * b), "fine": (2 * b, num_styles)}


@torch.no_grad()
def mixing_grid(G, src_seeds, dst_seeds, slots, noise_seed=0):
    """Row 0: sources; column 0: destinations; cells copy ``slots`` from the source."""
    zs = torch.stack([sample_z(s, 1, G.config.z_dim)[0] for s in src_seeds]).to(G.w_avg.dtype)
    zd = torch.stack([sample_z(s, 1, G.config.z_dim)[0] for s in dst_seeds]).to(G.w_avg.dtype)
    render = G.synthesis_fn()

    def draw(styles):
        g = torch.Generator()
        g.manual_seed(noise_seed)
        return render(styles, g)

    ws, wd = G.mapping(zs), G.mapping(zd)
    src_imgs, dst_imgs = draw(ws), draw(wd)
    blank = torch.full_like(src_imgs[:1], -1.0)
    cells = [blank, src_imgs]
    lo, hi = slots
    for i in range(len(dst_seeds)):
        styles = broadcast_styles(wd[i:i + 1].expand(len(src_seeds), -1), G.num_styles).clone()
        styles[:, lo:hi] = broadcast_styles(ws, G.num_styles)[:, lo:hi]
        cells += [dst_imgs[i:i + 1], draw(styles)]
    return torch.cat(cells)


@torch.no_grad()
def truncation_sheet(G, seeds, psis, cutoff, noise_seed=0):
    z = torch.stack([sample_z(s, 1, G.config.z_dim)[0] for s in seeds]).to(G.w_avg.dtype)
    base = broadcast_styles(G.mapping(z), G.num_styles)
    render = G.synthesis_fn()
    rows = []
    for i in range(len(seeds)):
        for psi in psis:
            g = torch.Generator()
            g.manual_seed(noise_seed)
            s = truncate_w(base[i:i + 1], TruncationParams(psi, G.w_avg, cutoff))
            rows.append(render(s, g))
    return torch.cat(rows)


@torch.no_grad()
def truncation_pixel_variance(G, psi, count=256, seed=0, cutoff=None):
    """Mean over pixels of the per-pixel variance across ``count`` samples."""
    cutoff = G.num_styles if cutoff is None else cutoff
    z = sample_z(seed, count, G.config.z_dim, G.config.latent_distribution).to(G.w_avg.dtype)
    styles = truncate_w(broadcast_styles(G.mapping(z), G.num_styles), TruncationParams(psi, G.w_avg, cutoff))
    g = torch.Generator()
    g.manual_seed(seed)
    imgs = G.synthesis(styles, rng=g).to(torch.float64)
    return float(imgs.var(dim=0, unbiased=False).mean())


def truncation_cutoff(config: GeneratorConfig, max_resolution=32):
    return sum(1 for i in range(config.num_styles) if config.slot_resolution(i) <= max_resolution)


def emit_figures(G, plan: ExperimentPlan, run_dir: Path):
    seeds = list(range(100, 108))
    save_grid(generated_images(G, 16, plan.metrics.seed + 7), run_dir / "samples.png", 4, 4)
    for label, slots in style_ranges(G.num_styles).items():
        if slots[0] >= slots[1]:
            continue
        grid = mixing_grid(G, seeds[:4], seeds[4:8], slots)
        save_grid(grid, run_dir / f"mixing_{label}.png", 5, 5)
    cutoff = truncation_cutoff(G.config)
    sheet = truncation_sheet(G, seeds[:4], plan.psi_grid, cutoff)
    save_grid(sheet, run_dir / "truncation_sweep.png", 4, len(plan.psi_grid))


# -- runs ------------------------------------------------------------------------


def _truncate_jsonl(path: Path, key: str, limit: int):
    if not path.exists():
        return
    keep = [line for line in path.read_text().splitlines()
            if line.strip() and (json.loads(line).get(key) or 0) <= limit]
    path.write_text("".join(line + "\n" for line in keep))


def _truncate_metrics_csv(path: Path, limit: int):
    if not path.exists():
        return
    with path.open() as fh:
        rows = [r for r in csv.DictReader(fh) if int(r["images_seen"]) <= limit]
    _write_metrics_csv(path, rows)


def _write_metrics_csv(path: Path, rows):
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r.get(k, "") for k in METRIC_COLUMNS})


def _append_metrics_row(path: Path, images_seen, reports):
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        if new:
            writer.writeheader()
        row = {"images_seen": images_seen}
        row.update({k: repr(r.value) for k, r in reports.items()})
        writer.writerow({k: row.get(k, "") for k in METRIC_COLUMNS})


def _save(trainer: Trainer, plan: ExperimentPlan, evaluated, path: Path):
    tensors, meta = trainer.state_tensors()
    stored = plan.to_dict()
    stored.pop("output_dir")
    meta.update({"plan": stored, "plan_hash": plan.hash, "evaluated": list(evaluated)})
    return save_checkpoint(path, tensors, meta)


def run_experiment(plan: ExperimentPlan, stop_after_images: Optional[int] = None,
                   figures: bool = True) -> Path:
    """Train per ``plan`` (resuming from the run's checkpoint if present).

    Writes ``logs.jsonl``, ``metrics.csv``, ``reports.jsonl``/``reports.csv``,
    ``config.json``, figures and ``checkpoint.sgdk`` into ``output_dir/name``.
    ``stop_after_images`` checkpoints and returns early, as an interruption
    would.
    """
    plan.validate()
    run_dir = Path(plan.output_dir) / plan.name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps({**plan.to_dict(), "config_hash": plan.hash},
                                                    indent=2, default=str))
    dataset = load_dataset(plan.dataset)
    trainer = Trainer(plan.generator, plan.train)
    trainer.dump_dir = run_dir
    ckpt = run_dir / CHECKPOINT_NAME
    evaluated = []
    if ckpt.exists():
        tensors, meta = load_checkpoint(ckpt)
        if meta["plan_hash"] != plan.hash:
            raise ValueError("existing checkpoint was written by a different plan")
        trainer.load_state_tensors(tensors, meta)
        evaluated = list(meta["evaluated"])
        _truncate_jsonl(run_dir / "logs.jsonl", "images_seen", trainer.images_seen)
        _truncate_jsonl(run_dir / "reports.jsonl", "images_seen", trainer.images_seen)
        _truncate_metrics_csv(run_dir / "metrics.csv", trainer.images_seen)
        log.info("resumed %s at %d images", plan.name, trainer.images_seen)
    else:
        for stale in ("logs.jsonl", "reports.jsonl", "reports.csv", "metrics.csv"):
            (run_dir / stale).unlink(missing_ok=True)

    real_feats = real_features(dataset, plan.metrics.fid_samples) if "fid_proxy" in plan.metrics.names else None
    classifiers = None
    if "separability" in plan.metrics.names:
        classifiers = train_classifiers(dataset, plan, run_dir / "classifiers.sgdk")
    pending = [p for p in plan.schedule if p not in evaluated]

    def evaluate_due():
        while pending and pending[0] <= trainer.images_seen:
            point = pending.pop(0)
            reports = evaluate_metrics(trainer.G_ema, plan, real_feats, classifiers, trainer.images_seen)
            _append_metrics_row(run_dir / "metrics.csv", trainer.images_seen, reports)
            append_reports(reports.values(), run_dir / "reports.jsonl", run_dir / "reports.csv")
            evaluated.append(point)

    evaluate_due()
    bs = plan.train.batch_size
    next_ckpt = (trainer.images_seen // plan.checkpoint_every + 1) * plan.checkpoint_every
    with (run_dir / "logs.jsonl").open("a") as logf:
        while trainer.images_seen + bs <= plan.train.total_images:
            real, _ = dataset.batch(trainer.step, bs)
            logs = trainer.train_step(real)
            logf.write(json.dumps(logs) + "\n")
            evaluate_due()
            if trainer.images_seen >= next_ckpt:
                logf.flush()
                _save(trainer, plan, evaluated, ckpt)
                next_ckpt += plan.checkpoint_every
            if stop_after_images is not None and trainer.images_seen >= stop_after_images:
                logf.flush()
                _save(trainer, plan, evaluated, ckpt)
                return run_dir

    # schedule points past the budget are evaluated on the final weights
    while pending:
        pending[0] = min(pending[0], trainer.images_seen)
        evaluate_due()
    w_avg = estimate_w_center(trainer.G_ema.mapping, plan.metrics.w_avg_samples, plan.metrics.seed,
                              plan.generator.z_dim, plan.generator.latent_distribution)
    trainer.G_ema.w_avg.copy_(w_avg)
    trainer.G.w_avg.copy_(w_avg)
    _save(trainer, plan, evaluated, ckpt)
    if figures:
        emit_figures(trainer.G_ema, plan, run_dir)
    return run_dir


def load_generator(checkpoint_path, ema=True) -> Generator:
    tensors, meta = load_checkpoint(checkpoint_path)
    plan = ExperimentPlan.from_dict(meta["plan"])
    G = Generator(plan.generator, seed=plan.train.seed)
    prefix = "G_ema." if ema else "G."
    G.load_state_dict({k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)})
    return G.eval()


# -- reporting ---------------------------------------------------------------------


def read_metrics_csv(path: Path):
    if not path.exists():
        return []
    with path.open() as fh:
        return list(csv.DictReader(fh))


def emit_report(run_dirs, out_dir=None):
    """Convergence plots and a configuration summary table for one or more runs.

    Missing or empty metric logs produce "no data" cells and a warning instead
    of failing.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dirs = [Path(r) for r in ([run_dirs] if isinstance(run_dirs, (str, Path)) else run_dirs)]
    out = Path(out_dir) if out_dir else run_dirs[0]
    out.mkdir(parents=True, exist_ok=True)
    warnings, summary = [], []
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.5))
    for run in run_dirs:
        rows = read_metrics_csv(run / "metrics.csv")
        cfg_path = run / "config.json"
        cfg = json.loads(cfg_path.read_text()) if cfg_path.exists() else {}
        if not rows:
            warnings.append(f"{run}: no metrics logged")
        entry = {"run": run.name, "preset": cfg.get("preset") or "", "config_hash": cfg.get("config_hash", ""),
                 "seed": cfg.get("train", {}).get("seed", "")}
        last = rows[-1] if rows else {}
        for col in METRIC_COLUMNS:
            entry[col] = last.get(col) or "no data"
        summary.append(entry)
        for ax, col in zip(axes, ("fid_proxy", "ppl_z", "ppl_w")):
            pts = [(int(r["images_seen"]), float(r[col])) for r in rows if r.get(col)]
            if pts:
                ax.plot(*zip(*pts), marker="o", label=run.name)
    for ax, col in zip(axes, ("proxy FID", "path length (Z)", "path length (W)")):
        ax.set_xlabel("images seen")
        ax.set_title(col)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "convergence.png", dpi=100)
    plt.close(fig)

    cols = ["run", "preset", "config_hash", "seed"] + METRIC_COLUMNS
    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(summary)
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    lines += ["| " + " | ".join(str(e[c]) for c in cols) + " |" for e in summary]
    if warnings:
        lines += ["", *(f"warning: {w}" for w in warnings)]
    (out / "summary.md").write_text("\n".join(lines) + "\n")
    return {"summary": summary, "warnings": warnings, "out_dir": str(out)}
