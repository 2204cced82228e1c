"""Experiment configuration and the stage runners behind the CLI.

Every stage reads its inputs from the output directory, writes into its own
sub-directory and records a manifest with the configuration hash, the seed
and content hashes of inputs and outputs. Nothing time-dependent is stored,
so reruns with the same inputs give identical manifests.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from . import __version__
from .baselines import BaselineParams
from .records import load_dataset, save_dataset

log = logging.getLogger(__name__)

STAGES = ("generate", "preprocess", "train", "eval", "baseline", "ablate", "plot")
RAW = Path("raw") / "minimaps.jsonl"
PROCESSED = Path("processed") / "minimaps.jsonl"
CHECKPOINT = Path("train") / "model.pt"
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_minimaps: int = 500
    noise: dict = field(default_factory=dict)  # NoiseSpec overrides
    split_seed: int | None = None  # defaults to seed
    eval_fraction: float = 0.05
    profile: str = "toy"  # toy or paper model size
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    train: dict = field(default_factory=dict)  # TrainConfig overrides
    baselines: dict = field(default_factory=dict)  # BaselineParams overrides
    preprocess: dict = field(default_factory=dict)  # PreprocessConfig overrides
    methods: list = field(default_factory=lambda: ["b1", "b2", "b3", "b4", "lmtnet"])
    aggregation: str = "pooled"
    n_plots: int = 4
    out: str = "runs/default"

    def __post_init__(self):
        if not 0.0 < float(self.eval_fraction) < 1.0:
            raise ConfigError(f"eval_fraction must lie in (0, 1), got {self.eval_fraction}")
        if self.profile not in ("toy", "paper"):
            raise ConfigError(f"profile must be 'toy' or 'paper', got {self.profile!r}")
        if int(self.n_minimaps) < 2:
            raise ConfigError("n_minimaps must be >= 2")
        if isinstance(self.methods, str):
            self.methods = [m.strip() for m in self.methods.split(",") if m.strip()]

    # -- derived settings --------------------------------------------------

    def model_config(self):
        from .model.config import paper_config, toy_config

        base = toy_config() if self.profile == "toy" else paper_config()
        over = dict(self.model)
        if "embed_dim" in over or "ffn_dim" in over:
            base = base.with_embed(over.pop("embed_dim", base.embed_dim), over.pop("ffn_dim", base.ffn_dim))
        try:
            return replace(base, **over)
        except TypeError as exc:
            raise ConfigError(f"bad model override: {exc}") from exc

    def train_config(self):
        from .model.config import TrainConfig

        d = {"seed": self.seed}
        d.update(self.train)
        return TrainConfig.from_dict(d)

    def baseline_params(self) -> BaselineParams:
        return BaselineParams(**self.baselines)

    def noise_spec(self):
        from .synthgen import NoiseSpec

        return NoiseSpec(**self.noise)

    def preprocess_config(self):
        from .preprocess import PreprocessConfig

        return PreprocessConfig(**self.preprocess)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Content hash of everything except the output location."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _parse_value(text: str):
    return yaml.safe_load(text)


def load_config(path=None, overrides: dict | None = None, sets=()) -> ExperimentConfig:
    """Defaults, then the YAML/JSON file, then ``sets`` (``a.b=value``
    strings), then explicit ``overrides``; later sources win."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        loaded = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        data.update(loaded)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for k in parts[:-1]:
            node = node.setdefault(k, {})
        node[parts[-1]] = _parse_value(val)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# artifacts


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require(out: Path, rel: Path, producer: str) -> Path:
    p = out / rel
    if not p.exists():
        raise MissingArtifact(f"{p} is missing; run `lanegraph {producer}` with the same --out first")
    return p


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_manifest(out: Path, stage: str, cfg: ExperimentConfig, inputs, outputs) -> Path:
    man = {
        "stage": stage,
        "version": __version__,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "inputs": {str(Path(p).relative_to(out)): file_hash(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(out)): file_hash(p) for p in outputs},
    }
    return _write_text(out / stage / MANIFEST, json.dumps(man, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages


def run_generate(cfg: ExperimentConfig) -> dict:
    from .synthgen import gen_dataset

    out = Path(cfg.out)
    path = out / RAW
    ms = gen_dataset(int(cfg.n_minimaps), int(cfg.seed), noise=cfg.noise_spec())
    save_dataset(path, ms)
    write_manifest(out, "generate", cfg, [], [path])
    log.info("wrote %d raw minimaps to %s", len(ms), path)
    return {"minimaps": path}


def run_preprocess(cfg: ExperimentConfig) -> dict:
    from .preprocess import preprocess_dataset

    out = Path(cfg.out)
    src = _require(out, RAW, "generate")
    raw = load_dataset(src)
    done = preprocess_dataset(raw, cfg.preprocess_config())
    path = out / PROCESSED
    save_dataset(path, done)
    write_manifest(out, "preprocess", cfg, [src], [path])
    log.info("wrote %d processed minimaps to %s", len(done), path)
    return {"minimaps": path}


def _splits(cfg: ExperimentConfig):
    from .evaluation import split_dataset

    out = Path(cfg.out)
    src = _require(out, PROCESSED, "preprocess")
    seed = cfg.seed if cfg.split_seed is None else cfg.split_seed
    train, ev = split_dataset(load_dataset(src), cfg.eval_fraction, seed)
    return src, train, ev


def _history_csv(history) -> str:
    buf = io.StringIO()
    keys = list(history[0]) if history else ["epoch"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for h in history:
        w.writerow([repr(h[k]) if isinstance(h[k], float) else h[k] for k in keys])
    return buf.getvalue()


def run_train(cfg: ExperimentConfig) -> dict:
    from .model.train import save_checkpoint, train_model
    from .plotting import plot_training_curve

    out = Path(cfg.out)
    src, train, ev = _splits(cfg)
    mc, tc = cfg.model_config(), cfg.train_config()
    res = train_model(train, mc, tc, val_set=ev,
                      progress=lambda h: log.info("epoch %d loss %.4f", h["epoch"], h["train_loss"]))
    ckpt = save_checkpoint(out / CHECKPOINT, res.model, extra={"config_hash": cfg.hash()})
    hist = _write_text(out / "train" / "history.csv", _history_csv(res.history))
    curve = plot_training_curve(res.history, out / "train" / "loss_curve.svg")
    write_manifest(out, "train", cfg, [src], [ckpt, hist, curve])
    return {"checkpoint": ckpt, "history": hist}


def _load_model(cfg: ExperimentConfig, required: bool):
    from .model.train import load_checkpoint

    p = Path(cfg.out) / CHECKPOINT
    if not p.exists():
        if required:
            raise MissingArtifact(f"{p} is missing; method lmtnet needs a checkpoint, "
                                  "run `lanegraph train` with the same --out first")
        return None
    return load_checkpoint(p, expected_config=cfg.model_config())


def _report(cfg: ExperimentConfig, stage: str, methods) -> dict:
    from .evaluation import evaluate
    from .plotting import plot_metric_bars

    out = Path(cfg.out)
    src, _, ev = _splits(cfg)
    methods = [m.lower() for m in methods]
    model = _load_model(cfg, "lmtnet" in methods)
    inputs = [src] + ([out / CHECKPOINT] if model is not None and "lmtnet" in methods else [])
    rep = evaluate(ev, methods, model=model if "lmtnet" in methods else None, params=cfg.baseline_params(),
                   aggregation=cfg.aggregation)
    csv_path = _write_text(out / stage / "metrics.csv", rep.to_csv())
    md_path = _write_text(out / stage / "metrics.md", rep.to_markdown())
    fig = plot_metric_bars(rep, out / stage / "metrics.svg")
    write_manifest(out, stage, cfg, inputs, [csv_path, md_path, fig])
    return {"csv": csv_path, "markdown": md_path, "figure": fig, "report": rep}


def run_eval(cfg: ExperimentConfig) -> dict:
    return _report(cfg, "eval", cfg.methods)


def run_baseline(cfg: ExperimentConfig) -> dict:
    from .evaluation import BASELINES

    methods = [m for m in cfg.methods if m.lower() in BASELINES] or list(BASELINES)
    return _report(cfg, "baseline", methods)


def run_ablate(cfg: ExperimentConfig) -> dict:
    from .evaluation import ablation_csv, ablation_markdown, run_ablation

    out = Path(cfg.out)
    src, train, ev = _splits(cfg)
    rows = run_ablation(train, ev, cfg.train_config(), base_config=cfg.model_config(),
                        progress=lambda r: log.info("ablation %s done", r["variant"]))
    c = _write_text(out / "ablate" / "ablation.csv", ablation_csv(rows))
    m = _write_text(out / "ablate" / "ablation.md", ablation_markdown(rows))
    write_manifest(out, "ablate", cfg, [src], [c, m])
    return {"csv": c, "markdown": m}


def run_plot(cfg: ExperimentConfig) -> dict:
    """Figures for the first evaluation minimaps: model predictions when a
    checkpoint exists, otherwise B3 pairs with B4 connectivity."""
    from .evaluation import evaluable, method_outputs
    from .plotting import emit_plots

    out = Path(cfg.out)
    src, _, ev = _splits(cfg)
    model = _load_model(cfg, required=False)
    chosen = [m for m in ev if evaluable(m)][: int(cfg.n_plots)]
    if model is not None:
        outs, label = method_outputs("lmtnet", chosen, model=model), "lmtnet"
    else:
        pair_outs = method_outputs("b3", chosen, cfg.baseline_params())
        conn_outs = method_outputs("b4", chosen, cfg.baseline_params())
        outs, label = [(p, a) for (p, _), (_, a) in zip(pair_outs, conn_outs)], "b3+b4"
    paths = []
    for k, (m, (pairs, adj)) in enumerate(zip(chosen, outs)):
        paths.append(emit_plots(m, pairs, adj, out / "plot" / f"minimap_{k:03d}.svg",
                                title=f"{label}: tile {tuple(m.tile_id)} ({m.odd})"))
    inputs = [src] + ([out / CHECKPOINT] if model is not None else [])
    write_manifest(out, "plot", cfg, inputs, paths)
    return {"figures": paths}


RUNNERS = {
    "generate": run_generate,
    "preprocess": run_preprocess,
    "train": run_train,
    "eval": run_eval,
    "baseline": run_baseline,
    "ablate": run_ablate,
    "plot": run_plot,
}


def run_pipeline(command: str, cfg: ExperimentConfig) -> dict:
    if command not in RUNNERS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(STAGES)}")
    return RUNNERS[command](cfg)
