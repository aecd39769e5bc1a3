"""End-to-end runs: training, file registration, evaluation, ablation and data export.

Every routine emits line-delimited ``key=value`` records through ``emit``
(a callable taking one string; ``print`` by default).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .config import RunConfig, format_value
from .data import SynthConfig, dataset, load_split, read_cloud, read_meta, write_pair
from .estimator import PCAMRegistration
from .exceptions import ConfigError
from .metrics import RegistrationResult, recall, rmse_mae_rotation_translation

CHECKPOINT_NAME = "model.ckpt"
SPLIT_SIZES = {"train": "n_train", "val": "n_val", "test": "n_test"}


def format_record(record):
    """``key=value`` line; floats use repr so records round-trip exactly."""
    parts = []
    for key, value in record.items():
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        else:
            value = format_value(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


def parse_record(line):
    out = {}
    for token in line.split():
        key, _, value = token.partition("=")
        out[key] = value
    return out


def synth_config(config: RunConfig):
    d = config.data
    return SynthConfig(
        n_points=d.n_points,
        overlap_target=d.overlap_target,
        rotation_max=math.radians(d.rotation_max_deg),
        translation_max=d.translation_max,
        noise_sigma=d.noise_sigma,
        shape_kind=d.shape_kind,
        seed=d.seed,
    )


def split_size(config, split):
    section = config.data if split == "test" else config.train
    return getattr(section, SPLIT_SIZES[split])


def load_pairs(config: RunConfig, split):
    """Pairs for ``split``: read from ``data.directory`` when set, else synthesised."""
    if config.data.directory:
        pairs = load_split(config.data.directory, split)
        if not pairs:
            raise ConfigError(f"no {split} pairs in {config.data.directory}")
        return pairs
    return list(dataset(synth_config(config), split_size(config, split), split))


# -- train --------------------------------------------------------------------

def estimator_from_checkpoint(ckpt: Checkpoint):
    est = PCAMRegistration.from_config(ckpt.config)
    est._init_network().load_state_dict(ckpt.params)
    est.tau_ = 0.0 if ckpt.tau is None else ckpt.tau
    est.epochs_trained_ = ckpt.epoch
    return est


def checkpoint_from_estimator(est, config):
    return Checkpoint(est.network_.state_dict(), config.copy(), est.epochs_trained_, est.tau_)


def train(config: RunConfig, out_dir=None, emit=print):
    """Train on the configured data and return (and optionally write) a checkpoint."""
    train_pairs = load_pairs(config, "train")
    val_pairs = load_pairs(config, "val")
    est = PCAMRegistration.from_config(config)
    est.fit(train_pairs, X_val=val_pairs, callback=lambda r: emit(format_record(r)))
    ckpt = checkpoint_from_estimator(est, config)
    emit(format_record({"event": "trained", "epochs": ckpt.epoch, "tau": ckpt.tau}))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = Path(out_dir) / CHECKPOINT_NAME
        ckpt.save(path)
        emit(format_record({"event": "checkpoint", "path": str(path)}))
    return ckpt


# -- register -----------------------------------------------------------------

@dataclass
class FileRegistration:
    registration: object
    result: RegistrationResult = None


def register_files(ckpt, p_path, q_path, tau=None, icp=None, map_mode=None, meta_path=None):
    """Register two XYZ files. Metrics are filled in when ``meta_path`` exists.

    Raises DegenerateWeightsError / RankDeficiencyError on registration failure
    and ParseError / OSError on unreadable input.
    """
    P, Q = read_cloud(p_path), read_cloud(q_path)
    est = estimator_from_checkpoint(ckpt)
    reg = est.register(P, Q, tau=tau, icp=icp, map_mode=map_mode)
    result = None
    if meta_path is not None and Path(meta_path).exists():
        result = RegistrationResult.from_estimate(reg.transform, read_meta(meta_path), est.te_max, est.re_max)
    return FileRegistration(reg, result), P


def top_pairs(P, registration, n):
    """The ``n`` highest-confidence ``(p, m(p), w)`` rows, ties broken by index."""
    order = np.argsort(-registration.scores, kind="stable")[:n]
    return np.column_stack([P[order], registration.mapped[order], registration.scores[order]])


def write_pairs_dump(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# px py pz mx my mz w\n")
        for row in rows:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


# -- evaluate -----------------------------------------------------------------

REPORT_KEYS = ("recall", "te_all", "re_all_deg", "te", "re_deg", "rmse_r_deg", "mae_r_deg", "rmse_t", "mae_t")


def summarize(results, te_max, re_max):
    """Five recall columns (angles in degrees) plus the RMSE/MAE block."""
    rep = recall(results, te_max, re_max)
    err = rmse_mae_rotation_translation(results)
    return {
        "pairs": len(results),
        "recall": rep.recall,
        "te_all": rep.te_all,
        "re_all_deg": math.degrees(rep.re_all),
        "te": rep.te,
        "re_deg": math.degrees(rep.re),
        "rmse_r_deg": err.rmse_r,
        "mae_r_deg": err.mae_r,
        "rmse_t": err.rmse_t,
        "mae_t": err.mae_t,
    }


def per_pair_records(results):
    return [
        {"pair": i, "te": r.te, "re_deg": math.degrees(r.re), "success": r.success, "failed": r.failed}
        for i, r in enumerate(results)
    ]


def format_table(rows, columns, title=None):
    """Fixed-width human table; floats with 4 decimals."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return "nan" if math.isnan(v) else f"{v:.4f}"
        return str(v)

    body = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = [title] if title else []
    lines.append("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body)
    return "\n".join(lines)


# RMSE/MAE rotation columns are per-axis intrinsic Euler angles
ROTATION_CONVENTION = "zyx_deg"


def evaluate(ckpt, config=None, split="test", tau=None, icp=None, map_mode=None, emit=print, per_pair=False):
    """Evaluate a checkpoint on a split; returns ``(summary, results)``.

    ``config`` (default: the checkpoint's own) selects data and thresholds.
    """
    config = ckpt.config if config is None else config
    est = estimator_from_checkpoint(ckpt)
    est.te_max, est.re_max_deg = config.eval.te_max, config.eval.re_max_deg
    results = est.evaluate(load_pairs(config, split), tau=tau, icp=icp, map_mode=map_mode)
    summary = summarize(results, est.te_max, est.re_max)
    if per_pair:
        for rec in per_pair_records(results):
            emit(format_record(rec))
    emit(format_record({**summary, "rotation_convention": ROTATION_CONVENTION}))
    return summary, results


# -- ablate -------------------------------------------------------------------

@dataclass(frozen=True)
class Variant:
    combine_mode: str = "product"
    map_mode: str = "soft"
    losses: str = "ca+cc+gc"

    @property
    def name(self):
        return f"{self.combine_mode}/{self.map_mode}/{self.losses}"

    @classmethod
    def parse(cls, text):
        parts = text.split("/")
        if not 1 <= len(parts) <= 3:
            raise ConfigError(f"bad variant {text!r}; expected combine[/map[/losses]]")
        return cls(*parts)


#: Rows of the attention-combination ablation, each in soft and sparse form.
ATTENTION_VARIANTS = tuple(
    Variant(c, m) for c in ("product", "last_layer", "no_intermediate") for m in ("soft", "sparse")
)
#: Loss-term rows (soft maps only, since L^ga needs a differentiable map).
LOSS_VARIANTS = tuple(Variant("product", "soft", f) for f in ("ca+cc+gc", "ca+cc", "ga+cc+gc", "ca+ga+cc+gc"))


def variant_config(config, variant, seed):
    cfg = config.copy()
    cfg.model.combine_mode = variant.combine_mode
    cfg.model.map_mode = variant.map_mode
    cfg.loss.terms = variant.losses
    cfg.train.seed = seed
    return cfg.validate()


def ablate(config, variants=ATTENTION_VARIANTS, seeds=(0,), emit=print):
    """Train and evaluate each variant on each seed with shared data.

    Data come from ``config`` (its ``data.seed``), so only the model
    initialisation and shuffling change with ``seeds``. Returns one row per
    variant with recall averaged over seeds plus the per-seed recalls.
    """
    rows = []
    for variant in variants:
        per_seed = []
        for seed in seeds:
            cfg = variant_config(config, variant, seed)
            ckpt = train(cfg, emit=lambda line: None)
            summary, _ = evaluate(ckpt, cfg, emit=lambda line: None)
            per_seed.append(summary)
            emit(format_record({"variant": variant.name, "seed": seed, **summary}))
        row = {"variant": variant.name}
        for key in REPORT_KEYS:
            vals = np.array([s[key] for s in per_seed], dtype=float)
            row[key] = float(np.mean(vals))
        row["recall_per_seed"] = tuple(s["recall"] for s in per_seed)
        rows.append(row)
    return rows


# -- gen-data -----------------------------------------------------------------

def gen_data(config, out_dir, emit=print):
    """Write the synthetic train/val/test splits as XYZ + meta files."""
    synth = synth_config(config)
    counts = {}
    for split in ("train", "val", "test"):
        n = split_size(config, split)
        for i, pair in enumerate(dataset(synth, n, split)):
            write_pair(pair, out_dir, split, i)
        counts[split] = n
        emit(format_record({"event": "split", "split": split, "pairs": n, "dir": str(out_dir)}))
    return counts


__all__ = [
    "ATTENTION_VARIANTS", "LOSS_VARIANTS", "Variant", "ablate", "evaluate", "format_record",
    "format_table", "gen_data", "load_pairs", "parse_record", "register_files", "summarize",
    "top_pairs", "train", "write_pairs_dump",
]
