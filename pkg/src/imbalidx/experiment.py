"""Ratio sweep: simulate once per seed, then build/train/evaluate per cell.

One simulated traffic pool per seed feeds every ratio, so the sweep's cost
is dominated by the largest ratio demand. Each (ratio, seed) cell builds
an imbalanced dataset, splits it 80/20 stratified, z-scores with training
stats, trains the classifier, and scores the held-out test split. For the
configured subset of ratios the training set is additionally
SMOTE-augmented and the cell is run again, so reports carry matched
with/without rows.

Every stage draws from its own seed derived from (seed, stage, cell), so
cells are independent and the whole sweep is reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dataset import (
    LabeledDataset,
    build_imbalanced,
    normalize_apply,
    normalize_fit,
    required_normals,
)
from .dataset import split_train_test
from .flows import ATTACK, features_from_packets, to_arrays, write_features_csv
from .metrics import MetricsReport, confusion
from .mlp import TrainConfig, init_model, predict, train
from .simulate import SimConfig, simulate
from .smote import augment_training_set

# Stage tags for per-stage seed derivation.
_SIM, _BUILD, _SPLIT, _SMOTE, _INIT, _TRAIN = range(6)


@dataclass(frozen=True)
class ExperimentConfig:
    """The sweep grid plus every knob the cells need."""

    ratios: Tuple[float, ...] = (0.10, 0.01, 0.007, 0.003, 0.001)
    smote_ratios: Tuple[float, ...] = (0.007, 0.003, 0.001)
    seeds: Tuple[int, ...] = (0, 1, 2)
    n_attack: int = 1000
    train_frac: float = 0.8
    layer_sizes: Tuple[int, ...] = (23, 16, 8, 1)
    train: TrainConfig = TrainConfig()
    smote_k: int = 5
    smote_target_ratio: float = 0.10
    pool_margin: int = 1000
    sim: SimConfig = SimConfig()
    workdir: Optional[str] = None

    def __post_init__(self):
        if not self.ratios:
            raise ValueError("ratios must be non-empty")
        for r in self.ratios:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"ratio {r} outside (0, 1]")
        missing = [r for r in self.smote_ratios if r not in self.ratios]
        if missing:
            raise ValueError(f"smote_ratios {missing} are not in ratios")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")
        if self.n_attack < 2:
            raise ValueError(f"n_attack must be >= 2, got {self.n_attack}")
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError(f"train_frac must be in (0, 1), got {self.train_frac}")
        if not 0.0 < self.smote_target_ratio < 1.0:
            raise ValueError("smote_target_ratio must be in (0, 1)")
        if self.smote_k < 1:
            raise ValueError("smote_k must be >= 1")
        if self.pool_margin < 0:
            raise ValueError("pool_margin must be >= 0")


def experiment_config_from_json(text: str) -> ExperimentConfig:
    """Build an ExperimentConfig from JSON; nested train/sim objects map to
    their config types, unknown keys are errors."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ValueError("config JSON must be an object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(obj)
    for key, typ in (("train", TrainConfig), ("sim", SimConfig)):
        if key in kwargs:
            sub = kwargs[key]
            if not isinstance(sub, dict):
                raise ValueError(f"{key} must be a JSON object")
            sub_known = {f.name for f in fields(typ)}
            sub_unknown = sorted(set(sub) - sub_known)
            if sub_unknown:
                raise ValueError(
                    f"unknown {key} keys: {', '.join(sub_unknown)}"
                )
            kwargs[key] = typ(**sub)
    for key in ("ratios", "smote_ratios", "seeds", "layer_sizes"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class CellResult:
    ratio: float
    seed: int
    smote: bool
    report: MetricsReport


@dataclass(frozen=True)
class SummaryRow:
    """Median over seeds, one row per (ratio, smote) pair."""

    ratio: float
    smote: bool
    report: MetricsReport


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    cells: Tuple[CellResult, ...]
    summary: Tuple[SummaryRow, ...]


def _stage_rng(*path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(path)))


def _stage_seed(*path: int) -> int:
    return int(np.random.SeedSequence(list(path)).generate_state(1, np.uint64)[0])


def _run_seed(cfg: ExperimentConfig, seed: int) -> List[CellResult]:
    """Simulate one pool, then run every (ratio, smote) cell for this seed."""
    pool_normals = required_normals(cfg.n_attack, min(cfg.ratios)) + cfg.pool_margin
    sim_cfg = replace(
        cfg.sim,
        n_normal_flows=pool_normals,
        n_attack_flows=cfg.n_attack,
        seed=None,
    )
    packets, rules = simulate(sim_cfg, _stage_rng(seed, _SIM))
    feats = features_from_packets(packets, rules)
    del packets
    if cfg.workdir is not None:
        out = Path(cfg.workdir)
        out.mkdir(parents=True, exist_ok=True)
        write_features_csv(feats, out / f"features_seed{seed}.csv")
    x, y = to_arrays(feats)
    del feats
    attack_rows = x[y == ATTACK]
    normal_rows = x[y != ATTACK]
    del x, y

    cells: List[CellResult] = []
    for r_idx, ratio in enumerate(cfg.ratios):
        data = build_imbalanced(
            attack_rows, normal_rows, cfg.n_attack, ratio,
            _stage_rng(seed, _BUILD, r_idx),
        )
        train_set, test_set = split_train_test(
            data, cfg.train_frac, _stage_rng(seed, _SPLIT, r_idx)
        )
        del data
        stats = normalize_fit(train_set)
        xtr = normalize_apply(train_set.x, stats)
        ytr = train_set.y
        xte = normalize_apply(test_set.x, stats)
        yte = test_set.y
        del train_set, test_set

        variants = (False, True) if ratio in cfg.smote_ratios else (False,)
        for use_smote in variants:
            if use_smote:
                xv, yv, _ = augment_training_set(
                    xtr, ytr,
                    target_ratio=cfg.smote_target_ratio,
                    k=cfg.smote_k,
                    seed=_stage_rng(seed, _SMOTE, r_idx),
                )
            else:
                xv, yv = xtr, ytr
            model = init_model(
                cfg.layer_sizes, _stage_rng(seed, _INIT, r_idx, int(use_smote))
            )
            cell_train = replace(
                cfg.train, seed=_stage_seed(seed, _TRAIN, r_idx, int(use_smote))
            )
            train(model, LabeledDataset(xv, yv), cell_train)
            preds = predict(model, xte, cfg.train.threshold)
            report = MetricsReport.from_confusion(confusion(preds, yte))
            cells.append(CellResult(ratio, seed, use_smote, report))
    return cells


def _sorted_cells(cfg: ExperimentConfig, cells: List[CellResult]) -> List[CellResult]:
    seed_pos = {s: i for i, s in enumerate(cfg.seeds)}
    return sorted(cells, key=lambda c: (-c.ratio, seed_pos[c.seed], c.smote))


def summarize(cfg: ExperimentConfig, cells: List[CellResult]) -> List[SummaryRow]:
    """Median over seeds for each (ratio, smote) pair, in report order."""
    rows: List[SummaryRow] = []
    for ratio in cfg.ratios:
        for use_smote in (False, True):
            group = [c.report for c in cells
                     if c.ratio == ratio and c.smote == use_smote]
            if not group:
                continue
            med = MetricsReport(
                accuracy=float(np.median([g.accuracy for g in group])),
                far=float(np.median([g.far for g in group])),
                ur=float(np.median([g.ur for g in group])),
                mcc=float(np.median([g.mcc for g in group])),
                sensitivity=float(np.median([g.sensitivity for g in group])),
            )
            rows.append(SummaryRow(ratio, use_smote, med))
    rows.sort(key=lambda r: (-r.ratio, r.smote))
    return rows


def run_experiment(
    cfg: ExperimentConfig = ExperimentConfig(), threads: int = 1
) -> ExperimentResult:
    """Run the sweep. threads > 1 runs seeds concurrently; the result is
    sorted deterministically either way (ratio desc, seed asc, smote asc)."""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    if threads == 1 or len(cfg.seeds) == 1:
        cells: List[CellResult] = []
        for seed in cfg.seeds:
            cells.extend(_run_seed(cfg, seed))
    else:
        with ThreadPoolExecutor(max_workers=min(threads, len(cfg.seeds))) as pool:
            chunks = pool.map(lambda s: _run_seed(cfg, s), cfg.seeds)
            cells = [c for chunk in chunks for c in chunk]
    cells = _sorted_cells(cfg, cells)
    return ExperimentResult(cfg, tuple(cells), tuple(summarize(cfg, cells)))


DETAIL_CSV_HEADER = "ratio,seed,smote,accuracy,far,ur,mcc,sensitivity"
SUMMARY_CSV_HEADER = "ratio,smote,accuracy,far,ur,mcc,sensitivity"


def _metric_fields(r: MetricsReport) -> str:
    return (
        f"{r.accuracy:.6f},{r.far:.6f},{r.ur:.6f},{r.mcc:.6f},{r.sensitivity:.6f}"
    )


def write_detail_csv(cells, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(DETAIL_CSV_HEADER + "\n")
        for c in cells:
            f.write(
                f"{c.ratio:g},{c.seed},{int(c.smote)},{_metric_fields(c.report)}\n"
            )


def write_summary_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(SUMMARY_CSV_HEADER + "\n")
        for r in rows:
            f.write(f"{r.ratio:g},{int(r.smote)},{_metric_fields(r.report)}\n")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_checksum(cfg: ExperimentConfig) -> str:
    text = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def write_report(result: ExperimentResult, report_path) -> Dict[str, str]:
    """Detail CSV at report_path, plus <stem>.summary.csv and
    <stem>.manifest.json next to it. Returns {filename: sha256}. The
    manifest carries no timestamps, so identical runs produce identical
    bytes throughout."""
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    summary_path = report_path.with_name(report_path.stem + ".summary.csv")
    manifest_path = report_path.with_name(report_path.stem + ".manifest.json")
    write_detail_csv(result.cells, report_path)
    write_summary_csv(result.summary, summary_path)
    hashes = {
        report_path.name: _sha256_file(report_path),
        summary_path.name: _sha256_file(summary_path),
    }
    manifest = {
        "config": asdict(result.config),
        "config_sha256": config_checksum(result.config),
        "outputs": hashes,
        "detail_rows": len(result.cells),
    }
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    return hashes


def threads_from_env(default: int = 1) -> int:
    """Worker count from IMBALIDX_THREADS, else the given default."""
    raw = os.environ.get("IMBALIDX_THREADS", "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"IMBALIDX_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ValueError(f"IMBALIDX_THREADS must be >= 1, got {n}")
    return n
