"""End-to-end experiment: data -> preprocessing -> federated training -> output files."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import cost as _cost
from . import dataio, fed, metrics, nn
from . import rng as _rng
from .partition import partition_report

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
CHECKPOINT_NAME = "model.fmlp"
RESULT_FILES = ("rounds.csv", "roc.csv", "preds.csv", "partition.csv", "summary.json", CHECKPOINT_NAME)

PARTITION_NOTES = {
    "iid": "uniform random split into equal-size shards",
    "noniid_shards": "label-sorted rows cut into shards_per_client shards per client (label skew)",
    "noniid_proportional": "stratified equal split; every client keeps the global label mix",
}


class OutputExistsError(FileExistsError):
    pass


@dataclass
class Settings:
    """Everything that determines a run's results, plus where to put them."""

    config: fed.FedConfig = field(default_factory=fed.FedConfig)
    data_path: Optional[str] = None
    synthetic: Optional[dict] = None
    test_fraction: float = 0.2
    normalize_before_split: bool = False
    out: str = "runs"
    force: bool = False
    threads: int = 1
    run_dir: Optional[str] = None

    def data_provenance(self) -> dict:
        if self.data_path is not None:
            return {"kind": "csv", "path": str(self.data_path), "sha256": sha256_file(self.data_path)}
        return {"kind": "synthetic", **self.synthetic}

    def resolved(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "data": self.data_provenance(),
            "preprocessing": {
                "test_fraction": self.test_fraction,
                "normalize_before_split": self.normalize_before_split,
                "imputation": "per-feature observed mean of the normalization rows; std refit after imputation",
                "std_convention": "population",
            },
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def output_dir(self) -> Path:
        if self.run_dir is not None:
            return Path(self.run_dir)
        return Path(self.out) / f"seed{self.config.seed}-{self.config_hash()}"


@dataclass
class Prepared:
    train: dataio.Dataset
    test: dataio.Dataset
    train_rows: np.ndarray
    test_rows: np.ndarray


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_data(settings: Settings) -> dataio.Dataset:
    if settings.data_path is not None:
        return dataio.load_csv(settings.data_path)
    s = settings.synthetic
    return dataio.generate_synthetic(s["rows"], s["features"], s["theft_rate"], s["missing_rate"], s["seed"])


def prepare(data: dataio.Dataset, test_fraction: float, seed: int, normalize_before_split: bool = False) -> Prepared:
    """Mean-impute and z-score, fitting statistics on the training rows.

    Scaling statistics are refit after imputation so the training columns
    come out with unit std; the mean is unchanged by mean imputation, so
    imputed cells still map to 0. With ``normalize_before_split`` the
    statistics come from the whole dataset and are applied before splitting.
    """
    train_rows, test_rows = dataio.split_indices(data.n, test_fraction, _rng.derive_seed(seed, _rng.SPLIT))
    if normalize_before_split:
        data = standardize(data, data)
        return Prepared(data.take(train_rows), data.take(test_rows), train_rows, test_rows)
    train, test = data.take(train_rows), data.take(test_rows)
    return Prepared(standardize(train, train), standardize(test, train), train_rows, test_rows)


def standardize(data: dataio.Dataset, reference: dataio.Dataset) -> dataio.Dataset:
    """Impute and z-score ``data`` with statistics fitted on ``reference``."""
    observed = dataio.fit_norm_stats(reference)
    stats = dataio.fit_norm_stats(dataio.impute_missing(reference, observed))
    return dataio.apply_zscore(dataio.impute_missing(data, observed), stats)


def _f(v: float) -> str:
    return dataio.format_float(v)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def rounds_header(k: int) -> list[str]:
    return [
        "round",
        "lr",
        *(f"loss_client_{i}" for i in range(k)),
        "test_loss",
        "accuracy",
        "precision",
        "recall",
        "f1_weighted",
        "auc",
        "cum_comm_bytes",
    ]


def write_rounds(path: Path, logs: list[fed.RoundLog], k: int) -> None:
    rows = []
    for e in logs:
        m = e.metrics
        rows.append(
            [
                e.round,
                _f(e.lr),
                *(_f(x) for x in e.client_losses),
                _f(e.test_loss),
                _f(m.accuracy),
                _f(m.precision),
                _f(m.recall),
                _f(m.f1_weighted),
                _f(m.auc),
                e.cum_comm_bytes,
            ]
        )
    _write_csv(path, rounds_header(k), rows)


def write_roc(path: Path, m: metrics.Metrics) -> None:
    rows = [[_f(fpr), _f(tpr), _f(t)] for (fpr, tpr), t in zip(m.roc_points, m.roc_thresholds)]
    _write_csv(path, ["fpr", "tpr", "threshold"], rows)


def write_preds(path: Path, row_ids, labels, scores, preds) -> None:
    rows = [[int(r), int(y), _f(s), int(p)] for r, y, s, p in zip(row_ids, labels, scores, preds)]
    _write_csv(path, ["row_id", "true_label", "score_1", "pred_label"], rows)


def read_csv_columns(path) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols


def metrics_dict(m: metrics.Metrics, test_loss: float) -> dict:
    out = {
        "test_loss": test_loss,
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f1_weighted": m.f1_weighted,
        "auc": m.auc,
    }
    out["percent"] = {k: 100.0 * v for k, v in out.items() if k != "test_loss"}
    out["degenerate"] = {"precision": m.precision_degenerate, "recall": m.recall_degenerate}
    return out


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


@dataclass
class RunResult:
    run_dir: Path
    final: nn.MlpParams
    logs: list[fed.RoundLog]
    summary: dict


def run_experiment(settings: Settings) -> RunResult:
    cfg = settings.config
    run_dir = settings.output_dir()
    if run_dir.exists() and any(run_dir.iterdir()):
        if not settings.force:
            raise OutputExistsError(f"output directory {run_dir} exists; pass --force to overwrite")
        shutil.rmtree(run_dir)
    resolved = settings.resolved()

    data = load_data(settings)
    prep = prepare(data, settings.test_fraction, cfg.seed, settings.normalize_before_split)
    shards = fed.client_shards(cfg, prep.train.labels)
    report = partition_report(shards, prep.train.labels)
    log.info("partition (%s):\n%s", cfg.partition_mode, report.to_text())

    final, logs = fed.run_federated(cfg, prep.train, prep.test, threads=settings.threads, shards=shards)
    m, test_loss = metrics.evaluate(final, prep.test)
    probs = metrics.predict_proba(final, prep.test.features)

    p_count = nn.param_count(prep.train.d)
    sizes = [len(s) for s in shards]
    costs = {
        f"b{b}": _cost.cost_report(cfg.rounds, cfg.k_clients, p_count, sizes, prep.train.d, b).to_dict()
        for b in (4, fed.SIM_BYTES_PER_PARAM)
    }
    summary = {
        **resolved,
        "partition": {
            "mode": cfg.partition_mode,
            "description": PARTITION_NOTES[cfg.partition_mode],
            "clients": [r.__dict__ for r in report.rows],
        },
        "dataset_shape": {"rows": data.n, "features": data.d, "train_rows": prep.train.n, "test_rows": prep.test.n},
        "params": p_count,
        "rounds_completed": len(logs),
        "final": metrics_dict(m, test_loss),
        "cost": costs,
    }
    finite = all(
        math.isfinite(v) for v in (test_loss, m.accuracy, m.precision, m.recall, m.f1_weighted, m.auc)
    ) and final.is_finite()
    if not finite:
        raise fed.DivergenceError(len(logs), "final metrics are non-finite")

    run_dir.mkdir(parents=True, exist_ok=True)
    write_rounds(run_dir / "rounds.csv", logs, cfg.k_clients)
    write_roc(run_dir / "roc.csv", m)
    write_preds(run_dir / "preds.csv", prep.test_rows, prep.test.labels, probs[:, 1], metrics.predict_labels(probs))
    (run_dir / "partition.csv").write_text(report.to_csv(), encoding="utf-8")
    nn.save_checkpoint(final, run_dir / CHECKPOINT_NAME)
    _dump_json(run_dir / "summary.json", summary)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        **resolved,
        "threads": settings.threads,
        "output_dir": str(run_dir),
        "checksums": {name: sha256_file(run_dir / name) for name in RESULT_FILES},
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    _dump_json(run_dir / "manifest.json", manifest)
    return RunResult(run_dir, final, logs, summary)


def settings_from_manifest(manifest: dict, run_dir=None, force: bool = False, threads: Optional[int] = None) -> Settings:
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('manifest_version')!r}")
    data = dict(manifest["data"])
    kind = data.pop("kind")
    pre = manifest["preprocessing"]
    s = Settings(
        config=fed.FedConfig(**manifest["config"]),
        test_fraction=pre["test_fraction"],
        normalize_before_split=pre["normalize_before_split"],
        force=force,
        threads=manifest.get("threads", 1) if threads is None else threads,
        run_dir=str(run_dir) if run_dir is not None else manifest["output_dir"],
    )
    if kind == "csv":
        s.data_path = data["path"]
        actual = sha256_file(s.data_path)
        if actual != data["sha256"]:
            raise dataio.DataError(f"{s.data_path}: checksum {actual} does not match manifest {data['sha256']}")
    else:
        s.synthetic = data
    return s


def verify_checksums(run_dir, expected: dict) -> list[str]:
    """Names of result files whose sha256 differs from ``expected``."""
    run_dir = Path(run_dir)
    return [name for name, digest in sorted(expected.items()) if sha256_file(run_dir / name) != digest]
