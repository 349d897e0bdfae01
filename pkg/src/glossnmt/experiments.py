"""Ablation and hyper-parameter sweeps.

Runs fan out over worker processes (capped by ``TINSLT_THREADS``); results
are merged back in configuration order, so the tables do not depend on the
worker count.
"""

from __future__ import annotations

import csv
import io
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import ParallelCorpus
from .errors import ConfigError
from .instruction import InstructionConfig
from .metrics import EvalResult
from .teacher import TeacherModel
from .training import TrainConfig, evaluate_model, train

ABLATION_ROWS = ("baseline", "dataaug", "encoder", "decoder", "full")
SWEEP_PARAMS = ("beam_size", "n_layers", "lr", "dropout")
METRIC_COLUMNS = EvalResult.COLUMNS


def ablation_config(name: str, base: TrainConfig) -> TrainConfig:
    """One row of the ablation: the plain backbone plus the named component(s)."""
    instr = base.instruction or InstructionConfig()
    if name == "baseline":
        return replace(base, instruction=None, augmentation=False)
    if name == "dataaug":
        return replace(base, instruction=None, augmentation=True)
    if name == "encoder":
        return replace(base, instruction=replace(instr, fuse_encoder=True, fuse_decoder=False),
                       augmentation=False)
    if name == "decoder":
        return replace(base, instruction=replace(instr, fuse_encoder=False, fuse_decoder=True),
                       augmentation=False)
    if name == "full":
        return replace(base, instruction=replace(instr, fuse_encoder=True, fuse_decoder=True),
                       augmentation=True)
    raise ConfigError(f"unknown ablation row {name!r}; choose from {ABLATION_ROWS}")


def worker_count(n_jobs: int) -> int:
    raw = os.environ.get("TINSLT_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"TINSLT_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError("TINSLT_THREADS must be >= 1")
    return max(1, min(cap, n_jobs))


def _run(job) -> dict:
    train_c, dev_c, teacher, config = job
    model, tlog = train(train_c, dev_c, teacher, config)
    result = evaluate_model(model, dev_c, teacher, config.beam_size)
    return {**result.to_dict(), "best_epoch": tlog.best_epoch, "epochs": len(tlog.records)}


def _map(jobs: list, workers: int | None = None) -> list[dict]:
    workers = worker_count(len(jobs)) if workers is None else max(1, min(workers, len(jobs)))
    if workers == 1:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))


def _csv(header: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


ABLATION_HEADER = ("config", "seed", *METRIC_COLUMNS, "best_epoch", "epochs")
SUMMARY_HEADER = ("config", "n_seeds", *METRIC_COLUMNS)


@dataclass
class AblationTable:
    rows: list[dict]

    def summary(self) -> list[dict]:
        """Per-configuration medians over seeds."""
        out = []
        for name in dict.fromkeys(r["config"] for r in self.rows):
            sel = [r for r in self.rows if r["config"] == name]
            med = {c: float(statistics.median(r[c] for r in sel)) for c in METRIC_COLUMNS}
            out.append({"config": name, "n_seeds": len(sel), **med})
        return out

    def median(self, name: str, column: str = "bleu4") -> float:
        return next(r[column] for r in self.summary() if r["config"] == name)

    def to_csv(self) -> str:
        return _csv(ABLATION_HEADER, self.rows)

    def summary_csv(self) -> str:
        return _csv(SUMMARY_HEADER, self.summary())


def ablate(train_corpus: ParallelCorpus, dev_corpus: ParallelCorpus, teacher: TeacherModel,
           base: TrainConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4),
           rows: Sequence[str] = ABLATION_ROWS, workers: int | None = None) -> AblationTable:
    """Train every (row, seed) pair and score it on the dev set with ``base.beam_size``."""
    if not seeds:
        raise ConfigError("at least one seed is required")
    labels, jobs = [], []
    for name in rows:
        cfg = ablation_config(name, base)
        for seed in seeds:
            labels.append((name, seed))
            jobs.append((train_corpus, dev_corpus, teacher, replace(cfg, seed=seed)))
    results = _map(jobs, workers)
    return AblationTable([{"config": n, "seed": s, **r} for (n, s), r in zip(labels, results)])


SWEEP_HEADER = ("param", "value", "dev_bleu4")


def _coerce(param: str, value):
    return int(value) if param in ("beam_size", "n_layers") else float(value)


def sweep(param: str, values: Sequence, train_corpus: ParallelCorpus, dev_corpus: ParallelCorpus,
          teacher: TeacherModel | None, base: TrainConfig, model=None,
          workers: int | None = None) -> list[dict]:
    """One dev BLEU-4 per value, in input order.

    A ``beam_size`` sweep decodes with a single trained model (``model``, or
    one trained from ``base``) and retrains nothing.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    values = [_coerce(param, v) for v in values]
    if param == "beam_size":
        if model is None:
            model, _ = train(train_corpus, dev_corpus, teacher, base)
        scores = [evaluate_model(model, dev_corpus, teacher, v).bleu4 for v in values]
    else:
        jobs = [(train_corpus, dev_corpus, teacher, replace(base, **{param: v})) for v in values]
        scores = [r["bleu4"] for r in _map(jobs, workers)]
    return [{"param": param, "value": v, "dev_bleu4": s} for v, s in zip(values, scores)]


def sweep_csv(rows: Sequence[dict]) -> str:
    return _csv(SWEEP_HEADER, rows)
