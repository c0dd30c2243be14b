"""Capacity sweeps: one GAN + auxiliary critic per (width, seed) cell, four
independent critics per cell, and CSV/JSON/SVG reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .config import SweepSpec
from .data import make_splits
from .metrics import (
    DivergenceEstimate,
    estimate_divergence,
    frechet_metric,
    gap_report,
)
from .nn import load_checkpoint, save_checkpoint
from .seeding import derive_seed
from .training import (
    GanConfig,
    GeneratorSampler,
    IndependentDiscConfig,
    train_gan,
    train_independent_discriminator,
)

log = logging.getLogger(__name__)

CRITIC_KINDS = ("match", "base")


@dataclass
class SweepResultRow:
    width: int
    seed: int
    status: str = "ok"
    orig_train1: float = math.nan
    orig_test: float = math.nan
    orig_test_se: float = math.nan
    aux_train1: float = math.nan
    aux_test: float = math.nan
    aux_test_se: float = math.nan
    indep_match_train1: float = math.nan
    indep_match_train2: float = math.nan
    indep_match_test: float = math.nan
    indep_base_train1: float = math.nan
    indep_base_train2: float = math.nan
    indep_base_test: float = math.nan
    generator_gap: float = math.nan
    generator_gap_se: float = math.nan
    underfit_flag: bool = False
    frechet_train1: float = math.nan
    frechet_test: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


COLUMNS = [f.name for f in fields(SweepResultRow)]


def cell_seed(master_seed: int, width: int, seed_index: int) -> int:
    return derive_seed(master_seed, width, seed_index)


def gan_config_for(spec: SweepSpec, width: int, seed_index: int) -> GanConfig:
    """Cells that share a seed index share data and generator initialization;
    everything else derives from the cell seed."""
    g = spec.gan
    return GanConfig(
        dataset=spec.dataset,
        sizes=spec.sizes,
        latent_dim=g.latent_dim,
        generator_hidden=g.generator_hidden,
        disc_width=width,
        disc_depth=g.disc_depth,
        total_steps=g.total_steps,
        batch_size=g.batch_size,
        adam=g.adam,
        eval_every=g.eval_every,
        n_eval_gen=g.n_eval_gen,
        master_seed=cell_seed(spec.master_seed, width, seed_index),
        auxiliary_enabled=g.auxiliary_enabled,
        reduction=g.reduction,
        data_seed=derive_seed(spec.master_seed, "data", seed_index),
        generator_seed=derive_seed(spec.master_seed, "generator", seed_index),
    )


def independent_config_for(spec: SweepSpec, width: int, seed_index: int, kind: str, split: str) -> IndependentDiscConfig:
    t = spec.independent
    return IndependentDiscConfig(
        width=width if kind == "match" else spec.baseline_width,
        depth=t.depth,
        split=split,
        steps=t.steps,
        batch_size=t.batch_size,
        base_lr=t.base_lr,
        floor_lr=t.floor_lr,
        # shared by both splits so the two critics see the same generated set
        seed=derive_seed(cell_seed(spec.master_seed, width, seed_index), "independent", kind),
        eval_every=t.eval_every,
        reduction=t.reduction,
    )


def frechet_seed(spec: SweepSpec, width: int, seed_index: int) -> int:
    return derive_seed(cell_seed(spec.master_seed, width, seed_index), "frechet")


def cell_dir(out_dir, width: int, seed_index: int) -> Path:
    return Path(out_dir) / "cells" / f"w{width}_s{seed_index}"


def run_cell(spec: SweepSpec, width: int, seed_index: int, out_dir) -> tuple[SweepResultRow, float]:
    """Train and measure one cell; checkpoints and the run log go to its
    cell directory. Returns the row and the wall time in seconds."""
    t0 = time.perf_counter()
    cdir = cell_dir(out_dir, width, seed_index)
    cdir.mkdir(parents=True, exist_ok=True)
    cfg = gan_config_for(spec, width, seed_index)
    bundle = train_gan(cfg, log_path=cdir / "run_log.ndjson")
    save_checkpoint(bundle.generator, cdir / "generator.ckpt")
    save_checkpoint(bundle.original, cdir / "original.ckpt")
    if bundle.auxiliary is not None:
        save_checkpoint(bundle.auxiliary, cdir / "auxiliary.ckpt")

    indep: dict[tuple[str, str], dict[str, DivergenceEstimate]] = {}
    for kind in CRITIC_KINDS:
        for split in ("train1", "train2"):
            icfg = independent_config_for(spec, width, seed_index, kind, split)
            res = train_independent_discriminator(
                GeneratorSampler(bundle.generator, cfg.latent_dim), bundle.split, icfg
            )
            save_checkpoint(res.disc, cdir / f"indep_{kind}_{split}.ckpt")
            indep[kind, split] = res.estimates

    row = SweepResultRow(width=width, seed=seed_index)
    o1, ot = bundle.final("original", "train1"), bundle.final("original", "test")
    row.orig_train1, row.orig_test, row.orig_test_se = o1.value, ot.value, ot.standard_error
    if bundle.auxiliary is not None:
        a1, at = bundle.final("auxiliary", "train1"), bundle.final("auxiliary", "test")
        row.aux_train1, row.aux_test, row.aux_test_se = a1.value, at.value, at.standard_error
    _fill_independent(row, indep)
    gaps = gap_report(
        indep["base", "train1"]["train1"],
        indep["base", "train2"]["train2"],
        o1,
        ot,
        at if bundle.auxiliary is not None else ot,
    )
    row.generator_gap, row.generator_gap_se = gaps.generator_gap, gaps.generator_gap_se
    row.underfit_flag = gaps.underfit_flag
    _fill_frechet(row, spec, bundle.generator, cfg.latent_dim, bundle.split, width, seed_index)
    return row, time.perf_counter() - t0


def _fill_independent(row: SweepResultRow, indep) -> None:
    for kind in CRITIC_KINDS:
        # each training split is scored by the critic trained on it; test by the train1 critic
        setattr(row, f"indep_{kind}_train1", indep[kind, "train1"]["train1"].value)
        setattr(row, f"indep_{kind}_train2", indep[kind, "train2"]["train2"].value)
        setattr(row, f"indep_{kind}_test", indep[kind, "train1"]["test"].value)


def _fill_frechet(row, spec, generator, latent_dim, split, width, seed_index) -> None:
    fake = GeneratorSampler(generator, latent_dim).sample(len(split.train1), frechet_seed(spec, width, seed_index))
    row.frechet_train1 = frechet_metric(fake, split.train1, spec.embedding)
    row.frechet_test = frechet_metric(fake, split.test, spec.embedding)


def _cell_job(args) -> tuple[dict, float, str | None]:
    spec, width, seed_index, out_dir = args
    try:
        row, wall = run_cell(spec, width, seed_index, out_dir)
        error = None
    except Exception as exc:  # a collapsed or diverged cell must not sink the sweep
        row, wall = SweepResultRow(width=width, seed=seed_index, status="failed"), 0.0
        error = f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"
    cdir = cell_dir(out_dir, width, seed_index)
    cdir.mkdir(parents=True, exist_ok=True)
    record = {"row": _json_row(row), "error": error}
    (cdir / "row.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    return row.to_dict(), wall, error


@dataclass
class SweepOutcome:
    rows: list[SweepResultRow]
    wall_times: dict[tuple[int, int], float]
    failures: dict[tuple[int, int], str]


def run_sweep(spec: SweepSpec, out_dir=None, workers: int = 1) -> SweepOutcome:
    """Run every (width, seed) cell and write results into ``out_dir``.

    Each finished cell leaves ``cells/w<width>_s<seed>/row.json`` behind, so a
    partial sweep is recoverable. Rows come back sorted by (width, seed).
    """
    out_dir = Path(out_dir if out_dir is not None else spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    jobs = [(spec, w, s, str(out_dir)) for w in spec.widths for s in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    rows, walls, failures = [], {}, {}
    for (_, w, s, _), (rd, wall, err) in zip(jobs, results):
        rows.append(SweepResultRow(**rd))
        walls[w, s] = wall
        if err is not None:
            failures[w, s] = err
            log.warning("cell width=%d seed=%d failed: %s", w, s, err.splitlines()[0])
    rows.sort(key=lambda r: (r.width, r.seed))
    return SweepOutcome(rows, walls, failures)


# -- serialization --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.9g}"
    return str(v)


def write_csv(rows, path) -> None:
    if not rows:
        raise ValueError("write_csv needs at least one row")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(getattr(r, c)) for c in COLUMNS) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _coerce(name: str, text: str):
    kind = SweepResultRow.__dataclass_fields__[name].type
    if kind == "int":
        return int(text)
    if kind == "bool":
        return text == "true"
    if kind == "str":
        return text
    return math.nan if text == "" else float(text)


def read_csv(path) -> list[SweepResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [SweepResultRow(**{k: _coerce(k, v) for k, v in rec.items()}) for rec in reader]


def _json_row(r: SweepResultRow) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.to_dict().items()}


def write_json(rows, path) -> None:
    if not rows:
        raise ValueError("write_json needs at least one row")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps([_json_row(r) for r in rows], indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_json(path) -> list[SweepResultRow]:
    out = []
    for rec in json.loads(Path(path).read_text()):
        out.append(SweepResultRow(**{k: (math.nan if v is None else v) for k, v in rec.items()}))
    return out


def write_timings(walls: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write("width,seed,wall_time_s\n")
        for (w, s), t in sorted(walls.items()):
            fh.write(f"{w},{s},{t:.3f}\n")


# -- audit ------------------------------------------------------------------------


def recompute_row(spec: SweepSpec, width: int, seed_index: int, out_dir) -> SweepResultRow:
    """Rebuild a cell's row from its stored checkpoints and the regenerated
    evaluation sets, without any training."""
    cdir = cell_dir(out_dir, width, seed_index)
    cfg = gan_config_for(spec, width, seed_index)
    split = make_splits(cfg.dataset, cfg.sizes, cfg.seed_for("data"))
    gen = load_checkpoint(cdir / "generator.ckpt")
    sampler = GeneratorSampler(gen, cfg.latent_dim)
    from .training import TrainedBundle, evaluate_critics

    critics = {"original": load_checkpoint(cdir / "original.ckpt")}
    if (cdir / "auxiliary.ckpt").exists():
        critics["auxiliary"] = load_checkpoint(cdir / "auxiliary.ckpt")
    z_eval = TrainedBundle(gen, critics["original"], None, [], cfg, split).eval_latents()
    div = evaluate_critics(gen, critics, split, z_eval)
    row = SweepResultRow(width=width, seed=seed_index)
    row.orig_train1 = div["original/train1"].value
    row.orig_test, row.orig_test_se = div["original/test"].value, div["original/test"].standard_error
    aux_test = div.get("auxiliary/test", div["original/test"])
    if "auxiliary" in critics:
        row.aux_train1 = div["auxiliary/train1"].value
        row.aux_test, row.aux_test_se = aux_test.value, aux_test.standard_error
    indep = {}
    for kind in CRITIC_KINDS:
        for s in ("train1", "train2"):
            icfg = independent_config_for(spec, width, seed_index, kind, s)
            disc = load_checkpoint(cdir / f"indep_{kind}_{s}.ckpt")
            fixed = sampler.sample(len(split.get(s)), derive_seed(icfg.seed, "indep_fixed"))
            heldout = sampler.sample(len(split.test), derive_seed(icfg.seed, "indep_heldout"))
            indep[kind, s] = {
                name: estimate_divergence(disc, split.get(name), fixed if name == s else heldout, "independent", name)
                for name in ("train1", "train2", "test")
            }
    _fill_independent(row, indep)
    gaps = gap_report(
        indep["base", "train1"]["train1"], indep["base", "train2"]["train2"],
        div["original/train1"], div["original/test"], aux_test,
    )
    row.generator_gap, row.generator_gap_se = gaps.generator_gap, gaps.generator_gap_se
    row.underfit_flag = gaps.underfit_flag
    _fill_frechet(row, spec, gen, cfg.latent_dim, split, width, seed_index)
    return row


def rows_match(a: SweepResultRow, b: SweepResultRow) -> bool:
    """Equal after the CSV's 9-significant-digit formatting."""
    return all(_fmt(getattr(a, c)) == _fmt(getattr(b, c)) for c in COLUMNS)


def median_by_width(rows, column) -> dict[int, float]:
    """Median over seeds of ``column`` (a field name or a function of a row)."""
    get = column if callable(column) else (lambda r: getattr(r, column))
    out: dict[int, list[float]] = {}
    for r in rows:
        v = get(r)
        if r.status == "ok" and not math.isnan(v):
            out.setdefault(r.width, []).append(v)
    return {w: float(np.median(v)) for w, v in sorted(out.items())}
