"""Batch experiments: data collection, model fitting, relabeling, evaluation.

Every command is a plain function of an ``ExperimentConfig`` plus paths so
the CLI stays a thin argument parser.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import hmm
from .baseline import fit_regressor, load_regressors, save_regressors, spearman
from .config import ExperimentConfig
from .errors import EmptyTrainingSet, InputError, IoError
from .geometry import load_obj
from .loop import ModelBasedEstimator, PixelCountEstimator, run_pour
from .observation import ExpectedLabelCache, Scene
from .pourlog import GT_COLUMN, PourLog, load_dataset_log, write_csv, write_observations
from .simulator import NoiseSpec, PourSimState, SourceModel, collection_protocol, evaluation_protocol

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
EVAL_STREAM_OFFSET = 1_000_000  # keeps evaluation noise streams apart from collection ones
ESTIMATORS = ("model-based", "pixel-count")
RESULT_COLUMNS = ("target_ml", "final_ml", "abs_err_ml", "container", "estimator")


class World:
    """Meshes, scenes and label caches built once from a config and shared
    read-only by every pour."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        s = cfg.source
        self.source = SourceModel(
            load_obj(cfg.resolve_mesh(cfg.meshes.source)),
            pivot=tuple(s.pivot_m),
            flow_coefficient=s.flow_coefficient_per_s,
            transport_delay=s.transport_delay_s,
            spill_fraction=s.spill_fraction,
        )
        self.source.capacity_ml(0.0)  # build the capacity table before any threads start
        camera = cfg.camera_model()
        self.spec = cfg.histogram_spec()
        self.scenes = {}
        for name, ref in cfg.meshes.targets.items():
            mesh = load_obj(cfg.resolve_mesh(ref))
            self.scenes[name] = Scene(camera, mesh)
        self.caches = {name: ExpectedLabelCache(sc, self.spec) for name, sc in self.scenes.items()}

    def cache(self, container: str) -> ExpectedLabelCache:
        try:
            return self.caches[container]
        except KeyError:
            raise InputError(f"container {container!r} is not in the config") from None

    @cached_property
    def prior(self) -> hmm.TransitionModel:
        t = self.cfg.transition
        return hmm.drift_transition(self.spec, t.prior_stay, t.prior_max_step)

    def estimator(self, container, kind="model-based", trans=None, regressor=None):
        trans = trans or self.prior
        if kind == "model-based":
            return ModelBasedEstimator(self.cache(container), self.cfg.observation_table(), trans)
        if kind == "pixel-count":
            if regressor is None:
                raise InputError("the pixel-count estimator needs a fitted regressor")
            return PixelCountEstimator(regressor, trans)
        raise InputError(f"unknown estimator {kind!r}; choose from {ESTIMATORS}")

    def pour(self, spec, estimator, noise_table, keep_observations=False) -> PourLog:
        cfg = self.cfg
        sim = PourSimState(spec.source_ml, seed=cfg.seed, stream=spec.stream)
        return run_pour(
            sim,
            self.source,
            self.scenes[spec.container],
            NoiseSpec(noise_table, cfg.seed),
            estimator,
            cfg.controller(),
            spec.target_ml,
            duration=cfg.protocol.duration_s,
            dt=cfg.dt,
            keep_observations=keep_observations,
        )


_WORKER_WORLD = None


def _init_worker(cfg):
    global _WORKER_WORLD
    _WORKER_WORLD = World(cfg)


def _call(task):
    fn, args = task
    return fn(_WORKER_WORLD, *args)


def _parallel(world, fn, arg_list, jobs):
    """Map ``fn(world, *args)`` over ``arg_list``, in order.

    With ``jobs > 1`` the work goes to processes that each rebuild the world
    from the config; results come back in submission order either way.
    """
    arg_list = list(arg_list)
    if jobs <= 1 or len(arg_list) <= 1:
        return [fn(world, *a) for a in arg_list]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_worker, initargs=(world.cfg,)) as pool:
        return list(pool.map(_call, [(fn, a) for a in arg_list]))


def _pour_task(world, spec, kind, trans, regressors, noise, keep):
    reg = regressors.get(spec.container) if regressors else None
    est = world.estimator(spec.container, kind, trans, reg)
    return world.pour(spec, est, noise, keep_observations=keep)


def _relabel_task(world, container, plog, trans):
    return relabel_log(plog, world.cache(container), world.cfg.observation_table(), trans)


def _write_json(path, data):
    try:
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(str(exc), path) from exc


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(str(exc), path) from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


# -- collect -----------------------------------------------------------------


def split_ids(ids, train_fraction, seed):
    """Random train/eval split; the train share is rounded half up."""
    ids = list(ids)
    order = np.random.default_rng([seed, 3]).permutation(len(ids))
    n_train = int(math.floor(train_fraction * len(ids) + 0.5))
    train = sorted(ids[i] for i in order[:n_train])
    held = sorted(ids[i] for i in order[n_train:])
    return train, held


def cmd_collect(cfg: ExperimentConfig, out_dir, count=None, jobs=1) -> Path:
    """Run the scripted collection pours and write logs plus a manifest."""
    out_dir = Path(out_dir)
    pours_dir = out_dir / "pours"
    try:
        pours_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc), pours_dir) from exc
    p = cfg.protocol
    count = p.collection_count if count is None else count
    world = World(cfg)
    containers = list(world.scenes)
    specs = collection_protocol(count, containers, p.collection_sources_ml, p.collection_target_ml, cfg.seed)
    noise = cfg.noise_table()
    logs = _parallel(world, _pour_task, [(s, "model-based", None, None, noise, True) for s in specs], jobs)
    ids = [f"pour_{s.stream:04d}" for s in specs]
    train, held = split_ids(ids, p.train_fraction, cfg.seed)
    train_set = set(train)
    entries = []
    for pid, spec, plog in zip(ids, specs, logs):
        write_csv(plog, pours_dir / f"{pid}.csv")
        write_observations(plog.observations, pours_dir / f"{pid}_obs.npz")
        entries.append(
            {
                "id": pid,
                "container": spec.container,
                "source_ml": spec.source_ml,
                "target_ml": spec.target_ml,
                "stream": spec.stream,
                "csv": f"pours/{pid}.csv",
                "observations": f"pours/{pid}_obs.npz",
                "split": "train" if pid in train_set else "eval",
                "final_ml": plog.final_ml,
                "aborted": plog.meta["aborted"],
            }
        )
    distribution = {c: sum(1 for s in specs if s.container == c) for c in containers}
    manifest = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "meshes": {"source": cfg.meshes.source, "targets": dict(cfg.meshes.targets)},
        "duration_s": p.duration_s,
        "rate_hz": p.rate_hz,
        "split": {"train": train, "eval": held},
        "container_counts": distribution,
        "entries": entries,
    }
    _write_json(out_dir / MANIFEST, manifest)
    log.info("collected %d pours into %s", len(entries), out_dir)
    return out_dir


@dataclass
class Dataset:
    directory: Path
    manifest: dict

    @classmethod
    def open(cls, directory) -> Dataset:
        directory = Path(directory)
        path = directory / MANIFEST
        if not path.is_file():
            raise InputError(f"{directory}: no {MANIFEST} (not a dataset directory)")
        return cls(directory, _read_json(path))

    @property
    def entries(self):
        return self.manifest.get("entries", [])

    def select(self, split=None):
        return [e for e in self.entries if split is None or e["split"] == split]

    def load(self, entry) -> PourLog:
        return load_dataset_log(self.directory, entry)

    def logs(self, split=None):
        return [self.load(e) for e in self.select(split)]


def truth_column(logs) -> str:
    """Relabeled ground truth when every log has it, else simulator truth."""
    return GT_COLUMN if logs and all(GT_COLUMN in lg.columns for lg in logs) else "tgt_ml"


# -- fitting -----------------------------------------------------------------


def cmd_fit_transition(cfg: ExperimentConfig, dataset_dir, out_path) -> hmm.TransitionModel:
    logs = Dataset.open(dataset_dir).logs("train")
    if not logs:
        raise EmptyTrainingSet(f"{dataset_dir}: no training logs")
    col = truth_column(logs)
    log.info("fitting transitions on %d logs using %s", len(logs), col)
    trans = hmm.fit_transition([lg[col] for lg in logs], cfg.histogram_spec(), cfg.transition.smoothing)
    trans.save(out_path)
    return trans


def cmd_fit_regressor(cfg: ExperimentConfig, dataset_dir, out_path) -> dict:
    """Fit one pixel-count regressor per target container on the train split
    and score the raw estimates on the held-out split.

    Containers have different inner-pixel sets and count-to-volume curves,
    so a single shared map would mostly learn which container is in view.
    """
    ds = Dataset.open(dataset_dir)
    train_entries = ds.select("train")
    if not train_entries:
        raise EmptyTrainingSet(f"{dataset_dir}: no training logs")
    regs, report = {}, {"containers": {}}
    preds, truths = [], []
    for name in sorted({e["container"] for e in train_entries}):
        train = [ds.load(e) for e in train_entries if e["container"] == name]
        reg = fit_regressor(train, truth_column(train))
        regs[name] = reg
        rep = {"train_logs": len(train), "breakpoints": len(reg.counts), "sigma_ml": reg.sigma_ml}
        held = [ds.load(e) for e in ds.select("eval") if e["container"] == name]
        if held:
            pred = np.concatenate([reg(lg["liq_px"]) for lg in held])
            truth = np.concatenate([lg["tgt_ml"] for lg in held])
            rep["heldout_spearman"] = spearman(pred, truth)
            preds.append(pred)
            truths.append(truth)
        report["containers"][name] = rep
    save_regressors(regs, out_path)
    if preds:
        report["heldout_spearman"] = spearman(np.concatenate(preds), np.concatenate(truths))
    return report


# -- relabel -----------------------------------------------------------------


def relabel_log(plog: PourLog, cache: ExpectedLabelCache, table, trans) -> np.ndarray:
    """Viterbi bin path over a logged pour, as bin-center volumes (ml)."""
    if plog.observations is None:
        raise InputError("relabeling needs the stored observations of each pour")
    if plog.observations.shape[1] != cache.maps.shape[1]:
        raise InputError("stored observations do not match the configured camera and container")
    logliks = [cache.profile_from_inner(o, table) for o in plog.observations]
    init = hmm.VolumeHistogram.point_mass(cache.spec, 0)
    path = hmm.viterbi(logliks, trans, init)
    return cache.spec.centers[np.asarray(path, dtype=np.int64)]


def cmd_relabel(cfg: ExperimentConfig, dataset_dir, transition_path=None, jobs=1) -> dict:
    """Write a ``gt_ml`` column into every pour CSV and report how far it is
    from the simulator's truth.

    Without a transition file, transitions are counted from the dataset's own
    simulator truth.
    """
    ds = Dataset.open(dataset_dir)
    entries = ds.select()
    if not entries:
        raise EmptyTrainingSet(f"{dataset_dir}: dataset has no pours")
    world = World(cfg)
    spec = world.spec
    logs = [ds.load(e) for e in entries]
    if transition_path:
        trans = hmm.TransitionModel.load(transition_path)
        if trans.spec != spec:
            raise InputError("transition model histogram differs from the config")
    else:
        trans = hmm.fit_transition([lg["tgt_ml"] for lg in logs], spec, cfg.transition.smoothing)
    paths = _parallel(world, _relabel_task, [(e["container"], lg, trans) for e, lg in zip(entries, logs)], jobs)
    per_seq = []
    for entry, plog, gt in zip(entries, logs, paths):
        plog.columns[GT_COLUMN] = gt
        write_csv(plog, ds.directory / entry["csv"])
        truth = plog["tgt_ml"]
        per_seq.append(
            {
                "id": entry["id"],
                "rmse_ml": float(np.sqrt(np.mean((gt - truth) ** 2))),
                "bin_match": float(np.mean(spec.bin_of(gt) == spec.bin_of(truth))),
            }
        )
    report = {
        "sequences": per_seq,
        "mean_rmse_ml": float(np.mean([s["rmse_ml"] for s in per_seq])),
        "max_rmse_ml": float(np.max([s["rmse_ml"] for s in per_seq])),
        "bin_match": float(np.mean([s["bin_match"] for s in per_seq])),
        "bin_width_ml": spec.width,
    }
    _write_json(ds.directory / "relabel_report.json", report)
    return report


# -- evaluate ----------------------------------------------------------------


def cmd_evaluate(
    cfg: ExperimentConfig,
    out_dir,
    transition_path,
    estimator="model-based",
    regressor_path=None,
    per_container=None,
    jobs=1,
) -> dict:
    """Run the controller test pours and write per-pour results plus a summary."""
    if estimator not in ESTIMATORS:
        raise InputError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc), out_dir) from exc
    world = World(cfg)
    if not Path(transition_path).is_file():
        raise InputError(f"transition model not found: {transition_path} (run fit-transition first)")
    trans = hmm.TransitionModel.load(transition_path)
    if trans.spec != world.spec:
        raise InputError("transition model histogram differs from the config")
    regressors = None
    if estimator == "pixel-count":
        if not regressor_path or not Path(regressor_path).is_file():
            raise InputError(f"regressor not found: {regressor_path} (run fit-regressor first)")
        regressors = load_regressors(regressor_path)
        missing = sorted(set(world.scenes) - set(regressors))
        if missing:
            raise InputError(f"regressor file has no map for containers {missing}")
    p = cfg.protocol
    specs = evaluation_protocol(
        p.eval_per_container if per_container is None else per_container,
        list(world.scenes),
        p.targets_ml,
        p.sources_ml,
        p.min_headroom_ml,
        cfg.seed,
    )
    specs = [type(s)(s.container, s.source_ml, s.target_ml, s.stream + EVAL_STREAM_OFFSET) for s in specs]
    noise = cfg.noise_table()
    tasks = [(s, estimator, trans, regressors, noise, False) for s in specs]
    logs = _parallel(world, _pour_task, tasks, jobs)
    rows = []
    for spec, plog in zip(specs, logs):
        err = abs(plog.final_ml - spec.target_ml)
        rows.append((spec.target_ml, plog.final_ml, err, spec.container, estimator, plog.meta["aborted"]))
    path = out_dir / "results.csv"
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_COLUMNS)
            for t, f, e, c, name, _ in rows:
                w.writerow([f"{t:.1f}", f"{f:.6f}", f"{e:.6f}", c, name])
    except OSError as exc:
        raise IoError(str(exc), path) from exc
    errs = np.array([r[2] for r in rows])
    summary = {
        "estimator": estimator,
        "seed": cfg.seed,
        "pours": len(rows),
        "mean_abs_err_ml": round(float(errs.mean()), 1),
        "max_abs_err_ml": round(float(errs.max()), 1),
        "within_50_ml": round(float(np.mean(errs <= 50.0)), 4),
        "within_75_ml": round(float(np.mean(errs <= 75.0)), 4),
        "aborted": sum(1 for r in rows if r[5]),
    }
    _write_json(out_dir / "summary.json", summary)
    return summary
