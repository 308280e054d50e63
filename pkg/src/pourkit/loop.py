"""Closed-loop pours: observe, filter, command, step the plant."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import hmm
from .baseline import PixelCountRegressor, regressor_loglik
from .controller import ControllerConfig, ControllerState, Phase, controller_step
from .errors import DegenerateBelief, InputError
from .observation import ConfusionTable, ExpectedLabelCache, PixelLabelMap, Scene
from .pourlog import PourLog
from .simulator import NoiseSpec, PourSimState, SourceModel, render_observation, sim_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VolumeEstimate:
    volume_ml: float
    belief: hmm.VolumeHistogram
    tick: int


class HistogramEstimator:
    """Forward filter over volume bins with a pluggable observation model.

    Subclasses provide ``loglik(obs)``; everything downstream (filtering,
    median, controller) is shared.
    """

    def __init__(self, trans: hmm.TransitionModel, init: hmm.VolumeHistogram | None = None):
        self.trans = trans
        self.init = init or hmm.VolumeHistogram.point_mass(trans.spec, 0)
        self.reset()

    def reset(self):
        self.belief = self.init
        self.tick = 0

    def loglik(self, obs: PixelLabelMap) -> np.ndarray:
        raise NotImplementedError

    def step(self, obs: PixelLabelMap) -> VolumeEstimate:
        if self.tick:
            self.belief = hmm.predict(self.belief, self.trans)
        self.belief = hmm.update(self.belief, self.loglik(obs))
        est = VolumeEstimate(hmm.median_estimate(self.belief), self.belief, self.tick)
        self.tick += 1
        return est


class ModelBasedEstimator(HistogramEstimator):
    def __init__(self, cache: ExpectedLabelCache, table: ConfusionTable, trans, init=None):
        if cache.spec != trans.spec:
            raise InputError("cache and transition model use different histograms")
        self.cache = cache
        self.table = table
        super().__init__(trans, init)

    def loglik(self, obs):
        return self.cache.profile_from_inner(obs.inner_labels, self.table)


class PixelCountEstimator(HistogramEstimator):
    def __init__(self, regressor: PixelCountRegressor, trans, init=None):
        self.regressor = regressor
        super().__init__(trans, init)

    def loglik(self, obs):
        return regressor_loglik(obs.liquid_count, self.regressor, self.trans.spec)


def run_pour(
    sim: PourSimState,
    source: SourceModel,
    scene: Scene,
    noise: NoiseSpec,
    estimator,
    config: ControllerConfig,
    target_ml: float,
    duration: float = 25.0,
    dt: float = 1.0 / 30.0,
    keep_observations: bool = False,
) -> PourLog:
    """Run one pour for the full duration and log every tick.

    A degenerate posterior stops the loop early; the log then carries the
    rows up to that point and an ``aborted`` diagnostic in its metadata.
    """
    if not duration > 0:
        raise InputError("duration must be positive")
    ticks = int(round(duration / dt))
    estimator.reset()
    ctrl = ControllerState(target_ml=target_ml)
    rows, obs_rows = [], []
    meta = {"target_ml": target_ml, "source_ml": sim.source_ml, "aborted": None}
    state = sim
    for k in range(ticks):
        obs = render_observation(state, scene, noise)
        try:
            est = estimator.step(obs)
        except DegenerateBelief as exc:
            log.warning("pour aborted at tick %d: %s", k, exc)
            meta["aborted"] = f"tick {k}: {exc}"
            break
        cmd, ctrl = controller_step(ctrl, config, est.volume_ml, state.wrist_angle, dt)
        rows.append(
            {
                "tick": k,
                "time_s": k * dt,
                "wrist_rad": state.wrist_angle,
                "cmd_rad_s": cmd,
                "src_ml": state.source_ml,
                "flight_ml": state.flight_ml,
                "tgt_ml": state.target_ml,
                "spill_ml": state.spilled_ml,
                "est_ml": est.volume_ml,
                "liq_px": obs.liquid_count,
            }
        )
        if keep_observations:
            obs_rows.append(obs.inner_labels)
        state = sim_step(state, source, cmd, dt)
    meta.update(
        final_ml=state.settled_target_ml,
        final_source_ml=state.source_ml,
        final_phase=Phase(ctrl.phase).name,
        ticks=len(rows),
    )
    observations = np.array(obs_rows, dtype=bool) if keep_observations else None
    return PourLog.from_rows(rows, meta, observations)


def conservation_error(log_: PourLog) -> float:
    total = log_["src_ml"] + log_["flight_ml"] + log_["tgt_ml"] + log_["spill_ml"]
    return float(np.max(np.abs(total - total[0]))) if len(total) else 0.0


__all__ = [
    "HistogramEstimator",
    "ModelBasedEstimator",
    "PixelCountEstimator",
    "VolumeEstimate",
    "conservation_error",
    "run_pour",
]
