"""Runs named scenarios end to end and writes their artifacts."""

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from photon_jumps import __version__, artifacts
from photon_jumps.analysis import (
    PrepTarget,
    PreparationSpec,
    decoding_latencies,
    emission_rate_bound,
    ensemble_p1,
    ensemble_progression,
    equilibrium_thermometry,
    first_jump_histogram,
    prepare_initial,
)
from photon_jumps.config import Scenario
from photon_jumps.detection_chain import (
    BackactionReport,
    detection_probability_g,
    sample_coupled_stream,
    sample_detection_stream,
)
from photon_jumps.errors import FitError, RunCancelled
from photon_jumps.field_dynamics import (
    initial_decay_time,
    master_equation_evolve,
    planck_occupation,
    sample_trajectory,
)
from photon_jumps.jump_decoder import (
    FalseJumpMethod,
    decode,
    expected_p_e,
    false_jump_rate,
    jump_detection_delay,
    vote_latency,
)
from photon_jumps.probe_physics import phase_table, propagate_crossing
from photon_jumps.seeding import (
    COUPLED_STREAM,
    DECODER_MC_STREAM,
    DETECTION_STREAM,
    FIELD_STREAM,
    trajectory_seed,
)

log = logging.getLogger(__name__)


@dataclass
class Shot:
    """One simulated trajectory with its atom stream and decoded trace."""

    index: int
    trajectory: object
    decoded: object
    stream: Optional[object] = None
    backaction: Optional[BackactionReport] = None


@dataclass
class RunResult:
    scenario: Scenario
    output_dir: str
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


class ScenarioRunner:
    """Runs one configured scenario and writes its artifacts.

    The runner holds `lock` for the whole run, so runners sharing a lock never
    overlap. Setting `stop_event` cancels the run between trajectories.
    """

    def __init__(self, config, lock=None, stop_event=None, progress=None):
        """
        Args:
            config: ScenarioConfig to run.
            lock: threading.Lock shared with other runners; a new one if None.
            stop_event: threading.Event checked before every trajectory.
            progress: Optional callable (done, total, message).
        """
        self.config = config
        self.lock = lock if lock else threading.Lock()
        self.stop_event = stop_event if stop_event else threading.Event()
        self.progress = progress
        self.table = None
        self._seeds = {}
        self._written = []
        log.info(f"ScenarioRunner created for scenario '{config.scenario.value}'.")

    # --- Bookkeeping ---

    def _path(self, name):
        return os.path.join(self.config.output_dir, name)

    def _record(self, name):
        self._written.append(name)
        log.info(f"Artifact written: {self._path(name)}")

    def _write_json(self, name, data):
        artifacts.write_json(self._path(name), data)
        self._record(name)

    def _write_csv(self, name, header, rows):
        artifacts.write_csv(self._path(name), header, rows)
        self._record(name)

    def _write_with(self, name, writer_method):
        artifacts.write_with(self._path(name), writer_method)
        self._record(name)

    def _write_text(self, name, text):
        artifacts.write_text(self._path(name), text)
        self._record(name)

    def _report(self, done, total, message):
        if self.progress:
            self.progress(done, total, message)

    def _check_stop(self):
        if self.stop_event.is_set():
            raise RunCancelled("Run cancelled by stop request")

    # --- Trajectories ---

    def _seed_entry(self, index):
        base = self.config.base_seed
        if self.config.detector.emission_prob > 0:
            streams = {"coupled": trajectory_seed(base, index, COUPLED_STREAM)}
        else:
            streams = {
                "field": trajectory_seed(base, index, FIELD_STREAM),
                "detection": trajectory_seed(base, index, DETECTION_STREAM),
            }
        return {"index": index, **{name: rec.derived_seed() for name, rec in streams.items()}}

    def _shot(self, index, initial, duration, keep_stream):
        self._check_stop()
        cfg = self.config
        report = None
        if cfg.detector.emission_prob > 0:
            traj, stream, report = sample_coupled_stream(
                initial, duration, cfg.bath, cfg.arrivals, cfg.detector, self.table,
                trajectory_seed(cfg.base_seed, index, COUPLED_STREAM),
            )
        else:
            traj = sample_trajectory(
                initial, duration, cfg.bath, trajectory_seed(cfg.base_seed, index, FIELD_STREAM)
            )
            stream = sample_detection_stream(
                traj, cfg.arrivals, cfg.detector, self.table,
                trajectory_seed(cfg.base_seed, index, DETECTION_STREAM),
            )
        decoded = decode(stream, cfg.decoder)
        log.debug(f"Trajectory {index}: {len(stream)} atoms, {len(traj.events)} jumps, "
                  f"{len(decoded.jumps)} decoded jumps")
        return Shot(index, traj, decoded, stream if keep_stream else None, report)

    def _ensemble(self, indices, initial, duration, label, keep_streams=False):
        """Simulates trajectories `indices`; results come back in index order."""
        indices = list(indices)
        total = len(indices)
        shots = []

        def task(index):
            return self._shot(index, initial, duration, keep_streams)

        def collect(shot):
            shots.append(shot)
            self._seeds[shot.index] = self._seed_entry(shot.index)
            self._report(len(shots), total, f"{label}: trajectory {len(shots)} of {total}")

        self._report(0, total, f"{label}: starting {total} trajectories")
        if self.config.workers == 1:
            for index in indices:
                collect(task(index))
        else:
            with ThreadPoolExecutor(max_workers=self.config.workers, thread_name_prefix="Trajectory") as pool:
                for shot in pool.map(task, indices):
                    collect(shot)
        log.info(f"{label}: simulated {total} trajectories of {duration}s")
        return shots

    def _p_e(self, n):
        return expected_p_e(n, self.config.detector, self.table)

    # --- Scenarios ---

    def _run_telegraph(self):
        cfg = self.config
        initial = prepare_initial(cfg.prep, cfg.bath)
        shots = self._ensemble(range(cfg.n_trajectories), initial, cfg.duration, "telegraph", keep_streams=True)
        vote_span, vote_delay = vote_latency(cfg.decoder, cfg.arrivals)

        per_trajectory = []
        for shot in shots:
            suffix = "" if cfg.n_trajectories == 1 else f"_{shot.index:03d}"
            traj, decoded = shot.trajectory, shot.decoded
            self._write_with(f"atoms{suffix}.csv", shot.stream.write_csv)
            self._write_with(f"decoded{suffix}.csv", decoded.write_csv)
            field_rows = [(0.0, traj.initial_n)] + [(e.time, e.to_n) for e in traj.events]
            self._write_csv(f"field{suffix}.csv", ("time_s", "n"), field_rows)
            self._write_json(f"jumps{suffix}.json", {
                "decoded": decoded.jumps_as_dicts(),
                "true": [{"time_s": e.time, "from": e.from_n, "to": e.to_n} for e in traj.events],
            })
            entry = {
                "index": shot.index,
                "n_atoms": len(shot.stream),
                "atom_rate_hz": len(shot.stream) / cfg.duration,
                "decoded_jumps": len(decoded.jumps),
                "true_jumps": len(traj.events),
                "true_mean_n": traj.time_average(),
                "true_p1_fraction": traj.occupation_fraction(1),
                "decoded_p1_fraction": float(decoded.inferred.mean()) if len(decoded) else 0.0,
            }
            if shot.backaction is not None:
                entry["injections"] = shot.backaction.injections
                entry["clamped_injections"] = shot.backaction.clamped
            per_trajectory.append(entry)
            log.info(f"Telegraph trajectory {shot.index}: {entry['n_atoms']} atoms, "
                     f"{entry['decoded_jumps']} decoded jumps")

        return {
            "trajectories": per_trajectory,
            "vote_duration_s": vote_span,
            "vote_delay_s": vote_delay,
            "phases": self.table.as_dict(),
        }

    def _run_fock_decay(self):
        cfg = self.config
        initial = prepare_initial(cfg.prep, cfg.bath)
        shots = self._ensemble(range(cfg.n_trajectories), initial, cfg.duration, "fock_decay")
        trajectories = [s.trajectory for s in shots]
        decoded = [s.decoded for s in shots]

        # first grid point one step in, after the vote has filled
        grid = np.linspace(0.0, cfg.duration, cfg.grid_points + 1)[1:]
        latency = 0.0
        if cfg.latency_correction:
            latency = jump_detection_delay(self._p_e(1), self._p_e(0), cfg.decoder, cfg.arrivals.rate)
            log.info(f"Latency correction: {latency * 1e3:.2f} ms")

        measured = ensemble_p1(decoded, grid, latency_correction=latency)
        truth = ensemble_p1(trajectories, grid)
        oracle = master_equation_evolve(initial, cfg.bath, np.concatenate(([0.0], grid)))[1:]
        oracle_p1 = np.array([p[1] for p in oracle])

        self._write_with("p1_measured.csv", measured.write_csv)
        self._write_with("p1_true.csv", truth.write_csv)
        self._write_csv("p1_master.csv", ("t_s", "p1"), zip(grid.tolist(), oracle_p1.tolist()))

        curves = ensemble_progression(decoded, grid, latency_correction=latency)
        sizes = sorted(curves)
        rows = [[t] + [curves[k].mean[i].item() for k in sizes] for i, t in enumerate(grid.tolist())]
        self._write_csv("p1_progression.csv", ["t_s"] + [f"mean_{k}" for k in sizes], rows)

        sigma = np.sqrt(oracle_p1 * (1.0 - oracle_p1) / measured.n_trajectories)
        deviation = np.abs(measured.mean - oracle_p1) / np.maximum(sigma, 1e-12)
        decay_time = initial_decay_time(initial, cfg.bath)
        log.info(f"Fock decay: oracle initial decay time {decay_time:.4f}s, "
                 f"max deviation {deviation.max():.2f} sigma")
        return {
            "n_trajectories": measured.n_trajectories,
            "initial_decay_time_s": decay_time,
            "latency_correction_s": latency,
            "max_deviation_sigma": float(deviation.max()),
            "points_within_3_sigma": int(np.count_nonzero(deviation <= 3.0)),
            "grid_points": int(grid.size),
            "progression_sizes": sizes,
        }

    def _lifetime_block(self, name, traces, prep, theory, false_rates):
        """Fits first-jump durations and writes their CSV files; returns the summary entry."""
        entry = {"theory_s": theory}
        rate = false_rates[FalseJumpMethod.MONTE_CARLO.value]
        entry["theory_with_false_jumps_s"] = 1.0 / (1.0 / theory + rate) if theory else None
        for mode, items in (("measured", [t.decoded for t in traces]), ("true", [t.trajectory for t in traces])):
            try:
                result = first_jump_histogram(items, prep)
            except FitError as e:
                log.warning(f"Lifetime fit for |{name}> ({mode}) refused: {e}")
                entry[mode] = {"error": str(e)}
                continue
            entry[mode] = result.summary()
            if mode == "measured":
                self._write_with(f"first_jumps_{name}.csv", result.write_csv)
                self._write_with(f"histogram_{name}.csv", result.write_histogram_csv)
            log.info(f"|{name}> lifetime ({mode}): {result.fit.tau:.4f} +/- {result.fit.tau_stderr:.4f}s "
                     f"from {result.fit.n_events} events")
        return entry

    def _false_jump_rates(self, p_flip, stream_index):
        cfg = self.config
        seed = trajectory_seed(cfg.base_seed, stream_index, DECODER_MC_STREAM)
        return {
            method.value: false_jump_rate(
                p_flip, cfg.decoder, cfg.arrivals.rate, method=method,
                n_atoms=cfg.false_jump_atoms, seed=seed,
            )
            for method in FalseJumpMethod
        }

    def _run_lifetime_histograms(self):
        cfg = self.config
        n_one = cfg.n_trajectories
        one_prep = cfg.prep
        zero_prep = PreparationSpec(PrepTarget.THERMAL, cfg.prep.residual_error)

        ones = self._ensemble(range(n_one), prepare_initial(one_prep, cfg.bath), cfg.duration, "one-photon")
        zeros = self._ensemble(
            range(n_one, n_one + cfg.vacuum_trajectories), prepare_initial(zero_prep, cfg.bath),
            cfg.vacuum_duration, "vacuum",
        )

        self._check_stop()
        false_one = self._false_jump_rates(1.0 - self._p_e(1), 0)
        false_zero = self._false_jump_rates(self._p_e(0), 1)
        n0, tc = cfg.bath.n_therm, cfg.bath.t_cavity
        t_one = tc / (1.0 + 3.0 * n0)
        t_zero = tc / n0 if n0 > 0 else None

        latencies = decoding_latencies([s.trajectory for s in ones], [s.decoded for s in ones], level=1)
        predicted = jump_detection_delay(self._p_e(1), self._p_e(0), cfg.decoder, cfg.arrivals.rate)
        return {
            "one": self._lifetime_block("one", ones, one_prep, t_one, false_one),
            "zero": self._lifetime_block("zero", zeros, zero_prep, t_zero, false_zero),
            "false_jump_rates_hz": {"one": false_one, "zero": false_zero},
            "decoding_latency": {
                "mean_s": float(latencies.mean()) if latencies.size else None,
                "n_jumps": int(latencies.size),
                "predicted_s": predicted,
            },
        }

    def _run_thermometry(self):
        cfg = self.config
        initial = prepare_initial(cfg.prep, cfg.bath)
        shots = self._ensemble(range(cfg.n_trajectories), initial, cfg.duration, "thermometry")
        estimate = equilibrium_thermometry([s.decoded for s in shots], cfg.detector, cfg.decoder)

        planck = planck_occupation(cfg.cavity_frequency, cfg.temperature)
        bound = emission_rate_bound(estimate.n_estimate, planck, cfg.bath, cfg.arrivals.rate)
        true_n = float(np.mean([s.trajectory.time_average() for s in shots]))
        true_p1 = float(np.mean([s.trajectory.occupation_fraction(1) for s in shots]))
        log.info(f"Thermometry: n = {estimate.n_estimate:.4f}, Planck n_t = {planck:.4f}, "
                 f"emission bound {bound:.2e} per atom")
        return {
            "estimate": estimate.as_dict(),
            "configured_n_therm": cfg.bath.n_therm,
            "true_mean_n": true_n,
            "true_p1": true_p1,
            "planck_n": planck,
            "emission_prob_bound": bound,
        }

    def _geometry(self):
        geom = self.config.geom
        return {
            "omega0_hz": geom.omega0,
            "waist_m": geom.waist,
            "velocity_m_s": geom.velocity,
            "detuning_hz": geom.detuning,
            "z_span": geom.z_span,
        }

    def _run_phase_check(self):
        cfg = self.config
        data = self.table.as_dict()
        data["geometry"] = self._geometry()
        data["detection_p_g"] = {
            str(n): detection_probability_g(n, cfg.detector, self.table) for n in range(cfg.bath.n_max + 1)
        }
        self._write_json("phases.json", data)
        return data

    def _run_adiabaticity_check(self):
        cfg = self.config
        crossings = []
        for n in range(cfg.bath.n_max):
            self._check_stop()
            result = propagate_crossing(n, cfg.geom)
            crossings.append({
                "n": n,
                "transition_probability": result.transition_probability,
                "norm_error": result.norm_error,
                "steps": result.n_steps,
                "nfev": result.nfev,
            })
            self._report(n + 1, cfg.bath.n_max, f"crossing n={n}")
        data = {"geometry": self._geometry(), "crossings": crossings}
        self._write_json("adiabaticity.json", data)
        return data

    # --- Entry point ---

    def run(self):
        """Runs the scenario; returns a RunResult.

        Raises:
            RunCancelled: if the stop event was set.
            NumericalError, PhotonJumpsError, OSError: from the simulation or the writers.
        """
        cfg = self.config
        handlers = {
            Scenario.TELEGRAPH: self._run_telegraph,
            Scenario.FOCK_DECAY: self._run_fock_decay,
            Scenario.LIFETIME_HISTOGRAMS: self._run_lifetime_histograms,
            Scenario.THERMOMETRY: self._run_thermometry,
            Scenario.PHASE_CHECK: self._run_phase_check,
            Scenario.ADIABATICITY_CHECK: self._run_adiabaticity_check,
        }
        with self.lock:
            self._seeds.clear()
            self._written.clear()
            os.makedirs(cfg.output_dir, exist_ok=True)
            log.info(f"Running scenario '{cfg.scenario.value}' into {cfg.output_dir} (seed {cfg.base_seed})")

            self.table = phase_table(cfg.geom, cfg.bath.n_max)
            summary = handlers[cfg.scenario]()
            if cfg.scenario not in (Scenario.PHASE_CHECK, Scenario.ADIABATICITY_CHECK):
                self._write_json("summary.json", summary)

            self._write_text("resolved.cfg", cfg.to_text())
            self._write_json("manifest.json", {
                "code_version": __version__,
                "scenario": cfg.scenario.value,
                "config": cfg.as_dict(),
                "seeds": {
                    "base_seed": cfg.base_seed,
                    "trajectories": [self._seeds[i] for i in sorted(self._seeds)],
                },
                "artifacts": sorted(self._written + ["manifest.json"]),
            })
            log.info(f"Scenario '{cfg.scenario.value}' finished: {len(self._written)} artifacts")
            return RunResult(cfg.scenario, cfg.output_dir, list(self._written), summary)
