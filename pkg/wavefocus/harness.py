#!/usr/bin/env python3
"""
Monte Carlo experiments for SIM wave-domain beamfocusing.

Subcommands reproduce the sum-rate / NMSE sweeps over the number of layers
and users, the near- vs far-field comparison, the beamfocusing heatmaps and a
finite-difference gradient check. Results are written as CSV and grid files.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import ConfigError, WavefocusError
from .allocation import Heatmap, heatmap, rate_report, uniform_power, water_filling
from .channel import ChannelSet, GainMode, ZfTarget, end_to_end, farfield_channel, nearfield_channel, zf_target
from .config import POWER_RULES, ExperimentConfig, load_config
from .geometry import SceneGeometry, build_scene
from .metasurface import AmplitudeMode, CapacitanceSweep, SimState, capacitance_grid, phase_for_capacitance
from .optimizer import codebook_init, finite_difference_gradient, gradient, max_relative_error, objective, optimize
from .propagation import PropagationSet, build_propagation, sim_response
from .results import TrialResult, summarize, write_heatmap, write_table, write_trials_csv

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-5
HEATMAP_LAYERS = (1, 2, 4)
HEATMAP_X = (-2.5, 2.5)
HEATMAP_Y = (0.0, 10.0)


@dataclass
class TrialContext:
    geometry: SceneGeometry
    prop: PropagationSet
    channel: ChannelSet  # gain mode used for rates
    target: ZfTarget  # built on the unit-norm channel

    @property
    def fit_channel(self) -> np.ndarray:
        return self.channel.normalized


def trial_seed(master_seed: int, trial_index: int) -> np.random.SeedSequence:
    """Splittable per-trial seed: adding trials never reshuffles earlier ones."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index,))


def prepare_trial(config: ExperimentConfig, scene_rng: np.random.Generator, arm: str = "near",
                  ue_positions: Optional[np.ndarray] = None, gain_mode: Optional[str] = None) -> TrialContext:
    geometry = build_scene(config.scene(), scene_rng, ue_positions)
    prop = build_propagation(geometry)
    mode = GainMode(gain_mode or config.gain_mode)
    if arm == "near":
        channel = nearfield_channel(geometry, mode, config.alpha)
    elif arm == "far":
        channel = farfield_channel(geometry, config.far_field_ref_m, mode, config.alpha)
    else:
        raise WavefocusError(f"unknown channel arm {arm!r}")
    return TrialContext(geometry, prop, channel, zf_target(channel.normalized))


def evaluate_scheme(config: ExperimentConfig, ctx: TrialContext, G: np.ndarray, trial: int, scheme: str,
                    nmse: float, iterations: int, arm: str, power: str = "water-filling") -> TrialResult:
    Q = end_to_end(ctx.channel.H, G)
    if power == "uniform":
        alloc = uniform_power(Q.shape[0], config.p_t_w)
    else:
        alloc = water_filling(Q, config.noise_w, config.p_t_w)
    report = rate_report(Q, alloc.powers, config.noise_w)
    return TrialResult(
        trial=trial,
        scheme=scheme,
        K=ctx.geometry.num_users,
        L=ctx.geometry.num_layers,
        M=ctx.geometry.atoms_per_layer,
        nmse=nmse,
        iterations=iterations,
        sum_rate=report.sum_rate,
        sinr=report.sinr.tolist(),
        powers=alloc.powers.tolist(),
        arm=arm,
        power_converged=alloc.converged,
    )


def run_trial(config: ExperimentConfig, trial_index: int, arm: str = "near",
              schemes: Optional[Sequence[str]] = None, gain_mode: Optional[str] = None,
              power: str = "water-filling") -> List[TrialResult]:
    """One Monte Carlo draw evaluated under every requested scheme.

    `power` is the split applied to every scheme: "water-filling" or "uniform".
    """
    if power not in POWER_RULES:
        raise ConfigError(f"unknown power rule {power!r}; choose from {POWER_RULES}")
    schemes = list(schemes or config.schemes)
    scene_ss, codebook_ss, random_ss = trial_seed(config.seed, trial_index).spawn(3)
    model = config.amplitude_model()
    mode = AmplitudeMode(config.amplitude_mode)
    shape = dict(K=config.num_users, L=config.layers, M=config.atoms_per_layer)
    try:
        ctx = prepare_trial(config, np.random.default_rng(scene_ss), arm, gain_mode=gain_mode)
        H, target = ctx.fit_channel, ctx.target
        results = []
        init = None
        if "codebook" in schemes or "proposed" in schemes:
            init = codebook_init(config.codebook_size, np.random.default_rng(codebook_ss), ctx.prop, target, H,
                                 model, mode)
        for scheme in schemes:
            if scheme == "proposed":
                rep = optimize(config.optimizer(), ctx.prop, target, H, model, mode, initial=init)
                state, nmse, iters = rep.best_state, rep.best_nmse, rep.iterations
            elif scheme == "codebook":
                state, iters = init, 0
                nmse = objective(state, ctx.prop, target, H, model)
            elif scheme == "random":
                state, iters = SimState.random(np.random.default_rng(random_ss), ctx.prop.num_layers,
                                               ctx.prop.atoms_per_layer, mode), 0
                nmse = objective(state, ctx.prop, target, H, model)
            else:  # zf-oracle
                results.append(evaluate_scheme(config, ctx, target.w_zf, trial_index, scheme, 0.0, 0, arm, power))
                continue
            G = sim_response(state, ctx.prop, model)
            results.append(evaluate_scheme(config, ctx, G, trial_index, scheme, nmse, iters, arm, power))
    except (WavefocusError, np.linalg.LinAlgError) as e:
        logger.warning("trial %d failed: %s", trial_index, e)
        marker = f"{type(e).__name__}: {e}"
        return [TrialResult(trial_index, s, arm=arm, error=marker, **shape) for s in schemes]
    logger.info("trial %d done (L=%d K=%d arm=%s)", trial_index, config.layers, config.num_users, arm)
    return results


def _run_job(job: Tuple[ExperimentConfig, int, str, Optional[Sequence[str]], Optional[str], str]) -> List[TrialResult]:
    config, index, arm, schemes, gain_mode, power = job
    return run_trial(config, index, arm, schemes, gain_mode, power)


def run_jobs(jobs: List[tuple], workers: int = 1) -> List[TrialResult]:
    """Run trials (in parallel when workers > 1) and flatten in job order."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_job, jobs))
    else:
        batches = [_run_job(job) for job in jobs]
    return [r for batch in batches for r in batch]


def sweep_layers(config: ExperimentConfig) -> Tuple[List[TrialResult], pd.DataFrame]:
    jobs = [
        (replace(config, layers=layers), t, "near", None, None, config.sweep_power)
        for layers in config.layers_list
        for t in range(config.trials)
    ]
    results = run_jobs(jobs, config.workers)
    return results, summarize(results, ["L", "scheme"])


def sweep_users(config: ExperimentConfig) -> Tuple[List[TrialResult], pd.DataFrame]:
    jobs = [
        (config.with_users(users), t, "near", None, None, config.sweep_power)
        for users in config.users_list
        for t in range(config.trials)
    ]
    results = run_jobs(jobs, config.workers)
    return results, summarize(results, ["K", "scheme"])


def compare_field(config: ExperimentConfig, p_t_dbm: float = -40.0) -> Tuple[List[TrialResult], pd.DataFrame]:
    """Paired near/far trials with normalized gains; same seeds in both arms."""
    cfg = replace(config, gain_mode=GainMode.NORMALIZED.value, p_t_dbm=p_t_dbm)
    schemes = [s for s in cfg.schemes if s in ("proposed", "zf-oracle")] or ["proposed"]
    jobs = [
        (replace(cfg, layers=layers), t, arm, schemes, GainMode.NORMALIZED.value, cfg.sweep_power)
        for layers in cfg.layers_list
        for t in range(cfg.trials)
        for arm in ("near", "far")
    ]
    results = run_jobs(jobs, cfg.workers)
    table = summarize(results, ["L", "scheme", "arm"])
    wide = table.pivot_table(index=["L", "scheme"], columns="arm", values="sum_rate_mean").reset_index()
    wide = wide.rename(columns={"near": "near_sum_rate", "far": "far_sum_rate"})
    wide.columns.name = None
    wide["ratio"] = wide["near_sum_rate"] / wide["far_sum_rate"]
    return results, wide


def axis_positions(users: int, spacing: float = 1.5) -> np.ndarray:
    """UEs on the y-axis at `spacing` intervals, all in one direction from the SIM."""
    ys = spacing * np.arange(1, users + 1)
    return np.column_stack([np.zeros(users), ys, np.zeros(users)])


def self_energy_dominance(geometry: SceneGeometry, G: np.ndarray) -> np.ndarray:
    """Per UE k: |h_k^H g_k|^2 exceeds |h_j^H g_k|^2 for every other UE j."""
    rows = nearfield_channel(geometry, GainMode.NORMALIZED).H.conj().T
    energy = np.abs(rows @ G) ** 2  # [j, k]: stream k received at UE j
    own = np.diag(energy)
    others = energy - np.diag(own) - np.diag(np.full(own.size, np.inf))
    return own > others.max(axis=0)


def heatmap_arms(config: ExperimentConfig) -> Dict[str, Tuple[SceneGeometry, np.ndarray]]:
    """Optimized G per arm (L in {1, 2, 4}) plus the digital ZF reference."""
    cfg = config.with_users(4)
    ues = axis_positions(cfg.num_users, cfg.heatmap_spacing_m)
    model = cfg.amplitude_model()
    mode = AmplitudeMode(cfg.amplitude_mode)
    arms: Dict[str, Tuple[SceneGeometry, np.ndarray]] = {}
    ctx = None
    for layers in HEATMAP_LAYERS:
        layer_cfg = replace(cfg, layers=layers)
        ctx = prepare_trial(layer_cfg, np.random.default_rng(cfg.seed), ue_positions=ues)
        rep = optimize(layer_cfg.optimizer(), ctx.prop, ctx.target, ctx.fit_channel, model, mode,
                       rng=np.random.default_rng(cfg.seed))
        arms[f"L{layers}"] = (ctx.geometry, sim_response(rep.best_state, ctx.prop, model))
    arms["zf"] = (ctx.geometry, ctx.target.w_zf)
    return arms


def emit_heatmap(config: ExperimentConfig) -> Dict[str, str]:
    paths = {}
    for arm, (geometry, G) in heatmap_arms(config).items():
        grid: Heatmap = heatmap(geometry, G, HEATMAP_X, HEATMAP_Y, config.heatmap_nx, config.heatmap_ny,
                                coherent=config.coherent_heatmap)
        path = os.path.join(config.out_dir, f"heatmap_{arm}.dat")
        write_heatmap(grid, path)
        paths[arm] = path
    return paths


@dataclass
class GradcheckReport:
    max_rel_error: float
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradcheck(config: ExperimentConfig, corrupt: Optional[Callable[[np.ndarray], np.ndarray]] = None,
              step: float = 1e-6) -> GradcheckReport:
    """Analytic gradient vs central differences on a seeded M=4, L=2, K=S=2 instance."""
    small = replace(config, atoms_per_side=2, layers=2, bs_rows=1, bs_cols=2)
    rng = np.random.default_rng(config.seed)
    ctx = prepare_trial(small, rng)
    model = small.amplitude_model()
    state = SimState.random(rng, small.layers, small.atoms_per_layer, AmplitudeMode(small.amplitude_mode))
    analytic = gradient(state, ctx.prop, ctx.target, ctx.fit_channel, model)
    if corrupt is not None:
        analytic = corrupt(analytic)
    numeric = finite_difference_gradient(state, ctx.prop, ctx.target, ctx.fit_channel, model, step)
    return GradcheckReport(max_relative_error(analytic, numeric))


def circuit_check(config: ExperimentConfig, points: int = 201) -> CapacitanceSweep:
    """Varactor sweep of the configured meta-atom circuit at `freq_hz`."""
    caps = capacitance_grid(config.c_min_f, config.c_max_f, points)
    return phase_for_capacitance(config.circuit(), caps, config.freq_hz)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--profile", choices=["paper", "desk"], default="desk", help="default parameter set")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel trial workers")
    parser.add_argument("--power", choices=POWER_RULES, help="power split used by the sweeps")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="SIM wave-domain beamfocusing experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sweep-layers", "sum rate and NMSE versus the number of layers"),
        ("sweep-users", "sum rate and NMSE versus the number of users (S = K)"),
        ("compare-field", "near-field vs far-field sum rate with normalized gains"),
        ("heatmap", "beamfocusing energy grids for L = 1, 2, 4 and digital ZF"),
        ("gradcheck", "analytic gradient vs finite differences"),
    ):
        _common_flags(sub.add_parser(name, help=help_text))
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "out_dir": args.out,
        "workers": args.workers,
        "sweep_power": args.power,
    }
    return load_config(args.config, args.profile, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        config = config_from_args(args)
        print(f"🚀 {args.command} (profile={args.profile}, seed={config.seed}, trials={config.trials})")

        if args.command == "gradcheck":
            report = gradcheck(config)
            status = "✅" if report.passed else "❌"
            print(f"{status} max relative error {report.max_rel_error:.3e} (tolerance {report.tolerance:.0e})")
            sweep = circuit_check(config)
            print(f"📐 circuit vs coupled model at {config.freq_hz:.3g} Hz: max amplitude deviation "
                  f"{sweep.circuit_amplitude_deviation(config.amplitude_model()):.4f}, "
                  f"phase {sweep.phase.min():.3f}..{sweep.phase.max():.3f} rad")
            return 0 if report.passed else 1

        if args.command == "heatmap":
            paths = emit_heatmap(config)
            for arm, path in paths.items():
                print(f"💾 {arm}: {path}")
            print("✅ Done.")
            return 0

        runners = {
            "sweep-layers": sweep_layers,
            "sweep-users": sweep_users,
            "compare-field": compare_field,
        }
        results, table = runners[args.command](config)
        stem = args.command.replace("-", "_")
        if args.command == "compare-field":
            batches = {f"{stem}_{arm}": [r for r in results if r.arm == arm] for arm in ("near", "far")}
        else:
            batches = {stem: results}
        count = 0
        for name, batch in batches.items():
            trials_path = os.path.join(config.out_dir, f"{name}_trials.csv")
            count += write_trials_csv(batch, trials_path)
            print(f"💾 {trials_path}")
        summary_path = os.path.join(config.out_dir, f"{stem}_summary.csv")
        write_table(table, summary_path)
        print(f"💾 {summary_path}")
        print(f"📊 {count} trial rows, {len(table)} summary rows")
        failed = sum(1 for r in results if not r.ok)
        if failed:
            print(f"⚠️  {failed} rows failed; see the _errors.csv file")
        unconverged = sum(1 for r in results if r.ok and not r.power_converged)
        if unconverged:
            print(f"⚠️  {unconverged} rows stopped water-filling at the round limit")
        print("✅ Done.")
        return 0
    except WavefocusError as e:
        print(f"❌ Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
