"""
TDPT Command Line

Configuration-driven experiment runner:
- simulate: BEM-generated MSR data (clean and noisy realizations)
- tdpt: least-squares FDPT recovery and TDPT aggregation, with error curves
- reconstruct: size, contrast, equivalent ellipse and optional shape optimization
- pipeline: all three in one process

Library errors map to exit codes through TdptError.exit_code.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from tdpt import __version__
from tdpt.config import ExperimentConfig, load_config
from tdpt.core.geometry import Inclusion, boundary_distance, make_shape
from tdpt.core.polarization_tensors import FrequencyGrid, TdptTable, compute_tdpt, converged_fdpt
from tdpt.errors import ConfigurationError, GridMismatchError, TdptError
from tdpt.forward.forward_model import MsrDataset, SourceReceiverLayout, add_measurement_noise, synthesize_msr
from tdpt.inverse.estimators import equivalent_ellipse, estimate_size_and_contrast
from tdpt.inverse.fdpt_recovery import reconstruct_fdpt, reconstruct_tdpt, tdpt_error_curves
from tdpt.inverse.shape_optimizer import OptimizationSchedule, optimize_shape
from tdpt.utils.logging_setup import setup_logging
from tdpt.utils.parallel import parallel_map
from tdpt.utils.serialization import (
    load_msr_dataset,
    load_tdpt_table,
    save_boundary,
    save_msr_dataset,
    save_tdpt_table,
    write_csv,
    write_json,
)

logger = logging.getLogger("TDPT.CLI")

ESTIMATOR_ORDER = 1


def build_inclusion(config: ExperimentConfig) -> Inclusion:
    shape = config.shape
    base = make_shape(
        shape.kind,
        nodes=shape.nodes,
        a=shape.a,
        b=shape.b,
        rotation=shape.rotation,
        petals=shape.petals,
        amplitude=shape.amplitude,
    )
    inc = config.inclusion
    return Inclusion(base=base, center=np.asarray(inc.center), epsilon=inc.epsilon, contrast=inc.contrast)


def build_layout(config: ExperimentConfig) -> SourceReceiverLayout:
    layout = config.layout
    if layout.geometry == "square":
        return SourceReceiverLayout.square(layout.count, layout.half_side)
    return SourceReceiverLayout.circle(layout.count, layout.radius)


def build_grid(config: ExperimentConfig) -> FrequencyGrid:
    freq = config.frequency
    return FrequencyGrid.build(freq.rho, freq.half_count, freq.rho0)


def time_grid(config: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.0, config.frequency.t_max, config.frequency.t_points)


def cmd_simulate(config: ExperimentConfig) -> Path:
    """Write clean and noisy MSR datasets under <output>/simulate."""
    root = config.output_path / "simulate"
    inclusion = build_inclusion(config)
    layout = build_layout(config)
    frequencies = build_grid(config).omegas
    clean = synthesize_msr(layout, inclusion, frequencies, threads=config.system.threads)
    save_msr_dataset(clean, root / "clean")

    noise = config.noise
    if noise.percent > 0:
        for r in range(noise.realizations):
            noisy = add_measurement_noise(clean, noise.percent, noise.seed, realization=r)
            save_msr_dataset(noisy, root / "noisy" / f"r{r:03d}")
    save_boundary(inclusion.boundary, root / "boundary_true.csv")
    logger.info(f"✅ Simulation written to {root}")
    return root


def _load_datasets(config: ExperimentConfig) -> List[MsrDataset]:
    root = config.output_path / "simulate"
    noisy = sorted((root / "noisy").glob("r*/msr.json")) if config.noise.percent > 0 else []
    paths = noisy or [root / "clean" / "msr.json"]
    if not paths[0].exists():
        raise GridMismatchError(f"No MSR dataset under {root}; run 'simulate' first")
    return [load_msr_dataset(path) for path in paths]


def _recover(datasets: Sequence[MsrDataset], config: ExperimentConfig, order: int, grid: FrequencyGrid) -> TdptTable:
    center = np.asarray(config.inclusion.center)
    expected = grid.omegas
    realizations = []
    for dataset in datasets:
        if dataset.frequencies.size != expected.size or not np.allclose(dataset.frequencies, expected):
            raise GridMismatchError("Dataset frequencies do not match the configured band")
        realizations.append(
            reconstruct_fdpt(dataset, center, order, cutoff=config.svd_cutoff, threads=config.system.threads)
        )
    payload = realizations[0] if len(realizations) == 1 else realizations
    return reconstruct_tdpt(payload, time_grid(config), grid=grid)


def reference_tdpt(config: ExperimentConfig, order: int, grid: FrequencyGrid) -> TdptTable:
    """Library-computed TDPTs of the configured inclusion on the measured grid."""
    inclusion = build_inclusion(config)
    def table(omega: float):
        return converged_fdpt(
            inclusion.base, inclusion.epsilon, float(omega), inclusion.contrast, order, max_order=order
        )

    tables = parallel_map(table, list(grid.omegas), config.system.threads)
    return compute_tdpt(tables, time_grid(config), grid=grid)


def cmd_tdpt(config: ExperimentConfig) -> Path:
    """Recover TDPTs (order 1 for the estimates and the configured order) under <output>/tdpt."""
    root = config.output_path / "tdpt"
    datasets = _load_datasets(config)
    grid = build_grid(config)
    orders = sorted({ESTIMATOR_ORDER, config.tensor.order})
    for order in orders:
        tdpt = _recover(datasets, config, order, grid)
        save_tdpt_table(tdpt, root, stem=f"tdpt_n{order}")
        noiseless = config.noise.percent == 0
        if noiseless and config.tensor.error_curves and order == ESTIMATOR_ORDER:
            curves = tdpt_error_curves(tdpt, reference_tdpt(config, order, grid))
            write_csv(curves, root / f"error_curves_n{order}.csv")
            logger.info(f"Relative TDPT error at T={curves['T'].iloc[-1]:g}: {curves['relErr'].iloc[-1]:.3e}")
    logger.info(f"✅ TDPTs written to {root}")
    return root


def cmd_reconstruct(config: ExperimentConfig) -> Path:
    """Estimates and optional shape optimization; writes <output>/reconstruct/report.json."""
    root = config.output_path / "reconstruct"
    tdpt_dir = config.output_path / "tdpt"
    measured = load_tdpt_table(tdpt_dir / f"tdpt_n{ESTIMATOR_ORDER}.json")
    inclusion = build_inclusion(config)
    center = inclusion.center

    estimate = estimate_size_and_contrast(
        measured,
        prior_volume=config.tensor.prior_volume,
        size_source=config.tensor.size_source,
    )
    ellipse = equivalent_ellipse(measured, estimate.volume, estimate.contrast, center)
    write_csv(
        pd.DataFrame({"t": estimate.t, "contrast": estimate.contrast_samples}),
        root / "contrast_per_t.csv",
    )
    if estimate.volume_samples.size:
        write_csv(pd.DataFrame({"t": estimate.volume_t, "volume": estimate.volume_samples}), root / "volume_per_t.csv")

    truth = inclusion.boundary
    ellipse_curve = ellipse.curve(config.shape.nodes)
    save_boundary(truth, root / "boundary_true.csv")
    save_boundary(ellipse_curve, root / "boundary_ellipse.csv")
    ellipse_distance = boundary_distance(ellipse_curve, truth)

    report: Dict = {
        "version": __version__,
        "volume": estimate.volume,
        "size_source": estimate.size_source,
        "contrast": estimate.contrast,
        "true_volume": inclusion.volume,
        "true_contrast": inclusion.contrast,
        "ellipse": {"a": ellipse.a, "b": ellipse.b, "theta": ellipse.theta, "center": list(ellipse.center)},
        "ellipse_distance": {"hausdorff": ellipse_distance.hausdorff, "l2": ellipse_distance.l2},
        "optimizer": None,
    }

    if config.optimizer.enabled:
        order = config.tensor.order
        shape_measured = load_tdpt_table(tdpt_dir / f"tdpt_n{order}.json")
        opt = config.optimizer
        schedule = OptimizationSchedule(
            k_max=opt.k_max,
            iterations=opt.iterations,
            tolerance=opt.tolerance,
            max_halvings=opt.max_halvings,
            damping=opt.damping,
            working_frequencies=opt.working_frequencies,
            working_t_points=opt.working_t_points,
            nodes=config.shape.nodes,
        )
        result = optimize_shape(shape_measured, ellipse, estimate.contrast, schedule, threads=config.system.threads)
        for i, curve in enumerate(result.iterates):
            save_boundary(curve, root / "iterates" / f"boundary_{i:04d}.csv")
        save_boundary(result.curve, root / "boundary_final.csv")
        final_distance = boundary_distance(result.curve, truth)
        report["optimizer"] = {
            "history": [{"order": k, "J": value} for k, value in result.history],
            "iterations": len(result.iterates),
            "final_distance": {"hausdorff": final_distance.hausdorff, "l2": final_distance.l2},
            "distance_ratio": final_distance.l2 / ellipse_distance.l2 if ellipse_distance.l2 > 0 else None,
            "final_boundary": "boundary_final.csv",
        }

    path = write_json(report, root / "report.json")
    logger.info(f"✅ Report written to {path}")
    return path


def cmd_pipeline(config: ExperimentConfig) -> Path:
    cmd_simulate(config)
    cmd_tdpt(config)
    return cmd_reconstruct(config)


COMMANDS = {
    "simulate": cmd_simulate,
    "tdpt": cmd_tdpt,
    "reconstruct": cmd_reconstruct,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdpt",
        description="Time-dependent polarization tensor imaging experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS), help="Experiment stage to run")
    parser.add_argument("--config", default=None, help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None, help="Noise seed (overrides the configuration)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads")
    parser.add_argument("--figure", "--paper-figure", dest="figure", type=int, choices=[3, 4, 5], default=None,
                        help="Use the preset of a standard experiment")
    parser.add_argument("--log-level", default=None, help="Override the configured log level")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: Dict = {}
    if args.seed is not None:
        overrides["noise"] = {"seed": args.seed}
    system: Dict = {}
    if args.threads is not None:
        system["threads"] = args.threads
    if args.log_level is not None:
        system["log_level"] = args.log_level
    if system:
        overrides["system"] = system

    try:
        config = load_config(args.config, figure=args.figure, **overrides)
    except TdptError as e:
        setup_logging("INFO")
        logger.error(f"❌ {e}")
        return e.exit_code

    setup_logging(config.system.log_level, config.system.structured_logging)
    logger.info(f"TDPT v{__version__}: running '{args.command}' into {config.output_path}")
    try:
        config.output_path.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](config)
    except TdptError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        # unwritable output locations exit as configuration errors
        logger.error(f"❌ Output is not writable: {e}")
        return ConfigurationError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
