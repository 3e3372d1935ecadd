"""Seeded SNR sweeps comparing instantaneous and pathwise CSIT designs.

Every (geometry, snr, algorithm) cell draws from its own SeedSequence built
from (seed, geometry, snr index, algorithm id), so cells can run in any order
or in separate processes and still give identical rows.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Tuple

import numpy as np

from app.core.channel import Scenario, random_scenario, sample_realization
from app.core.exceptions import BeamformAppException
from app.core.optim import ALGORITHMS, PERFECT_CSIT, optimize
from app.core.rate import monte_carlo_ewsr
from app.harness.config import load_scenario
from app.schemas.config import SweepConfig
from app.schemas.result import SweepRow

logger = logging.getLogger(__name__)

ALGORITHM_IDS = {name: i for i, name in enumerate(ALGORITHMS)}


@dataclass(frozen=True)
class SweepCell:
    geometry: int
    snr_index: int
    snr_db: float
    algorithm: str


def db_to_power(snr_db: float) -> float:
    """Per-BS budget for unit-variance noise and unit per-link energy."""
    return float(10.0 ** (snr_db / 10.0))


def cell_seed(seed: int, cell: SweepCell) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, cell.geometry, cell.snr_index, ALGORITHM_IDS[cell.algorithm]])


def geometry_count(config: SweepConfig) -> int:
    # a scenario file fixes the geometry
    return 1 if config.scenario_file else config.geometry_draws


def build_geometry(config: SweepConfig, geometry: int, fixed: Optional[Scenario] = None) -> Scenario:
    """The file scenario (fixed, when already loaded) or the seeded draw of this geometry index."""
    if fixed is not None:
        return fixed
    if config.scenario_file:
        return load_scenario(config.scenario_file)
    return random_scenario(
        n_cells=config.cells,
        users_per_cell=config.users_per_cell,
        n_paths=config.paths,
        nt=config.nt,
        nr=config.nr,
        power=1.0,
        rng=np.random.default_rng([config.seed, geometry]),
        streams=config.streams,
        intercell_gain=config.intercell_gain,
    )


def sweep_cells(config: SweepConfig) -> List[SweepCell]:
    """Cells in (geometry, snr, algorithm) order."""
    return [
        SweepCell(geometry=g, snr_index=s, snr_db=snr, algorithm=algo)
        for g in range(geometry_count(config))
        for s, snr in enumerate(config.snr_db)
        for algo in config.algorithms
    ]


def _failed_row(cell: SweepCell) -> SweepRow:
    nan = float("nan")
    return SweepRow(
        snr_db=cell.snr_db, algorithm=cell.algorithm, geometry_draw=cell.geometry,
        objective_nats=nan, objective_bits=nan, ewsr_mc_mean=nan, ewsr_mc_stderr=nan,
        iterations=0, kkt_residual=nan, converged=False,
    )


def _run_icsit(config: SweepConfig, scenario: Scenario, cell: SweepCell) -> SweepRow:
    """Genie design per realization; the achieved WSR is averaged over realizations."""
    channel_seq, init_seq = cell_seed(config.seed, cell).spawn(2)
    channel_rng = np.random.default_rng(channel_seq)
    init_rng = np.random.default_rng(init_seq)

    values, iterations, residuals = [], [], []
    all_converged = True
    for trial in range(config.trials):
        h = sample_realization(scenario, channel_rng)
        try:
            result = optimize(cell.algorithm, scenario, h, init=config.init, tol=config.tol,
                              max_iter=config.max_iter, rng=init_rng)
        except BeamformAppException as e:
            logger.warning("%s trial %d at %.1f dB (geometry %d) failed: %s",
                           cell.algorithm, trial, cell.snr_db, cell.geometry, e.message)
            all_converged = False
            continue
        values.append(result.objective)
        iterations.append(result.iterations)
        residuals.append(result.kkt_residual)
        all_converged = all_converged and result.converged

    if not values:
        return _failed_row(cell)
    values = np.asarray(values)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return SweepRow(
        snr_db=cell.snr_db, algorithm=cell.algorithm, geometry_draw=cell.geometry,
        objective_nats=mean, objective_bits=mean / np.log(2.0),
        ewsr_mc_mean=mean, ewsr_mc_stderr=stderr,
        iterations=int(round(float(np.mean(iterations)))),
        kkt_residual=float(np.max(residuals)),
        converged=all_converged,
    )


def _run_pwcsit(config: SweepConfig, scenario: Scenario, cell: SweepCell) -> SweepRow:
    """One phase-independent design per geometry, scored by Monte-Carlo over phases."""
    mc_seq, init_seq = cell_seed(config.seed, cell).spawn(2)
    try:
        result = optimize(cell.algorithm, scenario, init=config.init, tol=config.tol,
                          max_iter=config.max_iter, rng=np.random.default_rng(init_seq))
        estimate = monte_carlo_ewsr(scenario, result.beams, config.trials, seed=int(mc_seq.generate_state(1)[0]))
    except BeamformAppException as e:
        logger.warning("%s at %.1f dB (geometry %d) failed: %s", cell.algorithm, cell.snr_db, cell.geometry, e.message)
        return _failed_row(cell)
    return SweepRow(
        snr_db=cell.snr_db, algorithm=cell.algorithm, geometry_draw=cell.geometry,
        objective_nats=result.objective, objective_bits=result.objective / np.log(2.0),
        ewsr_mc_mean=estimate.mean, ewsr_mc_stderr=estimate.stderr,
        iterations=result.iterations, kkt_residual=result.kkt_residual,
        converged=result.converged,
    )


def run_cell(config: SweepConfig, cell: SweepCell, fixed: Optional[Scenario] = None) -> SweepRow:
    scenario = build_geometry(config, cell.geometry, fixed).with_power(db_to_power(cell.snr_db))
    logger.debug("cell %s: entropy %s", cell, cell_seed(config.seed, cell).entropy)
    if cell.algorithm in PERFECT_CSIT:
        row = _run_icsit(config, scenario, cell)
    else:
        row = _run_pwcsit(config, scenario, cell)
    logger.info("geometry %d, %.1f dB, %s: %.6g nats (MC %.6g +- %.2g)", cell.geometry, cell.snr_db,
                cell.algorithm, row.objective_nats, row.ewsr_mc_mean, row.ewsr_mc_stderr)
    return row


def _order(config: SweepConfig, row: SweepRow) -> Tuple[int, int, int]:
    return row.geometry_draw, config.snr_db.index(row.snr_db), config.algorithms.index(row.algorithm)


def run_sweep(config: SweepConfig) -> List[SweepRow]:
    cells = sweep_cells(config)
    fixed = load_scenario(config.scenario_file) if config.scenario_file else None
    run = partial(run_cell, config, fixed=fixed)
    logger.info("sweep: %d cells, %d trials each, %d worker(s)", len(cells), config.trials, config.workers)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(cell) for cell in cells]
    rows.sort(key=partial(_order, config))
    logger.info("sweep finished: %d rows, %d not converged", len(rows), sum(not r.converged for r in rows))
    return rows
