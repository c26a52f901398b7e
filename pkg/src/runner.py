import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config import ConfigError, ScenarioConfig, apply_overrides, read_config_file
from presets import get_preset
from report_writer import ReportWriter
from simulation import run_simulation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def load_scenario_data(scenario: Optional[str] = None, config_path: Optional[str] = None) -> Dict[str, Any]:
    if bool(scenario) == bool(config_path):
        raise ConfigError(["<cli>: pass exactly one of --scenario or --config"])
    if scenario:
        try:
            return get_preset(scenario)
        except ValueError as e:
            raise ConfigError([f"<cli>.scenario: {e}"])
    return read_config_file(config_path)


def cli_overrides(seed: Optional[int], duration: Optional[float], overrides: Sequence[str]) -> List[str]:
    applied = list(overrides)
    if seed is not None:
        applied.append(f"seed={seed}")
    if duration is not None:
        applied.append(f"duration={duration!r}")
    return applied


def build_config(
    data: Dict[str, Any],
    seed: Optional[int] = None,
    duration: Optional[float] = None,
    overrides: Sequence[str] = ()
) -> Tuple[ScenarioConfig, List[str]]:
    applied = cli_overrides(seed, duration, overrides)
    apply_overrides(data, applied)
    return ScenarioConfig.from_dict(data), applied


def run(config: ScenarioConfig, out_dir: str, overrides: Optional[List[str]] = None) -> int:
    try:
        result = run_simulation(config)
        ReportWriter(out_dir).write(result, overrides)
    except OSError as e:
        logger.error(f"Error: cannot write results to {out_dir}: {e}")
        return EXIT_RUNTIME_ERROR
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


def _run_sweep_point(data: Dict[str, Any], out_dir: str, overrides: List[str]) -> int:
    try:
        config = ScenarioConfig.from_dict(data)
    except ConfigError as e:
        logger.error(f"Error: {e}")
        return EXIT_CONFIG_ERROR
    return run(config, out_dir, overrides)


def run_sweep(
    data: Dict[str, Any],
    param: str,
    values: Sequence[str],
    out_dir: str,
    jobs: int = 1,
    overrides: Sequence[str] = ()
) -> int:
    points = []
    for value in values:
        point_overrides = list(overrides) + [f"{param}={value}"]
        point_data = apply_overrides(copy.deepcopy(data), point_overrides)
        # validate every point up front so a typo fails before any run starts
        ScenarioConfig.from_dict(copy.deepcopy(point_data))
        points.append((point_data, os.path.join(out_dir, f"{param}={value}"), point_overrides))

    logger.info(f"Sweeping {param} over {len(points)} value(s) with {jobs} worker(s)")
    if jobs <= 1:
        statuses = [_run_sweep_point(*point) for point in points]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(_run_sweep_point, *zip(*points)))

    for (_, point_dir, _), status in zip(points, statuses):
        if status == EXIT_OK:
            logger.info(f"  - {point_dir}: ok")
        else:
            logger.warning(f"  - {point_dir}: failed ({status})")
    return max(statuses, default=EXIT_OK)
