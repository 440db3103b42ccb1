import logging
from typing import Dict, Optional

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

# Dedicated registry so library use never pollutes the process-global default.
REGISTRY = CollectorRegistry()

PATHS_TOTAL = Counter(
    "harnacklab_paths_total", "Simulated paths and walks by outcome", ["engine", "kind"], registry=REGISTRY
)
SCENARIO_TOTAL = Counter(
    "harnacklab_scenarios_total", "Scenario runs by result", ["scenario", "result"], registry=REGISTRY
)
SCENARIO_DURATION = Histogram(
    "harnacklab_scenario_seconds",
    "Wall time spent per scenario",
    ["scenario"],
    registry=REGISTRY,
    buckets=(0.1, 1.0, 10.0, 60.0, 300.0, 900.0, 1800.0, float("inf")),
)
SOLVER_ITERATIONS = Counter(
    "harnacklab_solver_iterations_total", "Relaxation sweeps performed", ["solver"], registry=REGISTRY
)


def log_paths(engine: str, counts: Dict[str, int]) -> None:
    for kind, value in counts.items():
        if value:
            PATHS_TOTAL.labels(engine=engine, kind=kind).inc(value)


def log_scenario(scenario: str, passed: bool, seconds: float) -> None:
    SCENARIO_TOTAL.labels(scenario=scenario, result="pass" if passed else "fail").inc()
    SCENARIO_DURATION.labels(scenario=scenario).observe(seconds)


def log_solver_iterations(solver: str, iterations: int) -> None:
    SOLVER_ITERATIONS.labels(solver=solver).inc(iterations)


def export_metrics(path: Optional[str]) -> bool:
    """Write the registry in prometheus text format; failures are logged, never raised."""
    if not path:
        return False
    try:
        write_to_textfile(path, REGISTRY)
        return True
    except Exception as e:
        logger.error(f"Failed to export metrics to {path}: {e}")
        return False
