"""
Brute-force parameter sweeps for mldenoise.

A ParamGrid names a denoiser and the values to try for each of its
parameters. run_sweep() runs the denoiser at every grid point, scores each
output against the noiseless reference, and picks the best converged row
per objective. Results are keyed by parameter tuple and assembled in
lexicographic grid order, so the report does not depend on worker count or
completion order.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from mldenoise.exceptions import SweepError
from mldenoise.image import Image, check_same_shape
from mldenoise.metrics import MetricsReport, evaluate
from mldenoise.noise import GaussianParams, GGParams
from mldenoise.solvers import METHODS, NoiseParams, SolverConfig, denoise

logger = logging.getLogger(__name__)

OBJECTIVE_DIRECTIONS: dict[str, str] = {
    "eps_b": "minimize",
    "eps_d": "minimize",
    "eps_e": "maximize",
    "pearson_lowpass": "maximize",
}
OBJECTIVES = tuple(OBJECTIVE_DIRECTIONS)

SWEEP_CSV_HEADER = "method,alpha,gamma,nu,delta,eps_b,eps_d,eps_e,converged,iterations"

# (alpha, gamma, nu, delta); the GG entries are None for other methods
Point = tuple[float, "float | None", "float | None", "float | None"]


def _as_values(name: str, values: object) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)  # type: ignore[attr-defined]
    except TypeError as e:
        raise ValueError(f"{name} must be a list of numbers") from e
    if not out:
        raise ValueError(f"{name} must not be empty")
    for v in out:
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must hold positive values, got {v}")
    return out


@dataclass(frozen=True)
class ParamGrid:
    """
    Parameter grid of one denoiser.

    Attributes:
        method: One of METHODS
        alpha_values: Regularization weights to try
        gamma_values: GG gamma values (mld_gg only)
        nu_values: GG nu values (mld_gg only)
        delta_values: GG delta values (mld_gg only)
        objective: Metric the grid is optimized for, one of OBJECTIVES
        direction: "minimize" or "maximize"; defaults to the objective's natural sense
    """

    method: str
    alpha_values: tuple[float, ...]
    gamma_values: tuple[float, ...] | None = None
    nu_values: tuple[float, ...] | None = None
    delta_values: tuple[float, ...] | None = None
    objective: str = "eps_b"
    direction: str | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(
                f"Unknown method: {self.method} (expected one of {', '.join(METHODS)})"
            )
        if self.objective not in OBJECTIVE_DIRECTIONS:
            raise ValueError(
                f"Unknown objective: {self.objective} (expected one of {', '.join(OBJECTIVES)})"
            )
        direction = self.direction or OBJECTIVE_DIRECTIONS[self.objective]
        if direction not in ("minimize", "maximize"):
            raise ValueError(f"direction must be 'minimize' or 'maximize', got {direction}")
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "alpha_values", _as_values("alpha_values", self.alpha_values))

        gg = (self.gamma_values, self.nu_values, self.delta_values)
        if self.method == "mld_gg":
            if any(v is None for v in gg):
                raise ValueError("mld_gg grids need gamma_values, nu_values and delta_values")
            for name in ("gamma_values", "nu_values", "delta_values"):
                object.__setattr__(self, name, _as_values(name, getattr(self, name)))
        elif any(v is not None for v in gg):
            raise ValueError(f"{self.method} grids take no gamma/nu/delta values")

    @property
    def size(self) -> int:
        n = len(self.alpha_values)
        if self.method == "mld_gg":
            assert self.gamma_values and self.nu_values and self.delta_values
            n *= len(self.gamma_values) * len(self.nu_values) * len(self.delta_values)
        return n

    def points(self) -> list[Point]:
        """All grid points in lexicographic order."""
        alphas = sorted(set(self.alpha_values))
        if self.method != "mld_gg":
            return [(a, None, None, None) for a in alphas]
        assert self.gamma_values and self.nu_values and self.delta_values
        return list(
            itertools.product(
                alphas,
                sorted(set(self.gamma_values)),
                sorted(set(self.nu_values)),
                sorted(set(self.delta_values)),
            )
        )

    def thinned(self, stride: int) -> ParamGrid:
        """Keep every stride-th gamma, nu and delta value (alpha is kept whole)."""
        if stride < 1:
            raise ValueError(f"stride must be at least 1, got {stride}")
        if stride == 1 or self.method != "mld_gg":
            return self
        assert self.gamma_values and self.nu_values and self.delta_values
        return dataclasses.replace(
            self,
            gamma_values=tuple(sorted(self.gamma_values))[::stride],
            nu_values=tuple(sorted(self.nu_values))[::stride],
            delta_values=tuple(sorted(self.delta_values))[::stride],
        )


def paper_grids() -> tuple[ParamGrid, ParamGrid]:
    """
    The published search grids.

    Returns:
        (mld_grid, tvl1_grid): alpha in {0.5, 0.75, 1, 2} with gamma, nu, delta
        in {0.1 i, i = 1..20} (32000 points), and alpha in {0.01 i, i = 1..100}
    """
    b_values = tuple(round(0.1 * i, 10) for i in range(1, 21))
    mld = ParamGrid(
        method="mld_gg",
        alpha_values=(0.5, 0.75, 1.0, 2.0),
        gamma_values=b_values,
        nu_values=b_values,
        delta_values=b_values,
    )
    tvl1 = ParamGrid(
        method="tvl1",
        alpha_values=tuple(round(0.01 * i, 10) for i in range(1, 101)),
    )
    return mld, tvl1


@dataclass
class SweepRow:
    """
    One evaluated grid point.

    Attributes:
        method: Denoiser name
        alpha: Regularization weight
        gamma: GG gamma (None for other methods)
        nu: GG nu (None for other methods)
        delta: GG delta (None for other methods)
        metrics: Error functions of the output (NaN where undefined)
        converged: Whether the solver met its stopping criterion
        iterations: Solver iterations
        status: Solver status string
    """

    method: str
    alpha: float
    gamma: float | None
    nu: float | None
    delta: float | None
    metrics: MetricsReport
    converged: bool
    iterations: int
    status: str = "converged"

    @property
    def point(self) -> Point:
        return (self.alpha, self.gamma, self.nu, self.delta)

    def value(self, objective: str) -> float:
        v = getattr(self.metrics, objective)
        return math.nan if v is None else float(v)


@dataclass
class SweepReport:
    """
    All rows of a sweep and the best row per objective.

    Attributes:
        method: Denoiser name
        objective: The grid's primary objective
        rows: One row per grid point, lexicographic order
        best: Objective name -> index into rows (None if no row qualifies)
    """

    method: str
    objective: str
    rows: list[SweepRow]
    best: dict[str, int | None] = field(default_factory=dict)

    @property
    def best_row(self) -> SweepRow | None:
        index = self.best.get(self.objective)
        return None if index is None else self.rows[index]

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return {
            "method": self.method,
            "objective": self.objective,
            "best": dict(self.best),
            "rows": [
                {
                    "alpha": r.alpha,
                    "gamma": r.gamma,
                    "nu": r.nu,
                    "delta": r.delta,
                    **r.metrics.to_dict(),
                    "converged": r.converged,
                    "iterations": r.iterations,
                }
                for r in self.rows
            ],
        }


def select_best(rows: list[SweepRow], objective: str, direction: str) -> int | None:
    """
    Index of the extremal converged row, or None if no row qualifies.

    Rows with undefined (NaN) values are skipped. Rows must be in
    lexicographic parameter order; ties go to the first, i.e. smallest, tuple.
    """
    best: int | None = None
    best_value = math.nan
    for i, row in enumerate(rows):
        if not row.converged:
            continue
        v = row.value(objective)
        if not math.isfinite(v):
            continue
        if best is None or (v < best_value if direction == "minimize" else v > best_value):
            best, best_value = i, v
    return best


def _noise_params(method: str, point: Point) -> NoiseParams:
    if method == "mld_gg":
        _, gamma, nu, delta = point
        assert gamma is not None and nu is not None and delta is not None
        return GGParams(gamma, nu, delta)
    if method == "mld_gaussian":
        return GaussianParams()
    return None


def evaluate_point(
    ref: Image, noisy: Image, method: str, point: Point, cfg: SolverConfig
) -> SweepRow:
    """Denoise at one grid point and score the result."""
    point_cfg = dataclasses.replace(cfg, alpha=point[0])
    result = denoise(noisy, method, _noise_params(method, point), point_cfg)
    metrics = evaluate(ref, result.image, noisy=noisy, undefined_as_nan=True)
    return SweepRow(
        method=method,
        alpha=point[0],
        gamma=point[1],
        nu=point[2],
        delta=point[3],
        metrics=metrics,
        converged=result.converged,
        iterations=result.iterations,
        status=result.status,
    )


# Per-process state set by the pool initializer
_worker_state: dict[str, object] = {}


def _init_worker(ref: Image, noisy: Image, method: str, cfg: SolverConfig) -> None:
    _worker_state.update(ref=ref, noisy=noisy, method=method, cfg=cfg)


def _run_point(point: Point) -> tuple[Point, SweepRow]:
    row = evaluate_point(
        _worker_state["ref"],  # type: ignore[arg-type]
        _worker_state["noisy"],  # type: ignore[arg-type]
        _worker_state["method"],  # type: ignore[arg-type]
        point,
        _worker_state["cfg"],  # type: ignore[arg-type]
    )
    return point, row


def run_sweep(
    ref: Image,
    noisy: Image,
    grid: ParamGrid,
    cfg: SolverConfig,
    jobs: int = 1,
) -> SweepReport:
    """
    Run a denoiser over every point of a grid.

    Args:
        ref: Noiseless reference
        noisy: Denoiser input
        grid: Parameter grid; its alpha values override cfg.alpha
        cfg: Solver settings shared by all points
        jobs: Worker processes (1 runs in-process)

    Returns:
        SweepReport with rows in lexicographic grid order

    Raises:
        DimensionError: If ref and noisy differ in shape
        SweepError: If the grid is empty or no row converged; the report is
            attached to the exception
    """
    check_same_shape(ref, noisy, "reference and noisy image")
    points = grid.points()
    if not points:
        raise SweepError("Parameter grid is empty")
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")

    logger.info("Sweeping %s over %d points with %d job(s)", grid.method, len(points), jobs)
    results: dict[Point, SweepRow] = {}
    if jobs == 1:
        for i, point in enumerate(points, 1):
            results[point] = evaluate_point(ref, noisy, grid.method, point, cfg)
            logger.debug("[%d/%d] %s done", i, len(points), point)
    else:
        chunksize = max(1, len(points) // (jobs * 8))
        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_init_worker,
            initargs=(ref, noisy, grid.method, cfg),
        ) as pool:
            for i, (point, row) in enumerate(pool.map(_run_point, points, chunksize=chunksize), 1):
                results[point] = row
                logger.debug("[%d/%d] %s done", i, len(points), point)

    rows = [results[p] for p in points]
    best: dict[str, int | None] = {}
    for objective in OBJECTIVES:
        direction = grid.direction if objective == grid.objective else None
        best[objective] = select_best(rows, objective, direction or OBJECTIVE_DIRECTIONS[objective])
    report = SweepReport(method=grid.method, objective=grid.objective, rows=rows, best=best)

    n_converged = sum(1 for r in rows if r.converged)
    if n_converged == 0:
        raise SweepError(
            f"No run converged in the {grid.method} sweep ({len(rows)} points)", report
        )
    if n_converged < len(rows):
        logger.warning("%d of %d runs did not converge", len(rows) - n_converged, len(rows))
    if report.best_row is None:
        raise SweepError(f"No converged row has a defined {grid.objective}", report)
    return report


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def format_sweep_csv(report: SweepReport) -> str:
    """
    Format a report as CSV.

    One row per grid point under SWEEP_CSV_HEADER, then one
    ``# best:<objective>=<row index>`` comment per objective (``none`` if
    no row qualifies).
    """
    lines = [SWEEP_CSV_HEADER]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    r.method,
                    _fmt(r.alpha),
                    _fmt(r.gamma),
                    _fmt(r.nu),
                    _fmt(r.delta),
                    _fmt(r.metrics.eps_b),
                    _fmt(r.metrics.eps_d),
                    _fmt(r.metrics.eps_e),
                    "true" if r.converged else "false",
                    str(r.iterations),
                ]
            )
        )
    for objective in OBJECTIVES:
        index = report.best.get(objective)
        lines.append(f"# best:{objective}={'none' if index is None else index}")
    return "\n".join(lines) + "\n"


def format_best_summary(report: SweepReport) -> str:
    """Human-readable best row per objective, one line each."""
    lines = []
    for objective in OBJECTIVES:
        index = report.best.get(objective)
        if index is None:
            lines.append(f"{objective}: no converged row")
            continue
        r = report.rows[index]
        params = f"alpha={_fmt(r.alpha)}"
        if r.gamma is not None:
            params += f" gamma={_fmt(r.gamma)} nu={_fmt(r.nu)} delta={_fmt(r.delta)}"
        lines.append(f"{objective}: {params} value={_fmt(r.value(objective))} (row {index})")
    return "\n".join(lines)


def parse_sweep_csv(content: str) -> SweepReport:
    """
    Parse CSV written by format_sweep_csv().

    Raises:
        ValueError: If the header or a row is malformed
    """
    lines = [line for line in content.splitlines() if line.strip()]
    if not lines or lines[0] != SWEEP_CSV_HEADER:
        raise ValueError("Not a sweep CSV (header mismatch)")

    def opt(value: str) -> float | None:
        return float(value) if value else None

    rows: list[SweepRow] = []
    best: dict[str, int | None] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("# best:"):
            objective, _, index = line[len("# best:") :].partition("=")
            best[objective] = None if index == "none" else int(index)
            continue
        fields = line.split(",")
        if len(fields) != 10:
            raise ValueError(f"line {lineno}: expected 10 fields, got {len(fields)}")
        method, alpha, gamma, nu, delta, b, d, e, converged, iterations = fields
        rows.append(
            SweepRow(
                method=method,
                alpha=float(alpha),
                gamma=opt(gamma),
                nu=opt(nu),
                delta=opt(delta),
                metrics=MetricsReport(float(b), float(d), float(e)),
                converged=converged == "true",
                iterations=int(iterations),
                status="converged" if converged == "true" else "not_converged",
            )
        )
    method = rows[0].method if rows else ""
    return SweepReport(method=method, objective="eps_b", rows=rows, best=best)


def read_sweep_csv(file_path: Path | str) -> SweepReport:
    """Read a sweep CSV file.

    Raises:
        FileNotFoundError: If the file doesn't exist
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"Sweep CSV not found: {file_path}")
    return parse_sweep_csv(file_path.read_text())
