"""Recipes that turn resolved settings into result tables.

Each command has a defaults mapping and a runner returning records plus metadata.
The CLI and the sweep workers share :func:`execute`, which adds the common metadata
and writes the file.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Any

import numpy as np

from .config import resolve_settings
from .exceptions import (
    ConfigError,
    DomainError,
    NumericalContractError,
    QbsenseError,
    exit_code_for,
)
from .fockspace import TwoModeSpace, enumerate_sector, number_operator
from .metrics import qfi_timeseries
from .model import (
    BatteryModelParams,
    CircuitParams,
    bare_hamiltonian,
    build_hamiltonian,
    charge_operator,
    rabi_frequency,
    two_level_populations,
)
from .models import ARTIFACT_VERSION, Config, ManifestEntry, OutputFormat, SweepJob
from .output import check_unique_outputs, write_table
from .propagate import evolve_many, expectation, fock_state
from .protocol import ProtocolParams, run_protocol, sweep_phi
from .spinoat import charging_power_exponent, fit_power_law, parallel_control, scaling_rows
from .squeezeopt import SQUEEZE_PRESETS, SqueezeOptions, default_tgrid, squeeze_trajectory
from .utils import format_complex, get_timestamp, log_spaced_sizes, parse_complex

logger = logging.getLogger(__name__)

Settings = dict[str, Any]


@dataclass(frozen=True)
class RecipeResult:
    """Rows and metadata produced by one recipe run."""

    records: list[dict[str, Any]]
    metadata: dict[str, Any]
    leakage_flagged: bool = False
    summary: str = ""


MODEL_DEFAULTS: Settings = {
    "n": 4,
    "omega0": 1.0,
    "g": 1.0,
    "g_n": None,
    "e_j": None,
    "lambda1": None,
    "lambda2": None,
}


def model_from_settings(s: Settings, Q: int) -> BatteryModelParams:
    """Battery model from direct, QSL-matched or circuit coupling settings.

    Raises:
        ConfigError: If more than one coupling source is given
    """
    n = int(s["n"])
    omega0 = float(s["omega0"])
    circuit_keys = ("e_j", "lambda1", "lambda2")
    circuit = [s.get(k) for k in circuit_keys]
    if s.get("g_n") is not None and any(v is not None for v in circuit):
        raise ConfigError("Give either g_n or circuit parameters (e_j, lambda1, lambda2)")
    if any(v is not None for v in circuit):
        if any(v is None for v in circuit):
            raise ConfigError("Circuit coupling needs all of e_j, lambda1 and lambda2")
        e_j, lambda1, lambda2 = (float(v) for v in circuit)
        return BatteryModelParams.from_circuit(CircuitParams(e_j, lambda1, lambda2, n), omega0)
    if s.get("g_n") is not None:
        return BatteryModelParams(n=n, omega0=omega0, g_n=float(s["g_n"]))
    return BatteryModelParams.from_qsl(float(s["g"]), n, Q, omega0)


def _model_metadata(model: BatteryModelParams) -> dict[str, Any]:
    return {"g_n": model.g_n, "g_n_provenance": model.provenance, "model": model.to_dict()}


def _time_grid(t_max: float | None, fallback: float, points: int) -> np.ndarray:
    end = t_max if t_max is not None else fallback
    if not math.isfinite(end) or end <= 0:
        raise DomainError(f"Time window must be positive and finite, got {end}; set t_max")
    if points < 2:  # noqa: PLR2004
        raise DomainError(f"Time grid needs at least 2 points, got {points}")
    return np.linspace(0.0, end, points)


CHARGE_DEFAULTS: Settings = {**MODEL_DEFAULTS, "q": 4, "points": 401, "t_max": None}


def run_charge(s: Settings) -> RecipeResult:
    """Rabi charging in one charge sector from ``|1, Q - n>``."""
    n, Q = int(s["n"]), int(s["q"])
    model = model_from_settings(s, Q)
    rabi = rabi_frequency(n, Q, model.g_n, model.omega0)
    tgrid = _time_grid(s["t_max"], 2 * rabi.t_c, int(s["points"]))

    sector = enumerate_sector(n, Q)
    n_b0 = Q - n
    if n_b0 >= n:
        logger.warning("Sector n=%d, Q=%d is not a two-level charging sector", n, Q)
    initial = fock_state(1, n_b0, sector)
    states = evolve_many(initial, build_hamiltonian(model, 1, sector), tgrid)
    charge = charge_operator(n, sector)
    bare = bare_hamiltonian(model, sector)
    n_b = number_operator(sector, "b")
    p_initial_exact, p_final_exact = two_level_populations(n, Q, model.g_n, tgrid)

    records = [
        {
            "t": float(t),
            "p_initial": state.probability(1, n_b0),
            "p_final": state.probability(0, Q),
            "p_initial_analytic": float(p_initial_exact[i]),
            "p_final_analytic": float(p_final_exact[i]),
            "n_b": expectation(n_b, state).real,
            "charge": expectation(charge, state).real,
            "bare_energy": expectation(bare, state).real,
        }
        for i, (t, state) in enumerate(zip(tgrid, states, strict=True))
    ]
    metadata = {
        **_model_metadata(model),
        "basis": {"kind": "sector", "n": n, "Q": Q, "dim": sector.dim},
        "omega_q": rabi.omega_q,
        "t_c": rabi.t_c,
        "t_1": rabi.t_1,
    }
    summary = f"Omega_Q = {rabi.omega_q:.6g}, t_c = {rabi.t_c:.6g}"
    return RecipeResult(records, metadata, summary=summary)


QFI_DEFAULTS: Settings = {**MODEL_DEFAULTS, "q": 4, "points": 401, "t_max": None}


def run_qfi(s: Settings) -> RecipeResult:
    """QFI of ``n_b`` over ``[0, t_c]``, marking the grid point nearest ``t_1``."""
    n, Q = int(s["n"]), int(s["q"])
    model = model_from_settings(s, Q)
    rabi = rabi_frequency(n, Q, model.g_n, model.omega0)
    tgrid = _time_grid(s["t_max"], rabi.t_c, int(s["points"]))
    sector = enumerate_sector(n, Q)
    points = qfi_timeseries(model, fock_state(1, Q - n, sector), tgrid)
    marker = int(np.argmin(np.abs(tgrid - rabi.t_1)))
    peak = max(points, key=lambda p: p.qfi)
    records = [
        {
            "t": p.t,
            "qfi": p.qfi,
            "conventional_qfi": p.conventional_qfi,
            "is_t1": i == marker,
        }
        for i, p in enumerate(points)
    ]
    metadata = {
        **_model_metadata(model),
        "basis": {"kind": "sector", "n": n, "Q": Q, "dim": sector.dim},
        "t_c": rabi.t_c,
        "t_1": rabi.t_1,
        "peak_t": peak.t,
        "peak_qfi": peak.qfi,
    }
    summary = f"Peak F_Q = {peak.qfi:.6g} at t = {peak.t:.6g} (t_1 = {rabi.t_1:.6g})"
    return RecipeResult(records, metadata, summary=summary)


def squeeze_defaults(config: Config) -> Settings:
    """Squeeze settings; optimizer knobs come from ``[tool.qbsense.squeeze]``."""
    return {
        "preset": "fig2",
        "n": None,
        "g_n": None,
        "alpha": None,
        "beta": None,
        "omega0": 1.0,
        "points": 400,
        "t_max": None,
        "frame": "lab",
        "grid_size": config.squeeze_grid_size,
        "rescan_every": config.squeeze_rescan_every,
        "concurrent": False,
        "workers": None,
        "cutoff_a": None,
        "cutoff_b": None,
    }


def run_squeeze(s: Settings) -> RecipeResult:
    """Optimal-quadrature trajectory of a coherent initial state."""
    name = str(s["preset"])
    if name not in SQUEEZE_PRESETS:
        raise ConfigError(f"Unknown preset '{name}'; expected one of {sorted(SQUEEZE_PRESETS)}")
    preset = SQUEEZE_PRESETS[name]
    n = int(s["n"]) if s["n"] is not None else preset.n
    g_n = float(s["g_n"]) if s["g_n"] is not None else preset.g_n
    alpha = parse_complex(s["alpha"]) if s["alpha"] is not None else preset.alpha
    beta = parse_complex(s["beta"]) if s["beta"] is not None else preset.beta
    params = BatteryModelParams(n=n, omega0=float(s["omega0"]), g_n=g_n)
    if s["t_max"] is None:
        tgrid = default_tgrid(g_n, int(s["points"]))
    else:
        tgrid = _time_grid(float(s["t_max"]), 0.0, int(s["points"]))

    space = None
    if (s["cutoff_a"] is None) != (s["cutoff_b"] is None):
        raise ConfigError("Give both cutoff_a and cutoff_b, or neither")
    if s["cutoff_a"] is not None:
        space = TwoModeSpace(int(s["cutoff_a"]), int(s["cutoff_b"]))
    options = SqueezeOptions(
        grid_size=int(s["grid_size"]),
        rescan_every=int(s["rescan_every"]),
        frame=s["frame"],
        concurrent=bool(s["concurrent"]),
        workers=s["workers"],
    )
    trajectory = squeeze_trajectory(params, alpha, beta, tgrid, options, space)
    best = trajectory.minimum()
    uses_preset = (n, g_n, alpha, beta) == (preset.n, preset.g_n, preset.alpha, preset.beta)
    metadata = {
        **_model_metadata(params),
        "alpha": format_complex(alpha),
        "beta": format_complex(beta),
        "preset": name if uses_preset else None,
        "preset_note": preset.note if uses_preset else "",
        "cutoffs": [trajectory.space.cutoff_a, trajectory.space.cutoff_b],
        "frame": options.frame,
        "leakage_flagged": trajectory.leakage_flagged,
        "minimum": {"t": best.t, "var_min": best.var_min, **best.angles.to_dict()},
    }
    return RecipeResult(
        [p.to_dict() for p in trajectory.points],
        metadata,
        trajectory.leakage_flagged,
        summary=f"Minimum variance {best.var_min:.6g} at t = {best.t:.6g}",
    )


SPIN_DEFAULTS: Settings = {
    "n_min": 100,
    "n_max": 100_000,
    "count": 16,
    "omega": 1.0,
    "chi": 1.0,
    "kac": False,
}


def run_spin_scaling(s: Settings) -> RecipeResult:
    """Charging power of the twisting battery and of the parallel control."""
    sizes = log_spaced_sizes(int(s["n_min"]), int(s["n_max"]), int(s["count"]))
    omega, chi, kac = float(s["omega"]), float(s["chi"]), bool(s["kac"])
    fit = charging_power_exponent(sizes, omega, chi, kac)
    control = parallel_control(sizes, omega, chi)
    control_fit = fit_power_law([r.N for r in control], [r.power for r in control])
    series = {"twisting": scaling_rows(sizes, omega, chi, kac), "control": control}
    records = [
        {"series": name, "N": r.N, "delta_e": r.delta_e, "T": r.T, "power": r.power}
        for name, rows in series.items()
        for r in rows
    ]
    metadata = {
        "exponent": fit.exponent,
        "exponent_stderr": fit.stderr,
        "residual": fit.residual,
        "control_exponent": control_fit.exponent,
        "kac_normalized": kac,
    }
    summary = (
        f"Charging power exponent {fit.exponent:.4f} +/- {fit.stderr:.4f}"
        f" (parallel control {control_fit.exponent:.4f})"
    )
    return RecipeResult(records, metadata, summary=summary)


def protocol_defaults(config: Config) -> Settings:
    """Protocol settings; the seed comes from ``[tool.qbsense]``."""
    return {
        **MODEL_DEFAULTS,
        "phi": 0.1,
        "t_s": 1.0,
        "shots": 1000,
        "seed": config.seed,
        "phi_points": 0,
        "phi_max": None,
        "concurrent": False,
        "workers": None,
    }


def run_protocol_recipe(s: Settings) -> RecipeResult:
    """One protocol run, or a sweep over ``phi`` when ``phi_points > 0``."""
    n = int(s["n"])
    model = model_from_settings(s, n)
    params = ProtocolParams(
        model=model,
        phi=float(s["phi"]),
        t_s=float(s["t_s"]),
        shots=int(s["shots"]),
        seed=int(s["seed"]),
    )
    if int(s["phi_points"]) > 0:
        if s["phi_max"] is None and params.t_s == 0:
            raise DomainError("phi sweep needs t_s > 0 or an explicit phi_max")
        phi_max = s["phi_max"] if s["phi_max"] is not None else math.pi / (n * params.t_s)
        phis = np.linspace(0.0, float(phi_max), int(s["phi_points"]))
        results = sweep_phi(params, phis, bool(s["concurrent"]), s["workers"])
    else:
        results = [run_protocol(params)]
    metadata = {
        **_model_metadata(model),
        "basis": {"kind": "sector", "n": n, "Q": n, "dim": 2},
        "t_1": results[0].t_1,
    }
    last = results[-1]
    summary = f"p1 = {last.p1:.6g}"
    if last.estimate is not None:
        summary += f", phi_hat = {last.estimate.phi_hat:.6g} +/- {last.estimate.stderr:.2g}"
    return RecipeResult([r.to_dict() for r in results], metadata, summary=summary)


@dataclass(frozen=True)
class Recipe:
    """A command's defaults and runner."""

    name: str
    defaults: Callable[[Config], Settings]
    run: Callable[[Settings], RecipeResult]


RECIPES: dict[str, Recipe] = {
    "charge": Recipe("charge", lambda _: dict(CHARGE_DEFAULTS), run_charge),
    "qfi": Recipe("qfi", lambda _: dict(QFI_DEFAULTS), run_qfi),
    "squeeze": Recipe("squeeze", squeeze_defaults, run_squeeze),
    "spin-scaling": Recipe("spin-scaling", lambda _: dict(SPIN_DEFAULTS), run_spin_scaling),
    "protocol": Recipe("protocol", protocol_defaults, run_protocol_recipe),
}


def get_recipe(command: str) -> Recipe:
    """Look up a recipe by command name.

    Raises:
        ConfigError: If the command is unknown
    """
    if command not in RECIPES:
        raise ConfigError(f"Unknown command '{command}'; expected one of {sorted(RECIPES)}")
    return RECIPES[command]


def execute(
    command: str, settings: Settings, path: Path, fmt: OutputFormat, strict: bool = False
) -> tuple[RecipeResult, int]:
    """Run a recipe and write its result file.

    Args:
        command: Command name
        settings: Fully resolved settings
        path: Output file
        fmt: Output format
        strict: Raise on truncation contamination instead of flagging it

    Returns:
        The recipe result and the number of bytes written

    Raises:
        NumericalContractError: If ``strict`` and the run was leakage-flagged
    """
    result = get_recipe(command).run(settings)
    if strict and result.leakage_flagged:
        raise NumericalContractError(
            "Truncation contamination above the leakage threshold; raise the cutoffs"
        )
    metadata = {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "parameters": settings,
        "seed": settings.get("seed"),
        "leakage_flagged": result.leakage_flagged,
        "cutoffs": None,
        **result.metadata,
        "created_at": get_timestamp(),
    }
    size = write_table(path, result.records, metadata, fmt)
    return result, size


def expand_sweep(
    table: dict[str, Any], config: Config, output_dir: Path, fmt: OutputFormat
) -> list[tuple[SweepJob, Settings]]:
    """Jobs of a ``[sweep]`` table with their resolved settings.

    ``base`` holds shared settings, every key of ``grid`` a list of values (the jobs
    are their Cartesian product), and ``jobs`` lists extra explicit jobs, each with an
    optional ``output`` file name.

    Raises:
        ConfigError: If the table or any job's settings are invalid
        OutputError: If two jobs share an output path
    """
    if "command" not in table:
        raise ConfigError("[sweep] needs a 'command' key")
    command = str(table["command"])
    recipe = get_recipe(command)
    defaults = recipe.defaults(config)
    base = dict(table.get("base", {}))
    grid = dict(table.get("grid", {}))
    for key, values in grid.items():
        if not isinstance(values, list):
            raise ConfigError(f"[sweep.grid] {key} must be a list")

    jobs: list[tuple[SweepJob, Settings]] = []
    combos = product(*grid.values()) if grid else iter(())
    for index, combo in enumerate(combos):
        params = {**base, **dict(zip(grid, combo, strict=True))}
        output = output_dir / f"{command}_{index:03d}.{fmt}"
        jobs.append((SweepJob(command, params, str(output)), resolve_settings(defaults, params)))
    for index, extra in enumerate(table.get("jobs", []), start=len(jobs)):
        params = {**base, **{k: v for k, v in extra.items() if k != "output"}}
        output = output_dir / str(extra.get("output", f"{command}_{index:03d}.{fmt}"))
        jobs.append((SweepJob(command, params, str(output)), resolve_settings(defaults, params)))

    check_unique_outputs(Path(job.output) for job, _ in jobs)
    return jobs


def run_job(job: SweepJob, settings: Settings, fmt: OutputFormat, strict: bool) -> ManifestEntry:
    """Run one sweep job, recording failures instead of raising."""
    try:
        execute(job.command, settings, Path(job.output), fmt, strict)
    except QbsenseError as e:
        logger.warning("Sweep job %s failed: %s", job.output, e)
        return ManifestEntry(job, "error", message=str(e), exit_code=exit_code_for(e))
    return ManifestEntry(job, "ok")


def run_sweep(
    jobs: list[tuple[SweepJob, Settings]],
    fmt: OutputFormat,
    workers: int = 1,
    strict: bool = False,
) -> list[ManifestEntry]:
    """Run sweep jobs, in a process pool when ``workers > 1``; order is preserved."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_job(job, settings, fmt, strict) for job, settings in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_job, job, settings, fmt, strict) for job, settings in jobs]
        return [f.result() for f in futures]
