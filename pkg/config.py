# config.py
from __future__ import annotations

import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

from errors import ConfigError


def _default_threads() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SolverDefaults:
    max_iters: int = 5000
    constraint_tol: float = 1e-8
    step: float = 1.0
    restarts: int = 20
    inner_tol: float = 1e-12


@dataclass(frozen=True)
class AppConfig:
    out_dir: str = "results"
    seed: int = 42
    threads: int = field(default_factory=_default_threads)
    log_level: str = "WARNING"

    trials_csv_name: str = "trials.csv"
    summary_csv_name: str = "summary.csv"
    crossings_csv_name: str = "crossings.csv"
    meta_json_name: str = "meta.json"
    svg_name_template: str = "phase_{method}_{n}_{r}.svg"

    def svg_name(self, method: str, n: int, r: int) -> str:
        return self.svg_name_template.format(method=method, n=n, r=r)


def _env_int(name: str, minimum: int | None = None) -> int | None:
    raw = os.getenv(name, "").strip()
    if not raw:
        return None
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if minimum is not None and val < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {val}")
    return val


def load_config() -> tuple[AppConfig, SolverDefaults]:
    """
    Reads ULAB_* variables (a .env file in the working directory is honoured).
    Unset variables fall back to the dataclass defaults.
    """
    load_dotenv()

    app_kwargs: dict[str, object] = {}
    out_dir = os.getenv("ULAB_OUT", "").strip()
    if out_dir:
        app_kwargs["out_dir"] = out_dir
    seed = _env_int("ULAB_SEED", minimum=0)
    if seed is not None:
        app_kwargs["seed"] = seed
    threads = _env_int("ULAB_THREADS", minimum=1)
    if threads is not None:
        app_kwargs["threads"] = threads
    log_level = os.getenv("ULAB_LOG_LEVEL", "").strip().upper()
    if log_level:
        if log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"ULAB_LOG_LEVEL must be a logging level name, got {log_level!r}")
        app_kwargs["log_level"] = log_level

    solver_kwargs: dict[str, object] = {}
    max_iters = _env_int("ULAB_MAX_ITERS", minimum=1)
    if max_iters is not None:
        solver_kwargs["max_iters"] = max_iters
    restarts = _env_int("ULAB_RESTARTS", minimum=1)
    if restarts is not None:
        solver_kwargs["restarts"] = restarts

    return AppConfig(**app_kwargs), SolverDefaults(**solver_kwargs)


def threads_override() -> int | None:
    """ULAB_THREADS beats --threads on the command line."""
    load_dotenv()
    return _env_int("ULAB_THREADS", minimum=1)
