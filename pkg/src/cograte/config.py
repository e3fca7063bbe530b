"""Flat ``section.key = value`` experiment configs.

Grammar, one entry per line::

    # comment
    system.W = 10e6
    sweep.lambdas = 0.1, 0.2, 0.3
    vary.feedback.f = 0, 0.5, 1

Keys are case-insensitive. ``vary.<key>`` lists alternative values for a
parameter key; every combination becomes a separately labelled series.
Environment variables ``COGRATE_<SECTION>_<KEY>`` override file values.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from importlib import resources

from .optimizer import GridSpec
from .protocols import InvalidParamsError, Protocol, SystemParams


class ConfigError(ValueError):
    """Unparsable or incomplete configuration (CLI exit code 2)."""


class InvariantError(ValueError):
    """Parsed values that violate a model invariant (CLI exit code 3)."""


# canonical lower-case key -> (display name, SystemParams field, required)
PARAM_KEYS = {
    "system.w": ("system.W", "w", True),
    "system.t": ("system.T", "t", True),
    "system.b": ("system.b", "b", True),
    "system.p0": ("system.P0", "p0", True),
    "system.n0": ("system.N0", "n0", True),
    "system.tau_s": ("system.tau_s", "tau_s", True),
    "system.tau_f": ("system.tau_f", "tau_f", True),
    "system.e": ("system.E", "energy_budget", True),
    "channel.sigma_p_pd": ("channel.sigma_p_pd", "sigma_p_pd", True),
    "channel.sigma_p_s": ("channel.sigma_p_s", "sigma_p_s", True),
    "channel.sigma_s_pd": ("channel.sigma_s_pd", "sigma_s_pd", True),
    "channel.sigma_s_sd": ("channel.sigma_s_sd", "sigma_s_sd", True),
    "sensing.target_pfa": ("sensing.target_pfa", "target_pfa", True),
    "feedback.f": ("feedback.f", "f", False),
    "feedback.omega": ("feedback.omega", "omega", False),
    "traffic.lambda": ("traffic.lambda", "lambda_p", False),
}
OTHER_KEYS = {"sweep.lambdas", "sweep.protocols", "grid.n_t", "grid.n_w", "meta.name"}
PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5")
ENV_PREFIX = "COGRATE_"


@dataclass(frozen=True)
class Series:
    """One parameter set to sweep, with a label suffix like ``[f=0.5]``."""

    label: str
    params: SystemParams


@dataclass
class ExperimentSpec:
    name: str
    params: SystemParams
    lambdas: list[float]
    protocols: list[Protocol]
    grid: GridSpec
    series: list[Series] = field(default_factory=list)


def _display(key: str) -> str:
    if key in PARAM_KEYS:
        return PARAM_KEYS[key][0]
    return key


def _canonical(key: str) -> str:
    key = key.strip().lower()
    if key.startswith("vary."):
        target = key[len("vary.") :]
        if target not in PARAM_KEYS:
            raise ConfigError(f"unknown key to vary: {target}")
        return key
    if key not in PARAM_KEYS and key not in OTHER_KEYS:
        raise ConfigError(f"unknown config key: {key}")
    return key


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _canonical(key)
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {_display(key)}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {_display(key)}")
        entries[key] = value
    return entries


def env_overrides(environ=None) -> dict[str, str]:
    """``COGRATE_SYSTEM_TAU_S=3e-4`` becomes ``system.tau_s``."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :].lower()
        section, _, key = rest.partition("_")
        if not key:
            raise ConfigError(f"malformed override variable {name}")
        out[_canonical(f"{section}.{key}")] = value
    return out


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("cograte.presets").joinpath(f"{name}.cfg").read_text()


def _float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{_display(key)}: not a number: {value!r}") from None


def _float_list(key: str, value: str) -> list[float]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    if not items:
        raise ConfigError(f"{_display(key)}: empty list")
    return [_float(key, v) for v in items]


def parse_protocols(value: str) -> list[Protocol]:
    out = []
    for item in value.split(","):
        item = item.strip().upper()
        try:
            out.append(Protocol(item))
        except ValueError:
            raise ConfigError(f"unknown protocol {item!r}; choose from NC, P1, P2") from None
    return out


def _build_params(values: dict[str, float]) -> SystemParams:
    try:
        return SystemParams(**values)
    except InvalidParamsError as exc:
        raise InvariantError(str(exc)) from None


def build_spec(entries: dict[str, str], name: str = "experiment") -> ExperimentSpec:
    missing = [disp for key, (disp, _, req) in PARAM_KEYS.items() if req and key not in entries]
    if missing:
        short = ", ".join(f"{m.split('.', 1)[1]} ({m})" for m in missing)
        raise ConfigError(f"missing required key(s): {short}")

    values = {PARAM_KEYS[k][1]: _float(k, v) for k, v in entries.items() if k in PARAM_KEYS}
    params = _build_params(values)

    lambdas = _float_list("sweep.lambdas", entries["sweep.lambdas"]) if "sweep.lambdas" in entries else [params.lambda_p]
    for lam in lambdas:
        if not 0.0 <= lam <= 1.0:
            raise InvariantError(f"arrival rate {lam} outside [0, 1]")
    protocols = parse_protocols(entries.get("sweep.protocols", "P1,P2"))
    try:
        grid = GridSpec(
            int(_float("grid.n_t", entries.get("grid.n_t", "200"))),
            int(_float("grid.n_w", entries.get("grid.n_w", "200"))),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    varied = sorted((k[len("vary.") :], _float_list(k, v)) for k, v in entries.items() if k.startswith("vary."))
    series = []
    for combo in itertools.product(*(vals for _, vals in varied)):
        changes = {PARAM_KEYS[k][1]: v for (k, _), v in zip(varied, combo)}
        label = ",".join(f"{k.split('.', 1)[1]}={v:g}" for (k, _), v in zip(varied, combo))
        series.append(Series(f"[{label}]" if label else "", _build_params({**values, **changes})))
    return ExperimentSpec(entries.get("meta.name", name), params, lambdas, protocols, grid, series)


def load(path: str | None = None, preset: str | None = None, overrides: dict[str, str] | None = None, environ=None) -> ExperimentSpec:
    """Preset or file, then environment overrides, then explicit overrides."""
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config file or --preset")
    if preset is not None:
        entries = parse_text(preset_text(preset), preset)
        name = preset
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        entries = parse_text(text, path)
        name = os.path.splitext(os.path.basename(path))[0]
    entries.update(env_overrides(environ))
    for key, value in (overrides or {}).items():
        entries[_canonical(key)] = value
    return build_spec(entries, name)
