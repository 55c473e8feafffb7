"""Declarative run and sweep configuration.

Configs are YAML mappings whose keys mirror :class:`SimulationConfig`;
equation fields (``family``, ``d``, ``sigma``, ``m``, ``one_dimensional``)
sit at the top level and the regrid policy in a nested ``regrid`` mapping.
Every error names the offending key path.
"""

from __future__ import annotations

import copy
import dataclasses
import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .evolver import ICKind, InitialCondition, SimulationConfig
from .grid import EquationSpec, Family, RingLabError
from .regrid import RegridPolicy


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e4`` and ``5.0e-5`` as floats (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


class ConfigError(RingLabError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_MISSING = object()

# key -> (expected python types, default)
_TOP: dict[str, tuple[tuple[type, ...], Any]] = {
    "family": ((str,), _MISSING),
    "d": ((int,), _MISSING),
    "sigma": ((int, float), _MISSING),
    "m": ((int,), 0),
    "one_dimensional": ((bool,), None),
    "ic": ((dict, str), _MISSING),
    "r_outer": ((int, float), 20.0),
    "n_points": ((int,), 1600),
    "dt0": ((int, float), 1e-4),
    "focus_target": ((int, float), 1e4),
    "corrector_iters": ((int,), 3),
    "corrector_tol": ((int, float), 1e-10),
    "corrector_fail_tol": ((int, float), 1e-5),
    "regrid": ((dict,), None),
    "sample_growth": ((int, float), 0.01),
    "max_steps": ((int,), 2_000_000),
    "max_halvings": ((int,), 30),
    "s0": ((int, float, str, type(None)), "auto"),
    "power_drift_threshold": ((int, float), 1e-8),
    "snapshot_levels": ((list,), []),
}

_IC_FIELDS = ("amplitude", "width", "radius", "core")
_REGRID_DEFAULTS = dataclasses.asdict(RegridPolicy(min_points_across_peak=64))


def _check_type(key: str, value, types: tuple[type, ...]):
    # bool is an int subclass; reject it where a number is expected
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(key, f"expected {'/'.join(t.__name__ for t in types)}, got bool")
    if not isinstance(value, types):
        raise ConfigError(key, f"expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")


def _key_in(message: str, keys, default: str) -> str:
    """First of ``keys`` named as a whole word in ``message``."""
    return next((k for k in keys if re.search(rf"\b{re.escape(k)}\b", message)), default)


_CALL = re.compile(r"^\s*([a-z_0-9]+)\s*\((.*)\)\s*$")


def parse_ic(value, key: str = "ic") -> InitialCondition:
    """``{kind: ..., amplitude: ...}`` or the call form ``gaussian_ring(2, 2, 5)``.

    Positional call arguments fill amplitude, width, radius and core in order.
    """
    if isinstance(value, str):
        m = _CALL.match(value)
        if not m:
            raise ConfigError(key, f"cannot parse initial condition {value!r}")
        kind, args = m.group(1), m.group(2).strip()
        fields: dict[str, Any] = {"kind": kind}
        if args:
            parts = [a.strip() for a in args.split(",")]
            if len(parts) > len(_IC_FIELDS):
                raise ConfigError(key, f"too many arguments for {kind}")
            for name, part in zip(_IC_FIELDS, parts):
                if "=" in part:
                    raise ConfigError(key, "use the mapping form for named arguments")
                try:
                    fields[name] = float(part)
                except ValueError:
                    raise ConfigError(f"{key}.{name}", f"not a number: {part!r}") from None
        value = fields
    value = dict(value)
    if "kind" not in value:
        raise ConfigError(f"{key}.kind", "missing")
    unknown = set(value) - {"kind", *_IC_FIELDS}
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
    try:
        kind = ICKind(value["kind"])
    except ValueError:
        raise ConfigError(f"{key}.kind", f"unknown kind {value['kind']!r}") from None
    for name in _IC_FIELDS:
        if name in value:
            _check_type(f"{key}.{name}", value[name], (int, float))
    try:
        return InitialCondition(kind, **{k: float(v) for k, v in value.items() if k != "kind"})
    except ValueError as exc:
        field = _key_in(str(exc), _IC_FIELDS, "kind")
        raise ConfigError(f"{key}.{field}", str(exc)) from None


def parse_regrid(value) -> RegridPolicy:
    value = dict(value or {})
    for k, v in value.items():
        if k not in _REGRID_DEFAULTS:
            raise ConfigError(f"regrid.{k}", "unknown key")
        default = _REGRID_DEFAULTS[k]
        _check_type(f"regrid.{k}", v, (int,) if isinstance(default, int) else (int, float))
    merged = {**_REGRID_DEFAULTS, **value}
    try:
        return RegridPolicy(**merged)
    except ValueError as exc:
        key = _key_in(str(exc), merged, "")
        raise ConfigError(f"regrid.{key}" if key else "regrid", str(exc)) from None


@dataclass(frozen=True)
class RunConfig:
    """A parsed run: the simulation config plus how to obtain ``S0``."""

    sim: SimulationConfig
    s0_mode: str  # "auto", "fixed" or "unit"


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for k in raw:
        if k not in _TOP:
            raise ConfigError(str(k), "unknown key")
    vals = {}
    for k, (types, default) in _TOP.items():
        if k in raw:
            if raw[k] is None and default is None:
                vals[k] = None
                continue
            _check_type(k, raw[k], types)
            vals[k] = raw[k]
        elif default is _MISSING:
            raise ConfigError(k, "required key missing")
        else:
            vals[k] = default
    try:
        family = Family(vals["family"])
    except ValueError:
        raise ConfigError("family", f"unknown family {vals['family']!r}") from None
    try:
        spec = EquationSpec(
            family, vals["d"], float(vals["sigma"]), vals["m"],
            vals["d"] == 1 if vals["one_dimensional"] is None else vals["one_dimensional"],
        )
    except (ValueError, RingLabError) as exc:
        key = _key_in(str(exc), ("sigma", "d", "m", "one_dimensional"), "family")
        raise ConfigError(key, str(exc)) from None
    ic = parse_ic(vals["ic"])
    policy = parse_regrid(vals["regrid"])
    s0 = vals["s0"]
    if isinstance(s0, str):
        if s0 != "auto":
            raise ConfigError("s0", "must be a number, 'auto' or null")
        mode, s0v = ("auto" if family is Family.NLS else "unit"), None
    elif s0 is None:
        mode, s0v = "unit", None
    else:
        if not s0 > 0:
            raise ConfigError("s0", "must be positive")
        mode, s0v = "fixed", float(s0)
    levels = vals["snapshot_levels"]
    for i, lv in enumerate(levels):
        _check_type(f"snapshot_levels[{i}]", lv, (int, float))
    kwargs = {k: vals[k] for k in _TOP if k not in ("family", "d", "sigma", "m", "one_dimensional", "ic", "regrid", "s0", "snapshot_levels")}
    for k in ("r_outer", "dt0", "focus_target", "corrector_tol", "corrector_fail_tol", "sample_growth", "power_drift_threshold"):
        kwargs[k] = float(kwargs[k])
    try:
        sim = SimulationConfig(spec=spec, ic=ic, regrid=policy, s0=s0v, snapshot_levels=tuple(float(x) for x in levels), **kwargs)
    except ValueError as exc:
        key = _key_in(str(exc), kwargs, "<root>")
        raise ConfigError(key, str(exc)) from None
    return RunConfig(sim, mode)


def parse_config(path) -> RunConfig:
    """Read and validate a YAML run config; all defaults are materialized."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    try:
        raw = load_yaml(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return config_from_dict(raw if raw is not None else {})


def config_to_dict(rc: RunConfig) -> dict:
    """Fully defaulted echo of a config, parseable by :func:`config_from_dict`."""
    c = rc.sim
    ic = {"kind": c.ic.kind.value, **{k: getattr(c.ic, k) for k in _IC_FIELDS}}
    out = {
        "family": c.spec.family.value,
        "d": c.spec.d,
        "sigma": c.spec.sigma,
        "m": c.spec.m,
        "one_dimensional": c.spec.one_dimensional,
        "ic": ic,
    }
    for k in _TOP:
        if k in out or k in ("regrid", "s0", "snapshot_levels"):
            continue
        out[k] = getattr(c, k)
    out["regrid"] = dataclasses.asdict(c.regrid)
    out["s0"] = {"auto": "auto", "unit": None, "fixed": c.s0}[rc.s0_mode]
    out["snapshot_levels"] = list(c.snapshot_levels)
    return out


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian product of config overrides applied to a base config.

    ``kind`` is ``run`` (full simulations) or ``profile`` (admissible
    profiles only, where the sole meaningful axis is ``sigma``).
    """

    base: dict
    axes: tuple[tuple[str, tuple], ...]
    threads: int = 1
    kind: str = "run"
    max_cells: int = 256

    def __post_init__(self):
        if self.kind not in ("run", "profile"):
            raise ConfigError("kind", "must be 'run' or 'profile'")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if not self.axes:
            raise ConfigError("axes", "at least one axis is required")
        size = 1
        for name, values in self.axes:
            if not values:
                raise ConfigError(f"axes.{name}", "empty value list")
            size *= len(values)
            if self.kind == "run":
                head = name.split(".")[0]
                if head not in _TOP:
                    raise ConfigError(f"axes.{name}", "not a config key")
            elif name not in ("sigma", "xi_max", "tolerance"):
                raise ConfigError(f"axes.{name}", "profile sweeps vary sigma, xi_max or tolerance")
        if size > self.max_cells:
            raise ConfigError("axes", f"{size} cells exceed the cap of {self.max_cells}")

    def cells(self) -> list[dict[str, Any]]:
        names = [a[0] for a in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(a[1] for a in self.axes))]

    def cell_config(self, params: dict[str, Any]) -> dict:
        cfg = copy.deepcopy(self.base)
        for name, value in params.items():
            node = cfg
            parts = name.split(".")
            for i, p in enumerate(parts[:-1]):
                child = node.setdefault(p, {})
                if isinstance(child, str) and p == "ic" and i == 0:
                    ic = parse_ic(child)
                    child = node[p] = {"kind": ic.kind.value, **{k: getattr(ic, k) for k in _IC_FIELDS}}
                if not isinstance(child, dict):
                    raise ConfigError(f"axes.{name}", f"{'.'.join(parts[: i + 1])} is not a mapping")
                node = child
            node[parts[-1]] = value
        return cfg


def parse_sweep(path, threads: int | None = None) -> SweepSpec:
    try:
        raw = load_yaml(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("<file>", str(exc)) from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "sweep file must be a mapping")
    unknown = set(raw) - {"base", "axes", "threads", "kind", "max_cells"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    base = raw.get("base", {})
    if isinstance(base, str):
        try:
            base = load_yaml((Path(path).parent / base).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError("base", str(exc)) from None
    if not isinstance(base, dict):
        raise ConfigError("base", "must be a mapping or a path to a config file")
    axes_raw = raw.get("axes")
    if not isinstance(axes_raw, dict):
        raise ConfigError("axes", "must map parameter names to value lists")
    axes = []
    for name, values in axes_raw.items():
        if not isinstance(values, list):
            raise ConfigError(f"axes.{name}", "must be a list")
        axes.append((str(name), tuple(values)))
    kind = raw.get("kind", "run")
    n = threads if threads is not None else raw.get("threads", 1)
    for key, v in (("threads", n), ("max_cells", raw.get("max_cells", 256))):
        _check_type(key, v, (int,))
    spec = SweepSpec(base, tuple(axes), n, kind, raw.get("max_cells", 256))
    if kind == "run":
        for params in spec.cells():
            try:
                config_from_dict(spec.cell_config(params))
            except ConfigError as exc:
                raise ConfigError(f"base/{exc.key}", str(exc)) from None
    return spec
