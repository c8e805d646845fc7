"""JSON experiment configuration: defaults, dotted overrides and validation."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from quadmpc.costs import TimeOptConfig, WeightSet
from quadmpc.dynamics import NU, NX, QuadParams
from quadmpc.flight_controller import ControllerMode, ControllerSettings
from quadmpc.mpc_linear import HorizonConfig, InputBounds
from quadmpc.reference import Scenario

SECTIONS = ("quad", "weights", "time_opt", "horizon", "bounds", "controller", "scenario", "output")


def default_config() -> dict:
    return {
        "quad": QuadParams().to_dict(),
        "weights": WeightSet().to_dict(),
        "time_opt": {"t_o": 2.4},
        "horizon": {"N": 18, "N_u": 1, "dt": 0.05},
        "bounds": {"u_min": 0.0, "u_max": 5.0, "du_max": 1.0},
        "controller": ControllerSettings().to_dict(),
        "scenario": Scenario().to_dict(),
        "output": {"threshold": 0.01, "plots": True},
    }


class ConfigError(ValueError):
    """Collects every problem found, each tagged with its dotted key."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {m}" for k, m in problems))


@dataclass(frozen=True)
class Experiment:
    quad: QuadParams
    weights: WeightSet
    time_opt: TimeOptConfig
    horizon: HorizonConfig
    bounds: InputBounds
    controller: ControllerSettings
    scenario: Scenario
    threshold: float = 0.01
    plots: bool = True


def parse_value(text: str):
    """JSON literal when it parses, bare string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError([(assignment, "override must look like KEY=VALUE")])
    key, _, text = assignment.partition("=")
    parts = key.strip().split(".")
    if len(parts) < 2 or parts[0] not in SECTIONS:
        raise ConfigError([(key, "override key must be SECTION.FIELD")])
    node = cfg
    for name in parts[:-1]:
        node = node.setdefault(name, {})
        if not isinstance(node, dict):
            raise ConfigError([(key, "cannot descend into a non-object value")])
    node[parts[-1]] = parse_value(text)


def _merge(base: dict, user: dict, problems, prefix="") -> None:
    for k, v in user.items():
        key = f"{prefix}{k}"
        if k not in base:
            problems.append((key, "unknown key"))
        elif isinstance(base[k], dict) and not isinstance(v, dict):
            problems.append((key, "expected an object"))
        elif isinstance(base[k], dict):
            _merge(base[k], v, problems, key + ".")
        else:
            base[k] = v


def _vector(d, sec, name, n, problems, positive=False, nonneg=False):
    key = f"{sec}.{name}"
    try:
        v = np.broadcast_to(np.asarray(d.get(name), dtype=float), (n,)).copy()
    except (ValueError, TypeError):
        problems.append((key, f"expected a number or a list of {n} numbers"))
        return None
    if not np.all(np.isfinite(v)):
        problems.append((key, "entries must be finite"))
    elif positive and np.any(v <= 0):
        problems.append((key, "entries must be positive"))
    elif nonneg and np.any(v < 0):
        problems.append((key, "entries must be non-negative"))
    return v


def _number(d, sec, name, problems, positive=False, integer=False):
    key = f"{sec}.{name}"
    v = d.get(name)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        problems.append((key, "expected a finite number"))
        return None
    if integer and int(v) != v:
        problems.append((key, "expected an integer"))
        return None
    if positive and not v > 0:
        problems.append((key, "must be positive"))
        return None
    return int(v) if integer else float(v)


def validate(cfg: dict) -> Experiment:
    """Check every invariant and build the typed experiment.

    Raises ConfigError listing all violations with their keys.
    """
    problems: list[tuple[str, str]] = []
    q = cfg["quad"]
    for name in ("mass", "arm_length", "ixx", "iyy", "izz", "k_thrust", "b_drag", "gravity"):
        _number(q, "quad", name, problems, positive=True)
    _vector(cfg["quad"], "quad", "drag", 3, problems, nonneg=True)

    _vector(cfg["weights"], "weights", "q", NX, problems, nonneg=True)
    _vector(cfg["weights"], "weights", "p", NX, problems, nonneg=True)
    _vector(cfg["weights"], "weights", "qi", NX, problems, nonneg=True)
    _vector(cfg["weights"], "weights", "r", NU, problems, positive=True)
    _number(cfg["weights"], "weights", "alpha", problems, positive=True)

    _number(cfg["time_opt"], "time_opt", "t_o", problems, positive=True)

    h = cfg["horizon"]
    N = _number(h, "horizon", "N", problems, positive=True, integer=True)
    Nu = _number(h, "horizon", "N_u", problems, positive=True, integer=True)
    hdt = _number(h, "horizon", "dt", problems, positive=True)
    if N is not None and Nu is not None and Nu > N:
        problems.append(("horizon.N_u", "must not exceed horizon.N"))

    lo = _vector(cfg["bounds"], "bounds", "u_min", NU, problems)
    hi = _vector(cfg["bounds"], "bounds", "u_max", NU, problems)
    _vector(cfg["bounds"], "bounds", "du_max", NU, problems, nonneg=True)
    if lo is not None and hi is not None and np.any(lo > hi):
        problems.append(("bounds.u_min", "must not exceed bounds.u_max"))

    c = cfg["controller"]
    try:
        ControllerMode.parse(str(c.get("mode")))
    except ValueError as exc:
        problems.append(("controller.mode", str(exc)))
    _number(c, "controller", "pos_clip", problems, positive=True)
    _number(c, "controller", "max_iter", problems, positive=True, integer=True)
    tg = _number(c, "controller", "tilt_guard", problems, positive=True)
    if tg is not None and tg >= math.pi / 2:
        problems.append(("controller.tilt_guard", "must be below pi/2"))

    s = cfg["scenario"]
    _number(s, "scenario", "radius", problems)
    _number(s, "scenario", "period", problems, positive=True)
    _number(s, "scenario", "altitude", problems)
    _number(s, "scenario", "yaw", problems)
    dur = _number(s, "scenario", "duration", problems)
    if dur is not None and dur < 0:
        problems.append(("scenario.duration", "must be non-negative"))
    pdt = _number(s, "scenario", "plant_dt", problems, positive=True)
    cdt = _number(s, "scenario", "ctrl_dt", problems, positive=True)
    _vector(cfg["scenario"], "scenario", "initial_state", NX, problems)
    _vector(cfg["scenario"], "scenario", "external_force", 3, problems)
    if pdt is not None and cdt is not None:
        ratio = cdt / pdt
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            problems.append(("scenario.ctrl_dt", "must be an integer multiple of scenario.plant_dt"))
    if hdt is not None and cdt is not None and not math.isclose(hdt, cdt, rel_tol=1e-12):
        problems.append(("horizon.dt", "must equal scenario.ctrl_dt"))
    if isinstance(s.get("initial_state"), list) and len(s["initial_state"]) != NX:
        problems.append(("scenario.initial_state", f"needs {NX} entries"))

    o = cfg["output"]
    _number(o, "output", "threshold", problems, positive=True)
    if not isinstance(o.get("plots"), bool):
        problems.append(("output.plots", "expected true or false"))

    if problems:
        raise ConfigError(problems)
    try:
        b = cfg["bounds"]
        return Experiment(
            quad=QuadParams.from_dict(q),
            weights=WeightSet.from_dict(cfg["weights"]),
            time_opt=TimeOptConfig(t_o=float(cfg["time_opt"]["t_o"])),
            horizon=HorizonConfig(N=int(h["N"]), N_u=int(h["N_u"]), dt=float(h["dt"])),
            bounds=InputBounds(np.asarray(b["u_min"], dtype=float),
                               np.asarray(b["u_max"], dtype=float),
                               np.asarray(b["du_max"], dtype=float)),
            controller=ControllerSettings.from_dict(c),
            scenario=Scenario.from_dict(s),
            threshold=float(o["threshold"]),
            plots=bool(o["plots"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError([("config", str(exc))]) from exc


def resolve(user: dict | None = None, overrides=()) -> tuple[dict, Experiment]:
    """Merge ``user`` and ``--set`` overrides over the defaults, then validate."""
    cfg = default_config()
    problems: list[tuple[str, str]] = []
    if user is not None:
        if not isinstance(user, dict):
            raise ConfigError([("config", "top level must be a JSON object")])
        _merge(cfg, user, problems)
    for a in overrides:
        apply_override(cfg, a)
    probe = default_config()
    _merge(probe, copy.deepcopy(cfg), problems)
    if problems:
        raise ConfigError(problems)
    return cfg, validate(cfg)


def load(path: str | Path | None, overrides=()) -> tuple[dict, Experiment]:
    """Read a JSON config file (or just the defaults when ``path`` is None)."""
    user = None
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([("config", f"cannot read {p}: {exc.strerror}")]) from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([("config", f"{p} is not valid JSON: {exc}")]) from exc
    return resolve(user, overrides)
