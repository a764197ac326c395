"""JSON run configuration and the named scenario presets.

A config file has four sections, all optional (defaults are the reference
network with one sender)::

    {
      "network": {"link_bandwidth": 1.5e6, "packet_size": 1000, "buffer_limit": null},
      "red": {"q_min": 50, "q_max": 100, "p_max": 0.1, "w": 0.003, "wait": true},
      "senders": [{"a": 0.02, "count": 5},
                  {"a": 0.035, "count": 5, "schedule": [[0, 75], [125, null]]}],
      "run": {"model": "continuous", "drop_mode": "full-red", "t_end": 200, "seed": 1}
    }

A ``null`` schedule end means "never switches off".
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .core import ALWAYS_ON, ConfigError, NetworkConfig, RedParams
from .drops import DropMode

MODELS = ("continuous", "discrete", "oracle")


@dataclass(frozen=True)
class RunConfig:
    """What to run and how.

    ``h``, ``saturated``, ``avg_rate``, ``emulate_no_send`` and
    ``sample_every`` apply to the continuous model; ``sample_dt`` to the
    packet oracle (``None`` means one sample per ``delta``).
    """

    model: str = "continuous"
    drop_mode: str = "deterministic"
    t_end: float = 100.0
    seed: int | None = None
    h: float | None = None
    saturated: bool = True
    avg_rate: str | None = None
    emulate_no_send: bool = False
    sample_every: int = 1
    sample_dt: float | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        try:
            object.__setattr__(self, "drop_mode", DropMode.parse(self.drop_mode).value)
        except ValueError:
            raise ConfigError(f"unknown drop mode {self.drop_mode!r}") from None
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ConfigError("t_end must be a finite non-negative number")


def _schedule_from_json(raw):
    if raw is None:
        return ALWAYS_ON
    return tuple((float(on), math.inf if off is None else float(off)) for on, off in raw)


def _schedule_to_json(schedule):
    return [[on, None if math.isinf(off) else off] for on, off in schedule]


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")


def from_dict(data: dict) -> tuple[NetworkConfig, RedParams, RunConfig]:
    """Build validated configuration objects from a parsed config file."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("config", data, ("network", "red", "senders", "run"))
    net = dict(data.get("network", {}))
    _check_keys("network", net, ("link_bandwidth", "packet_size", "buffer_limit"))

    a, schedules = [], []
    for entry in data.get("senders", [{"a": 0.01}]):
        _check_keys("senders", entry, ("a", "count", "schedule"))
        if "a" not in entry:
            raise ConfigError("every sender entry needs a propagation delay 'a'")
        count = int(entry.get("count", 1))
        if count < 1:
            raise ConfigError("sender count must be at least 1")
        a += [float(entry["a"])] * count
        schedules += [_schedule_from_json(entry.get("schedule"))] * count

    red_raw = dict(data.get("red", {}))
    _check_keys("red", red_raw, ("q_min", "q_max", "p_max", "w", "wait"))
    if "wait" in red_raw:
        red_raw["wait_mode"] = bool(red_raw.pop("wait"))
    run_raw = dict(data.get("run", {}))
    _check_keys("run", run_raw, [f.name for f in dataclasses.fields(RunConfig)])
    try:
        cfg = NetworkConfig(a=tuple(a), schedules=tuple(schedules), **net)
        red = RedParams(**red_raw)
        run = RunConfig(**run_raw)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg, red, run


def to_dict(cfg: NetworkConfig, red: RedParams, run: RunConfig) -> dict:
    """Inverse of :func:`from_dict` (one sender entry per sender)."""
    return {
        "network": {
            "link_bandwidth": cfg.link_bandwidth,
            "packet_size": cfg.packet_size,
            "buffer_limit": cfg.buffer_limit,
        },
        "red": {"q_min": red.q_min, "q_max": red.q_max, "p_max": red.p_max,
                "w": red.w, "wait": red.wait_mode},
        "senders": [
            {"a": a, "schedule": _schedule_to_json(s)} for a, s in zip(cfg.a, cfg.schedules)
        ],
        "run": dataclasses.asdict(run),
    }


def load(path) -> tuple[NetworkConfig, RedParams, RunConfig]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return from_dict(data)


def dump(path, cfg: NetworkConfig, red: RedParams, run: RunConfig) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg, red, run), indent=2) + "\n")


# --- scenario presets ---------------------------------------------------------

CLASS2_SCHEDULE = ((0.0, 75.0), (125.0, math.inf))
# the four-sender delays are not given numerically; spread over 10-40 ms
FOUR_SENDER_DELAYS = (0.01, 0.02, 0.03, 0.04)


def scenario(name: str, model: str = "continuous", seed: int | None = None,
             t_end: float | None = None) -> tuple[NetworkConfig, RedParams, RunConfig]:
    """Named presets on the reference 1.5 Mb/s network.

    ``one-sender`` and ``two-senders`` (identical delays) use deterministic
    drops; ``four-senders`` and ``two-classes`` use full RED.
    """
    red = RedParams()
    if name == "one-sender":
        cfg, drop, t = NetworkConfig(a=(0.01,)), "deterministic", 100.0
    elif name == "two-senders":
        cfg, drop, t = NetworkConfig(a=(0.01, 0.01)), "deterministic", 100.0
    elif name == "four-senders":
        cfg, drop, t = NetworkConfig(a=FOUR_SENDER_DELAYS), "full-red", 100.0
    elif name == "two-classes":
        cfg = NetworkConfig(
            a=(0.02,) * 5 + (0.035,) * 5,
            schedules=(ALWAYS_ON,) * 5 + (CLASS2_SCHEDULE,) * 5,
        )
        drop, t = "full-red", 200.0
    else:
        raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    run = RunConfig(model=model, drop_mode=drop, t_end=t if t_end is None else t_end, seed=seed)
    return cfg, red, run


SCENARIOS = ("one-sender", "two-senders", "four-senders", "two-classes")
