"""Flat ``section.key = value`` scenario files.

Blank lines and ``#`` comments are ignored. Every key is optional; an empty
file gives the default scenario. Powers may be given in SI units (``game.p_c``,
``channel.N0``) or in the usual engineering units (``game.p_c_mW``,
``channel.N0_dBm``), and the rate requirement as ``game.r_th`` or as an SNR
``game.snr_th_dB``; giving both forms of one quantity is an error.
"""
from __future__ import annotations

import math
from dataclasses import replace

from .channel import ChannelParams, db_to_linear, dbm_to_watt
from .simulation import ScenarioConfig
from .stackelberg import GameParams


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _opt_float(text: str):
    return None if text.lower() in ("", "none", "default") else float(text)


# key -> (parser, target, field, unit conversion)
_KEYS = {
    "channel.K": (float, "channel", "K"),
    "channel.eta": (float, "channel", "eta"),
    "channel.N0": (float, "noise", "N0"),
    "channel.N0_dBm": (float, "noise", "N0_dBm"),
    "channel.cell_radius": (float, "channel", "cell_radius"),
    "channel.edge_band": (float, "channel", "edge_band"),
    "channel.d2d_separation": (float, "channel", "d2d_separation"),
    "channel.relay_range": (float, "channel", "relay_range"),
    "game.beta1": (float, "game", "beta1"),
    "game.beta2": (float, "game", "beta2"),
    "game.p_c": (float, "p_c", "p_c"),
    "game.p_c_mW": (float, "p_c", "p_c_mW"),
    "game.p_d": (float, "p_d", "p_d"),
    "game.p_d_mW": (float, "p_d", "p_d_mW"),
    "game.r_th": (float, "r_th", "r_th"),
    "game.snr_th_dB": (float, "r_th", "snr_th_dB"),
    "scenario.m": (int, "scenario", "m"),
    "scenario.n_values": (_ints, "scenario", "n_values"),
    "scenario.drops": (int, "scenario", "drops"),
    "scenario.scheme": (str, "scenario", "scheme"),
    "scenario.c_fixed": (_opt_float, "scenario", "c_fixed"),
    "scenario.master_seed": (int, "scenario", "master_seed"),
    "scenario.condition_outage": (_bool, "scenario", "condition_outage"),
    "scenario.unmatched_rate": (str, "scenario", "unmatched_rate"),
}


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    values: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        try:
            values[key] = (_KEYS[key][0](value), lineno)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, source) from None

    groups: dict[str, dict[str, tuple[object, int]]] = {}
    for key, (val, lineno) in values.items():
        _, group, name = _KEYS[key]
        groups.setdefault(group, {})[name] = (val, lineno)
    for group in ("noise", "p_c", "p_d", "r_th"):
        if len(groups.get(group, {})) > 1:
            line = max(ln for _, ln in groups[group].values())
            raise ConfigError(f"{group} given in two forms", line, source)

    def single(group, default, convert):
        if group not in groups:
            return default, None
        (name, (val, lineno)), = groups[group].items()
        return convert[name](val), lineno

    base = ScenarioConfig()
    n0, n0_line = single("noise", base.channel.N0, {"N0": float, "N0_dBm": dbm_to_watt})
    p_c, _ = single("p_c", base.game.p_c, {"p_c": float, "p_c_mW": lambda v: v / 1000})
    p_d, _ = single("p_d", base.game.p_d, {"p_d": float, "p_d_mW": lambda v: v / 1000})
    r_th, _ = single("r_th", base.game.r_th,
                     {"r_th": float, "snr_th_dB": lambda v: math.log2(1 + db_to_linear(v))})

    def fields_of(group):
        return {k: v for k, (v, _) in groups.get(group, {}).items()}

    def first_line(*names):
        lines = [ln for g in names for _, ln in groups.get(g, {}).values()]
        return min(lines) if lines else None

    try:
        channel = replace(base.channel, N0=n0, **fields_of("channel"))
    except ValueError as exc:
        raise ConfigError(str(exc), first_line("channel", "noise"), source) from None
    try:
        game = replace(base.game, n0=n0, p_c=p_c, p_d=p_d, r_th=r_th, **fields_of("game"))
    except ValueError as exc:
        raise ConfigError(str(exc), first_line("game", "p_c", "p_d", "r_th") or n0_line, source) from None
    try:
        return replace(base, channel=channel, game=game, **fields_of("scenario"))
    except ValueError as exc:
        raise ConfigError(str(exc), first_line("scenario"), source) from None


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def config_items(cfg: ScenarioConfig) -> dict[str, str]:
    """Canonical SI-unit key/value strings; ``parse_config`` round-trips them exactly."""
    ch, g = cfg.channel, cfg.game
    items = {
        "channel.K": ch.K, "channel.eta": ch.eta, "channel.N0": ch.N0,
        "channel.cell_radius": ch.cell_radius, "channel.edge_band": ch.edge_band,
        "channel.d2d_separation": ch.d2d_separation, "channel.relay_range": ch.relay_range,
        "game.beta1": g.beta1, "game.beta2": g.beta2, "game.p_c": g.p_c, "game.p_d": g.p_d,
        "game.r_th": g.r_th,
        "scenario.m": cfg.m,
        "scenario.n_values": ",".join(str(n) for n in cfg.n_values),
        "scenario.drops": cfg.drops,
        "scenario.scheme": cfg.scheme,
        "scenario.c_fixed": "default" if cfg.c_fixed is None else cfg.c_fixed,
        "scenario.master_seed": cfg.master_seed,
        "scenario.condition_outage": str(cfg.condition_outage).lower(),
        "scenario.unmatched_rate": cfg.unmatched_rate,
    }
    return {k: repr(v) if isinstance(v, float) else str(v) for k, v in items.items()}


def dump_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_items(cfg).items())
