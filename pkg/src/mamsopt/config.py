"""Run configuration: sectioned key = value files.

Every value read is recorded, so the fully resolved configuration (defaults
and command-line overrides included) can be echoed into output headers.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .engine import Design, StoppingRule
from .errors import ConfigurationError

AUTO = "auto"
_KEY_LINE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


class ConfigFileError(ConfigurationError):
    pass


def _line_map(text: str) -> dict:
    lines = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_LINE.match(line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = _KEY_LINE.match(line)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = no
    return lines


class Reader:
    """Typed access to a parsed file with line-anchored errors."""

    def __init__(self, text: str, source: str = "<config>"):
        self.source = source
        self.parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            self.parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigFileError(f"{source}: {exc}") from None
        self.lines = _line_map(text)
        self.resolved: dict[str, dict[str, str]] = {}

    @classmethod
    def from_path(cls, path) -> "Reader":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigFileError(f"{path}: cannot read config ({exc.strerror})") from None
        return cls(text, str(path))

    def has_section(self, section: str) -> bool:
        return self.parser.has_section(section)

    def error(self, section: str, key: str | None, msg: str) -> ConfigFileError:
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        where = f"{self.source}:{line}" if line else self.source
        label = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigFileError(f"{where}: {label}: {msg}")

    def _raw(self, section, key, default):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is _REQUIRED:
            if not self.parser.has_section(section):
                raise ConfigFileError(f"{self.source}: missing section [{section}] "
                                      f"(required key '{key}')")
            raise self.error(section, None, f"missing required key '{key}'")
        return default

    def _record(self, section, key, value):
        self.resolved.setdefault(section, {})[key] = value

    def get(self, section, key, conv=str, default=None, check=None, required=False):
        raw = self._raw(section, key, _REQUIRED if required else default)
        if raw is None:
            return None
        if isinstance(raw, str):
            try:
                value = conv(raw)
            except (ValueError, ZeroDivisionError) as exc:
                raise self.error(section, key, f"cannot parse {raw!r} ({exc})") from None
        else:
            value = raw
        if check is not None:
            msg = check(value)
            if msg:
                raise self.error(section, key, msg)
        self._record(section, key, _fmt(value))
        return value

    def set_resolved(self, section, key, value):
        self._record(section, key, _fmt(value))

    def header(self, command: str) -> str:
        out = [f"# mamsopt {command}", "# resolved configuration:"]
        for section in sorted(self.resolved):
            out.append(f"# [{section}]")
            for key in sorted(self.resolved[section]):
                out.append(f"#   {key} = {self.resolved[section][key]}")
        return "\n".join(out) + "\n"


_REQUIRED = object()


def _fmt(value) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, StoppingRule):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def number(text: str) -> float:
    """Float, also accepting fractions like ``1/3``."""
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def integer(text: str) -> int:
    value = int(text.strip())
    return value


def boolean(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def number_list(text: str) -> list[float]:
    return [number(x) for x in text.split(",") if x.strip()]


def word_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def auto_or(conv):
    def parse(text: str):
        if text.strip().lower() == AUTO:
            return AUTO
        return conv(text)
    return parse


def in_open_unit(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def positive(v):
    return None if v > 0 else "must be positive"


def non_negative(v):
    return None if v >= 0 else "must be non-negative"


def at_least(lo):
    def check(v):
        return None if v >= lo else f"must be >= {lo}"
    return check


def u64(v):
    return None if 0 <= v < 2**64 else "must be a 64-bit unsigned integer"


def rule_value(text: str) -> StoppingRule:
    try:
        return StoppingRule(text.strip().lower())
    except ValueError:
        raise ValueError("expected 'simultaneous' or 'separate'") from None


def read_design(reader: Reader, section: str = "design") -> Design:
    rule = reader.get(section, "rule", rule_value, required=True)
    n = reader.get(section, "n", integer, required=True, check=at_least(1))
    e = reader.get(section, "e", number_list, required=True)
    f = reader.get(section, "f", number_list, required=True)
    try:
        return Design(n=n, e=tuple(e), f=tuple(f), rule=rule)
    except ConfigurationError as exc:
        raise reader.error(section, "e", str(exc)) from None


@dataclass
class Overrides:
    seed: int | None = None
    replicates: int | None = None
    threads: int | None = None
    out: str | None = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# section schemas


def _reraise(reader: Reader, section: str, key: str | None, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigurationError as exc:
        if isinstance(exc, ConfigFileError):
            raise
        raise reader.error(section, key, str(exc)) from None


def read_trial(reader: Reader, need_deltas: bool = True):
    from .optimize import TrialSettings

    s = "trial"
    K = reader.get(s, "K", integer, required=True, check=at_least(1))
    J = reader.get(s, "J", integer, required=True, check=at_least(1))
    alpha = reader.get(s, "alpha", number, default="0.05", check=in_open_unit)
    beta = reader.get(s, "beta", number, default="0.1", check=in_open_unit)
    sigma2 = reader.get(s, "sigma2", number, default="1.0", check=positive)
    if need_deltas:
        d1 = reader.get(s, "delta1", number, required=True, check=positive)
        d0 = reader.get(s, "delta0", number, required=True)
        if not d0 < d1:
            raise reader.error(s, "delta0", "must be below delta1")
    else:
        d1, d0 = 1.0, 0.0
    return TrialSettings(K=K, J=J, alpha=alpha, beta=beta, delta1=d1, delta0=d0, sigma2=sigma2)


def read_bank(reader: Reader, K: int, J: int, n_needed: int, overrides: Overrides):
    """Bank settings; ``n_max = auto`` resolves to ``n_needed``."""
    from .bank import BankConfig

    s = "bank"
    replicates = reader.get(s, "replicates", integer, default="100000", check=at_least(1))
    if overrides.replicates is not None:
        replicates = overrides.replicates
        reader.set_resolved(s, "replicates", replicates)
    seed = reader.get(s, "seed", integer, default="20170601", check=u64)
    if overrides.seed is not None:
        seed = overrides.seed
        reader.set_resolved(s, "seed", seed)
    n_max = reader.get(s, "n_max", auto_or(integer), default=AUTO)
    if n_max == AUTO:
        n_max = max(2, n_needed)
        reader.set_resolved(s, "n_max", n_max)
    elif n_max < n_needed:
        raise reader.error(s, "n_max", f"bank n_max={n_max} is below the required group "
                                       f"size n={n_needed}")
    lean = reader.get(s, "lean", boolean, default="false")
    budget = reader.get(s, "memory_budget_mb", number, default="2048", check=positive)
    cache = reader.get(s, "cache", str, default=None)
    config = _reraise(reader, s, None, BankConfig, replicates=replicates, K=K, J=J,
                      n_max=n_max, seed=seed, lean=lean, memory_budget_mb=budget)
    return config, cache


def read_statistic(reader: Reader, section: str, sigma: float):
    from .engine import TStat, ZStat

    kind = reader.get(section, "statistic", str, default="t",
                      check=lambda v: None if v in ("t", "z") else "expected 't' or 'z'")
    return TStat() if kind == "t" else ZStat(sigma)


def read_objective(reader: Reader):
    s = "objective"
    w = [reader.get(s, f"w{i}", number, default="1/3", check=non_negative) for i in (1, 2, 3)]
    penalty = reader.get(s, "penalty", auto_or(number), default=AUTO)
    if penalty != AUTO and not penalty > 0:
        raise reader.error(s, "penalty", "must be positive or 'auto'")
    return w, penalty


def read_ce(reader: Reader, overrides: Overrides):
    """CE settings; an ``auto`` n range is returned as None for the caller to fill."""
    from .optimize import CEConfig

    s = "ce"
    kw = dict(
        population=reader.get(s, "population", integer, default="1000", check=at_least(1)),
        elite_frac=reader.get(s, "elite_frac", number, default="0.1", check=in_open_unit),
        smoothing=reader.get(s, "smoothing", number, default="0.7", check=positive),
        max_iters=reader.get(s, "max_iters", integer, default="100", check=at_least(1)),
        tol_sd=reader.get(s, "tol_sd", number, default="0.01", check=positive),
        init_sd=reader.get(s, "init_sd", number, default="0.5", check=positive),
        refine_neighbours=reader.get(s, "refine_neighbours", integer, default="1",
                                     check=at_least(0)),
        refine_sd=reader.get(s, "refine_sd", number, default="0.1", check=positive),
        seed=reader.get(s, "seed", integer, default="1", check=u64),
    )
    if overrides.seed is not None:
        kw["seed"] = overrides.seed
        reader.set_resolved(s, "seed", overrides.seed)
    kw["n_smoothing"] = reader.get(s, "n_smoothing", number, default=None)
    for key in ("f_box", "e_box", "c_box"):
        box = reader.get(s, key, number_list, default=None)
        if box is not None:
            if len(box) != 2:
                raise reader.error(s, key, "expected two values: lo, hi")
            kw[key] = tuple(box)
    n_range = reader.get(s, "n_range", auto_or(lambda t: [integer(x) for x in t.split(",")]),
                         default=AUTO)
    if n_range != AUTO and len(n_range) != 2:
        raise reader.error(s, "n_range", "expected two integers: lo, hi")
    warm = None
    if reader.parser.has_option(s, "warm_n"):
        warm = (reader.get(s, "warm_n", integer, check=at_least(1)),
                reader.get(s, "warm_e", number_list, required=True),
                reader.get(s, "warm_f", number_list, required=True))

    def build(n_range_value):
        reader.set_resolved(s, "n_range", list(n_range_value))
        return _reraise(reader, s, None, CEConfig, n_range=tuple(n_range_value), **kw)

    return build, (None if n_range == AUTO else n_range), warm
