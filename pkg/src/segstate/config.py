"""Line-oriented run configuration: `key = value`, `#` comments.

Unknown keys are rejected; every value is validated against the coefficient
profile constraints before a run starts.  Defaults are listed in
DEFAULTS below and documented in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .grid import CoefficientMode, CoefficientProfile

__all__ = ["RunConfig", "parse_config", "DEFAULTS"]

DEFAULTS = {
    "r0": "0.16666666666666666",
    "r1": "0.16666666666666666",
    "r2": "0.16666666666666666",
    "M1": "10.0",
    "M2": "10.0",
    "alpha": "1.0",
    "d": "1.0",
    "mode": "two_patch",
    "mollify_width": "0.0",
    "mollify_floor": "0.0",
    "omega_mean": "1.0",
    "L": "auto",  # 'auto' = twice the construction threshold
    "n": "1024",
    "k_schedule": "100,1000,10000",
    "dt": "0.0002",
    "t_end": "10.0",
    "scheme": "imex_be",
    "record_every": "100",
    "seed": "0",
    "out_dir": ".",
}

_FLOAT_KEYS = (
    "r0",
    "r1",
    "r2",
    "M1",
    "M2",
    "alpha",
    "d",
    "mollify_width",
    "mollify_floor",
    "omega_mean",
    "dt",
    "t_end",
)


@dataclass(frozen=True)
class RunConfig:
    r0: float
    r1: float
    r2: float
    M1: float
    M2: float
    alpha: float
    d: float
    mode: str
    mollify_width: float
    mollify_floor: float
    omega_mean: float
    L: float | None  # None means 'auto'
    n: int
    k_schedule: tuple[float, ...]
    dt: float
    t_end: float
    scheme: str
    record_every: int
    seed: int
    out_dir: str

    def profile(self) -> CoefficientProfile:
        try:
            return CoefficientProfile(
                r0=self.r0,
                r1=self.r1,
                r2=self.r2,
                M1=self.M1,
                M2=self.M2,
                alpha=self.alpha,
                d=self.d,
                mode=CoefficientMode(self.mode),
                mollify_width=self.mollify_width,
                mollify_floor=self.mollify_floor,
                omega_mean=self.omega_mean,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _parse_float(key: str, raw: str, line_no: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"line {line_no}: key '{key}' needs a number, got {raw!r}", line=line_no, key=key)
    if not value == value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"line {line_no}: key '{key}' must be finite", line=line_no, key=key)
    return value


def parse_config(path: str) -> RunConfig:
    """Parse and validate a configuration file."""
    values = dict(DEFAULTS)
    lines_seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw_line in enumerate(fh, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {raw_line.rstrip()!r}", line=line_no)
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"line {line_no}: unknown key '{key}'", line=line_no, key=key)
            values[key] = raw
            lines_seen[key] = line_no

    def line_of(key):
        return lines_seen.get(key, 0)

    floats = {k: _parse_float(k, values[k], line_of(k)) for k in _FLOAT_KEYS}
    for k in ("r0", "r1", "r2", "M1", "M2", "alpha", "d", "omega_mean", "dt", "t_end"):
        if floats[k] <= 0:
            raise ConfigError(f"key '{k}' must be positive, got {floats[k]}", key=k)
    if abs(2 * (floats["r0"] + floats["r1"] + floats["r2"]) - 1.0) > 1e-12:
        raise ConfigError(
            "key 'r2': patch fractions must satisfy 2*r0 + 2*r1 + 2*r2 = 1", key="r2"
        )
    mode = values["mode"]
    if mode not in ("two_patch", "combined"):
        raise ConfigError(f"key 'mode' must be 'two_patch' or 'combined', got {mode!r}", key="mode")
    scheme = values["scheme"]
    if scheme not in ("imex_be", "imex_cn"):
        raise ConfigError(f"key 'scheme' must be 'imex_be' or 'imex_cn', got {scheme!r}", key="scheme")

    if values["L"] == "auto":
        L = None
    else:
        L = _parse_float("L", values["L"], line_of("L"))
        if L <= 0:
            raise ConfigError("key 'L' must be positive or 'auto'", key="L")

    try:
        n = int(values["n"])
        record_every = int(values["record_every"])
        seed = int(values["seed"])
    except ValueError as exc:
        raise ConfigError(f"integer key failed to parse: {exc}") from exc
    if n < 16:
        raise ConfigError("key 'n' must be an integer >= 16", key="n")
    if record_every < 1:
        raise ConfigError("key 'record_every' must be >= 1", key="record_every")

    try:
        k_schedule = tuple(float(tok) for tok in values["k_schedule"].split(",") if tok.strip())
    except ValueError:
        raise ConfigError("key 'k_schedule' must be comma-separated numbers", key="k_schedule")
    if not k_schedule or any(k <= 0 for k in k_schedule) or list(k_schedule) != sorted(k_schedule):
        raise ConfigError("key 'k_schedule' must be increasing positive numbers", key="k_schedule")

    cfg = RunConfig(
        r0=floats["r0"],
        r1=floats["r1"],
        r2=floats["r2"],
        M1=floats["M1"],
        M2=floats["M2"],
        alpha=floats["alpha"],
        d=floats["d"],
        mode=mode,
        mollify_width=floats["mollify_width"],
        mollify_floor=floats["mollify_floor"],
        omega_mean=floats["omega_mean"],
        L=L,
        n=n,
        k_schedule=k_schedule,
        dt=floats["dt"],
        t_end=floats["t_end"],
        scheme=scheme,
        record_every=record_every,
        seed=seed,
        out_dir=values["out_dir"],
    )
    cfg.profile()  # validate the profile constraints eagerly
    return cfg
