"""Run configuration: an INI-style file with trigonometric term lists.

See ``docs/config.md`` for the grammar.  Parsing is done with
:mod:`configparser`; validation errors are reported as ``ConfigError`` with
the file line and ``section.key`` of the offending field.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .costs import KernelCost
from .grid import TorusGrid
from .oracles import McOptions
from .trig import TermSyntaxError, TrigPoly, format_poly, parse_poly

ORACLES = ("feynman_kac", "particles", "exploitability", "decoupling")

_ORACLE_DEFAULTS = {
    "feynman_kac": McOptions(n_samples=100_000, n_steps=400, seed=1),
    "particles": McOptions(n_samples=100_000, n_steps=100, seed=2),
    "exploitability": McOptions(n_samples=4_000, n_steps=100, seed=3),
    "decoupling": McOptions(n_samples=10_000, n_steps=400, seed=4),
}

_KNOWN = {
    "grid": {"d", "N", "M", "T"},
    "cost": {"p_bar", "p_hat", "h_bar", "h_hat"},
    "initial": {"mu"},
    "solver": {"theta", "tol", "max_iter", "seeds", "cfl", "clip_budget"},
    "verify": {"residual_tol", "fk_points", "modulus_pairs", "perturbations", "perturbation_amplitude",
               "particle_w1_tol", "fk_bias"},
    "output": {"dir"},
}
_MC_KEYS = {"n_samples", "n_steps", "seed", "antithetic", "block_size"}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None, path: str = "<config>"):
        where = path + (f":{line}" if line else "") + (f" [{field}]" if field else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    d: int
    N: int
    M: int
    T: float
    p_bar: TrigPoly
    p_hat: TrigPoly
    h_bar: TrigPoly
    h_hat: TrigPoly
    mu: TrigPoly
    theta: float = 0.5
    tol: float = 1e-6
    max_iter: int = 50
    seeds: tuple[int, ...] = (0,)
    cfl: float = 0.25
    clip_budget: float = 1e-12
    residual_tol: float = 5e-3
    fk_points: int = 5
    fk_bias: float = 2e-3
    modulus_pairs: int = 50
    perturbations: int = 10
    perturbation_amplitude: float = 0.2
    particle_w1_tol: float = 0.02
    oracles: tuple[tuple[str, McOptions], ...] = tuple(_ORACLE_DEFAULTS.items())
    output_dir: str | None = None

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.d, self.N, self.M, self.T)

    @property
    def cost(self) -> KernelCost:
        return KernelCost(self.p_bar, self.p_hat, self.h_bar, self.h_hat)

    def oracle(self, name: str) -> McOptions:
        return dict(self.oracles)[name]

    def mu_values(self):
        """Initial density on the grid nodes, normalized to unit mass."""
        vals = self.mu.on_grid(self.N)
        return vals / (vals.sum() * self.grid.cell_volume)

    def with_seed(self, seed: int) -> "RunConfig":
        """Override the solver seeds and every oracle seed."""
        return replace(self, seeds=(seed,), oracles=tuple((k, replace(o, seed=seed)) for k, o in self.oracles))

    def with_threads(self, threads: int) -> "RunConfig":
        return replace(self, oracles=tuple((k, replace(o, threads=threads)) for k, o in self.oracles))

    def serialize(self) -> str:
        out = [
            "[grid]", f"d = {self.d}", f"N = {self.N}", f"M = {self.M}", f"T = {self.T!r}", "",
            "[cost]",
            f"p_bar = {format_poly(self.p_bar)}", f"p_hat = {format_poly(self.p_hat)}",
            f"h_bar = {format_poly(self.h_bar)}", f"h_hat = {format_poly(self.h_hat)}", "",
            "[initial]", f"mu = {format_poly(self.mu)}", "",
            "[solver]", f"theta = {self.theta!r}", f"tol = {self.tol!r}", f"max_iter = {self.max_iter}",
            f"seeds = {', '.join(str(s) for s in self.seeds)}", f"cfl = {self.cfl!r}",
            f"clip_budget = {self.clip_budget!r}", "",
            "[verify]",
        ]
        out += [f"{k} = {getattr(self, k)!r}" for k in sorted(_KNOWN["verify"])]
        for name, o in self.oracles:
            out += ["", f"[oracle.{name}]", f"n_samples = {o.n_samples}", f"n_steps = {o.n_steps}",
                    f"seed = {o.seed}", f"antithetic = {str(o.antithetic).lower()}", f"block_size = {o.block_size}"]
        if self.output_dir is not None:
            out += ["", "[output]", f"dir = {self.output_dir}"]
        return "\n".join(out) + "\n"

    def digest(self) -> str:
        """SHA-256 of the canonical serialization (threads excluded by construction)."""
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to the 1-based line where the key appears."""
    index, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            index[(section, "")] = i
            continue
        m = re.match(r"([A-Za-z_][\w.]*)\s*[=:]", s)
        if m and section is not None and not raw[:1].isspace():
            index[(section, m.group(1))] = i
    return index


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    """Parse and validate configuration text.

    Raises:
        ConfigError: with the line and field of the first problem found.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line=line, path=path) from None
    lines = _line_index(text)

    def err(section, key, msg):
        return ConfigError(msg, lines.get((section, key)) or lines.get((section, "")), f"{section}.{key}", path)

    for sec in cp.sections():
        if sec.startswith("oracle."):
            name = sec.split(".", 1)[1]
            if name not in ORACLES:
                raise ConfigError(f"unknown oracle {name!r} (known: {', '.join(ORACLES)})",
                                  lines.get((sec, "")), sec, path)
            known = _MC_KEYS
        elif sec in _KNOWN:
            known = _KNOWN[sec]
        else:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, "")), sec, path)
        for key in cp[sec]:
            if key not in known:
                raise err(sec, key, f"unknown key (allowed: {', '.join(sorted(known))})")

    def get(section, key, conv, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                raise ConfigError("missing required field", lines.get((section, "")), f"{section}.{key}", path)
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TermSyntaxError) as exc:
            raise err(section, key, f"invalid value {raw!r}: {exc}") from None

    def boolean(s):
        s = s.strip().lower()
        if s in ("true", "yes", "1", "on"):
            return True
        if s in ("false", "no", "0", "off"):
            return False
        raise ValueError("expected true or false")

    d = get("grid", "d", int, required=True)
    N = get("grid", "N", int, required=True)
    M = get("grid", "M", int, required=True)
    T = get("grid", "T", float, required=True)
    try:
        TorusGrid(d, N, M, T)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in ("N", "M", "T") if msg.startswith(k)), "d")
        raise err("grid", key, msg) from None

    polys = {k: get("cost", k, lambda s, two=k.endswith("bar"): parse_poly(s, d, two), TrigPoly((), d, k.endswith("bar")))
             for k in ("p_bar", "p_hat", "h_bar", "h_hat")}
    mu = get("initial", "mu", lambda s: parse_poly(s, d, False, allow_bump=True), required=True)
    if mu.is_zero:
        raise err("initial", "mu", "initial density has no terms")
    mu_vals = mu.on_grid(N)
    if mu_vals.min() < 0.0 or mu_vals.sum() <= 0.0:
        raise err("initial", "mu", "initial density must be nonnegative with positive mass on the grid")

    kw: dict = {}
    for key, conv in (("theta", float), ("tol", float), ("max_iter", int), ("cfl", float), ("clip_budget", float)):
        val = get("solver", key, conv)
        if val is not None:
            kw[key] = val
    seeds = get("solver", "seeds", lambda s: tuple(int(x) for x in re.split(r"[,\s]+", s.strip()) if x))
    if seeds is not None:
        if not seeds or min(seeds) < 0:
            raise err("solver", "seeds", "seeds must be a nonempty list of nonnegative integers")
        kw["seeds"] = seeds
    if not 0.0 < kw.get("theta", 0.5) <= 1.0:
        raise err("solver", "theta", "theta must lie in (0, 1]")
    if kw.get("tol", 1.0) <= 0.0:
        raise err("solver", "tol", "tol must be positive")
    if kw.get("max_iter", 1) < 1:
        raise err("solver", "max_iter", "max_iter must be at least 1")
    if not 0.0 < kw.get("cfl", 0.25) <= 0.9:
        raise err("solver", "cfl", "cfl must lie in (0, 0.9]")

    convs = {"residual_tol": float, "fk_points": int, "modulus_pairs": int, "perturbations": int,
             "perturbation_amplitude": float, "particle_w1_tol": float, "fk_bias": float}
    for key, conv in convs.items():
        val = get("verify", key, conv)
        if val is not None:
            if val < 0:
                raise err("verify", key, "must be nonnegative")
            kw[key] = val

    oracles = []
    for name in ORACLES:
        sec = f"oracle.{name}"
        base = _ORACLE_DEFAULTS[name]
        if cp.has_section(sec):
            over = {}
            for key in ("n_samples", "n_steps", "seed", "block_size"):
                val = get(sec, key, int)
                if val is not None:
                    over[key] = val
            anti = get(sec, "antithetic", boolean)
            if anti is not None:
                over["antithetic"] = anti
            try:
                base = replace(base, **over)
            except ValueError as exc:
                raise ConfigError(str(exc), lines.get((sec, "")), sec, path) from None
        oracles.append((name, base))

    out_dir = get("output", "dir", lambda s: s.strip() or None)
    return RunConfig(d, N, M, T, polys["p_bar"], polys["p_hat"], polys["h_bar"], polys["h_hat"], mu,
                     oracles=tuple(oracles), output_dir=out_dir, **kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", path=str(path)) from None
    return parse_config(text, str(path))


def config_fields(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "config_fields", "ORACLES"]
