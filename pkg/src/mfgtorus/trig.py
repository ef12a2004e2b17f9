"""Trigonometric-polynomial terms and their text grammar.

A term is ``amp * cos(2pi*(k.x + l.y + phase))`` with integer frequency
vectors ``k`` (and ``l`` for two-point kernels).  Text forms accepted::

    0.1 * cos(2pi*(x1 - y1))
    -0.3*sin(2pi*(2*x1 + x2 + 0.25))
    0.5                      # constant term
    1.0 * bump(0.5; 8.0)     # von-Mises-like bump, densities only

``sin`` is stored as ``cos`` with the phase shifted by ``-1/4``.  ``x`` and
``y`` are accepted as aliases of ``x1`` and ``y1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class TermSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class TrigTerm:
    amp: float
    k: tuple[int, ...]
    l: tuple[int, ...] = ()
    phase: float = 0.0

    def angle(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """``2pi (k.x + l.y + phase)`` for coordinate arrays with the axis first."""
        a = sum(ki * xi for ki, xi in zip(self.k, x) if ki) + self.phase
        if self.l:
            a = a + sum(li * yi for li, yi in zip(self.l, y) if li)
        return TWO_PI * np.asarray(a, dtype=float)


@dataclass(frozen=True)
class BumpTerm:
    """``amp * exp(kappa * sum_i cos(2pi (x_i - c_i)))``."""

    amp: float
    center: tuple[float, ...]
    kappa: float


@dataclass(frozen=True)
class TrigPoly:
    """Sum of terms on ``T^d`` (``two_point=False``) or ``T^d x T^d``."""

    terms: tuple = ()
    d: int = 1
    two_point: bool = False

    def __post_init__(self):
        for t in self.terms:
            if isinstance(t, BumpTerm):
                if self.two_point:
                    raise TermSyntaxError("bump terms are only allowed in one-point functions")
                if len(t.center) != self.d:
                    raise TermSyntaxError(f"bump center needs {self.d} coordinates")
                continue
            if len(t.k) != self.d or len(t.l) != (self.d if self.two_point else 0):
                raise TermSyntaxError(f"term {t} does not match dimension {self.d}")

    @property
    def is_zero(self) -> bool:
        return all(t.amp == 0.0 for t in self.terms)

    def scaled(self, c: float) -> "TrigPoly":
        terms = tuple(
            BumpTerm(c * t.amp, t.center, t.kappa) if isinstance(t, BumpTerm)
            else TrigTerm(c * t.amp, t.k, t.l, t.phase)
            for t in self.terms
        )
        return TrigPoly(terms, self.d, self.two_point)

    def max_frequency(self) -> float:
        """Largest Euclidean norm of a frequency vector (x and y parts combined)."""
        best = 0.0
        for t in self.terms:
            if isinstance(t, TrigTerm) and t.amp != 0.0:
                best = max(best, float(np.sqrt(sum(v * v for v in t.k + t.l))))
        return best

    def __call__(self, x, y=None) -> np.ndarray:
        """Evaluate at coordinate arrays; ``x`` (and ``y``) have the axis first."""
        x = [np.asarray(xi, dtype=float) for xi in x]
        if self.two_point:
            y = [np.asarray(yi, dtype=float) for yi in y]
            shape = np.broadcast_shapes(*(xi.shape for xi in x), *(yi.shape for yi in y))
        else:
            shape = np.broadcast_shapes(*(xi.shape for xi in x))
        out = np.zeros(shape)
        for t in self.terms:
            if isinstance(t, BumpTerm):
                e = sum(np.cos(TWO_PI * (xi - ci)) for xi, ci in zip(x, t.center))
                out = out + t.amp * np.exp(t.kappa * e)
            else:
                out = out + t.amp * np.cos(t.angle(x, y))
        return out

    def on_grid(self, N: int) -> np.ndarray:
        """Node values: ``(N,)*d`` for one-point, ``(N,)*2d`` (x axes first) for two-point."""
        c = np.arange(N) / N
        nvar = 2 * self.d if self.two_point else self.d
        mesh = np.meshgrid(*([c] * nvar), indexing="ij", sparse=True)
        if self.two_point:
            return np.broadcast_to(self(mesh[: self.d], mesh[self.d:]), (N,) * nvar).copy()
        return np.broadcast_to(self(mesh), (N,) * nvar).copy()


# --- grammar ------------------------------------------------------------------

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM_RE = re.compile(
    rf"^\s*(?P<amp>{_NUM})\s*(?:\*\s*(?P<fn>cos|sin)\s*\(\s*2\s*pi\s*\*?\s*(?:\((?P<lin>[^()]*)\)|(?P<lin2>[^()]+?))\s*\))?\s*$"
)
_BUMP_RE = re.compile(rf"^\s*(?P<amp>{_NUM})\s*\*\s*bump\s*\((?P<center>[^;()]*);(?P<kappa>[^;()]*)\)\s*$")
_LIN_TOKEN = re.compile(r"([+-]?)\s*([^+-]+)")


def _parse_linear(text: str, d: int, two_point: bool) -> tuple[tuple[int, ...], tuple[int, ...], float]:
    k = [0] * d
    l = [0] * d
    phase = 0.0
    s = text.replace(" ", "")
    if not s:
        raise TermSyntaxError("empty linear form")
    # merge exponent signs like 1e-3 back into their token
    tokens = []
    for m in _LIN_TOKEN.finditer(s):
        sign, body = m.group(1), m.group(2)
        if tokens and re.search(r"\d[eE]$", tokens[-1][1]):
            tokens[-1] = (tokens[-1][0], tokens[-1][1] + sign + body)
        else:
            tokens.append((sign, body))
    for sign, body in tokens:
        sgn = -1 if sign == "-" else 1
        m = re.fullmatch(r"(?:(\d+)\*)?([xy])(\d?)", body)
        if m:
            coef = int(m.group(1)) if m.group(1) else 1
            var, idx = m.group(2), int(m.group(3) or 1)
            if not 1 <= idx <= d:
                raise TermSyntaxError(f"variable {var}{idx} out of range for d={d}")
            if var == "y" and not two_point:
                raise TermSyntaxError("y variables only allowed in two-point kernels")
            (k if var == "x" else l)[idx - 1] += sgn * coef
            continue
        try:
            phase += sgn * float(body)
        except ValueError:
            raise TermSyntaxError(f"cannot parse {sign}{body!r} in linear form") from None
    return tuple(k), tuple(l) if two_point else (), phase


def parse_term(text: str, d: int, two_point: bool = False, allow_bump: bool = False):
    m = _BUMP_RE.match(text)
    if m:
        if not allow_bump:
            raise TermSyntaxError("bump terms are only allowed in initial densities")
        try:
            center = tuple(float(c) for c in m.group("center").split(","))
            kappa = float(m.group("kappa"))
        except ValueError:
            raise TermSyntaxError(f"bad bump term {text!r}") from None
        if len(center) != d:
            raise TermSyntaxError(f"bump center needs {d} coordinates")
        return BumpTerm(float(m.group("amp")), center, kappa)
    m = _TERM_RE.match(text)
    if not m:
        raise TermSyntaxError(f"cannot parse term {text!r}")
    amp = float(m.group("amp"))
    zeros = (0,) * d
    if m.group("fn") is None:
        return TrigTerm(amp, zeros, zeros if two_point else (), 0.0)
    k, l, phase = _parse_linear(m.group("lin") or m.group("lin2"), d, two_point)
    if m.group("fn") == "sin":
        phase -= 0.25
    return TrigTerm(amp, k, l, phase)


def _split_top(text: str) -> list[str]:
    """Split on ``;`` and on additive ``+``/``-`` outside parentheses."""
    parts, depth, cur = [], 0, ""
    for i, ch in enumerate(text):
        depth += ch == "("
        depth -= ch == ")"
        prev = cur.rstrip()
        additive = (
            ch in "+-" and depth == 0 and prev
            and prev[-1] not in "*;eE" and not (prev[-1] in "eE" and prev[:-1][-1:].isdigit())
        )
        if ch == ";" and depth == 0:
            parts.append(cur)
            cur = ""
        elif additive:
            parts.append(cur)
            cur = ch if ch == "-" else ""
        else:
            cur += ch
    parts.append(cur)
    return parts


def parse_poly(text: str, d: int, two_point: bool = False, allow_bump: bool = False) -> TrigPoly:
    """Parse a term list separated by newlines, ``;`` or ``+``/``-`` (empty means zero)."""
    parts = []
    for line in text.splitlines():
        parts.extend(_split_top(line))
    parts = [re.sub(r"^\s*([+-])\s+", r"\1", p) for p in parts if p.strip()]
    terms = tuple(parse_term(p, d, two_point, allow_bump) for p in parts)
    return TrigPoly(terms, d, two_point)


def _fmt_num(v: float) -> str:
    return repr(float(v))


def format_term(t, d: int, two_point: bool) -> str:
    if isinstance(t, BumpTerm):
        return f"{_fmt_num(t.amp)} * bump({', '.join(_fmt_num(c) for c in t.center)}; {_fmt_num(t.kappa)})"
    pieces = []
    for var, coefs in (("x", t.k), ("y", t.l)):
        for i, c in enumerate(coefs, start=1):
            if c:
                pieces.append(f"{'-' if c < 0 else '+'} {abs(c)}*{var}{i}")
    if not pieces and t.phase == 0.0:
        return _fmt_num(t.amp)
    pieces.append(f"{'-' if t.phase < 0 else '+'} {_fmt_num(abs(t.phase))}")
    lin = " ".join(pieces).lstrip("+ ")
    if pieces[0].startswith("-"):
        lin = "-" + lin.lstrip("- ")
    return f"{_fmt_num(t.amp)} * cos(2pi*({lin}))"


def format_poly(poly: TrigPoly) -> str:
    return "; ".join(format_term(t, poly.d, poly.two_point) for t in poly.terms)
