"""Ladder environments and the dependent bond model on the quarter plane.

Coordinates: a horizontal bond ``(x, y)-(x+1, y)`` lies in ladder ``E^H_x``
and a vertical bond ``(x, y)-(x, y+1)`` in ladder ``E^V_y``.  Bond fields of a
box ``[0, n1] x [0, n2]`` are stored as boolean arrays indexed ``[x, y]``:
``open_h`` has shape ``(n1, n2 + 1)`` and ``open_v`` shape ``(n1 + 1, n2)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .rng import Stream, Tag


class ParameterError(ValueError):
    """Invalid numeric parameter."""


class WindowError(IndexError):
    """Coordinates outside the environment window."""


class Orientation(str, enum.Enum):
    H = "H"
    V = "V"


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or value != value:
        raise ParameterError(f"{name}={value!r} is not a probability")


@dataclass(frozen=True, eq=False)
class LadderEnvironment:
    """Pair of bad-ladder indicator sequences on a finite window."""

    delta: float
    xi_h: np.ndarray
    xi_v: np.ndarray

    def __post_init__(self):
        xi_h = np.asarray(self.xi_h, dtype=np.uint8)
        xi_v = np.asarray(self.xi_v, dtype=np.uint8)
        if xi_h.ndim != 1 or xi_v.ndim != 1:
            raise ParameterError("ladder sequences must be one-dimensional")
        if xi_h.size < 2 or xi_v.size < 2:
            raise ParameterError("window widths must be at least 2")
        if np.any(xi_h > 1) or np.any(xi_v > 1):
            raise ParameterError("ladder sequences must be binary")
        xi_h.setflags(write=False)
        xi_v.setflags(write=False)
        object.__setattr__(self, "xi_h", xi_h)
        object.__setattr__(self, "xi_v", xi_v)

    @property
    def width_h(self) -> int:
        return int(self.xi_h.size)

    @property
    def width_v(self) -> int:
        return int(self.xi_v.size)

    @property
    def max_box(self) -> tuple[int, int]:
        """Largest ``(n1, n2)`` whose box is fully classified by the window."""
        return self.width_h - 1, self.width_v - 1

    def bad_positions(self, orientation: Orientation | str) -> np.ndarray:
        xi = self.xi_h if Orientation(orientation) is Orientation.H else self.xi_v
        return np.flatnonzero(xi)

    def __eq__(self, other):
        if not isinstance(other, LadderEnvironment):
            return NotImplemented
        return (self.delta == other.delta and np.array_equal(self.xi_h, other.xi_h)
                and np.array_equal(self.xi_v, other.xi_v))

    def to_text(self) -> str:
        bits = lambda a: "".join("1" if b else "0" for b in a)  # noqa: E731
        return f"H:{bits(self.xi_h)}\nV:{bits(self.xi_v)}\n"

    @classmethod
    def from_text(cls, text: str, delta: float = float("nan")) -> "LadderEnvironment":
        seqs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            label, _, bits = line.partition(":")
            if label not in ("H", "V") or not set(bits) <= {"0", "1"}:
                raise ValueError(f"malformed environment line: {line!r}")
            seqs[label] = np.array([c == "1" for c in bits], dtype=np.uint8)
        if set(seqs) != {"H", "V"}:
            raise ValueError("environment text needs one H: and one V: line")
        return cls(delta, seqs["H"], seqs["V"])


class Bond(NamedTuple):
    """A bond of ``E^H_i`` (``transverse`` = y) or ``E^V_i`` (``transverse`` = x)."""

    orientation: Orientation
    ladder: int
    transverse: int

    @classmethod
    def between(cls, u: tuple[int, int], v: tuple[int, int]) -> "Bond":
        (x0, y0), (x1, y1) = sorted([tuple(u), tuple(v)])
        if y0 == y1 and x1 == x0 + 1:
            return cls(Orientation.H, x0, y0)
        if x0 == x1 and y1 == y0 + 1:
            return cls(Orientation.V, y0, x0)
        raise ValueError(f"{u} and {v} are not nearest neighbours")

    @property
    def endpoints(self) -> tuple[tuple[int, int], tuple[int, int]]:
        i, t = self.ladder, self.transverse
        if Orientation(self.orientation) is Orientation.H:
            return (i, t), (i + 1, t)
        return (t, i), (t, i + 1)


@dataclass(frozen=True)
class ModelParams:
    p_g: float
    p_b: float
    delta: float = 0.0
    strict: bool = True

    def __post_init__(self):
        for name in ("p_g", "p_b", "delta"):
            _check_prob(name, getattr(self, name))
        if self.strict and not (0.0 < self.p_b < self.p_g < 1.0):
            raise ParameterError("model requires 0 < p_b < p_g < 1 "
                                 "(pass strict=False for degenerate checks)")


class Classification(NamedTuple):
    useless: bool
    ladder_bad: bool


USELESS = Classification(True, True)


def sample_environment(delta: float, width_h: int, width_v: int,
                       stream: Stream) -> LadderEnvironment:
    """Independent Bernoulli(delta) bad-ladder indicators on both axes."""
    _check_prob("delta", delta)
    if width_h < 2 or width_v < 2:
        raise ParameterError("window widths must be at least 2")
    xi_h = stream.uniform_vector(Tag.ENV_H, width_h) < delta
    xi_v = stream.uniform_vector(Tag.ENV_V, width_v) < delta
    return LadderEnvironment(delta, xi_h, xi_v)


def _useless_line(xi: np.ndarray, line: int) -> bool:
    # the quarter plane has no ladder at index -1
    return line >= 1 and bool(xi[line - 1]) and bool(xi[line])


def classify_bond(env: LadderEnvironment, bond: Bond) -> Classification:
    orient = Orientation(bond.orientation)
    i, t = bond.ladder, bond.transverse
    if i < 0 or t < 0:
        raise WindowError(f"negative coordinates in {bond}")
    own, other = (env.xi_h, env.xi_v) if orient is Orientation.H else (env.xi_v, env.xi_h)
    # an H bond sits on the horizontal line y = t, read off the V ladders
    if i >= own.size or t >= other.size:
        raise WindowError(f"{bond} lies outside the environment window")
    if _useless_line(other, t):
        return USELESS
    return Classification(False, bool(own[i]))


def conditional_open_prob(env: LadderEnvironment, params: ModelParams, bond: Bond) -> float:
    cls = classify_bond(env, bond)
    if cls.useless:
        return 0.0
    return params.p_b if cls.ladder_bad else params.p_g


def useless_lines(xi: np.ndarray) -> np.ndarray:
    """Boolean mask over lines ``0..len(xi)-1``: all orthogonal bonds useless."""
    xi = np.asarray(xi, dtype=bool)
    out = np.zeros(xi.size, dtype=bool)
    out[1:] = xi[:-1] & xi[1:]
    return out


def open_probabilities(env: LadderEnvironment, params: ModelParams,
                       box: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Per-bond opening probabilities ``(prob_h, prob_v)`` over ``box``."""
    n1, n2 = _check_box(env, box)
    bad_h = env.xi_h[:n1].astype(bool)
    bad_v = env.xi_v[:n2].astype(bool)
    prob_h = np.where(bad_h, params.p_b, params.p_g)[:, None] * np.ones((1, n2 + 1))
    prob_v = np.where(bad_v, params.p_b, params.p_g)[None, :] * np.ones((n1 + 1, 1))
    prob_h[:, useless_lines(env.xi_v)[: n2 + 1]] = 0.0
    prob_v[useless_lines(env.xi_h)[: n1 + 1], :] = 0.0
    return prob_h, prob_v


def _check_box(env: LadderEnvironment, box: tuple[int, int]) -> tuple[int, int]:
    n1, n2 = int(box[0]), int(box[1])
    if n1 < 1 or n2 < 1:
        raise ParameterError(f"box {box} must have positive sides")
    if n1 > env.width_h - 1 or n2 > env.width_v - 1:
        raise WindowError(f"box {box} exceeds window {env.max_box}")
    return n1, n2


@dataclass(frozen=True, eq=False)
class BondConfiguration:
    """Open/closed bond states on ``[0, n1] x [0, n2]``."""

    box: tuple[int, int]
    open_h: np.ndarray
    open_v: np.ndarray

    def __post_init__(self):
        n1, n2 = self.box
        if self.open_h.shape != (n1, n2 + 1) or self.open_v.shape != (n1 + 1, n2):
            raise ParameterError("bond field shapes do not match the box")
        self.open_h.setflags(write=False)
        self.open_v.setflags(write=False)

    def is_open(self, bond: Bond) -> bool:
        if Orientation(bond.orientation) is Orientation.H:
            return bool(self.open_h[bond.ladder, bond.transverse])
        return bool(self.open_v[bond.transverse, bond.ladder])

    def open_fraction(self) -> float:
        return (self.open_h.sum() + self.open_v.sum()) / (self.open_h.size + self.open_v.size)

    def to_grid(self):
        """Site-bond grid with every site open (the bond model as site-bond)."""
        from .perc_core import SiteBondGrid

        n1, n2 = self.box
        return SiteBondGrid(np.ones((n1 + 1, n2 + 1), dtype=bool), self.open_h, self.open_v)


def bond_uniforms(stream: Stream, box: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """The single uniform variate attached to each bond, keyed by (ladder, offset)."""
    n1, n2 = int(box[0]), int(box[1])
    u_h = stream.uniform(Tag.BOND_H, n1, n2 + 1)
    u_v = stream.uniform(Tag.BOND_V, n2, n1 + 1).T
    return u_h, u_v


def sample_configuration(env: LadderEnvironment, params: ModelParams,
                         box: tuple[int, int], stream: Stream) -> BondConfiguration:
    """Each bond is open iff its uniform falls below its conditional probability."""
    prob_h, prob_v = open_probabilities(env, params, box)
    u_h, u_v = bond_uniforms(stream, box)
    return BondConfiguration((int(box[0]), int(box[1])), u_h < prob_h, u_v < prob_v)


def sample_homogeneous(p: float, box: tuple[int, int], stream: Stream) -> BondConfiguration:
    """Plain Bernoulli(p) bond percolation with the same stream layout."""
    _check_prob("p", p)
    u_h, u_v = bond_uniforms(stream, box)
    return BondConfiguration((int(box[0]), int(box[1])), u_h < p, u_v < p)
