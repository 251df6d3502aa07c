"""Domain types shared across the package.

A *broken batch* is a pair of equal-length point lists ``xs`` and ``ys`` whose
pairing has been discarded.  Consumers must treat both lists as multisets.
Points are stored as dense float64 arrays of shape ``(M, dim)``; scalar spaces
use ``dim == 1``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    EmptyDataset,
    NoClosedForm,
    NonFiniteCoordinate,
    ParamOutOfDomain,
    RaggedBatchSizes,
)

__all__ = [
    "ParamDomain",
    "ParamPoint",
    "PairSample",
    "BrokenBatch",
    "Dataset",
    "DensityModel",
    "validate_dataset",
    "format_dataset",
    "parse_dataset",
    "write_dataset",
    "read_dataset",
]

ThetaLike = Union[float, Sequence[float], np.ndarray, "ParamPoint"]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParamPoint:
    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in np.atleast_1d(self.coords))
        if not all(np.isfinite(coords)):
            raise ParamOutOfDomain(f"non-finite parameter {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or np.float64)

    def __float__(self):
        if len(self.coords) != 1:
            raise TypeError("only 1-dim parameters convert to float")
        return self.coords[0]


@dataclass(frozen=True)
class ParamDomain:
    """Axis-aligned box holding the closure of the parameter set."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must have the same positive length")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("domain bounds must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper componentwise, got {lo}, {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ParamDomain":
        return cls((lo,), (hi,))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.upper, self.lower)))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2

    def contains(self, theta: ThetaLike, strict: bool = False) -> bool:
        t = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if t.shape != (self.dim,) or not np.all(np.isfinite(t)):
            return False
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if strict:
            return bool(np.all((lo < t) & (t < hi)))
        return bool(np.all((lo <= t) & (t <= hi)))

    def check(self, theta: ThetaLike, strict: bool = False) -> np.ndarray:
        """Return ``theta`` as a float array, raising if it lies outside."""
        t = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if not self.contains(t, strict=strict):
            where = "interior of" if strict else ""
            raise ParamOutOfDomain(
                f"theta={t.tolist()} not in {where} [{self.lower}, {self.upper}]"
            )
        return t

    def project(self, theta: ThetaLike) -> np.ndarray:
        return np.clip(np.atleast_1d(np.asarray(theta, dtype=np.float64)),
                       self.lower, self.upper)


@dataclass(frozen=True)
class PairSample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", _frozen(np.atleast_1d(self.y)))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise NonFiniteCoordinate("pair has non-finite coordinates")


@dataclass(frozen=True)
class BrokenBatch:
    """One observation: two point lists of common length ``M``.

    ``xs`` has shape ``(M, dx)`` and ``ys`` shape ``(M, dy)``; 1-d inputs are
    promoted to column vectors.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[:, None]
        if ys.ndim == 1:
            ys = ys[:, None]
        object.__setattr__(self, "xs", _frozen(xs))
        object.__setattr__(self, "ys", _frozen(ys))

    @property
    def M(self) -> int:
        return self.xs.shape[0]


def validate_dataset(dataset: Union["Dataset", Iterable[BrokenBatch]]) -> None:
    """Raise if the batches do not form a valid dataset."""
    batches = dataset.batches if isinstance(dataset, Dataset) else list(dataset)
    if not batches:
        raise EmptyDataset("dataset has no batches")
    M = batches[0].M
    dx, dy = batches[0].xs.shape[1], batches[0].ys.shape[1]
    for k, b in enumerate(batches):
        if b.xs.shape[0] != b.ys.shape[0]:
            raise RaggedBatchSizes(
                f"batch {k}: {b.xs.shape[0]} xs but {b.ys.shape[0]} ys")
        if b.M != M:
            raise RaggedBatchSizes(f"batch {k} has size {b.M}, expected {M}")
        if b.M < 1:
            raise EmptyDataset(f"batch {k} is empty")
        if b.xs.shape[1] != dx or b.ys.shape[1] != dy:
            raise RaggedBatchSizes(f"batch {k} has inconsistent point dimension")
        if not (np.all(np.isfinite(b.xs)) and np.all(np.isfinite(b.ys))):
            raise NonFiniteCoordinate(f"batch {k} has non-finite coordinates")


@dataclass(frozen=True)
class Dataset:
    """``N`` broken batches of common size ``M``.

    Stacked views ``xs`` and ``ys`` of shape ``(N, M, dim)`` are built once at
    construction and are read-only.
    """

    batches: tuple
    xs: np.ndarray = field(init=False, repr=False, compare=False)
    ys: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        batches = tuple(self.batches)
        validate_dataset(batches)
        object.__setattr__(self, "batches", batches)
        object.__setattr__(self, "xs", _frozen(np.stack([b.xs for b in batches])))
        object.__setattr__(self, "ys", _frozen(np.stack([b.ys for b in batches])))

    @classmethod
    def from_arrays(cls, xs, ys) -> "Dataset":
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.ndim == 2:
            xs = xs[..., None]
        if ys.ndim == 2:
            ys = ys[..., None]
        if xs.shape[0] != ys.shape[0]:
            raise RaggedBatchSizes("xs and ys hold different numbers of batches")
        return cls(tuple(BrokenBatch(x, y) for x, y in zip(xs, ys)))

    @property
    def N(self) -> int:
        return len(self.batches)

    @property
    def M(self) -> int:
        return self.batches[0].M

    def __len__(self):
        return self.N

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.xs.shape == other.xs.shape and self.ys.shape == other.ys.shape
                and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.ys, other.ys))

    __hash__ = None


# -- text serialization ------------------------------------------------------
# One batch per line: ``batch k: x1;x2;... | y1;y2;...`` with the coordinates of
# a multi-dimensional point separated by commas.  ``%.17g`` round-trips float64.

def _fmt_points(points: np.ndarray) -> str:
    return ";".join(",".join(format(float(c), ".17g") for c in p) for p in points)


def _parse_points(text: str) -> np.ndarray:
    return np.array([[float(c) for c in p.split(",")] for p in text.strip().split(";")],
                    dtype=np.float64)


def format_dataset(dataset: Dataset) -> str:
    lines = [f"batch {k}: {_fmt_points(b.xs)} | {_fmt_points(b.ys)}"
             for k, b in enumerate(dataset.batches)]
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> Dataset:
    batches = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            head, body = line.split(":", 1)
            if not head.strip().startswith("batch"):
                raise ValueError(head)
            left, right = body.split("|")
            batches.append(BrokenBatch(_parse_points(left), _parse_points(right)))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: malformed batch record") from exc
    return Dataset(tuple(batches))


def write_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(format_dataset(dataset), encoding="utf-8")


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


class DensityModel(abc.ABC):
    """A parametric family of densities with respect to ``mu x nu``.

    Subclasses implement ``log_density`` and ``grad_density`` vectorised over
    any leading shape of ``x`` and ``y`` (last axis = point coordinates).  A
    model that also knows its true parameter doubles as the generative model
    for its synthetic experiments.
    """

    domain: ParamDomain
    x_dim: int = 1
    y_dim: int = 1
    #: uniform bound on the density and on its theta-Lipschitz constant, when known
    density_bound: Optional[float] = None
    lipschitz_bound: Optional[float] = None

    def __init__(self, domain: ParamDomain, true_param: Optional[ThetaLike] = None):
        self.domain = domain
        self._true = None if true_param is None else domain.check(true_param)

    @property
    def d(self) -> int:
        return self.domain.dim

    @property
    def true_param(self) -> ParamPoint:
        if self._true is None:
            raise AttributeError(f"{type(self).__name__} has no true parameter set")
        return ParamPoint(tuple(self._true))

    @abc.abstractmethod
    def log_density(self, theta: np.ndarray, x, y) -> np.ndarray:
        """Log-density at an already validated ``theta``."""

    @abc.abstractmethod
    def grad_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        """Gradient in theta, shape ``broadcast(x, y).shape[:-1] + (d,)``."""

    def density(self, theta: ThetaLike, x, y) -> np.ndarray:
        t = self.domain.check(theta)
        return np.exp(self.log_density(t, x, y))

    def density_and_grad(self, theta: ThetaLike, x, y):
        return self.density(theta, x, y), self.grad_density(theta, x, y)

    def l2_inner(self, theta: ThetaLike, theta2: ThetaLike) -> float:
        raise NoClosedForm(f"{type(self).__name__} has no closed-form L2 geometry")

    def l2_norm_sq_true(self) -> float:
        t = self.true_param
        return self.l2_inner(t, t)

    def l2_dist_sq(self, theta: ThetaLike) -> float:
        """Squared L2(mu x nu) distance between ``p^theta`` and the truth."""
        t = self.domain.check(theta)
        ts = self.true_param
        return self.l2_inner(t, t) + self.l2_inner(ts, ts) - 2 * self.l2_inner(t, ts)

    @abc.abstractmethod
    def sample_pairs(self, rng: np.random.Generator, n: int):
        """Draw ``n`` i.i.d. pairs from the true joint law as ``(xs, ys)`` arrays."""

    def sample_pair(self, rng: np.random.Generator) -> PairSample:
        xs, ys = self.sample_pairs(rng, 1)
        return PairSample(xs[0], ys[0])
