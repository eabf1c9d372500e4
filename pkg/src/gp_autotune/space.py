"""Discrete configuration spaces: parameter grids, point indexing, neighborhoods,
and tabular measurement datasets used for playback.

A space is the Cartesian product of finite per-parameter option lists. Points
are stored as per-parameter option indices (0-based); raw option values are
looked up only where a consumer needs them (kernels, reports, CSV I/O).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import yaml

INTEGER_GRID = "integer-grid"
CATEGORICAL = "categorical"

_KIND_ALIASES = {
    "integer-grid": INTEGER_GRID,
    "integer": INTEGER_GRID,
    "int": INTEGER_GRID,
    "categorical": CATEGORICAL,
    "cat": CATEGORICAL,
}


class InvalidPointError(ValueError):
    """A point's coordinates do not fit its space."""


class DatasetParseError(ValueError):
    """A dataset CSV or space declaration could not be parsed."""


@dataclass(frozen=True)
class ParameterDef:
    """One tunable parameter with a finite, ordered option list.

    ``kind`` is either ``integer-grid`` (numeric options, strictly increasing)
    or ``categorical`` (opaque labels, equality only).
    """

    name: str
    kind: str
    options: tuple

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown parameter kind {self.kind!r} for {self.name!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ValueError(f"parameter {self.name!r} has no options")
        if len(set(self.options)) != len(self.options):
            raise ValueError(f"parameter {self.name!r} has duplicate options")
        if kind == INTEGER_GRID:
            vals = [float(v) for v in self.options]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(
                    f"integer-grid parameter {self.name!r} options must be strictly increasing"
                )

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def __len__(self) -> int:
        return len(self.options)


@dataclass(frozen=True)
class ConfigPoint:
    """A single configuration, stored as per-parameter option indices."""

    coords: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class ConfigSpace:
    """The full discrete configuration grid (Cartesian product of options)."""

    params: tuple[ParameterDef, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise ValueError("a configuration space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {names}")

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def size(self) -> int:
        return math.prod(len(p) for p in self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def validate(self, point: ConfigPoint) -> None:
        if len(point) != self.dim:
            raise InvalidPointError(
                f"point has {len(point)} coordinates, space has {self.dim} parameters"
            )
        for c, p in zip(point.coords, self.params):
            if not 0 <= c < len(p):
                raise InvalidPointError(
                    f"index {c} out of range for parameter {p.name!r} ({len(p)} options)"
                )

    def values_at(self, point: ConfigPoint) -> tuple:
        """Raw option values for a point, in parameter order."""
        self.validate(point)
        return tuple(p.options[c] for p, c in zip(self.params, point.coords))

    def iter_points(self) -> Iterator[ConfigPoint]:
        """All points of the grid in linear-index (row-major) order."""
        for combo in itertools.product(*(range(len(p)) for p in self.params)):
            yield ConfigPoint(combo)


def linear_index(space: ConfigSpace, point: ConfigPoint) -> int:
    """Row-major flat index of ``point`` in ``[0, space.size)``."""
    space.validate(point)
    idx = 0
    for c, p in zip(point.coords, space.params):
        idx = idx * len(p) + c
    return idx


def point_at(space: ConfigSpace, index: int) -> ConfigPoint:
    """Inverse of :func:`linear_index`."""
    if not 0 <= index < space.size:
        raise InvalidPointError(f"linear index {index} out of range [0, {space.size})")
    coords = [0] * space.dim
    for i in range(space.dim - 1, -1, -1):
        m = len(space.params[i])
        coords[i] = index % m
        index //= m
    return ConfigPoint(tuple(coords))


def neighborhood(space: ConfigSpace, point: ConfigPoint, radius: int = 1) -> set[ConfigPoint]:
    """Points within per-dimension index distance ``radius`` of ``point``.

    Categorical dimensions use 0/1 distance (any differing label counts as 1),
    so with radius >= 1 every alternative label is adjacent. The center point
    itself is excluded; ranges are clipped at the domain bounds.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    space.validate(point)
    per_dim: list[range | list[int]] = []
    for c, p in zip(point.coords, space.params):
        if p.is_categorical:
            per_dim.append(list(range(len(p))))
        else:
            per_dim.append(range(max(0, c - radius), min(len(p), c + radius + 1)))
    out = {ConfigPoint(combo) for combo in itertools.product(*per_dim)}
    out.discard(point)
    return out


@dataclass(frozen=True)
class TabularDataset:
    """Measured responses over (a subset of) a configuration grid.

    ``rows`` holds one aggregate (mean) latency per distinct configuration;
    ``replicates`` keeps every raw sample for noise estimation. Instances are
    treated as immutable after construction.
    """

    space: ConfigSpace
    rows: Mapping[ConfigPoint, float]
    replicates: Mapping[ConfigPoint, tuple[float, ...]] = field(default_factory=dict)
    interacting: tuple[str, ...] = ()  # informational marks, no algorithmic use

    def __post_init__(self):
        for pt in self.rows:
            self.space.validate(pt)

    def __len__(self) -> int:
        return len(self.rows)

    def is_total(self) -> bool:
        return len(self.rows) == self.space.size

    def min_value(self) -> float:
        if not self.rows:
            raise ValueError("empty dataset has no minimum")
        return min(self.rows.values())


def load_space(source) -> ConfigSpace:
    """Read a space declaration (YAML) from a path or open stream.

    Expected layout::

        parameters:
          - name: max_spout
            kind: integer-grid
            options: [1, 10, 100, 1000]
          - name: serializer
            kind: categorical
            options: [kryo, java]
    """
    text = _read_text(source)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DatasetParseError(f"space declaration is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or "parameters" not in doc:
        raise DatasetParseError("space declaration must be a mapping with a 'parameters' list")
    params = []
    for i, entry in enumerate(doc["parameters"]):
        try:
            params.append(
                ParameterDef(
                    name=str(entry["name"]),
                    kind=str(entry.get("kind", INTEGER_GRID)),
                    options=tuple(entry["options"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetParseError(f"bad parameter entry #{i + 1}: {exc}") from exc
    return ConfigSpace(tuple(params))


def _match_option(param: ParameterDef, raw: str):
    """Map a CSV cell to the option it names, or None if absent from the domain."""
    for opt in param.options:
        if raw == str(opt):
            return opt
    try:
        num = float(raw)
    except ValueError:
        return None
    for opt in param.options:
        if isinstance(opt, (int, float)) and float(opt) == num:
            return opt
    return None


def load_dataset(source, space: ConfigSpace) -> TabularDataset:
    """Parse a measurement CSV into a :class:`TabularDataset`.

    The header names every parameter of ``space`` (any order) followed by the
    literal column ``latency``. Each data row is one measurement; repeated
    configurations are aggregated by arithmetic mean, with the raw samples
    retained as replicates.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetParseError("dataset CSV is empty") from None
    header = [h.strip() for h in header]
    if not header or header[-1] != "latency":
        raise DatasetParseError("last CSV column must be the literal 'latency'")
    param_cols = header[:-1]
    by_name = {p.name: i for i, p in enumerate(space.params)}
    for col in param_cols:
        if col not in by_name:
            raise DatasetParseError(f"unknown parameter column {col!r}")
    missing = set(by_name) - set(param_cols)
    if missing:
        raise DatasetParseError(f"missing parameter columns: {sorted(missing)}")

    samples: dict[ConfigPoint, list[float]] = {}
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetParseError(f"row {rownum}: expected {len(header)} cells, got {len(row)}")
        coords = [0] * space.dim
        for col, cell in zip(param_cols, row):
            param = space.params[by_name[col]]
            opt = _match_option(param, cell.strip())
            if opt is None:
                raise DatasetParseError(
                    f"row {rownum}: value {cell.strip()!r} not in domain of {col!r}"
                )
            coords[by_name[col]] = param.options.index(opt)
        try:
            latency = float(row[-1])
        except ValueError:
            raise DatasetParseError(
                f"row {rownum}: non-numeric response {row[-1]!r}"
            ) from None
        samples.setdefault(ConfigPoint(tuple(coords)), []).append(latency)

    rows = {pt: sum(vals) / len(vals) for pt, vals in samples.items()}
    replicates = {pt: tuple(vals) for pt, vals in samples.items()}
    return TabularDataset(space=space, rows=rows, replicates=replicates)


def _read_text(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    with open(source, "r", encoding="utf-8") as fh:
        return fh.read()
