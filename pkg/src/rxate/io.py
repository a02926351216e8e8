"""Reading trial data and writing machine-readable reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import urllib.request
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .design import StratifiedDataset
from .regression import DataError, Dataset

SCHEMA_VERSION = 1

NSW_COLUMNS = (
    "treat", "age", "educ", "black", "hisp", "married", "nodegree", "re74", "re75", "re78",
)
NSW_COVARIATES = ("age", "educ", "black", "hisp", "married", "hsdegree", "re74")
NSW_N_TREATED, NSW_N_CONTROL = 185, 260
NSW_URL_ENV = "RXATE_NSW_URL"
NSW_DEFAULT_URL = "https://users.nber.org/~rdehejia/data"
NSW_FILES = ("nswre74_treated.txt", "nswre74_control.txt")


class ColumnError(DataError):
    def __init__(self, message: str, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


class CellError(DataError):
    """A cell could not be used; ``row`` counts data rows from 1."""

    def __init__(self, message: str, row: int, column: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class ParseError(CellError):
    pass


class MissingValueError(CellError):
    pass


class TreatmentValueError(CellError):
    pass


class FetchError(DataError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    response: str
    treatment: str
    covariates: tuple = ()
    stratum: Optional[str] = None
    propensity: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [self.response, self.treatment, *self.covariates]
        names += [c for c in (self.stratum, self.propensity) if c]
        if len(set(names)) != len(names):
            raise ColumnError("column names in the spec must be distinct")


_MISSING = {"", "na", "nan", "null", "none", "."}


def _number(text: str, row: int, col: str) -> float:
    if text.strip().lower() in _MISSING:
        raise MissingValueError("missing value", row, col)
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", row, col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", row, col)
    return v


def file_digest(path: Union[str, os.PathLike]) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_csv(path, spec: ColumnSpec):
    """Read a UTF-8 CSV with a header row into a dataset.

    Returns a :class:`StratifiedDataset` when ``spec.stratum`` is set (raw
    stratum values are mapped to integer labels in sorted order, the raw
    values kept in ``labels``), otherwise a :class:`Dataset`.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if any(c.strip() for c in r)]
    wanted = [spec.response, spec.treatment, *spec.covariates]
    wanted += [c for c in (spec.stratum, spec.propensity) if c]
    for col in wanted:
        if col not in header:
            raise ColumnError(f"column {col!r} not found in header", col)
    pos = {c: header.index(c) for c in wanted}
    if not rows:
        raise DataError(f"{path}: no data rows")

    def cell(r, i, col):
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(r)}", i, col)
        return r[pos[col]]

    y, w, X, strata, prop = [], [], [], [], []
    for i, r in enumerate(rows, start=1):
        y.append(_number(cell(r, i, spec.response), i, spec.response))
        t = _number(cell(r, i, spec.treatment), i, spec.treatment)
        if t not in (0.0, 1.0):
            raise TreatmentValueError(f"treatment value {cell(r, i, spec.treatment)!r} is not 0/1", i, spec.treatment)
        w.append(int(t))
        X.append([_number(cell(r, i, c), i, c) for c in spec.covariates])
        if spec.stratum:
            s = cell(r, i, spec.stratum).strip()
            if s.lower() in _MISSING:
                raise MissingValueError("missing value", i, spec.stratum)
            strata.append(s)
        if spec.propensity:
            prop.append(_number(cell(r, i, spec.propensity), i, spec.propensity))

    if spec.stratum:
        labels = sorted(set(strata), key=_label_key)
        code = {s: k for k, s in enumerate(labels)}
        return StratifiedDataset(np.array(y), np.array(w), np.array([code[s] for s in strata]), tuple(labels))
    Xa = np.array(X, dtype=float).reshape(len(rows), len(spec.covariates))
    return Dataset(np.array(y), np.array(w), Xa, spec.covariates, np.array(prop) if prop else None)


def _label_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def _parse_nsw(text: str, source: str) -> np.ndarray:
    rows = []
    for k, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != len(NSW_COLUMNS):
            raise ParseError(f"expected {len(NSW_COLUMNS)} fields, found {len(parts)}", k, source)
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise ParseError(f"unparseable line {line.strip()!r}", k, source) from None
    return np.array(rows).reshape(-1, len(NSW_COLUMNS))


def vendored_nsw_path() -> Path:
    return Path(str(resources.files("rxate") / "data" / "nsw_dw.txt"))


def _fetch(url: str) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=30) as resp:
            return resp.read()
    except OSError as exc:
        raise FetchError(
            f"could not download {url} ({exc}). Work offline by passing the path of a local "
            "copy in the whitespace-delimited NSW layout, or omit the path to use the "
            f"vendored copy; set {NSW_URL_ENV} to point the fetch at a mirror."
        ) from exc


@dataclass(frozen=True, eq=False)
class NswData:
    dataset: Dataset
    digest: str
    source: str


def load_nsw(
    path: Union[None, str, os.PathLike, Sequence] = None,
    fetch: bool = False,
    url: Optional[str] = None,
    check_rows: bool = True,
) -> NswData:
    """Load the NSW experimental sample (male subsample with 1974 earnings).

    ``path`` is one file with both arms or a ``(treated, control)`` pair,
    each in the published whitespace-delimited 10-column layout
    ``treat age educ black hisp married nodegree re74 re75 re78``. With
    ``path=None`` the vendored copy is used, unless ``fetch=True``, which
    downloads the two published files from ``url`` (default: the
    ``RXATE_NSW_URL`` environment variable, else the original host).

    The response is 1978 earnings; covariates are age, years of education,
    black, hispanic, married, a high-school-degree indicator and 1974
    earnings.
    """
    if fetch:
        base = (url or os.environ.get(NSW_URL_ENV) or NSW_DEFAULT_URL).rstrip("/")
        blobs = [_fetch(f"{base}/{f}") for f in NSW_FILES]
        source = base
    elif path is None:
        blobs = [vendored_nsw_path().read_bytes()]
        source = "vendored:nsw_dw.txt"
    elif isinstance(path, (str, os.PathLike)):
        blobs = [Path(path).read_bytes()]
        source = str(path)
    else:
        blobs = [Path(p).read_bytes() for p in path]
        source = ",".join(str(p) for p in path)

    digest = "sha256:" + hashlib.sha256(b"".join(blobs)).hexdigest()
    arr = np.vstack([_parse_nsw(b.decode("utf-8"), source) for b in blobs])
    col = {c: arr[:, j] for j, c in enumerate(NSW_COLUMNS)}
    w = col["treat"]
    if not np.isin(w, (0, 1)).all():
        raise TreatmentValueError("treatment flag is not 0/1", int(np.flatnonzero(~np.isin(w, (0, 1)))[0]) + 1, "treat")
    if check_rows:
        n_t, n_c = int(w.sum()), int((w == 0).sum())
        if (n_t, n_c) != (NSW_N_TREATED, NSW_N_CONTROL):
            raise DataError(
                f"expected {NSW_N_TREATED} treated and {NSW_N_CONTROL} control rows "
                f"({NSW_N_TREATED + NSW_N_CONTROL} total), found {n_t} and {n_c}"
            )
    X = np.column_stack(
        [col["age"], col["educ"], col["black"], col["hisp"], col["married"], 1.0 - col["nodegree"], col["re74"]]
    )
    return NswData(Dataset(col["re78"], w.astype(int), X, NSW_COVARIATES), digest, source)


@dataclass
class Report:
    """One estimate as emitted by the command line tool."""

    method: str
    point: float
    se: float
    ci_low: float
    ci_high: float
    n_t: int
    n_c: int
    r_squared_combined: Optional[float] = None
    warnings: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip float repr, NaN as null."""
    if isinstance(obj, Report):
        obj = asdict(obj)
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: Report) -> str:
    return dumps(report)


_FLOAT_FIELDS = ("point", "se", "ci_low", "ci_high")


def parse_report(text: str) -> Report:
    data = json.loads(text)
    if data.get("schema") != SCHEMA_VERSION:
        raise DataError(f"unsupported report schema {data.get('schema')!r}")
    for k in _FLOAT_FIELDS:
        if data.get(k) is None:
            data[k] = float("nan")
    return Report(**data)
