"""
Pydantic models for data structures used throughout the pipeline.

These models ensure type safety and validation for data flowing between components.
Array-valued containers hold numpy arrays that are frozen (read-only) on construction,
so a Dataset or FeatureMatrix can be shared between workers without copying.
"""

import math
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.utils.exceptions import ConfigurationError, InputError


ISO_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
HOUR = 3600

# Forecast fields selected from the NWP output (grid, level naming as issued).
NWP_VARIABLES: Tuple[str, ...] = (
    "DPT_GDS3_HTGL",
    "HGT_GDS3_0DEG",
    "HGT_GDS3_CEIL",
    "HGT_GDS3_HTFL",
    "HGT_GDS3_SFC",
    "T_CDC_GDS3_EATM",
    "H_CDC_GDS3_HCY",
    "M_CDC_GDS3_MCY",
    "L_CDC_GDS3_MCY",
    "PLI_GDS3_SPDY",
    "LFT_X_GDS3_ISBY",
    "PRES_GDS3_SFC",
    "PRMSL_GDS3_MSL",
    "MSLET_GDS3_MSL",
    "P_WAT_GDS3_EATM",
    "POP_GDS3_SFC",
    "R_H_GDS3_HTGL",
    "R_H_GDS3_HYBL",
    "SPF_H_GDS3_HTGL",
    "SPF_H_GDS3_SPDY",
    "TMP_GDS3_HTGL",
    "TMP_GDS3_SFC",
    "U_GRD_GDS3_HTGL",
    "U_GRD_GDS3_SPDY",
    "V_GRD_GDS3_HTGL",
    "V_GRD_GDS3_SPDY",
)

_FORMULA_PATTERN = re.compile(r"^(?P<op>[a-z_]+)\((?P<args>[A-Za-z0-9_,]+)\)$")
DERIVED_OPERATIONS: Dict[str, int] = {"hypot": 2, "diff": 2}


# --------------------------------------------------------------------------- time

def parse_utc(text: str) -> int:
    """
    Parse an ISO-8601 timestamp into whole seconds since the epoch (UTC).

    Offsets are normalized to UTC; a timestamp without an offset is taken as UTC.

    Raises:
        InputError: If the text is not a timestamp or carries sub-second precision
    """
    raw = text.strip()
    try:
        moment = datetime.fromisoformat(raw[:-1] + "+00:00" if raw.endswith("Z") else raw)
    except ValueError as e:
        raise InputError(f"Invalid ISO-8601 timestamp: {text!r}") from e
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    if moment.microsecond:
        raise InputError(f"Timestamp has sub-second precision: {text!r}")
    return int(moment.astimezone(timezone.utc).timestamp())


def format_utc(seconds: int) -> str:
    """Format epoch seconds as ``YYYY-MM-DDThh:mm:ssZ``."""
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).strftime(ISO_FORMAT)


def calendar_parts(seconds: Union[np.ndarray, Sequence[int]]) -> Dict[str, np.ndarray]:
    """Vectorized UTC hour, day-of-month, month and year of epoch-second values."""
    stamps = pd.DatetimeIndex(pd.to_datetime(np.asarray(seconds, dtype=np.int64), unit="s"))
    return {
        "hour": stamps.hour.to_numpy(dtype=np.int64),
        "day": stamps.day.to_numpy(dtype=np.int64),
        "month": stamps.month.to_numpy(dtype=np.int64),
        "year": stamps.year.to_numpy(dtype=np.int64),
    }


class UtcTime(BaseModel):
    """An instant in UTC+00:00, whole seconds since the Unix epoch."""
    model_config = ConfigDict(frozen=True)

    seconds: int = Field(..., description="Seconds since 1970-01-01T00:00:00Z")

    @classmethod
    def parse(cls, text: str) -> "UtcTime":
        return cls(seconds=parse_utc(text))

    def iso(self) -> str:
        return format_utc(self.seconds)

    def plus_hours(self, hours: int) -> "UtcTime":
        return UtcTime(seconds=self.seconds + hours * HOUR)

    @property
    def as_datetime(self) -> datetime:
        return datetime.fromtimestamp(self.seconds, tz=timezone.utc)

    def __add__(self, seconds: int) -> "UtcTime":
        return UtcTime(seconds=self.seconds + int(seconds))

    def __sub__(self, other: "UtcTime") -> int:
        return self.seconds - other.seconds

    def __lt__(self, other: "UtcTime") -> bool:
        return self.seconds < other.seconds

    def __str__(self) -> str:
        return self.iso()


class Station(BaseModel):
    """Observation station."""
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, max_length=16, description="Station identifier")
    lat: float = Field(..., ge=-90, le=90, description="Degrees north")
    lon: float = Field(..., ge=-180, le=360, description="Degrees east")

    def in_area(self, box: Tuple[float, float, float, float]) -> bool:
        """Whether the station lies in a (lat_min, lat_max, lon_min, lon_max) box."""
        lat_min, lat_max, lon_min, lon_max = box
        return lat_min <= self.lat <= lat_max and lon_min <= self.lon <= lon_max


# ------------------------------------------------------------------------- labels

def label_from_visibility(vis: float, threshold: float = 1.0) -> int:
    """
    Binary fog label: 1 when visibility is at or below the threshold.

    Raises:
        InputError: For negative or non-finite visibility
    """
    if not math.isfinite(vis) or vis < 0:
        raise InputError(f"Visibility must be finite and non-negative, got {vis}")
    return 1 if vis <= threshold else 0


def fog_labels(vis: np.ndarray, threshold: float = 1.0) -> np.ndarray:
    """Vectorized labels; NaN visibility yields NaN."""
    vis = np.asarray(vis, dtype=np.float64)
    present = ~np.isnan(vis)
    if np.any(vis[present] < 0) or np.any(np.isinf(vis[present])):
        raise InputError("Visibility must be finite and non-negative")
    labels = np.full(vis.shape, np.nan)
    labels[present] = (vis[present] <= threshold).astype(np.float64)
    return labels


# ------------------------------------------------------------------------ catalog

def parse_formula(formula: str) -> Tuple[str, Tuple[str, ...]]:
    """Split ``op(a,b)`` into its operation and input channel names."""
    match = _FORMULA_PATTERN.match(formula.strip())
    if not match:
        raise ConfigurationError(f"Malformed derived-channel formula: {formula!r}")
    op = match.group("op")
    args = tuple(match.group("args").split(","))
    if op not in DERIVED_OPERATIONS:
        raise ConfigurationError(f"Unknown derived-channel formula: {op!r}")
    if len(args) != DERIVED_OPERATIONS[op]:
        raise ConfigurationError(f"Formula {op!r} takes {DERIVED_OPERATIONS[op]} inputs, got {len(args)}")
    return op, args


def derive_channel(formula: str, values: Mapping[str, Any]):
    """
    Evaluate a derived channel from raw channel values.

    ``hypot(u,v)`` is sqrt(u² + v²); ``diff(a,b)`` is a − b. Inputs may be scalars or
    arrays; NaN inputs propagate to NaN.

    Raises:
        ConfigurationError: Unknown formula or missing input channel
    """
    op, args = parse_formula(formula)
    try:
        first, second = (values[name] for name in args)
    except KeyError as e:
        raise ConfigurationError(f"Formula {formula!r} references unavailable channel {e}") from e
    if op == "hypot":
        return np.sqrt(first * first + second * second)
    return first - second


class ChannelDescriptor(BaseModel):
    """One channel on the variable axis of the dataset."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    name: str = Field(..., min_length=1)
    kind: Literal["raw", "derived"] = "raw"
    formula: Optional[str] = Field(None, description="op(input,input) for derived channels")

    @model_validator(mode='after')
    def check_formula(self):
        if self.kind == "raw" and self.formula is not None:
            raise ValueError(f"Raw channel {self.name} cannot carry a formula")
        if self.kind == "derived":
            if self.formula is None:
                raise ValueError(f"Derived channel {self.name} needs a formula")
            try:
                parse_formula(self.formula)
            except ConfigurationError as e:
                raise ValueError(str(e)) from e
        return self

    @property
    def inputs(self) -> Tuple[str, ...]:
        return parse_formula(self.formula)[1] if self.formula else ()

    def encode(self) -> str:
        return self.name if self.kind == "raw" else f"{self.name}:{self.formula}"

    @classmethod
    def decode(cls, text: str) -> "ChannelDescriptor":
        name, sep, formula = text.partition(":")
        if sep:
            return cls(name=name, kind="derived", formula=formula)
        return cls(name=name)


class VariableCatalog(BaseModel):
    """Ordered channel list; its order fixes the M axis of the dataset."""
    model_config = ConfigDict(frozen=True)

    channels: Tuple[ChannelDescriptor, ...]

    @model_validator(mode='after')
    def check_channels(self):
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate channel names in catalog: {names}")
        raw = {c.name for c in self.channels if c.kind == "raw"}
        unknown = sorted(raw - set(NWP_VARIABLES))
        if unknown:
            raise ValueError(f"Raw channels not in the forecast variable table: {unknown}")
        for channel in self.channels:
            missing = [name for name in channel.inputs if name not in raw]
            if missing:
                raise ValueError(f"Derived channel {channel.name} references non-raw channels {missing}")
        return self

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.channels]

    @property
    def raw_names(self) -> List[str]:
        return [c.name for c in self.channels if c.kind == "raw"]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(f"Variable {name!r} is not in the catalog") from None

    def __len__(self) -> int:
        return len(self.channels)

    def encode(self) -> List[str]:
        return [c.encode() for c in self.channels]

    @classmethod
    def decode(cls, entries: Sequence[str]) -> "VariableCatalog":
        return cls(channels=tuple(ChannelDescriptor.decode(e) for e in entries))

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "VariableCatalog":
        """Load a catalog document with a top-level ``channels`` list."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Catalog file not found: {path}")
        with open(path, 'r') as f:
            document = yaml.safe_load(f) or {}
        try:
            return cls(channels=tuple(ChannelDescriptor(**c) for c in document.get("channels", [])))
        except ValueError as e:
            raise ConfigurationError(f"Invalid catalog {path}: {e}") from e

    def to_document(self) -> Dict[str, Any]:
        return {"channels": [c.model_dump(exclude_none=True) for c in self.channels]}


def default_catalog() -> VariableCatalog:
    """The 26 forecast fields plus 10 m wind speed and the air-sea temperature difference."""
    channels = [ChannelDescriptor(name=name) for name in NWP_VARIABLES]
    channels.append(ChannelDescriptor(name="wind_speed", kind="derived",
                                      formula="hypot(U_GRD_GDS3_HTGL,V_GRD_GDS3_HTGL)"))
    channels.append(ChannelDescriptor(name="air_sea_temp_diff", kind="derived",
                                      formula="diff(TMP_GDS3_HTGL,TMP_GDS3_SFC)"))
    return VariableCatalog(channels=tuple(channels))


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=dtype)
    array.flags.writeable = False
    return array


# ---------------------------------------------------------------------- raw inputs

class ObservationTable(BaseModel):
    """
    Station observations at normalized UTC times.

    ``frame`` columns: station_id, lat, lon, time (epoch seconds), visibility_km (NaN when
    missing), present_weather (nullable integer), line (1-based source line).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frame: pd.DataFrame

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    def stations(self) -> List[Station]:
        """Stations in id order, coordinates from their first row."""
        first = self.frame.sort_values(["station_id", "time"]).drop_duplicates("station_id")
        return [Station(id=row.station_id, lat=row.lat, lon=row.lon) for row in first.itertuples()]

    def fog_labels(self, threshold: float = 1.0, mode: str = "visibility",
                   fog_codes: Sequence[int] = tuple(range(40, 50))) -> np.ndarray:
        """
        Per-row fog labels (NaN where visibility is missing).

        In ``visibility_and_weather`` mode a row is fog only when visibility is at or below
        the threshold and the present-weather code is one of ``fog_codes``.
        """
        labels = fog_labels(self.frame["visibility_km"].to_numpy(dtype=np.float64), threshold)
        if mode == "visibility_and_weather":
            codes = self.frame["present_weather"]
            coded = codes.isin(list(fog_codes)).fillna(False).to_numpy(dtype=bool)
            labels = np.where(np.isnan(labels), np.nan, labels * coded)
        return labels


class ForecastGridSet(BaseModel):
    """
    Gridded forecast fields on a fixed rectilinear grid.

    ``values`` is indexed [launch][lead − 1][variable][lat][lon]; NaN marks a missing node.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lats: np.ndarray
    lons: np.ndarray
    launches: np.ndarray
    variables: Tuple[str, ...]
    values: np.ndarray

    @model_validator(mode='after')
    def check_shapes(self):
        expected = (len(self.launches), len(self.variables), len(self.lats), len(self.lons))
        actual = (self.values.shape[0],) + self.values.shape[2:]
        if self.values.ndim != 5 or actual != expected:
            raise ValueError(f"Grid values shaped {self.values.shape} do not match axes {expected}")
        for name in ("lats", "lons", "launches", "values"):
            getattr(self, name).flags.writeable = False
        return self

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def field(self, launch_index: int, lead: int, variable: str) -> np.ndarray:
        return self.values[launch_index, lead - 1, self.variables.index(variable)]

    def node_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Flattened (lat, lon) of every node in row-major [lat][lon] order."""
        lat_grid, lon_grid = np.meshgrid(self.lats, self.lons, indexing="ij")
        return lat_grid.ravel(), lon_grid.ravel()


# -------------------------------------------------------------------- the dataset

class Dataset(BaseModel):
    """
    Samples × variables × lead hours of station forecasts with observed visibility.

    One sample per (station, launch). ``Y[n][t]`` is the visibility observed at the valid
    time of lead t + 1, NaN when no observation falls there. ``prior_vis`` holds the
    visibility observed at launch, launch − 3 h and launch − 6 h.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    catalog: VariableCatalog
    X: np.ndarray
    Y: np.ndarray
    station_ids: Tuple[str, ...]
    lat: np.ndarray
    lon: np.ndarray
    launch: np.ndarray
    prior_vis: np.ndarray
    run_config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def check_shapes(self):
        n = len(self.station_ids)
        if self.X.ndim != 3 or self.X.shape[0] != n or self.X.shape[1] != len(self.catalog):
            raise ValueError(f"X shaped {self.X.shape} does not match {n} samples × {len(self.catalog)} channels")
        if self.Y.shape != (n, self.X.shape[2]):
            raise ValueError(f"Y shaped {self.Y.shape}, expected {(n, self.X.shape[2])}")
        for name in ("lat", "lon", "launch"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per sample")
        if self.prior_vis.shape != (n, 3):
            raise ValueError("prior_vis must hold three values per sample")
        present = self.Y[~np.isnan(self.Y)]
        if np.any(present < 0):
            raise ValueError("Observed visibility must be non-negative")
        keys = set(zip(self.station_ids, self.launch.tolist()))
        if len(keys) != n:
            raise ValueError("Every (station, launch) pair must be unique")
        object.__setattr__(self, "X", _frozen(self.X, np.float32))
        object.__setattr__(self, "Y", _frozen(self.Y, np.float32))
        object.__setattr__(self, "lat", _frozen(self.lat, np.float64))
        object.__setattr__(self, "lon", _frozen(self.lon, np.float64))
        object.__setattr__(self, "launch", _frozen(self.launch, np.int64))
        object.__setattr__(self, "prior_vis", _frozen(self.prior_vis, np.float32))
        return self

    @property
    def n_samples(self) -> int:
        return len(self.station_ids)

    @property
    def horizon(self) -> int:
        return self.X.shape[2]

    @property
    def leads(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def valid_times(self) -> np.ndarray:
        """Valid time of every (sample, lead), launch + lead × 3600 s."""
        return self.launch[:, None] + self.leads[None, :] * HOUR

    def channel(self, name: str) -> np.ndarray:
        return self.X[:, self.catalog.index(name), :]

    def labels(self, threshold: float = 1.0) -> np.ndarray:
        return fog_labels(self.Y, threshold)

    def take(self, mask: np.ndarray) -> "Dataset":
        """Subset of samples selected by a boolean mask or index array."""
        index = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return Dataset(
            catalog=self.catalog,
            X=self.X[index],
            Y=self.Y[index],
            station_ids=tuple(self.station_ids[i] for i in index),
            lat=self.lat[index],
            lon=self.lon[index],
            launch=self.launch[index],
            prior_vis=self.prior_vis[index],
            run_config=self.run_config,
        )


# ------------------------------------------------------------------ features

class LabeledSample(BaseModel):
    """A single feature row with its fog label."""
    features: List[float]
    label: Literal[0, 1]
    weight: float = Field(1.0, ge=0)


class FeatureMatrix(BaseModel):
    """
    Feature rows with labels, weights and provenance.

    Missing feature values are NaN. Column order always equals ``manifest``.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    manifest: Tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    station_ids: Tuple[str, ...]
    launch: np.ndarray
    lead: np.ndarray
    run_config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def check_shapes(self):
        rows = len(self.station_ids)
        if self.values.shape != (rows, len(self.manifest)):
            raise ValueError(f"values shaped {self.values.shape}, expected {(rows, len(self.manifest))}")
        for name in ("labels", "weights", "launch", "lead"):
            if getattr(self, name).shape != (rows,):
                raise ValueError(f"{name} must have one entry per row")
        if len(set(self.manifest)) != len(self.manifest):
            raise ValueError("Feature manifest names must be unique")
        if rows and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("Labels must be 0 or 1")
        if np.any(self.weights < 0):
            raise ValueError("Sample weights must be non-negative")
        object.__setattr__(self, "values", _frozen(self.values, np.float32))
        object.__setattr__(self, "labels", _frozen(self.labels, np.uint8))
        object.__setattr__(self, "weights", _frozen(self.weights, np.float32))
        object.__setattr__(self, "launch", _frozen(self.launch, np.int64))
        object.__setattr__(self, "lead", _frozen(self.lead, np.uint16))
        return self

    @property
    def n_rows(self) -> int:
        return len(self.station_ids)

    @property
    def n_features(self) -> int:
        return len(self.manifest)

    def fog_frequency(self) -> float:
        return float(self.labels.mean()) if self.n_rows else 0.0

    def valid_times(self) -> np.ndarray:
        return self.launch + self.lead.astype(np.int64) * HOUR

    def launch_years(self) -> np.ndarray:
        return calendar_parts(self.launch)["year"]

    def row(self, i: int) -> LabeledSample:
        return LabeledSample(features=self.values[i].astype(np.float64).tolist(),
                             label=int(self.labels[i]), weight=float(self.weights[i]))

    def take(self, index: np.ndarray) -> "FeatureMatrix":
        index = np.asarray(index, dtype=np.int64)
        return FeatureMatrix(
            manifest=self.manifest,
            values=self.values[index],
            labels=self.labels[index],
            weights=self.weights[index],
            station_ids=tuple(self.station_ids[i] for i in index),
            launch=self.launch[index],
            lead=self.lead[index],
            run_config=self.run_config,
        )

    def provenance_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "station_id": list(self.station_ids),
            "launch_utc": [format_utc(s) for s in self.launch],
            "lead_hour": self.lead.astype(np.int64),
        })

    def to_frame(self) -> pd.DataFrame:
        """Provenance, features and labels as one inspection table."""
        frame = self.provenance_frame()
        features = pd.DataFrame(self.values, columns=list(self.manifest))
        frame = pd.concat([frame, features], axis=1)
        frame["label"] = self.labels.astype(np.int64)
        frame["weight"] = self.weights
        return frame


# ------------------------------------------------------------- correlation results

class CorrelationCell(BaseModel):
    """Pearson correlation of one variable at one lag against the target."""
    variable: str
    lag: int = Field(..., ge=0, description="Hours before the verifying lead")
    r: float
    n: int = Field(..., ge=0)
    p_value: float = Field(..., ge=0, le=1)
    significant: bool
    exact: bool = False


class LaggedCorrelationTable(BaseModel):
    """Correlation cells in catalog order, lags ascending."""
    cells: List[CorrelationCell]
    alpha: float
    max_lag: int

    def cell(self, variable: str, lag: int) -> CorrelationCell:
        for cell in self.cells:
            if cell.variable == variable and cell.lag == lag:
                return cell
        raise KeyError((variable, lag))

    def variables(self) -> List[str]:
        return list(dict.fromkeys(c.variable for c in self.cells))

    def strongest_lag(self, variable: str) -> Optional[int]:
        """Lag with the largest |r| for a variable (lowest lag on ties)."""
        best = None
        for cell in self.cells:
            if cell.variable != variable or math.isnan(cell.r):
                continue
            if best is None or abs(cell.r) > abs(best.r):
                best = cell
        return best.lag if best else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(c.variable, c.lag, c.r, c.n, c.p_value, c.significant) for c in self.cells],
            columns=["variable", "lag", "r", "n", "p_value", "significant"],
        )


class PredictorSet(BaseModel):
    """Ordered (variable, lag) pairs retained as predictors."""
    entries: List[Tuple[str, int]] = Field(default_factory=list)

    @property
    def max_lag(self) -> int:
        return max((lag for _, lag in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    def feature_names(self) -> List[str]:
        return [f"{variable}@lag{lag}" for variable, lag in self.entries]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.entries, columns=["variable", "lag"])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "PredictorSet":
        frame = pd.read_csv(path, dtype={"variable": str, "lag": np.int64})
        if list(frame.columns) != ["variable", "lag"]:
            raise InputError(f"Predictor file {path} must have columns variable,lag")
        return cls(entries=[(str(v), int(l)) for v, l in frame.itertuples(index=False)])


# -------------------------------------------------------------------- verification

class ConfusionMatrix(BaseModel):
    """Hits a, false alarms b, misses c, correct rejections d."""
    model_config = ConfigDict(frozen=True)

    a: int = Field(0, ge=0)
    b: int = Field(0, ge=0)
    c: int = Field(0, ge=0)
    d: int = Field(0, ge=0)

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(a=self.a + other.a, b=self.b + other.b,
                               c=self.c + other.c, d=self.d + other.d)


class ScoreSet(BaseModel):
    """Categorical skill scores; None means undefined (zero denominator)."""
    model_config = ConfigDict(frozen=True)

    pod: Optional[float]
    far: Optional[float]
    far_paper: Optional[float]
    far_conventional: Optional[float]
    ets: Optional[float]
    hss: Optional[float]
    far_definition: Literal["paper", "conventional"] = "paper"

    def formatted(self) -> Dict[str, str]:
        """Scores as report text; undefined prints as NA."""
        return {key: format_score(getattr(self, key))
                for key in ("pod", "far", "far_paper", "far_conventional", "ets", "hss")}


def format_score(value: Optional[float]) -> str:
    return "NA" if value is None or (isinstance(value, float) and math.isnan(value)) else repr(float(value))


class PipelineResult(BaseModel):
    """Overall result of pipeline execution."""
    success: bool = Field(..., description="Whether pipeline completed successfully")
    samples_assembled: int = Field(0, description="Samples in the assembled dataset")
    feature_rows: int = Field(0, description="Labeled feature rows")
    predictors: List[Tuple[str, int]] = Field(default_factory=list, description="Selected (variable, lag) pairs")
    artifacts: Dict[str, str] = Field(default_factory=dict, description="Artifact name to path")
    test_scores: Optional[ScoreSet] = Field(None, description="Pooled scores on the test split")
    train_years: List[int] = Field(default_factory=list)
    val_years: List[int] = Field(default_factory=list)
    test_years: List[int] = Field(default_factory=list)
    execution_time_seconds: float = Field(..., description="Total execution time")
    errors: List[str] = Field(default_factory=list, description="Any errors encountered")
