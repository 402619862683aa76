"""
Observation and gridded-forecast ingestion.

Parses the observation and long-form grid CSVs, validates them with DuckDB, matches grid
fields to stations with inverse distance weighting and assembles the sample × variable ×
lead dataset.
"""

from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Tuple, Union

import duckdb
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.components.base import PipelineComponent
from src.config import IdwConfig, PipelineConfig
from src.models import (
    Dataset,
    ForecastGridSet,
    ObservationTable,
    Station,
    VariableCatalog,
    derive_channel,
    format_utc,
    parse_utc,
)
from src.models.data import HOUR
from src.utils import (
    EmptyDatasetError,
    FogPipelineError,
    IngestionError,
    InterpolationError,
    get_logger,
)

logger = get_logger(__name__)

OBSERVATION_COLUMNS = ["station_id", "lat", "lon", "time_utc", "visibility_km", "present_weather"]
GRID_COLUMNS = ["launch_utc", "lead_hour", "lat", "lon", "variable", "value"]
PRIOR_OFFSETS_HOURS = (0, 3, 6)

Source = Union[str, Path, IO[str]]


# ------------------------------------------------------------------------ parsing

def _read_csv(source: Source, expected: List[str], kind: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=False)
    except pd.errors.ParserError as e:
        raise IngestionError(f"Malformed {kind} file: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise IngestionError(f"Empty {kind} file") from e
    if list(frame.columns) != expected:
        raise IngestionError(f"{kind} header must be {','.join(expected)}, found {','.join(frame.columns)}")
    frame["line"] = np.arange(2, len(frame) + 2, dtype=np.int64)
    short = frame[expected].isna().any(axis=1).to_numpy()
    if short.any():
        line = int(frame["line"].to_numpy()[short][0])
        raise IngestionError(f"line {line}: expected {len(expected)} fields")
    return frame


def _numeric(frame: pd.DataFrame, column: str, optional: bool = False) -> np.ndarray:
    """Parse a text column as float64, reporting the first malformed line."""
    text = frame[column].str.strip()
    values = pd.to_numeric(text.where(text != ""), errors="coerce").to_numpy(dtype=np.float64)
    bad = np.isnan(values) & ((text != "").to_numpy() if optional else True)
    bad |= np.isinf(values)
    if bad.any():
        index = int(np.flatnonzero(bad)[0])
        raise IngestionError(
            f"line {int(frame['line'].iloc[index])}: invalid {column} {frame[column].iloc[index]!r}"
        )
    return values


def _times(frame: pd.DataFrame, column: str) -> np.ndarray:
    """Parse a timestamp column through a per-distinct-value cache."""
    parsed: Dict[str, int] = {}
    for index, text in enumerate(frame[column].to_numpy()):
        if text in parsed:
            continue
        try:
            parsed[text] = parse_utc(text)
        except FogPipelineError as e:
            raise IngestionError(f"line {int(frame['line'].iloc[index])}: {e}") from e
    return frame[column].map(parsed).to_numpy(dtype=np.int64)


def _first_duplicate(frame: pd.DataFrame, keys: Sequence[str]) -> Optional[Tuple]:
    """First duplicated key (by line of its second occurrence) found with DuckDB."""
    conn = duckdb.connect(':memory:')
    try:
        conn.register('rows', frame[list(keys) + ["line"]])
        key_list = ", ".join(keys)
        return conn.execute(f"""
            SELECT {key_list}, list_sort(list(line))[1] AS first_line, list_sort(list(line))[2] AS second_line
            FROM rows
            GROUP BY {key_list}
            HAVING COUNT(*) > 1
            ORDER BY second_line
            LIMIT 1
        """).fetchone()
    finally:
        conn.close()


def parse_observations(source: Source, cadence_hours: int = 3,
                       study_area: Optional[Tuple[float, float, float, float]] = None) -> ObservationTable:
    """
    Parse an observations CSV into an ObservationTable.

    Args:
        source: Path or text stream with header
            ``station_id,lat,lon,time_utc,visibility_km,present_weather``
        cadence_hours: Observation clock; rows off this clock are kept with a warning
        study_area: Optional (lat_min, lat_max, lon_min, lon_max) box for warnings

    Returns:
        Validated table, sorted by station and time

    Raises:
        IngestionError: Malformed row (with its line number) or duplicate (station, time)
    """
    frame = _read_csv(source, OBSERVATION_COLUMNS, "observations")

    ids = frame["station_id"].str.strip()
    if (ids == "").any():
        line = int(frame["line"][ids == ""].iloc[0])
        raise IngestionError(f"line {line}: empty station_id")
    if (ids.str.len() > 16).any():
        line = int(frame["line"][ids.str.len() > 16].iloc[0])
        raise IngestionError(f"line {line}: station_id longer than 16 characters")

    lat = _numeric(frame, "lat")
    lon = _numeric(frame, "lon")
    bad_coords = (np.abs(lat) > 90) | (lon < -180) | (lon > 360)
    if bad_coords.any():
        line = int(frame["line"].iloc[int(np.flatnonzero(bad_coords)[0])])
        raise IngestionError(f"line {line}: coordinates out of range")
    time = _times(frame, "time_utc")
    visibility = _numeric(frame, "visibility_km", optional=True)
    if (visibility < 0).any():
        line = int(frame["line"].iloc[int(np.flatnonzero(visibility < 0)[0])])
        raise IngestionError(f"line {line}: negative visibility")
    weather = _numeric(frame, "present_weather", optional=True)
    whole = np.isnan(weather) | (weather == np.round(weather))
    if not whole.all():
        line = int(frame["line"].iloc[int(np.flatnonzero(~whole)[0])])
        raise IngestionError(f"line {line}: present_weather must be an integer code")

    table = pd.DataFrame({
        "station_id": ids.to_numpy(dtype=object),
        "lat": lat,
        "lon": lon,
        "time": time,
        "visibility_km": visibility,
        "present_weather": pd.array(np.where(np.isnan(weather), 0, weather).astype(np.int64), dtype="Int64"),
        "line": frame["line"].to_numpy(),
    })
    table.loc[np.isnan(weather), "present_weather"] = pd.NA

    duplicate = _first_duplicate(table, ["station_id", "time"])
    if duplicate:
        station, stamp, first, second = duplicate
        raise IngestionError(
            f"line {second}: duplicate observation for station {station} at {format_utc(stamp)} "
            f"(first on line {first})"
        )

    conn = duckdb.connect(':memory:')
    try:
        conn.register('obs', table)
        moved = conn.execute("""
            SELECT station_id, MIN(line) FROM obs
            GROUP BY station_id
            HAVING COUNT(DISTINCT lat) > 1 OR COUNT(DISTINCT lon) > 1
            ORDER BY 2 LIMIT 1
        """).fetchone()
        off_clock = conn.execute(f"""
            SELECT COUNT(*) FROM obs WHERE time % {cadence_hours * HOUR} <> 0
        """).fetchone()[0]
    finally:
        conn.close()
    if moved:
        raise IngestionError(f"Station {moved[0]} reports inconsistent coordinates")
    if off_clock:
        logger.warning(f"{off_clock} observations are off the {cadence_hours}-hour clock and will not be matched")

    table = table.sort_values(["station_id", "time"], kind="mergesort").reset_index(drop=True)
    observations = ObservationTable(frame=table)

    if study_area is not None:
        outside = [s.id for s in observations.stations() if not s.in_area(study_area)]
        if outside:
            logger.warning(f"Stations outside the study area: {outside}")
    return observations


def parse_grid(source: Source, catalog: VariableCatalog, horizon: int = 60,
               launch_hours: Sequence[int] = (0, 12)) -> ForecastGridSet:
    """
    Parse a long-form grid CSV into a ForecastGridSet.

    Args:
        source: Path or text stream with header ``launch_utc,lead_hour,lat,lon,variable,value``
        catalog: Variable catalog; every row must name one of its raw channels
        horizon: Lead horizon T
        launch_hours: Allowed launch hours in UTC

    Returns:
        Fields on the rectilinear lattice spanned by the file's distinct lat/lon values;
        nodes absent from a field, or with an empty value, are NaN

    Raises:
        IngestionError: Malformed row, unknown variable, lead or launch outside the allowed
            set, duplicate node value, missing raw channel or non-rectilinear nodes
    """
    frame = _read_csv(source, GRID_COLUMNS, "grid")
    raw_names = catalog.raw_names

    variable = frame["variable"].str.strip()
    unknown = ~variable.isin(raw_names)
    if unknown.any():
        index = int(np.flatnonzero(unknown.to_numpy())[0])
        raise IngestionError(
            f"line {int(frame['line'].iloc[index])}: variable {variable.iloc[index]!r} is not a raw catalog channel"
        )
    absent = [name for name in raw_names if name not in set(variable)]
    if absent:
        raise IngestionError(f"Grid file has no values for raw channels {absent}")

    launch = _times(frame, "launch_utc")
    bad_launch = ~np.isin((launch % 86400), [h * HOUR for h in launch_hours])
    if bad_launch.any():
        index = int(np.flatnonzero(bad_launch)[0])
        raise IngestionError(
            f"line {int(frame['line'].iloc[index])}: launch {frame['launch_utc'].iloc[index]} "
            f"is not at an allowed launch hour {list(launch_hours)}"
        )
    lead = _numeric(frame, "lead_hour")
    bad_lead = (lead != np.round(lead)) | (lead < 1) | (lead > horizon)
    if bad_lead.any():
        index = int(np.flatnonzero(bad_lead)[0])
        raise IngestionError(f"line {int(frame['line'].iloc[index])}: lead_hour must be an integer in 1..{horizon}")
    lat = _numeric(frame, "lat")
    lon = _numeric(frame, "lon")
    value = _numeric(frame, "value", optional=True).astype(np.float32)

    rows = pd.DataFrame({
        "launch": launch, "lead": lead.astype(np.int64), "lat": lat, "lon": lon,
        "variable": variable.to_numpy(dtype=object), "line": frame["line"].to_numpy(),
    })
    duplicate = _first_duplicate(rows, ["launch", "lead", "lat", "lon", "variable"])
    if duplicate:
        raise IngestionError(f"line {duplicate[-1]}: duplicate grid value (first on line {duplicate[-2]})")

    lats = np.unique(lat)
    lons = np.unique(lon)
    nodes = len(set(zip(lat.tolist(), lon.tolist())))
    if nodes != len(lats) * len(lons):
        raise IngestionError(
            f"Grid nodes do not form a rectilinear lattice: {nodes} nodes for {len(lats)} × {len(lons)} axes"
        )
    launches = np.unique(launch)

    values = np.full((len(launches), horizon, len(raw_names), len(lats), len(lons)), np.nan, dtype=np.float32)
    values[
        np.searchsorted(launches, launch),
        rows["lead"].to_numpy() - 1,
        pd.Index(raw_names).get_indexer(variable),
        np.searchsorted(lats, lat),
        np.searchsorted(lons, lon),
    ] = value
    return ForecastGridSet(lats=lats, lons=lons, launches=launches, variables=tuple(raw_names), values=values)


# -------------------------------------------------------------------------- IDW

def haversine_km(lat1, lon1, lat2, lon2, radius_km: float = 6371.0) -> np.ndarray:
    """Great-circle distance on a spherical Earth."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * radius_km * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def idw_interpolate_many(fields: np.ndarray, distances_km: np.ndarray, cfg: IdwConfig,
                         allow_missing: bool = False) -> np.ndarray:
    """
    Inverse-distance-weighted value of many fields at one target.

    Args:
        fields: Node values, shape (n_fields, n_nodes); NaN marks a missing node
        distances_km: Distance of every node to the target, shape (n_nodes,)
        cfg: IDW parameters
        allow_missing: Return NaN for fields with fewer than k non-missing nodes instead of raising

    Returns:
        float64 values, shape (n_fields,)

    Raises:
        InterpolationError: A field has fewer than k non-missing nodes and allow_missing is off
    """
    fields = np.atleast_2d(np.asarray(fields, dtype=np.float64))
    order = np.argsort(distances_km, kind="stable")
    ranked = fields[:, order]
    ranked_distance = np.asarray(distances_km, dtype=np.float64)[order]

    present = ~np.isnan(ranked)
    rank = np.cumsum(present, axis=1)
    short = rank[:, -1] < cfg.neighbors
    if short.any() and not allow_missing:
        raise InterpolationError(f"Field has {int(rank[:, -1].min())} non-missing nodes, "
                                 f"{cfg.neighbors} required")

    result = np.full(len(fields), np.nan)
    usable = np.flatnonzero(~short)
    if usable.size == 0:
        return result
    chosen = present[usable] & (rank[usable] <= cfg.neighbors)
    rows, cols = np.nonzero(chosen)
    cols = cols.reshape(usable.size, cfg.neighbors)
    rows = usable[rows.reshape(usable.size, cfg.neighbors)]
    value = ranked[rows, cols]
    distance = ranked_distance[cols]

    epsilon_km = cfg.epsilon_m / 1000.0
    exact = distance[:, 0] < epsilon_km
    weight = np.where(exact[:, None], 1.0, np.maximum(distance, epsilon_km)) ** (-cfg.power)
    numerator = np.zeros(usable.size)
    denominator = np.zeros(usable.size)
    for j in range(cfg.neighbors):
        numerator += weight[:, j] * value[:, j]
        denominator += weight[:, j]
    interpolated = numerator / denominator
    interpolated[exact] = value[exact, 0]
    result[usable] = interpolated
    return result


def idw_interpolate(field: np.ndarray, node_lats: np.ndarray, node_lons: np.ndarray,
                    target_lat: float, target_lon: float, cfg: IdwConfig) -> float:
    """
    Interpolate one field to a target location.

    The value is Σ w_i v_i / Σ w_i over the k nearest non-missing nodes with
    w_i = d_i^(−p); a node closer than epsilon is returned exactly.
    """
    distances = haversine_km(target_lat, target_lon, node_lats, node_lons, cfg.earth_radius_km)
    return float(idw_interpolate_many(np.ravel(field)[None, :], distances, cfg)[0])


def in_grid_hull(station: Station, grids: ForecastGridSet) -> bool:
    return bool(grids.lats[0] <= station.lat <= grids.lats[-1] and grids.lons[0] <= station.lon <= grids.lons[-1])


def station_series(grids: ForecastGridSet, station: Station, cfg: IdwConfig, variable: str) -> np.ndarray:
    """
    Interpolated values of one raw variable at a station, shape (launches, T), float32.

    Fields with fewer than k non-missing nodes (a lead hour absent from the grid file) come
    back as NaN.
    """
    node_lat, node_lon = grids.node_coordinates()
    distances = haversine_km(station.lat, station.lon, node_lat, node_lon, cfg.earth_radius_km)
    stack = grids.values[:, :, grids.variables.index(variable)]
    flat = stack.reshape(-1, node_lat.size)
    values = idw_interpolate_many(flat, distances, cfg, allow_missing=True)
    return values.reshape(stack.shape[:2]).astype(np.float32)


# --------------------------------------------------------------------- assembly

def assemble_dataset(observations: ObservationTable, grids: ForecastGridSet, catalog: VariableCatalog,
                     idw: IdwConfig, cadence_hours: int = 3, workers: int = 1,
                     prior_offsets: Sequence[int] = PRIOR_OFFSETS_HOURS) -> Dataset:
    """
    Build the sample × variable × lead dataset.

    Samples are ordered launch-major, then by station id. Raw channels are interpolated to
    each station, derived channels are computed from the interpolated values, and Y holds
    the visibility observed at each valid time on the observation clock.

    Raises:
        EmptyDatasetError: No station inside the grid or no observation at any valid time
    """
    stations = observations.stations()
    kept = [s for s in stations if in_grid_hull(s, grids)]
    dropped = sorted(s.id for s in stations if s not in kept)
    if dropped:
        logger.warning(f"Dropping stations outside the grid hull: {dropped}")
    if not kept:
        raise EmptyDatasetError("No station lies inside the forecast grid")

    n_launch, horizon = len(grids.launches), grids.horizon
    n_station = len(kept)
    n = n_launch * n_station

    def interpolate(variable: str) -> np.ndarray:
        per_station = np.stack([station_series(grids, s, idw, variable) for s in kept], axis=1)
        return per_station.reshape(n, horizon)

    raw_names = catalog.raw_names
    series = Parallel(n_jobs=workers, prefer="threads")(delayed(interpolate)(v) for v in raw_names)
    raw_values = dict(zip(raw_names, series))
    gaps = sum(int(np.isnan(values).sum()) for values in raw_values.values())
    if gaps:
        logger.warning(f"{gaps} interpolated values left missing: fewer than {idw.neighbors} "
                       f"grid nodes with data")

    X = np.empty((n, len(catalog), horizon), dtype=np.float32)
    for m, channel in enumerate(catalog.channels):
        if channel.kind == "raw":
            X[:, m, :] = raw_values[channel.name]
        else:
            X[:, m, :] = derive_channel(channel.formula, raw_values)

    launch = np.repeat(grids.launches, n_station)
    station_ids = tuple(s.id for s in kept) * n_launch
    lat = np.tile([s.lat for s in kept], n_launch)
    lon = np.tile([s.lon for s in kept], n_launch)

    frame = observations.frame
    on_clock = frame[(frame["time"] % (cadence_hours * HOUR)) == 0]
    lookup = pd.Series(on_clock["visibility_km"].to_numpy(),
                       index=pd.MultiIndex.from_arrays([on_clock["station_id"], on_clock["time"]]))

    def observed(times: np.ndarray) -> np.ndarray:
        keys = pd.MultiIndex.from_arrays([np.repeat(np.array(station_ids, dtype=object), times.shape[1]),
                                          times.ravel()])
        return lookup.reindex(keys).to_numpy(dtype=np.float64).reshape(times.shape).astype(np.float32)

    valid = launch[:, None] + np.arange(1, horizon + 1)[None, :] * HOUR
    Y = observed(valid)
    prior = launch[:, None] - np.array(prior_offsets)[None, :] * HOUR
    prior_vis = observed(prior)

    if np.isnan(Y).all():
        raise EmptyDatasetError("No observation falls on any forecast valid time")

    return Dataset(catalog=catalog, X=X, Y=Y, station_ids=station_ids, lat=lat, lon=lon,
                   launch=launch, prior_vis=prior_vis)


class FogIngestionComponent(PipelineComponent):
    """Reads observation and grid files and assembles the dataset."""

    def __init__(self, config: PipelineConfig):
        """
        Initialize ingestion component.

        Args:
            config: Pipeline configuration
        """
        super().__init__(config)
        self.stats = {
            "observation_rows": 0,
            "stations": 0,
            "stations_dropped": 0,
            "launches": 0,
            "samples": 0,
            "channels": 0,
            "labeled_cells": 0,
            "missing_values": 0,
        }

    def execute(self, obs_path: Path, grid_path: Path, catalog: Optional[VariableCatalog] = None) -> Dataset:
        """
        Execute ingestion.

        Args:
            obs_path: Observations CSV
            grid_path: Long-form grid CSV
            catalog: Variable catalog, defaults to the configured one

        Returns:
            Assembled dataset with the resolved configuration echoed into it

        Raises:
            IngestionError: If ingestion fails
        """
        try:
            self.logger.info("Starting data ingestion")
            catalog = catalog or self.config.catalog.to_catalog()
            settings = self.config.ingest

            observations = parse_observations(obs_path, settings.obs_cadence_hours, settings.study_area)
            self.stats["observation_rows"] = observations.n_rows
            self.logger.info(f"Parsed {observations.n_rows} observation rows from {Path(obs_path).name}")

            grids = parse_grid(grid_path, catalog, settings.horizon_hours, settings.launch_hours)
            self.logger.info(
                f"Parsed grid: {len(grids.launches)} launches on a {len(grids.lats)} × {len(grids.lons)} lattice"
            )

            dataset = assemble_dataset(observations, grids, catalog, self.config.idw,
                                       settings.obs_cadence_hours, self.config.project.workers,
                                       settings.prior_offsets_hours)
            dataset = dataset.model_copy(update={"run_config": {
                "config": self.config.resolved(),
                "inputs": {"observations": Path(obs_path).name, "grid": Path(grid_path).name},
            }})

            self.stats["stations"] = len(set(dataset.station_ids))
            self.stats["stations_dropped"] = len(observations.stations()) - self.stats["stations"]
            self.stats["launches"] = len(grids.launches)
            self.stats["samples"] = dataset.n_samples
            self.stats["channels"] = len(catalog)
            self.stats["labeled_cells"] = int((~np.isnan(dataset.Y)).sum())
            self.stats["missing_values"] = int(np.isnan(dataset.X).sum())
            self._log_summary("Ingestion")
            return dataset

        except FogPipelineError:
            raise
        except FileNotFoundError:
            raise
        except Exception as e:
            self.logger.error(f"Ingestion failed: {str(e)}")
            raise IngestionError(f"Data ingestion failed: {str(e)}") from e
