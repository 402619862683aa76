"""
Seeded synthetic observation and grid generator.

Forecast fields are low-frequency sinusoids plus AR(1) noise over an hourly timeline, with
a smooth spatial gradient and a little node noise. Station values go through the same IDW
code ingest uses, and visibility at time t follows a planted rule: fog when relative
humidity at t − lag reaches the humidity threshold and wind speed at t is below the wind
threshold. The fog frequency is tuned by shifting the humidity field.

Outputs in the target directory: ``observations.csv``, ``grid.csv``, ``catalog.yaml`` and
``truth.json``.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from scipy import signal

from src.components.base import PipelineComponent
from src.components.ingestion import GRID_COLUMNS, OBSERVATION_COLUMNS, haversine_km, idw_interpolate_many
from src.config import IdwConfig, PipelineConfig, SynthConfig
from src.models import ChannelDescriptor, Station, VariableCatalog, derive_channel, format_utc, parse_utc
from src.models.data import HOUR
from src.utils import FogPipelineError, SynthesisError, get_logger
from src.utils.io import atomic_output

logger = get_logger(__name__)

TRUTH_FORMAT = "fogcast-synth-truth v1"
QUANTUM = 64.0
AR_COEFFICIENT = 0.9
SHIFT_RANGE = (-80.0, 60.0)
BISECTION_STEPS = 48
FOG_WEATHER_CODE = 45

HUMIDITY = "R_H_GDS3_HTGL"
U_WIND = "U_GRD_GDS3_HTGL"
V_WIND = "V_GRD_GDS3_HTGL"
AIR_TEMPERATURE = "TMP_GDS3_HTGL"
SEA_TEMPERATURE = "TMP_GDS3_SFC"
DEW_POINT = "DPT_GDS3_HTGL"
WIND_SPEED = "wind_speed"
WIND_FORMULA = f"hypot({U_WIND},{V_WIND})"


class FieldProfile(NamedTuple):
    mean: float
    amplitude: float
    period_hours: float
    sd: float
    gradient: float
    low: float = -math.inf
    high: float = math.inf


# Generated in this order; the dew point is computed from temperature and humidity.
PROFILES: Dict[str, FieldProfile] = {
    HUMIDITY: FieldProfile(80.0, 8.0, 24.0, 6.0, 2.0, 5.0, 100.0),
    U_WIND: FieldProfile(0.0, 3.0, 36.0, 2.0, 0.5),
    V_WIND: FieldProfile(0.0, 3.0, 30.0, 2.0, 0.5),
    AIR_TEMPERATURE: FieldProfile(14.0, 3.0, 24.0, 1.0, 1.0),
    SEA_TEMPERATURE: FieldProfile(13.0, 1.0, 24.0, 0.5, 0.5),
    "PRES_GDS3_SFC": FieldProfile(101300.0, 250.0, 72.0, 80.0, 40.0),
    "L_CDC_GDS3_MCY": FieldProfile(40.0, 25.0, 48.0, 10.0, 5.0, 0.0, 100.0),
}


def synthetic_catalog() -> VariableCatalog:
    """Raw channels the generator writes, plus wind speed and the air-sea temperature difference."""
    raw = list(PROFILES) + [DEW_POINT]
    channels = [ChannelDescriptor(name=name) for name in raw]
    channels.append(ChannelDescriptor(name=WIND_SPEED, kind="derived", formula=WIND_FORMULA))
    channels.append(ChannelDescriptor(name="air_sea_temp_diff", kind="derived",
                                      formula=f"diff({AIR_TEMPERATURE},{SEA_TEMPERATURE})"))
    return VariableCatalog(channels=tuple(channels))


def quantize(values: np.ndarray) -> np.ndarray:
    """Round to multiples of 1/64, exact in float32 and in six-decimal text."""
    return (np.round(np.asarray(values, dtype=np.float64) * QUANTUM) / QUANTUM).astype(np.float32)


def _coordinate(value: float) -> float:
    return float(f"{value:.4f}")


class _Period(NamedTuple):
    launches: np.ndarray
    timeline: np.ndarray
    obs_times: np.ndarray


class SynthResult(NamedTuple):
    paths: Dict[str, Path]
    truth: Dict[str, Any]


class SyntheticFogGenerator:
    """
    Builds the synthetic files for one seed.

    Args:
        cfg: Generator parameters
        idw: Interpolation settings, identical to the ones ingest will use
        horizon: Lead horizon in hours
        launch_hours: Launch hours (UTC) within each day
        cadence_hours: Observation clock
        prior_offsets: Visibility offsets before launch that ingest looks up
    """

    def __init__(self, cfg: SynthConfig, idw: IdwConfig = IdwConfig(), horizon: int = 60,
                 launch_hours: Sequence[int] = (0, 12), cadence_hours: int = 3,
                 prior_offsets: Sequence[int] = (0, 3, 6)):
        self.cfg = cfg
        self.idw = idw
        self.horizon = horizon
        self.launch_hours = tuple(launch_hours)
        self.cadence_hours = cadence_hours
        self.prior_offsets = tuple(prior_offsets)
        self.catalog = synthetic_catalog()

    # ---------------------------------------------------------------- layout

    def _stations(self, rng: np.random.Generator) -> List[Station]:
        lat_min, lat_max, lon_min, lon_max = self.cfg.station_box
        lats = rng.uniform(lat_min, lat_max, self.cfg.stations)
        lons = rng.uniform(lon_min, lon_max, self.cfg.stations)
        return [Station(id=f"ST{i + 1:04d}", lat=_coordinate(lat), lon=_coordinate(lon))
                for i, (lat, lon) in enumerate(zip(lats, lons))]

    def _axes(self) -> Tuple[np.ndarray, np.ndarray]:
        lat_min, lat_max, lon_min, lon_max = self.cfg.station_box
        margin = self.cfg.grid_margin_deg
        ny, nx = self.cfg.grid_shape
        lats = np.array([_coordinate(v) for v in np.linspace(lat_min - margin, lat_max + margin, ny)])
        lons = np.array([_coordinate(v) for v in np.linspace(lon_min - margin, lon_max + margin, nx)])
        return lats, lons

    def _periods(self) -> List[_Period]:
        periods = []
        lead_back = max(self.prior_offsets) * HOUR
        for period in self.cfg.periods:
            first = parse_utc(f"{period.start}T00:00:00Z")
            last = parse_utc(f"{period.end}T00:00:00Z") + 86400
            if last <= first:
                raise SynthesisError(f"Period {period.start}..{period.end} is empty")
            launches = np.array([t for t in range(first, last, HOUR)
                                 if (t % 86400) // HOUR in self.launch_hours], dtype=np.int64)
            start = launches[0] - lead_back - self.cfg.planted_lag * HOUR
            end = launches[-1] + self.horizon * HOUR
            timeline = np.arange(start, end + 1, HOUR, dtype=np.int64)
            obs_times = np.arange(launches[0] - lead_back, end + 1, self.cadence_hours * HOUR, dtype=np.int64)
            periods.append(_Period(launches, timeline, obs_times))
        return periods

    # ---------------------------------------------------------------- fields

    def _field(self, rng: np.random.Generator, profile: FieldProfile, hours: np.ndarray,
               lat_offset: np.ndarray, lon_offset: np.ndarray) -> np.ndarray:
        """Unclipped field values, shape (hours, ny, nx), float64."""
        phase = rng.uniform(0.0, 2.0 * math.pi)
        seasonal = profile.amplitude * np.sin(2.0 * math.pi * hours / profile.period_hours + phase)
        innovations = rng.standard_normal(len(hours))
        ar = signal.lfilter([math.sqrt(1.0 - AR_COEFFICIENT ** 2)], [1.0, -AR_COEFFICIENT], innovations)
        slope = rng.normal(0.0, profile.gradient, 2)
        plane = slope[0] * lat_offset + slope[1] * lon_offset
        node_noise = rng.standard_normal((len(hours),) + lat_offset.shape)
        scale = self.cfg.noise_scale * profile.sd
        return (profile.mean + seasonal[:, None, None] + scale * ar[:, None, None]
                + plane[None, :, :] + 0.2 * scale * node_noise)

    def _base_fields(self, rng: np.random.Generator, periods: List[_Period], lats: np.ndarray,
                     lons: np.ndarray) -> List[Dict[str, np.ndarray]]:
        lat_grid, lon_grid = np.meshgrid(lats, lons, indexing="ij")
        lat_offset = lat_grid - lat_grid.mean()
        lon_offset = lon_grid - lon_grid.mean()
        fields = []
        for period in periods:
            hours = period.timeline / HOUR
            fields.append({name: self._field(rng, profile, hours, lat_offset, lon_offset)
                           for name, profile in PROFILES.items()})
        return fields

    @staticmethod
    def _humidity(base: np.ndarray, shift: float) -> np.ndarray:
        profile = PROFILES[HUMIDITY]
        return np.clip(base + shift, profile.low, profile.high)

    def _finished(self, base: Dict[str, np.ndarray], shift: float) -> Dict[str, np.ndarray]:
        """Quantized float32 node fields of every raw channel."""
        out = {}
        humidity = self._humidity(base[HUMIDITY], shift)
        for name, profile in PROFILES.items():
            raw = humidity if name == HUMIDITY else np.clip(base[name], profile.low, profile.high)
            out[name] = quantize(raw)
        out[DEW_POINT] = quantize(base[AIR_TEMPERATURE] - (100.0 - humidity) / 5.0)
        return out

    # ----------------------------------------------------------------- rule

    def _station_series(self, field: np.ndarray, distances: np.ndarray) -> np.ndarray:
        flat = field.reshape(field.shape[0], -1)
        return idw_interpolate_many(flat, distances, self.idw).astype(np.float32)

    def _rule(self, periods: List[_Period], humidity: List[np.ndarray], wind: List[List[np.ndarray]],
              distances: List[np.ndarray]) -> Dict[str, np.ndarray]:
        """Rule inputs and outcome for every observation row, station-major then time."""
        lag = self.cfg.planted_lag
        columns: Dict[str, List[np.ndarray]] = {"station": [], "time": [], "rh": [], "wind": []}
        for s, station_distances in enumerate(distances):
            for p, period in enumerate(periods):
                rh = self._station_series(humidity[p], station_distances)
                index = (period.obs_times - period.timeline[0]) // HOUR
                columns["station"].append(np.full(len(index), s))
                columns["time"].append(period.obs_times)
                columns["rh"].append(rh[index - lag])
                columns["wind"].append(wind[s][p][index])
        rows = {key: np.concatenate(value) for key, value in columns.items()}
        rows["fog"] = (rows["rh"] >= self.cfg.rh_threshold) & (rows["wind"] < self.cfg.wind_threshold)
        return rows

    def _fog_frequency(self, periods, base_fields, wind, distances, shift: float) -> float:
        humidity = [quantize(self._humidity(base[HUMIDITY], shift)) for base in base_fields]
        return float(self._rule(periods, humidity, wind, distances)["fog"].mean())

    def _tune_shift(self, periods, base_fields, wind, distances) -> Tuple[float, Tuple[float, float]]:
        """Humidity shift whose rule fog frequency is closest to the target, found by bisection."""
        target = self.cfg.target_fog_frequency
        low, high = SHIFT_RANGE
        achievable = (self._fog_frequency(periods, base_fields, wind, distances, low),
                      self._fog_frequency(periods, base_fields, wind, distances, high))
        if not achievable[0] <= target <= achievable[1]:
            raise SynthesisError(
                f"Fog frequency {target} is unreachable under the planted rule; achievable range "
                f"[{achievable[0]:.6f}, {achievable[1]:.6f}]",
                achievable=achievable,
            )
        best = (abs(achievable[1] - target), high)
        for _ in range(BISECTION_STEPS):
            middle = 0.5 * (low + high)
            frequency = self._fog_frequency(periods, base_fields, wind, distances, middle)
            best = min(best, (abs(frequency - target), middle))
            if frequency < target:
                low = middle
            else:
                high = middle
        return best[1], achievable

    # -------------------------------------------------------------- generate

    def simulate(self) -> Dict[str, Any]:
        """
        Build every generated value in memory.

        Returns:
            Mapping with stations, axes, periods, quantized fields, rule rows and truth metadata

        Raises:
            SynthesisError: The target fog frequency is outside the achievable range
        """
        rng = np.random.default_rng(self.cfg.seed)
        stations = self._stations(rng)
        lats, lons = self._axes()
        periods = self._periods()
        base_fields = self._base_fields(rng, periods, lats, lons)

        lat_grid, lon_grid = np.meshgrid(lats, lons, indexing="ij")
        node_lat, node_lon = lat_grid.ravel(), lon_grid.ravel()
        distances = [haversine_km(s.lat, s.lon, node_lat, node_lon, self.idw.earth_radius_km) for s in stations]

        wind = []
        for station_distances in distances:
            per_period = []
            for base in base_fields:
                u = self._station_series(quantize(base[U_WIND]), station_distances)
                v = self._station_series(quantize(base[V_WIND]), station_distances)
                per_period.append(derive_channel(WIND_FORMULA, {U_WIND: u, V_WIND: v}))
            wind.append(per_period)

        shift, achievable = self._tune_shift(periods, base_fields, wind, distances)
        fields = [self._finished(base, shift) for base in base_fields]
        rows = self._rule(periods, [f[HUMIDITY] for f in fields], wind, distances)

        n_rows = len(rows["fog"])
        flipped = rng.random(n_rows) < self.cfg.label_noise
        missing = rng.random(n_rows) < self.cfg.missing_fraction
        observed_fog = rows["fog"] ^ flipped
        depression = np.maximum(100.0 - rows["rh"].astype(np.float64), 0.0)
        visibility = np.where(
            observed_fog,
            0.05 + 0.95 * np.minimum(depression, 10.0) / 10.0,
            1.001 + 0.3 * depression + 0.5 * np.maximum(0.0, rows["wind"].astype(np.float64) - 5.0),
        )
        rows.update(flipped=flipped, missing=missing, observed_fog=observed_fog, visibility=visibility)
        logger.info(f"Humidity shift {shift:.4f} gives rule fog frequency {rows['fog'].mean():.4f}")
        return {"stations": stations, "lats": lats, "lons": lons, "periods": periods, "fields": fields,
                "rows": rows, "shift": shift, "achievable": achievable}

    def grid_frame(self, state: Dict[str, Any]) -> pd.DataFrame:
        """Long-form grid rows, ordered launch, lead, variable, lat, lon."""
        lats, lons = state["lats"], state["lons"]
        names = self.catalog.raw_names
        lat_text = np.array([f"{v:.4f}" for v in lats])
        lon_text = np.array([f"{v:.4f}" for v in lons])
        ny, nx = len(lats), len(lons)
        per_field = ny * nx
        blocks = []
        for period, fields in zip(state["periods"], state["fields"]):
            leads = np.arange(1, self.horizon + 1)
            index = ((period.launches[:, None] - period.timeline[0]) // HOUR + leads[None, :]).ravel()
            stack = np.stack([fields[name][index] for name in names], axis=1)
            count = len(index) * len(names)
            launch_text = np.array([format_utc(t) for t in period.launches])
            blocks.append(pd.DataFrame({
                "launch_utc": np.repeat(launch_text, self.horizon * len(names) * per_field),
                "lead_hour": np.tile(np.repeat(leads, len(names) * per_field), len(period.launches)),
                "lat": np.tile(np.repeat(lat_text, nx), count),
                "lon": np.tile(lon_text, count * ny),
                "variable": np.tile(np.repeat(np.array(names), per_field), len(index)),
                "value": np.char.mod("%.6f", stack.ravel().astype(np.float64)),
            }, columns=GRID_COLUMNS))
        return pd.concat(blocks, ignore_index=True)

    def observation_frame(self, state: Dict[str, Any]) -> pd.DataFrame:
        stations: List[Station] = state["stations"]
        rows = state["rows"]
        missing = rows["missing"]
        visibility = np.char.mod("%.3f", rows["visibility"])
        weather = np.where(rows["observed_fog"], str(FOG_WEATHER_CODE), "0")
        return pd.DataFrame({
            "station_id": [stations[s].id for s in rows["station"]],
            "lat": [f"{stations[s].lat:.4f}" for s in rows["station"]],
            "lon": [f"{stations[s].lon:.4f}" for s in rows["station"]],
            "time_utc": [format_utc(t) for t in rows["time"]],
            "visibility_km": np.where(missing, "", visibility),
            "present_weather": np.where(missing, "", weather),
        }, columns=OBSERVATION_COLUMNS)

    def truth(self, state: Dict[str, Any]) -> Dict[str, Any]:
        stations: List[Station] = state["stations"]
        rows = state["rows"]
        records = [
            {
                "station_id": stations[int(s)].id,
                "time_utc": format_utc(int(t)),
                "rh_lagged": float(rh),
                "wind_speed": float(w),
                "rule_fog": bool(fog),
                "observed_fog": bool(obs),
                "flipped": bool(flip),
                "missing": bool(miss),
            }
            for s, t, rh, w, fog, obs, flip, miss in zip(rows["station"], rows["time"], rows["rh"], rows["wind"],
                                                         rows["fog"], rows["observed_fog"], rows["flipped"],
                                                         rows["missing"])
        ]
        return {
            "format": TRUTH_FORMAT,
            "seed": self.cfg.seed,
            "planted_lag": self.cfg.planted_lag,
            "humidity_variable": HUMIDITY,
            "wind_variable": WIND_SPEED,
            "rh_threshold": self.cfg.rh_threshold,
            "wind_threshold": self.cfg.wind_threshold,
            "rh_shift": state["shift"],
            "target_fog_frequency": self.cfg.target_fog_frequency,
            "rule_fog_frequency": float(rows["fog"].mean()),
            "observed_fog_frequency": float(rows["observed_fog"][~rows["missing"]].mean()),
            "achievable_range": list(state["achievable"]),
            "label_noise": self.cfg.label_noise,
            "noise_scale": self.cfg.noise_scale,
            "missing_fraction": self.cfg.missing_fraction,
            "stations": [{"id": s.id, "lat": s.lat, "lon": s.lon} for s in stations],
            "rows": records,
        }

    def generate(self, out_dir: Union[str, Path]) -> SynthResult:
        """Write the four synthetic files into ``out_dir``."""
        out_dir = Path(out_dir)
        state = self.simulate()
        truth = self.truth(state)
        paths = {
            "observations": out_dir / "observations.csv",
            "grid": out_dir / "grid.csv",
            "catalog": out_dir / "catalog.yaml",
            "truth": out_dir / "truth.json",
        }
        with atomic_output(paths["observations"], "w") as handle:
            self.observation_frame(state).to_csv(handle, index=False, lineterminator="\n")
        with atomic_output(paths["grid"], "w") as handle:
            self.grid_frame(state).to_csv(handle, index=False, lineterminator="\n")
        with atomic_output(paths["catalog"], "w") as handle:
            yaml.safe_dump(self.catalog.to_document(), handle, sort_keys=False)
        with atomic_output(paths["truth"], "w") as handle:
            handle.write(json.dumps(truth, sort_keys=True, indent=1))
            handle.write("\n")
        return SynthResult(paths, truth)


class SynthesisComponent(PipelineComponent):
    """Generates a synthetic observation and grid set from the ``synth`` configuration."""

    def __init__(self, config: PipelineConfig):
        super().__init__(config)
        self.stats = {"stations": 0, "observation_rows": 0, "rule_fog_frequency": 0.0, "rh_shift": 0.0}

    def execute(self, out_dir: Union[str, Path]) -> SynthResult:
        try:
            ingest = self.config.ingest
            generator = SyntheticFogGenerator(self.config.synth, self.config.idw, ingest.horizon_hours,
                                              ingest.launch_hours, ingest.obs_cadence_hours,
                                              ingest.prior_offsets_hours)
            self.logger.info(f"Generating synthetic data (seed {self.config.synth.seed}) into {out_dir}")
            result = generator.generate(out_dir)

            self.stats["stations"] = len(result.truth["stations"])
            self.stats["observation_rows"] = len(result.truth["rows"])
            self.stats["rule_fog_frequency"] = round(result.truth["rule_fog_frequency"], 6)
            self.stats["rh_shift"] = round(result.truth["rh_shift"], 6)
            self._log_summary("Synthesis")
            return result

        except FogPipelineError:
            raise
        except Exception as e:
            self.logger.error(f"Synthesis failed: {str(e)}")
            raise SynthesisError(f"Synthetic data generation failed: {str(e)}") from e
