"""
Binary containers and inspection exports.

FOGD holds an assembled dataset, FOGF a feature matrix. Both are little-endian, start with
a four-byte magic and a u16 format version, and end with a u32-length-prefixed JSON trailer
echoing the configuration that produced them.

FOGD layout::

    "FOGD" u16 version  u64 N  u16 M  u16 T
    M × (u16 length, UTF-8 channel)       name or name:formula
    X  float32 [N][M][T]
    Y  float32 [N][T]                     NaN = no observation
    N × meta record (52 bytes)            station[16] lat f64 lon f64 launch i64 prior_vis 3×f32
    u32 length, JSON trailer

FOGF layout::

    "FOGF" u16 version  u64 rows  u16 cols
    cols × (u16 length, UTF-8 feature name)
    values float32 [rows][cols]  labels u8 [rows]  weights float32 [rows]
    rows × provenance record (26 bytes)   station[16] launch i64 lead u16
    u32 length, JSON trailer
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.dataset as ds

from src.models import Dataset, FeatureMatrix, VariableCatalog
from src.models.data import calendar_parts
from src.utils import ContainerFormatError, InputError, get_logger
from src.utils.io import atomic_output, canonical_json

logger = get_logger(__name__)

FOGD_MAGIC = b"FOGD"
FOGF_MAGIC = b"FOGF"
FOGD_VERSION = 1
FOGF_VERSION = 1

PREDICTION_COLUMNS = ["station_id", "launch_utc", "lead_hour", "probability", "forecast_label", "observed_label"]

_FOGD_HEADER = np.dtype([("magic", "S4"), ("version", "<u2"), ("n", "<u8"), ("m", "<u2"), ("t", "<u2")])
_FOGF_HEADER = np.dtype([("magic", "S4"), ("version", "<u2"), ("rows", "<u8"), ("cols", "<u2")])
_META_RECORD = np.dtype([("station", "S16"), ("lat", "<f8"), ("lon", "<f8"), ("launch", "<i8"),
                         ("prior_vis", "<f4", (3,))])
_PROVENANCE_RECORD = np.dtype([("station", "S16"), ("launch", "<i8"), ("lead", "<u2")])


# ---------------------------------------------------------------------- encoding

def _station_bytes(station_ids: Sequence[str]) -> List[bytes]:
    encoded = [s.encode("utf-8") for s in station_ids]
    for raw, text in zip(encoded, station_ids):
        if len(raw) > 16:
            raise InputError(f"Station id {text!r} exceeds 16 bytes")
    return encoded


def _strings(names: Sequence[str]) -> bytes:
    out = bytearray()
    for name in names:
        raw = name.encode("utf-8")
        out += np.array(len(raw), dtype="<u2").tobytes() + raw
    return bytes(out)


def _trailer(payload: Dict[str, Any]) -> bytes:
    raw = canonical_json(payload).encode("utf-8")
    return np.array(len(raw), dtype="<u4").tobytes() + raw


class _Reader:
    """Sequential reader over a container buffer; running short raises ContainerFormatError."""

    def __init__(self, data: bytes, kind: str):
        self.data = memoryview(data)
        self.offset = 0
        self.kind = kind

    def take(self, size: int, what: str) -> memoryview:
        if self.offset + size > len(self.data):
            raise ContainerFormatError(f"{self.kind} container truncated while reading {what}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, what), dtype=dtype, count=count).copy()

    def strings(self, count: int, what: str) -> List[str]:
        names = []
        for _ in range(count):
            size = int(self.array("<u2", 1, what)[0])
            try:
                names.append(bytes(self.take(size, what)).decode("utf-8"))
            except UnicodeDecodeError as e:
                raise ContainerFormatError(f"{self.kind} {what} is not valid UTF-8") from e
        return names

    def trailer(self) -> Dict[str, Any]:
        size = int(self.array("<u4", 1, "trailer length")[0])
        raw = bytes(self.take(size, "trailer"))
        if self.offset != len(self.data):
            raise ContainerFormatError(f"{self.kind} container has {len(self.data) - self.offset} trailing bytes")
        try:
            return json.loads(raw.decode("utf-8"))
        except ValueError as e:
            raise ContainerFormatError(f"{self.kind} trailer is not valid JSON") from e


def _header(reader: _Reader, dtype: np.dtype, magic: bytes, version: int) -> np.void:
    header = reader.array(dtype, 1, "header")[0]
    if bytes(header["magic"]) != magic:
        raise ContainerFormatError(f"Bad magic {bytes(header['magic'])!r}; expected {magic!r}")
    if int(header["version"]) != version:
        raise ContainerFormatError(f"Unsupported {magic.decode()} version {int(header['version'])}; "
                                   f"this build reads version {version}")
    return header


# ----------------------------------------------------------------------- datasets

def encode_dataset(dataset: Dataset) -> bytes:
    n, m, t = dataset.X.shape
    header = np.zeros(1, dtype=_FOGD_HEADER)
    header[0] = (FOGD_MAGIC, FOGD_VERSION, n, m, t)
    meta = np.zeros(n, dtype=_META_RECORD)
    meta["station"] = _station_bytes(dataset.station_ids)
    meta["lat"] = dataset.lat
    meta["lon"] = dataset.lon
    meta["launch"] = dataset.launch
    meta["prior_vis"] = dataset.prior_vis
    return b"".join([
        header.tobytes(),
        _strings(dataset.catalog.encode()),
        np.ascontiguousarray(dataset.X, dtype="<f4").tobytes(),
        np.ascontiguousarray(dataset.Y, dtype="<f4").tobytes(),
        meta.tobytes(),
        _trailer(dataset.run_config),
    ])


def decode_dataset(data: bytes) -> Dataset:
    """
    Raises:
        ContainerFormatError: Bad magic, unsupported version, truncation or trailing bytes
    """
    reader = _Reader(data, "FOGD")
    header = _header(reader, _FOGD_HEADER, FOGD_MAGIC, FOGD_VERSION)
    n, m, t = int(header["n"]), int(header["m"]), int(header["t"])
    try:
        catalog = VariableCatalog.decode(reader.strings(m, "catalog"))
    except ValueError as e:
        raise ContainerFormatError(f"FOGD catalog is invalid: {e}") from e
    X = reader.array("<f4", n * m * t, "X").reshape(n, m, t)
    Y = reader.array("<f4", n * t, "Y").reshape(n, t)
    meta = reader.array(_META_RECORD, n, "meta records")
    run_config = reader.trailer()
    return Dataset(
        catalog=catalog,
        X=X,
        Y=Y,
        station_ids=tuple(s.decode("utf-8") for s in meta["station"]),
        lat=meta["lat"],
        lon=meta["lon"],
        launch=meta["launch"],
        prior_vis=meta["prior_vis"],
        run_config=run_config,
    )


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    with atomic_output(path, "wb") as handle:
        handle.write(encode_dataset(dataset))
    logger.info(f"Wrote FOGD container {path} ({dataset.n_samples} samples)")


def load_dataset(path: Union[str, Path]) -> Dataset:
    with open(path, "rb") as f:
        return decode_dataset(f.read())


# ---------------------------------------------------------------- feature matrices

def encode_features(matrix: FeatureMatrix) -> bytes:
    rows, cols = matrix.values.shape
    header = np.zeros(1, dtype=_FOGF_HEADER)
    header[0] = (FOGF_MAGIC, FOGF_VERSION, rows, cols)
    provenance = np.zeros(rows, dtype=_PROVENANCE_RECORD)
    provenance["station"] = _station_bytes(matrix.station_ids)
    provenance["launch"] = matrix.launch
    provenance["lead"] = matrix.lead
    return b"".join([
        header.tobytes(),
        _strings(matrix.manifest),
        np.ascontiguousarray(matrix.values, dtype="<f4").tobytes(),
        matrix.labels.astype(np.uint8).tobytes(),
        np.ascontiguousarray(matrix.weights, dtype="<f4").tobytes(),
        provenance.tobytes(),
        _trailer(matrix.run_config),
    ])


def decode_features(data: bytes) -> FeatureMatrix:
    """
    Raises:
        ContainerFormatError: Bad magic, unsupported version, truncation or trailing bytes
    """
    reader = _Reader(data, "FOGF")
    header = _header(reader, _FOGF_HEADER, FOGF_MAGIC, FOGF_VERSION)
    rows, cols = int(header["rows"]), int(header["cols"])
    manifest = tuple(reader.strings(cols, "manifest"))
    values = reader.array("<f4", rows * cols, "values").reshape(rows, cols)
    labels = reader.array("u1", rows, "labels")
    weights = reader.array("<f4", rows, "weights")
    provenance = reader.array(_PROVENANCE_RECORD, rows, "provenance")
    run_config = reader.trailer()
    try:
        return FeatureMatrix(
            manifest=manifest,
            values=values,
            labels=labels,
            weights=weights,
            station_ids=tuple(s.decode("utf-8") for s in provenance["station"]),
            launch=provenance["launch"],
            lead=provenance["lead"],
            run_config=run_config,
        )
    except ValueError as e:
        raise ContainerFormatError(f"FOGF content is invalid: {e}") from e


def save_features(matrix: FeatureMatrix, path: Union[str, Path]) -> None:
    with atomic_output(path, "wb") as handle:
        handle.write(encode_features(matrix))
    logger.info(f"Wrote FOGF container {path} ({matrix.n_rows} rows × {matrix.n_features} features)")


def load_features(path: Union[str, Path]) -> FeatureMatrix:
    with open(path, "rb") as f:
        return decode_features(f.read())


# ----------------------------------------------------------------------- exports

def export_csv(matrix: FeatureMatrix, path: Union[str, Path]) -> None:
    """Provenance, features, label and weight as CSV; missing values print as NA."""
    with atomic_output(path, "w") as handle:
        matrix.to_frame().to_csv(handle, index=False, na_rep="NA", lineterminator="\n")


def export_parquet(matrix: FeatureMatrix, output_dir: Union[str, Path], compression: str = "snappy") -> Path:
    """
    Write the inspection table as a Parquet dataset partitioned by launch year.

    Returns:
        The dataset directory
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    frame = matrix.to_frame()
    frame["launch_year"] = calendar_parts(matrix.launch)["year"]
    table = pa.Table.from_pandas(frame, preserve_index=False)

    partitioning = ds.partitioning(pa.schema([("launch_year", table.schema.field("launch_year").type)]),
                                   flavor="hive")
    ds.write_dataset(
        table,
        base_dir=output_dir,
        partitioning=partitioning,
        format="parquet",
        existing_data_behavior="delete_matching",
        file_options=ds.ParquetFileFormat().make_write_options(compression=compression, use_dictionary=True),
    )
    logger.info(f"Wrote Parquet export to {output_dir}")
    return output_dir


def read_parquet_export(output_dir: Union[str, Path]) -> pd.DataFrame:
    """Read a Parquet export back, ordered by its provenance columns."""
    dataset = ds.dataset(output_dir, format="parquet", partitioning="hive")
    frame = dataset.to_table().to_pandas()
    return frame.sort_values(["launch_utc", "station_id", "lead_hour"], kind="stable").reset_index(drop=True)


# -------------------------------------------------------------------- predictions

def predictions_frame(matrix: FeatureMatrix, probabilities: np.ndarray, threshold: float) -> pd.DataFrame:
    probabilities = np.asarray(probabilities, dtype=np.float64)
    frame = matrix.provenance_frame()
    frame["probability"] = probabilities
    frame["forecast_label"] = (probabilities >= threshold).astype(np.int64)
    frame["observed_label"] = matrix.labels.astype(np.int64)
    return frame[PREDICTION_COLUMNS]


def write_predictions(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    """Write a predictions CSV; probabilities use the shortest round-tripping repr."""
    with atomic_output(path, "w") as handle:
        handle.write(",".join(PREDICTION_COLUMNS) + "\n")
        for row in frame.itertuples(index=False):
            observed = "NA" if pd.isna(row.observed_label) else str(int(row.observed_label))
            handle.write(f"{row.station_id},{row.launch_utc},{int(row.lead_hour)},{float(row.probability)!r},"
                         f"{int(row.forecast_label)},{observed}\n")

