"""
Serialization

JSON and CSV persistence for datasets, tensor tables, boundaries and reports.

- Complex numbers are stored as [re, im] pairs
- Tensor entries are keyed "a1,a2|b1,b2"
- CSV goes through pandas with a fixed float format so reruns are byte-identical
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from tdpt.core.geometry import BoundaryCurve
from tdpt.core.polarization_tensors import FdptTable, FrequencyGrid, TdptTable
from tdpt.core.special_functions import MultiIndex
from tdpt.errors import GridMismatchError
from tdpt.forward.forward_model import MsrDataset, SourceReceiverLayout

logger = logging.getLogger("TDPT.Serialization")

FLOAT_FORMAT = "%.17g"
PathLike = Union[str, Path]


def encode_complex(values: Any) -> Any:
    """Nested [re, im] pairs for a complex scalar or array."""
    arr = np.asarray(values, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def decode_complex(data: Any) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def entry_key(alpha: MultiIndex, beta: MultiIndex) -> str:
    return f"{alpha.label}|{beta.label}"


def parse_entry_key(key: str):
    alpha, beta = key.split("|")
    return MultiIndex.parse(alpha), MultiIndex.parse(beta)


def _finite_or_none(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def write_json(data: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def layout_to_dict(layout: SourceReceiverLayout) -> Dict[str, Any]:
    return {
        "geometry": layout.geometry,
        "transmitters": layout.transmitters.tolist(),
        "receivers": layout.receivers.tolist(),
    }


def layout_from_dict(data: Dict[str, Any]) -> SourceReceiverLayout:
    return SourceReceiverLayout(
        transmitters=np.asarray(data["transmitters"], dtype=float),
        receivers=np.asarray(data["receivers"], dtype=float),
        geometry=data.get("geometry", "custom"),
    )


def save_msr_dataset(dataset: MsrDataset, directory: PathLike) -> Path:
    """
    Write msr.json plus one CSV per frequency (receiver, transmitter, re, im).

    Returns:
        Path of the JSON file
    """
    directory = Path(directory)
    data = {
        "layout": layout_to_dict(dataset.layout),
        "frequencies": dataset.frequencies.tolist(),
        "noise_percent": dataset.noise_percent,
        "sigma": dataset.sigma.tolist(),
        "seed": dataset.seed,
        "realization": dataset.realization,
        "metadata": dataset.metadata,
        "matrices": encode_complex(dataset.matrices),
    }
    path = write_json(data, directory / "msr.json")

    n_rcv, n_src = dataset.layout.shape
    receiver, transmitter = np.meshgrid(np.arange(n_rcv), np.arange(n_src), indexing="ij")
    for l, matrix in enumerate(dataset.matrices):
        frame = pd.DataFrame({
            "receiver": receiver.ravel(),
            "transmitter": transmitter.ravel(),
            "re": matrix.real.ravel(),
            "im": matrix.imag.ravel(),
        })
        write_csv(frame, directory / "msr_csv" / f"msr_{l:04d}.csv")
    logger.info(f"Saved MSR dataset ({dataset.frequencies.size} frequencies) to {path}")
    return path


def load_msr_dataset(path: PathLike) -> MsrDataset:
    data = read_json(path)
    return MsrDataset(
        layout=layout_from_dict(data["layout"]),
        frequencies=np.asarray(data["frequencies"], dtype=float),
        matrices=decode_complex(data["matrices"]),
        noise_percent=float(data.get("noise_percent", 0.0)),
        sigma=np.asarray(data.get("sigma") or np.zeros(len(data["frequencies"])), dtype=float),
        seed=data.get("seed"),
        realization=int(data.get("realization", 0)),
        metadata=data.get("metadata", {}),
    )


def fdpt_to_dict(table: FdptTable) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "omega": table.omega,
        "epsilon": table.epsilon,
        "contrast": _finite_or_none(table.contrast),
        "order": table.order,
        "indices": [alpha.label for alpha in table.indices],
        "entries": {
            entry_key(alpha, beta): encode_complex(table.values[i, j])
            for i, alpha in enumerate(table.indices)
            for j, beta in enumerate(table.indices)
        },
    }
    if table.row_projector is not None:
        data["row_projector"] = encode_complex(table.row_projector)
    if table.col_projector is not None:
        data["col_projector"] = encode_complex(table.col_projector)
    return data


def fdpt_from_dict(data: Dict[str, Any]) -> FdptTable:
    indices = [MultiIndex.parse(label) for label in data["indices"]]
    values = np.zeros((len(indices), len(indices)), dtype=complex)
    position = {alpha: i for i, alpha in enumerate(indices)}
    for key, pair in data["entries"].items():
        alpha, beta = parse_entry_key(key)
        values[position[alpha], position[beta]] = complex(pair[0], pair[1])
    contrast = data.get("contrast")
    return FdptTable(
        omega=float(data["omega"]),
        epsilon=float(data["epsilon"]),
        contrast=float("nan") if contrast is None else float(contrast),
        order=int(data["order"]),
        indices=indices,
        values=values,
        row_projector=decode_complex(data["row_projector"]) if "row_projector" in data else None,
        col_projector=decode_complex(data["col_projector"]) if "col_projector" in data else None,
    )


def save_fdpt_tables(tables: Sequence[FdptTable], path: PathLike) -> Path:
    return write_json({"tables": [fdpt_to_dict(table) for table in tables]}, path)


def load_fdpt_tables(path: PathLike) -> List[FdptTable]:
    return [fdpt_from_dict(item) for item in read_json(path)["tables"]]


def tdpt_frame(tdpt: TdptTable) -> pd.DataFrame:
    """Time series with one re/im column pair per entry."""
    columns: Dict[str, np.ndarray] = {"t": tdpt.t}
    for i, alpha in enumerate(tdpt.indices):
        for j, beta in enumerate(tdpt.indices):
            key = entry_key(alpha, beta)
            columns[f"re[{key}]"] = tdpt.values[:, i, j].real
            columns[f"im[{key}]"] = tdpt.values[:, i, j].imag
    columns["envelope"] = tdpt.envelope()
    return pd.DataFrame(columns)


def save_tdpt_table(tdpt: TdptTable, directory: PathLike, stem: str = "tdpt") -> Path:
    """
    Write <stem>.csv (time series), <stem>.json (grid metadata) and
    <stem>_fdpt.json (per-frequency source tables).

    Returns:
        Path of the metadata JSON
    """
    directory = Path(directory)
    write_csv(tdpt_frame(tdpt), directory / f"{stem}.csv")
    if tdpt.variance is not None:
        variance = {"t": tdpt.t}
        for i, alpha in enumerate(tdpt.indices):
            for j, beta in enumerate(tdpt.indices):
                variance[entry_key(alpha, beta)] = tdpt.variance[:, i, j]
        write_csv(pd.DataFrame(variance), directory / f"{stem}_variance.csv")
    if tdpt.sources:
        save_fdpt_tables(tdpt.sources, directory / f"{stem}_fdpt.json")
    meta = {
        "rho": tdpt.grid.rho,
        "half_count": tdpt.grid.half_count,
        "rho0": tdpt.grid.rho0,
        "indices": [alpha.label for alpha in tdpt.indices],
        "csv": f"{stem}.csv",
        "sources": f"{stem}_fdpt.json" if tdpt.sources else None,
    }
    return write_json(meta, directory / f"{stem}.json")


def load_tdpt_table(path: PathLike) -> TdptTable:
    """Restore a TdptTable from the metadata JSON written by save_tdpt_table."""
    path = Path(path)
    meta = read_json(path)
    frame = pd.read_csv(path.parent / meta["csv"])
    indices = [MultiIndex.parse(label) for label in meta["indices"]]
    m = len(indices)
    values = np.zeros((len(frame), m, m), dtype=complex)
    for i, alpha in enumerate(indices):
        for j, beta in enumerate(indices):
            key = entry_key(alpha, beta)
            values[:, i, j] = frame[f"re[{key}]"].to_numpy() + 1j * frame[f"im[{key}]"].to_numpy()
    grid = FrequencyGrid.build(float(meta["rho"]), int(meta["half_count"]), float(meta["rho0"]))
    sources = load_fdpt_tables(path.parent / meta["sources"]) if meta.get("sources") else []
    if sources and len(sources) != len(grid.frequencies):
        raise GridMismatchError(f"{len(sources)} source tables for {len(grid.frequencies)} grid frequencies")
    return TdptTable(
        t=frame["t"].to_numpy(),
        grid=grid,
        indices=indices,
        values=values,
        sources=sorted(sources, key=lambda table: table.omega),
    )


def boundary_frame(curve: BoundaryCurve) -> pd.DataFrame:
    return pd.DataFrame({
        "t": curve.t,
        "x1": curve.points[:, 0],
        "x2": curve.points[:, 1],
        "nu1": curve.normals[:, 0],
        "nu2": curve.normals[:, 1],
        "weight": curve.weights,
    })


def save_boundary(curve: BoundaryCurve, path: PathLike) -> Path:
    return write_csv(boundary_frame(curve), path)
