import dataclasses
import json
import math
from pathlib import Path
from typing import List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from src import config
from src.experiments import CampaignResult, SweepTable


def _plain(value):
    """numpy scalars and tuples to plain JSON values; floats keep their repr, non-finite floats become null."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _records(result) -> List[dict]:
    if isinstance(result, pd.DataFrame):
        return result.to_dict(orient = "records")
    if dataclasses.is_dataclass(result) and not isinstance(result, type):
        return [dataclasses.asdict(result)]
    if isinstance(result, dict):
        return [result]
    return [dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r) for r in result]


class ExportAuctionResults:

    def __init__(self,
                 results_path = None,
                 formats = None,
                 float_format = None,
                 ):
        """
        Defaults to all parameters as set in config.py; overrides parameters when stated in function call.
        @param results_path: directory the result files are written to
        @param formats: output formats, any of "csv" and "jsonl"
        @param float_format: printf format for floats in CSV files (17 significant digits re-read exactly)
        """
        defaults = {
            "results_path":config.RESULTS_DIR,
            "formats":("csv",),
            "float_format":config.FLOAT_FORMAT,
        }

        overrides = {
            "results_path":results_path,
            "formats":formats,
            "float_format":float_format,
        }

        for name, default in defaults.items():
            value = overrides[name] if overrides[name] is not None else default
            setattr(self, name, value)

        unknown = set(self.formats) - set(config.OUTPUT_FORMATS)
        if unknown:
            raise ValueError(f"unsupported output formats {sorted(unknown)}; expected {config.OUTPUT_FORMATS}")
        self.results_path = Path(self.results_path)


    def write_csv(self, frame: pd.DataFrame, path: Path, columns: Optional[List[str]] = None) -> Path:
        frame = frame if columns is None else frame.reindex(columns = columns)
        frame.to_csv(path, index = False, float_format = self.float_format)
        return path


    def write_jsonl(self, records: List[dict], path: Path) -> Path:
        with open(path, "w", encoding = "utf-8") as f:
            for record in records:
                f.write(json.dumps(_plain(record), allow_nan = False) + "\n")
        return path


    def export_campaign(self, result: CampaignResult) -> List[Path]:
        """
        CSV carries the documented campaign columns; JSON lines carry every field, digests and flags included.
        """
        written = []
        for fmt in self.formats:
            path = config.campaign_path(self.results_path, fmt)
            if fmt == "csv":
                written.append(self.write_csv(result.frame, path, config.CAMPAIGN_COLUMNS))
            else:
                written.append(self.write_jsonl(_records(result.frame), path))
        return written


    def export_sweep(self, table: SweepTable) -> List[Path]:
        written = []
        for fmt in self.formats:
            path = config.sweep_path(self.results_path, fmt)
            if fmt == "csv":
                written.append(self.write_csv(table.frame, path, config.SWEEP_COLUMNS))
            else:
                written.append(self.write_jsonl(_records(table.frame), path))
        return written


    def export_records(self, result, name: str) -> List[Path]:
        """
        Any other result (a dataclass, a dict, a list of either, or a DataFrame) written under `name`.
        """
        records = [_plain(r) for r in _records(result)]
        written = []
        for fmt in self.formats:
            path = self.results_path / f"{name}.{fmt}"
            if fmt == "csv":
                frame = pd.DataFrame([{k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()}
                                      for r in records])
                written.append(self.write_csv(frame, path))
            else:
                written.append(self.write_jsonl(records, path))
        return written


    def save_sweep_plot(self, table: SweepTable) -> Path:
        """
        Bid and symmetric stop-out against the swept axis, one panel each.
        """
        path = self.results_path / "sweep.png"
        frame = table.frame
        fig, (ax_bid, ax_yield) = plt.subplots(1, 2, figsize = (10, 4))
        ax_bid.plot(frame["axis_value"], frame["bid"], marker = ".")
        ax_bid.set_xlabel(table.axis)
        ax_bid.set_ylabel("equilibrium bid")
        ax_yield.plot(frame["axis_value"], frame["stop_out"], marker = ".", color = "tab:orange")
        ax_yield.set_xlabel(table.axis)
        ax_yield.set_ylabel("stop-out yield")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
        return path


def emit_results(result, fmt: str = "csv", directory = None, name: str = "result") -> List[Path]:
    """
    Write a result in one format.
    @param result: CampaignResult, SweepTable, or any record-like result from the other stages
    @param fmt: "csv" or "jsonl"
    @return: the files written
    """
    writer = ExportAuctionResults(results_path = directory, formats = (fmt,))
    if isinstance(result, CampaignResult):
        return writer.export_campaign(result)
    if isinstance(result, SweepTable):
        return writer.export_sweep(result)
    return writer.export_records(result, name)


def read_csv_exact(path) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision = "round_trip")
    if "flags" in frame.columns:
        frame["flags"] = frame["flags"].fillna("").astype(str)
    return frame


def read_jsonl(path) -> pd.DataFrame:
    with open(path, "r", encoding = "utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    return pd.DataFrame(records)


def format_percent(value: float) -> str:
    """Human-readable yield, used only in printed reports."""
    return "n/a" if value is None or math.isnan(value) else f"{value * 100:.4f}%"
