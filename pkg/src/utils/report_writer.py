"""
Report writing.

JSON summaries with a provenance tag on every number, and CSV curves.
"""

import csv
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, Union

import numpy as np

from src.utils.logreal import LogReal

logger = logging.getLogger(__name__)

SOURCES = ("closed-form", "simulated", "fitted", "config")


class ReportWriter:
    """Writes JSON and CSV artifacts."""

    @staticmethod
    def tagged(value: Any, source: str) -> Dict[str, Any]:
        """Number with its provenance."""
        if source not in SOURCES:
            raise ValueError(f"unknown source {source!r}")
        return {"value": ReportWriter.plain(value), "source": source}

    @staticmethod
    def tag_all(payload: Any, source: str) -> Any:
        """Tag every number in a nested dict or list."""
        if isinstance(payload, dict):
            if set(payload) == {"value", "source"}:
                return payload
            return {key: ReportWriter.tag_all(value, source) for key, value in payload.items()}
        if isinstance(payload, (list, tuple)):
            return [ReportWriter.tag_all(value, source) for value in payload]
        if isinstance(payload, LogReal):
            return ReportWriter.tagged(payload, source)
        if isinstance(payload, (bool, np.bool_)) or payload is None or isinstance(payload, str):
            return payload
        if isinstance(payload, (int, float, np.integer, np.floating)):
            return ReportWriter.tagged(payload, source)
        return payload

    @staticmethod
    def plain(value: Any) -> Any:
        """JSON-safe view: numpy scalars to Python, non-finite floats to strings."""
        if isinstance(value, LogReal):
            return value.to_json()
        if isinstance(value, (np.bool_,)):
            return bool(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, (float, np.floating)):
            value = float(value)
            if math.isnan(value):
                return "nan"
            if math.isinf(value):
                return "inf" if value > 0 else "-inf"
            return value
        if isinstance(value, np.ndarray):
            return [ReportWriter.plain(v) for v in value.tolist()]
        if isinstance(value, dict):
            return {str(k): ReportWriter.plain(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [ReportWriter.plain(v) for v in value]
        return value

    def write_json(self, path: Union[str, Path], payload: Dict[str, Any]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        document = {**self.plain(payload), "generated_at": datetime.now(timezone.utc).isoformat()}
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
        logger.info(f"Wrote {path}")
        return path

    def write_csv(self, path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        logger.info(f"Wrote {path}")
        return path


# Global report writer instance
report_writer = ReportWriter()
