import csv
import io
import json
import sys
from datetime import datetime
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel

from models.schemas import Report, RunConfig
from utils.errors import UsageError


def encode_value(value: Any) -> Any:
    """JSON fallback: rationals as "p/q" strings, numpy scalars as Python numbers"""
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, datetime):
        return value.isoformat()
    return str(value)


def csv_token(value: Any) -> str:
    """One CSV cell; '.' decimal point regardless of locale"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def exact_table_path(float_path: str) -> Path:
    path = Path(float_path)
    return path.with_name(f"{path.stem}.exact.csv")


class ReportWriterAgent:
    """Agent for writing JSON and CSV reports"""

    def envelope(self, config: RunConfig, result: Any) -> Report:
        """
        Wrap a result with the effective run configuration

        Args:
            config: Effective configuration
            result: Pydantic model, list of models or plain data

        Returns:
            Report ready for serialization
        """
        return Report(
            command=config.command,
            config=config.model_dump(mode='json', exclude_none=True),
            result=self._plain(result)
        )

    def _plain(self, result: Any) -> Any:
        if isinstance(result, BaseModel):
            return result.model_dump()
        if isinstance(result, list):
            return [self._plain(item) for item in result]
        if isinstance(result, dict):
            return {key: self._plain(item) for key, item in result.items()}
        return result

    def render_json(self, report: Report) -> str:
        return json.dumps(report.model_dump(), indent=2, default=encode_value) + "\n"

    def render_csv(self, rows: List[Dict[str, Any]]) -> str:
        if not rows:
            return ""
        columns: List[str] = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: csv_token(row.get(key)) for key in columns})
        return buffer.getvalue()

    def write_json(self, report: Report, out: Optional[str] = None) -> Optional[str]:
        """
        Write a JSON report

        Args:
            report: Report envelope
            out: Output path; standard output when omitted

        Returns:
            Path to saved JSON file, or None for standard output
        """
        text = self.render_json(report)
        if out is None:
            sys.stdout.write(text)
            return None

        output_path = Path(out)
        with open(output_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        logger.success(f"{report.command} report saved to: {output_path}")
        return str(output_path)

    def write_csv(self, rows: List[Dict[str, Any]], config: RunConfig,
                  out: Optional[str] = None) -> Optional[str]:
        """
        Write a CSV table; a file output gets a <out>.config.json sidecar

        Args:
            rows: Table rows, one dict per row
            config: Effective configuration echoed into the sidecar
            out: Output path; standard output when omitted

        Returns:
            Path to saved CSV file, or None for standard output
        """
        text = self.render_csv(rows)
        if out is None:
            sys.stdout.write(text)
            return None

        output_path = Path(out)
        with open(output_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        sidecar = output_path.with_name(output_path.name + ".config.json")
        with open(sidecar, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(config.model_dump(mode='json', exclude_none=True), f, indent=2,
                      default=encode_value)
            f.write("\n")
        logger.success(f"{config.command} table saved to: {output_path} ({len(rows)} rows)")
        return str(output_path)

    def write_exact_csv(self, rows: List[Dict[str, Any]], float_path: str) -> str:
        """Rational counterpart of a float table, saved as <stem>.exact.csv beside it"""
        output_path = exact_table_path(float_path)
        with open(output_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.render_csv(rows))
        logger.info(f"Rational table saved to: {output_path} ({len(rows)} rows)")
        return str(output_path)

    def write_raw_samples(self, samples: Iterable[int], path: str) -> str:
        """One sampled time per line under a `tau` header"""
        output_path = Path(path)
        with open(output_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write("tau\n")
            for tau in samples:
                f.write(f"{int(tau)}\n")
        logger.info(f"Raw samples saved to: {output_path}")
        return str(output_path)

    def load_json(self, json_path: str) -> Dict[str, Any]:
        """
        Load a JSON run configuration

        Args:
            json_path: Path to JSON file

        Returns:
            Parsed JSON as dictionary

        Raises:
            UsageError: unreadable file or not a JSON object
        """
        try:
            with open(json_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
            logger.debug(f"Loaded JSON from: {json_path}")
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to load JSON from {json_path}: {e}")
            raise UsageError(f"cannot read config {json_path}: {e}") from e
        if not isinstance(data, dict):
            raise UsageError(f"config {json_path} must hold a JSON object")
        return data
