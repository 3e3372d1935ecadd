"""CSV and workbook output of sweep rows."""
import csv
import hashlib
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import openpyxl
from openpyxl.utils import get_column_letter
from pydantic import ValidationError

from app import __version__
from app.core.exceptions import BeamformAppException, ConfigError
from app.schemas.config import SweepConfig
from app.schemas.result import ROW_FIELDS, SweepRow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SNR_CONVENTION = "per-BS power in dB re unit noise, unit per-link energy"


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.12g}"
    return str(value)


def config_hash(config: SweepConfig) -> str:
    """Short digest of every setting except workers, which never changes the rows."""
    return hashlib.sha256(config.model_dump_json(exclude={"workers"}).encode("utf-8")).hexdigest()[:16]


def metadata_line(config: Optional[SweepConfig]) -> str:
    parts = [f"version={__version__}", f"snr={SNR_CONVENTION}"]
    if config is not None:
        parts = [f"config={config_hash(config)}", f"seed={config.seed}"] + parts
    return "# " + " ".join(parts)


def emit_csv(rows: Sequence[SweepRow], path: PathLike, config: Optional[SweepConfig] = None) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(metadata_line(config) + "\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(ROW_FIELDS)
            for row in rows:
                writer.writerow([format_value(getattr(row, name)) for name in ROW_FIELDS])
    except OSError as e:
        raise BeamformAppException(f"cannot write {path}: {e}", details={"path": str(path)})
    logger.info("wrote %d rows to %s", len(rows), path)


def read_csv(path: PathLike) -> List[SweepRow]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            lines = [line for line in f if not line.startswith("#")]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}", details={"path": str(path)})
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != ROW_FIELDS:
        raise ConfigError(f"{path} does not carry the sweep columns", details={"header": reader.fieldnames})
    try:
        return [SweepRow.model_validate(record) for record in reader]
    except ValidationError as e:
        raise ConfigError(f"{path} holds an invalid row: {e.errors()[0]['msg']}", details={"path": str(path)})


def emit_xlsx(rows: Sequence[SweepRow], path: PathLike) -> None:
    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = "sweep"
    ws.append(list(ROW_FIELDS))
    for row in rows:
        values = [getattr(row, name) for name in ROW_FIELDS]
        ws.append([None if isinstance(v, float) and math.isnan(v) else v for v in values])
    for col in range(1, len(ROW_FIELDS) + 1):
        ws.column_dimensions[get_column_letter(col)].width = max(12, len(ROW_FIELDS[col - 1]) + 2)
    try:
        wb.save(path)
    except OSError as e:
        raise BeamformAppException(f"cannot write {path}: {e}", details={"path": str(path)})
    logger.info("wrote %d rows to %s", len(rows), path)
