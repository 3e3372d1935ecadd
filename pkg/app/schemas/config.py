from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Literal, Optional

import numpy as np

AlgorithmName = Literal["wsmse", "minorize_icsit", "minorize_pwcsit"]


def parse_snr_points(value) -> List[float]:
    """'start:step:stop' (stop included) or a comma list, in dB."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if ":" in text:
        parts = [p.strip() for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError("range must read start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError("range needs a positive step and stop >= start")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return [float(p) for p in text.split(",") if p.strip()]


class SweepConfig(BaseModel):
    """One validated sweep; scenario either drawn from (cells, ..., nr) or read from scenario_file."""
    preset: Optional[Literal["fig2", "fig3", "fig4"]] = None
    scenario_file: Optional[str] = None

    cells: Optional[int] = Field(None, ge=1)
    users_per_cell: Optional[int] = Field(None, ge=1)
    paths: Optional[int] = Field(None, ge=1)
    nt: Optional[int] = Field(None, ge=1)
    nr: Optional[int] = Field(None, ge=1)
    streams: int = Field(1, ge=1)
    intercell_gain: float = Field(1.0, gt=0)

    snr_db: List[float] = Field(min_length=1)
    algorithms: List[AlgorithmName] = Field(min_length=1)

    trials: int = Field(ge=1)
    seed: int = Field(ge=0)
    geometry_draws: int = Field(ge=1)
    tol: float = Field(gt=0)
    max_iter: int = Field(ge=1)
    init: Literal["matched", "random"] = "matched"
    workers: int = Field(1, ge=1)

    @field_validator("snr_db", mode="before")
    @classmethod
    def split_snr(cls, v):
        return parse_snr_points(v)

    @field_validator("algorithms", mode="before")
    @classmethod
    def split_algorithms(cls, v):
        if isinstance(v, str):
            v = [a.strip() for a in v.split(",") if a.strip()]
        # keep first occurrence order
        return list(dict.fromkeys(v))

    @model_validator(mode="after")
    def check_scenario_source(self):
        if self.scenario_file is None:
            missing = [k for k in ("cells", "users_per_cell", "paths", "nt", "nr") if getattr(self, k) is None]
            if missing:
                raise ValueError(f"missing scenario keys {missing} (or give scenario_file)")
        return self

    model_config = ConfigDict(extra="forbid", frozen=True)
