import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.config import AlgorithmName

# Column order of emitted files
ROW_FIELDS = (
    "snr_db",
    "algorithm",
    "geometry_draw",
    "objective_nats",
    "objective_bits",
    "ewsr_mc_mean",
    "ewsr_mc_stderr",
    "iterations",
    "kkt_residual",
    "converged",
)


class SweepRow(BaseModel):
    snr_db: float
    algorithm: AlgorithmName
    geometry_draw: int = Field(ge=0)
    objective_nats: float
    objective_bits: float
    ewsr_mc_mean: float
    ewsr_mc_stderr: float
    iterations: int = Field(ge=0)
    kkt_residual: float
    converged: bool

    @model_validator(mode="after")
    def check_values(self):
        numbers = (self.objective_nats, self.objective_bits, self.ewsr_mc_mean,
                   self.ewsr_mc_stderr, self.kkt_residual)
        # a cell whose every trial failed carries NaN and converged=false
        if self.converged and not all(math.isfinite(x) for x in numbers):
            raise ValueError("converged rows must carry finite values")
        if self.ewsr_mc_stderr < 0:
            raise ValueError("standard error must be nonnegative")
        return self

    model_config = ConfigDict(frozen=True)
