from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Annotated, List, Optional

PositiveFloat = Annotated[float, Field(gt=0)]


class LinkDocument(BaseModel):
    """Slow-fading parameters of one BS -> user link; angles in radians."""
    amplitudes: List[PositiveFloat] = Field(min_length=1)
    aod: List[float]
    aoa: List[float]

    @model_validator(mode="after")
    def same_lengths(self):
        if not (len(self.amplitudes) == len(self.aod) == len(self.aoa)):
            raise ValueError("amplitudes, aod and aoa must have the same length")
        return self

    model_config = ConfigDict(extra="forbid")


class UserDocument(BaseModel):
    serving: int = Field(ge=0)
    nr: int = Field(ge=1)
    weight: float = Field(1.0, gt=0)
    streams: int = Field(1, ge=1)
    links: List[LinkDocument]  # one per BS, in BS order

    model_config = ConfigDict(extra="forbid")


class ScenarioDocument(BaseModel):
    """YAML layout of a scenario file."""
    cells: int = Field(ge=1)
    nt: List[Annotated[int, Field(ge=1)]]
    power: Optional[List[PositiveFloat]] = None
    users: List[UserDocument] = Field(min_length=1)

    @model_validator(mode="after")
    def consistent_counts(self):
        if len(self.nt) != self.cells:
            raise ValueError("nt needs one entry per cell")
        if self.power is not None and len(self.power) != self.cells:
            raise ValueError("power needs one entry per cell")
        for k, user in enumerate(self.users):
            if user.serving >= self.cells:
                raise ValueError(f"user {k} is served by a cell that does not exist")
            if len(user.links) != self.cells:
                raise ValueError(f"user {k} needs one link per cell")
            if user.streams > self.nt[user.serving]:
                raise ValueError(f"user {k} asks for {user.streams} streams from a BS with {self.nt[user.serving]} antennas")
        return self

    model_config = ConfigDict(extra="forbid")
