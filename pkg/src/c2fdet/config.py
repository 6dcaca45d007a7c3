"""Pipeline parameters and the two shipped dataset profiles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .formats import SchemaError, read_json
from .fusion import FusionConfig
from .geom import ImageDims
from .nmm import NmmConfig
from .proposal import ProposalConfig


@dataclass(frozen=True)
class PipelineConfig:
    profile: str = "citypersons-like"
    coarse_size: tuple[int, int] = (1333, 800)
    rows: int = 3
    row_height: int = 160
    alpha: float = 1.5
    literal_eq2: bool = False
    h_min: float = 80.0
    tau: float = 0.2
    gamma: float = 1.5
    r_c: float = 48.0
    coarse_threshold: float = 0.10
    center_threshold: float = 0.10
    dedup_distance: float = 20.0
    nms_iou: float = 0.6
    boundary_eps: float = 2.0
    large_area: float = 96.0**2
    fuse_coarse: bool = True
    gap: int = 1
    stride: int = 4
    decode_window: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.coarse_size) != 2 or min(self.coarse_size) < 1:
            raise ValueError(f"coarse_size must be two positive ints, got {self.coarse_size}")
        if self.rows < 1 or self.row_height < 1 or self.gap < 0 or self.stride < 1:
            raise ValueError("rows, row_height and stride must be >= 1 and gap >= 0")
        # module configs validate their own invariants
        self.proposal_config()
        self.nmm_config()
        self.fusion_config()

    @property
    def chip_size(self) -> int:
        return self.rows * self.row_height

    def downsample_scale(self, dims: ImageDims) -> float:
        """Uniform coarse-view scale fitting the image inside ``coarse_size``."""
        return min(self.coarse_size[0] / dims.W, self.coarse_size[1] / dims.H)

    def proposal_config(self) -> ProposalConfig:
        return ProposalConfig(
            coarse_threshold=self.coarse_threshold,
            center_threshold=self.center_threshold,
            dedup_distance=self.dedup_distance,
            r_c=self.r_c,
            alpha=self.alpha,
            literal_eq2=self.literal_eq2,
        )

    def nmm_config(self) -> NmmConfig:
        return NmmConfig(tau=self.tau, gamma=self.gamma, h_min=self.h_min)

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            nms_iou=self.nms_iou,
            boundary_eps=self.boundary_eps,
            large_area=self.large_area,
            fuse_coarse=self.fuse_coarse,
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["coarse_size"] = list(self.coarse_size)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        base = PROFILES.get(str(data.get("profile", "citypersons-like")))
        if base is None:
            raise SchemaError(f"unknown profile {data.get('profile')!r}; choose from {sorted(PROFILES)}")
        kwargs = dict(data)
        if "coarse_size" in kwargs:
            kwargs["coarse_size"] = tuple(int(v) for v in kwargs["coarse_size"])
        try:
            return replace(base, **kwargs)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"invalid config: {exc}") from exc


PROFILES: dict[str, PipelineConfig] = {}
PROFILES["citypersons-like"] = PipelineConfig()
PROFILES["tinyperson-like"] = replace(
    PROFILES["citypersons-like"],
    profile="tinyperson-like",
    rows=4,
    alpha=3.0,
    tau=0.3,
    fuse_coarse=False,
)


def load_config(path: str | Path | None = None, profile: str | None = None, seed: int | None = None) -> PipelineConfig:
    """Profile defaults, overridden by a JSON file, then by explicit flags."""
    data: dict[str, Any] = dict(read_json(path)) if path else {}
    if profile is not None:
        data["profile"] = profile
    if seed is not None:
        data["seed"] = seed
    return PipelineConfig.from_dict(data)
