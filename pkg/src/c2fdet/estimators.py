"""scikit-learn style front end for the coarse-to-fine pipeline.

Nothing here is learned; ``fit`` only validates hyper-parameters so the
objects clone, grid-search and serialise like any other estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .chips import ChipLayout, plan_chips
from .evaluation import average_precision
from .fusion import FusionConfig, fuse_image
from .geom import ImageDims
from .heatmap import CenterPoint, Heatmap, decode_centers
from .nmm import ClusterRegion, NmmConfig, non_max_merge, pad_small_region
from .proposal import Detection, ProposalConfig, generate_proposals, to_original_frame
from .validation import check_centers, check_detections, check_dims


@dataclass
class ChipRequest:
    """What the chip stage needs for one image (coarse boxes in full-resolution frame)."""

    dims: ImageDims
    coarse: Sequence[Detection] = ()
    centers: Sequence[CenterPoint] = ()


@dataclass
class ImageResult:
    dims: ImageDims
    coarse: list[Detection]
    centers: list[CenterPoint]
    regions: list[ClusterRegion]
    layout: ChipLayout
    fine: dict[int, list[Detection]]
    detections: list[Detection]
    extra: dict[str, Any] = field(default_factory=dict)


class ClusterChipper(TransformerMixin, BaseEstimator):
    """Coarse detections + center points -> cluster regions -> chip layout."""

    def __init__(
        self,
        alpha=1.5,
        r_c=48.0,
        coarse_threshold=0.10,
        center_threshold=0.10,
        dedup_distance=20.0,
        literal_eq2=False,
        tau=0.2,
        gamma=1.5,
        h_min=80.0,
        rows=3,
        row_height=160,
        gap=1,
    ):
        self.alpha = alpha
        self.r_c = r_c
        self.coarse_threshold = coarse_threshold
        self.center_threshold = center_threshold
        self.dedup_distance = dedup_distance
        self.literal_eq2 = literal_eq2
        self.tau = tau
        self.gamma = gamma
        self.h_min = h_min
        self.rows = rows
        self.row_height = row_height
        self.gap = gap

    def fit(self, X=None, y=None):
        self.proposal_config_ = ProposalConfig(
            coarse_threshold=self.coarse_threshold,
            center_threshold=self.center_threshold,
            dedup_distance=self.dedup_distance,
            r_c=self.r_c,
            alpha=self.alpha,
            literal_eq2=self.literal_eq2,
        )
        self.nmm_config_ = NmmConfig(tau=self.tau, gamma=self.gamma, h_min=self.h_min)
        if int(self.rows) < 1 or int(self.row_height) < 1 or int(self.gap) < 0:
            raise ValueError("rows and row_height must be >= 1, gap >= 0")
        self.chip_size_ = int(self.rows) * int(self.row_height)
        return self

    def regions(self, request: ChipRequest) -> list[ClusterRegion]:
        check_is_fitted(self, "nmm_config_")
        dims = check_dims(request.dims)
        boxes = generate_proposals(
            check_detections(request.coarse, "coarse"),
            check_centers(request.centers),
            dims,
            self.proposal_config_,
        )
        merged = non_max_merge(boxes, self.nmm_config_)
        return [pad_small_region(r, self.h_min, dims) for r in merged]

    def layout(self, request: ChipRequest, regions: Sequence[ClusterRegion] | None = None) -> ChipLayout:
        if regions is None:
            regions = self.regions(request)
        return plan_chips(
            regions,
            int(self.rows),
            int(self.row_height),
            gap=int(self.gap),
            h_min=self.h_min,
            dims=check_dims(request.dims),
        )

    def transform(self, X: Iterable[ChipRequest]) -> list[ChipLayout]:
        check_is_fitted(self, "nmm_config_")
        return [self.layout(req) for req in X]


class ResultFuser(BaseEstimator):
    """Chip detections + coarse detections -> final detections per image."""

    def __init__(self, nms_iou=0.6, boundary_eps=2.0, large_area=96.0**2, fuse_coarse=True):
        self.nms_iou = nms_iou
        self.boundary_eps = boundary_eps
        self.large_area = large_area
        self.fuse_coarse = fuse_coarse

    def fit(self, X=None, y=None):
        self.config_ = FusionConfig(
            nms_iou=self.nms_iou,
            boundary_eps=self.boundary_eps,
            large_area=self.large_area,
            fuse_coarse=self.fuse_coarse,
        )
        return self

    def transform(self, X: Iterable[tuple]) -> list[list[Detection]]:
        """``X`` yields ``(coarse, fine_by_chip, layout, dims)`` tuples."""
        check_is_fitted(self, "config_")
        return [
            fuse_image(check_detections(coarse, "coarse"), fine, layout, check_dims(dims), self.config_)
            for coarse, fine, layout, dims in X
        ]

    def fit_transform(self, X, y=None):
        return self.fit().transform(X)


CoarseFn = Callable[[Any, float], Sequence[Detection]]
CenterFn = Callable[[Any], Heatmap | Sequence[CenterPoint] | None]
FineFn = Callable[[Any, ChipLayout, int], Sequence[Detection]]


class CoarseToFineDetector(BaseEstimator):
    """The whole pipeline around three user-supplied detector callables.

    ``coarse_detector(image, scale)`` returns detections in the frame of the
    image downsampled by ``scale``. ``center_localizer(image)`` returns a
    predicted heatmap (or center points, or ``None``). ``fine_detector(image,
    layout, chip_id)`` returns detections in the chip frame.
    """

    def __init__(
        self,
        coarse_detector: CoarseFn | None = None,
        fine_detector: FineFn | None = None,
        center_localizer: CenterFn | None = None,
        coarse_size=(1333, 800),
        chipper: ClusterChipper | None = None,
        fuser: ResultFuser | None = None,
        decode_window=3,
    ):
        self.coarse_detector = coarse_detector
        self.fine_detector = fine_detector
        self.center_localizer = center_localizer
        self.coarse_size = coarse_size
        self.chipper = chipper
        self.fuser = fuser
        self.decode_window = decode_window

    def fit(self, X=None, y=None):
        if self.coarse_detector is None or self.fine_detector is None:
            raise ValueError("coarse_detector and fine_detector are required")
        self.chipper_ = (self.chipper or ClusterChipper()).fit()
        self.fuser_ = (self.fuser or ResultFuser()).fit()
        return self

    def _centers(self, image, dims: ImageDims) -> list[CenterPoint]:
        if self.center_localizer is None:
            return []
        out = self.center_localizer(image)
        if out is None:
            return []
        if isinstance(out, Heatmap):
            thr = self.chipper_.proposal_config_.center_threshold
            return decode_centers(out, thr, self.decode_window, dims)
        return check_centers(out)

    def run_one(self, image) -> ImageResult:
        check_is_fitted(self, "chipper_")
        dims = check_dims(image)
        scale = min(self.coarse_size[0] / dims.W, self.coarse_size[1] / dims.H)
        coarse_view = check_detections(self.coarse_detector(image, scale), "coarse")
        coarse = to_original_frame(coarse_view, scale)
        centers = self._centers(image, dims)
        request = ChipRequest(dims, coarse, centers)
        regions = self.chipper_.regions(request)
        layout = self.chipper_.layout(request, regions)
        fine = {
            k: check_detections(self.fine_detector(image, layout, k), "fine")
            for k in range(layout.chip_count)
        }
        final = fuse_image(coarse, fine, layout, dims, self.fuser_.config_)
        return ImageResult(dims, coarse, centers, regions, layout, fine, final, {"scale": scale})

    def run(self, X: Iterable) -> list[ImageResult]:
        return [self.run_one(image) for image in X]

    def predict(self, X: Iterable) -> list[list[Detection]]:
        return [r.detections for r in self.run(X)]

    def score(self, X: Sequence, y: Sequence[Sequence[Detection]]) -> float:
        """AP50 of the predictions against per-image ground truth ``y``."""
        preds = self.predict(X)
        ids = [str(i) for i in range(len(preds))]
        return average_precision(dict(zip(ids, preds)), dict(zip(ids, y)), 0.5)


def chipper_from_config(cfg) -> ClusterChipper:
    return ClusterChipper(
        alpha=cfg.alpha,
        r_c=cfg.r_c,
        coarse_threshold=cfg.coarse_threshold,
        center_threshold=cfg.center_threshold,
        dedup_distance=cfg.dedup_distance,
        literal_eq2=cfg.literal_eq2,
        tau=cfg.tau,
        gamma=cfg.gamma,
        h_min=cfg.h_min,
        rows=cfg.rows,
        row_height=cfg.row_height,
        gap=cfg.gap,
    )


def fuser_from_config(cfg) -> ResultFuser:
    return ResultFuser(
        nms_iou=cfg.nms_iou,
        boundary_eps=cfg.boundary_eps,
        large_area=cfg.large_area,
        fuse_coarse=cfg.fuse_coarse,
    )

