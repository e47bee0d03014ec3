"""Prompt-driven detect/filter/segment annotation pipeline.

Detections from a text-promptable detector are filtered by confidence and
by relative box area, then turned into masks by a promptable segmenter;
both models live behind an NDJSON-over-stdio protocol so backends are
swappable processes.
"""

from .geometry import (
    BBox,
    Detection,
    FilterParams,
    ImageDims,
    box_area,
    filter_by_confidence,
    filter_by_relative_area,
    normalized_to_pixels,
    pixels_to_normalized,
    relative_area,
)
from .mask import BinaryMask, MaskRLE, rle_decode, rle_encode
from .metrics import (
    BoxplotStats,
    MetricRecord,
    boxplot_stats,
    dice,
    hausdorff,
    hce_estimate,
    hd95,
    improvement_pct,
)
from .pipeline import (
    AnnotationRecord,
    ClassSpec,
    EvalReport,
    PipelineConfig,
    RunFailure,
    RunManifest,
    annotate_dataset,
    annotate_image,
    evaluate_run,
    load_config,
    select_view,
)
from .protocol import (
    Backend,
    BackendClient,
    BackendError,
    DetectRequest,
    DetectResponse,
    InProcessBackend,
    PingResponse,
    ProtocolError,
    SchemaError,
    SegmentRequest,
    SegmentResponse,
    TransportError,
    WireDetection,
    serve_loop,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # geometry
    "BBox",
    "Detection",
    "FilterParams",
    "ImageDims",
    "box_area",
    "relative_area",
    "filter_by_confidence",
    "filter_by_relative_area",
    "normalized_to_pixels",
    "pixels_to_normalized",
    # masks
    "BinaryMask",
    "MaskRLE",
    "rle_encode",
    "rle_decode",
    # metrics
    "MetricRecord",
    "BoxplotStats",
    "dice",
    "hausdorff",
    "hd95",
    "hce_estimate",
    "improvement_pct",
    "boxplot_stats",
    # protocol
    "Backend",
    "BackendClient",
    "BackendError",
    "DetectRequest",
    "DetectResponse",
    "InProcessBackend",
    "PingResponse",
    "ProtocolError",
    "SchemaError",
    "SegmentRequest",
    "SegmentResponse",
    "TransportError",
    "WireDetection",
    "serve_loop",
    # pipeline
    "AnnotationRecord",
    "ClassSpec",
    "EvalReport",
    "PipelineConfig",
    "RunFailure",
    "RunManifest",
    "annotate_dataset",
    "annotate_image",
    "evaluate_run",
    "load_config",
    "select_view",
]
