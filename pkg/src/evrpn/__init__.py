"""Region proposals for event cameras: event stream I/O, a synthetic event
simulator, erosion + DBSCAN proposals, single-class AP/AR evaluation and a
latency bench."""

from .errors import (
    BadMagicError,
    ConfigError,
    EvrpnError,
    FormatError,
    OrderingError,
    ParseError,
    TruncatedBlockError,
    TruncatedHeaderError,
    TruncatedRecordError,
    ValidationError,
)
from .events import EVENT_DTYPE, BBox, Event, EventChunk, EventMessage, SensorGeometry, bbox_area, iou, make_events
from .ingest import (
    ChunkingConfig,
    StreamHeader,
    chunk_messages,
    parse_binary_stream,
    parse_csv_stream,
    read_stream,
    write_binary_stream,
    write_csv_stream,
    write_stream,
)
from .rasterize import BinaryFrame, PseudoFrame, StructuringElement, binarize, build_frame, erode, to_pgm
from .cluster import (
    NOISE,
    Cluster,
    DbscanConfig,
    Proposal,
    ProposalConfig,
    ProposalSet,
    cluster_bbox,
    dbscan,
    extract_clusters,
    propose,
    propose_chunks,
    read_proposals,
    score,
    write_proposals,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    GroundTruthSet,
    VideoResult,
    average_precision,
    average_recall,
    evaluate,
    evaluate_video,
    match_detections,
)
from .simulator import CircularTrajectory, LinearTrajectory, MovingShape, SceneSpec, ground_truth_boxes, simulate
from .bench import BenchReport, run_bench

__version__ = "0.1.0"
