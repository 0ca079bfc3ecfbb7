"""Sub-question chain visual question answering."""

from .answerer import Answerer, Prediction, SprTrace, spr_step, total_loss
from .config import RunConfig, load_config
from .errors import (
    ChainVqaError,
    CheckpointError,
    ConfigError,
    DatasetError,
    GeometryError,
    NumericError,
    OptimizerError,
    OracleError,
    ParseError,
    ScheduleError,
    ShapeError,
    TapeError,
)
from .gvr import BoundingBox, GvrParams, gvr_attend, gvr_forward
from .metrics import EvalReport, bleu, vqa_accuracy
from .oracle import GroundTruthOracle, LearnedOracle, OracleAnswer, gt_answer, parse_sq
from .pipeline import Models, evaluate, generate_corpus, infer, run_ablation, train_all
from .questioner import Dialogue, Questioner
from .records import SqsItem, SqsRecord, SqType
from .scene import RegionSet, Scene
from .sqsgen import build_sqs, dataset_stats
from .version import get_version, log_startup

__all__ = [
    # Models
    "Answerer",
    "LearnedOracle",
    "Questioner",
    "GroundTruthOracle",
    "Models",
    # Reasoning kernel
    "BoundingBox",
    "GvrParams",
    "gvr_attend",
    "gvr_forward",
    "spr_step",
    "total_loss",
    # Results
    "Dialogue",
    "EvalReport",
    "OracleAnswer",
    "Prediction",
    "SprTrace",
    # Data
    "RegionSet",
    "Scene",
    "SqType",
    "SqsItem",
    "SqsRecord",
    "build_sqs",
    "dataset_stats",
    "gt_answer",
    "parse_sq",
    # Pipeline
    "evaluate",
    "generate_corpus",
    "infer",
    "run_ablation",
    "train_all",
    # Metrics
    "bleu",
    "vqa_accuracy",
    # Config
    "RunConfig",
    "load_config",
    # Errors
    "ChainVqaError",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "GeometryError",
    "NumericError",
    "OptimizerError",
    "OracleError",
    "ParseError",
    "ScheduleError",
    "ShapeError",
    "TapeError",
    # Version
    "get_version",
    "log_startup",
]
