"""Part-aware group activity detection: individuals, body-part queries and groups."""
from .config import TrainConfig, build_configs
from .evaluation import MetricReport, evaluate
from .geometry import Box, giou, iou
from .inference import Triplet, postprocess, triplet_nms
from .network import ModelConfig, PartGroupNet

__all__ = [
    "Box", "MetricReport", "ModelConfig", "PartGroupNet", "TrainConfig", "Triplet",
    "build_configs", "evaluate", "giou", "iou", "postprocess", "triplet_nms",
]
__version__ = "0.1.0"
