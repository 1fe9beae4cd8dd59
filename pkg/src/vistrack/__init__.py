"""vistrack: deterministic tracking-by-association toolkit for video
instance segmentation outputs.

The package operates on serialized per-frame detections (boxes, masks,
class probabilities, appearance embeddings) and provides mask/box
geometry, embedding similarity and greedy identity assignment against a
memory bank, the contrastive embedding loss with analytic gradients,
key/reference crop-pair sampling, spatio-temporal IoU evaluation, track
fusion, and a seeded synthetic corpus generator. Every entry point is a
pure function of its inputs and configured seeds.
"""

from .association import (
    Assignment,
    AssociationConfig,
    MemoryBank,
    MemoryInstance,
    Outcome,
    SimilarityKind,
    assign,
    similarity,
    track_video,
    track_video_with_trace,
    update_memory,
)
from .contrastive import (
    LossWeights,
    MatchWeights,
    SamplePartition,
    embed_loss,
    embed_loss_grad,
    gradient_check_suite,
    matching_cost,
    select_samples,
    total_loss,
)
from .core import (
    BBox,
    Detection,
    Embedding,
    FrameDetections,
    RleMask,
    Track,
    TrackEntry,
    VideoGroundTruth,
    VideoMeta,
    bbox_of_mask,
    box_giou,
    mask_iou,
    rle_decode,
    rle_encode,
)
from .errors import (
    ConfigError,
    ConfigInfeasible,
    CountsMismatch,
    DegenerateBox,
    DimensionMismatch,
    DuplicateInstanceId,
    EmptyInput,
    ImageTooSmall,
    NonFiniteInput,
    ParseError,
    SchemaError,
    ToolkitError,
    UnknownCategory,
    UnknownTrackId,
    UnknownVideoId,
    VideoMismatch,
)
from .evaluation import EvalConfig, EvalReport, Metrics, evaluate, match_tracks, st_iou
from .fusion import FusionConfig, ScoreRule, fuse_tracks
from .pseudo_pair import (
    CropConfig,
    CropPairSample,
    CropView,
    CropWindow,
    ImageMeta,
    SourceAnnotation,
    make_pair,
    sample_crop,
    transform_annotations,
)
from .rng import SplitMix64
from .synth import CLUTTER, SynthConfig, SynthCorpus, generate

__version__ = "0.1.0"
