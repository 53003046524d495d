from orion.model.geometry import (
    FULL_FRAME,
    DegenerateCrop,
    rebase_into_crop,
    rebase_point_into_crop,
    rotate90ccw_bbox,
    rotate90ccw_point,
)
from orion.model.timecode import MalformedTimecode, format_timecode, parse_timecode
from orion.model.types import (
    ArtifactRef,
    ContentPart,
    Detail,
    Detection,
    InvalidValue,
    MaskRef,
    Message,
    Modality,
    Mode,
    ModelId,
    NormBBox,
    NormPoint,
    OutputSchema,
    PartKind,
    Role,
    TimeSegment,
    UnknownMode,
    parse_model_id,
)

__all__ = [
    "ArtifactRef",
    "ContentPart",
    "DegenerateCrop",
    "Detail",
    "Detection",
    "FULL_FRAME",
    "InvalidValue",
    "MalformedTimecode",
    "MaskRef",
    "Message",
    "Modality",
    "Mode",
    "ModelId",
    "NormBBox",
    "NormPoint",
    "OutputSchema",
    "PartKind",
    "Role",
    "TimeSegment",
    "UnknownMode",
    "format_timecode",
    "parse_model_id",
    "parse_timecode",
    "rebase_into_crop",
    "rebase_point_into_crop",
    "rotate90ccw_bbox",
    "rotate90ccw_point",
]
