"""Exception types raised across the pipeline."""


class ViewSynthError(Exception):
    """Base class for all pipeline errors."""


class BehindCameraError(ViewSynthError):
    """A 3D point lies at or behind the camera plane."""


class InvalidDisparityError(ViewSynthError):
    """Disparity value outside its legal domain."""


class DegeneratePlaneError(ViewSynthError):
    """Sweep plane passes through a camera center; homography is singular."""


class NoDepthSupportError(ViewSynthError):
    """No usable depth samples to derive a disparity range from."""


class DegenerateRangeError(ViewSynthError):
    """Depth samples have zero spread; d_min would equal d_max."""


class NoOverlapError(ViewSynthError):
    """Reference view shares no frustum overlap with any other view."""


class InvalidCostsError(ViewSynthError):
    """Cost field contains non-finite values."""


class GuideMismatchError(ViewSynthError):
    """Guide image dimensions do not match the volume."""


class ImageTooSmallError(ViewSynthError):
    """Image smaller than a single patch window."""


class SceneError(ViewSynthError):
    """Scene manifest or scene file failed validation."""


class InvalidRigError(ViewSynthError):
    """Synthetic camera rig is unusable (e.g. camera inside a primitive)."""
