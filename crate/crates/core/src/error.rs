use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed layout: {0}")]
    MalformedLayout(String),

    #[error("wall {id} is degenerate (width {width} m, height {height} m)")]
    DegenerateWall { id: u32, width: f64, height: f64 },

    #[error("wall {id} is not vertical (normal y = {normal_y})")]
    NonVerticalWall { id: u32, normal_y: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("all input points are collinear")]
    CollinearInput,

    #[error("room loop self-intersects")]
    SelfIntersectingLoop,

    #[error("intrinsics have mixed resolutions")]
    MixedResolutions,

    #[error("plane {plane_id} cannot be planned: {reason}")]
    Unplannable { plane_id: u32, reason: String },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("image too small: {width}x{height}, need at least {min} px per side")]
    TooSmall { width: u32, height: u32, min: u32 },

    #[error("{count} pixels outside the inpainting mask were modified")]
    OutsideMaskModified { count: usize },

    #[error("clicked corners are degenerate (three collinear)")]
    DegenerateCorners,

    #[error("clicked corners have flipped orientation")]
    FlippedCorners,

    #[error("pose {index} lies outside the room")]
    PoseOutsideRoom { index: usize },

    #[error("face {face} is not labeled with plane {plane_id}")]
    ForeignFace { face: usize, plane_id: u32 },

    #[error("malformed mesh: {0}")]
    MalformedMesh(String),

    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error("no ground truth available")]
    NoGroundTruth,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attributes the error to a pipeline stage.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// Innermost error, looking through stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for problems with the input data rather than a processing step.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self.root(),
            Error::MalformedLayout(_)
                | Error::DegenerateWall { .. }
                | Error::NonVerticalWall { .. }
                | Error::MalformedMesh(_)
                | Error::MalformedDataset(_)
                | Error::NoGroundTruth
                | Error::MixedResolutions
                | Error::DimensionMismatch { .. }
                | Error::Io { .. }
                | Error::Image(_)
                | Error::Json(_)
                | Error::Config(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
