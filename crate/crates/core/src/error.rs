use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("point ({0:.3}, {1:.3}, {2:.3}) is outside the world bounds")]
    OutOfBounds(f64, f64, f64),
    #[error("voxel {0} is not unknown")]
    NotUnknown(usize),
    #[error("position is not in free space")]
    NotFree,
    #[error("unknown roadmap node {0}")]
    UnknownNode(usize),
    #[error("roadmap is empty")]
    EmptyRoadmap,
    #[error("node {0} has stale gains")]
    StaleGain(usize),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn out_of_bounds(p: &crate::geometry::Vec3) -> Self {
        Error::OutOfBounds(p.x, p.y, p.z)
    }
}
