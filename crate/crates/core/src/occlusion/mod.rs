//! Occluded scene composition under the object-persistence rule: the class
//! label of a composed sample is always the label of its base sample.

mod compose;
mod dataset;
pub mod geometry;

pub use compose::{compose, ComposeOptions, ComposedSample};
pub use dataset::{
    generate_imagined_dataset, read_dataset, write_dataset, AssignmentMode, DatasetRow, Grid,
    ImaginedDataset,
};
pub use geometry::{place, solve_indomain, solve_object, solve_rect, Solved};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OcclusionType {
    /// Occluders synthesized for the target classes.
    #[serde(rename = "indomain")]
    InDomain,
    /// Occluders from shape families the classifier never sees as targets.
    #[serde(rename = "outdomain")]
    OutOfDomain,
    #[serde(rename = "rect")]
    GrayRect,
}

impl OcclusionType {
    pub const ALL: [OcclusionType; 3] = [
        OcclusionType::GrayRect,
        OcclusionType::InDomain,
        OcclusionType::OutOfDomain,
    ];

    pub fn token(self) -> &'static str {
        match self {
            OcclusionType::InDomain => "indomain",
            OcclusionType::OutOfDomain => "outdomain",
            OcclusionType::GrayRect => "rect",
        }
    }

    pub fn uses_bank(self) -> bool {
        !matches!(self, OcclusionType::GrayRect)
    }

    fn code(self) -> u64 {
        match self {
            OcclusionType::GrayRect => 1,
            OcclusionType::InDomain => 2,
            OcclusionType::OutOfDomain => 3,
        }
    }
}

impl std::fmt::Display for OcclusionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for OcclusionType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indomain" => Ok(OcclusionType::InDomain),
            "outdomain" => Ok(OcclusionType::OutOfDomain),
            "rect" => Ok(OcclusionType::GrayRect),
            other => Err(Error::Config(format!(
                "unknown occlusion type `{other}`; valid: indomain, outdomain, rect"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    #[serde(rename = "type")]
    pub kind: OcclusionType,
    pub level: u32,
    pub occluder_id: Option<String>,
    pub placement_seed: u64,
}

impl OcclusionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.level > 100 {
            return Err(Error::Config(format!("level {} outside [0, 100]", self.level)));
        }
        match (self.kind.uses_bank(), &self.occluder_id) {
            (false, Some(id)) => Err(Error::Config(format!("gray rectangle given occluder `{id}`"))),
            (true, None) => Err(Error::Bank(format!("{} occlusion without an occluder id", self.kind))),
            _ => Ok(()),
        }
    }
}
