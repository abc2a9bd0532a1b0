//! Case-study simulators.

pub mod tiger;
pub mod vr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use tiger::{TigerModel, TigerState};
pub use vr::{VelocityRegulationModel, VrMap, VrState};

use crate::model::Simulator;
use crate::rulelang::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Tiger,
    Vr,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Tiger => "tiger",
            DomainKind::Vr => "vr",
        }
    }

    /// Action and category labels of the domain with its default settings.
    pub fn vocabulary(self) -> Vocabulary {
        match self {
            DomainKind::Tiger => vocabulary_of(&TigerModel::default()),
            DomainKind::Vr => vocabulary_of(&VelocityRegulationModel::default()),
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tiger" => Ok(DomainKind::Tiger),
            "vr" | "velocity" | "velocity-regulation" => Ok(DomainKind::Vr),
            other => Err(format!("unknown domain `{other}` (expected tiger or vr)")),
        }
    }
}

pub fn vocabulary_of<M: Simulator>(model: &M) -> Vocabulary {
    Vocabulary::new(model.action_labels().to_vec(), model.category_labels().to_vec())
}
