use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Broad {
    Microscopy,
    Diagnosis,
    Clinical,
}

impl Broad {
    pub const ALL: [Broad; 3] = [Broad::Microscopy, Broad::Diagnosis, Broad::Clinical];

    pub fn name(self) -> &'static str {
        match self {
            Broad::Microscopy => "Microscopy",
            Broad::Diagnosis => "Diagnosis",
            Broad::Clinical => "Clinical",
        }
    }

    pub fn narrow(self) -> impl Iterator<Item = &'static str> {
        NARROW.iter().filter(move |(_, b)| *b == self).map(|(n, _)| *n)
    }
}

impl fmt::Display for Broad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Broad {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Broad::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::usage(format!("unknown broad category `{s}`")))
    }
}

/// The thirteen narrow categories and their broad parents.
pub const NARROW: [(&str, Broad); 13] = [
    ("Tissue Architecture and Arrangement", Broad::Microscopy),
    ("Cytomorphological Characteristics", Broad::Microscopy),
    ("Tumor Characteristics", Broad::Microscopy),
    ("Histopathological Changes", Broad::Microscopy),
    ("Disease Detection", Broad::Diagnosis),
    ("Disease Classification", Broad::Diagnosis),
    ("Grading", Broad::Diagnosis),
    ("Staging", Broad::Diagnosis),
    ("Differential Diagnosis", Broad::Diagnosis),
    ("Treatment Guidance", Broad::Clinical),
    ("Prognostic Assessment", Broad::Clinical),
    ("Risk Factors", Broad::Clinical),
    ("Biomarker Analysis", Broad::Clinical),
];

/// Canonical spelling and parent of a narrow category (case-insensitive).
pub fn narrow_category(name: &str) -> Option<(&'static str, Broad)> {
    NARROW.iter().find(|(n, _)| n.eq_ignore_ascii_case(name.trim())).copied()
}
