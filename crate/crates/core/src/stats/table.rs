use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ContingencyTable;
use crate::annotate::Annotation;
use crate::error::{Error, Result};

/// A binary property read off an [`Annotation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnotationField {
    Reduplicated,
    /// `[s]` anywhere in the output.
    SPresent,
    SInitial,
    /// `[s]`-initial and reduplicated at once (the wug-test outcome).
    SReduplicated,
}

impl AnnotationField {
    pub fn get(self, a: &Annotation) -> bool {
        match self {
            AnnotationField::Reduplicated => a.reduplicated,
            AnnotationField::SPresent => a.s_present,
            AnnotationField::SInitial => a.s_initial,
            AnnotationField::SReduplicated => a.s_initial && a.reduplicated,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnnotationField::Reduplicated => "reduplicated",
            AnnotationField::SPresent => "s_present",
            AnnotationField::SInitial => "s_initial",
            AnnotationField::SReduplicated => "s_reduplicated",
        }
    }
}

impl fmt::Display for AnnotationField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnnotationField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduplicated" | "redup" => Ok(AnnotationField::Reduplicated),
            "s_present" | "s" => Ok(AnnotationField::SPresent),
            "s_initial" => Ok(AnnotationField::SInitial),
            "s_reduplicated" | "s_redup" => Ok(AnnotationField::SReduplicated),
            other => Err(Error::invalid(format!("unknown annotation field '{other}'"))),
        }
    }
}

/// Counts `(absent, present)` of `field` for two conditions; condition A is
/// the first row.
pub fn table_from_annotations(
    cond_a: &[Annotation],
    cond_b: &[Annotation],
    field: AnnotationField,
) -> Result<ContingencyTable> {
    if cond_a.is_empty() || cond_b.is_empty() {
        return Err(Error::invalid("table_from_annotations: empty condition"));
    }
    let count = |xs: &[Annotation]| {
        let present = xs.iter().filter(|a| field.get(a)).count() as u64;
        (xs.len() as u64 - present, present)
    };
    let (a, b) = count(cond_a);
    let (c, d) = count(cond_b);
    Ok(ContingencyTable::new(a, b, c, d))
}
