//! Static assessment of candidate source: scan the script, extract key
//! attributes with declarative rules, and match them against ground truth.

mod extract;
mod matcher;
mod rules;
mod scan;

pub use extract::{extract_attributes, extract_with, AmbiguityError, Diagnostic, PartialAttributes};
pub use matcher::{match_attributes, MatchVerdict, Mismatch, PARAM_TOLERANCE};
pub use rules::{AttrPath, ExtractionRule, Normalizer, Pattern, PatternKind, RawCapture, RuleError, RuleSet};
pub use scan::{scan, Assignment, CallSite, Expr, ScanError, SourceModel};
