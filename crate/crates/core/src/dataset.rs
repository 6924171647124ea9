//! Built-in datasets: the AI-risk field with its aggregated expert scores and
//! Likert scales, an optional superintelligence dimension, and a small
//! synthetic field.

use crate::assess::{LikertScale, Scales, ScoreTable};
use crate::error::{Error, Result};
use crate::field::{Dimension, MorphologicalField};

const FIELD_JSON: &str = include_str!("../data/ai-risk-field.json");
const SUPERINTELLIGENCE_JSON: &str = include_str!("../data/superintelligence-dimension.json");
const SCORES_CSV: &str = include_str!("../data/ai-risk-scores.csv");
const IMPACT_SCALE_JSON: &str = include_str!("../data/impact-scale.json");
const LIKELIHOOD_SCALE_JSON: &str = include_str!("../data/likelihood-scale.json");

/// Names accepted wherever a built-in field can stand in for a file path.
pub const BUILTIN_FIELDS: [&str; 3] = ["bundled", "bundled-superintelligence", "two-dim-4x4"];

/// The 14-dimension, 46-condition AI-risk field.
pub fn bundled_field() -> MorphologicalField {
    MorphologicalField::from_json_str(FIELD_JSON).expect("bundled field is valid")
}

pub fn superintelligence_dimension() -> Dimension {
    Dimension::from_json_str(SUPERINTELLIGENCE_JSON).expect("bundled dimension is valid")
}

/// The bundled field plus the unscored superintelligence dimension.
pub fn bundled_field_with_superintelligence() -> MorphologicalField {
    bundled_field()
        .with_dimension(superintelligence_dimension())
        .expect("superintelligence dimension fits the bundled field")
}

/// Two dimensions of four conditions each, no scores.
pub fn two_dim_4x4() -> MorphologicalField {
    MorphologicalField::from_sizes("two-dim-4x4", &[4, 4]).expect("valid sizes")
}

pub fn bundled_scores_csv() -> &'static str {
    SCORES_CSV
}

/// Aggregated scores aligned to `field`; conditions the bundled table does
/// not cover stay unassessed.
pub fn bundled_scores(field: &MorphologicalField) -> Result<ScoreTable> {
    ScoreTable::read_csv(field, SCORES_CSV.as_bytes())
}

pub fn bundled_scales() -> Scales {
    Scales {
        impact: LikertScale::from_json_str(IMPACT_SCALE_JSON).expect("bundled impact scale is valid"),
        likelihood: LikertScale::from_json_str(LIKELIHOOD_SCALE_JSON).expect("bundled likelihood scale is valid"),
    }
}

pub fn builtin_field(name: &str) -> Option<MorphologicalField> {
    match name {
        "bundled" => Some(bundled_field()),
        "bundled-superintelligence" => Some(bundled_field_with_superintelligence()),
        "two-dim-4x4" => Some(two_dim_4x4()),
        _ => None,
    }
}

/// Scores that come with a built-in field, if any.
pub fn builtin_scores(name: &str, field: &MorphologicalField) -> Result<Option<ScoreTable>> {
    match name {
        "bundled" | "bundled-superintelligence" => bundled_scores(field).map(Some),
        "two-dim-4x4" => Ok(None),
        other => Err(Error::parameter("field", format!("unknown built-in field `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_shapes() {
        let f = bundled_field();
        assert_eq!(f.dimension_count(), 14);
        assert_eq!(f.condition_count(), 46);
        let g = bundled_field_with_superintelligence();
        assert_eq!(g.dimension_count(), 15);
        let t = bundled_scores(&g).unwrap();
        assert_eq!(t.unassessed().len(), 3);
        assert!(bundled_scores(&f).unwrap().unassessed().is_empty());
        for name in BUILTIN_FIELDS {
            assert!(builtin_field(name).is_some());
        }
    }
}
