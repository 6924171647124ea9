//! Expert assessment ingestion: Likert scales, survey responses, weighted
//! aggregation into per-condition impact/likelihood scores, and rankings.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowIssue};
use crate::field::{parse_json, MorphologicalField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Impact,
    Likelihood,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Impact => "impact",
            Axis::Likelihood => "likelihood",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "impact" => Ok(Axis::Impact),
            "likelihood" => Ok(Axis::Likelihood),
            other => Err(Error::parameter("axis", format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expertise {
    Basic,
    Intermediate,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Track {
    Safety,
    Governance,
}

/// Whether a band's numeric position already reads "higher = more".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleDirection {
    #[default]
    Normal,
    /// Scores are reflected (`1 - midpoint`) at ingest.
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikertBand {
    pub label: String,
    pub lower: u8,
    pub upper: u8,
}

impl LikertBand {
    pub fn midpoint(&self) -> f64 {
        (f64::from(self.lower) + f64::from(self.upper)) / 2.0 / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikertScale {
    pub name: String,
    #[serde(default)]
    pub direction: ScaleDirection,
    pub bands: Vec<LikertBand>,
}

impl LikertScale {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let scale: LikertScale = parse_json(text, "scale")?;
        scale.validate()?;
        Ok(scale)
    }

    /// Bands must be within 0–100, non-overlapping, and together cover every
    /// integer percent from 0 to 100.
    pub fn validate(&self) -> Result<()> {
        let path = |i: usize| format!("bands[{i}]");
        if self.bands.is_empty() {
            return Err(Error::structural("bands", format!("scale `{}` has no bands", self.name)));
        }
        let mut order: Vec<usize> = (0..self.bands.len()).collect();
        order.sort_by_key(|&i| self.bands[i].lower);
        let mut expected_lower = 0u16;
        for &i in &order {
            let b = &self.bands[i];
            if b.lower > b.upper || b.upper > 100 {
                return Err(Error::structural(path(i), format!("band `{}` has invalid bounds {}-{}", b.label, b.lower, b.upper)));
            }
            if u16::from(b.lower) != expected_lower {
                return Err(Error::structural(
                    path(i),
                    format!(
                        "band `{}` starts at {} but {} was expected (bands must not overlap or leave gaps)",
                        b.label, b.lower, expected_lower
                    ),
                ));
            }
            expected_lower = u16::from(b.upper) + 1;
        }
        if expected_lower != 101 {
            return Err(Error::structural("bands", format!("scale `{}` does not reach 100", self.name)));
        }
        let mut labels: Vec<&str> = self.bands.iter().map(|b| b.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::structural("bands", format!("scale `{}` repeats a label", self.name)));
        }
        Ok(())
    }

    /// Numeric score in [0, 1] for a band label: the band midpoint over 100,
    /// reflected when the scale is inverted.
    pub fn map_band(&self, label: &str) -> Result<f64> {
        let band = self
            .bands
            .iter()
            .find(|b| b.label.eq_ignore_ascii_case(label.trim()))
            .ok_or_else(|| Error::Mapping {
                scale: self.name.clone(),
                label: label.to_string(),
            })?;
        let mid = band.midpoint();
        Ok(match self.direction {
            ScaleDirection::Normal => mid,
            ScaleDirection::Inverted => 1.0 - mid,
        })
    }
}

pub fn map_band(scale: &LikertScale, label: &str) -> Result<f64> {
    scale.map_band(label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scales {
    pub impact: LikertScale,
    pub likelihood: LikertScale,
}

impl Scales {
    pub fn for_axis(&self, axis: Axis) -> &LikertScale {
        match axis {
            Axis::Impact => &self.impact,
            Axis::Likelihood => &self.likelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseValue {
    Band(String),
    Raw(f64),
}

impl ResponseValue {
    /// A decimal is a raw score; anything else is a band label.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        match t.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(ResponseValue::Raw(v)),
            Ok(v) => Err(Error::parameter("value", format!("raw score {v} outside [0, 1]"))),
            Err(_) if t.is_empty() => Err(Error::parameter("value", "empty value")),
            Err(_) => Ok(ResponseValue::Band(t.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent: String,
    /// Qualified `dimension.condition` id.
    pub condition: String,
    pub axis: Axis,
    pub value: ResponseValue,
    pub expertise: Expertise,
    pub track: Track,
    /// Source line when parsed from CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

impl SurveyResponse {
    pub fn score(&self, scales: &Scales) -> Result<f64> {
        match &self.value {
            ResponseValue::Raw(v) => Ok(*v),
            ResponseValue::Band(label) => scales.for_axis(self.axis).map_band(label),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ResponseRow {
    respondent: String,
    condition: String,
    axis: String,
    value: String,
    expertise: String,
    track: String,
}

fn parse_enum<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(text.trim().to_ascii_lowercase()))
        .map_err(|_| format!("unknown {what} `{text}`"))
}

/// Reads `respondent,condition,axis,value,expertise,track` rows. Every
/// malformed row is reported, not only the first.
pub fn read_responses_csv<R: Read>(reader: R) -> Result<Vec<SurveyResponse>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("responses header", e))?.clone();
    let expected = ["respondent", "condition", "axis", "value", "expertise", "track"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Ingestion {
            issues: vec![RowIssue {
                line: 1,
                message: format!("expected header `{}`", expected.join(",")),
            }],
        });
    }
    let mut out = Vec::new();
    let mut issues = Vec::new();
    for (i, rec) in rdr.deserialize::<ResponseRow>().enumerate() {
        let line = i as u64 + 2;
        let row = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(RowIssue { line, message: e.to_string() });
                continue;
            }
        };
        let parsed = (|| -> std::result::Result<SurveyResponse, String> {
            Ok(SurveyResponse {
                axis: row.axis.parse().map_err(|e: Error| e.to_string())?,
                value: ResponseValue::parse(&row.value).map_err(|e| e.to_string())?,
                expertise: parse_enum(&row.expertise, "expertise")?,
                track: parse_enum(&row.track, "track")?,
                respondent: row.respondent,
                condition: row.condition,
                line: Some(line),
            })
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(message) => issues.push(RowIssue { line, message }),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(Error::Ingestion { issues })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertiseWeights {
    pub basic: f64,
    pub intermediate: f64,
    pub expert: f64,
}

impl Default for ExpertiseWeights {
    fn default() -> Self {
        ExpertiseWeights {
            basic: 1.0,
            intermediate: 1.0,
            expert: 1.0,
        }
    }
}

impl ExpertiseWeights {
    pub fn get(&self, e: Expertise) -> f64 {
        match e {
            Expertise::Basic => self.basic,
            Expertise::Intermediate => self.intermediate,
            Expertise::Expert => self.expert,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.basic, self.intermediate, self.expert];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::parameter("weights", "weights must be finite and non-negative"));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::parameter("weights", "at least one expertise weight must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub expertise: Expertise,
    pub track: Track,
    pub axis: Axis,
    pub count: u32,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub impact: Option<f64>,
    pub likelihood: Option<f64>,
}

/// Aggregated assessment of one condition. `None` on an axis means the
/// condition is unassessed on that axis; it is never reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScore {
    pub condition: String,
    pub impact: Option<f64>,
    pub likelihood: Option<f64>,
    pub n_impact: u32,
    pub n_likelihood: u32,
    #[serde(default)]
    pub dispersion: Dispersion,
    #[serde(default)]
    pub strata: Vec<StratumStats>,
}

impl ConditionScore {
    pub fn unassessed(condition: impl Into<String>) -> Self {
        ConditionScore {
            condition: condition.into(),
            impact: None,
            likelihood: None,
            n_impact: 0,
            n_likelihood: 0,
            dispersion: Dispersion::default(),
            strata: Vec::new(),
        }
    }

    pub fn is_assessed(&self) -> bool {
        self.impact.is_some() && self.likelihood.is_some()
    }

    pub fn axis(&self, axis: Axis) -> Option<f64> {
        match axis {
            Axis::Impact => self.impact,
            Axis::Likelihood => self.likelihood,
        }
    }

    /// `(impact, likelihood)` when both axes are assessed.
    pub fn point(&self) -> Option<(f64, f64)> {
        Some((self.impact?, self.likelihood?))
    }
}

/// Condition scores aligned with a field's flat condition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    entries: Vec<ConditionScore>,
}

impl ScoreTable {
    /// Aligns `scores` with `field`. Conditions missing from `scores` become
    /// unassessed; unknown or repeated ids are reported together.
    pub fn new(field: &MorphologicalField, scores: Vec<ConditionScore>) -> Result<Self> {
        let mut slots: Vec<Option<ConditionScore>> = vec![None; field.condition_count()];
        let mut issues = Vec::new();
        for (i, s) in scores.into_iter().enumerate() {
            let line = i as u64 + 2;
            match field.resolve(&s.condition) {
                None => issues.push(RowIssue {
                    line,
                    message: format!("unknown condition `{}`", s.condition),
                }),
                Some(idx) if slots[idx].is_some() => issues.push(RowIssue {
                    line,
                    message: format!("condition `{}` listed twice", s.condition),
                }),
                Some(idx) => slots[idx] = Some(s),
            }
        }
        if !issues.is_empty() {
            return Err(Error::Ingestion { issues });
        }
        let entries = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.unwrap_or_else(|| ConditionScore::unassessed(field.qualified_id(i))))
            .collect();
        Ok(ScoreTable { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> &ConditionScore {
        &self.entries[index]
    }

    pub fn point(&self, index: usize) -> Option<(f64, f64)> {
        self.entries[index].point()
    }

    pub fn entries(&self) -> &[ConditionScore] {
        &self.entries
    }

    pub fn find(&self, qualified: &str) -> Option<&ConditionScore> {
        self.entries.iter().find(|s| s.condition == qualified)
    }

    /// Qualified ids of conditions that lack a score on either axis.
    pub fn unassessed(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|s| !s.is_assessed())
            .map(|s| s.condition.clone())
            .collect()
    }

    /// Reads the `condition,impact,likelihood,n_impact,n_likelihood` table.
    /// Blank impact or likelihood cells mean unassessed.
    pub fn read_csv<R: Read>(field: &MorphologicalField, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv("score table header", e))?.clone();
        let expected = ["condition", "impact", "likelihood", "n_impact", "n_likelihood"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Ingestion {
                issues: vec![RowIssue {
                    line: 1,
                    message: format!("expected header `{}`", expected.join(",")),
                }],
            });
        }
        let mut scores = Vec::new();
        let mut issues = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    issues.push(RowIssue { line, message: e.to_string() });
                    continue;
                }
            };
            let parsed = (|| -> std::result::Result<ConditionScore, String> {
                let unit = |s: &str, name: &str| -> std::result::Result<Option<f64>, String> {
                    if s.is_empty() {
                        return Ok(None);
                    }
                    let v: f64 = s.parse().map_err(|_| format!("{name} `{s}` is not a number"))?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(format!("{name} {v} outside [0, 1]"));
                    }
                    Ok(Some(v))
                };
                let count = |s: &str, name: &str| -> std::result::Result<u32, String> {
                    if s.is_empty() {
                        Ok(0)
                    } else {
                        s.parse().map_err(|_| format!("{name} `{s}` is not a count"))
                    }
                };
                let impact = unit(&rec[1], "impact")?;
                let likelihood = unit(&rec[2], "likelihood")?;
                Ok(ConditionScore {
                    condition: rec[0].to_string(),
                    impact,
                    likelihood,
                    n_impact: count(&rec[3], "n_impact")?,
                    n_likelihood: count(&rec[4], "n_likelihood")?,
                    dispersion: Dispersion::default(),
                    strata: Vec::new(),
                })
            })();
            match parsed {
                Ok(s) => scores.push(s),
                Err(message) => issues.push(RowIssue { line, message }),
            }
        }
        if !issues.is_empty() {
            return Err(Error::Ingestion { issues });
        }
        ScoreTable::new(field, scores)
    }

    /// Writes the aggregate table in field order. Values use the shortest
    /// representation that reads back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "writing score table";
        w.write_record(["condition", "impact", "likelihood", "n_impact", "n_likelihood"])
            .map_err(|e| Error::csv(ctx, e))?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.entries {
            w.write_record([
                s.condition.clone(),
                fmt(s.impact),
                fmt(s.likelihood),
                s.n_impact.to_string(),
                s.n_likelihood.to_string(),
            ])
            .map_err(|e| Error::csv(ctx, e))?;
        }
        w.flush().map_err(|e| Error::io("score table", e))?;
        Ok(())
    }
}

#[derive(Default)]
struct Accumulator {
    sum_w: f64,
    sum_wx: f64,
    values: Vec<(f64, f64)>,
}

impl Accumulator {
    fn push(&mut self, x: f64, w: f64) {
        self.sum_w += w;
        self.sum_wx += w * x;
        self.values.push((x, w));
    }

    fn mean(&self) -> Option<f64> {
        (self.sum_w > 0.0).then(|| self.sum_wx / self.sum_w)
    }

    /// Weighted population standard deviation.
    fn std_dev(&self) -> Option<f64> {
        let mean = self.mean()?;
        let var = self.values.iter().map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / self.sum_w;
        Some(var.max(0.0).sqrt())
    }
}

/// Clamps tiny floating-point excursions of a weighted mean back inside the
/// range of its inputs.
fn clamp_to_inputs(mean: f64, values: &[(f64, f64)]) -> f64 {
    let lo = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    mean.clamp(lo, hi)
}

/// Aggregates survey responses into one score per field condition.
///
/// Rows with zero weight contribute nothing, exactly as if they were absent.
/// Per-stratum statistics are unweighted (within a stratum every row has the
/// same weight).
pub fn aggregate(
    field: &MorphologicalField,
    responses: &[SurveyResponse],
    scales: &Scales,
    weights: &ExpertiseWeights,
) -> Result<ScoreTable> {
    weights.validate()?;
    let n = field.condition_count();
    let mut overall: Vec<[Accumulator; 2]> = (0..n).map(|_| Default::default()).collect();
    let mut strata: Vec<BTreeMap<(Expertise, Track, Axis), Vec<f64>>> = vec![BTreeMap::new(); n];
    let mut issues = Vec::new();
    for (i, r) in responses.iter().enumerate() {
        let line = r.line.unwrap_or(i as u64 + 2);
        let Some(idx) = field.resolve(&r.condition) else {
            issues.push(RowIssue {
                line,
                message: format!("unknown condition `{}`", r.condition),
            });
            continue;
        };
        let score = match r.score(scales) {
            Ok(s) => s,
            Err(e) => {
                issues.push(RowIssue { line, message: e.to_string() });
                continue;
            }
        };
        let w = weights.get(r.expertise);
        if w == 0.0 {
            continue;
        }
        let slot = match r.axis {
            Axis::Impact => 0,
            Axis::Likelihood => 1,
        };
        overall[idx][slot].push(score, w);
        strata[idx].entry((r.expertise, r.track, r.axis)).or_default().push(score);
    }
    if !issues.is_empty() {
        return Err(Error::Ingestion { issues });
    }
    let entries = (0..n)
        .map(|idx| {
            let [imp, lik] = &overall[idx];
            let strata = strata[idx]
                .iter()
                .map(|(&(expertise, track, axis), xs)| {
                    let count = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / count;
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
                    StratumStats {
                        expertise,
                        track,
                        axis,
                        count: xs.len() as u32,
                        mean,
                        std_dev: var.max(0.0).sqrt(),
                        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect();
            ConditionScore {
                condition: field.qualified_id(idx),
                impact: imp.mean().map(|m| clamp_to_inputs(m, &imp.values)),
                likelihood: lik.mean().map(|m| clamp_to_inputs(m, &lik.values)),
                n_impact: imp.values.len() as u32,
                n_likelihood: lik.values.len() as u32,
                dispersion: Dispersion {
                    impact: imp.std_dev(),
                    likelihood: lik.std_dev(),
                },
                strata,
            }
        })
        .collect();
    Ok(ScoreTable { entries })
}

/// Conditions sorted by descending score on `axis`, ties by ascending id.
/// Unassessed conditions are skipped.
pub fn rank_conditions(scores: &[ConditionScore], axis: Axis, top_k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = scores
        .iter()
        .filter_map(|s| s.axis(axis).map(|v| (s.condition.clone(), v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn likelihood_scale() -> LikertScale {
        LikertScale::from_json_str(include_str!("../data/likelihood-scale.json")).unwrap()
    }

    fn scales() -> Scales {
        Scales {
            impact: LikertScale::from_json_str(include_str!("../data/impact-scale.json")).unwrap(),
            likelihood: likelihood_scale(),
        }
    }

    fn field() -> MorphologicalField {
        MorphologicalField::from_sizes("t", &[2, 2]).unwrap()
    }

    fn resp(cond: &str, axis: Axis, v: f64, e: Expertise) -> SurveyResponse {
        SurveyResponse {
            respondent: "r".into(),
            condition: cond.into(),
            axis,
            value: ResponseValue::Raw(v),
            expertise: e,
            track: Track::Safety,
            line: None,
        }
    }

    #[test]
    fn band_midpoints() {
        let s = likelihood_scale();
        assert!((s.map_band("Very likely").unwrap() - 0.955).abs() < 1e-12);
        assert!((s.map_band("Even chance").unwrap() - 0.505).abs() < 1e-12);
        let err = s.map_band("Certainly").unwrap_err();
        assert!(matches!(err, Error::Mapping { ref scale, ref label } if scale == "likelihood" && label == "Certainly"));
    }

    #[test]
    fn inverted_scales_reflect() {
        let mut s = likelihood_scale();
        s.direction = ScaleDirection::Inverted;
        assert!((s.map_band("Very likely").unwrap() - 0.045).abs() < 1e-12);
    }

    #[test]
    fn scale_validation_rejects_overlap_and_gaps() {
        let mut s = likelihood_scale();
        s.bands[1].lower = 10;
        assert!(s.validate().is_err());
        let mut s = likelihood_scale();
        s.bands[4].upper = 99;
        assert!(s.validate().is_err());
        let mut s = likelihood_scale();
        s.bands[2].lower = 42;
        assert!(s.validate().is_err());
    }

    #[test]
    fn equal_weight_mean() {
        let rs = vec![
            resp("d1.c1", Axis::Impact, 0.9, Expertise::Basic),
            resp("d1.c1", Axis::Impact, 0.5, Expertise::Basic),
        ];
        let t = aggregate(&field(), &rs, &scales(), &ExpertiseWeights::default()).unwrap();
        assert!((t.get(0).impact.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(t.get(0).n_impact, 2);
        assert!((t.get(0).dispersion.impact.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(t.get(0).likelihood, None);
        assert!(!t.get(0).is_assessed());
        assert_eq!(t.get(3).n_impact, 0);
    }

    #[test]
    fn weighted_mean() {
        let rs = vec![
            resp("d1.c1", Axis::Impact, 0.9, Expertise::Expert),
            resp("d1.c1", Axis::Impact, 0.6, Expertise::Basic),
        ];
        let w = ExpertiseWeights {
            basic: 1.0,
            intermediate: 1.0,
            expert: 2.0,
        };
        let t = aggregate(&field(), &rs, &scales(), &w).unwrap();
        assert!((t.get(0).impact.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(t.get(0).strata.len(), 2);
    }

    #[test]
    fn unknown_conditions_listed_by_line() {
        let csv = "respondent,condition,axis,value,expertise,track\n\
                   a,d1.c1,impact,0.5,basic,safety\n\
                   b,d7.c1,impact,0.5,basic,safety\n\
                   c,d1.c2,likelihood,Very likely,expert,governance\n\
                   d,zz,likelihood,0.1,expert,governance\n";
        let rs = read_responses_csv(csv.as_bytes()).unwrap();
        assert_eq!(rs[2].value, ResponseValue::Band("Very likely".into()));
        let err = aggregate(&field(), &rs, &scales(), &ExpertiseWeights::default()).unwrap_err();
        match err {
            Error::Ingestion { issues } => {
                assert_eq!(issues.iter().map(|i| i.line).collect::<Vec<_>>(), vec![3, 5]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_response_rows() {
        let csv = "respondent,condition,axis,value,expertise,track\n\
                   a,d1.c1,impact,1.5,basic,safety\n\
                   a,d1.c1,size,0.5,basic,safety\n\
                   a,d1.c1,impact,0.5,guru,safety\n";
        match read_responses_csv(csv.as_bytes()).unwrap_err() {
            Error::Ingestion { issues } => assert_eq!(issues.len(), 3),
            other => panic!("unexpected {other}"),
        }
        assert!(read_responses_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_weights_rejected_when_all_zero() {
        let w = ExpertiseWeights {
            basic: 0.0,
            intermediate: 0.0,
            expert: 0.0,
        };
        assert!(aggregate(&field(), &[], &scales(), &w).is_err());
        let w = ExpertiseWeights {
            basic: -1.0,
            ..Default::default()
        };
        assert!(aggregate(&field(), &[], &scales(), &w).is_err());
    }

    #[test]
    fn ranking_ties_by_id() {
        let mk = |id: &str, v: f64| ConditionScore {
            impact: Some(v),
            likelihood: Some(v),
            n_impact: 1,
            n_likelihood: 1,
            ..ConditionScore::unassessed(id)
        };
        let scores = vec![mk("b", 0.5), mk("a", 0.5), mk("c", 0.9), ConditionScore::unassessed("z")];
        let r = rank_conditions(&scores, Axis::Impact, 10);
        assert_eq!(r.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["c", "a", "b"]);
        assert_eq!(rank_conditions(&scores[2..3], Axis::Impact, 5).len(), 1);
        assert!(rank_conditions(&[], Axis::Likelihood, 3).is_empty());
    }

    #[test]
    fn score_table_round_trip_and_blanks() {
        let f = field();
        let csv = "condition,impact,likelihood,n_impact,n_likelihood\n\
                   d1.c1,0.41,0.27,42,79\n\
                   d2.c2,,,0,0\n";
        let t = ScoreTable::read_csv(&f, csv.as_bytes()).unwrap();
        assert_eq!(t.point(0), Some((0.41, 0.27)));
        assert!(!t.get(3).is_assessed());
        assert_eq!(t.unassessed(), vec!["d1.c2", "d2.c1", "d2.c2"]);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let back = ScoreTable::read_csv(&f, out.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn score_table_rejects_unknown_rows() {
        let csv = "condition,impact,likelihood,n_impact,n_likelihood\nq.r,0.1,0.1,1,1\nd1.c1,2,0.1,1,1\n";
        match ScoreTable::read_csv(&field(), csv.as_bytes()).unwrap_err() {
            Error::Ingestion { issues } => assert_eq!(issues[0].line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn responses() -> impl Strategy<Value = Vec<SurveyResponse>> {
            let expertise = prop_oneof![
                Just(Expertise::Basic),
                Just(Expertise::Intermediate),
                Just(Expertise::Expert)
            ];
            prop::collection::vec((0usize..4, any::<bool>(), 0.0f64..=1.0, expertise), 1..40).prop_map(|rows| {
                rows.into_iter()
                    .map(|(c, imp, v, e)| {
                        let cond = ["d1.c1", "d1.c2", "d2.c1", "d2.c2"][c];
                        resp(cond, if imp { Axis::Impact } else { Axis::Likelihood }, v, e)
                    })
                    .collect()
            })
        }

        fn weights() -> impl Strategy<Value = ExpertiseWeights> {
            (0.0f64..3.0, 0.0f64..3.0, 0.1f64..3.0).prop_map(|(basic, intermediate, expert)| ExpertiseWeights {
                basic,
                intermediate,
                expert,
            })
        }

        proptest! {
            #[test]
            fn means_within_input_range(rs in responses(), w in weights()) {
                let t = aggregate(&field(), &rs, &scales(), &w).unwrap();
                for (idx, s) in t.entries().iter().enumerate() {
                    for axis in [Axis::Impact, Axis::Likelihood] {
                        let xs: Vec<f64> = rs.iter()
                            .filter(|r| field().resolve(&r.condition) == Some(idx) && r.axis == axis && w.get(r.expertise) > 0.0)
                            .map(|r| r.score(&scales()).unwrap())
                            .collect();
                        match s.axis(axis) {
                            None => prop_assert!(xs.is_empty()),
                            Some(m) => {
                                let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                                let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                                prop_assert!(m >= lo && m <= hi);
                            }
                        }
                    }
                }
            }

            #[test]
            fn zero_weight_equals_removal(rs in responses()) {
                let w = ExpertiseWeights { basic: 0.0, intermediate: 1.5, expert: 2.0 };
                let kept: Vec<_> = rs.iter().filter(|r| r.expertise != Expertise::Basic).cloned().collect();
                let a = aggregate(&field(), &rs, &scales(), &w).unwrap();
                let b = aggregate(&field(), &kept, &scales(), &w).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn order_does_not_matter(rs in responses(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut shuffled = rs.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = aggregate(&field(), &rs, &scales(), &ExpertiseWeights::default()).unwrap();
                let b = aggregate(&field(), &shuffled, &scales(), &ExpertiseWeights::default()).unwrap();
                for (x, y) in a.entries().iter().zip(b.entries()) {
                    for axis in [Axis::Impact, Axis::Likelihood] {
                        match (x.axis(axis), y.axis(axis)) {
                            (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-12),
                            (p, q) => prop_assert_eq!(p, q),
                        }
                    }
                    prop_assert_eq!(x.n_impact, y.n_impact);
                }
            }

            #[test]
            fn export_ingest_lossless(vals in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 4)) {
                let f = field();
                let scores = vals.iter().enumerate().map(|(i, &(a, b))| ConditionScore {
                    impact: Some(a), likelihood: Some(b), n_impact: 3, n_likelihood: 4,
                    ..ConditionScore::unassessed(f.qualified_id(i))
                }).collect();
                let t = ScoreTable::new(&f, scores).unwrap();
                let mut out = Vec::new();
                t.write_csv(&mut out).unwrap();
                let back = ScoreTable::read_csv(&f, out.as_slice()).unwrap();
                for (x, y) in t.entries().iter().zip(back.entries()) {
                    prop_assert!((x.impact.unwrap() - y.impact.unwrap()).abs() < 5e-4);
                    prop_assert!((x.likelihood.unwrap() - y.likelihood.unwrap()).abs() < 5e-4);
                }
            }
        }
    }
}
