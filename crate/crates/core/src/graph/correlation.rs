use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::assess::{Axis, Scales, SurveyResponse};
use crate::cca::ScenarioPair;
use crate::error::{Error, Result, RowIssue};
use crate::field::MorphologicalField;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationAxis {
    Impact,
    Likelihood,
    /// Impact observations followed by likelihood observations.
    Combined,
}

impl CorrelationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationAxis::Impact => "impact",
            CorrelationAxis::Likelihood => "likelihood",
            CorrelationAxis::Combined => "combined",
        }
    }

    fn axes(self) -> &'static [Axis] {
        match self {
            CorrelationAxis::Impact => &[Axis::Impact],
            CorrelationAxis::Likelihood => &[Axis::Likelihood],
            CorrelationAxis::Combined => &[Axis::Impact, Axis::Likelihood],
        }
    }
}

impl std::str::FromStr for CorrelationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "impact" => Ok(CorrelationAxis::Impact),
            "likelihood" => Ok(CorrelationAxis::Likelihood),
            "combined" => Ok(CorrelationAxis::Combined),
            other => Err(Error::parameter("axis", format!("unknown correlation axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityLevel {
    Dimension,
    Condition,
}

impl std::str::FromStr for EntityLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dimension" => Ok(EntityLevel::Dimension),
            "condition" => Ok(EntityLevel::Condition),
            other => Err(Error::parameter("level", format!("unknown entity level `{other}`"))),
        }
    }
}

/// Observation vectors over a shared index, one per entity. Missing
/// observations are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub ids: Vec<String>,
    pub axis: CorrelationAxis,
    pub vectors: Vec<Vec<Option<f64>>>,
}

/// Pearson r over positions where both vectors have a value. `None` with
/// fewer than three common observations or zero variance on either side.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> Option<f64> {
    let common: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if common.len() < 3 {
        return None;
    }
    let n = common.len() as f64;
    let mx = common.iter().map(|p| p.0).sum::<f64>() / n;
    let my = common.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in &common {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn self_defined(v: &[Option<f64>]) -> bool {
    pearson(v, v).is_some()
}

/// Symmetric matrix of Pearson r. `None` marks undefined entries; an entity
/// whose own vector has zero variance or fewer than three observations is
/// undefined throughout, including its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub ids: Vec<String>,
    pub axis: CorrelationAxis,
    values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    /// Validates shape, symmetry, diagonal and range.
    pub fn from_values(ids: Vec<String>, axis: CorrelationAxis, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let n = ids.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("correlation matrix must be {n}x{n}")));
        }
        for i in 0..n {
            if let Some(d) = values[i][i] {
                if (d - 1.0).abs() > EPS {
                    return Err(Error::Shape(format!("diagonal entry for `{}` is {d}, not 1", ids[i])));
                }
            }
            for j in 0..n {
                match (values[i][j], values[j][i]) {
                    (Some(a), Some(b)) if (a - b).abs() <= EPS && a.abs() <= 1.0 + EPS => {}
                    (None, None) => {}
                    _ => {
                        return Err(Error::Shape(format!(
                            "entries ({}, {}) are not a symmetric correlation in [-1, 1]",
                            ids[i], ids[j]
                        )))
                    }
                }
            }
        }
        Ok(CorrelationMatrix { ids, axis, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.values
    }

    /// Entities without a defined diagonal.
    pub fn undefined_entities(&self) -> Vec<String> {
        (0..self.len())
            .filter(|&i| self.values[i][i].is_none())
            .map(|i| self.ids[i].clone())
            .collect()
    }

    /// Entity ids as header row and first column, 4-decimal values, blank for
    /// undefined.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "writing correlation matrix";
        let mut header = vec!["entity".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv(ctx, e))?;
        for (id, row) in self.ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_default()));
            w.write_record(&rec).map_err(|e| Error::csv(ctx, e))?;
        }
        w.flush().map_err(|e| Error::io("correlation matrix", e))?;
        Ok(())
    }
}

/// Reads a matrix written by [`CorrelationMatrix::write_csv`] (or any square
/// CSV of the same layout).
pub fn read_matrix_csv<R: Read>(reader: R, axis: CorrelationAxis) -> Result<CorrelationMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("matrix header", e))?.clone();
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
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
        if ids.get(i).map(String::as_str) != Some(&rec[0]) {
            issues.push(RowIssue {
                line,
                message: format!("row id `{}` does not match column order", &rec[0]),
            });
            continue;
        }
        let mut row = Vec::with_capacity(ids.len());
        for cell in rec.iter().skip(1) {
            if cell.is_empty() {
                row.push(None);
            } else {
                match cell.parse::<f64>() {
                    Ok(v) => row.push(Some(v)),
                    Err(_) => {
                        issues.push(RowIssue {
                            line,
                            message: format!("`{cell}` is not a number"),
                        });
                        row.push(None);
                    }
                }
            }
        }
        values.push(row);
    }
    if !issues.is_empty() {
        return Err(Error::Ingestion { issues });
    }
    CorrelationMatrix::from_values(ids, axis, values)
}

/// Pearson matrix over all entity pairs of `profiles`.
pub fn correlation_matrix(profiles: &Profiles) -> Result<CorrelationMatrix> {
    let n = profiles.ids.len();
    if profiles.vectors.len() != n {
        return Err(Error::Shape(format!("{n} ids but {} vectors", profiles.vectors.len())));
    }
    if let Some(first) = profiles.vectors.first() {
        let len = first.len();
        if let Some(bad) = profiles.vectors.iter().position(|v| v.len() != len) {
            return Err(Error::Shape(format!(
                "profile of `{}` has length {} but {len} was expected",
                profiles.ids[bad],
                profiles.vectors[bad].len()
            )));
        }
        if len < 3 {
            return Err(Error::Shape(format!("profiles need at least 3 observations, got {len}")));
        }
    }
    let defined: Vec<bool> = profiles.vectors.iter().map(|v| self_defined(v)).collect();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        if !defined[i] {
            continue;
        }
        values[i][i] = Some(1.0);
        for j in i + 1..n {
            if defined[j] {
                let r = pearson(&profiles.vectors[i], &profiles.vectors[j]);
                values[i][j] = r;
                values[j][i] = r;
            }
        }
    }
    Ok(CorrelationMatrix {
        ids: profiles.ids.clone(),
        axis: profiles.axis,
        values,
    })
}

fn pair_value(p: &ScenarioPair, axis: Axis) -> f64 {
    match axis {
        Axis::Impact => p.impact,
        Axis::Likelihood => p.likelihood,
    }
}

/// Profiles built from consistent scenario pairs. The observation index is
/// the field's condition order (repeated per axis for the combined axis).
///
/// Condition level: entity `e` observes, at condition `j`, the combined value
/// of pair `(e, j)`. Dimension level: entity `d` observes the mean of the
/// pair values between `d`'s conditions and `j`. Positions without a
/// consistent pair are missing.
pub fn pair_profiles(
    field: &MorphologicalField,
    pairs: &[ScenarioPair],
    level: EntityLevel,
    axis: CorrelationAxis,
) -> Result<Profiles> {
    let n = field.condition_count();
    let mut by_condition: Vec<Vec<(usize, &ScenarioPair)>> = vec![Vec::new(); n];
    for p in pairs.iter().filter(|p| p.consistent) {
        if p.a >= n || p.b >= n {
            return Err(Error::Shape(format!("pair ({}, {}) outside the field", p.condition_a, p.condition_b)));
        }
        by_condition[p.a].push((p.b, p));
        by_condition[p.b].push((p.a, p));
    }
    let entities: Vec<(String, Vec<usize>)> = match level {
        EntityLevel::Condition => (0..n)
            .filter(|&i| !by_condition[i].is_empty())
            .map(|i| (field.qualified_id(i), vec![i]))
            .collect(),
        EntityLevel::Dimension => field
            .dimensions()
            .iter()
            .enumerate()
            .map(|(d, dim)| (dim.id.clone(), field.dimension_range(d).collect()))
            .collect(),
    };
    let mut ids = Vec::with_capacity(entities.len());
    let mut vectors = Vec::with_capacity(entities.len());
    for (id, members) in entities {
        let mut v = Vec::with_capacity(n * axis.axes().len());
        for &ax in axis.axes() {
            let mut sums = vec![(0.0, 0u32); n];
            for &c in &members {
                for &(j, p) in &by_condition[c] {
                    sums[j].0 += pair_value(p, ax);
                    sums[j].1 += 1;
                }
            }
            v.extend(sums.iter().map(|&(s, k)| (k > 0).then(|| s / f64::from(k))));
        }
        ids.push(id);
        vectors.push(v);
    }
    Ok(Profiles { ids, axis, vectors })
}

/// Profiles from raw responses: entity `e` observes, per respondent (sorted by
/// respondent id), that respondent's mean score over `e`'s conditions.
pub fn respondent_profiles(
    field: &MorphologicalField,
    responses: &[SurveyResponse],
    scales: &Scales,
    level: EntityLevel,
    axis: CorrelationAxis,
) -> Result<Profiles> {
    let respondents: Vec<&str> = {
        let mut r: Vec<&str> = responses.iter().map(|r| r.respondent.as_str()).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    let slot: BTreeMap<&str, usize> = respondents.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let entity_of = |idx: usize| match level {
        EntityLevel::Condition => idx,
        EntityLevel::Dimension => field.dimension_of(idx),
    };
    let entity_count = match level {
        EntityLevel::Condition => field.condition_count(),
        EntityLevel::Dimension => field.dimension_count(),
    };
    let r = respondents.len();
    // sums[entity][axis][respondent]
    let mut sums = vec![[vec![(0.0, 0u32); r], vec![(0.0, 0u32); r]]; entity_count];
    let mut issues = Vec::new();
    for (i, resp) in responses.iter().enumerate() {
        let line = resp.line.unwrap_or(i as u64 + 2);
        let Some(idx) = field.resolve(&resp.condition) else {
            issues.push(RowIssue {
                line,
                message: format!("unknown condition `{}`", resp.condition),
            });
            continue;
        };
        let score = match resp.score(scales) {
            Ok(s) => s,
            Err(e) => {
                issues.push(RowIssue { line, message: e.to_string() });
                continue;
            }
        };
        let a = match resp.axis {
            Axis::Impact => 0,
            Axis::Likelihood => 1,
        };
        let cell = &mut sums[entity_of(idx)][a][slot[resp.respondent.as_str()]];
        cell.0 += score;
        cell.1 += 1;
    }
    if !issues.is_empty() {
        return Err(Error::Ingestion { issues });
    }
    let ids = (0..entity_count)
        .map(|e| match level {
            EntityLevel::Condition => field.qualified_id(e),
            EntityLevel::Dimension => field.dimensions()[e].id.clone(),
        })
        .collect();
    let vectors = sums
        .iter()
        .map(|per_axis| {
            axis.axes()
                .iter()
                .flat_map(|&ax| {
                    let a = if ax == Axis::Impact { 0 } else { 1 };
                    per_axis[a].iter().map(|&(s, k)| (k > 0).then(|| s / f64::from(k)))
                })
                .collect()
        })
        .collect();
    Ok(Profiles { ids, axis, vectors })
}
