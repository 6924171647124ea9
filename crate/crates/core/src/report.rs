//! Scenario assembly from clustered pairs, scenario tables, the scorecard,
//! and risk-matrix plot data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assess::ScoreTable;
use crate::cluster::PairClustering;
use crate::error::{Error, Result};
use crate::field::MorphologicalField;
use crate::reference;

/// Per-cluster share of one condition's clustered pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAffinity {
    pub index: usize,
    pub condition: String,
    pub counts: Vec<u64>,
    pub weights: Vec<f64>,
}

impl ConditionAffinity {
    pub fn pair_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityTable {
    pub k: usize,
    /// Conditions with at least one clustered pair, in field order.
    pub rows: Vec<ConditionAffinity>,
    /// Conditions without any clustered pair.
    pub flagged: Vec<String>,
}

pub fn condition_affinities(field: &MorphologicalField, clustering: &PairClustering) -> Result<AffinityTable> {
    let k = clustering.model.k;
    let n = field.condition_count();
    let mut counts = vec![vec![0u64; k]; n];
    for p in &clustering.pairs {
        if p.a >= n || p.b >= n || p.cluster >= k {
            return Err(Error::Shape(format!(
                "clustered pair ({}, {}) does not fit the field",
                p.condition_a, p.condition_b
            )));
        }
        counts[p.a][p.cluster] += 1;
        counts[p.b][p.cluster] += 1;
    }
    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for (i, c) in counts.into_iter().enumerate() {
        let total: u64 = c.iter().sum();
        if total == 0 {
            flagged.push(field.qualified_id(i));
            continue;
        }
        rows.push(ConditionAffinity {
            index: i,
            condition: field.qualified_id(i),
            weights: c.iter().map(|&x| x as f64 / total as f64).collect(),
            counts: c,
        });
    }
    Ok(AffinityTable { k, rows, flagged })
}

impl AffinityTable {
    /// CSV `condition,pairs,cluster_1..cluster_k`, weights to 4 decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "writing affinities";
        let mut header = vec!["condition".to_string(), "pairs".to_string()];
        header.extend((1..=self.k).map(|c| format!("cluster_{c}")));
        w.write_record(&header).map_err(|e| Error::csv(ctx, e))?;
        for r in &self.rows {
            let mut rec = vec![r.condition.clone(), r.pair_count().to_string()];
            rec.extend(r.weights.iter().map(|x| format!("{x:.4}")));
            w.write_record(&rec).map_err(|e| Error::csv(ctx, e))?;
        }
        w.flush().map_err(|e| Error::io("affinities", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub dimension: String,
    pub condition: String,
    pub impact: f64,
    pub likelihood: f64,
    /// Analyst-supplied text; never generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub cluster: usize,
    pub rows: Vec<ScenarioRow>,
    pub average_impact: f64,
    pub average_likelihood: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn scenario_name(cluster: usize) -> String {
    let letter = (b'A' + (cluster % 26) as u8) as char;
    format!("Scenario-{letter}")
}

/// One scenario per cluster: in every dimension, the condition with the
/// largest share of its pairs in that cluster. Ties go to the higher impact,
/// then the smaller id. A dimension with no scored or no clustered
/// condition is an assembly error naming it.
pub fn assemble_scenarios(
    field: &MorphologicalField,
    scores: &ScoreTable,
    affinities: &AffinityTable,
) -> Result<Vec<Scenario>> {
    let mut by_index: Vec<Option<&ConditionAffinity>> = vec![None; field.condition_count()];
    for r in &affinities.rows {
        by_index[r.index] = Some(r);
    }
    let mut active = Vec::new();
    for (d, dim) in field.dimensions().iter().enumerate() {
        let range = field.dimension_range(d);
        if range.clone().all(|i| !scores.get(i).is_assessed()) {
            return Err(Error::Assembly {
                dimension: dim.id.clone(),
            });
        }
        let candidates: Vec<&ConditionAffinity> = range.filter_map(|i| by_index[i]).collect();
        if candidates.is_empty() {
            return Err(Error::Assembly {
                dimension: dim.id.clone(),
            });
        }
        active.push((d, candidates));
    }
    let k = affinities.k;
    let mut scenarios = Vec::with_capacity(k);
    for cluster in 0..k {
        let mut rows = Vec::with_capacity(active.len());
        for (d, candidates) in &active {
            let best = candidates
                .iter()
                .copied()
                .reduce(|x, y| if prefer(y, x, cluster, scores) { y } else { x })
                .expect("non-empty candidates");
            let (impact, likelihood) = scores
                .point(best.index)
                .ok_or_else(|| Error::Unassessed(best.condition.clone()))?;
            rows.push(ScenarioRow {
                dimension: field.dimensions()[*d].id.clone(),
                condition: best.condition.clone(),
                impact,
                likelihood,
                narrative: None,
            });
        }
        scenarios.push(Scenario {
            name: scenario_name(cluster),
            cluster,
            average_impact: mean(rows.iter().map(|r| r.impact)),
            average_likelihood: mean(rows.iter().map(|r| r.likelihood)),
            rows,
        });
    }
    Ok(scenarios)
}

/// Whether `y` beats `x` for `cluster`. Shares are compared exactly as
/// fractions of integer counts.
fn prefer(y: &ConditionAffinity, x: &ConditionAffinity, cluster: usize, scores: &ScoreTable) -> bool {
    let lhs = u128::from(y.counts[cluster]) * u128::from(x.pair_count());
    let rhs = u128::from(x.counts[cluster]) * u128::from(y.pair_count());
    if lhs != rhs {
        return lhs > rhs;
    }
    let impact = |a: &ConditionAffinity| scores.get(a.index).impact.unwrap_or(f64::NEG_INFINITY);
    match impact(y).total_cmp(&impact(x)) {
        std::cmp::Ordering::Equal => y.condition < x.condition,
        o => o == std::cmp::Ordering::Greater,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub dimension: String,
    pub condition: String,
    pub impact: String,
    pub likelihood: String,
}

/// Display rows: 2 decimals per condition, 3 for the average row.
pub fn scenario_table(scenario: &Scenario) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = scenario
        .rows
        .iter()
        .map(|r| TableRow {
            dimension: r.dimension.clone(),
            condition: r.condition.clone(),
            impact: format!("{:.2}", r.impact),
            likelihood: format!("{:.2}", r.likelihood),
        })
        .collect();
    rows.push(TableRow {
        dimension: "average".into(),
        condition: String::new(),
        impact: format!("{:.3}", scenario.average_impact),
        likelihood: format!("{:.3}", scenario.average_likelihood),
    });
    rows
}

pub fn write_scenario_csv<W: Write>(scenario: &Scenario, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ctx = "writing scenario table";
    w.write_record(["dimension", "condition", "impact", "likelihood"])
        .map_err(|e| Error::csv(ctx, e))?;
    for r in scenario_table(scenario) {
        w.write_record([r.dimension, r.condition, r.impact, r.likelihood])
            .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io("scenario table", e))?;
    Ok(())
}

/// Dimension rows by scenario columns, one chosen condition per cell.
pub fn write_scorecard_csv<W: Write>(scenarios: &[Scenario], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ctx = "writing scorecard";
    let mut header = vec!["dimension".to_string()];
    header.extend(scenarios.iter().map(|s| s.name.clone()));
    w.write_record(&header).map_err(|e| Error::csv(ctx, e))?;
    if let Some(first) = scenarios.first() {
        for (i, row) in first.rows.iter().enumerate() {
            let mut rec = vec![row.dimension.clone()];
            rec.extend(scenarios.iter().map(|s| s.rows[i].condition.clone()));
            w.write_record(&rec).map_err(|e| Error::csv(ctx, e))?;
        }
        let mut avg = vec!["average".to_string()];
        avg.extend(
            scenarios
                .iter()
                .map(|s| format!("{:.3}/{:.3}", s.average_impact, s.average_likelihood)),
        );
        w.write_record(&avg).map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io("scorecard", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub id: String,
    pub impact: f64,
    pub likelihood: f64,
    pub impact_bin: usize,
    pub likelihood_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub bins: usize,
    pub points: Vec<PlotPoint>,
    /// `counts[impact_bin][likelihood_bin]`.
    pub counts: Vec<Vec<u32>>,
}

/// Bin of `v` in [0, 1] split into `bins` equal buckets; 1.0 lands in the
/// last bucket.
pub fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

pub fn risk_matrix_plot_data(points: &[(String, f64, f64)], bins: usize) -> Result<PlotData> {
    if bins == 0 {
        return Err(Error::parameter("bins", "must be at least 1"));
    }
    let mut counts = vec![vec![0u32; bins]; bins];
    let points = points
        .iter()
        .map(|(id, i, l)| {
            let (bi, bl) = (bin_of(*i, bins), bin_of(*l, bins));
            counts[bi][bl] += 1;
            PlotPoint {
                id: id.clone(),
                impact: *i,
                likelihood: *l,
                impact_bin: bi,
                likelihood_bin: bl,
            }
        })
        .collect();
    Ok(PlotData { bins, points, counts })
}

/// Plot points for every assessed condition of `field`.
pub fn condition_points(field: &MorphologicalField, scores: &ScoreTable) -> Vec<(String, f64, f64)> {
    (0..field.condition_count())
        .filter_map(|i| scores.point(i).map(|(a, b)| (field.qualified_id(i), a, b)))
        .collect()
}

/// Agreement between assembled scenarios and the published scorecard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concordance {
    /// Scenario i compared with published scenario i.
    pub aligned_matches: usize,
    /// Best agreement over all orderings of the published scenarios.
    pub best_matches: usize,
    pub best_order: Vec<usize>,
    /// Cells compared (published entries whose dimension is present).
    pub compared: usize,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Compares chosen conditions with the published scorecard. Only published
/// entries whose dimension appears in the scenarios are counted.
pub fn scorecard_concordance(scenarios: &[Scenario]) -> Concordance {
    let m = scenarios.len().min(reference::SCORECARD.len());
    let dim_of = |id: &str| id.split('.').next().unwrap_or_default().to_string();
    let score = |s: &Scenario, published: &[&str]| -> (usize, usize) {
        let mut hits = 0;
        let mut compared = 0;
        for id in published {
            let dim = dim_of(id);
            if let Some(row) = s.rows.iter().find(|r| r.dimension == dim) {
                compared += 1;
                if row.condition == *id {
                    hits += 1;
                }
            }
        }
        (hits, compared)
    };
    let aligned: Vec<(usize, usize)> = (0..m).map(|i| score(&scenarios[i], reference::SCORECARD[i])).collect();
    let mut best = (0, (0..m).collect::<Vec<_>>());
    for perm in permutations(m) {
        let hits: usize = (0..m).map(|i| score(&scenarios[i], reference::SCORECARD[perm[i]]).0).sum();
        if hits > best.0 {
            best = (hits, perm);
        }
    }
    Concordance {
        aligned_matches: aligned.iter().map(|x| x.0).sum(),
        best_matches: best.0,
        best_order: best.1,
        compared: aligned.iter().map(|x| x.1).sum(),
    }
}
