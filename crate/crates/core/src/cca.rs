//! Cross-consistency assessment: scenario pair generation, combined scores,
//! analyst judgments and their export as configuration constraints.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::assess::{ConditionScore, ScoreTable};
use crate::error::{Error, Result, RowIssue};
use crate::field::MorphologicalField;
use crate::space::ConstraintSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    #[default]
    Consistent,
    Inconsistent,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consistent" => Ok(Verdict::Consistent),
            "inconsistent" => Ok(Verdict::Inconsistent),
            other => Err(Error::parameter("verdict", format!("unknown verdict `{other}`"))),
        }
    }
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyJudgment {
    pub condition_a: String,
    pub condition_b: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub timestamp: String,
}

impl ConsistencyJudgment {
    pub fn new(a: impl Into<String>, b: impl Into<String>, verdict: Verdict) -> Self {
        ConsistencyJudgment {
            condition_a: a.into(),
            condition_b: b.into(),
            verdict,
            note: String::new(),
            author: String::new(),
            timestamp: String::new(),
        }
    }

    /// Flat indices of the pair, smaller first. Same-dimension pairs are
    /// rejected.
    pub fn key(&self, field: &MorphologicalField) -> Result<(usize, usize)> {
        pair_key(field, &self.condition_a, &self.condition_b)
    }
}

/// Resolves an unordered cross-dimension pair to `(min, max)` flat indices.
pub fn pair_key(field: &MorphologicalField, a: &str, b: &str) -> Result<(usize, usize)> {
    let unknown = || Error::UnknownPair(a.to_string(), b.to_string());
    let x = field.resolve(a).ok_or_else(unknown)?;
    let y = field.resolve(b).ok_or_else(unknown)?;
    if field.dimension_of(x) == field.dimension_of(y) {
        return Err(Error::Constraint(format!(
            "`{a}` and `{b}` belong to the same dimension"
        )));
    }
    Ok((x.min(y), x.max(y)))
}

/// An unordered cross-dimension condition pair with combined scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPair {
    /// Flat index of the first condition; always less than `b`.
    pub a: usize,
    pub b: usize,
    pub condition_a: String,
    pub condition_b: String,
    pub impact: f64,
    pub likelihood: f64,
    pub consistent: bool,
}

impl ScenarioPair {
    pub fn point(&self) -> [f64; 2] {
        [self.impact, self.likelihood]
    }
}

/// Component-wise mean of two assessed conditions.
pub fn combine_pair(a: &ConditionScore, b: &ConditionScore) -> Result<(f64, f64)> {
    let (ia, la) = a.point().ok_or_else(|| Error::Unassessed(a.condition.clone()))?;
    let (ib, lb) = b.point().ok_or_else(|| Error::Unassessed(b.condition.clone()))?;
    Ok(((ia + ib) / 2.0, (la + lb) / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGeneration {
    pub pairs: Vec<ScenarioPair>,
    /// Conditions left out because they lack a score on some axis.
    pub skipped: Vec<String>,
}

/// One pair per unordered cross-dimension pair of assessed conditions, in
/// flat-index order, all marked consistent.
pub fn generate_pairs(field: &MorphologicalField, scores: &ScoreTable) -> Result<PairGeneration> {
    if scores.len() != field.condition_count() {
        return Err(Error::Shape(format!(
            "score table has {} entries but the field has {} conditions",
            scores.len(),
            field.condition_count()
        )));
    }
    let n = field.condition_count();
    let assessed: Vec<bool> = (0..n).map(|i| scores.get(i).is_assessed()).collect();
    let skipped = (0..n)
        .filter(|&i| !assessed[i])
        .map(|i| field.qualified_id(i))
        .collect();
    let ids: Vec<String> = (0..n).map(|i| field.qualified_id(i)).collect();
    let mut pairs = Vec::new();
    for a in (0..n).filter(|&i| assessed[i]) {
        let da = field.dimension_of(a);
        for b in (a + 1..n).filter(|&j| assessed[j] && field.dimension_of(j) != da) {
            let (impact, likelihood) = combine_pair(scores.get(a), scores.get(b))?;
            pairs.push(ScenarioPair {
                a,
                b,
                condition_a: ids[a].clone(),
                condition_b: ids[b].clone(),
                impact,
                likelihood,
                consistent: true,
            });
        }
    }
    Ok(PairGeneration { pairs, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentSummary {
    pub generated: usize,
    pub survivors: usize,
}

/// Sets each pair's `consistent` flag from `judgments`. Later judgments on
/// the same pair override earlier ones. Every judgment must name a generated
/// pair.
pub fn apply_judgments(
    field: &MorphologicalField,
    pairs: &mut [ScenarioPair],
    judgments: &[ConsistencyJudgment],
) -> Result<JudgmentSummary> {
    let index: BTreeMap<(usize, usize), usize> =
        pairs.iter().enumerate().map(|(i, p)| ((p.a, p.b), i)).collect();
    let mut verdicts: BTreeMap<usize, Verdict> = BTreeMap::new();
    for j in judgments {
        let key = j.key(field)?;
        let &i = index
            .get(&key)
            .ok_or_else(|| Error::UnknownPair(j.condition_a.clone(), j.condition_b.clone()))?;
        verdicts.insert(i, j.verdict);
    }
    for p in pairs.iter_mut() {
        p.consistent = true;
    }
    for (i, v) in verdicts {
        pairs[i].consistent = v == Verdict::Consistent;
    }
    Ok(JudgmentSummary {
        generated: pairs.len(),
        survivors: pairs.iter().filter(|p| p.consistent).count(),
    })
}

/// The pairs judged inconsistent, as configuration exclusions. Independent of
/// scores: judgments on unscored conditions still constrain enumeration.
pub fn constraints_from_judgments(
    field: &MorphologicalField,
    judgments: &[ConsistencyJudgment],
) -> Result<ConstraintSet> {
    let mut latest: BTreeMap<(usize, usize), Verdict> = BTreeMap::new();
    for j in judgments {
        latest.insert(j.key(field)?, j.verdict);
    }
    let mut set = ConstraintSet::new();
    for ((a, b), v) in latest {
        if v == Verdict::Inconsistent {
            set.exclude_indices(field, a, b)?;
        }
    }
    Ok(set)
}

const JUDGMENT_HEADER: [&str; 6] = ["condition_a", "condition_b", "verdict", "note", "author", "timestamp"];

pub fn read_judgments_csv<R: Read>(reader: R) -> Result<Vec<ConsistencyJudgment>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("judgments header", e))?.clone();
    if headers.iter().collect::<Vec<_>>() != JUDGMENT_HEADER {
        return Err(Error::Ingestion {
            issues: vec![RowIssue {
                line: 1,
                message: format!("expected header `{}`", JUDGMENT_HEADER.join(",")),
            }],
        });
    }
    let mut out = Vec::new();
    let mut issues = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        match rec {
            Err(e) => issues.push(RowIssue { line, message: e.to_string() }),
            Ok(r) => match r[2].parse::<Verdict>() {
                Ok(verdict) => out.push(ConsistencyJudgment {
                    condition_a: r[0].to_string(),
                    condition_b: r[1].to_string(),
                    verdict,
                    note: r[3].to_string(),
                    author: r[4].to_string(),
                    timestamp: r[5].to_string(),
                }),
                Err(e) => issues.push(RowIssue { line, message: e.to_string() }),
            },
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(Error::Ingestion { issues })
    }
}

pub fn write_judgments_csv<W: Write>(judgments: &[ConsistencyJudgment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ctx = "writing judgments";
    w.write_record(JUDGMENT_HEADER).map_err(|e| Error::csv(ctx, e))?;
    for j in judgments {
        w.write_record([
            &j.condition_a,
            &j.condition_b,
            j.verdict.as_str(),
            &j.note,
            &j.author,
            &j.timestamp,
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io("judgments", e))?;
    Ok(())
}

/// Pair export with values rounded to 4 decimals.
pub fn write_pairs_csv<W: Write>(pairs: &[ScenarioPair], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ctx = "writing pairs";
    w.write_record(["condition_a", "condition_b", "impact", "likelihood", "consistent"])
        .map_err(|e| Error::csv(ctx, e))?;
    for p in pairs {
        w.write_record([
            p.condition_a.clone(),
            p.condition_b.clone(),
            format!("{:.4}", p.impact),
            format!("{:.4}", p.likelihood),
            p.consistent.to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io("pairs", e))?;
    Ok(())
}

/// Combined values for every condition pair of two dimensions, rows from the
/// first dimension and columns from the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGrid {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[r][c]` is `(impact, likelihood)`, `None` when either side is
    /// unassessed.
    pub cells: Vec<Vec<Option<(f64, f64)>>>,
}

pub fn pair_grid(field: &MorphologicalField, scores: &ScoreTable, row_dim: &str, col_dim: &str) -> Result<PairGrid> {
    let lookup = |id: &str| {
        field
            .dimension_index(id)
            .ok_or_else(|| Error::parameter("dimension", format!("unknown dimension `{id}`")))
    };
    let (dr, dc) = (lookup(row_dim)?, lookup(col_dim)?);
    if dr == dc {
        return Err(Error::parameter("dimension", "a pair grid needs two distinct dimensions"));
    }
    let rows: Vec<usize> = field.dimension_range(dr).collect();
    let cols: Vec<usize> = field.dimension_range(dc).collect();
    let cells = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| combine_pair(scores.get(r), scores.get(c)).ok()).collect())
        .collect();
    Ok(PairGrid {
        rows: rows.iter().map(|&i| field.qualified_id(i)).collect(),
        columns: cols.iter().map(|&i| field.qualified_id(i)).collect(),
        cells,
    })
}

impl PairGrid {
    /// CSV with one `impact/likelihood` cell per pair, 2 decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "writing pair grid";
        let mut header = vec![String::new()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv(ctx, e))?;
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![r.clone()];
            rec.extend(row.iter().map(|c| match c {
                Some((i, l)) => format!("{i:.2}/{l:.2}"),
                None => String::new(),
            }));
            w.write_record(&rec).map_err(|e| Error::csv(ctx, e))?;
        }
        w.flush().map_err(|e| Error::io("pair grid", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(i: f64, l: f64) -> ConditionScore {
        ConditionScore {
            impact: Some(i),
            likelihood: Some(l),
            n_impact: 1,
            n_likelihood: 1,
            ..ConditionScore::unassessed("x")
        }
    }

    fn table(field: &MorphologicalField, f: impl Fn(usize) -> Option<(f64, f64)>) -> ScoreTable {
        let scores = (0..field.condition_count())
            .map(|i| match f(i) {
                Some((a, b)) => ConditionScore {
                    condition: field.qualified_id(i),
                    ..scored(a, b)
                },
                None => ConditionScore::unassessed(field.qualified_id(i)),
            })
            .collect();
        ScoreTable::new(field, scores).unwrap()
    }

    #[test]
    fn combine_examples() {
        let agi = scored(0.74, 0.51);
        let competitive = scored(0.50, 0.55);
        let (i, l) = combine_pair(&agi, &competitive).unwrap();
        assert!((i - 0.62).abs() < 5e-5 && (l - 0.53).abs() < 5e-5);
        let (i, l) = combine_pair(&scored(0.40, 0.49), &agi).unwrap();
        assert!((i - 0.57).abs() < 5e-5 && (l - 0.50).abs() < 5e-5);
        assert_eq!(combine_pair(&agi, &agi).unwrap(), (0.74, 0.51));
        let err = combine_pair(&agi, &ConditionScore::unassessed("q")).unwrap_err();
        assert!(matches!(err, Error::Unassessed(ref c) if c == "q"));
    }

    #[test]
    fn generation_counts() {
        let f = MorphologicalField::from_sizes("t", &[4, 4]).unwrap();
        let t = table(&f, |i| Some((i as f64 / 10.0, 0.5)));
        assert_eq!(generate_pairs(&f, &t).unwrap().pairs.len(), 16);
        let f = MorphologicalField::from_sizes("t", &[1, 1]).unwrap();
        let t = table(&f, |_| Some((0.3, 0.3)));
        assert_eq!(generate_pairs(&f, &t).unwrap().pairs.len(), 1);
    }

    #[test]
    fn unscored_conditions_are_skipped() {
        let f = MorphologicalField::from_sizes("t", &[2, 3]).unwrap();
        let t = table(&f, |i| (i != 3).then_some((0.5, 0.5)));
        let g = generate_pairs(&f, &t).unwrap();
        assert_eq!(g.pairs.len(), 4);
        assert_eq!(g.skipped, vec!["d2.c2"]);
    }

    #[test]
    fn judgments_prune_pairs() {
        let f = MorphologicalField::from_sizes("t", &[3, 3, 2]).unwrap();
        let t = table(&f, |_| Some((0.5, 0.5)));
        let mut pairs = generate_pairs(&f, &t).unwrap().pairs;
        let s = apply_judgments(&f, &mut pairs, &[]).unwrap();
        assert_eq!((s.generated, s.survivors), (21, 21));
        let js: Vec<_> = pairs[..10]
            .iter()
            .map(|p| ConsistencyJudgment::new(&p.condition_b, &p.condition_a, Verdict::Inconsistent))
            .collect();
        let s = apply_judgments(&f, &mut pairs, &js).unwrap();
        assert_eq!(s.survivors, 11);
        let mut undo = js.clone();
        undo.push(ConsistencyJudgment::new("d1.c1", "d2.c1", Verdict::Consistent));
        assert_eq!(apply_judgments(&f, &mut pairs, &undo).unwrap().survivors, 12);
    }

    #[test]
    fn judgment_errors() {
        let f = MorphologicalField::from_sizes("t", &[2, 2]).unwrap();
        let t = table(&f, |i| (i != 0).then_some((0.5, 0.5)));
        let mut pairs = generate_pairs(&f, &t).unwrap().pairs;
        let same = ConsistencyJudgment::new("d1.c1", "d1.c2", Verdict::Inconsistent);
        assert!(matches!(apply_judgments(&f, &mut pairs, &[same]), Err(Error::Constraint(_))));
        let missing = ConsistencyJudgment::new("d1.c1", "d9.c2", Verdict::Inconsistent);
        assert!(matches!(apply_judgments(&f, &mut pairs, &[missing]), Err(Error::UnknownPair(..))));
        let unscored = ConsistencyJudgment::new("d1.c1", "d2.c2", Verdict::Inconsistent);
        assert!(matches!(apply_judgments(&f, &mut pairs, std::slice::from_ref(&unscored)), Err(Error::UnknownPair(..))));
        assert_eq!(constraints_from_judgments(&f, &[unscored]).unwrap().len(), 1);
    }

    #[test]
    fn judgments_csv_round_trip() {
        let mut j = ConsistencyJudgment::new("d1.c1", "d2.c1", Verdict::Inconsistent);
        j.note = "cannot co-occur, see notes".into();
        j.author = "ana".into();
        j.timestamp = "2024-01-01T00:00:00Z".into();
        let mut out = Vec::new();
        write_judgments_csv(std::slice::from_ref(&j), &mut out).unwrap();
        assert_eq!(read_judgments_csv(out.as_slice()).unwrap(), vec![j]);
        let bad = "condition_a,condition_b,verdict,note,author,timestamp\na,b,maybe,,,\n";
        assert!(read_judgments_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn pairs_csv_four_decimals() {
        let f = MorphologicalField::from_sizes("t", &[1, 1]).unwrap();
        let t = table(&f, |i| Some(if i == 0 { (0.74, 0.51) } else { (0.5, 0.55) }));
        let mut out = Vec::new();
        write_pairs_csv(&generate_pairs(&f, &t).unwrap().pairs, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1), Some("d1.c1,d2.c1,0.6200,0.5300,true"));
    }

    #[test]
    fn grid_matches_combination() {
        let f = MorphologicalField::from_sizes("t", &[3, 2]).unwrap();
        let t = table(&f, |i| Some((i as f64 * 0.1, 1.0 - i as f64 * 0.1)));
        let g = pair_grid(&f, &t, "d1", "d2").unwrap();
        for (r, row) in g.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                assert_eq!(*cell, Some(combine_pair(t.get(r), t.get(3 + c)).unwrap()));
            }
        }
        assert!(pair_grid(&f, &t, "d1", "d1").is_err());
    }

    mod props {
        use super::*;
        use crate::space::enumerate_configurations;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn combine_symmetric_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0, d in 0.0f64..=1.0) {
                let (x, y) = (scored(a, b), scored(c, d));
                let p = combine_pair(&x, &y).unwrap();
                prop_assert_eq!(p, combine_pair(&y, &x).unwrap());
                prop_assert!(p.0 >= a.min(c) && p.0 <= a.max(c));
                prop_assert!(p.1 >= b.min(d) && p.1 <= b.max(d));
            }

            #[test]
            fn pruned_pairs_never_enumerated(
                sizes in prop::collection::vec(1usize..4, 2..5),
                picks in prop::collection::vec(any::<prop::sample::Index>(), 0..6),
            ) {
                let f = MorphologicalField::from_sizes("t", &sizes).unwrap();
                let t = table(&f, |_| Some((0.5, 0.5)));
                let mut pairs = generate_pairs(&f, &t).unwrap().pairs;
                let js: Vec<_> = picks.iter().map(|ix| {
                    let p = &pairs[ix.index(pairs.len())];
                    ConsistencyJudgment::new(&p.condition_a, &p.condition_b, Verdict::Inconsistent)
                }).collect();
                apply_judgments(&f, &mut pairs, &js).unwrap();
                let cs = constraints_from_judgments(&f, &js).unwrap();
                for cfg in enumerate_configurations(&f, &cs, 0, None).unwrap() {
                    let idx = cfg.flat_indices(&f);
                    for p in pairs.iter().filter(|p| !p.consistent) {
                        prop_assert!(!(idx.contains(&p.a) && idx.contains(&p.b)));
                    }
                }
            }

            #[test]
            fn regeneration_is_identical(sizes in prop::collection::vec(1usize..5, 2..5), seed in 0u32..1000) {
                let f = MorphologicalField::from_sizes("t", &sizes).unwrap();
                let t = table(&f, |i| Some((((i as u32 * 37 + seed) % 101) as f64 / 100.0, 0.25)));
                let dump = |g: PairGeneration| {
                    let mut out = Vec::new();
                    write_pairs_csv(&g.pairs, &mut out).unwrap();
                    out
                };
                prop_assert_eq!(dump(generate_pairs(&f, &t).unwrap()), dump(generate_pairs(&f, &t).unwrap()));
            }
        }
    }
}
