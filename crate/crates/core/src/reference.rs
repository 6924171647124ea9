//! Published reference results for the bundled study, transcribed for
//! comparison with computed output. Nothing here feeds a computation.

/// Scenario names, lowest to highest impact.
pub const SCENARIO_NAMES: [&str; 4] = [
    "Balancing Act",
    "Accelerating Change",
    "Shadow Intelligent Networks",
    "Emergence",
];

/// Published scorecard: qualified condition ids assigned to each scenario,
/// lowest impact first. One scenario lists a condition twice and omits
/// corporate governance, so it has one fewer entry.
pub const SCORECARD: [&[&str]; 4] = [
    &[
        "capability.low",
        "diffusion.decentralized",
        "corporate-governance.safety-decrease",
        "race-dynamics.isolation",
        "technical-risk.goal-alignment",
        "transition.slow-takeoff",
        "paradigm.new",
        "timeline.over-40",
        "dominant-risk.misuse",
        "actor.individual",
        "region.other",
        "ai-safety.scale-invariant",
        "international-governance.weak",
        "accelerant.insight",
        "superintelligence.internet",
    ],
    &[
        "capability.moderate",
        "diffusion.multipolar",
        "transition.moderate-takeoff",
        "paradigm.hybrid",
        "accelerant.embodiment",
        "timeline.over-40",
        "race-dynamics.cooperation",
        "dominant-risk.structural",
        "technical-risk.inner-alignment",
        "actor.coalition",
        "region.us-eu",
        "ai-safety.scale-invariant",
        "international-governance.strong",
        "corporate-governance.safety-ideal",
        "superintelligence.networks",
    ],
    &[
        "capability.ai-ecology",
        "diffusion.multipolar",
        "transition.competitive-takeoff",
        "paradigm.hybrid",
        "accelerant.insight",
        "timeline.from-20-to-40",
        "dominant-risk.failure",
        "technical-risk.goal-alignment",
        "actor.country",
        "region.us-eu",
        "ai-safety.new-approach",
        "international-governance.strong",
        "corporate-governance.safety-decrease",
        "race-dynamics.monopolization",
        "superintelligence.networks",
    ],
    &[
        "timeline.under-20",
        "ai-safety.custom-approach",
        "transition.fast-takeoff",
        "paradigm.current",
        "actor.institution",
        "capability.agi",
        "diffusion.centralized",
        "dominant-risk.failure",
        "accelerant.overhang",
        "region.asia-pacific",
        "race-dynamics.arms-race",
        "international-governance.weak",
        "technical-risk.influence-seeking",
        "superintelligence.narrow-convergence",
    ],
];

/// One published per-scenario table: the listed `(impact, likelihood)` rows
/// and the printed average row.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioTable {
    pub name: &'static str,
    pub rows: [(f64, f64); 14],
    pub printed_average: (f64, f64),
}

impl ScenarioTable {
    /// Arithmetic mean of the listed rows.
    pub fn recomputed_average(&self) -> (f64, f64) {
        let n = self.rows.len() as f64;
        let (si, sl) = self.rows.iter().fold((0.0, 0.0), |(a, b), r| (a + r.0, b + r.1));
        (si / n, sl / n)
    }

    /// Printed minus recomputed, per axis.
    pub fn delta(&self) -> (f64, f64) {
        let (ri, rl) = self.recomputed_average();
        (self.printed_average.0 - ri, self.printed_average.1 - rl)
    }
}

pub const SCENARIO_TABLES: [ScenarioTable; 4] = [
    ScenarioTable {
        name: SCENARIO_NAMES[0],
        rows: [
            (0.41, 0.27),
            (0.40, 0.49),
            (0.20, 0.33),
            (0.34, 0.60),
            (0.30, 0.71),
            (0.34, 0.43),
            (0.60, 0.49),
            (0.71, 0.62),
            (0.56, 0.57),
            (0.76, 0.53),
            (0.56, 0.31),
            (0.53, 0.27),
            (0.73, 0.44),
            (0.79, 0.39),
        ],
        printed_average: (0.535, 0.474),
    },
    ScenarioTable {
        name: SCENARIO_NAMES[1],
        rows: [
            (0.47, 0.62),
            (0.40, 0.49),
            (0.60, 0.55),
            (0.42, 0.72),
            (0.47, 0.54),
            (0.59, 0.66),
            (0.13, 0.37),
            (0.58, 0.61),
            (0.56, 0.57),
            (0.34, 0.42),
            (0.15, 0.38),
            (0.20, 0.78),
            (0.15, 0.43),
            (0.12, 0.49),
        ],
        printed_average: (0.37, 0.545),
    },
    ScenarioTable {
        name: SCENARIO_NAMES[2],
        rows: [
            (0.32, 0.66),
            (0.56, 0.66),
            (0.50, 0.55),
            (0.34, 0.60),
            (0.30, 0.71),
            (0.59, 0.66),
            (0.71, 0.63),
            (0.70, 0.74),
            (0.56, 0.57),
            (0.55, 0.69),
            (0.39, 0.60),
            (0.20, 0.78),
            (0.34, 0.49),
            (0.29, 0.54),
        ],
        printed_average: (0.463, 0.634),
    },
    ScenarioTable {
        name: SCENARIO_NAMES[3],
        rows: [
            (0.74, 0.51),
            (0.75, 0.38),
            (0.88, 0.45),
            (0.76, 0.50),
            (0.71, 0.56),
            (0.78, 0.42),
            (0.86, 0.67),
            (0.71, 0.62),
            (0.84, 0.65),
            (0.76, 0.53),
            (0.77, 0.70),
            (0.66, 0.54),
            (0.73, 0.44),
            (0.79, 0.39),
        ],
        printed_average: (0.767, 0.525),
    },
];

/// Published cross-dimension pair total for the study.
pub const PAIR_COUNT: u64 = 1120;

/// Published configuration count for the 14-dimension field.
pub const CONFIGURATION_COUNT: u64 = 15_116_544;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::bundled_field_with_superintelligence;

    #[test]
    fn scorecard_ids_resolve() {
        let f = bundled_field_with_superintelligence();
        for list in SCORECARD {
            for id in list {
                assert!(f.resolve(id).is_some(), "{id}");
            }
        }
    }

    #[test]
    fn first_table_recomputed_mean() {
        let (i, l) = SCENARIO_TABLES[0].recomputed_average();
        assert!((i - 0.516).abs() < 5e-4 && (l - 0.461).abs() < 5e-4);
        let (di, dl) = SCENARIO_TABLES[0].delta();
        assert!(di > 0.01 && dl > 0.01);
    }
}
