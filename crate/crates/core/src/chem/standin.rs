//! Synthetic stand-in for the empirical reaction table, used when the real
//! screen is not available. Full factorial over 5 aryl halides, 3 boron
//! reagents, 12 ligands, 8 bases and 4 solvents (5760 reactions), with planted
//! main effects, pair interactions, rule-driven failures and heteroscedastic
//! noise. Yields of successful reactions are affinely adjusted so the table
//! has mean 0.62 and standard deviation 0.28; about 3.6% of reactions fail.
//! With the default failure rules, a corpus generated from a model fitted to
//! this table fails about 9% of the time.

use rand::Rng;

use super::data::{ChemDataset, ChemRow, ReactionTuple, FAILURE_THRESHOLD};
use super::model::{FailureConfig, FAILED_YIELD};
use crate::stochastics::{normal, substream, uniform};

pub const HALIDES: [(&str, f64); 5] = [
    ("6-iodoquinoline", 0.08),
    ("6-bromoquinoline", 0.05),
    ("6-quinolinyl triflate", 0.0),
    ("6-quinolinyl nonaflate", -0.02),
    ("6-chloroquinoline", -0.12),
];
pub const BORONATES: [(&str, f64); 3] = [("boronic acid", 0.03), ("pinacol boronate", 0.0), ("BF3K", -0.04)];
pub const LIGANDS: [(&str, f64); 12] = [
    ("XPhos", 0.10),
    ("SPhos", 0.09),
    ("P(tBu)3", 0.07),
    ("CataCXium A", 0.06),
    ("AmPhos", 0.05),
    ("dtbpf", 0.04),
    ("PCy3", 0.03),
    ("Xantphos", 0.0),
    ("dppf", -0.03),
    ("P(o-Tol)3", -0.08),
    ("PPh3", -0.10),
    ("None", -0.20),
];
pub const BASES: [(&str, f64); 8] = [
    ("K3PO4", 0.06),
    ("CsF", 0.04),
    ("NaOH", 0.02),
    ("KOH", 0.02),
    ("LiOtBu", -0.02),
    ("NaHCO3", -0.03),
    ("Et3N", -0.06),
    ("None", -0.15),
];
pub const SOLVENTS: [(&str, f64); 4] = [("THF", 0.03), ("MeCN", 0.0), ("DMF", -0.01), ("MeOH", -0.02)];

pub const TARGET_MEAN: f64 = 0.62;
pub const TARGET_STD: f64 = 0.28;

/// Knobs of the stand-in table.
#[derive(Clone, Debug)]
pub struct StandinConfig {
    pub seed: u64,
    /// Failure probability of every reaction before rules.
    pub base_failure: f64,
    /// Multiplier on the default rule boosts.
    pub rule_scale: f64,
    pub pair_sd: f64,
}

impl Default for StandinConfig {
    fn default() -> Self {
        StandinConfig {
            seed: 5760,
            base_failure: 0.01,
            rule_scale: 0.3,
            pair_sd: 0.04,
        }
    }
}

pub fn standin_dataset(config: &StandinConfig) -> ChemDataset {
    let mut rng = substream(config.seed, 0x57a4_d100);
    let rules = FailureConfig::default();
    let hl: Vec<f64> = (0..HALIDES.len() * LIGANDS.len())
        .map(|_| normal(&mut rng, 0.0, config.pair_sd))
        .collect();
    let bs: Vec<f64> = (0..BASES.len() * SOLVENTS.len())
        .map(|_| normal(&mut rng, 0.0, config.pair_sd))
        .collect();

    let mut rows = Vec::with_capacity(5760);
    let mut failed = Vec::with_capacity(5760);
    for (h, (hn, he)) in HALIDES.iter().enumerate() {
        for (bn, be) in BORONATES.iter() {
            for (l, (ln, le)) in LIGANDS.iter().enumerate() {
                for (b, (basen, basee)) in BASES.iter().enumerate() {
                    for (s, (sn, se)) in SOLVENTS.iter().enumerate() {
                        let tuple = ReactionTuple::new([hn, bn, ln, basen, sn]);
                        let p_fail = config.base_failure + config.rule_scale * rules.heuristic_boost(&tuple);
                        let fail = rng.random::<f64>() < p_fail;
                        let y = if fail {
                            uniform(&mut rng, FAILED_YIELD.0, FAILED_YIELD.1)
                        } else {
                            let mean = 0.5
                                + he
                                + be
                                + le
                                + basee
                                + se
                                + hl[h * LIGANDS.len() + l]
                                + bs[b * SOLVENTS.len() + s];
                            let sd = 0.04 + 0.3 * mean.clamp(0.0, 1.0) * (1.0 - mean.clamp(0.0, 1.0));
                            normal(&mut rng, mean, sd)
                        };
                        failed.push(fail);
                        rows.push(ChemRow {
                            tuple,
                            yield_value: y,
                            stratum: None,
                        });
                    }
                }
            }
        }
    }
    match_moments(&mut rows, &failed);
    ChemDataset { rows }
}

/// Affinely rescales successful yields (clipped to `[0.05, 1]`) so the whole
/// table reaches the target moments; a few passes absorb the clipping.
fn match_moments(rows: &mut [ChemRow], failed: &[bool]) {
    for _ in 0..20 {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.yield_value).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.yield_value - mean).powi(2)).sum::<f64>() / n;
        let ok: Vec<f64> = rows.iter().zip(failed).filter(|(_, &f)| !f).map(|(r, _)| r.yield_value).collect();
        let ns = ok.len() as f64;
        let fail_sum = rows.iter().zip(failed).filter(|(_, &f)| f).map(|(r, _)| r.yield_value).sum::<f64>();
        let fail_sq = rows.iter().zip(failed).filter(|(_, &f)| f).map(|(r, _)| r.yield_value.powi(2)).sum::<f64>();
        if (mean - TARGET_MEAN).abs() < 1e-9 && (var.sqrt() - TARGET_STD).abs() < 1e-9 {
            break;
        }
        // Success-part moments that give the target whole-table moments.
        let ms_target = (TARGET_MEAN * n - fail_sum) / ns;
        let second = (TARGET_STD.powi(2) + TARGET_MEAN.powi(2)) * n - fail_sq;
        let vs_target = (second / ns - ms_target.powi(2)).max(1e-6);
        let ms = ok.iter().sum::<f64>() / ns;
        let vs = ok.iter().map(|y| (y - ms).powi(2)).sum::<f64>() / ns;
        let scale = (vs_target / vs).sqrt();
        for (r, &f) in rows.iter_mut().zip(failed) {
            if !f {
                r.yield_value = (ms_target + scale * (r.yield_value - ms)).clamp(FAILURE_THRESHOLD, 1.0);
            }
        }
    }
}
