use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::*;
use crate::error::{Error, Result};
use crate::stochastics::{normal, uniform};

pub const VARIANCE_BINS: usize = 40;
pub const FAILED_YIELD: (f64, f64) = (0.001, 0.04);
pub const YIELD_CLIP: (f64, f64) = (0.001, 0.999);

/// Category pairs that get interaction terms.
pub const PAIR_TERMS: [[usize; 2]; 4] = [[HALIDE, LIGAND], [BORONATE, BASE], [LIGAND, BASE], [BASE, SOLVENT]];
/// Three-way terms for mechanistic phases: oxidative addition and
/// transmetalation.
pub const THREEWAY_TERMS: [[usize; 3]; 2] = [[HALIDE, LIGAND, SOLVENT], [BORONATE, BASE, SOLVENT]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainEffects {
    pub global_mean: f64,
    /// `effects[component][category]`.
    pub effects: [Vec<f64>; 5],
    pub counts: [Vec<usize>; 5],
}

impl MainEffects {
    pub fn additive(&self, idx: &Encoded) -> f64 {
        self.global_mean + (0..5).map(|c| self.effects[c][idx[c] as usize]).sum::<f64>()
    }
}

/// Grand mean and per-category deviations of the group means from it.
/// Categories with no rows get a zero effect.
pub fn fit_effects(data: &EncodedData, vocab: &Vocabulary) -> Result<MainEffects> {
    if data.is_empty() {
        return Err(Error::Fit("cannot fit main effects on an empty dataset".into()));
    }
    let global_mean = data.y.iter().sum::<f64>() / data.len() as f64;
    let mut sums: [Vec<f64>; 5] = std::array::from_fn(|c| vec![0.0; vocab.len(c)]);
    let mut counts: [Vec<usize>; 5] = std::array::from_fn(|c| vec![0; vocab.len(c)]);
    for (idx, &y) in data.idx.iter().zip(&data.y) {
        for c in 0..5 {
            sums[c][idx[c] as usize] += y;
            counts[c][idx[c] as usize] += 1;
        }
    }
    let effects = std::array::from_fn(|c| {
        sums[c]
            .iter()
            .zip(&counts[c])
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 - global_mean })
            .collect()
    });
    Ok(MainEffects {
        global_mean,
        effects,
        counts,
    })
}

/// One interaction table over a fixed set of components, keyed by the packed
/// category indices of those components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    pub components: Vec<usize>,
    pub deltas: BTreeMap<u64, f64>,
}

impl InteractionTable {
    fn key(&self, idx: &Encoded) -> u64 {
        self.components.iter().fold(0u64, |acc, &c| (acc << 16) | idx[c] as u64)
    }

    pub fn get(&self, idx: &Encoded) -> f64 {
        self.deltas.get(&self.key(idx)).copied().unwrap_or(0.0)
    }

    fn fit(components: &[usize], data: &EncodedData, residual: &[f64], min_support: usize) -> Self {
        let mut table = InteractionTable {
            components: components.to_vec(),
            deltas: BTreeMap::new(),
        };
        let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for (idx, &r) in data.idx.iter().zip(residual) {
            let e = acc.entry(table.key(idx)).or_default();
            e.0 += r;
            e.1 += 1;
        }
        table.deltas = acc
            .into_iter()
            .filter(|(_, (_, n))| *n >= min_support)
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect();
        table
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interactions {
    pub min_support: usize,
    pub pairs: Vec<InteractionTable>,
    pub threeway: Vec<InteractionTable>,
}

impl Interactions {
    pub fn pair_sum(&self, idx: &Encoded) -> f64 {
        self.pairs.iter().map(|t| t.get(idx)).sum()
    }

    pub fn threeway_sum(&self, idx: &Encoded) -> f64 {
        self.threeway.iter().map(|t| t.get(idx)).sum()
    }
}

/// Pair terms are mean residuals after the main effects; three-way terms are
/// mean residuals after main effects and all pair terms. Combinations seen
/// fewer than `min_support` times are left out.
pub fn fit_interactions(data: &EncodedData, main: &MainEffects, min_support: usize) -> Result<Interactions> {
    if min_support == 0 {
        return Err(Error::Parameter("min_support must be at least 1".into()));
    }
    let residual: Vec<f64> = data.idx.iter().zip(&data.y).map(|(idx, y)| y - main.additive(idx)).collect();
    let pairs: Vec<_> = PAIR_TERMS
        .iter()
        .map(|c| InteractionTable::fit(c, data, &residual, min_support))
        .collect();
    let residual2: Vec<f64> = data
        .idx
        .iter()
        .zip(&residual)
        .map(|(idx, r)| r - pairs.iter().map(|t| t.get(idx)).sum::<f64>())
        .collect();
    let threeway = THREEWAY_TERMS
        .iter()
        .map(|c| InteractionTable::fit(c, data, &residual2, min_support))
        .collect();
    Ok(Interactions {
        min_support,
        pairs,
        threeway,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorizedStats {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

/// Expert failure rules. Category membership lists are data; a rule fires when
/// the tuple's categories fall in both of its lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureConfig {
    pub empirical_weight: f64,
    pub strong_base_weak_ligand_boost: f64,
    pub trifluoroborate_weak_base_boost: f64,
    pub chloride_low_activity_boost: f64,
    pub ceiling: f64,
    pub strong_bases: Vec<String>,
    pub weak_ligands: Vec<String>,
    pub weak_bases: Vec<String>,
    pub trifluoroborates: Vec<String>,
    pub aryl_chlorides: Vec<String>,
    pub low_activity_ligands: Vec<String>,
}

fn owned(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for FailureConfig {
    fn default() -> Self {
        FailureConfig {
            empirical_weight: 0.6,
            strong_base_weak_ligand_boost: 0.35,
            trifluoroborate_weak_base_boost: 0.30,
            chloride_low_activity_boost: 0.25,
            ceiling: 0.95,
            strong_bases: owned(&["NaOtBu", "KOtBu", "LiOtBu", "KOH", "NaOH", "CsOH"]),
            weak_ligands: owned(&["PPh3", "P(o-Tol)3", "None"]),
            weak_bases: owned(&["NaHCO3", "KHCO3", "Et3N", "None"]),
            trifluoroborates: owned(&["BF3K", "ArBF3K"]),
            aryl_chlorides: owned(&["ArCl", "6-chloroquinoline"]),
            low_activity_ligands: owned(&["PPh3", "P(o-Tol)3", "dppf", "None"]),
        }
    }
}

impl FailureConfig {
    /// Summed boosts of the rules the tuple triggers.
    pub fn heuristic_boost(&self, t: &ReactionTuple) -> f64 {
        let has = |list: &[String], v: &str| list.iter().any(|x| x == v);
        let mut boost = 0.0;
        if has(&self.strong_bases, &t.base) && has(&self.weak_ligands, &t.ligand) {
            boost += self.strong_base_weak_ligand_boost;
        }
        if has(&self.trifluoroborates, &t.boronate) && has(&self.weak_bases, &t.base) {
            boost += self.trifluoroborate_weak_base_boost;
        }
        if has(&self.aryl_chlorides, &t.aryl_halide) && has(&self.low_activity_ligands, &t.ligand) {
            boost += self.chloride_low_activity_boost;
        }
        boost
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    /// Fraction of rows with each category whose yield fell below the failure
    /// threshold.
    pub component_rates: [Vec<f64>; 5],
    pub config: FailureConfig,
}

impl FailureModel {
    pub fn fit(data: &EncodedData, vocab: &Vocabulary, config: FailureConfig) -> Self {
        let mut fails: [Vec<usize>; 5] = std::array::from_fn(|c| vec![0; vocab.len(c)]);
        let mut counts: [Vec<usize>; 5] = std::array::from_fn(|c| vec![0; vocab.len(c)]);
        for (idx, &y) in data.idx.iter().zip(&data.y) {
            for c in 0..5 {
                counts[c][idx[c] as usize] += 1;
                fails[c][idx[c] as usize] += usize::from(y < FAILURE_THRESHOLD);
            }
        }
        let component_rates = std::array::from_fn(|c| {
            fails[c]
                .iter()
                .zip(&counts[c])
                .map(|(&f, &n)| if n == 0 { 0.0 } else { f as f64 / n as f64 })
                .collect()
        });
        FailureModel { component_rates, config }
    }

    pub fn probability(&self, idx: &Encoded, tuple: &ReactionTuple) -> f64 {
        let mean_rate = (0..5).map(|c| self.component_rates[c][idx[c] as usize]).sum::<f64>() / 5.0;
        (self.config.empirical_weight * mean_rate + self.config.heuristic_boost(tuple)).clamp(0.0, self.config.ceiling)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean prediction of the rows in the bin; lookups go to the nearest center.
    pub center: f64,
    pub variance: f64,
    pub count: usize,
}

/// Sorts rows by `predicted`, cuts them into `VARIANCE_BINS` equal-count bins
/// (sizes differ by at most one) and stores the residual variance of each.
/// Edges are midpoints between neighbouring bins, with the outer edges at 0
/// and 1.
pub fn fit_variance_bins(predicted: &[f64], observed: &[f64]) -> Result<Vec<VarianceBin>> {
    let n = predicted.len();
    if n < VARIANCE_BINS || observed.len() != n {
        return Err(Error::Fit(format!("variance bins need at least {VARIANCE_BINS} rows, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]).then(a.cmp(&b)));
    let mut bins: Vec<VarianceBin> = Vec::with_capacity(VARIANCE_BINS);
    for b in 0..VARIANCE_BINS {
        let members = &order[b * n / VARIANCE_BINS..(b + 1) * n / VARIANCE_BINS];
        let m = members.len() as f64;
        let center = members.iter().map(|&i| predicted[i]).sum::<f64>() / m;
        let resid: Vec<f64> = members.iter().map(|&i| observed[i] - predicted[i]).collect();
        let mean_r = resid.iter().sum::<f64>() / m;
        let variance = resid.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / m;
        bins.push(VarianceBin {
            lower: predicted[members[0]],
            upper: predicted[*members.last().unwrap()],
            center,
            variance,
            count: members.len(),
        });
    }
    for b in 1..VARIANCE_BINS {
        let edge = 0.5 * (bins[b - 1].upper + bins[b].lower);
        bins[b - 1].upper = edge;
        bins[b].lower = edge;
    }
    bins[0].lower = 0.0;
    bins[VARIANCE_BINS - 1].upper = 1.0;
    Ok(bins)
}

pub fn lookup_variance(bins: &[VarianceBin], prediction: f64) -> f64 {
    bins.iter()
        .min_by(|a, b| (a.center - prediction).abs().total_cmp(&(b.center - prediction).abs()))
        .map_or(0.0, |b| b.variance)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target_mean: f64,
    pub target_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChemFitConfig {
    pub min_support: usize,
    /// Fraction of rows used for fitting; the rest is held out.
    pub analysis_fraction: f64,
    pub split_seed: u64,
    pub failure: FailureConfig,
}

impl Default for ChemFitConfig {
    fn default() -> Self {
        ChemFitConfig {
            min_support: 3,
            analysis_fraction: 0.75,
            split_seed: 0,
            failure: FailureConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemYieldModel {
    pub vocab: Vocabulary,
    pub main: MainEffects,
    pub interactions: Interactions,
    pub memorized: BTreeMap<u64, MemorizedStats>,
    pub failure: FailureModel,
    pub variance_bins: Vec<VarianceBin>,
    pub calibration: Calibration,
}

/// Deterministic analysis/evaluation split. Returns `(analysis, evaluation)`.
pub fn split_dataset(data: &ChemDataset, analysis_fraction: f64, seed: u64) -> (ChemDataset, ChemDataset) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut crate::stochastics::substream(seed, 0x5911_7000));
    let cut = ((data.len() as f64) * analysis_fraction).round() as usize;
    let pick = |ids: &[usize]| ChemDataset {
        rows: ids.iter().map(|&i| data.rows[i].clone()).collect(),
    };
    (pick(&order[..cut]), pick(&order[cut..]))
}

impl ChemYieldModel {
    /// Fits every stage on the analysis split of `data`. The vocabulary covers
    /// the full table so held-out categories remain addressable.
    pub fn fit(data: &ChemDataset, config: &ChemFitConfig) -> Result<Self> {
        let vocab = Vocabulary::from_tuples(data.rows.iter().map(|r| &r.tuple))?;
        let (analysis, _) = split_dataset(data, config.analysis_fraction, config.split_seed);
        Self::fit_with_vocab(&analysis, vocab, config)
    }

    pub fn fit_with_vocab(data: &ChemDataset, vocab: Vocabulary, config: &ChemFitConfig) -> Result<Self> {
        let enc = EncodedData::new(data, &vocab)?;
        let main = fit_effects(&enc, &vocab)?;
        let interactions = fit_interactions(&enc, &main, config.min_support)?;

        let mut acc: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (idx, &y) in enc.idx.iter().zip(&enc.y) {
            acc.entry(pack(idx)).or_default().push(y);
        }
        let memorized = acc
            .into_iter()
            .map(|(k, ys)| {
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let variance = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
                (
                    k,
                    MemorizedStats {
                        mean,
                        variance,
                        count: ys.len(),
                    },
                )
            })
            .collect();

        let failure = FailureModel::fit(&enc, &vocab, config.failure.clone());
        let mut model = ChemYieldModel {
            vocab,
            main,
            interactions,
            memorized,
            failure,
            variance_bins: Vec::new(),
            calibration: Calibration {
                target_mean: 0.0,
                target_std: 0.0,
            },
        };
        // Noise model for successful reactions only; failures are drawn separately.
        let (structured, succeeded): (Vec<f64>, Vec<f64>) = enc
            .idx
            .iter()
            .zip(&enc.y)
            .filter(|(_, &y)| y >= FAILURE_THRESHOLD)
            .map(|(idx, &y)| (model.structured_prediction(idx), y))
            .unzip();
        model.variance_bins = fit_variance_bins(&structured, &succeeded)?;
        let n = enc.len() as f64;
        let mean = enc.y.iter().sum::<f64>() / n;
        let std = (enc.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        model.calibration = Calibration {
            target_mean: mean,
            target_std: std,
        };
        Ok(model)
    }

    /// Additive prediction with interaction terms, ignoring memorization,
    /// clipped to `[0, 1]`.
    pub fn structured_prediction(&self, idx: &Encoded) -> f64 {
        (self.main.additive(idx) + self.interactions.pair_sum(idx) + self.interactions.threeway_sum(idx)).clamp(0.0, 1.0)
    }

    fn predict_encoded(&self, idx: &Encoded) -> f64 {
        match self.memorized.get(&pack(idx)) {
            Some(m) => m.mean,
            None => self.structured_prediction(idx),
        }
    }

    pub fn is_memorized(&self, t: &ReactionTuple) -> Result<bool> {
        Ok(self.memorized.contains_key(&pack(&self.vocab.encode(t)?)))
    }
}

/// Stored empirical mean for memorized tuples, otherwise the structured
/// prediction.
pub fn predict_base_yield(t: &ReactionTuple, m: &ChemYieldModel) -> Result<f64> {
    Ok(m.predict_encoded(&m.vocab.encode(t)?))
}

pub fn failure_probability(t: &ReactionTuple, m: &ChemYieldModel) -> Result<f64> {
    Ok(m.failure.probability(&m.vocab.encode(t)?, t))
}

/// Failed reactions draw from `U(0.001, 0.04)`; others from a Gaussian around
/// the base prediction with the nearest bin's variance. Clipped to
/// `[0.001, 0.999]`.
pub fn sample_reaction_yield<R: Rng + ?Sized>(t: &ReactionTuple, m: &ChemYieldModel, rng: &mut R) -> Result<f64> {
    let idx = m.vocab.encode(t)?;
    Ok(sample_encoded(&idx, t, m, rng).0)
}

fn sample_encoded<R: Rng + ?Sized>(idx: &Encoded, t: &ReactionTuple, m: &ChemYieldModel, rng: &mut R) -> (f64, bool) {
    let p_fail = m.failure.probability(idx, t);
    let failed = rng.random::<f64>() < p_fail;
    let y = if failed {
        uniform(rng, FAILED_YIELD.0, FAILED_YIELD.1)
    } else {
        let mean = m.predict_encoded(idx);
        normal(rng, mean, lookup_variance(&m.variance_bins, mean).sqrt())
    };
    (y.clamp(YIELD_CLIP.0, YIELD_CLIP.1), failed)
}

pub const STRATUM_PROBS: [(Stratum, f64); 3] = [
    (Stratum::Memorized, 0.60),
    (Stratum::Partial, 0.30),
    (Stratum::Uniform, 0.10),
];

/// One synthetic row before calibration.
#[derive(Clone, Debug)]
pub struct RawDraw {
    pub row: ChemRow,
    /// Drawn from the failure branch.
    pub failed: bool,
}

/// Draws one synthetic row (before calibration) from its own stream.
pub fn sample_corpus_row<R: Rng + ?Sized>(m: &ChemYieldModel, pools: &SamplingPools, rng: &mut R) -> RawDraw {
    let u: f64 = rng.random();
    let stratum = if u < STRATUM_PROBS[0].1 {
        Stratum::Memorized
    } else if u < STRATUM_PROBS[0].1 + STRATUM_PROBS[1].1 {
        Stratum::Partial
    } else {
        Stratum::Uniform
    };
    let idx: Encoded = match stratum {
        Stratum::Memorized => unpack(pools.memorized[rng.random_range(0..pools.memorized.len())]),
        Stratum::Partial => {
            let mut idx = unpack(pools.high_yield[rng.random_range(0..pools.high_yield.len())]);
            let c = if rng.random::<bool>() { BASE } else { SOLVENT };
            let k = m.vocab.len(c);
            if k > 1 {
                // A different category from the one in the source tuple.
                let shift = rng.random_range(1..k) as u16;
                idx[c] = (idx[c] + shift) % k as u16;
            }
            idx
        }
        Stratum::Uniform => std::array::from_fn(|c| rng.random_range(0..m.vocab.len(c)) as u16),
    };
    let tuple = m.vocab.decode(&idx);
    let (y, failed) = sample_encoded(&idx, &tuple, m, rng);
    RawDraw {
        row: ChemRow {
            tuple,
            yield_value: y,
            stratum: Some(stratum),
        },
        failed,
    }
}

/// Tuple pools the strata draw from.
#[derive(Clone, Debug)]
pub struct SamplingPools {
    pub memorized: Vec<u64>,
    /// Memorized tuples at or above the 75th percentile of memorized means.
    pub high_yield: Vec<u64>,
}

impl SamplingPools {
    pub fn new(m: &ChemYieldModel) -> Result<Self> {
        if m.memorized.is_empty() {
            return Err(Error::Fit("model has no memorized tuples".into()));
        }
        let memorized: Vec<u64> = m.memorized.keys().copied().collect();
        let mut means: Vec<f64> = m.memorized.values().map(|s| s.mean).collect();
        means.sort_by(f64::total_cmp);
        let q75 = means[((means.len() - 1) as f64 * 0.75).round() as usize];
        let high_yield = m.memorized.iter().filter(|(_, s)| s.mean >= q75).map(|(&k, _)| k).collect();
        Ok(SamplingPools { memorized, high_yield })
    }
}

/// Affine z-score map onto the target mean and standard deviation, followed by
/// clipping to the physical interval. Returns the affine map `(scale, shift)`.
pub fn calibrate(yields: &mut [f64], target: &Calibration) -> (f64, f64) {
    let n = yields.len() as f64;
    if yields.is_empty() {
        return (1.0, 0.0);
    }
    let mean = yields.iter().sum::<f64>() / n;
    let std = (yields.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { target.target_std / std } else { 1.0 };
    let shift = target.target_mean - scale * mean;
    for y in yields.iter_mut() {
        *y = (scale * *y + shift).clamp(YIELD_CLIP.0, YIELD_CLIP.1);
    }
    (scale, shift)
}

/// Moments the successful draws need so that, together with the fixed failure
/// yields, the whole corpus has the target mean and standard deviation.
pub fn success_targets(failure_yields: &[f64], successes: usize, target: &Calibration) -> Calibration {
    let n = (failure_yields.len() + successes) as f64;
    let ns = successes as f64;
    let f_sum: f64 = failure_yields.iter().sum();
    let f_sq: f64 = failure_yields.iter().map(|y| y * y).sum();
    let mean = (target.target_mean * n - f_sum) / ns;
    let second = (target.target_std.powi(2) + target.target_mean.powi(2)) * n - f_sq;
    Calibration {
        target_mean: mean,
        target_std: (second / ns - mean * mean).max(0.0).sqrt(),
    }
}

/// Synthetic corpus: rows drawn per stratum from per-row streams
/// `stream(row)`, then calibrated. Failure yields keep their
/// `U(0.001, 0.04)` values; successful yields get the affine map that brings
/// the whole corpus to the model's target moments.
pub fn generate_chem_corpus<R, F>(m: &ChemYieldModel, n: usize, mut stream: F) -> Result<ChemDataset>
where
    R: Rng,
    F: FnMut(u64) -> R,
{
    let pools = SamplingPools::new(m)?;
    let draws: Vec<RawDraw> = (0..n).map(|i| sample_corpus_row(m, &pools, &mut stream(i as u64))).collect();
    Ok(calibrate_draws(draws, &m.calibration))
}

pub fn calibrate_draws(draws: Vec<RawDraw>, target: &Calibration) -> ChemDataset {
    let failure_yields: Vec<f64> = draws.iter().filter(|d| d.failed).map(|d| d.row.yield_value).collect();
    let mut ok: Vec<f64> = draws.iter().filter(|d| !d.failed).map(|d| d.row.yield_value).collect();
    let goal = success_targets(&failure_yields, ok.len(), target);
    calibrate(&mut ok, &goal);
    let mut ok = ok.into_iter();
    let rows = draws
        .into_iter()
        .map(|mut d| {
            if !d.failed {
                d.row.yield_value = ok.next().expect("one calibrated value per success");
            }
            d.row
        })
        .collect();
    ChemDataset { rows }
}
