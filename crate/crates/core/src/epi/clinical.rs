use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::params::EpiParams;
use crate::stochastics::{binomial, multinomial};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClinicalOutcomes {
    pub hospitalizations: Vec<u64>,
    pub deaths: Vec<u64>,
}

/// `P(round(G) = d)` for `G ~ Gamma(shape, mean / shape)`, truncated once the tail
/// drops below 1e-12 (the remainder is folded into the last bin).
pub fn discretized_gamma_pmf(mean: f64, shape: f64) -> Vec<f64> {
    if mean <= 0.0 {
        return vec![1.0];
    }
    let scale = mean / shape;
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else { gamma_lr(shape, x / scale) };
    let mut pmf = Vec::new();
    let mut prev = 0.0;
    let mut d = 0usize;
    loop {
        let upper = cdf(d as f64 + 0.5);
        pmf.push((upper - prev).max(0.0));
        prev = upper;
        d += 1;
        if 1.0 - upper < 1e-12 || d > 2000 {
            break;
        }
    }
    let total: f64 = pmf.iter().sum();
    if let Some(last) = pmf.last_mut() {
        *last += 1.0 - total;
    }
    pmf
}

struct WaveKernels {
    hosp: Vec<f64>,
    // Extra days from hospitalization to death for fatal cases.
    hosp_to_death: Vec<f64>,
}

/// Attaches hospitalizations and deaths to a series of symptomatic onsets.
///
/// Each onset on day `t` is hospitalized with the wave's `p_hosp`; each
/// hospitalization is fatal with `p_death_given_hosp`. Hospitalization lands
/// `Gamma(shape, hosp_mean / shape)` days later. A fatal case dies a further
/// `Gamma(shape, (death_mean - hosp_mean) / shape)` days after admission, so the
/// infection-to-death delay has mean `death_mean` and no death precedes its
/// admission. Events past the end of the series are dropped.
pub fn apply_clinical_outcomes<R: Rng + ?Sized>(
    symptomatic: &[u64],
    params: &EpiParams,
    rng: &mut R,
) -> ClinicalOutcomes {
    let horizon = symptomatic.len();
    let mut hosp = vec![0u64; horizon];
    let mut deaths = vec![0u64; horizon];

    let kernels: Vec<WaveKernels> = params
        .clinical_per_wave
        .iter()
        .map(|c| WaveKernels {
            hosp: discretized_gamma_pmf(c.hosp_delay_mean, params.delay_shape),
            hosp_to_death: discretized_gamma_pmf(
                c.death_delay_mean - c.hosp_delay_mean,
                params.delay_shape,
            ),
        })
        .collect();

    let mut hosp_split = Vec::new();
    let mut death_split = Vec::new();
    for (t, &onsets) in symptomatic.iter().enumerate() {
        if onsets == 0 {
            continue;
        }
        let day = t as u32;
        let wave = params.wave_index(day).min(kernels.len() - 1);
        let c = params.clinical_for_day(day);
        let k = &kernels[wave];

        let admitted = binomial(rng, onsets, c.p_hosp);
        if admitted == 0 {
            continue;
        }
        let fatal = binomial(rng, admitted, c.p_death_given_hosp);

        hosp_split.resize(k.hosp.len(), 0);
        multinomial(rng, admitted - fatal, &k.hosp, &mut hosp_split);
        for (d, &n) in hosp_split.iter().enumerate() {
            if let Some(slot) = hosp.get_mut(t + d) {
                *slot += n;
            }
        }

        multinomial(rng, fatal, &k.hosp, &mut hosp_split);
        death_split.resize(k.hosp_to_death.len(), 0);
        for (d, &n) in hosp_split.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let admit_day = t + d;
            if admit_day >= horizon {
                continue;
            }
            hosp[admit_day] += n;
            multinomial(rng, n, &k.hosp_to_death, &mut death_split);
            for (e, &m) in death_split.iter().enumerate() {
                if let Some(slot) = deaths.get_mut(admit_day + e) {
                    *slot += m;
                }
            }
        }
    }
    ClinicalOutcomes {
        hospitalizations: hosp,
        deaths,
    }
}
