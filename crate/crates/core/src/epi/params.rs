use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::{bernoulli, log_uniform, uniform, uniform_int};

/// Supports of the sampled epidemic parameters.
pub mod ranges {
    pub const POPULATION: (f64, f64) = (5e4, 5e7);
    pub const BETA: (f64, f64) = (0.10, 1.00);
    pub const GAMMA: (f64, f64) = (0.10, 0.33);
    pub const SIGMA: (f64, f64) = (0.20, 0.40);
    pub const OMEGA: (f64, f64) = (0.001, 0.0075);
    pub const MU: (f64, f64) = (0.0, 1.0 / 365.0);
    pub const P_ASYMPTOMATIC: (f64, f64) = (0.10, 0.70);
    pub const ALPHA: (f64, f64) = (0.30, 1.00);
    pub const DISPERSION_K: (f64, f64) = (0.10, 1.00);
    pub const SEASONAL_AMPLITUDE: (f64, f64) = (0.05, 0.20);
    pub const SEASONAL_HARMONICS: (u32, u32) = (1, 4);
    pub const IMPORTATION_RATE: (f64, f64) = (1e-4, 1e-2);
    pub const P_HOSP: (f64, f64) = (0.02, 0.15);
    pub const P_DEATH_GIVEN_HOSP: (f64, f64) = (0.05, 0.30);
    pub const HOSP_DELAY_MEAN: (f64, f64) = (5.0, 12.0);
    pub const DEATH_DELAY_MEAN: (f64, f64) = (14.0, 21.0);
    pub const NPI_TRIGGER_FRAC: (f64, f64) = (0.001, 0.01);
    pub const NPI_RELAX_FRAC: (f64, f64) = (0.0002, 0.002);
    pub const NPI_REDUCTION: (f64, f64) = (0.20, 0.60);
    pub const NPI_MIN_DURATION: (u32, u32) = (14, 120);
    pub const WAVES: (u32, u32) = (1, 5);

    pub fn contains(range: (f64, f64), x: f64) -> bool {
        x >= range.0 && x <= range.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaWave {
    pub start_day: u32,
    pub beta: f64,
}

/// One seasonal harmonic `amplitude * sin(2 pi harmonic t / 365 + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub harmonic: u32,
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalWave {
    pub p_hosp: f64,
    pub p_death_given_hosp: f64,
    pub hosp_delay_mean: f64,
    pub death_delay_mean: f64,
}

/// Threshold-triggered transmission reduction. Thresholds are fractions of the
/// current population applied to the previous day's new infections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub trigger_threshold: f64,
    pub relax_threshold: f64,
    /// Fraction removed from beta while active: `beta * (1 - reduction_factor)`.
    pub reduction_factor: f64,
    pub min_duration_days: u32,
    pub relax_persistence_days: u32,
}

impl InterventionSpec {
    pub fn multiplier(&self) -> f64 {
        1.0 - self.reduction_factor
    }
}

/// A sampled mechanistic configuration. Scalar rates are always drawn; the feature
/// flags decide which of them take part in the dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiParams {
    pub population: u64,
    pub has_exposed: bool,
    pub has_asymptomatic: bool,
    pub has_waning: bool,
    pub has_demography: bool,
    pub has_npi: bool,
    pub has_superspreading: bool,
    pub has_seasonality: bool,
    pub has_importation: bool,
    pub beta_waves: Vec<BetaWave>,
    pub gamma: f64,
    pub sigma: f64,
    pub omega: f64,
    pub mu: f64,
    pub p_asymptomatic: f64,
    pub alpha: f64,
    pub seasonal: Vec<Harmonic>,
    pub dispersion_k: f64,
    pub importation_rate: f64,
    pub npi: Option<InterventionSpec>,
    pub clinical_per_wave: Vec<ClinicalWave>,
    pub horizon_days: u32,
    pub seed_infected: u32,
    /// Gamma shape of the clinical delay distributions (scale = mean / shape).
    pub delay_shape: f64,
    /// Tau-leap steps per simulated day.
    pub substeps_per_day: u32,
}

impl EpiParams {
    /// Plain SIR with a single wave and every optional mechanism switched off.
    pub fn sir(population: u64, beta: f64, gamma: f64, horizon_days: u32, seed_infected: u32) -> Self {
        Self {
            population,
            has_exposed: false,
            has_asymptomatic: false,
            has_waning: false,
            has_demography: false,
            has_npi: false,
            has_superspreading: false,
            has_seasonality: false,
            has_importation: false,
            beta_waves: vec![BetaWave { start_day: 0, beta }],
            gamma,
            sigma: 0.3,
            omega: 0.0,
            mu: 0.0,
            p_asymptomatic: 0.0,
            alpha: 1.0,
            seasonal: Vec::new(),
            dispersion_k: 1.0,
            importation_rate: 0.0,
            npi: None,
            clinical_per_wave: vec![ClinicalWave {
                p_hosp: 0.05,
                p_death_given_hosp: 0.1,
                hosp_delay_mean: 7.0,
                death_delay_mean: 16.0,
            }],
            horizon_days,
            seed_infected,
            delay_shape: DEFAULT_DELAY_SHAPE,
            substeps_per_day: DEFAULT_SUBSTEPS,
        }
    }

    pub fn wave_index(&self, day: u32) -> usize {
        self.beta_waves
            .iter()
            .rposition(|w| w.start_day <= day)
            .unwrap_or(0)
    }

    pub fn beta_at(&self, day: u32) -> f64 {
        self.beta_waves[self.wave_index(day)].beta
    }

    pub fn first_beta(&self) -> f64 {
        self.beta_waves[0].beta
    }

    /// Seasonal multiplier `1 + sum a_k sin(2 pi k t / 365 + phi_k)`, floored at 0.05.
    pub fn seasonal_factor(&self, day: f64) -> f64 {
        if !self.has_seasonality {
            return 1.0;
        }
        let s: f64 = self
            .seasonal
            .iter()
            .map(|h| {
                h.amplitude
                    * (2.0 * std::f64::consts::PI * h.harmonic as f64 * day / 365.0 + h.phase).sin()
            })
            .sum();
        (1.0 + s).max(0.05)
    }

    pub fn clinical_for_day(&self, day: u32) -> &ClinicalWave {
        let w = self.wave_index(day).min(self.clinical_per_wave.len().saturating_sub(1));
        &self.clinical_per_wave[w]
    }

    /// Structural checks. Does not require Table-style ranges, so hand-built
    /// configurations (tests, demos) with out-of-range rates remain simulatable.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.population == 0 {
            return bad("population must be positive".into());
        }
        if self.beta_waves.is_empty() || self.beta_waves[0].start_day != 0 {
            return bad("beta waves must start with a wave at day 0".into());
        }
        if self.beta_waves.windows(2).any(|w| w[0].start_day >= w[1].start_day) {
            return bad("beta wave start days must be strictly increasing".into());
        }
        if self.clinical_per_wave.is_empty() {
            return bad("at least one clinical wave is required".into());
        }
        if self.has_npi != self.npi.is_some() {
            return bad("has_npi disagrees with the intervention spec".into());
        }
        if u64::from(self.seed_infected) > self.population {
            return bad("seed infections exceed the population".into());
        }
        if self.substeps_per_day == 0 || self.delay_shape <= 0.0 {
            return bad("substeps_per_day and delay_shape must be positive".into());
        }
        let probs = [self.p_asymptomatic, self.alpha];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("p_asymptomatic and alpha must lie in [0, 1]".into());
        }
        for c in &self.clinical_per_wave {
            if !(0.0..=1.0).contains(&c.p_hosp) || !(0.0..=1.0).contains(&c.p_death_given_hosp) {
                return bad("clinical probabilities must lie in [0, 1]".into());
            }
            if c.hosp_delay_mean <= 0.0 || c.death_delay_mean < c.hosp_delay_mean {
                return bad("clinical delays require 0 < hosp mean <= death mean".into());
            }
        }
        if let Some(npi) = &self.npi {
            if !(npi.reduction_factor > 0.0 && npi.reduction_factor < 1.0) {
                return bad("NPI reduction factor must lie in (0, 1)".into());
            }
            if npi.trigger_threshold <= npi.relax_threshold {
                return bad("NPI trigger threshold must exceed the relax threshold".into());
            }
        }
        Ok(())
    }

    /// Checks every sampled quantity against its support in [`ranges`].
    /// Returns one message per violation.
    pub fn range_violations(&self) -> Vec<String> {
        use ranges::*;
        let mut out = Vec::new();
        let mut chk = |name: &str, r: (f64, f64), x: f64| {
            if !contains(r, x) {
                out.push(format!("{name}={x} outside [{}, {}]", r.0, r.1));
            }
        };
        chk("population", POPULATION, self.population as f64);
        for w in &self.beta_waves {
            chk("beta", BETA, w.beta);
        }
        chk("waves", (WAVES.0 as f64, WAVES.1 as f64), self.beta_waves.len() as f64);
        chk("gamma", GAMMA, self.gamma);
        chk("sigma", SIGMA, self.sigma);
        chk("omega", OMEGA, self.omega);
        chk("mu", MU, self.mu);
        chk("p_asymptomatic", P_ASYMPTOMATIC, self.p_asymptomatic);
        chk("alpha", ALPHA, self.alpha);
        chk("dispersion_k", DISPERSION_K, self.dispersion_k);
        chk("importation_rate", IMPORTATION_RATE, self.importation_rate);
        for h in &self.seasonal {
            chk("seasonal.amplitude", SEASONAL_AMPLITUDE, h.amplitude);
        }
        for c in &self.clinical_per_wave {
            chk("p_hosp", P_HOSP, c.p_hosp);
            chk("p_death_given_hosp", P_DEATH_GIVEN_HOSP, c.p_death_given_hosp);
            chk("hosp_delay_mean", HOSP_DELAY_MEAN, c.hosp_delay_mean);
            chk("death_delay_mean", DEATH_DELAY_MEAN, c.death_delay_mean);
        }
        if let Some(n) = &self.npi {
            chk("npi.trigger_threshold", NPI_TRIGGER_FRAC, n.trigger_threshold);
            chk("npi.relax_threshold", NPI_RELAX_FRAC, n.relax_threshold);
            chk("npi.reduction_factor", NPI_REDUCTION, n.reduction_factor);
            let d = NPI_MIN_DURATION;
            chk("npi.min_duration_days", (d.0 as f64, d.1 as f64), n.min_duration_days as f64);
        }
        out
    }
}

pub const DEFAULT_DELAY_SHAPE: f64 = 4.0;
pub const DEFAULT_SUBSTEPS: u32 = 16;
pub const DEFAULT_RELAX_PERSISTENCE_DAYS: u32 = 7;

/// Feature probabilities and structural knobs for [`sample_epi_params`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpiConfig {
    pub p_exposed: f64,
    pub p_asymptomatic: f64,
    pub p_npi: f64,
    pub p_demography: f64,
    pub p_waning: f64,
    pub p_superspreading: f64,
    pub p_seasonality: f64,
    pub p_importation: f64,
    pub horizon_days: (u32, u32),
    pub seed_infected: (u32, u32),
    pub delay_shape: f64,
    pub relax_persistence_days: u32,
    pub substeps_per_day: u32,
}

impl Default for EpiConfig {
    fn default() -> Self {
        Self {
            p_exposed: 0.70,
            p_asymptomatic: 0.50,
            p_npi: 0.25,
            p_demography: 0.80,
            p_waning: 0.50,
            p_superspreading: 0.50,
            p_seasonality: 1.0,
            p_importation: 1.0,
            horizon_days: (365, 730),
            seed_infected: (1, 10),
            delay_shape: DEFAULT_DELAY_SHAPE,
            relax_persistence_days: DEFAULT_RELAX_PERSISTENCE_DAYS,
            substeps_per_day: DEFAULT_SUBSTEPS,
        }
    }
}

impl EpiConfig {
    /// Every optional mechanism disabled: closed, unforced SIR.
    pub fn closed_sir() -> Self {
        Self {
            p_exposed: 0.0,
            p_asymptomatic: 0.0,
            p_npi: 0.0,
            p_demography: 0.0,
            p_waning: 0.0,
            p_superspreading: 0.0,
            p_seasonality: 0.0,
            p_importation: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_exposed", self.p_exposed),
            ("p_asymptomatic", self.p_asymptomatic),
            ("p_npi", self.p_npi),
            ("p_demography", self.p_demography),
            ("p_waning", self.p_waning),
            ("p_superspreading", self.p_superspreading),
            ("p_seasonality", self.p_seasonality),
            ("p_importation", self.p_importation),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name}={p} is not a probability")));
            }
        }
        if self.horizon_days.0 == 0 || self.horizon_days.0 > self.horizon_days.1 {
            return Err(Error::Config("horizon_days must be a non-empty positive range".into()));
        }
        if self.seed_infected.0 > self.seed_infected.1 {
            return Err(Error::Config("seed_infected range is empty".into()));
        }
        if self.substeps_per_day == 0 || self.delay_shape <= 0.0 {
            return Err(Error::Config("substeps_per_day and delay_shape must be positive".into()));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, r: (f64, f64)) -> f64 {
    uniform(rng, r.0, r.1)
}

pub fn sample_epi_params<R: Rng + ?Sized>(config: &EpiConfig, rng: &mut R) -> EpiParams {
    use ranges::*;

    let has_exposed = bernoulli(rng, config.p_exposed);
    let has_asymptomatic = bernoulli(rng, config.p_asymptomatic);
    let has_npi = bernoulli(rng, config.p_npi);
    let has_demography = bernoulli(rng, config.p_demography);
    let has_waning = bernoulli(rng, config.p_waning);
    let has_superspreading = bernoulli(rng, config.p_superspreading);
    let has_seasonality = bernoulli(rng, config.p_seasonality);
    let has_importation = bernoulli(rng, config.p_importation);

    let population = log_uniform(rng, POPULATION.0, POPULATION.1).round() as u64;
    let horizon_days =
        uniform_int(rng, config.horizon_days.0 as u64, config.horizon_days.1 as u64) as u32;
    let seed_infected =
        uniform_int(rng, config.seed_infected.0 as u64, config.seed_infected.1 as u64) as u32;

    let n_waves = uniform_int(rng, WAVES.0 as u64, WAVES.1 as u64) as usize;
    let mut starts: Vec<u32> = vec![0];
    while starts.len() < n_waves && horizon_days > n_waves as u32 {
        let d = uniform_int(rng, 1, horizon_days as u64 - 1) as u32;
        if !starts.contains(&d) {
            starts.push(d);
        }
    }
    starts.sort_unstable();
    let beta_waves = starts
        .iter()
        .map(|&start_day| BetaWave {
            start_day,
            beta: draw(rng, BETA),
        })
        .collect::<Vec<_>>();
    let clinical_per_wave = (0..beta_waves.len())
        .map(|_| ClinicalWave {
            p_hosp: draw(rng, P_HOSP),
            p_death_given_hosp: draw(rng, P_DEATH_GIVEN_HOSP),
            hosp_delay_mean: draw(rng, HOSP_DELAY_MEAN),
            death_delay_mean: draw(rng, DEATH_DELAY_MEAN),
        })
        .collect();

    let gamma = draw(rng, GAMMA);
    let sigma = draw(rng, SIGMA);
    let omega = draw(rng, OMEGA);
    let mu = draw(rng, MU);
    let p_asymptomatic = draw(rng, P_ASYMPTOMATIC);
    let alpha = draw(rng, ALPHA);
    let dispersion_k = draw(rng, DISPERSION_K);
    let importation_rate = log_uniform(rng, IMPORTATION_RATE.0, IMPORTATION_RATE.1);

    let seasonal = if has_seasonality {
        let count = uniform_int(rng, SEASONAL_HARMONICS.0 as u64, SEASONAL_HARMONICS.1 as u64);
        (1..=count as u32)
            .map(|harmonic| Harmonic {
                amplitude: draw(rng, SEASONAL_AMPLITUDE),
                harmonic,
                phase: uniform(rng, 0.0, 2.0 * std::f64::consts::PI),
            })
            .collect()
    } else {
        Vec::new()
    };

    let npi = has_npi.then(|| {
        let trigger_threshold = draw(rng, NPI_TRIGGER_FRAC);
        // Rejection keeps relax strictly below trigger where the two supports overlap.
        let relax_threshold = loop {
            let r = draw(rng, NPI_RELAX_FRAC);
            if r < trigger_threshold {
                break r;
            }
        };
        InterventionSpec {
            trigger_threshold,
            relax_threshold,
            reduction_factor: draw(rng, NPI_REDUCTION),
            min_duration_days: uniform_int(
                rng,
                NPI_MIN_DURATION.0 as u64,
                NPI_MIN_DURATION.1 as u64,
            ) as u32,
            relax_persistence_days: config.relax_persistence_days,
        }
    });

    EpiParams {
        population,
        has_exposed,
        has_asymptomatic,
        has_waning,
        has_demography,
        has_npi,
        has_superspreading,
        has_seasonality,
        has_importation,
        beta_waves,
        gamma,
        sigma,
        omega,
        mu,
        p_asymptomatic,
        alpha,
        seasonal,
        dispersion_k,
        importation_rate,
        npi,
        clinical_per_wave,
        horizon_days,
        seed_infected,
        delay_shape: config.delay_shape,
        substeps_per_day: config.substeps_per_day,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::substream;

    #[test]
    fn feature_frequencies_match_configuration() {
        let cfg = EpiConfig::default();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for i in 0..n {
            let p = sample_epi_params(&cfg, &mut substream(2024, i));
            counts[0] += usize::from(p.has_exposed);
            counts[1] += usize::from(p.has_asymptomatic);
            counts[2] += usize::from(p.has_npi);
            counts[3] += usize::from(p.has_demography);
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        for (f, target) in freq.iter().zip([0.70, 0.50, 0.25, 0.80]) {
            assert!((f - target).abs() < 0.01, "{freq:?}");
        }
    }

    #[test]
    fn sampled_params_respect_supports() {
        let cfg = EpiConfig::default();
        for i in 0..5_000 {
            let p = sample_epi_params(&cfg, &mut substream(7, i));
            p.validate().unwrap();
            assert!(p.range_violations().is_empty(), "{:?}", p.range_violations());
            assert!(p.beta_waves.iter().all(|w| (0.10..=1.00).contains(&w.beta)));
            assert!((0.10..=0.33).contains(&p.gamma));
            assert!((1..=5).contains(&p.beta_waves.len()));
            assert_eq!(p.beta_waves.len(), p.clinical_per_wave.len());
        }
    }

    #[test]
    fn zero_feature_probabilities_give_closed_sir() {
        let cfg = EpiConfig::closed_sir();
        for i in 0..200 {
            let p = sample_epi_params(&cfg, &mut substream(3, i));
            assert!(!p.has_exposed && !p.has_asymptomatic && !p.has_waning);
            assert!(!p.has_demography && !p.has_npi && !p.has_superspreading);
            assert!(!p.has_seasonality && !p.has_importation);
            assert!(p.npi.is_none() && p.seasonal.is_empty());
        }
    }

    #[test]
    fn invalid_probability_override_is_rejected() {
        let cfg = EpiConfig {
            p_npi: 1.2,
            ..EpiConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seasonal_factor_is_floored() {
        let mut p = EpiParams::sir(1000, 0.3, 0.1, 10, 1);
        p.has_seasonality = true;
        p.seasonal = vec![Harmonic {
            amplitude: 2.0,
            harmonic: 1,
            phase: -std::f64::consts::FRAC_PI_2,
        }];
        assert_eq!(p.seasonal_factor(0.0), 0.05);
    }
}
