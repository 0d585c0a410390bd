//! Ecological generators: multispecies butterfly communities and stochastic
//! predator-prey (lynx-hare) cycles, both followed by the same count
//! observation stage.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::{neg_binomial, normal, trunc_normal_nonneg, uniform, uniform_int};

pub const MAX_SPECIES: usize = 32;
pub const DEFAULT_HORIZON_YEARS: usize = 100;
const BUTTERFLY_STEP: f64 = 0.05;
const LYNX_HARE_STEP: f64 = 0.01;

/// Noise switches shared by both generators. All off gives a deterministic,
/// bit-reproducible trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcoNoise {
    pub environment: bool,
    pub process: bool,
    pub observation: bool,
}

impl EcoNoise {
    pub const ALL: EcoNoise = EcoNoise {
        environment: true,
        process: true,
        observation: true,
    };
    pub const NONE: EcoNoise = EcoNoise {
        environment: false,
        process: false,
        observation: false,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountObservation {
    /// Negative-binomial size; variance is `mu + mu^2 / overdispersion`.
    pub overdispersion: f64,
    /// Additive Gaussian noise on the log10 scale.
    pub log10_sd: f64,
}

impl Default for CountObservation {
    fn default() -> Self {
        CountObservation {
            overdispersion: 2000.0,
            log10_sd: 0.08,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterflyParams {
    pub growth_rate: Vec<f64>,
    pub initial: Vec<f64>,
    pub capacity: Vec<f64>,
    /// Row-major `species x species`, zero diagonal.
    pub competition: Vec<f64>,
    pub seasonal_amplitude: f64,
    pub seasonal_phase: f64,
    pub env_initial_mean: f64,
    pub env_initial_sd: f64,
    pub env_rho: f64,
    pub env_sd: f64,
    /// Process-noise standard deviation as a fraction of the population.
    pub process_cv: f64,
    pub observation: CountObservation,
    pub horizon_years: usize,
    pub noise: EcoNoise,
}

impl ButterflyParams {
    pub fn species(&self) -> usize {
        self.growth_rate.len()
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.competition[i * self.species() + j]
    }

    pub fn set_alpha(&mut self, i: usize, j: usize, value: f64) {
        let s = self.species();
        self.competition[i * s + j] = value;
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.species();
        if s == 0 || s > MAX_SPECIES {
            return Err(Error::Parameter(format!("species count {s} outside 1..={MAX_SPECIES}")));
        }
        if self.initial.len() != s || self.capacity.len() != s || self.competition.len() != s * s {
            return Err(Error::Parameter("per-species vectors disagree in length".into()));
        }
        for i in 0..s {
            if self.alpha(i, i) != 0.0 {
                return Err(Error::Parameter(format!("self-competition of species {i} is nonzero")));
            }
        }
        if self.competition.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::Parameter("competition coefficients must be non-negative".into()));
        }
        if self.capacity.iter().chain(&self.initial).any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Parameter("capacities and initial sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Draws a community: 2 to 32 species with independent growth rates,
/// initial sizes `10^U(1.7, 2.4)`, capacities a `U(1.5, 2.5)` multiple of the
/// initial size and weak non-negative competition.
pub fn sample_butterfly_community<R: Rng + ?Sized>(rng: &mut R) -> ButterflyParams {
    let s = uniform_int(rng, 2, MAX_SPECIES as u64) as usize;
    let growth_rate = (0..s).map(|_| uniform(rng, 0.15, 0.4)).collect();
    let initial: Vec<f64> = (0..s).map(|_| 10f64.powf(uniform(rng, 1.7, 2.4))).collect();
    let capacity = initial.iter().map(|&n0| n0 * uniform(rng, 1.5, 2.5)).collect();
    let mut competition = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            if i != j {
                competition[i * s + j] = trunc_normal_nonneg(rng, 0.03, 0.01);
            }
        }
    }
    ButterflyParams {
        growth_rate,
        initial,
        capacity,
        competition,
        seasonal_amplitude: 0.15,
        seasonal_phase: uniform(rng, 0.0, 1.0),
        env_initial_mean: 1.0,
        env_initial_sd: 0.05,
        env_rho: 0.7,
        env_sd: 0.05,
        process_cv: 0.03,
        observation: CountObservation::default(),
        horizon_years: DEFAULT_HORIZON_YEARS,
        noise: EcoNoise::ALL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LynxHareParams {
    pub r: f64,
    pub capacity: f64,
    pub predation: f64,
    pub conversion: f64,
    pub mortality: f64,
    pub self_limitation: f64,
    pub hare0: f64,
    pub lynx0: f64,
    pub hare_max: f64,
    pub lynx_max: f64,
    /// Multiplier converting model populations to reported pelt units.
    pub pelt_scale: f64,
    pub observation: CountObservation,
    pub horizon_years: usize,
    pub noise: EcoNoise,
}

impl LynxHareParams {
    /// Coexistence equilibrium of the predator-prey system, if it is positive.
    pub fn coexistence_equilibrium(&self) -> Option<(f64, f64)> {
        let c = self.self_limitation * self.r / self.predation;
        let h = (self.mortality + c) / (self.conversion + c / self.capacity);
        let l = self.r * (1.0 - h / self.capacity) / self.predation;
        (h > 0.0 && l > 0.0).then_some((h, l))
    }

    fn derivative(&self, h: f64, l: f64) -> (f64, f64) {
        (
            self.r * h * (1.0 - h / self.capacity) - self.predation * h * l,
            self.conversion * h * l - self.mortality * l - self.self_limitation * l * l,
        )
    }
}

pub fn sample_lynx_hare<R: Rng + ?Sized>(rng: &mut R) -> LynxHareParams {
    LynxHareParams {
        r: uniform(rng, 0.4, 0.6),
        capacity: uniform(rng, 80.0, 120.0),
        predation: uniform(rng, 0.02, 0.04),
        conversion: uniform(rng, 0.025, 0.04),
        mortality: uniform(rng, 1.0, 2.0),
        self_limitation: uniform(rng, 0.0005, 0.002),
        hare0: uniform(rng, 20.0, 80.0),
        lynx0: uniform(rng, 5.0, 30.0),
        hare_max: 200.0,
        lynx_max: 80.0,
        pelt_scale: 1.0,
        observation: CountObservation::default(),
        horizon_years: DEFAULT_HORIZON_YEARS,
        noise: EcoNoise::ALL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EcoParams {
    Butterfly(ButterflyParams),
    LynxHare(LynxHareParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcoTrajectory {
    /// `latent[species][year]`.
    pub latent: Vec<Vec<f64>>,
    pub observed_log10: Vec<Vec<f64>>,
    pub params: EcoParams,
}

impl EcoTrajectory {
    pub fn species(&self) -> usize {
        self.latent.len()
    }

    pub fn years(&self) -> usize {
        self.latent.first().map_or(0, Vec::len)
    }
}

/// Annual environmental multipliers: an AR(1) series, exponentiated and
/// normalized to mean one.
pub fn environment_multipliers<R: Rng + ?Sized>(params: &ButterflyParams, rng: &mut R) -> Vec<f64> {
    let years = params.horizon_years;
    if !params.noise.environment || years == 0 {
        return vec![1.0; years];
    }
    let mut e = normal(rng, params.env_initial_mean, params.env_initial_sd);
    let mut raw = Vec::with_capacity(years);
    for _ in 0..years {
        raw.push(e.exp());
        e = params.env_rho * e + normal(rng, 0.0, params.env_sd);
    }
    let mean = raw.iter().sum::<f64>() / years as f64;
    raw.iter().map(|x| x / mean).collect()
}

fn butterfly_rhs(params: &ButterflyParams, env: f64, t: f64, n: &[f64], out: &mut [f64]) {
    let s = n.len();
    let season = 1.0
        + params.seasonal_amplitude * (2.0 * std::f64::consts::PI * (t + params.seasonal_phase) / 12.0).sin();
    for i in 0..s {
        let row = &params.competition[i * s..(i + 1) * s];
        let crowding: f64 = n[i] + row.iter().zip(n).map(|(a, x)| a * x).sum::<f64>();
        let k = params.capacity[i] * env * season;
        out[i] = params.growth_rate[i] * n[i] * (1.0 - crowding / k);
    }
}

fn rk4_step(
    params: &ButterflyParams,
    env: f64,
    t: f64,
    h: f64,
    n: &mut [f64],
    scratch: &mut [Vec<f64>; 5],
) {
    let [k1, k2, k3, k4, tmp] = scratch;
    butterfly_rhs(params, env, t, n, k1);
    for i in 0..n.len() {
        tmp[i] = n[i] + 0.5 * h * k1[i];
    }
    butterfly_rhs(params, env, t + 0.5 * h, tmp, k2);
    for i in 0..n.len() {
        tmp[i] = n[i] + 0.5 * h * k2[i];
    }
    butterfly_rhs(params, env, t + 0.5 * h, tmp, k3);
    for i in 0..n.len() {
        tmp[i] = n[i] + h * k3[i];
    }
    butterfly_rhs(params, env, t + h, tmp, k4);
    for i in 0..n.len() {
        n[i] = (n[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).max(0.0);
    }
}

/// Integrates the competition model with fixed-step RK4 between integer years.
/// Process noise perturbs each species at every output year and the perturbed
/// state seeds the next year.
pub fn simulate_butterfly<R: Rng + ?Sized>(params: &ButterflyParams, rng: &mut R) -> Result<EcoTrajectory> {
    params.validate()?;
    let s = params.species();
    let years = params.horizon_years;
    let env = environment_multipliers(params, rng);
    let steps_per_year = (1.0 / BUTTERFLY_STEP).round() as usize;
    let h = 1.0 / steps_per_year as f64;

    let mut n = params.initial.clone();
    let mut latent = vec![Vec::with_capacity(years); s];
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; s]);
    for year in 0..years {
        for (i, x) in n.iter().enumerate() {
            latent[i].push(*x);
        }
        if year + 1 == years {
            break;
        }
        for step in 0..steps_per_year {
            let t = year as f64 + step as f64 * h;
            rk4_step(params, env[year], t, h, &mut n, &mut scratch);
        }
        if let Some(bad) = n.iter().position(|x| !x.is_finite()) {
            return Err(Error::Integration {
                time: (year + 1) as f64,
                params: format!("species {bad}: {}", serde_json::to_string(params)?),
            });
        }
        if params.noise.process {
            for x in n.iter_mut() {
                *x = (*x + normal(rng, 0.0, params.process_cv * *x)).max(0.0);
            }
        }
    }
    let observed_log10 = observe_counts(&latent, &params.observation, params.noise.observation, rng);
    Ok(EcoTrajectory {
        latent,
        observed_log10,
        params: EcoParams::Butterfly(params.clone()),
    })
}

/// Euler-steps the predator-prey equations and injects demographic noise once
/// per year, clamping both populations to `[0, max]`. Outputs are annual values
/// in pelt units.
pub fn simulate_lynx_hare<R: Rng + ?Sized>(params: &LynxHareParams, rng: &mut R) -> Result<EcoTrajectory> {
    let years = params.horizon_years;
    let steps_per_year = (1.0 / LYNX_HARE_STEP).round() as usize;
    let dt = 1.0 / steps_per_year as f64;
    let (mut h, mut l) = (
        params.hare0.clamp(0.0, params.hare_max),
        params.lynx0.clamp(0.0, params.lynx_max),
    );
    let mut latent = vec![Vec::with_capacity(years), Vec::with_capacity(years)];
    for year in 0..years {
        latent[0].push(h * params.pelt_scale);
        latent[1].push(l * params.pelt_scale);
        if year + 1 == years {
            break;
        }
        for _ in 0..steps_per_year {
            let (dh, dl) = params.derivative(h, l);
            h = (h + dt * dh).clamp(0.0, params.hare_max);
            l = (l + dt * dl).clamp(0.0, params.lynx_max);
        }
        if !(h.is_finite() && l.is_finite()) {
            return Err(Error::Integration {
                time: (year + 1) as f64,
                params: serde_json::to_string(params)?,
            });
        }
        if params.noise.process {
            // sd = CV * population
            let cv_h = if h > 0.0 { (200.0 / (1000.0 * h)).min(0.1) } else { 0.0 };
            let cv_l = if l > 0.0 { (100.0 / (1000.0 * l)).min(0.1) } else { 0.0 };
            h = normal(rng, h, cv_h * h).clamp(0.0, params.hare_max);
            l = normal(rng, l, cv_l * l).clamp(0.0, params.lynx_max);
        }
    }
    let observed_log10 = observe_counts(&latent, &params.observation, params.noise.observation, rng);
    Ok(EcoTrajectory {
        latent,
        observed_log10,
        params: EcoParams::LynxHare(params.clone()),
    })
}

/// Count observation: `y ~ NB(mean = N, size)`, then `log10(y + 1)` plus
/// Gaussian noise. With observation off the transform is applied to the latent
/// value directly.
pub fn observe_counts<R: Rng + ?Sized>(
    latent: &[Vec<f64>],
    spec: &CountObservation,
    enabled: bool,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    latent
        .iter()
        .map(|series| {
            series
                .iter()
                .map(|&n| {
                    if !enabled {
                        return (n + 1.0).log10();
                    }
                    let y = neg_binomial(rng, n, spec.overdispersion) as f64;
                    (y + 1.0).log10() + normal(rng, 0.0, spec.log10_sd)
                })
                .collect()
        })
        .collect()
}

/// Writes `species_id,year,latent,observed_log10` rows.
pub fn write_eco_csv<W: Write>(traj: &EcoTrajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["species_id", "year", "latent", "observed_log10"])?;
    for (sp, (lat, obs)) in traj.latent.iter().zip(&traj.observed_log10).enumerate() {
        for (year, (a, b)) in lat.iter().zip(obs).enumerate() {
            w.serialize((sp, year, a, b))?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::substream;

    fn single_species(r: f64, n0: f64, k: f64) -> ButterflyParams {
        ButterflyParams {
            growth_rate: vec![r],
            initial: vec![n0],
            capacity: vec![k],
            competition: vec![0.0],
            seasonal_amplitude: 0.0,
            seasonal_phase: 0.0,
            env_initial_mean: 1.0,
            env_initial_sd: 0.05,
            env_rho: 0.7,
            env_sd: 0.05,
            process_cv: 0.03,
            observation: CountObservation::default(),
            horizon_years: 100,
            noise: EcoNoise::NONE,
        }
    }

    #[test]
    fn sampled_community_respects_supports() {
        let mut rng = substream(3, 0);
        for _ in 0..200 {
            let p = sample_butterfly_community(&mut rng);
            p.validate().unwrap();
            assert!((2..=32).contains(&p.species()));
            assert!(p.growth_rate.iter().all(|r| (0.15..=0.4).contains(r)));
            assert!(p.initial.iter().all(|n| (50.1..=251.2).contains(n)));
            for i in 0..p.species() {
                let ratio = p.capacity[i] / p.initial[i];
                assert!((1.5..=2.5).contains(&ratio));
            }
        }
    }

    #[test]
    fn logistic_converges_to_capacity() {
        let p = single_species(0.2, 60.0, 150.0);
        let t = simulate_butterfly(&p, &mut substream(0, 0)).unwrap();
        assert!((t.latent[0][60] / 150.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn deterministic_mode_is_bit_reproducible() {
        let mut p = sample_butterfly_community(&mut substream(4, 4));
        p.noise = EcoNoise::NONE;
        let a = simulate_butterfly(&p, &mut substream(1, 1)).unwrap();
        let b = simulate_butterfly(&p, &mut substream(2, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn environment_multipliers_have_unit_mean() {
        let p = sample_butterfly_community(&mut substream(5, 5));
        let env = environment_multipliers(&p, &mut substream(5, 6));
        let mean = env.iter().sum::<f64>() / env.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
        assert!(env.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn decoupled_predator_prey_limits() {
        let mut p = sample_lynx_hare(&mut substream(6, 6));
        p.noise = EcoNoise::NONE;
        p.predation = 0.0;
        p.conversion = 0.0;
        p.self_limitation = 0.0;
        let t = simulate_lynx_hare(&p, &mut substream(0, 0)).unwrap();
        assert!((t.latent[0][99] / p.capacity - 1.0).abs() < 1e-6);
        // Lynx decays as exp(-gamma t) under the Euler map (1 - gamma dt)^steps.
        let expected = p.lynx0 * (1.0 - p.mortality * LYNX_HARE_STEP).powi(1000);
        assert!((t.latent[1][10] - expected).abs() <= 1e-9 * p.lynx0);
        assert!(t.latent[1][99] < 1e-30);
    }

    #[test]
    fn clamp_holds_under_noise() {
        for seed in 0..50 {
            let mut rng = substream(seed, 7);
            let mut p = sample_lynx_hare(&mut rng);
            p.hare0 = 500.0;
            let t = simulate_lynx_hare(&p, &mut rng).unwrap();
            assert!(t.latent[0].iter().all(|&h| (0.0..=200.0).contains(&h)));
            assert!(t.latent[1].iter().all(|&l| (0.0..=80.0).contains(&l)));
            assert!(t.observed_log10.iter().flatten().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn csv_has_one_row_per_species_year() {
        let p = sample_lynx_hare(&mut substream(8, 8));
        let t = simulate_lynx_hare(&p, &mut substream(8, 9)).unwrap();
        let mut buf = Vec::new();
        write_eco_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("species_id,year,latent,observed_log10"));
        assert_eq!(lines.count(), 200);
    }

    #[test]
    fn nonzero_self_competition_is_rejected() {
        let mut p = single_species(0.2, 60.0, 150.0);
        p.competition[0] = 0.1;
        assert!(matches!(simulate_butterfly(&p, &mut substream(0, 0)), Err(Error::Parameter(_))));
    }
}
