use rand::Rng;
use serde::{Deserialize, Serialize};

use super::clinical::apply_clinical_outcomes;
use super::params::{EpiParams, InterventionSpec};
use super::r0::compute_rt_series;
use crate::error::Result;
use crate::observation::ObservationSpec;
use crate::stochastics::{bernoulli, binomial, gamma, poisson};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub infections: Vec<u64>,
    pub hospitalizations: Vec<u64>,
    pub deaths: Vec<u64>,
}

/// Compartment occupancy at the start of each day.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Compartments {
    pub s: Vec<u64>,
    pub e: Vec<u64>,
    pub a: Vec<u64>,
    pub i: Vec<u64>,
    pub r: Vec<u64>,
}

impl Compartments {
    fn with_capacity(n: usize) -> Self {
        Self {
            s: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
        }
    }

    pub fn total(&self, day: usize) -> u64 {
        self.s[day] + self.e[day] + self.a[day] + self.i[day] + self.r[day]
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Days `[start_day, end_day)` during which an intervention scaled beta.
/// `truncated` marks a window still active when the run ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionWindow {
    pub start_day: u32,
    pub end_day: u32,
    pub reduction: f64,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiTrajectory {
    pub truth: DailySeries,
    /// Daily entries into the symptomatic compartment I.
    pub symptomatic_onsets: Vec<u64>,
    pub latent: Compartments,
    pub rt: Vec<f64>,
    /// Filled by the observation pipeline.
    pub reported: Option<DailySeries>,
    pub interventions: Vec<InterventionWindow>,
    pub params: EpiParams,
    pub observation: Option<ObservationSpec>,
}

impl EpiTrajectory {
    pub fn horizon(&self) -> usize {
        self.truth.infections.len()
    }

    pub fn npi_multiplier(&self, day: u32) -> f64 {
        self.interventions
            .iter()
            .find(|w| w.start_day <= day && day < w.end_day)
            .map_or(1.0, |w| 1.0 - w.reduction)
    }
}

enum NpiState {
    Idle,
    Active { start: u32, quiet_streak: u32 },
}

struct NpiController {
    spec: InterventionSpec,
    state: NpiState,
    log: Vec<InterventionWindow>,
}

impl NpiController {
    /// Advances the state machine with yesterday's new infections and returns the
    /// beta multiplier for `day`.
    fn step(&mut self, day: u32, yesterday_cases: u64, population: u64) -> f64 {
        let frac = if population == 0 {
            0.0
        } else {
            yesterday_cases as f64 / population as f64
        };
        match &mut self.state {
            NpiState::Idle => {
                if day > 0 && frac > self.spec.trigger_threshold {
                    self.state = NpiState::Active {
                        start: day,
                        quiet_streak: 0,
                    };
                }
            }
            NpiState::Active {
                start,
                quiet_streak,
            } => {
                if frac < self.spec.relax_threshold {
                    *quiet_streak += 1;
                } else {
                    *quiet_streak = 0;
                }
                if day - *start >= self.spec.min_duration_days
                    && *quiet_streak >= self.spec.relax_persistence_days
                {
                    self.log.push(InterventionWindow {
                        start_day: *start,
                        end_day: day,
                        reduction: self.spec.reduction_factor,
                        truncated: false,
                    });
                    self.state = NpiState::Idle;
                }
            }
        }
        match self.state {
            NpiState::Idle => 1.0,
            NpiState::Active { .. } => self.spec.multiplier(),
        }
    }

    fn finish(mut self, horizon: u32) -> Vec<InterventionWindow> {
        if let NpiState::Active { start, .. } = self.state {
            self.log.push(InterventionWindow {
                start_day: start,
                end_day: horizon,
                reduction: self.spec.reduction_factor,
                truncated: true,
            });
        }
        self.log
    }
}

fn leave_prob(rate: f64, dt: f64) -> f64 {
    1.0 - (-rate * dt).exp()
}

/// Runs one stochastic epidemic.
///
/// Each day is split into `substeps_per_day` tau-leap steps. Within a step every
/// transition is a binomial draw from start-of-step counts with probability
/// `1 - exp(-rate * dt)`, applied in the order infection, progression, recovery,
/// waning, demography. Importation is a daily Bernoulli event after the last step.
pub fn simulate_epidemic<R: Rng + ?Sized>(params: &EpiParams, rng: &mut R) -> Result<EpiTrajectory> {
    params.validate()?;
    let horizon = params.horizon_days as usize;
    let dt = 1.0 / params.substeps_per_day as f64;

    let p_progress = if params.has_exposed {
        leave_prob(params.sigma, dt)
    } else {
        0.0
    };
    let p_recover = leave_prob(params.gamma, dt);
    let p_wane = if params.has_waning {
        leave_prob(params.omega, dt)
    } else {
        0.0
    };
    let mu = if params.has_demography { params.mu } else { 0.0 };
    let p_die = leave_prob(mu, dt);
    let p_a = if params.has_asymptomatic {
        params.p_asymptomatic
    } else {
        0.0
    };
    let alpha = if params.has_asymptomatic { params.alpha } else { 0.0 };

    let seed = u64::from(params.seed_infected);
    let (mut s, mut e, mut a, mut i, mut r) = (params.population - seed, 0u64, 0u64, seed, 0u64);

    let mut infections = vec![0u64; horizon];
    let mut onsets = vec![0u64; horizon];
    if horizon > 0 {
        infections[0] = seed;
        onsets[0] = seed;
    }
    let mut latent = Compartments::with_capacity(horizon);
    let mut npi = params.npi.map(|spec| NpiController {
        spec,
        state: NpiState::Idle,
        log: Vec::new(),
    });

    for day in 0..horizon {
        latent.s.push(s);
        latent.e.push(e);
        latent.a.push(a);
        latent.i.push(i);
        latent.r.push(r);

        let d = day as u32;
        let population = s + e + a + i + r;
        let yesterday = if day > 0 { infections[day - 1] } else { 0 };
        let npi_mult = npi
            .as_mut()
            .map_or(1.0, |c| c.step(d, yesterday, population));
        let eta = if params.has_superspreading {
            let k = params.dispersion_k;
            gamma(rng, k, 1.0 / k)
        } else {
            1.0
        };
        let beta = params.beta_at(d) * params.seasonal_factor(day as f64) * npi_mult * eta;

        for _ in 0..params.substeps_per_day {
            let n = s + e + a + i + r;
            if n == 0 {
                break;
            }
            let lambda = beta * (i as f64 + alpha * a as f64) / n as f64;
            let new_inf = binomial(rng, s, leave_prob(lambda, dt));
            let progressed = binomial(rng, e, p_progress);
            let rec_i = binomial(rng, i, p_recover);
            let rec_a = binomial(rng, a, p_recover);
            let waned = binomial(rng, r, p_wane);

            let (mut ds, mut de, mut da, mut di, mut dr, mut births) = (0, 0, 0, 0, 0, 0);
            if mu > 0.0 {
                ds = binomial(rng, s - new_inf, p_die);
                de = binomial(rng, e - progressed, p_die);
                da = binomial(rng, a - rec_a, p_die);
                di = binomial(rng, i - rec_i, p_die);
                dr = binomial(rng, r - waned, p_die);
                births = poisson(rng, mu * n as f64 * dt);
            }

            // Entries into A / I from infection (no E) or progression (with E).
            let entering = if params.has_exposed { progressed } else { new_inf };
            let to_a = binomial(rng, entering, p_a);
            let to_i = entering - to_a;

            s = s - new_inf - ds + waned + births;
            e = e - progressed - de + if params.has_exposed { new_inf } else { 0 };
            a = a - rec_a - da + to_a;
            i = i - rec_i - di + to_i;
            r = r - waned - dr + rec_i + rec_a;

            infections[day] += new_inf;
            onsets[day] += to_i;
        }

        if params.has_importation && s > 0 && bernoulli(rng, params.importation_rate) {
            s -= 1;
            if params.has_exposed {
                e += 1;
            } else {
                i += 1;
                onsets[day] += 1;
            }
            infections[day] += 1;
        }
    }

    let clinical = apply_clinical_outcomes(&onsets, params, rng);
    let mut traj = EpiTrajectory {
        truth: DailySeries {
            infections,
            hospitalizations: clinical.hospitalizations,
            deaths: clinical.deaths,
        },
        symptomatic_onsets: onsets,
        latent,
        rt: Vec::new(),
        reported: None,
        interventions: npi.map_or_else(Vec::new, |c| c.finish(params.horizon_days)),
        params: params.clone(),
        observation: None,
    };
    traj.rt = compute_rt_series(&traj, params);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epi::params::{sample_epi_params, EpiConfig};
    use crate::epi::r0::compute_r0;
    use crate::stochastics::substream;

    #[test]
    fn closed_configuration_conserves_population() {
        let cfg = EpiConfig::closed_sir();
        for k in 0..50 {
            let mut cfg = cfg.clone();
            cfg.p_exposed = 0.7;
            cfg.p_asymptomatic = 0.5;
            cfg.p_npi = 0.5;
            cfg.p_superspreading = 0.5;
            cfg.p_seasonality = 1.0;
            let p = sample_epi_params(&cfg, &mut substream(10, k));
            let t = simulate_epidemic(&p, &mut substream(11, k)).unwrap();
            for day in 0..t.latent.len() {
                assert_eq!(t.latent.total(day), p.population, "record {k} day {day}");
            }
        }
    }

    #[test]
    fn no_transmission_keeps_seed_only() {
        let mut p = EpiParams::sir(100_000, 0.0, 0.2, 200, 10);
        p.has_importation = false;
        let t = simulate_epidemic(&p, &mut substream(1, 2)).unwrap();
        assert_eq!(t.truth.infections.iter().sum::<u64>(), 10);
        assert_eq!(t.truth.infections[0], 10);
    }

    #[test]
    fn cumulative_counters_are_monotone_and_bounded() {
        let cfg = EpiConfig::default();
        for k in 0..30 {
            let p = sample_epi_params(&cfg, &mut substream(21, k));
            let t = simulate_epidemic(&p, &mut substream(22, k)).unwrap();
            let h: u64 = t.truth.hospitalizations.iter().sum();
            let d: u64 = t.truth.deaths.iter().sum();
            let s: u64 = t.symptomatic_onsets.iter().sum();
            assert!(d <= h && h <= s);
            let total_inf: u64 = t.truth.infections.iter().sum();
            assert!(s <= total_inf);
            assert_eq!(t.rt.len(), p.horizon_days as usize);
            assert!(t.rt.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn npi_windows_obey_contract() {
        let mut seen = 0;
        for k in 0..400 {
            let cfg = EpiConfig {
                p_npi: 1.0,
                ..EpiConfig::default()
            };
            let p = sample_epi_params(&cfg, &mut substream(31, k));
            let t = simulate_epidemic(&p, &mut substream(32, k)).unwrap();
            let spec = p.npi.unwrap();
            for w in &t.interventions {
                seen += 1;
                assert!(w.end_day > w.start_day);
                if !w.truncated {
                    assert!(w.end_day - w.start_day >= spec.min_duration_days);
                }
                for d in w.start_day..w.end_day {
                    assert!(t.npi_multiplier(d) < 1.0);
                }
            }
            for pair in t.interventions.windows(2) {
                assert!(pair[0].end_day <= pair[1].start_day);
            }
            let active: usize = t.interventions.iter().map(|w| (w.end_day - w.start_day) as usize).sum();
            let reduced = (0..p.horizon_days).filter(|&d| t.npi_multiplier(d) < 1.0).count();
            assert_eq!(active, reduced);
        }
        assert!(seen > 20, "too few interventions triggered: {seen}");
    }

    #[test]
    fn rt_starts_at_r0_when_fully_susceptible() {
        let mut p = EpiParams::sir(1_000_000, 0.3, 0.1, 50, 0);
        p.seed_infected = 0;
        let t = simulate_epidemic(&p, &mut substream(1, 1)).unwrap();
        assert!((t.rt[0] - compute_r0(&p)).abs() < 1e-12);
    }

    #[test]
    fn same_stream_same_trajectory() {
        let p = sample_epi_params(&EpiConfig::default(), &mut substream(5, 5));
        let a = simulate_epidemic(&p, &mut substream(6, 6)).unwrap();
        let b = simulate_epidemic(&p, &mut substream(6, 6)).unwrap();
        assert_eq!(a, b);
    }
}
