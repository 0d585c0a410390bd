//! Surveillance artifacts that turn true daily counts into reported counts.
//!
//! Case series go through underreporting, reporting delay, weekday effects and
//! multiplicative noise, in that order. Hospitalization and death series skip the
//! underreporting stage. Every multiplicative stage rounds half-to-even.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epi::DailySeries;
use crate::stochastics::{binomial, lognormal_mean_one, normal, uniform, uniform_int};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub report_rate_initial: f64,
    pub report_rate_final: f64,
    /// Logistic midpoint as a fraction of the series length.
    pub logistic_midpoint_frac: f64,
    /// Logistic steepness per day.
    pub logistic_steepness: f64,
    pub delay_mode_days: u32,
    pub delay_success_prob: f64,
    /// Multipliers indexed by `day % 7`.
    pub weekday_effects: [f64; 7],
    pub noise_sigma_cases: f64,
    pub noise_sigma_hosp: f64,
    pub noise_sigma_deaths: f64,
}

pub mod ranges {
    pub const REPORT_RATE_INITIAL: (f64, f64) = (0.05, 0.40);
    pub const REPORT_RATE_FINAL: (f64, f64) = (0.25, 0.85);
    pub const LOGISTIC_MIDPOINT: (f64, f64) = (0.2, 0.7);
    pub const DELAY_MODE: (u32, u32) = (0, 3);
    pub const WEEKDAY_SD: f64 = 0.05;
    pub const SIGMA_CASES: (f64, f64) = (0.15, 0.25);
    pub const SIGMA_HOSP: (f64, f64) = (0.10, 0.15);
    pub const SIGMA_DEATHS: (f64, f64) = (0.05, 0.10);
}

pub const DEFAULT_DELAY_SUCCESS_PROB: f64 = 0.5;

impl ObservationSpec {
    /// Perfect surveillance: every stage is the identity.
    pub fn identity() -> Self {
        Self {
            report_rate_initial: 1.0,
            report_rate_final: 1.0,
            logistic_midpoint_frac: 0.5,
            logistic_steepness: 0.0,
            delay_mode_days: 0,
            delay_success_prob: 1.0,
            weekday_effects: [1.0; 7],
            noise_sigma_cases: 0.0,
            noise_sigma_hosp: 0.0,
            noise_sigma_deaths: 0.0,
        }
    }

    pub fn report_probability(&self, day: usize, len: usize) -> f64 {
        let midpoint = self.logistic_midpoint_frac * len as f64;
        let z = self.logistic_steepness * (day as f64 - midpoint);
        let logistic = 1.0 / (1.0 + (-z).exp());
        (self.report_rate_initial + (self.report_rate_final - self.report_rate_initial) * logistic)
            .clamp(0.0, 1.0)
    }

    pub fn range_violations(&self) -> Vec<String> {
        use ranges::*;
        let mut out = Vec::new();
        let mut chk = |name: &str, r: (f64, f64), x: f64| {
            if !(x >= r.0 && x <= r.1) {
                out.push(format!("{name}={x} outside [{}, {}]", r.0, r.1));
            }
        };
        chk("report_rate_initial", REPORT_RATE_INITIAL, self.report_rate_initial);
        chk("report_rate_final", REPORT_RATE_FINAL, self.report_rate_final);
        chk("logistic_midpoint_frac", LOGISTIC_MIDPOINT, self.logistic_midpoint_frac);
        chk(
            "delay_mode_days",
            (DELAY_MODE.0 as f64, DELAY_MODE.1 as f64),
            self.delay_mode_days as f64,
        );
        chk("noise_sigma_cases", SIGMA_CASES, self.noise_sigma_cases);
        chk("noise_sigma_hosp", SIGMA_HOSP, self.noise_sigma_hosp);
        chk("noise_sigma_deaths", SIGMA_DEATHS, self.noise_sigma_deaths);
        if self.report_rate_final < self.report_rate_initial {
            out.push("report_rate_final below report_rate_initial".into());
        }
        if self.weekday_effects.iter().any(|&w| w <= 0.0) {
            out.push("non-positive weekday effect".into());
        }
        out
    }
}

/// Draws a surveillance configuration for a series of `horizon_days`.
pub fn sample_observation_spec<R: Rng + ?Sized>(horizon_days: u32, rng: &mut R) -> ObservationSpec {
    use ranges::*;
    let report_rate_initial = uniform(rng, REPORT_RATE_INITIAL.0, REPORT_RATE_INITIAL.1);
    let report_rate_final = loop {
        let r = uniform(rng, REPORT_RATE_FINAL.0, REPORT_RATE_FINAL.1);
        if r >= report_rate_initial {
            break r;
        }
    };
    let logistic_midpoint_frac = uniform(rng, LOGISTIC_MIDPOINT.0, LOGISTIC_MIDPOINT.1);
    let delay_mode_days = uniform_int(rng, DELAY_MODE.0 as u64, DELAY_MODE.1 as u64) as u32;
    let mut weekday_effects = [1.0; 7];
    for w in weekday_effects.iter_mut() {
        *w = normal(rng, 1.0, WEEKDAY_SD).max(0.01);
    }
    ObservationSpec {
        report_rate_initial,
        report_rate_final,
        logistic_midpoint_frac,
        logistic_steepness: 10.0 / horizon_days.max(1) as f64,
        delay_mode_days,
        delay_success_prob: DEFAULT_DELAY_SUCCESS_PROB,
        weekday_effects,
        noise_sigma_cases: uniform(rng, SIGMA_CASES.0, SIGMA_CASES.1),
        noise_sigma_hosp: uniform(rng, SIGMA_HOSP.0, SIGMA_HOSP.1),
        noise_sigma_deaths: uniform(rng, SIGMA_DEATHS.0, SIGMA_DEATHS.1),
    }
}

fn round_count(x: f64) -> u64 {
    x.round_ties_even().max(0.0) as u64
}

/// Binomial thinning with the logistic detection ramp.
pub fn apply_underreporting<R: Rng + ?Sized>(series: &[u64], spec: &ObservationSpec, rng: &mut R) -> Vec<u64> {
    let len = series.len();
    series
        .iter()
        .enumerate()
        .map(|(t, &c)| binomial(rng, c, spec.report_probability(t, len)))
        .collect()
}

/// Spreads each day's count over `delay_mode_days + Geometric(delay_success_prob)`
/// days. Counts pushed past the end of the series are lost.
pub fn apply_reporting_delay<R: Rng + ?Sized>(series: &[u64], spec: &ObservationSpec, rng: &mut R) -> Vec<u64> {
    let len = series.len();
    let mut out = vec![0u64; len];
    let q = spec.delay_success_prob.clamp(0.0, 1.0);
    let mode = spec.delay_mode_days as usize;
    for (t, &c) in series.iter().enumerate() {
        // Geometric memorylessness: the count landing at each extra lag is a
        // binomial draw of whatever has not landed yet.
        let mut remaining = c;
        let mut day = t + mode;
        while remaining > 0 && day < len {
            let landed = binomial(rng, remaining, q);
            out[day] += landed;
            remaining -= landed;
            day += 1;
        }
    }
    out
}

pub fn apply_weekday_effects(series: &[u64], effects: &[f64; 7]) -> Vec<u64> {
    series
        .iter()
        .enumerate()
        .map(|(t, &c)| round_count(c as f64 * effects[t % 7]))
        .collect()
}

/// Mean-one lognormal multiplicative noise.
pub fn apply_multiplicative_noise<R: Rng + ?Sized>(series: &[u64], sigma: f64, rng: &mut R) -> Vec<u64> {
    if sigma == 0.0 {
        return series.to_vec();
    }
    series
        .iter()
        .map(|&c| {
            if c == 0 {
                0
            } else {
                round_count(c as f64 * lognormal_mean_one(rng, sigma))
            }
        })
        .collect()
}

pub fn observe<R: Rng + ?Sized>(truth: &DailySeries, spec: &ObservationSpec, rng: &mut R) -> DailySeries {
    let stream = |series: &[u64], thin: bool, sigma: f64, rng: &mut R| {
        let thinned = if thin {
            apply_underreporting(series, spec, rng)
        } else {
            series.to_vec()
        };
        let delayed = apply_reporting_delay(&thinned, spec, rng);
        let weekly = apply_weekday_effects(&delayed, &spec.weekday_effects);
        apply_multiplicative_noise(&weekly, sigma, rng)
    };
    DailySeries {
        infections: stream(&truth.infections, true, spec.noise_sigma_cases, rng),
        hospitalizations: stream(&truth.hospitalizations, false, spec.noise_sigma_hosp, rng),
        deaths: stream(&truth.deaths, false, spec.noise_sigma_deaths, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::substream;

    fn spec_with(f: impl FnOnce(&mut ObservationSpec)) -> ObservationSpec {
        let mut s = ObservationSpec::identity();
        f(&mut s);
        s
    }

    #[test]
    fn underreporting_extremes() {
        let series: Vec<u64> = (0..50).map(|t| t * 13 % 97).collect();
        let mut rng = substream(1, 0);
        assert_eq!(apply_underreporting(&series, &ObservationSpec::identity(), &mut rng), series);
        let zero = spec_with(|s| {
            s.report_rate_initial = 0.0;
            s.report_rate_final = 0.0;
        });
        assert!(apply_underreporting(&series, &zero, &mut rng).iter().all(|&x| x == 0));
    }

    #[test]
    fn half_reporting_total_within_binomial_band() {
        let half = spec_with(|s| {
            s.report_rate_initial = 0.5;
            s.report_rate_final = 0.5;
        });
        let series = vec![10_000u64; 100];
        let out = apply_underreporting(&series, &half, &mut substream(2, 0));
        let total: u64 = out.iter().sum();
        let sd = (1e6f64 * 0.25).sqrt();
        assert!((total as f64 - 5e5).abs() < 3.0 * sd, "{total}");
    }

    #[test]
    fn thinning_tracks_the_ramp_pointwise() {
        let spec = spec_with(|s| {
            s.report_rate_initial = 0.1;
            s.report_rate_final = 0.8;
            s.logistic_midpoint_frac = 0.5;
            s.logistic_steepness = 0.2;
        });
        let len = 60;
        let series = vec![2_000u64; len];
        let reps = 200;
        let mut sums = vec![0u64; len];
        for k in 0..reps {
            let out = apply_underreporting(&series, &spec, &mut substream(3, k));
            for (s, o) in sums.iter_mut().zip(out) {
                *s += o;
            }
        }
        for t in 0..len {
            let p = spec.report_probability(t, len);
            let n = 2_000.0 * reps as f64;
            let sd = (n * p * (1.0 - p)).sqrt();
            assert!((sums[t] as f64 - n * p).abs() < 4.5 * sd, "day {t}");
        }
    }

    #[test]
    fn degenerate_delays_shift_exactly() {
        let series: Vec<u64> = vec![5, 0, 7, 11, 2, 9, 4];
        let mut rng = substream(4, 0);
        assert_eq!(apply_reporting_delay(&series, &ObservationSpec::identity(), &mut rng), series);
        let three = spec_with(|s| s.delay_mode_days = 3);
        assert_eq!(apply_reporting_delay(&series, &three, &mut rng), vec![0, 0, 0, 5, 0, 7, 11]);
    }

    #[test]
    fn delay_histogram_matches_shifted_geometric() {
        let spec = spec_with(|s| {
            s.delay_mode_days = 1;
            s.delay_success_prob = 0.5;
        });
        let mut series = vec![0u64; 40];
        series[0] = 100_000;
        let out = apply_reporting_delay(&series, &spec, &mut substream(5, 0));
        assert_eq!(out[0], 0);
        // Pearson chi-square over lags 1..=8 with the tail pooled.
        let n = 100_000.0;
        let mut chi2 = 0.0;
        let mut tail_obs = 0.0;
        let mut tail_exp = 0.0;
        for (d, &o) in out.iter().enumerate().skip(1) {
            let e = n * 0.5f64.powi(d as i32);
            if d <= 8 {
                chi2 += (o as f64 - e).powi(2) / e;
            } else {
                tail_obs += o as f64;
                tail_exp += e;
            }
        }
        chi2 += (tail_obs - tail_exp).powi(2) / tail_exp;
        // 8 degrees of freedom: the 0.99 quantile is 20.09.
        assert!(chi2 < 20.09, "chi2 = {chi2}");
    }

    #[test]
    fn delay_conserves_mass_when_horizon_is_long_enough() {
        let spec = spec_with(|s| {
            s.delay_mode_days = 2;
            s.delay_success_prob = 0.5;
        });
        let mut series = vec![0u64; 200];
        for v in series.iter_mut().take(50) {
            *v = 1_000;
        }
        let out = apply_reporting_delay(&series, &spec, &mut substream(6, 0));
        assert_eq!(out.iter().sum::<u64>(), 50_000);
        let short = apply_reporting_delay(&series[..52], &spec, &mut substream(6, 0));
        assert!(short.iter().sum::<u64>() <= 50_000);
    }

    #[test]
    fn weekday_effects_arithmetic() {
        let series = vec![5u64, 4, 3];
        let mut eff = [1.0; 7];
        assert_eq!(apply_weekday_effects(&series, &eff), series);
        eff[0] = 2.0;
        eff[1] = 0.625; // 2.5 rounds to even
        assert_eq!(apply_weekday_effects(&series, &eff), vec![10, 2, 3]);
    }

    #[test]
    fn weekday_long_run_ratio_is_mean_effect() {
        let mut rng = substream(7, 0);
        let mut eff = [1.0; 7];
        for w in eff.iter_mut() {
            *w = normal(&mut rng, 1.0, 0.05);
        }
        let series = vec![1_000u64; 7 * 400];
        let out = apply_weekday_effects(&series, &eff);
        let ratio = out.iter().sum::<u64>() as f64 / series.iter().sum::<u64>() as f64;
        let mean = eff.iter().sum::<f64>() / 7.0;
        assert!((ratio / mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn noise_identities_and_mean() {
        let mut rng = substream(8, 0);
        let series: Vec<u64> = (0..30).collect();
        assert_eq!(apply_multiplicative_noise(&series, 0.0, &mut rng), series);
        assert!(apply_multiplicative_noise(&[0; 10], 0.3, &mut rng).iter().all(|&x| x == 0));
        let flat = vec![10_000u64; 10_000];
        let out = apply_multiplicative_noise(&flat, 0.2, &mut rng);
        let mean = out.iter().sum::<u64>() as f64 / out.len() as f64;
        assert!((mean / 1e4 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn identity_pipeline_is_identity() {
        let truth = DailySeries {
            infections: vec![3, 9, 27, 81, 40],
            hospitalizations: vec![0, 1, 2, 3, 4],
            deaths: vec![0, 0, 1, 0, 2],
        };
        let out = observe(&truth, &ObservationSpec::identity(), &mut substream(9, 0));
        assert_eq!(out, truth);
    }

    #[test]
    fn sampled_specs_are_in_range() {
        for k in 0..2_000 {
            let s = sample_observation_spec(500, &mut substream(10, k));
            assert!(s.range_violations().is_empty(), "{:?}", s.range_violations());
            assert!((0.05..=0.10).contains(&s.noise_sigma_deaths));
        }
    }
}
