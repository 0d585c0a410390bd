//! Forecast and inference metrics plus the analytic growth-rate baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of leading days used for the growth-rate fit.
pub const GROWTH_WINDOW_DAYS: usize = 21;
pub const MIN_GROWTH_POINTS: usize = 5;

pub fn naive_forecast(history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = *history
        .last()
        .ok_or_else(|| Error::InsufficientData("naive forecast needs a non-empty history".into()))?;
    Ok(vec![last; horizon])
}

pub fn mean_absolute_error(forecast: &[f64], truth: &[f64]) -> Result<f64> {
    aligned(forecast.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("MAE of an empty series".into()));
    }
    Ok(forecast.iter().zip(truth).map(|(f, y)| (f - y).abs()).sum::<f64>() / truth.len() as f64)
}

/// Percentage improvement in MAE over the naive forecast; negative when the
/// model is worse.
pub fn forecasting_skill(model_mae: f64, naive_mae: f64) -> Result<f64> {
    if naive_mae <= 0.0 || !naive_mae.is_finite() {
        return Err(Error::UndefinedMetric(format!("skill against naive MAE {naive_mae}")));
    }
    Ok(100.0 * (naive_mae - model_mae) / naive_mae)
}

/// Quantile forecasts for one series: `levels[j]` pairs with `values[j][t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub levels: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl QuantileForecast {
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != self.values.len() {
            return Err(Error::Parameter("one value series per quantile level".into()));
        }
        if self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!("quantile levels {:?} not strictly increasing in (0, 1)", self.levels)));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite quantile forecast".into()));
        }
        Ok(())
    }
}

/// Mean over levels and times of `tau (y - q)+ + (1 - tau) (q - y)+`.
pub fn pinball_loss(forecast: &QuantileForecast, truth: &[f64]) -> Result<f64> {
    forecast.validate()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (&tau, qs) in forecast.levels.iter().zip(&forecast.values) {
        aligned(qs.len(), truth.len())?;
        for (&q, &y) in qs.iter().zip(truth) {
            total += tau * (y - q).max(0.0) + (1.0 - tau) * (q - y).max(0.0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("pinball loss of an empty forecast".into()));
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct R0Errors {
    pub mse: f64,
    /// Mean absolute percentage error.
    pub mpe: f64,
}

pub fn r0_error_metrics(estimates: &[f64], truths: &[f64]) -> Result<R0Errors> {
    aligned(estimates.len(), truths.len())?;
    if truths.is_empty() {
        return Err(Error::UndefinedMetric("R0 errors of an empty batch".into()));
    }
    if let Some(t) = truths.iter().find(|&&t| t <= 0.0) {
        return Err(Error::UndefinedMetric(format!("percentage error against truth {t}")));
    }
    let n = truths.len() as f64;
    let mse = estimates.iter().zip(truths).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / n;
    let mpe = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs() / t).sum::<f64>() / n * 100.0;
    Ok(R0Errors { mse, mpe })
}

/// Fraction of cases whose true label appears in the first `k` of its ranking.
pub fn topk_accuracy<T: PartialEq>(rankings: &[Vec<T>], labels: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("top-k needs k >= 1".into()));
    }
    aligned(rankings.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("top-k accuracy of no cases".into()));
    }
    let hits = rankings
        .iter()
        .zip(labels)
        .filter(|(r, l)| r.iter().take(k).any(|x| x == *l))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Per-day exponential growth rate.
    pub rate: f64,
    pub points_used: usize,
    pub zeros_dropped: usize,
}

/// Least-squares slope of `ln c_t` against `t` over the positive entries;
/// zero and negative counts are dropped, not offset.
pub fn fit_exp_growth_rate(early_cases: &[f64]) -> Result<GrowthFit> {
    let pts: Vec<(f64, f64)> = early_cases
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(t, &c)| (t as f64, c.ln()))
        .collect();
    if pts.len() < MIN_GROWTH_POINTS {
        return Err(Error::InsufficientData(format!(
            "growth fit needs {MIN_GROWTH_POINTS} positive points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm).powi(2)).sum();
    Ok(GrowthFit {
        rate: sxy / sxx,
        points_used: pts.len(),
        zeros_dropped: early_cases.len() - pts.len(),
    })
}

/// Growth-rate to reproduction number under exponentially distributed stage
/// durations: `(1 + r L)(1 + r D)`, or `1 + r D` without a latent stage.
pub fn r0_from_growth(rate: f64, latent_mean: Option<f64>, infectious_mean: f64) -> Result<f64> {
    if infectious_mean <= 0.0 || latent_mean.is_some_and(|l| l <= 0.0) {
        return Err(Error::Parameter("stage means must be positive".into()));
    }
    Ok((1.0 + rate * latent_mean.unwrap_or(0.0)) * (1.0 + rate * infectious_mean))
}

/// Estimates R0 from the first `window` days of a reported series.
pub fn estimate_r0(series: &[f64], window: usize, latent_mean: Option<f64>, infectious_mean: f64) -> Result<(f64, GrowthFit)> {
    let fit = fit_exp_growth_rate(&series[..window.min(series.len())])?;
    Ok((r0_from_growth(fit.rate, latent_mean, infectious_mean)?, fit))
}

/// One scored point forecast against its truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPoint {
    pub location: String,
    pub horizon: u32,
    pub forecast: f64,
    pub naive: f64,
    pub truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillSummary {
    pub model_mae: f64,
    pub naive_mae: f64,
    pub skill: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    /// All absolute errors pooled before the ratio.
    pub pooled: SkillSummary,
    pub by_location: BTreeMap<String, SkillSummary>,
    pub by_horizon: BTreeMap<u32, SkillSummary>,
}

fn summarize<'a>(points: impl Iterator<Item = &'a ScoredPoint>) -> SkillSummary {
    let (mut m, mut b, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        m += (p.forecast - p.truth).abs();
        b += (p.naive - p.truth).abs();
        n += 1;
    }
    let (model_mae, naive_mae) = if n == 0 { (0.0, 0.0) } else { (m / n as f64, b / n as f64) };
    SkillSummary {
        model_mae,
        naive_mae,
        skill: forecasting_skill(model_mae, naive_mae).ok(),
        count: n,
    }
}

pub fn skill_report(points: &[ScoredPoint]) -> SkillReport {
    let mut locations: BTreeMap<String, Vec<&ScoredPoint>> = BTreeMap::new();
    let mut horizons: BTreeMap<u32, Vec<&ScoredPoint>> = BTreeMap::new();
    for p in points {
        locations.entry(p.location.clone()).or_default().push(p);
        horizons.entry(p.horizon).or_default().push(p);
    }
    SkillReport {
        pooled: summarize(points.iter()),
        by_location: locations.into_iter().map(|(k, v)| (k, summarize(v.into_iter()))).collect(),
        by_horizon: horizons.into_iter().map(|(k, v)| (k, summarize(v.into_iter()))).collect(),
    }
}

fn aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Parameter(format!("misaligned lengths {a} and {b}")));
    }
    Ok(())
}
