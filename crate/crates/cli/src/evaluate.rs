//! Forecast scoring for `eval-skill`.
//!
//! The naive forecast for a target `horizon` rows ahead is the truth value
//! `horizon` rows earlier in the same location's date-sorted series.

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Value};
use sgnn_forge::metrics::{pinball_loss, skill_report, QuantileForecast, ScoredPoint};

use crate::inputs::{ForecastRow, TruthRow};
use crate::Failure;

fn date_key(date: &str) -> (Option<i64>, &str) {
    (date.parse().ok(), date)
}

pub fn evaluate(truth: &[TruthRow], forecasts: &[ForecastRow]) -> Result<Value, Failure> {
    let mut series: HashMap<&str, Vec<(&str, f64)>> = HashMap::new();
    for t in truth {
        series.entry(&t.location).or_default().push((&t.date, t.value));
    }
    let mut position: HashMap<(&str, &str), usize> = HashMap::new();
    for (loc, s) in series.iter_mut() {
        s.sort_by(|a, b| date_key(a.0).cmp(&date_key(b.0)));
        for (i, (date, _)) in s.iter().enumerate() {
            if position.insert((loc, date), i).is_some() {
                return Err(Failure::Validation(format!("duplicate truth row for {loc} on {date}")));
            }
        }
    }

    let quantile = forecasts.iter().any(|f| f.q_level.is_some());
    let mut groups: BTreeMap<(&str, &str, u32), Vec<(f64, f64)>> = BTreeMap::new();
    for f in forecasts {
        let level = if quantile {
            f.q_level.ok_or_else(|| Failure::Validation("q_level missing on some forecast rows".into()))?
        } else {
            0.5
        };
        groups.entry((&f.location, &f.date, f.horizon)).or_default().push((level, f.value));
    }

    let (mut no_truth, mut no_origin, mut no_median) = (0usize, 0usize, 0usize);
    let mut points = Vec::new();
    let (mut pinball_sum, mut pinball_count) = (0.0, 0usize);
    for ((loc, date, horizon), mut entries) in groups {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Failure::Validation(format!("duplicate forecast for {loc} on {date} at horizon {horizon}")));
        }
        let Some(&idx) = position.get(&(loc, date)) else {
            no_truth += 1;
            continue;
        };
        let s = &series[loc];
        let y = s[idx].1;
        if quantile {
            let q = QuantileForecast {
                levels: entries.iter().map(|e| e.0).collect(),
                values: entries.iter().map(|e| vec![e.1]).collect(),
            };
            pinball_sum += pinball_loss(&q, &[y])?;
            pinball_count += 1;
        }
        let Some(origin) = idx.checked_sub(horizon as usize) else {
            no_origin += 1;
            continue;
        };
        let Some(&(_, point)) = entries.iter().find(|e| (e.0 - 0.5).abs() < 1e-9) else {
            no_median += 1;
            continue;
        };
        points.push(ScoredPoint {
            location: loc.to_string(),
            horizon,
            forecast: point,
            naive: s[origin].1,
            truth: y,
        });
    }

    Ok(json!({
        "forecast_type": if quantile { "quantile" } else { "point" },
        "scored": points.len(),
        "skipped": { "no_truth": no_truth, "no_origin": no_origin, "no_median": no_median },
        "skill": skill_report(&points),
        "pinball": (pinball_count > 0).then(|| json!({ "mean": pinball_sum / pinball_count as f64, "forecasts": pinball_count })),
    }))
}
