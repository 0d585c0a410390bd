//! wasm-bindgen entry points for the static demo page in `www/`. Each call
//! returns a JSON string for the page to plot.

use serde_json::{json, Value};
use sgnn_forge::cascade::{generate_ba_graph, laplacian_pe, mask_cascade, rumor_center, simulate_ic, DEFAULT_MAX_STEPS};
use sgnn_forge::eco::{sample_lynx_hare, simulate_lynx_hare, EcoNoise};
use sgnn_forge::epi::{compute_r0, sample_epi_params, simulate_epidemic, EpiConfig};
use sgnn_forge::observation::{observe, sample_observation_spec};
use sgnn_forge::stochastics::substream;
use sgnn_forge::Result;
use wasm_bindgen::prelude::*;

fn to_js(result: Result<Value>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

/// One epidemic drawn from the full prior, truncated to `days`.
pub fn epidemic(seed: u64, days: u32) -> Result<Value> {
    let config = EpiConfig {
        horizon_days: (days, days),
        ..EpiConfig::default()
    };
    let base = substream(seed, 0);
    let mut prng = base.fork(0);
    let params = sample_epi_params(&config, &mut prng);
    let spec = sample_observation_spec(params.horizon_days, &mut prng);
    let traj = simulate_epidemic(&params, &mut base.fork(1))?;
    let reported = observe(&traj.truth, &spec, &mut base.fork(2));
    Ok(json!({
        "r0": compute_r0(&params),
        "population": params.population,
        "flags": {
            "exposed": params.has_exposed,
            "asymptomatic": params.has_asymptomatic,
            "waning": params.has_waning,
            "demography": params.has_demography,
            "npi": params.has_npi,
            "superspreading": params.has_superspreading,
        },
        "true_infections": traj.truth.infections,
        "reported_infections": reported.infections,
        "true_deaths": traj.truth.deaths,
        "rt": traj.rt,
        "interventions": traj.interventions,
    }))
}

/// Hare and lynx trajectories, latent and observed.
pub fn lynx_hare(seed: u64, years: usize, noisy: bool) -> Result<Value> {
    let base = substream(seed, 1);
    let mut params = sample_lynx_hare(&mut base.fork(0));
    params.horizon_years = years.max(2);
    params.noise = if noisy { EcoNoise::ALL } else { EcoNoise::NONE };
    let traj = simulate_lynx_hare(&params, &mut base.fork(1))?;
    Ok(json!({
        "equilibrium": params.coexistence_equilibrium(),
        "hare": traj.latent[0],
        "lynx": traj.latent[1],
        "hare_observed_log10": traj.observed_log10[0],
        "lynx_observed_log10": traj.observed_log10[1],
    }))
}

/// A cascade on a fresh preferential-attachment graph, laid out by the first
/// two Laplacian eigenvectors, with the source ranking of the observed nodes.
pub fn cascade(seed: u64, nodes: usize, p: f64, mask_fraction: f64) -> Result<Value> {
    let base = substream(seed, 2);
    let g = generate_ba_graph(nodes, 2, &mut base.fork(0))?;
    let layout = laplacian_pe(&g, 2)?;
    let source = (seed % nodes as u64) as u32;
    let full = simulate_ic(&g, source, p, DEFAULT_MAX_STEPS, &mut base.fork(1))?;
    let observed = mask_cascade(&full, mask_fraction, &mut base.fork(2))?;
    let infected = observed.infected_observed();
    let ranking = if infected.is_empty() { None } else { Some(rumor_center(&g, &infected)?) };
    Ok(json!({
        "x": layout.column(0),
        "y": layout.column(1),
        "edges": g.edges().collect::<Vec<_>>(),
        "source": source,
        "infection_time": full.infection_time,
        "observed": observed.observed_mask,
        "ranked": ranking.map(|r| r.ranked.into_iter().take(10).collect::<Vec<_>>()),
    }))
}

#[wasm_bindgen(js_name = simulateEpidemic)]
pub fn simulate_epidemic_js(seed: u32, days: u32) -> Result<String, JsError> {
    to_js(epidemic(seed.into(), days))
}

#[wasm_bindgen(js_name = simulateLynxHare)]
pub fn simulate_lynx_hare_js(seed: u32, years: u32, noisy: bool) -> Result<String, JsError> {
    to_js(lynx_hare(seed.into(), years as usize, noisy))
}

#[wasm_bindgen(js_name = simulateCascade)]
pub fn simulate_cascade_js(seed: u32, nodes: u32, p: f64, mask_fraction: f64) -> Result<String, JsError> {
    to_js(cascade(seed.into(), nodes as usize, p, mask_fraction))
}
