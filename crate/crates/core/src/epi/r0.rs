use super::params::EpiParams;
use super::sim::EpiTrajectory;

/// Basic reproduction number from the next-generation matrix of the model
/// structure, using the first wave's beta and the seasonal mean of 1.
pub fn compute_r0(params: &EpiParams) -> f64 {
    r0_with_beta(params, params.first_beta())
}

/// Same closed form with an arbitrary transmission rate.
pub fn r0_with_beta(params: &EpiParams, beta: f64) -> f64 {
    let mu = if params.has_demography { params.mu } else { 0.0 };
    let latent_survival = if params.has_exposed {
        params.sigma / (params.sigma + mu)
    } else {
        1.0
    };
    let p_a = if params.has_asymptomatic {
        params.p_asymptomatic
    } else {
        0.0
    };
    beta * latent_survival * ((1.0 - p_a) + params.alpha * p_a) / (params.gamma + mu)
}

/// Effective reproduction number per day: R0 evaluated at the day's
/// `beta(t) * s(t) * npi(t)`, scaled by `S(t) / N(t)`.
pub fn compute_rt_series(traj: &EpiTrajectory, params: &EpiParams) -> Vec<f64> {
    let days = traj.latent.s.len();
    (0..days)
        .map(|t| {
            let day = t as u32;
            let n = traj.latent.total(t);
            if n == 0 {
                return 0.0;
            }
            let beta = params.beta_at(day) * params.seasonal_factor(day as f64) * traj.npi_multiplier(day);
            r0_with_beta(params, beta) * traj.latent.s[t] as f64 / n as f64
        })
        .collect()
}
