//! Stochastic compartmental epidemic simulator (SIR / SEIR / SEAIR families with
//! optional asymptomatic spread, waning immunity, demography, importation,
//! seasonality, super-spreading, multi-wave transmission and interventions).

pub mod clinical;
pub mod params;
pub mod r0;
pub mod sim;

pub use clinical::{apply_clinical_outcomes, ClinicalOutcomes};
pub use params::{
    sample_epi_params, BetaWave, ClinicalWave, EpiConfig, EpiParams, Harmonic, InterventionSpec,
};
pub use r0::{compute_r0, compute_rt_series, r0_with_beta};
pub use sim::{simulate_epidemic, Compartments, DailySeries, EpiTrajectory, InterventionWindow};
