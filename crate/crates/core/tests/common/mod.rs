//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use sgnn_forge::epi::EpiParams;

/// Deterministic SEAIR trajectory integrated with classical RK4.
pub struct OdeRun {
    /// I compartment at the start of each day.
    pub infectious: Vec<f64>,
    pub susceptible: Vec<f64>,
}

/// Integrates the closed (no demography, no waning, no forcing) compartmental ODE
/// matching `params`' structure from `S = N - seed, I = seed`.
pub fn rk4_seair(params: &EpiParams, days: usize, step: f64) -> OdeRun {
    let n = params.population as f64;
    let beta = params.first_beta();
    let (gamma, sigma) = (params.gamma, params.sigma);
    let p_a = if params.has_asymptomatic { params.p_asymptomatic } else { 0.0 };
    let alpha = if params.has_asymptomatic { params.alpha } else { 0.0 };
    let has_e = params.has_exposed;

    // state = [S, E, A, I, R]
    let deriv = |x: &[f64; 5]| -> [f64; 5] {
        let lambda = beta * (x[3] + alpha * x[2]) / n;
        let inf = lambda * x[0];
        let (to_a, to_i, de) = if has_e {
            let prog = sigma * x[1];
            (p_a * prog, (1.0 - p_a) * prog, inf - prog)
        } else {
            (p_a * inf, (1.0 - p_a) * inf, 0.0)
        };
        [
            -inf,
            de,
            to_a - gamma * x[2],
            to_i - gamma * x[3],
            gamma * (x[2] + x[3]),
        ]
    };
    let seed = params.seed_infected as f64;
    let mut x = [n - seed, 0.0, 0.0, seed, 0.0];
    let per_day = (1.0 / step).round() as usize;
    let h = 1.0 / per_day as f64;
    let mut infectious = Vec::with_capacity(days);
    let mut susceptible = Vec::with_capacity(days);
    for _ in 0..days {
        infectious.push(x[3]);
        susceptible.push(x[0]);
        for _ in 0..per_day {
            let k1 = deriv(&x);
            let x2: [f64; 5] = std::array::from_fn(|j| x[j] + 0.5 * h * k1[j]);
            let k2 = deriv(&x2);
            let x3: [f64; 5] = std::array::from_fn(|j| x[j] + 0.5 * h * k2[j]);
            let k3 = deriv(&x3);
            let x4: [f64; 5] = std::array::from_fn(|j| x[j] + h * k3[j]);
            let k4 = deriv(&x4);
            for j in 0..5 {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
    }
    OdeRun {
        infectious,
        susceptible,
    }
}

pub fn peak(series: &[f64]) -> (usize, f64) {
    series
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (d, &v)| if v > acc.1 { (d, v) } else { acc })
}

/// Spectral radius of `F V^-1` built numerically from the model's infected
/// compartments at the disease-free equilibrium.
pub fn ngm_spectral_radius(params: &EpiParams) -> f64 {
    let beta = params.first_beta();
    let mu = if params.has_demography { params.mu } else { 0.0 };
    let p_a = if params.has_asymptomatic { params.p_asymptomatic } else { 0.0 };
    let alpha = params.alpha;
    let g = params.gamma + mu;

    // Infected states in order: [E?, A?, I]
    let mut names = Vec::new();
    if params.has_exposed {
        names.push('E');
    }
    if params.has_asymptomatic {
        names.push('A');
    }
    names.push('I');
    let idx = |c: char| names.iter().position(|&x| x == c);
    let k = names.len();
    let mut f = DMatrix::<f64>::zeros(k, k);
    let mut v = DMatrix::<f64>::zeros(k, k);

    // New infections generated by A (weight alpha) and I (weight 1).
    let sources: Vec<(usize, f64)> = [('A', alpha), ('I', 1.0)]
        .into_iter()
        .filter_map(|(c, w)| idx(c).map(|j| (j, w)))
        .collect();
    if let Some(e) = idx('E') {
        for &(j, w) in &sources {
            f[(e, j)] += beta * w;
        }
        v[(e, e)] = params.sigma + mu;
        if let Some(a) = idx('A') {
            v[(a, e)] = -p_a * params.sigma;
        }
        v[(idx('I').unwrap(), e)] = -(1.0 - p_a) * params.sigma;
    } else {
        for &(j, w) in &sources {
            if let Some(a) = idx('A') {
                f[(a, j)] += p_a * beta * w;
            }
            f[(idx('I').unwrap(), j)] += (1.0 - p_a) * beta * w;
        }
    }
    if let Some(a) = idx('A') {
        v[(a, a)] = g;
    }
    let i = idx('I').unwrap();
    v[(i, i)] = g;

    let ngm = f * v.try_inverse().expect("V is invertible");
    ngm.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Closed SEAIR configuration at `population` with `seed` initial infected.
/// Draws are rejected until R0 lies in `[r0_min, r0_max]`.
pub fn random_seair<R: rand::Rng>(
    rng: &mut R,
    population: u64,
    seed: u32,
    r0_min: f64,
    r0_max: f64,
) -> EpiParams {
    loop {
        let beta = rng.random_range(0.1..1.0);
        let gamma = rng.random_range(0.1..0.33);
        let mut p = EpiParams::sir(population, beta, gamma, 730, seed);
        p.has_exposed = true;
        p.has_asymptomatic = true;
        p.sigma = rng.random_range(0.2..0.4);
        p.p_asymptomatic = rng.random_range(0.1..0.7);
        p.alpha = rng.random_range(0.3..1.0);
        let r0 = sgnn_forge::epi::compute_r0(&p);
        if (r0_min..=r0_max).contains(&r0) {
            return p;
        }
    }
}

/// Peak-day and relative peak-height discrepancy between a simulated run and
/// the RK4 oracle.
pub fn peak_discrepancy(params: &EpiParams, simulated_i: &[u64]) -> (i64, f64) {
    let ode = rk4_seair(params, simulated_i.len(), 0.01);
    let (od, oh) = peak(&ode.infectious);
    let sim: Vec<f64> = simulated_i.iter().map(|&x| x as f64).collect();
    let (sd, sh) = peak(&sim);
    (sd as i64 - od as i64, sh / oh - 1.0)
}

/// Closed-form logistic solution.
pub fn logistic(t: f64, r: f64, n0: f64, k: f64) -> f64 {
    k / (1.0 + (k / n0 - 1.0) * (-r * t).exp())
}

/// Newton iteration on the predator-prey right-hand side, started from
/// `guess`, with a finite-difference Jacobian.
pub fn predator_prey_root(
    rhs: impl Fn(f64, f64) -> (f64, f64),
    guess: (f64, f64),
) -> Option<(f64, f64)> {
    let (mut h, mut l) = guess;
    for _ in 0..100 {
        let (f, g) = rhs(h, l);
        if f.abs() < 1e-13 && g.abs() < 1e-13 {
            return Some((h, l));
        }
        let eps = 1e-7;
        let (fh, gh) = rhs(h + eps, l);
        let (fl, gl) = rhs(h, l + eps);
        let j = [
            [(fh - f) / eps, (fl - f) / eps],
            [(gh - g) / eps, (gl - g) / eps],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        h -= (j[1][1] * f - j[0][1] * g) / det;
        l -= (-j[1][0] * f + j[0][0] * g) / det;
    }
    let (f, g) = rhs(h, l);
    (f.abs() < 1e-9 && g.abs() < 1e-9).then_some((h, l))
}
