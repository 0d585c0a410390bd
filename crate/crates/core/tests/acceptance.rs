//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Run with `cargo test -p sgnn-forge-core --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde_json::json;
use sgnn_forge::attribution::{retrieve_topk, DbEntry, EmbeddingDB};
use sgnn_forge::cascade::{generate_ba_graph, mask_cascade, rumor_center, simulate_ic, GraphMeta, NetGraph, SENTINEL};
use sgnn_forge::corpus::stats::read_side_graph;
use sgnn_forge::corpus::*;
use sgnn_forge::eco::*;
use sgnn_forge::epi::*;
use sgnn_forge::metrics::*;
use sgnn_forge::stochastics::{normal, substream};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn generate(dir: &Path, config: &CorpusConfig, domain: Domain, count: u64, seed: u64, threads: Option<usize>) -> CorpusManifest {
    let opts = GenerateOptions {
        domain,
        count,
        master_seed: seed,
        threads,
    };
    generate_corpus(dir, config, &opts).expect("corpus generation")
}

fn epidemic_conservation() -> Outcome {
    let config = EpiConfig {
        p_exposed: 0.7,
        p_asymptomatic: 0.5,
        p_npi: 0.25,
        p_waning: 0.5,
        p_superspreading: 0.5,
        p_seasonality: 1.0,
        ..EpiConfig::closed_sir()
    };
    let start = Instant::now();
    let (mut violations, mut days) = (0u64, 0u64);
    for k in 0..10_000 {
        let mut rng = substream(7001, k);
        let p = sample_epi_params(&config, &mut rng);
        let t = simulate_epidemic(&p, &mut rng).expect("simulation");
        for day in 0..t.horizon() {
            violations += u64::from(t.latent.total(day) != p.population);
        }
        days += t.horizon() as u64;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        violations == 0 && secs < 60.0,
        format!("10000 runs, {days} days, {violations} violations, {secs:.1} s single-threaded"),
    )
}

fn deterministic_limit() -> Outcome {
    let mut draws = substream(7002, 0);
    let (mut worst_dt, mut worst_dh) = (0i64, 0f64);
    for k in 0..20 {
        let p = common::random_seair(&mut draws, 10_000_000, 100, 2.0, 8.0);
        let t = simulate_epidemic(&p, &mut substream(7002, 1 + k)).expect("simulation");
        let (dt, dh) = common::peak_discrepancy(&p, &t.latent.i);
        worst_dt = worst_dt.max(dt.abs());
        worst_dh = worst_dh.max(dh.abs());
    }
    check(
        worst_dt <= 3 && worst_dh <= 0.05,
        format!("20 SEAIR runs at N=1e7: worst peak timing {worst_dt} d, worst peak height {:.2}%", 100.0 * worst_dh),
    )
}

fn analytic_r0() -> Outcome {
    let mut worst = 0f64;
    for k in 0..1000 {
        let mut rng = substream(7003, k);
        let mut p = sample_epi_params(&EpiConfig::default(), &mut rng);
        p.has_exposed = rng.random_bool(0.5);
        p.has_asymptomatic = rng.random_bool(0.5);
        p.has_demography = rng.random_bool(0.5);
        worst = worst.max((compute_r0(&p) - common::ngm_spectral_radius(&p)).abs());
    }
    check(worst < 1e-9, format!("1000 draws, max |analytic - NGM| = {worst:.2e}"))
}

fn table_conformance() -> Outcome {
    let dir = tempdir();
    let config = EpiConfig::default();
    let records = (0..100_000u64).map(|id| {
        let p = sample_epi_params(&config, &mut substream(7004, id));
        Ok(CorpusRecord {
            id,
            domain: Domain::Epi,
            params: json!({ "r0": compute_r0(&p), "params": p }),
            arrays: Vec::new(),
        })
    });
    let manifest = CorpusManifest::new(Domain::Epi, 7004, json!({ "epi": config }));
    write_corpus(dir.path(), manifest, 10_000, records).expect("corpus write");
    let stats = corpus_stats(dir.path()).expect("stats");
    let within = stats.checks["every_beta_within_support"] == json!(true) && stats.checks["range_violations"] == json!(0);
    let mut detail = format!("1e5 draws, all parameters in support: {within}; flags");
    let mut ok = within;
    for (flag, target) in [("has_exposed", 0.70), ("has_asymptomatic", 0.50), ("has_npi", 0.25), ("has_demography", 0.80)] {
        let f = stats.params[&format!("params.{flag}")].mean;
        ok &= (f - target).abs() <= 0.01;
        detail.push_str(&format!(" {flag}={f:.4}"));
    }
    check(ok, detail)
}

fn chem_calibration() -> Outcome {
    let dir = tempdir();
    generate(dir.path(), &CorpusConfig::default(), Domain::Chem, 100_000, 7005, None);
    let stats = corpus_stats(dir.path()).expect("stats");
    let num = |k: &str| stats.checks[k].as_f64().unwrap_or(f64::NAN);
    let (mean, std, fail) = (num("yield_mean"), num("yield_std"), num("failure_rate"));
    let strata = &stats.checks["strata"];
    let frac = |s: &str| strata[s].as_f64().unwrap_or(0.0);
    let (m, h, u) = (frac("memorized"), frac("partial"), frac("uniform"));
    let ok = (mean - 0.62).abs() <= 0.02
        && (std - 0.28).abs() <= 0.02
        && (fail - 0.091).abs() <= 0.015
        && (m - 0.6).abs() <= 0.01
        && (h - 0.3).abs() <= 0.01
        && (u - 0.1).abs() <= 0.01;
    check(
        ok,
        format!(
            "stand-in table, 1e5 reactions: mean {mean:.4}, std {std:.4}, failures {:.2}%, strata {:.3}/{:.3}/{:.3}",
            100.0 * fail,
            m,
            h,
            u
        ),
    )
}

fn cascade_suite() -> Outcome {
    let g = generate_ba_graph(1000, 5, &mut substream(7006, 0)).expect("graph");
    let mut rng = substream(7006, 1);
    let mut degenerate_ok = true;
    for _ in 0..50 {
        let s = rng.random_range(0..1000u32);
        let none = simulate_ic(&g, s, 0.0, 15, &mut rng).expect("cascade");
        degenerate_ok &= none.infected_count() == 1 && none.infection_time[s as usize] == 0;
        let all = simulate_ic(&g, s, 1.0, 15, &mut rng).expect("cascade");
        let dist = g.bfs_distances(s as usize);
        degenerate_ok &= all
            .infection_time
            .iter()
            .zip(&dist)
            .all(|(&t, d)| match d {
                Some(d) if *d <= 15 => t == *d as i32,
                _ => t == SENTINEL,
            });
    }

    let star_edges: Vec<(u32, u32)> = (1..=99).map(|v| (0, v)).collect();
    let meta = GraphMeta {
        model: "star".into(),
        variant: "hub 0".into(),
        m: 1,
        seed: None,
    };
    let star = NetGraph::from_edges(100, &star_edges, meta).expect("star");
    let total: usize = (0..10_000)
        .map(|_| simulate_ic(&star, 0, 0.05, 15, &mut rng).expect("cascade").infected_count())
        .sum();
    let star_mean = total as f64 / 1e4;

    let mut hidden_sources = 0;
    for _ in 0..10_000 {
        let s = rng.random_range(0..1000u32);
        let c = simulate_ic(&g, s, 0.05, 15, &mut rng).expect("cascade");
        hidden_sources += usize::from(mask_cascade(&c, 0.2, &mut rng).expect("mask").source_masked());
    }
    let masked_rate = hidden_sources as f64 / 1e4;
    check(
        degenerate_ok && (star_mean - 5.95).abs() <= 0.2 && (masked_rate - 0.2).abs() <= 0.01,
        format!(
            "p=0/p=1 exact: {degenerate_ok}; star mean {star_mean:.3} (5.95); source masked {:.2}%",
            100.0 * masked_rate
        ),
    )
}

fn rumor_center_sanity() -> Outcome {
    let dir = tempdir();
    let config = CorpusConfig::default();
    generate(dir.path(), &config, Domain::Cascade, 2000, 7007, None);
    let g = read_side_graph(dir.path()).expect("graph side file");
    let mut rankings = Vec::new();
    let mut labels = Vec::new();
    for rec in CorpusReader::open(dir.path()).expect("reader").records() {
        let rec = rec.expect("record");
        let times = rec.array("true_infection_time").and_then(|a| a.as_i32()).expect("times");
        let seen = &rec.array("observed_mask").expect("mask").data;
        let infected: Vec<u32> = (0..times.len()).filter(|&v| times[v] >= 0 && seen[v] == 1).map(|v| v as u32).collect();
        let ranked = if infected.is_empty() {
            Vec::new()
        } else {
            rumor_center(&g, &infected).expect("ranking").ranked.into_iter().map(|(v, _)| v).collect()
        };
        rankings.push(ranked);
        labels.push(rec.params["source"].as_u64().expect("source") as u32);
    }
    let top1 = topk_accuracy(&rankings, &labels, 1).expect("top-1");
    let top20 = topk_accuracy(&rankings, &labels, 20).expect("top-20");
    let random = 1.0 / g.len() as f64;
    check(
        top1 >= 100.0 * random && (top1 - 0.588).abs() <= 0.10 && (top20 - 0.721).abs() <= 0.10,
        format!(
            "2000 cascades on BA(1000,5), p=0.05: top-1 {:.1}% ({:.0}x random), top-20 {:.1}%",
            100.0 * top1,
            top1 / random,
            100.0 * top20
        ),
    )
}

fn random_db(count: usize, dim: usize, seed: u64) -> EmbeddingDB {
    let mut rng = substream(seed, 0);
    let entries = (0..count)
        .map(|i| DbEntry {
            id: i as u64,
            embedding: (0..dim).map(|_| normal(&mut rng, 0.0, 1.0) as f32).collect(),
            params: json!({ "population": rng.random_range(1e5..1e7) }),
        })
        .collect();
    EmbeddingDB::build(entries, "acceptance").expect("db")
}

fn attribution_suite() -> Outcome {
    let db = random_db(1000, 1024, 7008);
    let mut rng = substream(7008, 1);
    let mut exact = true;
    for _ in 0..10 {
        let q: Vec<f32> = (0..1024).map(|_| normal(&mut rng, 0.0, 1.0) as f32).collect();
        let qn = q.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        let mut all: Vec<(u64, f64)> = (0..db.len())
            .map(|r| {
                let e = db.embedding(r);
                let dot: f64 = e.iter().zip(&q).map(|(&a, &b)| a as f64 * b as f64).sum();
                let en = e.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
                (db.ids[r], dot / (en * qn))
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let hits = retrieve_topk(&db, &q, 50).expect("top-k");
        exact &= hits.iter().zip(&all).all(|(h, (id, s))| h.id == *id && (h.score - s).abs() < 1e-12);
    }

    let dir = tempdir();
    let path = dir.path().join("db.sged");
    let start = Instant::now();
    let big = random_db(10_000, 1024, 7009);
    big.save(&path).expect("save");
    let loaded = EmbeddingDB::load(&path).expect("load");
    let hits = retrieve_topk(&loaded, loaded.embedding(42), 50).expect("top-k");
    let secs = start.elapsed().as_secs_f64();
    check(
        exact && hits[0].id == 42 && secs < 5.0,
        format!("top-50 equals sort oracle: {exact}; 1e4 x 1024 build+save+load+scan {secs:.2} s"),
    )
}

fn metrics_suite() -> Outcome {
    let skill = forecasting_skill(21.2, 10.0).expect("skill");
    let mut rng = substream(7010, 0);
    let truth: Vec<f64> = (0..500).map(|_| normal(&mut rng, 50.0, 10.0)).collect();
    let median: Vec<f64> = truth.iter().map(|y| y + normal(&mut rng, 0.0, 5.0)).collect();
    let pinball = pinball_loss(
        &QuantileForecast {
            levels: vec![0.5],
            values: vec![median.clone()],
        },
        &truth,
    )
    .expect("pinball");
    let mae = mean_absolute_error(&median, &truth).expect("mae");
    let mut worst_rate = 0f64;
    for r in [0.02, 0.1, 0.23, -0.05] {
        let cases: Vec<f64> = (0..21).map(|t| 30.0 * (r * t as f64).exp()).collect();
        worst_rate = worst_rate.max((fit_exp_growth_rate(&cases).expect("fit").rate - r).abs());
    }
    let ok = (skill + 112.0).abs() < 1e-9 && (pinball - mae / 2.0).abs() < 1e-12 && worst_rate < 1e-9;
    check(
        ok,
        format!("skill(21.2 vs 10.0) = {skill:.3}; pinball - MAE/2 = {:.1e}; growth-rate error {worst_rate:.1e}", pinball - mae / 2.0),
    )
}

fn corpus_bytes(dir: &Path) -> Vec<Vec<u8>> {
    let m = CorpusManifest::read(dir).expect("manifest");
    m.shards
        .iter()
        .map(|s| &s.file)
        .chain(&m.side_files)
        .map(|f| std::fs::read(dir.join(f)).expect("shard"))
        .collect()
}

fn determinism() -> Outcome {
    let mut config = CorpusConfig {
        shard_size: 50,
        ..CorpusConfig::default()
    };
    config.epi.horizon_days = (60, 240);
    let mut detail = Vec::new();
    let mut ok = true;
    for (domain, count) in [
        (Domain::Epi, 120),
        (Domain::EcoButterfly, 120),
        (Domain::EcoLynxhare, 120),
        (Domain::Chem, 3000),
        (Domain::Cascade, 300),
    ] {
        let runs: Vec<Vec<Vec<u8>>> = [1, 4, 8]
            .iter()
            .map(|&t| {
                let dir = tempdir();
                generate(dir.path(), &config, domain, count, 7011, Some(t));
                corpus_bytes(dir.path())
            })
            .collect();
        let same = runs[0] == runs[1] && runs[0] == runs[2];
        ok &= same;
        detail.push(format!("{}={}", domain.cli_name(), if same { "identical" } else { "DIFFER" }));
    }
    check(ok, format!("1/4/8 workers: {}", detail.join(", ")))
}

fn eco_suite() -> Outcome {
    let mut worst_logistic = 0f64;
    for (r, n0, k) in [(0.15, 50.0, 125.0), (0.4, 250.0, 400.0), (0.27, 100.0, 180.0), (0.5, 20.0, 300.0)] {
        let mut p = sample_butterfly_community(&mut substream(7012, 0));
        p.growth_rate = vec![r];
        p.initial = vec![n0];
        p.capacity = vec![k];
        p.competition = vec![0.0];
        p.seasonal_amplitude = 0.0;
        p.noise = EcoNoise::NONE;
        let t = simulate_butterfly(&p, &mut substream(7012, 1)).expect("butterfly");
        for (year, &n) in t.latent[0].iter().enumerate() {
            worst_logistic = worst_logistic.max((n / common::logistic(year as f64, r, n0, k) - 1.0).abs());
        }
    }

    let spec = CountObservation {
        log10_sd: 0.0,
        ..CountObservation::default()
    };
    let mu = 150.0;
    let draws = 400_000;
    let obs = observe_counts(&[vec![mu; draws]], &spec, true, &mut substream(7012, 2));
    let counts: Vec<f64> = obs[0].iter().map(|x| (10f64.powf(*x) - 1.0).round()).collect();
    let mean = counts.iter().sum::<f64>() / draws as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let nb_target = mu + mu * mu / 2000.0;
    let var_err = (var / nb_target - 1.0).abs();

    let mut rng = substream(7012, 3);
    let mut worst_eq = 0f64;
    let mut held = 0;
    while held < 20 {
        let mut p = sample_lynx_hare(&mut rng);
        p.noise = EcoNoise::NONE;
        let rhs = |h: f64, l: f64| {
            (
                p.r * h * (1.0 - h / p.capacity) - p.predation * h * l,
                p.conversion * h * l - p.mortality * l - p.self_limitation * l * l,
            )
        };
        let Some((h, l)) = common::predator_prey_root(rhs, (p.capacity / 2.0, 5.0)) else {
            continue;
        };
        if h <= 0.0 || l <= 0.0 || h > p.hare_max || l > p.lynx_max {
            continue;
        }
        p.hare0 = h;
        p.lynx0 = l;
        p.horizon_years = 100;
        let t = simulate_lynx_hare(&p, &mut substream(7012, 4)).expect("lynx-hare");
        for year in 0..100 {
            worst_eq = worst_eq.max((t.latent[0][year] / h - 1.0).abs()).max((t.latent[1][year] / l - 1.0).abs());
        }
        held += 1;
    }
    check(
        worst_logistic < 0.005 && var_err < 0.05 && worst_eq < 0.01,
        format!(
            "logistic max error {:.3}%; NB variance {var:.1} vs {nb_target:.2} ({:.1}%); equilibrium drift {:.3}% over 100 y",
            100.0 * worst_logistic,
            100.0 * var_err,
            100.0 * worst_eq
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("epidemic conservation", epidemic_conservation),
        ("deterministic limit", deterministic_limit),
        ("analytic R0", analytic_r0),
        ("prior conformance", table_conformance),
        ("chem calibration", chem_calibration),
        ("cascade suite", cascade_suite),
        ("rumor center sanity", rumor_center_sanity),
        ("attribution", attribution_suite),
        ("metrics", metrics_suite),
        ("determinism", determinism),
        ("eco", eco_suite),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {detail}  [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail}  [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
