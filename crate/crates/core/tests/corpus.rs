use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;
use sgnn_forge::corpus::generate::{GRAPH_FILE, LAPPE_FILE};
use sgnn_forge::corpus::shard::{shard_name, ShardReader};
use sgnn_forge::corpus::*;
use sgnn_forge::error::Error;
use sgnn_forge::stochastics::{normal, substream};

fn synthetic(id: u64) -> CorpusRecord {
    let mut rng = substream(id, 3);
    let n = 1 + id % 17;
    CorpusRecord {
        id,
        domain: Domain::Epi,
        params: json!({ "id": id, "beta": normal(&mut rng, 0.5, 0.1), "tags": ["a", id.to_string()] }),
        arrays: vec![
            Array::f32("x", &[n], (0..n).map(|_| normal(&mut rng, 0.0, 1.0) as f32)),
            Array::f64("y", &[2, n], (0..2 * n).map(|_| normal(&mut rng, 0.0, 1.0))),
            Array::i64("z", &[1], [id as i64 - 500]),
        ],
    }
}

fn write_synthetic(dir: &Path, count: u64, shard_size: u64) -> CorpusManifest {
    let manifest = CorpusManifest::new(Domain::Epi, 0, json!({ "kind": "synthetic" }));
    write_corpus(dir, manifest, shard_size, (0..count).map(|i| Ok(synthetic(i)))).unwrap()
}

fn shard_bytes(dir: &Path) -> Vec<Vec<u8>> {
    let m = CorpusManifest::read(dir).unwrap();
    let mut files: Vec<Vec<u8>> = m.shards.iter().map(|s| std::fs::read(dir.join(&s.file)).unwrap()).collect();
    for f in &m.side_files {
        files.push(std::fs::read(dir.join(f)).unwrap());
    }
    files
}

fn small_config() -> CorpusConfig {
    let mut c = CorpusConfig {
        shard_size: 7,
        ..CorpusConfig::default()
    };
    c.epi.horizon_days = (60, 120);
    c.eco.horizon_years = 30;
    c.cascade.nodes = 200;
    c
}

#[test]
fn thousand_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_synthetic(dir.path(), 1000, 128);
    assert_eq!(m.count, 1000);
    assert_eq!(m.shards.len(), 8);
    let reader = CorpusReader::open(dir.path()).unwrap();
    let back: Vec<CorpusRecord> = reader.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(back.len(), 1000);
    for (i, r) in back.iter().enumerate() {
        let want = synthetic(i as u64);
        assert_eq!(r, &want);
        for (a, b) in r.arrays.iter().zip(&want.arrays) {
            assert_eq!(a.data, b.data);
        }
    }
    // Container checks pass; only the synthetic payloads are rejected as epidemic records.
    let report = validate_corpus(dir.path()).unwrap();
    assert!(report.issues.iter().all(|i| i.contains("epidemic parameters")), "{:?}", report.issues);
}

#[test]
fn one_record_per_shard() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_synthetic(dir.path(), 5, 1);
    assert_eq!(m.shards.len(), 5);
    assert!(m.shards.iter().all(|s| s.count == 1));
    assert_eq!(CorpusManifest::read(dir.path()).unwrap().count, 5);
}

#[test]
fn corrupted_magic_names_the_shard() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 10, 4);
    let path = dir.path().join(shard_name(1));
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[1] = b'X';
    std::fs::write(&path, bytes).unwrap();
    let err = CorpusReader::open(dir.path()).unwrap().records().find_map(Result::err).unwrap();
    match err {
        Error::Format { path: p, .. } => assert!(p.ends_with(shard_name(1))),
        other => panic!("{other:?}"),
    }
    assert!(!validate_corpus(dir.path()).unwrap().ok());
}

#[test]
fn truncated_record_reports_its_offset() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 3, 10);
    let path = dir.path().join(shard_name(0));
    let bytes = std::fs::read(&path).unwrap();
    // Offset of the last record: header plus the first two framed records.
    let mut offset = 6usize;
    for _ in 0..2 {
        offset += 4 + u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
    }
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    let mut reader = ShardReader::open(&path).unwrap();
    assert!(reader.next_record().unwrap().is_ok());
    assert!(reader.next_record().unwrap().is_ok());
    match reader.next_record().unwrap() {
        Err(Error::Truncated { offset: o, .. }) => assert_eq!(o, offset as u64),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_corpus_reads_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_synthetic(dir.path(), 0, 10);
    assert_eq!((m.count, m.shards.len()), (0, 0));
    assert_eq!(CorpusReader::open(dir.path()).unwrap().records().count(), 0);
    assert!(validate_corpus(dir.path()).unwrap().ok());
    assert_eq!(corpus_stats(dir.path()).unwrap(), CorpusStats::default());
}

#[test]
fn count_mismatch_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 6, 3);
    let mut m = CorpusManifest::read(dir.path()).unwrap();
    m.count = 7;
    m.write(dir.path()).unwrap();
    let last = CorpusReader::open(dir.path()).unwrap().records().last().unwrap();
    assert!(matches!(last, Err(Error::Validation(_))));
}

#[test]
fn shard_order_does_not_change_the_records() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 50, 6);
    let reader = CorpusReader::open(dir.path()).unwrap();
    let forward: Vec<CorpusRecord> = reader.records().collect::<Result<_, _>>().unwrap();
    let mut paths = reader.shard_paths();
    paths.reverse();
    paths.swap(0, 3);
    let mut shuffled: Vec<CorpusRecord> = paths
        .iter()
        .flat_map(|p| ShardReader::open(p).unwrap().map(Result::unwrap))
        .collect();
    shuffled.sort_by_key(|r| r.id);
    assert_eq!(shuffled, forward);
}

#[test]
fn tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 20, 8);
    let mut m = CorpusManifest::read(dir.path()).unwrap();
    m.config = json!({ "kind": "edited" });
    m.write(dir.path()).unwrap();
    let report = validate_corpus(dir.path()).unwrap();
    assert!(report.issues.iter().any(|i| i.contains("digest")), "{report:?}");

    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 20, 8);
    let path = dir.path().join(shard_name(2));
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let report = validate_corpus(dir.path()).unwrap();
    assert!(report.issues.iter().any(|i| i.contains("hash")), "{report:?}");
}

#[test]
fn generation_is_independent_of_worker_count() {
    let config = small_config();
    for domain in Domain::ALL {
        let count = if domain == Domain::Chem { 300 } else { 24 };
        let mut outputs = Vec::new();
        for threads in [1, 4, 8] {
            let dir = tempfile::tempdir().unwrap();
            let opts = GenerateOptions {
                domain,
                count,
                master_seed: 99,
                threads: Some(threads),
            };
            let m = generate_corpus(dir.path(), &config, &opts).unwrap();
            assert_eq!(m.count, count);
            let report = validate_corpus(dir.path()).unwrap();
            assert!(report.ok(), "{domain:?}: {:?}", report.issues);
            outputs.push(shard_bytes(dir.path()));
        }
        assert_eq!(outputs[0], outputs[1], "{domain:?} 1 vs 4 workers");
        assert_eq!(outputs[0], outputs[2], "{domain:?} 1 vs 8 workers");
    }
}

#[test]
fn cascade_corpus_stores_graph_once() {
    let dir = tempfile::tempdir().unwrap();
    let opts = GenerateOptions {
        domain: Domain::Cascade,
        count: 10,
        master_seed: 4,
        threads: None,
    };
    let m = generate_corpus(dir.path(), &small_config(), &opts).unwrap();
    assert_eq!(m.side_files, vec![GRAPH_FILE.to_string(), LAPPE_FILE.to_string()]);
    let lappe: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join(LAPPE_FILE)).unwrap()).unwrap();
    assert_eq!(lappe["features"]["k"], 16);
    assert_eq!(lappe["features"]["n"], 200);
    let rec = CorpusReader::open(dir.path()).unwrap().records().next().unwrap().unwrap();
    assert_eq!(rec.array("infection_time").unwrap().dims, vec![200]);
    assert!(rec.array("lappe").is_none());
}

#[test]
fn epi_stats_stay_inside_supports() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = CorpusConfig::default();
    config.epi.horizon_days = (120, 180);
    let opts = GenerateOptions {
        domain: Domain::Epi,
        count: 2000,
        master_seed: 12,
        threads: None,
    };
    generate_corpus(dir.path(), &config, &opts).unwrap();
    let stats = corpus_stats(dir.path()).unwrap();
    assert_eq!(stats.count, 2000);
    assert_eq!(stats.checks["every_beta_within_support"], json!(true));
    assert_eq!(stats.checks["range_violations"], json!(0));
    let beta = &stats.params["params.beta_waves[].beta"];
    assert!(beta.min >= 0.10 && beta.max <= 1.00);
    let gamma = &stats.params["params.gamma"];
    assert!(gamma.min >= 0.10 && gamma.max <= 0.33);
    let flags = &stats.params["params.has_exposed"];
    assert!((flags.mean - 0.70).abs() < 0.04);
    let shapes = &stats.arrays["latent_seair"];
    assert_eq!(shapes.values().sum::<u64>(), 2000);
}

#[test]
fn chem_stats_report_the_summary_block() {
    let dir = tempfile::tempdir().unwrap();
    let opts = GenerateOptions {
        domain: Domain::Chem,
        count: 20_000,
        master_seed: 5,
        threads: None,
    };
    generate_corpus(dir.path(), &CorpusConfig::default(), &opts).unwrap();
    let stats = corpus_stats(dir.path()).unwrap();
    let num = |k: &str| stats.checks[k].as_f64().unwrap();
    assert!((num("yield_mean") - 0.62).abs() < 0.02, "{:?}", stats.checks);
    assert!((num("yield_std") - 0.28).abs() < 0.02);
    assert!((num("failure_rate") - 0.091).abs() < 0.02);
    let strata = stats.checks["strata"].as_object().unwrap();
    assert!((strata["memorized"].as_f64().unwrap() - 0.6).abs() < 0.02);
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_owned).collect()).collect();
    (header, rows)
}

#[test]
fn epi_export_matches_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let opts = GenerateOptions {
        domain: Domain::Epi,
        count: 12,
        master_seed: 8,
        threads: None,
    };
    generate_corpus(dir.path(), &small_config(), &opts).unwrap();
    let records: Vec<CorpusRecord> = CorpusReader::open(dir.path()).unwrap().records().map(Result::unwrap).collect();

    let path = export_csv(dir.path(), out.path(), false).unwrap();
    let (header, rows) = read_csv(&path);
    assert_eq!(header, ["record_id", "day", "series_name", "true_value", "reported_value"]);
    let expected_rows: u64 = records.iter().map(|r| 3 * r.array("true_infections").unwrap().element_count()).sum();
    assert_eq!(rows.len() as u64, expected_rows);
    let mut seen: BTreeMap<(u64, String), Vec<(f32, f32)>> = BTreeMap::new();
    for row in &rows {
        seen.entry((row[0].parse().unwrap(), row[2].clone()))
            .or_default()
            .push((row[3].parse().unwrap(), row[4].parse().unwrap()));
    }
    for r in &records {
        let t = r.array("true_deaths").unwrap().as_f32().unwrap();
        let rep = r.array("reported_deaths").unwrap().as_f32().unwrap();
        let got = &seen[&(r.id, "deaths".to_string())];
        for (d, (a, b)) in got.iter().enumerate() {
            assert_eq!(a.to_bits(), t[d].to_bits());
            assert_eq!(b.to_bits(), rep[d].to_bits());
        }
    }

    let path = export_csv(dir.path(), out.path(), true).unwrap();
    let (header, rows) = read_csv(&path);
    assert_eq!(header[1], "week");
    let first = &records[0];
    let daily = first.array("true_infections").unwrap().as_f32().unwrap();
    let week0: f32 = daily[..7].iter().sum();
    let week1: f32 = daily[7..14].iter().sum();
    let exported: Vec<f32> = rows
        .iter()
        .filter(|r| r[0] == first.id.to_string() && r[2] == "infections")
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(exported.len(), daily.len().div_ceil(7));
    assert_eq!((exported[0], exported[1]), (week0, week1));
}

#[test]
fn other_domains_export_flat_tables() {
    let config = small_config();
    let expect: [(Domain, &[&str]); 4] = [
        (Domain::Chem, &["aryl_halide", "boronate", "ligand", "base", "solvent", "yield", "stratum", "is_failure"]),
        (Domain::Cascade, &["record_id", "node", "infection_time", "masked"]),
        (Domain::EcoButterfly, &["record_id", "species", "year", "latent", "observed_log10"]),
        (Domain::EcoLynxhare, &["record_id", "species", "year", "latent", "observed_log10"]),
    ];
    for (domain, header_want) in expect {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let opts = GenerateOptions {
            domain,
            count: 30,
            master_seed: 1,
            threads: None,
        };
        generate_corpus(dir.path(), &config, &opts).unwrap();
        let records: Vec<CorpusRecord> = CorpusReader::open(dir.path()).unwrap().records().map(Result::unwrap).collect();
        let (header, rows) = read_csv(&export_csv(dir.path(), out.path(), false).unwrap());
        assert_eq!(header, header_want);
        let want_rows: u64 = match domain {
            Domain::Chem => 30,
            Domain::Cascade => records.iter().map(|r| r.array("infection_time").unwrap().element_count()).sum(),
            _ => records.iter().map(|r| r.array("latent").unwrap().element_count()).sum(),
        };
        assert_eq!(rows.len() as u64, want_rows, "{domain:?}");
        if domain == Domain::Cascade {
            let masked: usize = rows.iter().filter(|r| r[3] == "1").count();
            let stored: usize = records.iter().map(|r| r.array("observed_mask").unwrap().data.iter().filter(|&&m| m == 0).count()).sum();
            assert_eq!(masked, stored);
        }
    }
}

#[test]
fn shipped_config_is_the_default() {
    let text = include_str!("../../../configs/default.toml");
    assert_eq!(CorpusConfig::from_toml_str(text).unwrap(), CorpusConfig::default());
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
    #[test]
    fn any_shard_size_reads_back_in_order(count in 0u64..60, shard_size in 1u64..20, first in 0u64..1_000_000) {
        let dir = tempfile::tempdir().unwrap();
        let manifest = CorpusManifest::new(Domain::Epi, 0, json!({}));
        let m = write_corpus(dir.path(), manifest, shard_size, (first..first + count).map(|i| Ok(synthetic(i)))).unwrap();
        proptest::prop_assert_eq!(m.count, count);
        proptest::prop_assert_eq!(m.shards.len() as u64, count.div_ceil(shard_size));
        let back: Vec<CorpusRecord> = CorpusReader::open(dir.path()).unwrap().records().collect::<Result<_, _>>().unwrap();
        let want: Vec<CorpusRecord> = (first..first + count).map(synthetic).collect();
        proptest::prop_assert_eq!(back, want);
    }
}
