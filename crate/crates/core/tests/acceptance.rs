//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use common::*;
use tempfile::TempDir;

use stationfill::eval::{run_benchmark, synth_dataset, synth_with, EvalConfig, SynthConfig};
use stationfill::impute::{gc_weights, impute_gc, impute_nrgc, linear_interpolate, nrgc_weights, Weights};
use stationfill::ingest::{detect_gaps, write_observations, write_station_meta};
use stationfill::model::Neighbour;
use stationfill::{MethodTag, Neighbours, Variable, WeatherData};

type Outcome = Result<String, String>;

fn stationfill(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stationfill"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_dataset(d: &WeatherData, dir: &Path, obs: &str, meta: &str) {
    write_observations(&d.series, std::fs::File::create(dir.join(obs)).unwrap()).unwrap();
    write_station_meta(&d.stations, std::fs::File::create(dir.join(meta)).unwrap()).unwrap();
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn c1_expected_records() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut notes = Vec::new();
    let mut slowest = Duration::ZERO;
    for (start, days, expected) in [((2014, 1, 1), 365, 35040u64), ((2016, 1, 1), 366, 35136), ((2018, 3, 12), 295, 28320)] {
        let d: WeatherData = synth_with(&SynthConfig {
            n_stations: 2,
            days,
            start: NaiveDate::from_ymd_opt(start.0, start.1, start.2).unwrap(),
            ..SynthConfig::default()
        })
        .unwrap();
        write_dataset(&d, dir.path(), "obs.csv", "meta.csv");
        let t = Instant::now();
        let out = stationfill(&["validate", "obs.csv", "--meta", "meta.csv"], dir.path());
        let took = t.elapsed();
        slowest = slowest.max(took);
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        for s in report["series"].as_array().unwrap() {
            let got = s["totals"]["expected_records"].as_u64().unwrap();
            let present = s["totals"]["present_records"].as_u64().unwrap();
            if got != expected || present != expected {
                return Err(format!("{days} days: expected_records {got}, present {present}, want {expected}"));
            }
        }
        within(Duration::from_secs(5), took)?;
        notes.push(format!("{days}d={expected}"));
    }
    Ok(format!("{} (slowest validate {slowest:.2?})", notes.join(" ")))
}

fn c2_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = instance_rng(0xACCE);
    let instances: Vec<Instance> = (0..1000).map(|_| random_instance(&mut rng, 5)).collect();
    let mut estimated = 0;
    for inst in &instances {
        for m in MethodTag::NEIGHBOUR_METHODS {
            check_instance(inst, m, 1e-12)?;
        }
        if library_estimate(inst, MethodTag::Nrgc).is_ok() {
            estimated += 1;
        }
    }
    within(Duration::from_secs(10), t.elapsed())?;
    Ok(format!(
        "1000 instances x 4 methods, {estimated} with an NRGC estimate, {:.2?}",
        t.elapsed()
    ))
}

fn c3_weights_and_hull() -> Outcome {
    let mut rng = instance_rng(0xC3);
    let mut checked = 0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..2000 {
        use rand::Rng;
        let n = rng.random_range(1..=5);
        let ns = Neighbours {
            target: meta("t", 0.0, 50.0),
            variable: Variable::Temperature,
            neighbours: (0..n)
                .map(|i| {
                    let dx = rng.random_range(0.01..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let dy = rng.random_range(-1.5..1.5);
                    Neighbour {
                        meta: meta(&format!("n{i}"), dx, 50.0 + dy),
                        distance_km: 0.0,
                        offset: (dx, dy),
                        target_mean: rng.random_range(0.5..30.0),
                        neighbour_mean: rng.random_range(0.5..30.0),
                    }
                })
                .collect(),
            excluded: vec![],
        };
        let obs: Vec<Option<f64>> = (0..n).map(|_| rng.random_bool(0.8).then(|| rng.random_range(-20.0..40.0))).collect();
        if obs.iter().all(Option::is_none) {
            continue;
        }
        for (w, est) in [
            (gc_weights(&ns, 0, &obs), impute_gc(&ns, 0, &obs)),
            (nrgc_weights(&ns, 0, &obs), impute_nrgc(&ns, 0, &obs)),
        ] {
            let (Ok(Weights::Normalised(w)), Ok(est)) = (w, est) else {
                return Err("estimator failed on a valid instance".into());
            };
            let sum: f64 = w.iter().map(|p| p.1).sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("weights sum to {sum}"));
            }
            let used: Vec<f64> = w.iter().map(|&(i, _)| obs[i].unwrap()).collect();
            let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
            if est.value < lo - slack || est.value > hi + slack {
                return Err(format!("{} outside [{lo}, {hi}]", est.value));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} estimates, max |sum-1| = {worst_sum:.1e}"))
}

fn c4_linear_affine() -> Outcome {
    let mut cases = 0;
    for len in 1..=3usize {
        for a in -20..=20 {
            for b in -6..=6 {
                for scale in [1.0, 0.5, 0.25] {
                    let f = |i: usize| scale * (a as f64 + b as f64 * i as f64);
                    let n = len + 4;
                    let slots = (0..n).map(|i| (!(2..2 + len).contains(&i)).then(|| f(i))).collect();
                    let s = series("a", Variable::Temperature, slots);
                    let gap = detect_gaps(&s)[0];
                    for v in linear_interpolate(&s, &gap).map_err(|e| e.to_string())? {
                        if v.value != f(v.slot) {
                            return Err(format!("len {len}: {} vs {}", v.value, f(v.slot)));
                        }
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} integer and dyadic lines, zero error"))
}

fn c5_method_ranking() -> Outcome {
    let t = Instant::now();
    let seeds = 1..=5u64;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut wins = [[0usize; 2]; 2];
    for seed in seeds.clone() {
        let d: WeatherData = synth_dataset(12, 90, seed).unwrap();
        let r = run_benchmark(&d, &EvalConfig { seed, neighbour_k: 2, ..EvalConfig::default() }).unwrap();
        for (vi, v) in Variable::ALL.into_iter().enumerate() {
            let m = |m: MethodTag| r.mean_rmse(v, m).expect("every method scored");
            let (nr, gc, nrgc, nn) = (m(MethodTag::Nr), m(MethodTag::Gc), m(MethodTag::Nrgc), m(MethodTag::Nn));
            wins[vi][0] += usize::from(gc < nr);
            wins[vi][1] += usize::from(nrgc < nr);
            let best = nr.min(gc).min(nrgc).min(nn);
            if nn > 2.0 * best {
                failures.push(format!("seed {seed} {v}: NN {nn:.4} > 2 x best {best:.4}"));
            }
            lines.push(format!("seed {seed} {v}: nr {nr:.4} gc {gc:.4} nrgc {nrgc:.4} nn {nn:.4}"));
        }
    }
    for line in &lines {
        println!("    {line}");
    }
    for (vi, v) in Variable::ALL.into_iter().enumerate() {
        if wins[vi][0] < 4 || wins[vi][1] < 4 {
            failures.push(format!("{v}: GC beat NR in {}/5, NRGC in {}/5", wins[vi][0], wins[vi][1]));
        }
    }
    within(Duration::from_secs(60), t.elapsed())?;
    if failures.is_empty() {
        Ok(format!(
            "temperature GC {}/5 NRGC {}/5, rainfall GC {}/5 NRGC {}/5, NN within 2x best every seed, {:.2?}",
            wins[0][0], wins[0][1], wins[1][0], wins[1][1], t.elapsed()
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn c6_bench_determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let d: WeatherData = synth_dataset(6, 14, 11).unwrap();
    write_dataset(&d, dir.path(), "obs.csv", "meta.csv");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "1", "8"].into_iter().enumerate() {
        for pattern in ["point", "block:8"] {
            let out = format!("r{i}_{}.json", pattern.replace(':', ""));
            let o = stationfill(
                &[
                    "bench", "obs.csv", "--meta", "meta.csv", "--levels", "0.05,0.10,0.15,0.20,0.25", "--seed", "42",
                    "--methods", "nr,gc,nrgc,nn", "--pattern", pattern, "--out", &out, "--threads", threads,
                ],
                dir.path(),
            );
            if !o.status.success() {
                return Err(String::from_utf8_lossy(&o.stderr).into_owned());
            }
            outputs.push((pattern, std::fs::read(dir.path().join(&out)).unwrap()));
        }
    }
    for pattern in ["point", "block:8"] {
        let same: Vec<&Vec<u8>> = outputs.iter().filter(|o| o.0 == pattern).map(|o| &o.1).collect();
        if same.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{pattern}: reports differ across runs or thread counts"));
        }
    }
    Ok(format!("{} bytes per report, identical over 4 runs with 1/4/1/8 threads for point and block:8", outputs[0].1.len()))
}

fn c7_fill_noop() -> Outcome {
    let dir = TempDir::new().unwrap();
    let d: WeatherData = synth_dataset(5, 7, 21).unwrap();
    write_dataset(&d, dir.path(), "obs.csv", "meta.csv");
    for method in ["auto", "nr", "gc", "nrgc", "nn"] {
        let o = stationfill(
            &["fill", "obs.csv", "--meta", "meta.csv", "--method", method, "--out", "filled.csv", "--provenance", "prov.csv"],
            dir.path(),
        );
        if !o.status.success() {
            return Err(format!("{method}: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let before = std::fs::read(dir.path().join("obs.csv")).unwrap();
        let after = std::fs::read(dir.path().join("filled.csv")).unwrap();
        if before != after {
            return Err(format!("{method}: output differs from complete input"));
        }
        let prov = std::fs::read_to_string(dir.path().join("prov.csv")).unwrap();
        if prov.lines().count() != 1 {
            return Err(format!("{method}: provenance has {} data rows", prov.lines().count() - 1));
        }
    }
    Ok("complete input rewritten byte-for-byte, header-only provenance, all methods".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("validate reports 35040 / 35136 / 28320 expected records", c1_expected_records),
        ("NR, GC, NRGC match brute-force oracles; NN matches cascade oracle", c2_oracles),
        ("GC/NRGC weights sum to 1 and estimates stay in the convex hull", c3_weights_and_hull),
        ("linear interpolation exact on affine truth, gaps 1-3", c4_linear_affine),
        ("GC and NRGC beat NR on synthetic network; NN within 2x best", c5_method_ranking),
        ("bench JSON byte-identical across runs and thread counts", c6_bench_determinism),
        ("fill on complete data changes nothing", c7_fill_noop),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS [PRIMARY] criterion {}: {name} -- {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [PRIMARY] criterion {}: {name} -- {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
