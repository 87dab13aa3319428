//! Acceptance suite: one line per criterion, non-zero exit if any fails.

#[path = "../../core/tests/common/dense.rs"]
mod dense;
#[path = "../../core/tests/common/density.rs"]
mod density;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use tbcluster::analysis::{multiplex_capacity, CHSH_THRESHOLD};
use tbcluster::channel::{simulate_drift, FiberLink, TemperatureModel};
use tbcluster::config::{RunConfig, CALIBRATED_WHITE_NOISE};
use tbcluster::cpm::{efficiency, solve_balanced_depth, CpmSettings};
use tbcluster::detection::{DetectorModel, MeasurementConditions};
use tbcluster::pipeline::{drift, fringe_run, visibility_sweep, witness_run};
use tbcluster::waveform::{cpm_continuous, intensity_peaks, window_samples, ChirpSpec, SampledField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ideal_cfg(p: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.detection.detector = DetectorModel::ideal();
    cfg.detection.conditions = MeasurementConditions { white_noise: p, ..Default::default() };
    cfg
}

fn ideal_witness() -> Outcome {
    let r = match witness_run(&ideal_cfg(0.0), true) {
        Ok(r) => r.report,
        Err(e) => return outcome(false, e.to_string()),
    };
    let stab_ok = r.expectations.iter().all(|e| (e - 1.0).abs() < 1e-9);
    outcome(
        (r.witness + 1.0).abs() < 1e-9 && stab_ok,
        format!("W = {:.9}, stabilizers {:?}", r.witness, r.expectations),
    )
}

fn noise_line() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut zero_point = f64::NAN;
    for p in [0.0, 0.1, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
        let oracle = density::witness(&density::noisy_rho(p));
        let w = match witness_run(&ideal_cfg(p), true) {
            Ok(r) => r.report.witness,
            Err(e) => return outcome(false, e.to_string()),
        };
        worst = worst.max((w - oracle).abs()).max((w - (-1.0 + 3.0 * p)).abs());
        if (p - 1.0 / 3.0).abs() < 1e-12 {
            zero_point = w;
        }
    }
    outcome(worst < 1e-9 && zero_point.abs() < 1e-9, format!("max deviation {worst:.2e}, W(1/3) = {zero_point:.2e}"))
}

fn calibrated_match() -> Outcome {
    let seeds = 20u64;
    let (mut ws, mut sig) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let mut cfg = RunConfig::paper_default();
        cfg.seed = seed;
        cfg.analysis.mc_samples = 20_000;
        match witness_run(&cfg, false) {
            Ok(r) => {
                ws.push(r.report.witness);
                sig.push(r.report.significance());
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let mean = ws.iter().sum::<f64>() / seeds as f64;
    let spread = (ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64).sqrt();
    let mean_sig = sig.iter().sum::<f64>() / seeds as f64;
    outcome(
        (mean + 0.80).abs() <= 0.05 && (mean_sig - 20.0).abs() <= 4.0,
        format!("p = {CALIBRATED_WHITE_NOISE}: mean W = {mean:.4} (seed spread {spread:.4}), mean |W|/sigma = {mean_sig:.2}"),
    )
}

fn beam_splitter_constants() -> Outcome {
    let g = solve_balanced_depth();
    let eta = efficiency(g);
    outcome(
        (g - 1.4342).abs() <= 5e-5 && (eta - 0.601).abs() <= 5e-4,
        format!("g* = {g:.7} (target 1.4342 +/- 5e-5), eta = {eta:.6} (target 0.601 +/- 5e-4)"),
    )
}

fn copy_spacing(rf: f64) -> Option<f64> {
    let chirp = ChirpSpec::new(10.0);
    let n = window_samples(0.0, 37.0, 10.0, 1000.0, 1.0);
    let f = SampledField::gaussian_train(&[(0.0, C64::new(1.0, 0.0))], 37.0, 1.0, n).ok()?;
    let out = cpm_continuous(&f, &chirp, solve_balanced_depth(), rf, 0.0).ok()?;
    let peaks = intensity_peaks(&out, 0.01);
    if peaks.len() < 3 {
        return None;
    }
    Some((peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}

fn shift_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (rf, nominal, tol) in [(1.25, 100.0, 0.5), (3.75, 300.0, 1.5)] {
        let discrete = CpmSettings::new(1.0, rf, 0.0).delta_t_ps();
        let continuous = copy_spacing(rf).unwrap_or(f64::NAN);
        pass &= (discrete - nominal).abs() <= tol && (continuous - nominal).abs() <= tol;
        parts.push(format!("{rf} GHz: discrete {discrete:.3} ps, continuous {continuous:.3} ps"));
    }
    outcome(pass, parts.join("; "))
}

fn monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - 1e-9)
}

fn visibility_bounds() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.waveform.dispersions_ns_per_nm = vec![2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 150.0];
    let pts = match visibility_sweep(&cfg) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let at10 = pts.iter().find(|p| p.dispersion_ns_per_nm == 10.0).copied();
    let short: Vec<f64> = pts.iter().map(|p| p.short).collect();
    let long: Vec<f64> = pts.iter().map(|p| p.long).collect();
    let mono = monotone(&short) && monotone(&long);
    match at10 {
        Some(p) => outcome(
            (p.short - 0.99).abs() <= 0.01 && (p.long - 0.95).abs() <= 0.01 && mono,
            format!("10 ns/nm: V(100 ps) = {:.4}, V(300 ps) = {:.4}; monotone {mono}", p.short, p.long),
        ),
        None => outcome(false, "10 ns/nm missing from sweep".into()),
    }
}

fn fringes() -> Outcome {
    let ideal = match fringe_run(&ideal_cfg(0.0), true) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let ideal_ok = ideal.iter().all(|s| (s.fit.visibility - 1.0).abs() < 1e-6 && s.sign == s.family.expected_sign);
    let signs: String = ideal.iter().map(|s| if s.sign > 0 { '+' } else { '-' }).collect();
    let mut cfg = ideal_cfg(CALIBRATED_WHITE_NOISE);
    cfg.detection.conditions.visibility_penalty = BTreeMap::from([("T".into(), 0.95), ("t".into(), 0.99)]);
    let noisy = match fringe_run(&cfg, true) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let noisy_ok = noisy.iter().all(|s| s.fit.visibility > CHSH_THRESHOLD && s.fit.chsh_pass);
    let vs: Vec<String> = noisy.iter().map(|s| format!("{}={:.4}", s.family.name, s.fit.visibility)).collect();
    outcome(ideal_ok && noisy_ok, format!("ideal signs {signs}; calibrated V {}", vs.join(" ")))
}

fn drift_stabilization() -> Outcome {
    let model = TemperatureModel::Sinusoid { amplitude_k: 0.1, period_s: 86_400.0 };
    let peak = match simulate_drift(&FiberLink::default(), 86_400.0, 10.0, &model, 0) {
        Ok(t) => t.peak_ps(),
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut sum_sq = 0.0;
    let seeds = 10u64;
    for seed in 0..seeds {
        let cfg = RunConfig { seed, ..RunConfig::default() };
        match drift(&cfg) {
            Ok(st) => sum_sq += st.rms_ps * st.rms_ps,
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let rms = (sum_sq / seeds as f64).sqrt();
    outcome((peak - 92.0).abs() <= 5.0 && rms <= 3.0, format!("peak {peak:.2} ps, residual rms {rms:.3} ps"))
}

fn oracle_equivalence() -> Outcome {
    let worst = (0..100u64).map(dense::run_case).fold(0.0f64, f64::max);
    outcome(worst <= 1e-10, format!("worst elementwise deviation {worst:.2e} over 100 cases"))
}

fn capacity() -> Outcome {
    match multiplex_capacity(5000.0, 25.0, 2000.0) {
        Ok(c) => outcome(c.qubits_per_second == 1e11, format!("{} channels, {} qubits/s", c.channels, c.qubits_per_second)),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tbcluster-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("temp dir");
    dir
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            out.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default());
        }
    }
    out
}

fn determinism() -> Outcome {
    let root = scratch_dir();
    let mut cfg = RunConfig::paper_default();
    cfg.seed = 11;
    cfg.analysis.mc_samples = 20_000;
    cfg.analysis.fringe_points = 16;
    cfg.waveform.dispersions_ns_per_nm = vec![5.0, 10.0];
    let cfg_path = root.join("config.json");
    fs::write(&cfg_path, cfg.to_json()).expect("write config");
    let runs: [(&str, bool); 10] = [
        ("generate", false),
        ("transmit", false),
        ("measure", false),
        ("measure", true),
        ("witness", false),
        ("witness", true),
        ("fringe", false),
        ("visibility", false),
        ("drift", false),
        ("capacity", false),
    ];
    let mut failures = Vec::new();
    for (cmd, exact) in runs {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let out = root.join(format!("{cmd}-{exact}"));
            if rep > 0 {
                let _ = fs::remove_dir_all(&out);
            }
            let mut c = Command::new(env!("CARGO_BIN_EXE_tbcluster"));
            c.arg(cmd).arg("--config").arg(&cfg_path).arg("--out").arg(&out);
            if exact {
                c.arg("--exact");
            }
            match c.output() {
                Ok(o) if o.status.success() => trees.push((o.stdout, read_tree(&out))),
                Ok(o) => {
                    failures.push(format!("{cmd} exited {:?}", o.status.code()));
                    break;
                }
                Err(e) => {
                    failures.push(format!("{cmd}: {e}"));
                    break;
                }
            }
        }
        if trees.len() == 2 && (trees[0] != trees[1] || trees[0].1.is_empty()) {
            failures.push(format!("{cmd}{} differs", if exact { " --exact" } else { "" }));
        }
    }
    let _ = fs::remove_dir_all(&root);
    if failures.is_empty() {
        outcome(true, format!("{} command runs byte-identical", runs.len()))
    } else {
        outcome(false, failures.join("; "))
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let s = Duration::from_secs;
    let criteria: [Criterion; 11] = [
        (1, "ideal-state witness", s(1), ideal_witness),
        (2, "noise line", s(5), noise_line),
        (3, "calibrated match", s(120), calibrated_match),
        (4, "beam-splitter constants", s(1), beam_splitter_constants),
        (5, "CPM shift law", s(30), shift_law),
        (6, "visibility bounds", s(300), visibility_bounds),
        (7, "fringes", s(60), fringes),
        (8, "drift and stabilization", s(30), drift_stabilization),
        (9, "oracle equivalence", s(60), oracle_equivalence),
        (10, "capacity", s(1), capacity),
        (11, "determinism", s(600), determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time { String::new() } else { format!(" over budget {budget:?}") };
        println!(
            "[{}] {id:>2} {name}: {} ({:.2} s{timing})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
