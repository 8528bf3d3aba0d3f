//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svkk_core::channel::{apply_rotation, FiberParams, JonesRotation};
use svkk_core::config::{parse_config, ConfigDoc, DerotationMode, KkLowpass, LinkConfig};
use svkk_core::kk::{kk_reconstruct, KKConfig};
use svkk_core::modulation::{map_bits, ModFormat, ALL_FORMATS};
use svkk_core::pipeline::run_link;
use svkk_core::signal::{rms_diff, rms_diff_real, RealSignal, Signal};
use svkk_core::studies::{run_study, threshold_crossing, StudyReport, SD_FEC_BER};
use svkk_core::svr::{apply_derotation, detect_stokes, estimate_derotation};
use svkk_core::sweep::{run_sweep, SweepOptions};
use svkk_core::txdsp::{build_frame, matched_filter, pulse_shape};

/// OSNR at which the 60 Gbaud curve of the baud study crosses 2e-2, seed 0.
const FROZEN_60G_CROSSING_DB: f64 = 36.79;
const CROSSING_TOLERANCE_DB: f64 = 0.05;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn seeded() -> LinkConfig {
    let mut cfg = LinkConfig::default();
    cfg.link.seed = Some(0);
    cfg
}

fn study(name: &str, dir: &Path) -> StudyReport {
    run_study(name, &seeded(), Some(dir), &SweepOptions::default()).expect(name)
}

fn from_report(r: &StudyReport) -> Outcome {
    let detail = r
        .checks
        .iter()
        .map(|c| format!("{}{}", if c.passed { "" } else { "FAILED " }, c.detail))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(r.passed(), detail)
}

fn lossless_loopback() -> Outcome {
    let mut worst_t: f64 = 0.0;
    let mut failures = Vec::new();
    for fmt in ALL_FORMATS {
        let mut cfg = seeded();
        cfg.link.format = fmt;
        cfg.fiber = FiberParams::back_to_back();
        cfg.channel.osnr_db = f64::INFINITY;
        let t = Instant::now();
        let run = run_link(&cfg).expect("loopback run");
        let secs = t.elapsed().as_secs_f64();
        worst_t = worst_t.max(secs);
        let d = &run.diagnostics;
        if run.result.errors_counted != 0 || d.min_phase_violation_frac != 0.0 || secs >= 60.0 {
            failures.push(format!(
                "{}: {} errors, violations {}, {secs:.1} s",
                fmt.name(),
                run.result.errors_counted,
                d.min_phase_violation_frac
            ));
        }
    }
    let detail = if failures.is_empty() {
        format!("BER 0 and no min-phase violations for all 5 formats, slowest {worst_t:.1} s")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn kk_oracle() -> Outcome {
    const BAUD: f64 = 10e9;
    const SPS: usize = 6;
    let a = 1.0;
    // 20-symbol multiples keep the 5.5 GHz carrier on a DFT bin.
    let fc = BAUD * 1.1 / 2.0;
    let cfg = KKConfig {
        internal_oversampling: 1,
        carrier_freq_hz: fc,
        power_floor_rel: 1e-12,
        baud_hz: BAUD,
        rolloff: 0.1,
        lowpass: KkLowpass::Rrc,
    };
    let mut worst_evm = f64::NEG_INFINITY;
    let mut worst_t: f64 = 0.0;
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..20_000 * 4).map(|_| rng.random_range(0..2u8)).collect();
        let s = pulse_shape(&map_bits(&bits, ModFormat::Qam16).unwrap(), SPS, 0.1, BAUD).unwrap();
        let peak = s.samples().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let s = s.scaled(0.3 * a / peak);
        let w = 2.0 * PI * fc / s.sample_rate();
        let e = s.map_indexed(|n, v| v + num_complex::Complex64::from_polar(a, w * n as f64));
        let p = RealSignal::new(
            e.samples().iter().map(|v| v.norm_sqr()).collect(),
            e.sample_rate(),
        )
        .unwrap();
        let t = Instant::now();
        let out = kk_reconstruct(&p, &cfg).expect("kk");
        worst_t = worst_t.max(t.elapsed().as_secs_f64());
        let want: Signal = matched_filter(&s, 0.1, BAUD);
        let evm = 20.0 * (rms_diff(out.samples(), want.samples()) / want.power().sqrt()).log10();
        worst_evm = worst_evm.max(evm);
    }
    outcome(
        worst_evm < -30.0 && worst_t < 5.0,
        format!("worst EVM {worst_evm:.1} dB over 4 records, slowest {worst_t:.2} s"),
    )
}

fn derotation_round_trip() -> Outcome {
    let mut cfg = seeded();
    cfg.fiber = FiberParams::back_to_back();
    cfg.channel.osnr_db = f64::INFINITY;
    let frame = build_frame(&cfg, 7).expect("frame");
    let tx = detect_stokes(&frame.x, &frame.y).unwrap();
    let data = frame.data_range();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = JonesRotation::random(&mut rng);
        let (rx, ry) = apply_rotation(&frame.x, &frame.y, &u).unwrap();
        let rails = detect_stokes(&rx, &ry).unwrap();
        let m = estimate_derotation(&rails, &frame.layout, frame.sps).expect("training");
        let back = apply_derotation(&rails, &m);
        for (a, b) in back.rails().iter().zip(tx.rails()) {
            worst = worst.max(rms_diff_real(
                &a.samples()[data.clone()],
                &b.samples()[data.clone()],
            ));
        }
    }
    let mut trained = seeded();
    trained.channel.rotation = svkk_core::config::RotationSpec::Random(5);
    let mut oracle = trained.clone();
    oracle.receiver.derotation = DerotationMode::Oracle;
    let snr_t = run_link(&trained).expect("trained").result.snr_db;
    let snr_o = run_link(&oracle).expect("oracle").result.snr_db;
    let gap = (snr_t - snr_o).abs();
    outcome(
        worst < 1e-6 && gap <= 0.3,
        format!(
            "payload-rail RMS error {worst:.1e} over 20 unitaries; 80 km trained {snr_t:.2} dB vs CD-free derotation {snr_o:.2} dB"
        ),
    )
}

fn reproducible(dir: &Path, rerun: &Path) -> Outcome {
    let toml = dir.join("fig6-cd-arms.toml");
    let mut spec = match parse_config::<&str>(&toml, &[]).expect("echoed config") {
        ConfigDoc::Sweep(s) => s,
        ConfigDoc::Link(_) => {
            return outcome(false, "echoed config lost its [sweep] section".into())
        }
    };
    let csv = rerun.join("rerun.csv");
    spec.output = Some(csv.clone());
    run_sweep(&spec, &SweepOptions::default()).expect("rerun");
    let a = std::fs::read_to_string(dir.join("fig6-cd-arms.csv")).unwrap();
    let b = std::fs::read_to_string(&csv).unwrap();
    outcome(
        a == b && !a.is_empty(),
        format!(
            "fig6-cd-arms rerun from echoed config: {} rows, identical {}",
            a.lines().count() - 1,
            a == b
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let rerun = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("C1 lossless loopback", lossless_loopback()));
    results.push(("C2 KK oracle", kk_oracle()));
    results.push(("C3 derotation round trip", derotation_round_trip()));
    let t = Instant::now();
    let sop = study("fig5-sop", dir.path());
    let sop_secs = t.elapsed().as_secs_f64();
    let mut c4 = from_report(&sop);
    c4.passed &= sop_secs < 600.0;
    c4.detail = format!("{}; {sop_secs:.0} s", c4.detail);
    results.push(("C4 SOP invariance", c4));
    results.push((
        "C5 CSPR/guard structure",
        from_report(&study("fig4-cspr-guard", dir.path())),
    ));
    results.push((
        "C6 oversampling penalty",
        from_report(&study("fig7-oversampling", dir.path())),
    ));
    results.push((
        "C7 roll-off penalty",
        from_report(&study("fig6-rof", dir.path())),
    ));
    results.push((
        "C8 CD-arm equivalence",
        from_report(&study("fig6-cd-arms", dir.path())),
    ));
    results.push((
        "C9 real vs complex MIMO",
        from_report(&study("fig6-mimo", dir.path())),
    ));

    let baud = study("fig7-baud", dir.path());
    let hi = baud
        .parts
        .iter()
        .find(|(p, _)| p.label == "60g")
        .expect("60g part")
        .1
        .summarize();
    let c10 = match threshold_crossing(&hi, 0, SD_FEC_BER) {
        Some(x) => outcome(
            (x - FROZEN_60G_CROSSING_DB).abs() <= CROSSING_TOLERANCE_DB,
            format!("60 Gbaud crosses 2e-2 at {x:.3} dB OSNR (frozen {FROZEN_60G_CROSSING_DB} dB)"),
        ),
        None => outcome(false, "no 2e-2 crossing in the OSNR range".into()),
    };
    results.push(("C10 high-baud crossing", c10));
    results.push(("C11 determinism", reproducible(dir.path(), rerun.path())));

    let mut all = true;
    for (name, o) in &results {
        all &= o.passed;
        println!(
            "{} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "{}/{} criteria passed in {:.0} s",
        results.iter().filter(|(_, o)| o.passed).count(),
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if !all {
        std::process::exit(1);
    }
}
