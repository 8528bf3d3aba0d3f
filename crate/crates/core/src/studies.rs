//! Pre-registered parametric studies and their pass/fail checks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::channel::{FiberParams, ImpairmentSet};
use crate::config::{Axis, DerotationMode, LinkConfig, SweepSpec, MAX_SEED};
use crate::error::{Error, Result};
use crate::modulation::ModFormat;
use crate::pipeline::DEFAULT_SEED;
use crate::seed::derive_seed;
use crate::sweep::{run_sweep, PointSummary, SweepOptions, SweepTable};

pub const STUDY_NAMES: [&str; 7] = [
    "fig4-cspr-guard",
    "fig5-sop",
    "fig6-rof",
    "fig6-cd-arms",
    "fig6-mimo",
    "fig7-oversampling",
    "fig7-baud",
];

/// SD-FEC BER threshold for the high-baud regime.
pub const SD_FEC_BER: f64 = 2.0e-2;
/// HD-FEC BER threshold.
pub const HD_FEC_BER: f64 = 3.8e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// One sweep inside a study; `label` becomes a file-name suffix.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyPart {
    pub label: String,
    pub spec: SweepSpec,
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub name: String,
    pub parts: Vec<(StudyPart, SweepTable)>,
    pub checks: Vec<Check>,
    /// Numbers behind the checks, one line each.
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "study {}", self.name);
        for (part, table) in &self.parts {
            let params: Vec<&str> = part.spec.axes.iter().map(|a| a.param.as_str()).collect();
            let label = if part.label.is_empty() {
                "main"
            } else {
                &part.label
            };
            let _ = writeln!(s, "[{label}] {}", params.join(", "));
            for p in table.summarize() {
                let _ = writeln!(
                    s,
                    "  {:<28} trials {:>2}  ber {:.3e}  snr {:.2} dB",
                    p.params.join(", "),
                    p.trials,
                    p.ber,
                    p.snr_db_mean
                );
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        s
    }
}

/// Converter model used by the back-to-back studies: band-limited DAC with
/// frequency-dependent ENoB, and a 33 GHz ADC.
pub fn desk_transceiver(cfg: &mut LinkConfig) {
    cfg.tx_impairments = ImpairmentSet {
        enob_bits: 6.0,
        enob_slope_bits_per_ghz: 0.02,
        bandwidth_3db_hz: 20e9,
        ..cfg.tx_impairments.clone()
    };
    cfg.rx_impairments = ImpairmentSet {
        enob_bits: 6.0,
        bandwidth_3db_hz: 33e9,
        ..cfg.rx_impairments.clone()
    };
}

fn floats(v: &[f64]) -> Vec<toml::Value> {
    v.iter().map(|&x| toml::Value::Float(x)).collect()
}

fn ints(v: &[i64]) -> Vec<toml::Value> {
    v.iter().map(|&x| toml::Value::Integer(x)).collect()
}

fn strings(v: &[&str]) -> Vec<toml::Value> {
    v.iter()
        .map(|&x| toml::Value::String(x.to_string()))
        .collect()
}

fn axis(param: &str, values: Vec<toml::Value>) -> Axis {
    Axis {
        param: param.to_string(),
        values,
    }
}

fn part(label: &str, base: LinkConfig, axes: Vec<Axis>, trials: usize) -> StudyPart {
    StudyPart {
        label: label.to_string(),
        spec: SweepSpec {
            base,
            axes,
            trials,
            min_errors: None,
            max_trials: None,
            output: None,
        },
    }
}

fn counted(mut p: StudyPart, min_errors: u64, max_trials: usize) -> StudyPart {
    p.spec.min_errors = Some(min_errors);
    p.spec.max_trials = Some(max_trials);
    p
}

/// Link at 27 Gbaud 16QAM over 80 km at OSNR 35 dB on top of `base`.
fn transmission(base: &LinkConfig) -> LinkConfig {
    let mut cfg = base.clone();
    cfg.link.baud_hz = 27e9;
    cfg.link.format = ModFormat::Qam16;
    cfg.fiber = FiberParams::default();
    cfg.channel.osnr_db = 35.0;
    cfg
}

fn back_to_back(base: &LinkConfig) -> LinkConfig {
    let mut cfg = transmission(base);
    cfg.fiber = FiberParams::back_to_back();
    desk_transceiver(&mut cfg);
    cfg
}

/// Random SOP seeds for the polarization study.
pub fn sop_seeds(base_seed: u64, n: usize) -> Vec<i64> {
    (0..n)
        .map(|k| (derive_seed(base_seed, 0x50B, k as u64) & MAX_SEED) as i64)
        .collect()
}

/// The sweeps that make up study `name`, built on `base`.
pub fn study_parts(name: &str, base: &LinkConfig) -> Result<Vec<StudyPart>> {
    let seed = base.link.seed.unwrap_or(DEFAULT_SEED);
    let parts = match name {
        "fig4-cspr-guard" => {
            let mut cfg = back_to_back(base);
            cfg.link.rolloff = 0.1;
            vec![counted(
                part(
                    "",
                    cfg,
                    vec![
                        axis("link.guard_band_hz", floats(&[1e9, 2e9, 4e9])),
                        axis("link.cspr_db", floats(&[6.0, 8.0, 10.0, 11.5, 13.0, 15.0])),
                    ],
                    1,
                ),
                100,
                4,
            )]
        }
        "fig5-sop" => {
            let values = sop_seeds(seed, 8)
                .into_iter()
                .map(|s| {
                    let mut t = toml::Table::new();
                    t.insert("random".into(), toml::Value::Integer(s));
                    toml::Value::Table(t)
                })
                .collect();
            vec![part(
                "",
                transmission(base),
                vec![axis("channel.rotation", values)],
                1,
            )]
        }
        "fig6-rof" => {
            let mut cfg = back_to_back(base);
            cfg.link.cspr_db = 11.5;
            cfg.link.guard_band_hz = 4e9;
            vec![part(
                "",
                cfg,
                vec![axis("link.rolloff", floats(&[0.01, 0.1, 0.2, 0.4]))],
                2,
            )]
        }
        "fig6-cd-arms" => vec![part(
            "",
            transmission(base),
            vec![axis(
                "equalizer.cd_comp",
                strings(&["lms_only", "pre", "post"]),
            )],
            2,
        )],
        "fig6-mimo" => {
            let plain = transmission(base);
            let mut iq = plain.clone();
            iq.tx_impairments.iq_gain_imbalance_db = 1.0;
            iq.tx_impairments.iq_phase_deg = 10.0;
            iq.tx_impairments.iq_skew_s = 2e-12;
            let kinds = || {
                vec![axis(
                    "equalizer.kind",
                    strings(&["real_mimo", "complex_butterfly"]),
                )]
            };
            vec![part("plain", plain, kinds(), 3), part("iq", iq, kinds(), 3)]
        }
        "fig7-oversampling" => vec![part(
            "",
            transmission(base),
            vec![axis("link.samples_per_symbol", ints(&[2, 3, 4, 5]))],
            2,
        )],
        "fig7-baud" => {
            let mut hi = transmission(base);
            hi.link.baud_hz = 60e9;
            hi.link.cspr_db = 13.5;
            hi.link.guard_band_hz = 0.5e9;
            hi.equalizer.n_taps = 121;
            hi.receiver.derotation = DerotationMode::Bypass;
            let mut lo = transmission(base);
            lo.link.baud_hz = 32.5e9;
            lo.link.cspr_db = 12.0;
            lo.link.guard_band_hz = 3.5e9;
            lo.receiver.derotation = DerotationMode::Bypass;
            let osnr = || {
                vec![axis(
                    "channel.osnr_db",
                    floats(&[30.0, 32.0, 34.0, 36.0, 38.0, 40.0]),
                )]
            };
            vec![
                counted(part("60g", hi, osnr(), 1), 100, 3),
                counted(part("32g5", lo, osnr(), 1), 100, 3),
            ]
        }
        other => {
            return Err(Error::invalid_input(format!(
                "unknown study `{other}`; expected one of: {}",
                STUDY_NAMES.join(", ")
            )))
        }
    };
    Ok(parts)
}

fn file_stem(name: &str, label: &str) -> String {
    if label.is_empty() {
        name.to_string()
    } else {
        format!("{name}-{label}")
    }
}

/// Runs study `name`. With `out_dir`, each part writes `<stem>.csv` beside its
/// echoed sweep config `<stem>.toml`, and the summary goes to
/// `<name>-summary.txt`.
pub fn run_study(
    name: &str,
    base: &LinkConfig,
    out_dir: Option<&Path>,
    opts: &SweepOptions,
) -> Result<StudyReport> {
    let mut parts = study_parts(name, base)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for p in parts.iter_mut() {
            let stem = file_stem(name, &p.label);
            p.spec.output = Some(dir.join(format!("{stem}.csv")));
            fs::write(dir.join(format!("{stem}.toml")), p.spec.to_toml_string())?;
        }
    }
    let mut done = Vec::with_capacity(parts.len());
    for p in parts {
        let table = run_sweep(&p.spec, opts)?;
        done.push((p, table));
    }
    let (checks, notes) = evaluate(name, &done);
    let report = StudyReport {
        name: name.to_string(),
        parts: done,
        checks,
        notes,
    };
    if let Some(dir) = out_dir {
        fs::write(dir.join(format!("{name}-summary.txt")), report.summary())?;
    }
    Ok(report)
}

fn value_of(p: &PointSummary, k: usize) -> f64 {
    p.params[k].parse().unwrap_or(f64::NAN)
}

/// Abscissa of the minimum of `log10(y)` refined by a parabola through the
/// grid minimum and its neighbours; edge minima are returned unrefined.
pub fn refined_minimum(x: &[f64], y: &[f64]) -> (usize, f64) {
    let ly: Vec<f64> = y.iter().map(|v| v.max(1e-12).log10()).collect();
    let mut i = 0;
    for k in 1..ly.len() {
        if ly[k] < ly[i] {
            i = k;
        }
    }
    if i == 0 || i + 1 == ly.len() {
        return (i, x[i]);
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (ly[i - 1], ly[i], ly[i + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a > 0.0 {
        (i, -b / (2.0 * a))
    } else {
        (i, x1)
    }
}

/// First OSNR at which the BER curve falls through `threshold`, by linear
/// interpolation of `log10(BER)`. Zero-error points count as half an error.
pub fn threshold_crossing(points: &[PointSummary], k: usize, threshold: f64) -> Option<f64> {
    let xs: Vec<f64> = points.iter().map(|p| value_of(p, k)).collect();
    let ly: Vec<f64> = points
        .iter()
        .map(|p| (p.ber.max(0.5 / p.bits as f64)).log10())
        .collect();
    let t = threshold.log10();
    (0..points.len().saturating_sub(1)).find_map(|i| {
        if ly[i] >= t && ly[i + 1] < t {
            Some(xs[i] + (t - ly[i]) * (xs[i + 1] - xs[i]) / (ly[i + 1] - ly[i]))
        } else {
            None
        }
    })
}

fn summaries(parts: &[(StudyPart, SweepTable)], label: &str) -> Vec<PointSummary> {
    parts
        .iter()
        .find(|(p, _)| p.label == label)
        .map(|(_, t)| t.summarize())
        .unwrap_or_default()
}

fn find<'a>(points: &'a [PointSummary], value: &str) -> Option<&'a PointSummary> {
    points
        .iter()
        .find(|p| p.params.last().map(String::as_str) == Some(value))
}

fn evaluate(name: &str, parts: &[(StudyPart, SweepTable)]) -> (Vec<Check>, Vec<String>) {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let main = summaries(parts, "");
    match name {
        "fig4-cspr-guard" => {
            let mut optima = Vec::new();
            for g in [1e9, 2e9, 4e9] {
                let curve: Vec<&PointSummary> =
                    main.iter().filter(|p| value_of(p, 0) == g).collect();
                let x: Vec<f64> = curve.iter().map(|p| value_of(p, 1)).collect();
                let y: Vec<f64> = curve.iter().map(|p| p.ber).collect();
                let (i, opt) = refined_minimum(&x, &y);
                let interior = i > 0 && i + 1 < x.len();
                checks.push(Check::new(
                    &format!("interior optimum at guard {} GHz", g / 1e9),
                    interior,
                    format!(
                        "grid optimum {} dB, refined {opt:.2} dB",
                        x.get(i).copied().unwrap_or(f64::NAN)
                    ),
                ));
                optima.push((g, opt));
            }
            let ok = optima.len() == 3 && optima[2].1 >= optima[1].1;
            notes.push(format!(
                "optimal CSPR by guard: {}",
                optima
                    .iter()
                    .map(|(g, o)| format!("{} GHz -> {o:.2} dB", g / 1e9))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
            checks.push(Check::new(
                "optimal CSPR non-decreasing for guard >= 2 GHz",
                ok,
                format!(
                    "{:.2} dB at 2 GHz, {:.2} dB at 4 GHz",
                    optima[1].1, optima[2].1
                ),
            ));
        }
        "fig5-sop" => {
            let snr: Vec<f64> = main.iter().map(|p| p.snr_db_mean).collect();
            let hi = snr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = snr.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                "SNR spread over random SOPs <= 0.5 dB",
                snr.len() == 8 && hi - lo <= 0.5,
                format!(
                    "spread {:.3} dB over {} SOPs ({lo:.2}..{hi:.2} dB)",
                    hi - lo,
                    snr.len()
                ),
            ));
        }
        "fig6-rof" => {
            let snr = |v: &str| find(&main, v).map_or(f64::NAN, |p| p.snr_db_mean);
            let gap = snr("0.4") - snr("0.01");
            checks.push(Check::new(
                "roll-off penalty SNR(0.4) - SNR(0.01) in [0.2, 1.5] dB",
                (0.2..=1.5).contains(&gap),
                format!("{gap:.3} dB ({:.2} vs {:.2} dB)", snr("0.01"), snr("0.4")),
            ));
        }
        "fig6-cd-arms" => {
            let snr: Vec<(String, f64)> = main
                .iter()
                .map(|p| (p.params[0].clone(), p.snr_db_mean))
                .collect();
            let mut worst: f64 = 0.0;
            for i in 0..snr.len() {
                for j in i + 1..snr.len() {
                    let d = (snr[i].1 - snr[j].1).abs();
                    notes.push(format!("gap {} vs {}: {d:.3} dB", snr[i].0, snr[j].0));
                    worst = worst.max(d);
                }
            }
            checks.push(Check::new(
                "CD arms agree within 0.5 dB",
                snr.len() == 3 && worst <= 0.5,
                format!("largest pairwise gap {worst:.3} dB"),
            ));
        }
        "fig6-mimo" => {
            let gap = |label: &str| {
                let s = summaries(parts, label);
                let snr = |v: &str| find(&s, v).map_or(f64::NAN, |p| p.snr_db_mean);
                snr("real_mimo") - snr("complex_butterfly")
            };
            let plain = gap("plain");
            let iq = gap("iq");
            checks.push(Check::new(
                "real and complex MIMO agree within 0.1 dB without IQ imbalance",
                plain.abs() <= 0.1,
                format!("real - complex = {plain:.3} dB"),
            ));
            checks.push(Check::new(
                "real MIMO beats complex by >= 0.5 dB with IQ imbalance",
                iq >= 0.5,
                format!("real - complex = {iq:.3} dB"),
            ));
        }
        "fig7-oversampling" => {
            let snr = |v: &str| find(&main, v).map_or(f64::NAN, |p| p.snr_db_mean);
            let worst = main
                .iter()
                .min_by(|a, b| a.snr_db_mean.total_cmp(&b.snr_db_mean))
                .map(|p| p.params[0].clone())
                .unwrap_or_default();
            checks.push(Check::new(
                "SNR at 2 sps at least 1 dB below 4 sps",
                snr("2") <= snr("4") - 1.0,
                format!("{:.2} dB at 2 sps, {:.2} dB at 4 sps", snr("2"), snr("4")),
            ));
            let rest = main
                .iter()
                .filter(|p| p.params[0] != "2")
                .map(|p| p.snr_db_mean)
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                "SNR at 2 sps at least 1 dB below every point at >= 3 sps",
                snr("2") <= rest - 1.0,
                format!("best of the rest is {rest:.2} dB"),
            ));
            checks.push(Check::new(
                "worst SNR at 2 sps",
                worst == "2",
                format!("worst point {worst} sps"),
            ));
        }
        "fig7-baud" => {
            let hi = summaries(parts, "60g");
            let lo = summaries(parts, "32g5");
            let crossing = threshold_crossing(&hi, 0, SD_FEC_BER);
            notes.push(format!(
                "32.5 Gbaud HD-FEC crossing: {}",
                threshold_crossing(&lo, 0, HD_FEC_BER)
                    .map_or("none".into(), |v| format!("{v:.2} dB OSNR"))
            ));
            checks.push(Check::new(
                "60 Gbaud BER crosses 2e-2 at a finite OSNR",
                crossing.is_some(),
                crossing.map_or("no crossing in the OSNR range".into(), |v| {
                    format!("{v:.2} dB OSNR")
                }),
            ));
            for (label, s) in [("60 Gbaud", &hi), ("32.5 Gbaud", &lo)] {
                let med: Vec<f64> = s.iter().map(|p| p.ber_median).collect();
                let mono = med.windows(2).all(|w| w[1] <= w[0]);
                checks.push(Check::new(
                    &format!("{label} median BER non-increasing in OSNR"),
                    mono,
                    med.iter()
                        .map(|b| format!("{b:.2e}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                ));
            }
        }
        _ => {}
    }
    (checks, notes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(params: &[&str], ber: f64, bits: u64) -> PointSummary {
        PointSummary {
            point: 0,
            params: params.iter().map(|s| s.to_string()).collect(),
            trials: 1,
            errors: (ber * bits as f64) as u64,
            bits,
            ber,
            snr_db_mean: 0.0,
            snr_db_median: 0.0,
            ber_median: ber,
        }
    }

    #[test]
    fn every_study_builds_valid_sweeps() {
        let base = LinkConfig::default();
        for name in STUDY_NAMES {
            for p in study_parts(name, &base).unwrap() {
                p.spec.validate().unwrap();
                // The echoed config must parse back to the same sweep.
                let text = p.spec.to_toml_string();
                match crate::config::parse_config_str::<&str>(&text, "echo", &[]).unwrap() {
                    crate::config::ConfigDoc::Sweep(s) => assert_eq!(s, p.spec, "{name}"),
                    crate::config::ConfigDoc::Link(_) => panic!("{name} echoed as a link config"),
                }
            }
        }
        assert!(study_parts("fig9", &base).is_err());
    }

    #[test]
    fn parabola_vertex() {
        // log10 y = (x - 9.3)^2 sampled on a non-uniform grid.
        let x = [6.0, 8.0, 10.0, 11.5, 13.0];
        let y: Vec<f64> = x
            .iter()
            .map(|v: &f64| 10f64.powf((v - 9.3).powi(2)))
            .collect();
        let (i, v) = refined_minimum(&x, &y);
        assert_eq!(i, 2);
        assert!((v - 9.3).abs() < 1e-9, "{v}");
        let (i, v) = refined_minimum(&x[..2], &y[..2]);
        assert_eq!((i, v), (1, 8.0));
    }

    #[test]
    fn crossing_interpolates_in_log_ber() {
        let pts = [
            summary(&["30.0"], 1e-1, 1000),
            summary(&["32.0"], 1e-3, 1000),
            summary(&["34.0"], 0.0, 1000),
        ];
        let x = threshold_crossing(&pts, 0, 1e-2).unwrap();
        assert!((x - 31.0).abs() < 1e-12);
        assert_eq!(threshold_crossing(&pts[..1], 0, 1e-2), None);
        // A crossing into a zero-error point uses half an error.
        let y = threshold_crossing(&pts[1..], 0, 1e-3 * 0.9).unwrap();
        assert!(y > 32.0 && y < 34.0);
    }
}
