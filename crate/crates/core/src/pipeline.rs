//! End-to-end link: transmitter, fiber, Stokes receiver, KK, equalizer and
//! metrics, driven by one [`LinkConfig`].

use std::f64::consts::PI;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    apply_cd, apply_converter, apply_iq_imbalance, apply_rail_impairments, apply_rotation,
    load_ase_with_power, CdDirection, JonesRotation,
};
use crate::config::{CdCompArm, DerotationMode, LinkConfig};
use crate::equalizer::{run_equalizer, static_cd_comp, CdCompPoint, EqualizerReport, TrainingPlan};
use crate::error::{Result, StageExt};
use crate::kk::{kk_reconstruct_with_stats, KKConfig};
use crate::metrics::{combine, score_pol, LinkResult};
use crate::seed::{stream_seed, Stream};
use crate::signal::{resample, Signal, C64};
use crate::svr::{
    apply_derotation, detect_stokes, estimate_derotation, frame_sync, DerotationMatrix, StokesRails,
};
use crate::txdsp::{build_frame, DualPolFrame};

/// Seed used when the configuration does not carry one.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct LinkDiagnostics {
    /// Fraction of transmitted data samples with `|s| >= A`.
    pub min_phase_violation_frac: f64,
    pub derot_cond: f64,
    pub derot_warning: bool,
    pub converged: bool,
    pub final_mse: f64,
    pub symbols_to_converge: usize,
    /// Samples raised to the KK power floor, both rails.
    pub clamped_samples: usize,
    pub sync_offset: usize,
    pub sync_psr_db: f64,
}

/// A named intermediate signal kept for dumping.
#[derive(Clone, Debug)]
pub struct TracePoint {
    pub name: String,
    pub signal: Signal,
}

#[derive(Clone, Debug)]
pub struct LinkRun {
    pub result: LinkResult,
    pub diagnostics: LinkDiagnostics,
    pub equalizer: EqualizerReport,
    /// Wall-clock seconds per stage; excluded from equality checks.
    pub timings: Vec<(&'static str, f64)>,
    pub trace: Vec<TracePoint>,
}

/// Runs one link with the seed stored in `cfg` (or [`DEFAULT_SEED`]).
pub fn run_link(cfg: &LinkConfig) -> Result<LinkRun> {
    run_link_traced(cfg, false)
}

struct Clock {
    last: Instant,
    timings: Vec<(&'static str, f64)>,
}

impl Clock {
    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.push((stage, (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// As [`run_link`], optionally keeping intermediate signals.
pub fn run_link_traced(cfg: &LinkConfig, keep_trace: bool) -> Result<LinkRun> {
    cfg.validate().stage("config")?;
    let seed = cfg.link.seed.unwrap_or(DEFAULT_SEED);
    let mut clock = Clock {
        last: Instant::now(),
        timings: Vec::new(),
    };
    let mut trace = Vec::new();
    let mut keep = |name: &str, s: &Signal| {
        if keep_trace {
            trace.push(TracePoint {
                name: name.to_string(),
                signal: s.clone(),
            });
        }
    };

    let frame = build_frame(cfg, seed).stage("tx")?;
    let (tx_x, tx_y) = transmitter_impairments(&frame, cfg, seed);
    keep("tx_x", &tx_x);
    keep("tx_y", &tx_y);
    clock.lap("tx");

    let (rx_x, rx_y, rotation) = channel(cfg, &frame, &tx_x, &tx_y, seed).stage("channel")?;
    keep("rx_x", &rx_x);
    keep("rx_y", &rx_y);
    clock.lap("channel");

    let rails = detect_stokes(&rx_x, &rx_y).stage("detect")?;
    let mut adc = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::RxConverter));
    let rails = rails.map_rails(|r| apply_rail_impairments(r, &cfg.rx_impairments, &mut adc));
    let offset = cfg.receiver.capture_offset_samples as isize;
    let captured = rails.map_rails(|r| r.rotated(offset));
    clock.lap("detect");

    let sps = cfg.link.samples_per_symbol;
    let sync = frame_sync(&captured, &cfg.frame, sps).stage("sync")?;
    let aligned = captured.advanced(sync.offset);
    clock.lap("sync");

    let derot = match cfg.receiver.derotation {
        DerotationMode::Training => {
            Some(estimate_derotation(&aligned, &cfg.frame, sps).stage("derotation")?)
        }
        DerotationMode::Oracle => Some(DerotationMatrix::oracle(&rotation)),
        DerotationMode::Bypass => None,
    };
    let derot_cond = derot.as_ref().map_or(1.0, |m| m.condition);
    let derot_warning = derot.as_ref().is_some_and(|m| m.needs_warning());
    let rails = match &derot {
        Some(m) => apply_derotation(&aligned, m),
        None => aligned,
    };
    clock.lap("derotation");

    let (fields, clamped) = reconstruct(cfg, &rails).stage("kk")?;
    let [mut ex, mut ey] = fields;
    if cfg.equalizer.cd_comp == CdCompArm::Post {
        ex = static_cd_comp(&ex, &cfg.fiber, CdCompPoint::PostRx);
        ey = static_cd_comp(&ey, &cfg.fiber, CdCompPoint::PostRx);
    }
    keep("kk_x", &ex);
    keep("kk_y", &ey);
    clock.lap("kk");

    let eq_fs = cfg.equalizer.input_sps as f64 * cfg.link.baud_hz;
    let ex = unit_power(resample(&ex, eq_fs).stage("resample")?);
    let ey = unit_power(resample(&ey, eq_fs).stage("resample")?);
    clock.lap("resample");

    let layout = &cfg.frame;
    let margin = layout.guard_symbols / 2;
    let first_payload = layout.first_payload() - margin;
    let plan = TrainingPlan {
        sps: cfg.equalizer.input_sps,
        first_pilot: layout.first_pilot() - margin,
        pilots: [&frame.tributaries[0].pilots, &frame.tributaries[1].pilots],
        pilot_passes: cfg.equalizer.pilot_passes,
        output: first_payload..first_payload + layout.payload_symbols,
        format: cfg.link.format,
        dd_mu_scale: cfg.equalizer.dd_mu_scale,
    };
    let report = run_equalizer(&ex, &ey, &plan, &cfg.equalizer).stage("equalizer")?;
    clock.lap("equalizer");

    let fmt = cfg.link.format;
    let trib = &frame.tributaries;
    let result = combine([
        score_pol(&report.x, &trib[0].payload, &trib[0].payload_bits, fmt).stage("metrics")?,
        score_pol(&report.y, &trib[1].payload, &trib[1].payload_bits, fmt).stage("metrics")?,
    ]);
    clock.lap("metrics");

    Ok(LinkRun {
        result,
        diagnostics: LinkDiagnostics {
            min_phase_violation_frac: frame.min_phase_violation,
            derot_cond,
            derot_warning,
            converged: report.converged,
            final_mse: report.final_mse,
            symbols_to_converge: report.symbols_to_converge,
            clamped_samples: clamped,
            sync_offset: sync.offset,
            sync_psr_db: sync.psr_db,
        },
        equalizer: report,
        timings: clock.timings,
        trace,
    })
}

/// IQ imbalance and DAC model on the complete transmit frame.
fn transmitter_impairments(frame: &DualPolFrame, cfg: &LinkConfig, seed: u64) -> (Signal, Signal) {
    let imp = &cfg.tx_impairments;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::TxConverter));
    let x = apply_converter(&apply_iq_imbalance(&frame.x, imp), imp, &mut rng);
    let y = apply_converter(&apply_iq_imbalance(&frame.y, imp), imp, &mut rng);
    (x, y)
}

/// Fiber CD, polarization rotation and ASE. OSNR is referenced to the
/// dual-polarization power of the data section at the fiber input.
fn channel(
    cfg: &LinkConfig,
    frame: &DualPolFrame,
    x: &Signal,
    y: &Signal,
    seed: u64,
) -> Result<(Signal, Signal, JonesRotation)> {
    let range = frame.data_range();
    let p_ref = x.slice(range.clone())?.power() + y.slice(range)?.power();
    let x = apply_cd(x, &cfg.fiber, CdDirection::Forward);
    let y = apply_cd(y, &cfg.fiber, CdDirection::Forward);
    let u = cfg.channel.rotation.resolve()?;
    let (x, y) = apply_rotation(&x, &y, &u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Ase));
    let (x, y) = load_ase_with_power(
        &x,
        &y,
        cfg.channel.osnr_db,
        cfg.channel.ref_bw_hz,
        p_ref,
        &mut rng,
    )?;
    Ok((x, y, u))
}

/// KK on the X and Y power rails over the data section less half a guard at
/// each end, with the carrier phase referred back to the data-section origin.
fn reconstruct(cfg: &LinkConfig, rails: &StokesRails) -> Result<([Signal; 2], usize)> {
    let layout = &cfg.frame;
    let sps = cfg.link.samples_per_symbol;
    let margin = layout.guard_symbols / 2;
    let n0 = margin * sps;
    let start = layout.data_start(sps) + n0;
    let len = (layout.data_symbols() - 2 * margin) * sps;
    let kk = KKConfig {
        internal_oversampling: cfg.kk.internal_oversampling,
        carrier_freq_hz: cfg.carrier_freq_hz(),
        power_floor_rel: cfg.kk.power_floor_rel,
        baud_hz: cfg.link.baud_hz,
        rolloff: cfg.link.rolloff,
        lowpass: cfg.kk.lowpass,
    };
    let w = 2.0 * PI * kk.carrier_freq_hz / rails.sample_rate() * n0 as f64;
    let rot = C64::from_polar(1.0, w);
    let mut clamped = 0;
    let mut out = Vec::with_capacity(2);
    for rail in [&rails.p_x, &rails.p_y] {
        let o = kk_reconstruct_with_stats(&rail.slice(start..start + len)?, &kk)?;
        clamped += o.clamped;
        out.push(o.field.map(|v| v * rot));
    }
    let y = out.pop().expect("two rails");
    let x = out.pop().expect("two rails");
    Ok(([x, y], clamped))
}

fn unit_power(x: Signal) -> Signal {
    let p = x.power();
    if p > 0.0 {
        x.scaled(1.0 / p.sqrt())
    } else {
        x
    }
}
