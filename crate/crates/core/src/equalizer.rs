//! Adaptive equalization after KK reconstruction: the 4x4 real MIMO LMS that
//! acts on `(Re Ex, Im Ex, Re Ey, Im Ey)`, a 2x2 complex butterfly baseline,
//! and static chromatic-dispersion compensation.
//!
//! Both adaptive filters run fractionally spaced (`sps` input samples per
//! symbol) and produce one output per symbol. Adaptation is pilot-aided for
//! `pilot_passes` passes over the pilot block, then decision-directed over the
//! output span with the step size scaled by `dd_mu_scale`. Step sizes are
//! normalized by the mean power of each input polarization.

use std::io::Write;
use std::ops::Range;

use crate::channel::{apply_cd, CdDirection, FiberParams};
use crate::config::{EqualizerKind, EqualizerParams};
use crate::error::{Error, Result};
use crate::modulation::ModFormat;
use crate::signal::{Signal, C64};

/// Total tap energy that raises the divergence alarm.
pub const DIVERGENCE_ENERGY: f64 = 1e6;
/// Pilot-span MSE is reported over windows of this many symbols.
pub const MSE_WINDOW: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmsMode {
    Train,
    DecisionDirected,
}

/// 16 real FIR filters `h[out][in]`, each `n_taps` long.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMimoState {
    pub n_taps: usize,
    /// Flattened `[(out * 4 + in) * n_taps + k]`.
    pub taps: Vec<f64>,
    pub step_size: f64,
    pub mode: LmsMode,
}

impl RealMimoState {
    /// Centre-tap identity on the four diagonal filters.
    pub fn identity(n_taps: usize, step_size: f64) -> Result<Self> {
        check_taps(n_taps)?;
        let mut taps = vec![0.0; 16 * n_taps];
        let c = n_taps / 2;
        for d in 0..4 {
            taps[(d * 4 + d) * n_taps + c] = 1.0;
        }
        Ok(Self {
            n_taps,
            taps,
            step_size,
            mode: LmsMode::Train,
        })
    }

    pub fn tap(&self, out: usize, inp: usize, k: usize) -> f64 {
        self.taps[(out * 4 + inp) * self.n_taps + k]
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// The real filter that reproduces a complex butterfly exactly.
    pub fn from_complex(c: &ComplexButterflyState) -> Self {
        let n = c.n_taps;
        let mut taps = vec![0.0; 16 * n];
        for o in 0..2 {
            for i in 0..2 {
                for k in 0..n {
                    let g = c.tap(o, i, k);
                    let mut set = |ro: usize, ri: usize, v: f64| taps[(ro * 4 + ri) * n + k] = v;
                    set(2 * o, 2 * i, g.re);
                    set(2 * o, 2 * i + 1, -g.im);
                    set(2 * o + 1, 2 * i, g.im);
                    set(2 * o + 1, 2 * i + 1, g.re);
                }
            }
        }
        Self {
            n_taps: n,
            taps,
            step_size: c.step_size,
            mode: c.mode,
        }
    }

    /// Tap snapshot: header `h11..h44`, one row per tap index.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (0..16)
            .map(|f| format!("h{}{}", f / 4 + 1, f % 4 + 1))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.n_taps {
            let row: Vec<String> = (0..16)
                .map(|f| format!("{:e}", self.taps[f * self.n_taps + k]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 4 complex FIR filters `g[out][in]` over the two polarizations.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexButterflyState {
    pub n_taps: usize,
    pub taps: Vec<C64>,
    pub step_size: f64,
    pub mode: LmsMode,
}

impl ComplexButterflyState {
    pub fn identity(n_taps: usize, step_size: f64) -> Result<Self> {
        check_taps(n_taps)?;
        let mut taps = vec![C64::new(0.0, 0.0); 4 * n_taps];
        let c = n_taps / 2;
        taps[c] = C64::new(1.0, 0.0);
        taps[3 * n_taps + c] = C64::new(1.0, 0.0);
        Ok(Self {
            n_taps,
            taps,
            step_size,
            mode: LmsMode::Train,
        })
    }

    pub fn tap(&self, out: usize, inp: usize, k: usize) -> C64 {
        self.taps[(out * 2 + inp) * self.n_taps + k]
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

fn check_taps(n_taps: usize) -> Result<()> {
    if n_taps == 0 || n_taps.is_multiple_of(2) {
        return Err(Error::invalid_config(format!(
            "tap count must be odd, got {n_taps}"
        )));
    }
    Ok(())
}

/// Where pilots sit in the input, what to output, and how to decide.
#[derive(Clone, Debug)]
pub struct TrainingPlan<'a> {
    /// Input samples per symbol; symbol `k` is centred on sample `k * sps`.
    pub sps: usize,
    /// Symbol index of the first pilot.
    pub first_pilot: usize,
    pub pilots: [&'a [C64]; 2],
    pub pilot_passes: usize,
    /// Symbols to equalize (decision-directed) after training.
    pub output: Range<usize>,
    pub format: ModFormat,
    pub dd_mu_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerReport {
    pub converged: bool,
    /// Mean squared pilot error over the last `MSE_WINDOW` training updates.
    pub final_mse: f64,
    /// First pilot window whose MSE falls within 2x the final MSE, in symbols
    /// of adaptation.
    pub symbols_to_converge: usize,
    /// Training MSE per consecutive window of `MSE_WINDOW` pilot updates.
    pub pilot_mse_windows: Vec<f64>,
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    /// Taps at the end of adaptation, as a real 4x4 filter.
    pub taps: RealMimoState,
}

fn check_inputs(ex: &Signal, ey: &Signal, plan: &TrainingPlan) -> Result<usize> {
    if ex.len() != ey.len() || ex.sample_rate() != ey.sample_rate() {
        return Err(Error::invalid_input(
            "equalizer inputs differ in length or rate",
        ));
    }
    if plan.sps == 0 {
        return Err(Error::invalid_input("equalizer needs sps >= 1"));
    }
    if plan.pilots[0].len() != plan.pilots[1].len() {
        return Err(Error::invalid_input("pilot blocks differ in length"));
    }
    let n_sym = ex.len() / plan.sps;
    if plan.first_pilot + plan.pilots[0].len() > n_sym || plan.output.end > n_sym {
        return Err(Error::invalid_input(
            "pilot or output span exceeds the input",
        ));
    }
    Ok(n_sym)
}

/// Pads `rail` circularly by `c` on each side.
fn padded(rail: impl Iterator<Item = f64> + Clone, n: usize, c: usize) -> Vec<f64> {
    let v: Vec<f64> = rail.collect();
    let mut out = Vec::with_capacity(n + 2 * c);
    for k in 0..n + 2 * c {
        out.push(v[(k + n - c % n) % n]);
    }
    out
}

fn pol_power(x: &Signal) -> f64 {
    let p = x.power();
    if p > 0.0 {
        p
    } else {
        1.0
    }
}

fn decide(z: C64, fmt: ModFormat) -> C64 {
    fmt.constellation()[fmt.nearest(z)]
}

fn summarize(windows: &[f64], final_mse: f64, fmt: ModFormat) -> (bool, usize) {
    let to_converge = windows
        .iter()
        .position(|&m| m <= 2.0 * final_mse)
        .map_or(windows.len() * MSE_WINDOW, |w| (w + 1) * MSE_WINDOW);
    let d = fmt.min_distance();
    (
        final_mse.is_finite() && final_mse < (d / 4.0).powi(2),
        to_converge,
    )
}

struct MseTracker {
    windows: Vec<f64>,
    acc: f64,
    count: usize,
}

impl MseTracker {
    fn new() -> Self {
        Self {
            windows: Vec::new(),
            acc: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, e2: f64) {
        self.acc += e2;
        self.count += 1;
        if self.count == MSE_WINDOW {
            self.windows.push(self.acc / MSE_WINDOW as f64);
            self.acc = 0.0;
            self.count = 0;
        }
    }
}

/// 4x4 real MIMO LMS.
pub fn real_mimo_lms(
    ex: &Signal,
    ey: &Signal,
    plan: &TrainingPlan,
    mut state: RealMimoState,
) -> Result<EqualizerReport> {
    check_inputs(ex, ey, plan)?;
    let n = ex.len();
    let l = state.n_taps;
    let c = l / 2;
    let norm = [
        1.0 / pol_power(ex),
        1.0 / pol_power(ex),
        1.0 / pol_power(ey),
        1.0 / pol_power(ey),
    ];
    let rails = [
        padded(ex.samples().iter().map(|v| v.re), n, c),
        padded(ex.samples().iter().map(|v| v.im), n, c),
        padded(ey.samples().iter().map(|v| v.re), n, c),
        padded(ey.samples().iter().map(|v| v.im), n, c),
    ];
    let sps = plan.sps;

    let filter = |taps: &[f64], k: usize| -> [f64; 4] {
        let base = k * sps;
        let mut z = [0.0; 4];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, rail) in rails.iter().enumerate() {
                let h = &taps[(o * 4 + i) * l..(o * 4 + i + 1) * l];
                let u = &rail[base..base + l];
                acc += h.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
            }
            *zo = acc;
        }
        z
    };
    let update = |taps: &mut [f64], k: usize, e: [f64; 4], mu: f64| {
        let base = k * sps;
        for (o, &eo) in e.iter().enumerate() {
            for (i, rail) in rails.iter().enumerate() {
                let g = mu * eo * norm[i];
                let h = &mut taps[(o * 4 + i) * l..(o * 4 + i + 1) * l];
                let u = &rail[base..base + l];
                h.iter_mut().zip(u).for_each(|(a, b)| *a += g * b);
            }
        }
    };

    let mut tracker = MseTracker::new();
    let mut final_mse = f64::NAN;
    let mut step = 0usize;
    let n_pilots = plan.pilots[0].len();
    for pass in 0..plan.pilot_passes {
        let mut acc = 0.0;
        for j in 0..n_pilots {
            let k = plan.first_pilot + j;
            let z = filter(&state.taps, k);
            let dx = plan.pilots[0][j];
            let dy = plan.pilots[1][j];
            let e = [dx.re - z[0], dx.im - z[1], dy.re - z[2], dy.im - z[3]];
            let e2 = e.iter().map(|v| v * v).sum::<f64>() / 2.0;
            tracker.push(e2);
            if j + MSE_WINDOW.min(n_pilots) >= n_pilots {
                acc += e2;
            }
            update(&mut state.taps, k, e, state.step_size);
            step += 1;
            if step.is_multiple_of(64) && !(state.energy() <= DIVERGENCE_ENERGY) {
                return Err(Error::Diverged { symbol_index: k });
            }
        }
        if pass + 1 == plan.pilot_passes {
            final_mse = acc / MSE_WINDOW.min(n_pilots) as f64;
        }
    }

    state.mode = LmsMode::DecisionDirected;
    let mu_dd = state.step_size * plan.dd_mu_scale;
    let mut x = Vec::with_capacity(plan.output.len());
    let mut y = Vec::with_capacity(plan.output.len());
    for k in plan.output.clone() {
        let z = filter(&state.taps, k);
        let zx = C64::new(z[0], z[1]);
        let zy = C64::new(z[2], z[3]);
        x.push(zx);
        y.push(zy);
        if mu_dd > 0.0 {
            let dx = decide(zx, plan.format);
            let dy = decide(zy, plan.format);
            update(
                &mut state.taps,
                k,
                [dx.re - z[0], dx.im - z[1], dy.re - z[2], dy.im - z[3]],
                mu_dd,
            );
            step += 1;
            if step.is_multiple_of(64) && !(state.energy() <= DIVERGENCE_ENERGY) {
                return Err(Error::Diverged { symbol_index: k });
            }
        }
    }
    if !(state.energy() <= DIVERGENCE_ENERGY) {
        return Err(Error::Diverged {
            symbol_index: plan.output.end,
        });
    }
    let (converged, symbols_to_converge) = summarize(&tracker.windows, final_mse, plan.format);
    Ok(EqualizerReport {
        converged: plan.pilot_passes == 0 || converged,
        final_mse: if final_mse.is_nan() { 0.0 } else { final_mse },
        symbols_to_converge,
        pilot_mse_windows: tracker.windows,
        x,
        y,
        taps: state,
    })
}

/// 2x2 complex butterfly LMS (strictly linear).
pub fn complex_butterfly_lms(
    ex: &Signal,
    ey: &Signal,
    plan: &TrainingPlan,
    mut state: ComplexButterflyState,
) -> Result<EqualizerReport> {
    check_inputs(ex, ey, plan)?;
    let n = ex.len();
    let l = state.n_taps;
    let c = l / 2;
    let norm = [1.0 / pol_power(ex), 1.0 / pol_power(ey)];
    let pad = |s: &Signal| -> Vec<C64> {
        (0..n + 2 * c)
            .map(|k| s.samples()[(k + n - c % n) % n])
            .collect()
    };
    let inputs = [pad(ex), pad(ey)];
    let sps = plan.sps;

    let filter = |taps: &[C64], k: usize| -> [C64; 2] {
        let base = k * sps;
        let mut z = [C64::new(0.0, 0.0); 2];
        for (o, zo) in z.iter_mut().enumerate() {
            for (i, v) in inputs.iter().enumerate() {
                let g = &taps[(o * 2 + i) * l..(o * 2 + i + 1) * l];
                *zo += g
                    .iter()
                    .zip(&v[base..base + l])
                    .map(|(a, b)| a * b)
                    .sum::<C64>();
            }
        }
        z
    };
    let update = |taps: &mut [C64], k: usize, e: [C64; 2], mu: f64| {
        let base = k * sps;
        for (o, &eo) in e.iter().enumerate() {
            for (i, v) in inputs.iter().enumerate() {
                let g = eo * (mu * norm[i]);
                let h = &mut taps[(o * 2 + i) * l..(o * 2 + i + 1) * l];
                h.iter_mut()
                    .zip(&v[base..base + l])
                    .for_each(|(a, b)| *a += g * b.conj());
            }
        }
    };

    let mut tracker = MseTracker::new();
    let mut final_mse = f64::NAN;
    let mut step = 0usize;
    let n_pilots = plan.pilots[0].len();
    for pass in 0..plan.pilot_passes {
        let mut acc = 0.0;
        for j in 0..n_pilots {
            let k = plan.first_pilot + j;
            let z = filter(&state.taps, k);
            let e = [plan.pilots[0][j] - z[0], plan.pilots[1][j] - z[1]];
            let e2 = (e[0].norm_sqr() + e[1].norm_sqr()) / 2.0;
            tracker.push(e2);
            if j + MSE_WINDOW.min(n_pilots) >= n_pilots {
                acc += e2;
            }
            update(&mut state.taps, k, e, state.step_size);
            step += 1;
            if step.is_multiple_of(64) && !(state.energy() <= DIVERGENCE_ENERGY) {
                return Err(Error::Diverged { symbol_index: k });
            }
        }
        if pass + 1 == plan.pilot_passes {
            final_mse = acc / MSE_WINDOW.min(n_pilots) as f64;
        }
    }

    state.mode = LmsMode::DecisionDirected;
    let mu_dd = state.step_size * plan.dd_mu_scale;
    let mut x = Vec::with_capacity(plan.output.len());
    let mut y = Vec::with_capacity(plan.output.len());
    for k in plan.output.clone() {
        let z = filter(&state.taps, k);
        x.push(z[0]);
        y.push(z[1]);
        if mu_dd > 0.0 {
            let e = [
                decide(z[0], plan.format) - z[0],
                decide(z[1], plan.format) - z[1],
            ];
            update(&mut state.taps, k, e, mu_dd);
            step += 1;
            if step.is_multiple_of(64) && !(state.energy() <= DIVERGENCE_ENERGY) {
                return Err(Error::Diverged { symbol_index: k });
            }
        }
    }
    if !(state.energy() <= DIVERGENCE_ENERGY) {
        return Err(Error::Diverged {
            symbol_index: plan.output.end,
        });
    }
    let (converged, symbols_to_converge) = summarize(&tracker.windows, final_mse, plan.format);
    Ok(EqualizerReport {
        converged: plan.pilot_passes == 0 || converged,
        final_mse: if final_mse.is_nan() { 0.0 } else { final_mse },
        symbols_to_converge,
        pilot_mse_windows: tracker.windows,
        x,
        y,
        taps: RealMimoState::from_complex(&state),
    })
}

/// Runs the configured equalizer from its identity initialization.
pub fn run_equalizer(
    ex: &Signal,
    ey: &Signal,
    plan: &TrainingPlan,
    params: &EqualizerParams,
) -> Result<EqualizerReport> {
    match params.kind {
        EqualizerKind::RealMimo => real_mimo_lms(
            ex,
            ey,
            plan,
            RealMimoState::identity(params.n_taps, params.mu)?,
        ),
        EqualizerKind::ComplexButterfly => complex_butterfly_lms(
            ex,
            ey,
            plan,
            ComplexButterflyState::identity(params.n_taps, params.mu)?,
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdCompPoint {
    /// Complex baseband before carrier insertion.
    PreTx,
    /// Reconstructed field after KK.
    PostRx,
}

/// Static inverse-CD filter; identical at both points.
pub fn static_cd_comp(x: &Signal, fiber: &FiberParams, _point: CdCompPoint) -> Signal {
    apply_cd(x, fiber, CdDirection::Inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::map_bits;
    use crate::txdsp::{matched_filter, pulse_shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn symbols(n: usize, fmt: ModFormat, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..n * fmt.bits_per_symbol())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        map_bits(&bits, fmt).unwrap()
    }

    fn plan<'a>(
        sx: &'a [C64],
        sy: &'a [C64],
        sps: usize,
        pilots: usize,
        passes: usize,
    ) -> TrainingPlan<'a> {
        TrainingPlan {
            sps,
            first_pilot: 0,
            pilots: [&sx[..pilots], &sy[..pilots]],
            pilot_passes: passes,
            output: pilots..sx.len(),
            format: ModFormat::Qam16,
            dd_mu_scale: 0.1,
        }
    }

    fn sig(v: &[C64]) -> Signal {
        Signal::new(v.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn identity_with_zero_step_passes_through() {
        let sx = symbols(500, ModFormat::Qam16, 1);
        let sy = symbols(500, ModFormat::Qam16, 2);
        let p = plan(&sx, &sy, 1, 100, 1);
        let r = real_mimo_lms(
            &sig(&sx),
            &sig(&sy),
            &p,
            RealMimoState::identity(11, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(r.x, sx[100..]);
        assert_eq!(r.y, sy[100..]);
        let r = complex_butterfly_lms(
            &sig(&sx),
            &sig(&sy),
            &p,
            ComplexButterflyState::identity(11, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(r.x, sx[100..]);
        assert_eq!(r.y, sy[100..]);
    }

    #[test]
    fn even_taps_rejected() {
        assert!(RealMimoState::identity(60, 1e-3).is_err());
    }

    #[test]
    fn recovers_static_real_mixing() {
        let n = 60_000;
        let sx = symbols(n, ModFormat::Qam16, 3);
        let sy = symbols(n, ModFormat::Qam16, 4);
        let mix = [
            [0.9, 0.2, -0.1, 0.05],
            [-0.15, 0.8, 0.1, 0.0],
            [0.1, 0.0, 0.7, 0.3],
            [0.05, -0.2, -0.25, 0.95],
        ];
        let mut ex = Vec::with_capacity(n);
        let mut ey = Vec::with_capacity(n);
        for k in 0..n {
            let u = [sx[k].re, sx[k].im, sy[k].re, sy[k].im];
            let v: Vec<f64> = mix
                .iter()
                .map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum())
                .collect();
            ex.push(C64::new(v[0], v[1]));
            ey.push(C64::new(v[2], v[3]));
        }
        let mut p = plan(&sx, &sy, 1, 50_000, 1);
        p.dd_mu_scale = 1.0;
        let r = real_mimo_lms(
            &sig(&ex),
            &sig(&ey),
            &p,
            RealMimoState::identity(5, 1e-3).unwrap(),
        )
        .unwrap();
        assert!(r.final_mse < 1e-3, "mse {}", r.final_mse);
        assert!(r.converged);
        let mse: f64 =
            r.x.iter()
                .zip(&sx[50_000..])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / r.x.len() as f64;
        assert!(mse < 1e-3);
    }

    #[test]
    fn complex_embedding_is_exact() {
        let n = 3000;
        let sx = symbols(n, ModFormat::Qam16, 5);
        let sy = symbols(n, ModFormat::Qam16, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy = |s: &[C64], rng: &mut ChaCha8Rng| -> Vec<C64> {
            s.iter()
                .flat_map(|&v| {
                    let a =
                        v + C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * 0.05;
                    [a, a * 0.5]
                })
                .collect()
        };
        let ex = noisy(&sx, &mut rng);
        let ey = noisy(&sy, &mut rng);
        let p = plan(&sx, &sy, 2, 2000, 1);
        let rc = complex_butterfly_lms(
            &sig(&ex),
            &sig(&ey),
            &p,
            ComplexButterflyState::identity(9, 2e-3).unwrap(),
        )
        .unwrap();
        // Freeze the embedded taps and replay through the real filter.
        let frozen = RealMimoState {
            step_size: 0.0,
            ..rc.taps.clone()
        };
        let mut p0 = p.clone();
        p0.pilot_passes = 0;
        p0.dd_mu_scale = 0.0;
        let mut late = ComplexButterflyState::identity(9, 0.0).unwrap();
        // Rebuild the complex taps from the embedding and replay them too.
        for o in 0..2 {
            for i in 0..2 {
                for k in 0..9 {
                    late.taps[(o * 2 + i) * 9 + k] =
                        C64::new(frozen.tap(2 * o, 2 * i, k), frozen.tap(2 * o + 1, 2 * i, k));
                }
            }
        }
        let a = complex_butterfly_lms(&sig(&ex), &sig(&ey), &p0, late).unwrap();
        let b = real_mimo_lms(&sig(&ex), &sig(&ey), &p0, frozen).unwrap();
        for (u, v) in a.x.iter().chain(&a.y).zip(b.x.iter().chain(&b.y)) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let sx = symbols(4000, ModFormat::Qam16, 8);
        let sy = symbols(4000, ModFormat::Qam16, 9);
        let p = plan(&sx, &sy, 1, 1000, 2);
        let run = || {
            real_mimo_lms(
                &sig(&sx),
                &sig(&sy),
                &p,
                RealMimoState::identity(7, 1e-3).unwrap(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_reported() {
        let sx = symbols(2000, ModFormat::Qam16, 10);
        let sy = symbols(2000, ModFormat::Qam16, 11);
        let big: Vec<C64> = sx.iter().map(|v| v * 1e3).collect();
        let p = plan(&sx, &sy, 1, 1000, 1);
        let err = real_mimo_lms(
            &sig(&big),
            &sig(&sy),
            &p,
            RealMimoState::identity(31, 5.0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn learns_residual_dispersion() {
        let baud = 27e9;
        let n = 12_000;
        let sx = symbols(n, ModFormat::Qam16, 12);
        let sy = symbols(n, ModFormat::Qam16, 13);
        let fiber = FiberParams::default();
        let prep = |s: &[C64]| {
            let w = pulse_shape(s, 2, 0.1, baud).unwrap();
            matched_filter(&apply_cd(&w, &fiber, CdDirection::Forward), 0.1, baud)
        };
        let (ex, ey) = (prep(&sx), prep(&sy));
        let passes = 10;
        let mut p = plan(&sx, &sy, 2, 2000, passes);
        p.output = 2000..n - 100;
        let r = real_mimo_lms(&ex, &ey, &p, RealMimoState::identity(61, 1e-3).unwrap()).unwrap();
        let errors =
            r.x.iter()
                .zip(&sx[2000..n - 100])
                .filter(|(a, b)| ModFormat::Qam16.nearest(**a) != ModFormat::Qam16.nearest(**b))
                .count();
        assert_eq!(errors, 0);
        // Unequalised, dispersion closes the eye.
        let raw_errors = (2000..n - 100)
            .filter(|&k| {
                ModFormat::Qam16.nearest(ex.samples()[2 * k]) != ModFormat::Qam16.nearest(sx[k])
            })
            .count();
        assert!(raw_errors > 100);
    }

    #[test]
    fn pilot_mse_decreases() {
        let n = 20_000;
        let sx = symbols(n, ModFormat::Qam16, 14);
        let sy = symbols(n, ModFormat::Qam16, 15);
        let rot = C64::from_polar(0.7, 0.4);
        let ex: Vec<C64> = sx.iter().map(|v| v * rot).collect();
        let p = plan(&sx, &sy, 1, 16_000, 1);
        let r = real_mimo_lms(
            &sig(&ex),
            &sig(&sy),
            &p,
            RealMimoState::identity(5, 1e-3).unwrap(),
        )
        .unwrap();
        for w in r.pilot_mse_windows.windows(2) {
            assert!(w[1] <= w[0], "{:?}", r.pilot_mse_windows);
        }
    }

    #[test]
    fn static_cd_comp_undoes_fiber() {
        let sx = symbols(512, ModFormat::Qpsk, 17);
        let w = pulse_shape(&sx, 4, 0.1, 27e9).unwrap();
        let f = FiberParams::default();
        let pre = static_cd_comp(&w, &f, CdCompPoint::PreTx);
        let back = apply_cd(&pre, &f, CdDirection::Forward);
        assert!(crate::signal::rms_diff(back.samples(), w.samples()) < 1e-9);
        assert_eq!(
            static_cd_comp(&w, &FiberParams::back_to_back(), CdCompPoint::PostRx),
            w
        );
    }

    #[test]
    fn tap_csv_shape() {
        let s = RealMimoState::identity(3, 0.0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("h11,h12"));
        assert_eq!(lines[2].split(',').count(), 16);
    }
}
