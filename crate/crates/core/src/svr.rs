//! Stokes-vector receiver: square-law and balanced detection into four real
//! rails, training-based 4x4 de-rotation and frame synchronization.

use nalgebra::{Matrix4, Vector4};

use crate::channel::JonesRotation;
use crate::error::{Error, Result};
use crate::signal::{fft, ifft, RealSignal, Signal, C64};
use crate::txdsp::{training_fields, FrameLayout, N_TRAINING_SLOTS};

/// Condition number above which training is rejected.
pub const MAX_TRAINING_COND: f64 = 1e8;
/// Condition number above which a warning is attached to the estimate.
pub const WARN_TRAINING_COND: f64 = 1e6;
/// Minimum accepted sync peak-to-sidelobe ratio.
pub const MIN_SYNC_PSR_DB: f64 = 3.0;

/// `(|Ex|^2, |Ey|^2, 2 Re[Ex Ey*], 2 Im[Ex Ey*])`.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesRails {
    pub p_x: RealSignal,
    pub p_y: RealSignal,
    pub s2: RealSignal,
    pub s3: RealSignal,
}

impl StokesRails {
    pub fn len(&self) -> usize {
        self.p_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_x.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.p_x.sample_rate()
    }

    pub fn rails(&self) -> [&RealSignal; 4] {
        [&self.p_x, &self.p_y, &self.s2, &self.s3]
    }

    pub fn map_rails(&self, mut f: impl FnMut(&RealSignal) -> RealSignal) -> Self {
        Self {
            p_x: f(&self.p_x),
            p_y: f(&self.p_y),
            s2: f(&self.s2),
            s3: f(&self.s3),
        }
    }

    /// Rails at sample `n` as a vector.
    pub fn at(&self, n: usize) -> Vector4<f64> {
        Vector4::new(
            self.p_x.samples()[n],
            self.p_y.samples()[n],
            self.s2.samples()[n],
            self.s3.samples()[n],
        )
    }

    /// Circular shift by `-offset`: sample `offset` moves to 0.
    pub fn advanced(&self, offset: usize) -> Self {
        self.map_rails(|r| r.rotated(-(offset as isize)))
    }
}

pub fn stokes_vector(ex: C64, ey: C64) -> Vector4<f64> {
    let c = ex * ey.conj();
    Vector4::new(ex.norm_sqr(), ey.norm_sqr(), 2.0 * c.re, 2.0 * c.im)
}

pub fn detect_stokes(x: &Signal, y: &Signal) -> Result<StokesRails> {
    if x.len() != y.len() || x.sample_rate() != y.sample_rate() {
        return Err(Error::invalid_input(
            "polarization tributaries differ in length or sample rate",
        ));
    }
    let fs = x.sample_rate();
    let n = x.len();
    let mut rails = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for (&a, &b) in x.samples().iter().zip(y.samples()) {
        let s = stokes_vector(a, b);
        for k in 0..4 {
            rails[k].push(s[k]);
        }
    }
    let [p_x, p_y, s2, s3] = rails.map(|r| RealSignal::from_parts(r, fs));
    Ok(StokesRails { p_x, p_y, s2, s3 })
}

/// The 4x4 real map of Stokes-rail space, `rails_out = M rails_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerotationMatrix {
    pub m: Matrix4<f64>,
    /// 2-norm condition number of the measured training matrix (1 for oracles).
    pub condition: f64,
}

impl DerotationMatrix {
    pub fn identity() -> Self {
        Self {
            m: Matrix4::identity(),
            condition: 1.0,
        }
    }

    pub fn needs_warning(&self) -> bool {
        self.condition > WARN_TRAINING_COND
    }

    /// Row-major entries.
    pub fn row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn inverse(&self) -> Option<Self> {
        self.m.try_inverse().map(|m| Self {
            m,
            condition: self.condition,
        })
    }

    /// Rail-space image of a Jones rotation: `stokes(U e) = T(U) stokes(e)`.
    pub fn forward_of(u: &JonesRotation) -> Self {
        let basis = training_fields();
        let mut t = Matrix4::zeros();
        let mut r = Matrix4::zeros();
        let m = u.matrix();
        for (k, &(ex, ey)) in basis.iter().enumerate() {
            let ox = m[0][0] * ex + m[0][1] * ey;
            let oy = m[1][0] * ex + m[1][1] * ey;
            t.set_column(k, &stokes_vector(ex, ey));
            r.set_column(k, &stokes_vector(ox, oy));
        }
        let m = r * t.try_inverse().expect("training basis is full rank");
        Self { m, condition: 1.0 }
    }

    /// Exact de-rotation for a known Jones rotation.
    pub fn oracle(u: &JonesRotation) -> Self {
        let fwd = Self::forward_of(u);
        Self {
            m: fwd.m.try_inverse().expect("rotation image is invertible"),
            condition: 1.0,
        }
    }
}

/// Transmitted Stokes vector per training slot, as matrix columns.
pub fn training_targets() -> Matrix4<f64> {
    let mut t = Matrix4::zeros();
    for (k, &(ex, ey)) in training_fields().iter().enumerate() {
        t.set_column(k, &stokes_vector(ex, ey));
    }
    t
}

/// Mean of every rail over the centred averaging window of each slot.
pub fn measure_training(
    rails: &StokesRails,
    layout: &FrameLayout,
    sps: usize,
) -> Result<Matrix4<f64>> {
    let w = layout.averaging_window;
    let mut r = Matrix4::zeros();
    for slot in 0..N_TRAINING_SLOTS {
        let start = layout.slot_start(slot, sps) + (layout.training_slot_samples - w) / 2;
        if start + w > rails.len() {
            return Err(Error::invalid_input(
                "capture shorter than the training preamble",
            ));
        }
        for (i, rail) in rails.rails().iter().enumerate() {
            r[(i, slot)] = rail.samples()[start..start + w].iter().sum::<f64>() / w as f64;
        }
    }
    Ok(r)
}

fn condition_number(m: &Matrix4<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `M R = T` from the four synchronized training slots.
pub fn estimate_derotation(
    rails: &StokesRails,
    layout: &FrameLayout,
    sps: usize,
) -> Result<DerotationMatrix> {
    let r = measure_training(rails, layout, sps)?;
    let cond = condition_number(&r);
    if !cond.is_finite() || cond > MAX_TRAINING_COND {
        return Err(Error::DegenerateTraining { cond });
    }
    let r_inv = r.try_inverse().ok_or(Error::DegenerateTraining { cond })?;
    Ok(DerotationMatrix {
        m: training_targets() * r_inv,
        condition: cond,
    })
}

pub fn apply_derotation(rails: &StokesRails, m: &DerotationMatrix) -> StokesRails {
    let fs = rails.sample_rate();
    let n = rails.len();
    let src = rails.rails().map(|r| r.samples());
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for k in 0..n {
        let v = [src[0][k], src[1][k], src[2][k], src[3][k]];
        for (i, row) in out.iter_mut().enumerate() {
            row[k] =
                m.m[(i, 0)] * v[0] + m.m[(i, 1)] * v[1] + m.m[(i, 2)] * v[2] + m.m[(i, 3)] * v[3];
        }
    }
    let [p_x, p_y, s2, s3] = out.map(|r| RealSignal::from_parts(r, fs));
    StokesRails { p_x, p_y, s2, s3 }
}

/// Nominal total-power profile `|Ex|^2 + |Ey|^2` from the middle of the dark
/// lead to the middle of the last training slot, zero-mean over that span and
/// zero elsewhere. Both carrier on/off edges stay outside the span so the
/// dispersed carrier's group delay does not bias the timing.
fn sync_template(layout: &FrameLayout, sps: usize, len: usize) -> Vec<f64> {
    let pre = (layout.data_start(sps) - layout.training_slot_samples / 2).min(len);
    let from = (layout.lead_samples(sps) / 2).min(pre);
    let mut t = vec![0.0; len];
    for (slot, &(ex, ey)) in training_fields().iter().enumerate() {
        let level = ex.norm_sqr() + ey.norm_sqr();
        let start = layout.slot_start(slot, sps).min(pre);
        let end = (start + layout.training_slot_samples).min(pre);
        t[start..end].fill(level);
    }
    let mean = t[from..pre].iter().sum::<f64>() / (pre - from) as f64;
    t[from..pre].iter_mut().for_each(|v| *v -= mean);
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncResult {
    pub offset: usize,
    pub psr_db: f64,
}

/// Circular cross-correlation of `p_x + p_y` with the nominal preamble power
/// profile. The peak-to-sidelobe ratio excludes lags within one preamble
/// length of the peak.
/// Returns the lag `d` such that the frame starts at capture sample `d`.
pub fn frame_sync(rails: &StokesRails, layout: &FrameLayout, sps: usize) -> Result<SyncResult> {
    let n = rails.len();
    if layout.data_start(sps) > n {
        return Err(Error::invalid_input(
            "capture shorter than the training preamble",
        ));
    }
    let mut a: Vec<C64> = rails
        .p_x
        .samples()
        .iter()
        .zip(rails.p_y.samples())
        .map(|(x, y)| C64::new(x + y, 0.0))
        .collect();
    let template = sync_template(layout, sps, n);
    let template_energy: f64 = template.iter().map(|v| v * v).sum();
    let mut b: Vec<C64> = template.into_iter().map(|v| C64::new(v, 0.0)).collect();
    fft(&mut a);
    fft(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    ifft(&mut a);
    let corr: Vec<f64> = a.iter().map(|c| c.re).collect();
    let mut best = 0;
    for (d, &v) in corr.iter().enumerate() {
        if v > corr[best] {
            best = d;
        }
    }
    let peak = corr[best];
    // Main lobe: the preamble sliding over itself.
    let excl = layout.data_start(sps);
    let side = corr
        .iter()
        .enumerate()
        .filter(|(d, _)| {
            let dist = (*d as isize - best as isize).unsigned_abs();
            dist.min(n - dist) > excl
        })
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    // Rounding-level peaks mean nothing matched the template.
    let scale = (template_energy
        * rails
            .p_x
            .samples()
            .iter()
            .zip(rails.p_y.samples())
            .map(|(x, y)| (x + y).powi(2))
            .sum::<f64>())
    .sqrt();
    let psr_db = if !(peak > 1e-9 * scale) {
        f64::NEG_INFINITY
    } else if side > 0.0 {
        10.0 * (peak / side).log10()
    } else {
        f64::INFINITY
    };
    if psr_db < MIN_SYNC_PSR_DB {
        return Err(Error::SyncFailure { psr_db });
    }
    Ok(SyncResult {
        offset: best,
        psr_db,
    })
}
