//! QAM formats and their fixed bit labelings.
//!
//! Labels are read most-significant bit first. For the square formats (QPSK,
//! 16QAM, 64QAM) the first half of a label drives the in-phase level and the
//! second half the quadrature level; within each half the first bit is the
//! sign (1 = negative) and the remaining bits are the Gray code of the
//! magnitude index, so label `0...0` is the inner point `(1 + 1i)` on the
//! unnormalized grid.
//!
//! 8QAM uses the 4+4 cross: the inner square `{±1 ± 1i}` plus axis points at
//! radius `1 + sqrt(3)`, labelled with a 3-bit Gray sequence in order of angle
//! starting from the positive real axis.
//!
//! 32QAM uses the 6x6-minus-corners cross, derived from an 8x4 Gray labelled
//! rectangle (3 in-phase bits, 2 quadrature bits) whose `|I| = 7` columns fold
//! onto the `|Q| = 5` rows: `(±7, ±1) -> (±3, ±5)`, `(±7, ±3) -> (±1, ±5)`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModFormat {
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8QAM")]
    Qam8,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "32QAM")]
    Qam32,
    #[serde(rename = "64QAM")]
    Qam64,
}

pub const ALL_FORMATS: [ModFormat; 5] = [
    ModFormat::Qpsk,
    ModFormat::Qam8,
    ModFormat::Qam16,
    ModFormat::Qam32,
    ModFormat::Qam64,
];

impl ModFormat {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModFormat::Qpsk => 2,
            ModFormat::Qam8 => 3,
            ModFormat::Qam16 => 4,
            ModFormat::Qam32 => 5,
            ModFormat::Qam64 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModFormat::Qpsk => "QPSK",
            ModFormat::Qam8 => "8QAM",
            ModFormat::Qam16 => "16QAM",
            ModFormat::Qam32 => "32QAM",
            ModFormat::Qam64 => "64QAM",
        }
    }

    /// Unit-average-power points indexed by label.
    pub fn constellation(self) -> &'static [C64] {
        static TABLES: [OnceLock<Vec<C64>>; 5] = [
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
        ];
        let idx = ALL_FORMATS.iter().position(|&f| f == self).unwrap();
        TABLES[idx].get_or_init(|| normalize(raw_points(self)))
    }

    /// Index of the nearest point; ties (within a relative 1e-12) go to the
    /// lower index.
    pub fn nearest(self, z: C64) -> usize {
        let pts = self.constellation();
        let mut best = 0;
        let mut best_d = (z - pts[0]).norm_sqr();
        for (k, p) in pts.iter().enumerate().skip(1) {
            let d = (z - p).norm_sqr();
            if d < best_d * (1.0 - 1e-12) - 1e-300 {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Smallest distance between two distinct points.
    pub fn min_distance(self) -> f64 {
        let pts = self.constellation();
        let mut d = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.min((pts[i] - pts[j]).norm());
            }
        }
        d
    }
}

impl fmt::Display for ModFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_FORMATS
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid_input(format!("unknown modulation format `{s}`")))
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Odd-integer level for an `m`-bit axis label (sign bit first).
fn axis_level(label: usize, m: usize) -> f64 {
    let sign = if (label >> (m - 1)) & 1 == 1 {
        -1.0
    } else {
        1.0
    };
    let mag = gray_decode(label & ((1 << (m - 1)) - 1));
    sign * (2 * mag + 1) as f64
}

fn square_points(bits: usize) -> Vec<C64> {
    let m = bits / 2;
    (0..1usize << bits)
        .map(|label| {
            C64::new(
                axis_level(label >> m, m),
                axis_level(label & ((1 << m) - 1), m),
            )
        })
        .collect()
}

fn raw_points(fmt: ModFormat) -> Vec<C64> {
    match fmt {
        ModFormat::Qpsk | ModFormat::Qam16 | ModFormat::Qam64 => {
            square_points(fmt.bits_per_symbol())
        }
        ModFormat::Qam8 => {
            let r = 1.0 + 3f64.sqrt();
            let by_angle = [
                C64::new(r, 0.0),
                C64::new(1.0, 1.0),
                C64::new(0.0, r),
                C64::new(-1.0, 1.0),
                C64::new(-r, 0.0),
                C64::new(-1.0, -1.0),
                C64::new(0.0, -r),
                C64::new(1.0, -1.0),
            ];
            let mut pts = vec![C64::new(0.0, 0.0); 8];
            for (pos, p) in by_angle.iter().enumerate() {
                pts[pos ^ (pos >> 1)] = *p;
            }
            pts
        }
        ModFormat::Qam32 => (0..32usize)
            .map(|label| {
                let i = axis_level(label >> 2, 3);
                let q = axis_level(label & 3, 2);
                if i.abs() == 7.0 {
                    let new_i = if q.abs() == 1.0 { 3.0 } else { 1.0 };
                    C64::new(i.signum() * new_i, q.signum() * 5.0)
                } else {
                    C64::new(i, q)
                }
            })
            .collect(),
    }
}

fn normalize(pts: Vec<C64>) -> Vec<C64> {
    let p = pts.iter().map(|z| z.norm_sqr()).sum::<f64>() / pts.len() as f64;
    let k = 1.0 / p.sqrt();
    pts.into_iter().map(|z| z * k).collect()
}

/// Maps a 0/1 bit sequence onto constellation points, MSB-first per symbol.
pub fn map_bits(bits: &[u8], fmt: ModFormat) -> Result<Vec<C64>> {
    let k = fmt.bits_per_symbol();
    if !bits.len().is_multiple_of(k) {
        return Err(Error::invalid_input(format!(
            "{} bits is not a multiple of {k} bits per {fmt} symbol",
            bits.len()
        )));
    }
    let pts = fmt.constellation();
    Ok(bits
        .chunks_exact(k)
        .map(|c| {
            pts[c
                .iter()
                .fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)]
        })
        .collect())
}

/// Appends the `bits_per_symbol` label bits of `index` to `out`.
pub fn push_label_bits(index: usize, fmt: ModFormat, out: &mut Vec<u8>) {
    let k = fmt.bits_per_symbol();
    for b in (0..k).rev() {
        out.push(((index >> b) & 1) as u8);
    }
}
