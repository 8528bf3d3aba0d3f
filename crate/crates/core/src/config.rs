//! Experiment configuration: the TOML schema, defaults, validation and
//! `key=value` overrides.
//!
//! A config file has flat sections; every field is optional and falls back to
//! the default table below. Unknown sections or keys are rejected.
//!
//! ```toml
//! [link]
//! baud_hz = 27e9
//! format = "16QAM"
//! rolloff = 0.1
//! cspr_db = 11.5
//! guard_band_hz = 4e9
//! samples_per_symbol = 6
//! seed = 1
//!
//! [channel]
//! rotation = { random = 7 }   # or "identity", or { matrix = [[[re, im], ...], ...] }
//! osnr_db = 35.0              # inf = noiseless
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{FiberParams, ImpairmentSet, JonesRotation};
use crate::error::{Error, Result};
use crate::modulation::ModFormat;
use crate::signal::C64;
use crate::txdsp::FrameLayout;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    pub baud_hz: f64,
    pub format: ModFormat,
    pub rolloff: f64,
    pub cspr_db: f64,
    pub guard_band_hz: f64,
    pub samples_per_symbol: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            baud_hz: 27e9,
            format: ModFormat::Qam16,
            rolloff: 0.1,
            cspr_db: 11.5,
            guard_band_hz: 4e9,
            samples_per_symbol: 6,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KkLowpass {
    /// RRC matched filter.
    Rrc,
    /// Ideal low-pass at the signal edge `Rs (1 + beta) / 2`.
    Brickwall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KkParams {
    pub internal_oversampling: usize,
    /// Log clamp as a fraction of the mean detected power.
    pub power_floor_rel: f64,
    pub lowpass: KkLowpass,
}

impl Default for KkParams {
    fn default() -> Self {
        Self {
            internal_oversampling: 1,
            power_floor_rel: 1e-12,
            lowpass: KkLowpass::Rrc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSpec {
    Identity,
    /// Haar-random unitary drawn from this seed.
    Random(u64),
    /// Row-major Jones matrix of `[re, im]` pairs.
    Matrix([[[f64; 2]; 2]; 2]),
}

impl RotationSpec {
    pub fn resolve(&self) -> Result<JonesRotation> {
        use rand::SeedableRng;
        match self {
            RotationSpec::Identity => Ok(JonesRotation::identity()),
            RotationSpec::Random(seed) => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                Ok(JonesRotation::random(&mut rng))
            }
            RotationSpec::Matrix(m) => {
                let c = |v: [f64; 2]| C64::new(v[0], v[1]);
                JonesRotation::new([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub rotation: RotationSpec,
    pub osnr_db: f64,
    pub ref_bw_hz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            rotation: RotationSpec::Identity,
            osnr_db: 35.0,
            ref_bw_hz: 12.5e9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerotationMode {
    /// Estimate the 4x4 matrix from the training slots.
    Training,
    /// Use the exact Stokes-space inverse of the configured rotation.
    Oracle,
    /// Feed the detected power rails straight to KK (SOP-aligned receiver).
    Bypass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverParams {
    pub derotation: DerotationMode,
    /// Circular delay applied to the captured rails before synchronization.
    pub capture_offset_samples: usize,
}

impl Default for ReceiverParams {
    fn default() -> Self {
        Self {
            derotation: DerotationMode::Training,
            capture_offset_samples: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerKind {
    RealMimo,
    ComplexButterfly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdCompArm {
    LmsOnly,
    Pre,
    Post,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqualizerParams {
    pub kind: EqualizerKind,
    pub n_taps: usize,
    pub mu: f64,
    /// Step-size multiplier once the filter switches to decision-directed mode.
    pub dd_mu_scale: f64,
    /// Passes over the pilot block before decision-directed adaptation.
    pub pilot_passes: usize,
    pub input_sps: usize,
    pub cd_comp: CdCompArm,
}

impl Default for EqualizerParams {
    fn default() -> Self {
        Self {
            kind: EqualizerKind::RealMimo,
            n_taps: 61,
            mu: 1e-3,
            dd_mu_scale: 0.3,
            pilot_passes: 8,
            input_sps: 2,
            cd_comp: CdCompArm::LmsOnly,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub link: LinkParams,
    pub frame: FrameLayout,
    pub kk: KkParams,
    pub fiber: FiberParams,
    pub channel: ChannelParams,
    pub tx_impairments: ImpairmentSet,
    pub rx_impairments: ImpairmentSet,
    pub receiver: ReceiverParams,
    pub equalizer: EqualizerParams,
}

/// Largest seed that survives a TOML round trip (TOML integers are i64).
pub const MAX_SEED: u64 = i64::MAX as u64;

impl LinkConfig {
    pub fn sample_rate(&self) -> f64 {
        self.link.baud_hz * self.link.samples_per_symbol as f64
    }

    pub fn carrier_freq_hz(&self) -> f64 {
        self.link.baud_hz * (1.0 + self.link.rolloff) / 2.0 + self.link.guard_band_hz
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.link;
        if !(l.baud_hz.is_finite() && l.baud_hz > 0.0) {
            return Err(Error::invalid_config(format!(
                "link.baud_hz must be > 0, got {}",
                l.baud_hz
            )));
        }
        if !(0.0..=1.0).contains(&l.rolloff) {
            return Err(Error::invalid_config(format!(
                "link.rolloff must lie in [0, 1], got {}",
                l.rolloff
            )));
        }
        if !(l.cspr_db.is_finite() && l.cspr_db >= 0.0) {
            return Err(Error::invalid_config(format!(
                "link.cspr_db = {} violates the minimum-phase sanity bound (>= 0 dB)",
                l.cspr_db
            )));
        }
        if !(l.guard_band_hz.is_finite() && l.guard_band_hz >= 0.0) {
            return Err(Error::invalid_config("link.guard_band_hz must be >= 0"));
        }
        if l.samples_per_symbol < 2 {
            return Err(Error::invalid_config(format!(
                "link.samples_per_symbol must be >= 2, got {}",
                l.samples_per_symbol
            )));
        }
        if let Some(seed) = l.seed {
            if seed > MAX_SEED {
                return Err(Error::invalid_config(format!(
                    "link.seed must be <= {MAX_SEED}"
                )));
            }
        }
        let fc = self.carrier_freq_hz();
        let nyquist = self.sample_rate() / 2.0;
        if fc >= nyquist {
            return Err(Error::invalid_config(format!(
                "link.guard_band_hz = {:e} puts the carrier at {:e} Hz, at or above the Nyquist \
                 frequency {:e} Hz of link.samples_per_symbol = {} x link.baud_hz = {:e}",
                l.guard_band_hz, fc, nyquist, l.samples_per_symbol, l.baud_hz
            )));
        }
        self.frame.validate()?;
        if !(1..=8).contains(&self.kk.internal_oversampling) {
            return Err(Error::invalid_config(
                "kk.internal_oversampling must lie in [1, 8]",
            ));
        }
        if !(self.kk.power_floor_rel > 0.0 && self.kk.power_floor_rel < 1.0) {
            return Err(Error::invalid_config(
                "kk.power_floor_rel must lie in (0, 1)",
            ));
        }
        self.fiber.validate()?;
        let ch = &self.channel;
        if ch.osnr_db.is_nan() || ch.osnr_db == f64::NEG_INFINITY {
            return Err(Error::invalid_config(
                "channel.osnr_db must be finite or inf",
            ));
        }
        if !(ch.ref_bw_hz > 0.0 && ch.ref_bw_hz.is_finite()) {
            return Err(Error::invalid_config("channel.ref_bw_hz must be > 0"));
        }
        ch.rotation
            .resolve()
            .map_err(|e| Error::invalid_config(format!("channel.rotation: {e}")))?;
        self.tx_impairments.validate("tx_impairments")?;
        self.rx_impairments.validate("rx_impairments")?;
        let eq = &self.equalizer;
        if eq.n_taps.is_multiple_of(2) {
            return Err(Error::invalid_config(format!(
                "equalizer.n_taps must be odd, got {}",
                eq.n_taps
            )));
        }
        if !(eq.mu.is_finite() && eq.mu >= 0.0)
            || !(eq.dd_mu_scale.is_finite() && eq.dd_mu_scale >= 0.0)
        {
            return Err(Error::invalid_config(
                "equalizer.mu and equalizer.dd_mu_scale must be >= 0",
            ));
        }
        if eq.input_sps == 0 || eq.input_sps > l.samples_per_symbol {
            return Err(Error::invalid_config(format!(
                "equalizer.input_sps must lie in 1..=link.samples_per_symbol ({})",
                l.samples_per_symbol
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
        Self::from_table(table, origin)
    }

    pub fn from_table(mut table: toml::Table, origin: &str) -> Result<Self> {
        coerce_numbers(&mut table, &schema());
        let cfg: LinkConfig = table.try_into().map_err(|e| parse_error(origin, e))?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a TOML table")
    }

    /// The effective config as a TOML document.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies `key=value` overrides then validates.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = self.to_table();
        for o in overrides {
            let (key, value) = split_override(o.as_ref())?;
            set_value(&mut table, key, parse_value(value))?;
        }
        let cfg = Self::from_table(table, "--set")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_error(origin: &str, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    }
}

/// Every settable `section.key`, with a representative value.
fn schema() -> toml::Table {
    let mut cfg = LinkConfig::default();
    cfg.link.seed = Some(0);
    cfg.to_table()
}

/// Integer literals written where the schema expects a float become floats.
fn coerce_numbers(table: &mut toml::Table, schema: &toml::Table) {
    for (section, body) in table.iter_mut() {
        let (Some(toml::Value::Table(body)), Some(toml::Value::Table(s))) =
            (Some(body), schema.get(section))
        else {
            continue;
        };
        for (key, v) in body.iter_mut() {
            if let (toml::Value::Integer(i), Some(toml::Value::Float(_))) = (&*v, s.get(key)) {
                *v = toml::Value::Float(*i as f64);
            }
        }
    }
}

fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| {
            Error::invalid_config(format!("override `{s}` is not of the form key=value"))
        })
}

/// A TOML literal, or a bare string when the text is not valid TOML.
pub fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Resolves `key` (dotted `section.key`, or a bare key unique across sections)
/// to its full path.
pub fn resolve_key(key: &str) -> Result<(String, String)> {
    let schema = schema();
    if let Some((section, leaf)) = key.split_once('.') {
        let known = schema
            .get(section)
            .and_then(|s| s.as_table())
            .is_some_and(|s| s.contains_key(leaf));
        if known {
            return Ok((section.to_string(), leaf.to_string()));
        }
        return Err(Error::invalid_config(format!("unknown config key `{key}`")));
    }
    let hits: Vec<&String> = schema
        .iter()
        .filter(|(_, s)| s.as_table().is_some_and(|t| t.contains_key(key)))
        .map(|(name, _)| name)
        .collect();
    match hits.as_slice() {
        [one] => Ok(((*one).clone(), key.to_string())),
        [] => Err(Error::invalid_config(format!("unknown config key `{key}`"))),
        many => Err(Error::invalid_config(format!(
            "ambiguous config key `{key}`; qualify it with one of: {}",
            many.iter()
                .map(|s| format!("{s}.{key}"))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

pub(crate) fn set_value(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let (section, leaf) = resolve_key(key)?;
    let body = table
        .entry(section)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match body {
        toml::Value::Table(t) => {
            t.insert(leaf, value);
            Ok(())
        }
        _ => Err(Error::invalid_config(format!(
            "config section of `{key}` is not a table"
        ))),
    }
}

/// One sweep axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub values: Vec<toml::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    #[serde(default)]
    axes: Vec<Axis>,
    #[serde(default = "one")]
    trials: usize,
    #[serde(default)]
    min_errors: Option<u64>,
    #[serde(default)]
    max_trials: Option<usize>,
    #[serde(default)]
    output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: LinkConfig,
    pub axes: Vec<Axis>,
    /// Trials per point; with `min_errors` set this is the minimum.
    pub trials: usize,
    /// Keep adding trials until this many bit errors are counted.
    pub min_errors: Option<u64>,
    pub max_trials: Option<usize>,
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    pub fn single(base: LinkConfig) -> Self {
        Self {
            base,
            axes: Vec::new(),
            trials: 1,
            min_errors: None,
            max_trials: None,
            output: None,
        }
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis values of point `index`; the last axis varies fastest.
    pub fn point_values(&self, mut index: usize) -> Vec<(&str, &toml::Value)> {
        let mut out = Vec::with_capacity(self.axes.len());
        let mut strides = Vec::with_capacity(self.axes.len());
        for a in self.axes.iter().rev() {
            strides.push(index % a.values.len());
            index /= a.values.len();
        }
        strides.reverse();
        for (a, &k) in self.axes.iter().zip(&strides) {
            out.push((a.param.as_str(), &a.values[k]));
        }
        out
    }

    pub fn point_config(&self, index: usize) -> Result<LinkConfig> {
        let mut table = self.base.to_table();
        for (param, value) in self.point_values(index) {
            set_value(&mut table, param, value.clone())?;
        }
        let cfg = LinkConfig::from_table(table, "sweep axis")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid_config("sweep.trials must be >= 1"));
        }
        if let Some(max) = self.max_trials {
            if max < self.trials {
                return Err(Error::invalid_config(
                    "sweep.max_trials must be >= sweep.trials",
                ));
            }
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(Error::invalid_config(format!(
                    "sweep axis `{}` has no values",
                    a.param
                )));
            }
        }
        self.base.validate()?;
        for p in 0..self.n_points() {
            self.point_config(p)?;
        }
        Ok(())
    }

    pub fn trial_cap(&self) -> usize {
        match (self.min_errors, self.max_trials) {
            (Some(_), Some(m)) => m,
            (Some(_), None) => self.trials.max(20),
            _ => self.trials,
        }
    }

    /// The sweep as a TOML document ([sweep] plus the base sections).
    pub fn to_toml_string(&self) -> String {
        let mut table = self.base.to_table();
        let section = SweepSection {
            axes: self.axes.clone(),
            trials: self.trials,
            min_errors: self.min_errors,
            max_trials: self.max_trials,
            output: self.output.clone(),
        };
        table.insert(
            "sweep".into(),
            toml::Value::Table(toml::Table::try_from(section).expect("sweep serializes")),
        );
        toml::to_string(&table).expect("sweep serializes")
    }
}

/// A parsed config file: either a single link or a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfigDoc {
    Link(LinkConfig),
    Sweep(SweepSpec),
}

/// Reads `path`, applies overrides and validates.
pub fn parse_config<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<ConfigDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, &path.display().to_string(), overrides)
}

pub fn parse_config_str<S: AsRef<str>>(
    text: &str,
    origin: &str,
    overrides: &[S],
) -> Result<ConfigDoc> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
    let sweep = table.remove("sweep");
    for o in overrides {
        let (key, value) = split_override(o.as_ref())?;
        set_value(&mut table, key, parse_value(value))?;
    }
    let base = LinkConfig::from_table(table, origin)?;
    base.validate()?;
    match sweep {
        None => Ok(ConfigDoc::Link(base)),
        Some(v) => {
            let s: SweepSection = v
                .try_into()
                .map_err(|e| parse_error(&format!("{origin} [sweep]"), e))?;
            let mut axes = s.axes;
            for a in &mut axes {
                let (section, leaf) = resolve_key(&a.param)?;
                a.param = format!("{section}.{leaf}");
            }
            let spec = SweepSpec {
                base,
                axes,
                trials: s.trials,
                min_errors: s.min_errors,
                max_trials: s.max_trials,
                output: s.output,
            };
            spec.validate()?;
            Ok(ConfigDoc::Sweep(spec))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = LinkConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string();
        assert_eq!(LinkConfig::from_toml_str(&text, "echo").unwrap(), cfg);
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let doc = parse_config_str(
            "[link]\nbaud_hz = 27e9\nformat = \"QPSK\"\n",
            "t",
            &[] as &[&str],
        )
        .unwrap();
        let ConfigDoc::Link(cfg) = doc else { panic!() };
        assert_eq!(cfg.link.format, ModFormat::Qpsk);
        assert_eq!(cfg.link.cspr_db, 11.5);
        assert_eq!(cfg.equalizer.n_taps, 61);
    }

    #[test]
    fn override_precedence_and_bare_keys() {
        let doc = parse_config_str("[link]\ncspr_db = 11.5\n", "t", &["cspr_db=13.5"]).unwrap();
        let ConfigDoc::Link(cfg) = doc else { panic!() };
        assert_eq!(cfg.link.cspr_db, 13.5);
        let cfg = cfg
            .with_overrides(&["channel.osnr_db=inf", "format=64QAM", "osnr_db = 30"])
            .unwrap();
        assert_eq!(cfg.channel.osnr_db, 30.0);
        assert_eq!(cfg.link.format, ModFormat::Qam64);
    }

    #[test]
    fn unknown_and_ambiguous_keys_fail() {
        let cfg = LinkConfig::default();
        assert!(cfg.with_overrides(&["csrp_db=3"]).is_err());
        assert!(cfg.with_overrides(&["link.nope=3"]).is_err());
        // Present in both impairment sections.
        let err = cfg
            .with_overrides(&["enob_bits=5"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("ambiguous"), "{err}");
        assert!(cfg.with_overrides(&["rx_impairments.enob_bits=5"]).is_ok());
        assert!(parse_config_str("[link]\nbogus = 1\n", "t", &[] as &[&str]).is_err());
        assert!(parse_config_str("[linky]\n", "t", &[] as &[&str]).is_err());
    }

    #[test]
    fn carrier_above_nyquist_names_both_values() {
        let err = LinkConfig::default()
            .with_overrides(&["guard_band_hz=70e9"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("guard_band_hz = 7e10"), "{err}");
        assert!(err.contains("Nyquist"), "{err}");
    }

    #[test]
    fn rotation_spec_forms() {
        let cfg = LinkConfig::default()
            .with_overrides(&["rotation={random=5}"])
            .unwrap();
        assert_eq!(cfg.channel.rotation, RotationSpec::Random(5));
        let cfg = cfg
            .with_overrides(&["rotation={matrix=[[[0.0,0.0],[1.0,0.0]],[[1.0,0.0],[0.0,0.0]]]}"])
            .unwrap();
        assert!(matches!(cfg.channel.rotation, RotationSpec::Matrix(_)));
        assert!(LinkConfig::default()
            .with_overrides(&["rotation={matrix=[[[2.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0]]]}"])
            .is_err());
        let back = LinkConfig::from_toml_str(&cfg.to_toml_string(), "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sweep_points_enumerate_last_axis_fastest() {
        let text = r#"
[link]
seed = 3
[sweep]
trials = 2
axes = [ { param = "cspr_db", values = [8, 10] }, { param = "link.guard_band_hz", values = [1e9, 2e9, 4e9] } ]
"#;
        let ConfigDoc::Sweep(spec) = parse_config_str(text, "t", &[] as &[&str]).unwrap() else {
            panic!()
        };
        assert_eq!(spec.n_points(), 6);
        assert_eq!(spec.axes[0].param, "link.cspr_db");
        let p = spec.point_config(4).unwrap();
        assert_eq!(p.link.cspr_db, 10.0);
        assert_eq!(p.link.guard_band_hz, 2e9);
        let echo = spec.to_toml_string();
        let ConfigDoc::Sweep(again) = parse_config_str(&echo, "echo", &[] as &[&str]).unwrap()
        else {
            panic!()
        };
        assert_eq!(again, spec);
    }

    #[test]
    fn sweep_rejects_bad_axis() {
        let text = "[sweep]\naxes = [ { param = \"warp\", values = [1] } ]\n";
        assert!(parse_config_str(text, "t", &[] as &[&str]).is_err());
        let text = "[sweep]\naxes = [ { param = \"cspr_db\", values = [-3] } ]\n";
        assert!(parse_config_str(text, "t", &[] as &[&str]).is_err());
    }
}
