//! Parallel, resumable parameter sweeps with one CSV row per trial.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::path::Path;
use std::sync::mpsc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{LinkConfig, SweepSpec, MAX_SEED};
use crate::error::{Error, Result};
use crate::pipeline::{run_link, DEFAULT_SEED};
use crate::seed::derive_seed;

/// Result columns after the point parameters.
pub const RESULT_COLUMNS: [&str; 7] = [
    "ber",
    "snr_db",
    "errors",
    "bits",
    "min_phase_violation_frac",
    "derot_cond",
    "converged",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: usize,
    pub config_hash: String,
    pub params: Vec<String>,
    pub trial: usize,
    pub ber: f64,
    pub snr_db: f64,
    pub errors: u64,
    pub bits: u64,
    pub min_phase_violation_frac: f64,
    pub derot_cond: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSummary {
    pub point: usize,
    pub params: Vec<String>,
    pub trials: usize,
    pub errors: u64,
    pub bits: u64,
    /// Pooled over trials.
    pub ber: f64,
    pub snr_db_mean: f64,
    pub snr_db_median: f64,
    pub ber_median: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub header: Vec<String>,
    /// Sorted by point then trial.
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses all logical cores.
    pub jobs: Option<usize>,
    /// Log each finished trial to stderr.
    pub verbose: bool,
}

/// Seed of trial `trial` at point `point`, kept within the TOML integer range.
pub fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    derive_seed(base, point as u64, trial as u64) & MAX_SEED
}

/// Short SHA-256 fingerprint of a point's effective configuration.
pub fn config_hash(cfg: &LinkConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml_string().as_bytes());
    hex::encode(&digest[..8])
}

pub fn header(spec: &SweepSpec) -> Vec<String> {
    let mut h = vec!["config_hash".to_string()];
    h.extend(spec.axes.iter().map(|a| a.param.clone()));
    h.push("trial".into());
    h.extend(RESULT_COLUMNS.iter().map(|c| c.to_string()));
    h
}

fn param_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![self.config_hash.clone()];
        r.extend(self.params.iter().cloned());
        r.push(self.trial.to_string());
        r.push(self.ber.to_string());
        r.push(self.snr_db.to_string());
        r.push(self.errors.to_string());
        r.push(self.bits.to_string());
        r.push(self.min_phase_violation_frac.to_string());
        r.push(self.derot_cond.to_string());
        r.push(self.converged.to_string());
        r
    }

    fn parse(
        rec: &csv::StringRecord,
        n_params: usize,
        point_of: &HashMap<String, usize>,
    ) -> Result<Self> {
        let bad = |what: &str| Error::invalid_input(format!("malformed sweep row: {what}"));
        let field = |k: usize| rec.get(k).ok_or_else(|| bad("too few columns"));
        let num = |k: usize| -> Result<f64> { field(k)?.parse::<f64>().map_err(|_| bad("number")) };
        let int =
            |k: usize| -> Result<u64> { field(k)?.parse::<u64>().map_err(|_| bad("integer")) };
        let hash = field(0)?.to_string();
        let point = *point_of
            .get(&hash)
            .ok_or_else(|| bad("config hash does not belong to this sweep"))?;
        let t = 1 + n_params;
        Ok(SweepRow {
            point,
            config_hash: hash,
            params: (1..t)
                .map(|k| field(k).map(str::to_string))
                .collect::<Result<_>>()?,
            trial: int(t)? as usize,
            ber: num(t + 1)?,
            snr_db: num(t + 2)?,
            errors: int(t + 3)?,
            bits: int(t + 4)?,
            min_phase_violation_frac: num(t + 5)?,
            derot_cond: num(t + 6)?,
            converged: field(t + 7)?.parse::<bool>().map_err(|_| bad("bool"))?,
        })
    }
}

struct Point {
    cfg: LinkConfig,
    hash: String,
    params: Vec<String>,
}

fn run_trial(p: &Point, point: usize, trial: usize, base_seed: u64) -> Result<SweepRow> {
    let mut cfg = p.cfg.clone();
    cfg.link.seed = Some(trial_seed(base_seed, point, trial));
    let run = run_link(&cfg)
        .map_err(|e| Error::invalid_input(format!("sweep point {point} trial {trial}: {e}")))?;
    Ok(SweepRow {
        point,
        config_hash: p.hash.clone(),
        params: p.params.clone(),
        trial,
        ber: run.result.ber,
        snr_db: run.result.snr_db,
        errors: run.result.errors_counted,
        bits: run.result.bits_counted,
        min_phase_violation_frac: run.diagnostics.min_phase_violation_frac,
        derot_cond: run.diagnostics.derot_cond,
        converged: run.diagnostics.converged,
    })
}

fn read_existing(
    path: &Path,
    header: &[String],
    n_params: usize,
    point_of: &HashMap<String, usize>,
) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let found: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::invalid_input(format!(
            "{} has a different header; remove it or choose another output",
            path.display()
        )));
    }
    rdr.records()
        .map(|r| SweepRow::parse(&r.map_err(csv_err)?, n_params, point_of))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid_input(format!("CSV: {other:?}")),
    }
}

/// Runs every point of `spec`. With an output path, rows are appended as
/// they finish, rows already present are reused, and the file is rewritten
/// in (point, trial) order at the end.
pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<SweepTable> {
    spec.validate()?;
    let header = header(spec);
    let base_seed = spec.base.link.seed.unwrap_or(DEFAULT_SEED);
    let points: Vec<Point> = (0..spec.n_points())
        .map(|i| {
            let cfg = spec.point_config(i)?;
            Ok(Point {
                hash: config_hash(&cfg),
                params: spec
                    .point_values(i)
                    .iter()
                    .map(|(_, v)| param_text(v))
                    .collect(),
                cfg,
            })
        })
        .collect::<Result<_>>()?;
    let point_of: HashMap<String, usize> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.hash.clone(), i))
        .collect();

    let mut done: HashMap<(usize, usize), SweepRow> = HashMap::new();
    let output = spec.output.as_deref();
    if let Some(path) = output {
        if path.exists() {
            for row in read_existing(path, &header, spec.axes.len(), &point_of)? {
                done.insert((row.point, row.trial), row);
            }
        }
    }

    let (tx, rx) = mpsc::channel::<SweepRow>();
    let writer = match output {
        Some(path) => Some(spawn_writer(path, &header, rx)?),
        None => {
            drop(rx);
            None
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid_config(format!("thread pool: {e}")))?;
    let cap = spec.trial_cap();
    let run = |point: usize, trial: usize, tx: &mpsc::Sender<SweepRow>| -> Result<SweepRow> {
        if let Some(row) = done.get(&(point, trial)) {
            return Ok(row.clone());
        }
        let row = run_trial(&points[point], point, trial, base_seed)?;
        if opts.verbose {
            eprintln!(
                "point {point} trial {trial}: ber {:.3e} snr {:.2} dB",
                row.ber, row.snr_db
            );
        }
        // A closed channel only means there is no output file.
        let _ = tx.send(row.clone());
        Ok(row)
    };
    let rows: Result<Vec<SweepRow>> = pool.install(|| match spec.min_errors {
        None => (0..points.len() * spec.trials)
            .into_par_iter()
            .map_with(tx.clone(), |tx, k| {
                run(k / spec.trials, k % spec.trials, tx)
            })
            .collect(),
        Some(min_errors) => (0..points.len())
            .into_par_iter()
            .map_with(tx.clone(), |tx, p| {
                let mut rows = Vec::new();
                let mut errors = 0;
                for trial in 0..cap {
                    if trial >= spec.trials && errors >= min_errors {
                        break;
                    }
                    let row = run(p, trial, tx)?;
                    errors += row.errors;
                    rows.push(row);
                }
                Ok(rows)
            })
            .collect::<Result<Vec<Vec<SweepRow>>>>()
            .map(|v| v.into_iter().flatten().collect()),
    });
    drop(tx);
    if let Some(w) = writer {
        w.join().expect("sweep writer thread")?;
    }
    let mut rows = rows?;
    rows.sort_by_key(|r| (r.point, r.trial));
    let table = SweepTable { header, rows };
    if let Some(path) = output {
        write_table(&table, path)?;
    }
    Ok(table)
}

fn spawn_writer(
    path: &Path,
    header: &[String],
    rx: mpsc::Receiver<SweepRow>,
) -> Result<std::thread::JoinHandle<Result<()>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if fresh {
        w.write_record(header).map_err(csv_err)?;
        w.flush()?;
    }
    Ok(std::thread::spawn(move || {
        for row in rx {
            w.write_record(row.record()).map_err(csv_err)?;
            w.flush()?;
        }
        Ok(())
    }))
}

/// Writes the table atomically through a sibling temporary file.
pub fn write_table(table: &SweepTable, path: &Path) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_writer(File::create(&tmp)?);
        w.write_record(&table.header).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row.record()).map_err(csv_err)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl SweepTable {
    /// Per-point aggregates in point order.
    pub fn summarize(&self) -> Vec<PointSummary> {
        let mut out: Vec<PointSummary> = Vec::new();
        let mut i = 0;
        while i < self.rows.len() {
            let point = self.rows[i].point;
            let j = i + self.rows[i..]
                .iter()
                .take_while(|r| r.point == point)
                .count();
            let group = &self.rows[i..j];
            let errors: u64 = group.iter().map(|r| r.errors).sum();
            let bits: u64 = group.iter().map(|r| r.bits).sum();
            let mut snr: Vec<f64> = group.iter().map(|r| r.snr_db).collect();
            let mut ber: Vec<f64> = group.iter().map(|r| r.ber).collect();
            out.push(PointSummary {
                point,
                params: group[0].params.clone(),
                trials: group.len(),
                errors,
                bits,
                ber: errors as f64 / bits as f64,
                snr_db_mean: snr.iter().sum::<f64>() / snr.len() as f64,
                snr_db_median: median(&mut snr),
                ber_median: median(&mut ber),
            });
            i = j;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Axis;

    fn quick_base() -> LinkConfig {
        let mut cfg = LinkConfig::default();
        cfg.frame.payload_symbols = 4096;
        cfg.link.seed = Some(9);
        cfg
    }

    #[test]
    fn seeds_fit_toml_integers() {
        for p in 0..50 {
            assert!(trial_seed(u64::MAX, p, 3) <= MAX_SEED);
        }
        assert_ne!(trial_seed(1, 0, 1), trial_seed(1, 1, 0));
    }

    #[test]
    fn header_layout() {
        let mut spec = SweepSpec::single(quick_base());
        spec.axes.push(Axis {
            param: "cspr_db".into(),
            values: vec![toml::Value::Float(10.0)],
        });
        assert_eq!(
            header(&spec),
            [
                "config_hash",
                "cspr_db",
                "trial",
                "ber",
                "snr_db",
                "errors",
                "bits",
                "min_phase_violation_frac",
                "derot_cond",
                "converged"
            ]
        );
    }

    #[test]
    fn single_point_matches_run_link() {
        let spec = SweepSpec::single(quick_base());
        let table = run_sweep(&spec, &SweepOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 1);
        let mut cfg = quick_base();
        cfg.link.seed = Some(trial_seed(9, 0, 0));
        let run = run_link(&cfg).unwrap();
        assert_eq!(table.rows[0].snr_db, run.result.snr_db);
        assert_eq!(table.rows[0].errors, run.result.errors_counted);
    }

    #[test]
    fn min_errors_stops_at_cap() {
        let mut spec = SweepSpec::single(quick_base());
        spec.base.channel.osnr_db = f64::INFINITY;
        spec.min_errors = Some(10);
        spec.max_trials = Some(3);
        let table = run_sweep(&spec, &SweepOptions::default()).unwrap();
        // Error-free trials never reach the target, so the cap applies.
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.summarize()[0].trials, 3);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
