//! Seeded Monte Carlo link trials, distance sweeps, noise calibration and
//! measurement ingestion.
//!
//! Every trial owns a 64-bit seed derived from the sweep's master seed:
//!
//! ```text
//! trial_seed = mix(mix(mix(master_seed) ^ distance_index) ^ trial_index)
//! ```
//!
//! where `mix` is the SplitMix64 finaliser. The trial's noise stream is
//! seeded with `trial_seed`; a random payload is drawn from
//! `mix(trial_seed ^ PAYLOAD_STREAM)`. Trials run in parallel but results
//! are collected in index order and reduced by pairwise summation, so the
//! output does not depend on the thread count.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beam::{AngularProfile, PowerUnit};
use crate::codec::{decode_frame, encode_frame, rasterize_frame, success_rate, FrameLayout};
use crate::error::{Error, Result};
use crate::optics::{capture, Capture, SceneConfig};

const PAYLOAD_STREAM: u64 = 0x5041_594c_4f41_4453;

/// SplitMix64 finaliser.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(master_seed: u64, distance_index: usize, trial_index: usize) -> u64 {
    mix64(mix64(mix64(master_seed) ^ distance_index as u64) ^ trial_index as u64)
}

pub fn random_payload(seed: u64, bits: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ PAYLOAD_STREAM));
    (0..bits).map(|_| rng.gen::<bool>()).collect()
}

/// Sum by recursive halving; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadSource {
    Fixed(Vec<bool>),
    RandomPerTrial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub success: f64,
    pub link_broken: bool,
    pub roi_found: bool,
}

/// One end-to-end transmission: encode, render, capture with the noise
/// seeded by `seed`, decode, compare. Broken links and frames the receiver
/// cannot find score 0.
pub fn run_trial(
    scene: &SceneConfig,
    layout: &FrameLayout,
    payload: &[bool],
    seed: u64,
) -> Result<TrialOutcome> {
    let frame = encode_frame(payload, layout)?;
    let image = rasterize_frame(&frame);
    let scene = scene.with_noise(scene.noise.with_seed(seed));
    let captured = match capture(&image, &scene)? {
        Capture::Image(img) => img,
        Capture::LinkBroken { .. } => {
            return Ok(TrialOutcome {
                success: 0.0,
                link_broken: true,
                roi_found: false,
            })
        }
    };
    let report = decode_frame(&captured, layout, None)?;
    if !report.roi_found {
        return Ok(TrialOutcome {
            success: 0.0,
            link_broken: false,
            roi_found: false,
        });
    }
    Ok(TrialOutcome {
        success: success_rate(payload, &report.bits[..payload.len()])?,
        link_broken: false,
        roi_found: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub distances: Vec<f64>,
    pub trials_per_distance: usize,
    pub base_scene: SceneConfig,
    pub payload: PayloadSource,
    pub master_seed: u64,
    pub layout: FrameLayout,
}

impl SweepConfig {
    pub fn new(
        distances: Vec<f64>,
        trials_per_distance: usize,
        base_scene: SceneConfig,
        payload: PayloadSource,
        master_seed: u64,
        layout: FrameLayout,
    ) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::Config("distance list is empty".into()));
        }
        if distances.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("distances must be finite and > 0".into()));
        }
        if distances.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "distances must be strictly increasing".into(),
            ));
        }
        if trials_per_distance == 0 {
            return Err(Error::Config("trials_per_distance must be > 0".into()));
        }
        if let PayloadSource::Fixed(bits) = &payload {
            if bits.len() > layout.capacity() {
                return Err(Error::Capacity {
                    len: bits.len(),
                    capacity: layout.capacity(),
                });
            }
        }
        base_scene.validate()?;
        Ok(Self {
            distances,
            trials_per_distance,
            base_scene,
            payload,
            master_seed,
            layout,
        })
    }

    /// 0.10 to 0.55 m in 5 cm steps, 200 trials each, random payloads.
    pub fn with_defaults(base_scene: SceneConfig, master_seed: u64) -> Self {
        let distances = (2..=11).map(|i| i as f64 / 20.0).collect();
        Self::new(
            distances,
            200,
            base_scene,
            PayloadSource::RandomPerTrial,
            master_seed,
            FrameLayout::default(),
        )
        .expect("defaults are valid")
    }

    fn payload_for(&self, seed: u64) -> Vec<bool> {
        match &self.payload {
            PayloadSource::Fixed(bits) => bits.clone(),
            PayloadSource::RandomPerTrial => random_payload(seed, self.layout.capacity()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub distance_m: f64,
    pub mean_success: f64,
    pub std_success: f64,
    pub trials: usize,
    pub link_broken: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
}

pub const SWEEP_CSV_HEADER: &str = "distance_m,mean_success,std_success,trials,link_broken";

impl SweepResult {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.distance_m, r.mean_success, r.std_success, r.trials, r.link_broken
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn record_at(&self, distance_m: f64) -> Option<&SweepRecord> {
        self.records
            .iter()
            .find(|r| (r.distance_m - distance_m).abs() < 1e-12)
    }
}

fn aggregate(distance_m: f64, outcomes: &[TrialOutcome]) -> SweepRecord {
    let n = outcomes.len() as f64;
    let successes: Vec<f64> = outcomes.iter().map(|o| o.success).collect();
    let mean = pairwise_sum(&successes) / n;
    let sq: Vec<f64> = successes.iter().map(|s| (s - mean).powi(2)).collect();
    SweepRecord {
        distance_m,
        mean_success: mean,
        std_success: (pairwise_sum(&sq) / n).sqrt(),
        trials: outcomes.len(),
        link_broken: outcomes.iter().filter(|o| o.link_broken).count(),
    }
}

/// Runs `trials_per_distance` seeded trials at every distance.
pub fn sweep_distance(config: &SweepConfig) -> Result<SweepResult> {
    let scenes = config
        .distances
        .iter()
        .map(|&d| config.base_scene.at_distance(d))
        .collect::<Result<Vec<_>>>()?;
    let per = config.trials_per_distance;
    let outcomes = (0..scenes.len() * per)
        .into_par_iter()
        .map(|k| {
            let (di, ti) = (k / per, k % per);
            let seed = trial_seed(config.master_seed, di, ti);
            run_trial(&scenes[di], &config.layout, &config.payload_for(seed), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        records: config
            .distances
            .iter()
            .zip(outcomes.chunks(per))
            .map(|(&d, chunk)| aggregate(d, chunk))
            .collect(),
    })
}

/// Mean success at one distance for a given noise sigma, with the trial
/// seeds of distance index 0 (so every sigma sees the same noise draws).
pub fn mean_success_at(config: &SweepConfig, distance_m: f64, sigma: f64) -> Result<f64> {
    let scene = config.base_scene.at_distance(distance_m)?;
    let scene = scene.with_noise(scene.noise.with_sigma(sigma)?);
    let successes = (0..config.trials_per_distance)
        .into_par_iter()
        .map(|ti| {
            let seed = trial_seed(config.master_seed, 0, ti);
            run_trial(&scene, &config.layout, &config.payload_for(seed), seed).map(|o| o.success)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&successes) / successes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    pub achieved_success: f64,
    pub probes: usize,
}

/// Accepted distance between achieved and target mean success.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;
/// Maximum number of mean-success evaluations.
pub const CALIBRATION_MAX_PROBES: usize = 30;
const CALIBRATION_START_SIGMA: f64 = 0.05;

/// Finds a noise sigma giving `target_success` mean success at
/// `target_distance` by doubling to bracket the target, then bisecting.
///
/// `config` supplies the trial count, seeds, payload and base scene. All
/// probes share the same trial seeds.
pub fn calibrate_noise(
    target_distance: f64,
    target_success: f64,
    config: &SweepConfig,
) -> Result<Calibration> {
    if !(target_success > 0.0 && target_success < 1.0) {
        return Err(Error::Calibration(format!(
            "target success {target_success} must lie strictly inside (0, 1)"
        )));
    }
    let count = std::cell::Cell::new(0usize);
    let eval = |sigma: f64| -> Result<f64> {
        count.set(count.get() + 1);
        if count.get() > CALIBRATION_MAX_PROBES {
            return Err(Error::Calibration(format!(
                "no sigma within {CALIBRATION_TOLERANCE} of {target_success} after \
                 {CALIBRATION_MAX_PROBES} probes"
            )));
        }
        mean_success_at(config, target_distance, sigma)
    };
    let within = |s: f64| (s - target_success).abs() <= CALIBRATION_TOLERANCE;

    let ceiling = eval(0.0)?;
    if within(ceiling) {
        return Ok(Calibration {
            sigma: 0.0,
            achieved_success: ceiling,
            probes: 1,
        });
    }
    if ceiling < target_success {
        return Err(Error::Calibration(format!(
            "noiseless success {ceiling} is already below target {target_success}"
        )));
    }

    let (mut lo, mut hi) = (0.0, CALIBRATION_START_SIGMA);
    loop {
        let s = eval(hi)?;
        if within(s) {
            return Ok(Calibration {
                sigma: hi,
                achieved_success: s,
                probes: count.get(),
            });
        }
        if s < target_success {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let s = eval(mid)?;
        if within(s) {
            return Ok(Calibration {
                sigma: mid,
                achieved_success: s,
                probes: count.get(),
            });
        }
        if s > target_success {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measurements {
    Sweep(SweepResult),
    Angular(AngularProfile),
}

/// Reads a measurement CSV, picking the schema from its header:
/// `distance_m,success_rate`, the sweep export header, or
/// `angle_deg,power` (optionally preceded by `# unit=uW|norm`).
pub fn ingest_measurements(path: impl AsRef<Path>) -> Result<Measurements> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(std::io::BufReader::new(file))
}

pub fn parse_measurements(mut input: impl Read) -> Result<Measurements> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::Schema(format!("unreadable input: {e}")))?;
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::Schema("no header line".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    match columns.as_slice() {
        ["angle_deg", "power"] => Ok(Measurements::Angular(parse_angular_csv(text.as_bytes())?)),
        ["distance_m", "success_rate"] => {
            let rows = numeric_rows(&text, 2)?;
            let records = rows
                .into_iter()
                .map(|(line, v)| {
                    check_fraction(v[1], line)?;
                    Ok(SweepRecord {
                        distance_m: v[0],
                        mean_success: v[1],
                        std_success: 0.0,
                        trials: 1,
                        link_broken: 0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Measurements::Sweep(SweepResult { records }))
        }
        cols if cols.join(",") == SWEEP_CSV_HEADER => {
            let rows = numeric_rows(&text, 5)?;
            let records = rows
                .into_iter()
                .map(|(line, v)| {
                    check_fraction(v[1], line)?;
                    let count = |x: f64, what: &str| {
                        if x >= 0.0 && x.fract() == 0.0 {
                            Ok(x as usize)
                        } else {
                            Err(Error::Parse {
                                line,
                                message: format!("{what} must be a non-negative integer"),
                            })
                        }
                    };
                    let trials = count(v[3], "trials")?;
                    if trials == 0 {
                        return Err(Error::Parse {
                            line,
                            message: "trials must be > 0".into(),
                        });
                    }
                    Ok(SweepRecord {
                        distance_m: v[0],
                        mean_success: v[1],
                        std_success: v[2],
                        trials,
                        link_broken: count(v[4], "link_broken")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Measurements::Sweep(SweepResult { records }))
        }
        _ => Err(Error::Schema(format!("unknown header {header:?}"))),
    }
}

fn check_fraction(v: f64, line: u64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            message: format!("success {v} outside [0, 1]"),
        })
    }
}

/// Data rows after the header as `(line number, values)`.
fn numeric_rows(text: &str, width: usize) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("non-numeric field {field:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok(rows)
}

pub(crate) fn parse_angular_csv(mut input: impl BufRead) -> Result<AngularProfile> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::Schema(format!("unreadable input: {e}")))?;
    let mut unit = PowerUnit::Microwatt;
    for line in text.lines().map(str::trim) {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(u) = rest.trim().strip_prefix("unit=") {
                unit = u.parse()?;
            }
        } else if !line.is_empty() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["angle_deg", "power"] {
                return Err(Error::Schema(format!("unknown header {line:?}")));
            }
            break;
        }
    }
    let rows = numeric_rows(&text, 2)?;
    let mut samples = Vec::with_capacity(rows.len());
    for (line, v) in rows {
        if let Some(&(prev, _)) = samples.last() {
            if !(v[0] > prev) {
                return Err(Error::Parse {
                    line,
                    message: format!("angle {} not increasing", v[0]),
                });
            }
        }
        if !(0.0..=180.0).contains(&v[0]) || !(v[1] >= 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("sample ({}, {}) out of range", v[0], v[1]),
            });
        }
        samples.push((v[0], v[1]));
    }
    AngularProfile::new(samples, unit)
}
