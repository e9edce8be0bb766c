//! One resolved unit of work per subcommand. A job is built either from
//! command-line flags or from a manifest, so replay runs the same code path.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use occsim_core::beam::{
    angular_power_scan, fit_lambertian, normalize_profile, AngularProfile, Orientation, ScanConfig,
};
use occsim_core::codec::{bits_to_text, format_bits, parse_bits};
use occsim_core::config::ConfigMap;
use occsim_core::harness::{
    calibrate_noise, ingest_measurements, sweep_distance, Measurements, SweepResult,
};
use occsim_core::{
    capture, decode_frame, encode_frame, rasterize_frame, Capture, FrameLayout, RenderedImage,
};

use crate::manifest::{manifest_path, RunManifest, VERSION};
use crate::plot::{Plot, Series};

/// Outcomes that are not failures of the tool but get their own exit status.
#[derive(Debug)]
pub enum Halt {
    LinkBroken { projected_feature_px: f64 },
    NoFrame,
}

impl fmt::Display for Halt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Halt::LinkBroken {
                projected_feature_px,
            } => write!(
                f,
                "link broken: a frame cell projects to {projected_feature_px:.3} px (< 1 px)"
            ),
            Halt::NoFrame => f.write_str("no frame found in the image"),
        }
    }
}

impl std::error::Error for Halt {}

#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Encode {
        payload: Vec<bool>,
    },
    Transmit {
        frame: PathBuf,
        config: ConfigMap,
    },
    Decode {
        input: PathBuf,
        reference: Option<Vec<bool>>,
    },
    Sweep {
        config: ConfigMap,
    },
    Calibrate {
        config: ConfigMap,
        distance_m: f64,
        target: f64,
    },
    Fit {
        input: PathBuf,
    },
    Scan {
        config: ConfigMap,
        orientation: Orientation,
        radius_m: f64,
        order: f64,
        angles: usize,
    },
    Ingest {
        input: PathBuf,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Encode { .. } => "encode",
            Job::Transmit { .. } => "transmit",
            Job::Decode { .. } => "decode",
            Job::Sweep { .. } => "sweep",
            Job::Calibrate { .. } => "calibrate",
            Job::Fit { .. } => "fit",
            Job::Scan { .. } => "scan",
            Job::Ingest { .. } => "ingest",
        }
    }

    fn seed(&self) -> Result<Option<u64>> {
        Ok(match self {
            Job::Transmit { config, .. } => Some(config.value("seed")?),
            Job::Sweep { config } | Job::Calibrate { config, .. } => {
                Some(config.value("master_seed")?)
            }
            _ => None,
        })
    }

    fn args(&self) -> ConfigMap {
        let mut a = ConfigMap::default();
        match self {
            Job::Encode { payload } => a.set("payload", format!("bits:{}", format_bits(payload))),
            Job::Transmit { frame, .. } => a.set("frame", frame.display().to_string()),
            Job::Decode { input, reference } => {
                a.set("input", input.display().to_string());
                if let Some(r) = reference {
                    a.set("reference", format!("bits:{}", format_bits(r)));
                }
            }
            Job::Sweep { .. } => {}
            Job::Calibrate {
                distance_m, target, ..
            } => {
                a.set("distance_m", distance_m.to_string());
                a.set("target", target.to_string());
            }
            Job::Fit { input } | Job::Ingest { input } => {
                a.set("input", input.display().to_string())
            }
            Job::Scan {
                orientation,
                radius_m,
                order,
                angles,
                ..
            } => {
                a.set("orientation", orientation.to_string());
                a.set("radius_m", radius_m.to_string());
                a.set("order", order.to_string());
                a.set("angles", angles.to_string());
            }
        }
        a
    }

    fn config(&self) -> ConfigMap {
        match self {
            Job::Transmit { config, .. }
            | Job::Sweep { config }
            | Job::Calibrate { config, .. }
            | Job::Scan { config, .. } => config.clone(),
            _ => ConfigMap::default(),
        }
    }

    pub fn from_manifest(m: &RunManifest) -> Result<Self> {
        let arg = |k: &str| {
            m.args
                .get(k)
                .ok_or_else(|| anyhow!("manifest has no `arg.{k}` entry"))
        };
        let bits = |v: &str| -> Result<Vec<bool>> {
            let b = v
                .strip_prefix("bits:")
                .ok_or_else(|| anyhow!("expected `bits:` value, found {v:?}"))?;
            Ok(parse_bits(b)?)
        };
        let config = m.config.clone();
        Ok(match m.command.as_str() {
            "encode" => Job::Encode {
                payload: bits(arg("payload")?)?,
            },
            "transmit" => Job::Transmit {
                frame: arg("frame")?.into(),
                config,
            },
            "decode" => Job::Decode {
                input: arg("input")?.into(),
                reference: m.args.get("reference").map(bits).transpose()?,
            },
            "sweep" => Job::Sweep { config },
            "calibrate" => Job::Calibrate {
                config,
                distance_m: m.args.value("distance_m")?,
                target: m.args.value("target")?,
            },
            "fit" => Job::Fit {
                input: arg("input")?.into(),
            },
            "scan" => Job::Scan {
                config,
                orientation: arg("orientation")?.parse()?,
                radius_m: m.args.value("radius_m")?,
                order: m.args.value("order")?,
                angles: m.args.value("angles")?,
            },
            "ingest" => Job::Ingest {
                input: arg("input")?.into(),
            },
            other => bail!("unknown command {other:?} in manifest"),
        })
    }

    /// Runs the job, writing artifacts derived from `primary` followed by the
    /// manifest. Returns every path written.
    pub fn run(&self, primary: &Path) -> Result<Vec<PathBuf>> {
        let mut writer = Artifacts::new(primary);
        match self {
            Job::Encode { payload } => {
                let layout = FrameLayout::default();
                let frame = encode_frame(payload, &layout)?;
                writer.write(primary, &rasterize_frame(&frame).to_pgm_bytes())?;
                println!(
                    "encoded {} payload bits into a {}-bit frame",
                    payload.len(),
                    layout.capacity()
                );
            }
            Job::Transmit { frame, config } => {
                let image = RenderedImage::read_pgm(frame)?;
                let scene = config.scene()?;
                match capture(&image, &scene)? {
                    Capture::Image(img) => {
                        writer.write(primary, &img.to_pgm_bytes())?;
                        println!(
                            "captured at {} m: relative gain {:.4}, frame spans {:.1} px",
                            scene.geometry.distance_m(),
                            scene.relative_gain(),
                            scene.projected_frame_px()
                        );
                    }
                    Capture::LinkBroken {
                        projected_feature_px,
                    } => {
                        return Err(Halt::LinkBroken {
                            projected_feature_px,
                        }
                        .into())
                    }
                }
            }
            Job::Decode { input, reference } => {
                let report = decode_report(input, reference.as_deref())?;
                print!("{report}");
                writer.write(primary, report.as_bytes())?;
            }
            Job::Sweep { config } => {
                let sweep = config.sweep(FrameLayout::default())?;
                let result = sweep_distance(&sweep)?;
                print!("{}", result.to_csv_string());
                writer.write_sweep(&result, "Success rate vs link span")?;
            }
            Job::Calibrate {
                config,
                distance_m,
                target,
            } => {
                let sweep = config.sweep(FrameLayout::default())?;
                let cal = calibrate_noise(*distance_m, *target, &sweep)?;
                println!(
                    "sigma = {} gives mean success {:.4} at {} m ({} probes)",
                    cal.sigma, cal.achieved_success, distance_m, cal.probes
                );
                let noise = sweep.base_scene.noise.with_sigma(cal.sigma)?;
                let calibrated = occsim_core::harness::SweepConfig {
                    base_scene: sweep.base_scene.with_noise(noise),
                    ..sweep
                };
                let result = sweep_distance(&calibrated)?;
                print!("{}", result.to_csv_string());
                writer.write_sweep(
                    &result,
                    &format!("Success rate vs link span (sigma = {:.4})", cal.sigma),
                )?;
            }
            Job::Fit { input } => {
                let profile = read_angular(input)?;
                let fit = fit_lambertian(&profile)?;
                let normalized = normalize_profile(&profile)?;
                println!(
                    "m_hat={:.3} gain={:.4} rms={:.3e} samples={}",
                    fit.m_hat, fit.gain, fit.residual_rms, fit.samples_used
                );
                let rows: Vec<(f64, f64, f64)> = normalized
                    .samples()
                    .iter()
                    .map(|&(a, p)| {
                        let c = (a - 90.0).to_radians().cos().max(0.0);
                        (a, p, fit.gain * c.powf(fit.m_hat))
                    })
                    .collect();
                let mut csv = String::from("angle_deg,normalized_power,fitted_power\n");
                for (a, p, f) in &rows {
                    csv.push_str(&format!("{a},{p},{f}\n"));
                }
                writer.write(primary, csv.as_bytes())?;
                let measured: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
                let fitted: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
                let label = format!("cos^m fit, m = {:.3}", fit.m_hat);
                let svg = Plot {
                    title: "Fitted Lambertian beam profile",
                    x_label: "angle (deg)",
                    y_label: "normalized power",
                    y_range: None,
                }
                .render(&[
                    Series {
                        name: "measured",
                        points: &measured,
                    },
                    Series {
                        name: &label,
                        points: &fitted,
                    },
                ]);
                writer.write(&writer.svg_path(), svg.as_bytes())?;
            }
            Job::Scan {
                config,
                orientation,
                radius_m,
                order,
                angles,
            } => {
                let scene = config.scene()?;
                let scan = ScanConfig {
                    receiver_area_m2: scene.channel.receiver_area_m2(),
                    ..ScanConfig::new(*orientation, *radius_m, *order, *angles)
                };
                let profile = angular_power_scan(&scene.tx, &scan)?;
                let (peak_angle, peak) = profile.peak().unwrap_or((f64::NAN, f64::NAN));
                println!("{orientation} scan: peak {peak:.4e} uW at {peak_angle} deg");
                writer.write_profile(&profile, &format!("Power distribution ({orientation})"))?;
            }
            Job::Ingest { input } => match ingest_measurements(input)? {
                Measurements::Sweep(result) => {
                    println!("{} sweep records", result.records.len());
                    writer.write_sweep(&result, "Measured success rate vs link span")?;
                }
                Measurements::Angular(profile) => {
                    println!("{} angular samples ({})", profile.len(), profile.unit());
                    writer.write_profile(&profile, "Measured power distribution")?;
                }
            },
        }
        writer.finish(self)
    }
}

fn read_angular(path: &Path) -> Result<AngularProfile> {
    match ingest_measurements(path)? {
        Measurements::Angular(p) => Ok(p),
        Measurements::Sweep(_) => bail!(
            "{} holds sweep records; expected an `angle_deg,power` profile",
            path.display()
        ),
    }
}

/// Human-readable decode summary; fails with [`Halt::NoFrame`] if no ring is found.
pub fn decode_report(input: &Path, reference: Option<&[bool]>) -> Result<String> {
    let image = RenderedImage::read_pgm(input)?;
    let layout = FrameLayout::default();
    let report = decode_frame(&image, &layout, reference)?;
    let roi = match (report.roi_found, report.roi) {
        (true, Some(roi)) => roi,
        _ => return Err(Halt::NoFrame.into()),
    };
    let len = reference.map_or(report.bits.len(), <[bool]>::len);
    let text: String = bits_to_text(&report.bits[..len])
        .chars()
        .map(|c| if c.is_control() { '.' } else { c })
        .collect();
    let margins = &report.per_cell_margin;
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = margins.iter().sum::<f64>() / margins.len() as f64;
    let mut out = format!(
        "text: {text}\nbits: {}\nroi: {} {} {} {}\nthreshold: {:.4}\nmargin_min: {min:.4}\nmargin_mean: {mean:.4}\n",
        format_bits(&report.bits),
        roi.x0,
        roi.y0,
        roi.x1,
        roi.y1,
        report.threshold
    );
    if let Some(rate) = report.success_rate_vs_reference {
        out.push_str(&format!("success_rate: {rate}\n"));
    }
    Ok(out)
}

/// Tracks what a job has written so the manifest can list it.
struct Artifacts {
    primary: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(primary: &Path) -> Self {
        Self {
            primary: primary.to_path_buf(),
            written: Vec::new(),
        }
    }

    fn svg_path(&self) -> PathBuf {
        self.primary.with_extension("svg")
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn write_sweep(&mut self, result: &SweepResult, title: &str) -> Result<()> {
        let primary = self.primary.clone();
        self.write(&primary, result.to_csv_string().as_bytes())?;
        let points: Vec<(f64, f64)> = result
            .records
            .iter()
            .map(|r| (r.distance_m, r.mean_success))
            .collect();
        let svg = Plot {
            title,
            x_label: "distance (m)",
            y_label: "mean success rate",
            y_range: Some((0.0, 1.0)),
        }
        .render(&[Series {
            name: "mean success",
            points: &points,
        }]);
        self.write(&self.svg_path(), svg.as_bytes())
    }

    fn write_profile(&mut self, profile: &AngularProfile, title: &str) -> Result<()> {
        let primary = self.primary.clone();
        self.write(&primary, profile.to_csv_string().as_bytes())?;
        let unit = profile.unit().to_string();
        let y_label = format!("power ({unit})");
        let svg = Plot {
            title,
            x_label: "angle (deg)",
            y_label: &y_label,
            y_range: None,
        }
        .render(&[Series {
            name: "power",
            points: profile.samples(),
        }]);
        self.write(&self.svg_path(), svg.as_bytes())
    }

    fn finish(mut self, job: &Job) -> Result<Vec<PathBuf>> {
        let outputs = self
            .written
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .ok_or_else(|| anyhow!("output path {} has no file name", p.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: job.name().into(),
            version: VERSION.into(),
            seed: job.seed()?,
            args: job.args(),
            config: job.config(),
            outputs,
        };
        let path = manifest_path(&self.primary);
        self.write(&path, manifest.to_text().as_bytes())?;
        Ok(self.written)
    }
}
