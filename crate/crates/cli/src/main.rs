mod job;
mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use occsim_core::beam::Orientation;
use occsim_core::codec::{bytes_to_bits, parse_bits};
use occsim_core::config::{ConfigMap, SCENE_KEYS, SWEEP_KEYS};

use job::{decode_report, Halt, Job};
use manifest::RunManifest;

const EXIT_FAILURE: u8 = 1;
const EXIT_LINK_BROKEN: u8 = 3;
const EXIT_NO_FRAME: u8 = 4;

/// Screen-to-camera optical link simulator.
#[derive(Parser)]
#[command(name = "occsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode text or bits into a frame image (PGM).
    Encode {
        #[command(flatten)]
        payload: PayloadArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Pass a frame image through the optical channel and camera.
    Transmit {
        /// Frame PGM written by `encode`.
        frame: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recover the payload from a captured image.
    Decode {
        input: PathBuf,
        /// Transmitted bits, for a success rate.
        #[arg(long, conflicts_with = "reference_text")]
        reference_bits: Option<String>,
        /// Transmitted ASCII text, for a success rate.
        #[arg(long)]
        reference_text: Option<String>,
        /// Also write the report (and a manifest) here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo success rate over a list of distances.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Find the noise level that gives a target success rate, then sweep with it.
    Calibrate {
        #[arg(long, default_value_t = 0.40)]
        distance: f64,
        #[arg(long, default_value_t = 0.98)]
        target: f64,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit a Lambertian order to an `angle_deg,power` CSV.
    Fit {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulated received power around an arc in front of the screen.
    Scan {
        #[arg(long, default_value = "portrait")]
        orientation: Orientation,
        /// Arc radius in metres.
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
        /// Emitter Lambertian order; defaults to the screen's half-power angle.
        #[arg(long)]
        order: Option<f64>,
        #[arg(long, default_value_t = 181)]
        angles: usize,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Load measured sweep or angular CSV data and re-export it with a plot.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Directory for the regenerated files (default: the manifest's).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print a complete default config file.
    Defaults {
        /// Include the sweep keys.
        #[arg(long)]
        sweep: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PayloadArgs {
    /// ASCII text, 8 bits per character, MSB first.
    #[arg(long)]
    text: Option<String>,
    /// Literal `0`/`1` string.
    #[arg(long)]
    bits: Option<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Complete `key = value` config file (see `occsim defaults`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set distance_m=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(
        &self,
        defaults: ConfigMap,
        allowed: &[&[&str]],
        seed_keys: &[&str],
    ) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ConfigMap::parse(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => defaults,
        };
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {kv:?}");
            };
            map.set(k.trim(), v.trim());
        }
        if let Some(seed) = self.seed {
            for k in seed_keys {
                map.set(*k, seed.to_string());
            }
        }
        map.check_known(allowed)?;
        Ok(map)
    }
}

fn payload_bits(text: Option<&str>, bits: Option<&str>) -> Result<Option<Vec<bool>>> {
    Ok(match (text, bits) {
        (Some(t), _) => {
            if !t.is_ascii() {
                bail!("text payload must be ASCII");
            }
            Some(bytes_to_bits(t.as_bytes()))
        }
        (None, Some(b)) => Some(parse_bits(b)?),
        (None, None) => None,
    })
}

fn run(cli: Cli) -> Result<()> {
    let scene_keys: &[&[&str]] = &[SCENE_KEYS];
    let sweep_keys: &[&[&str]] = &[SCENE_KEYS, SWEEP_KEYS];
    let (job, output) = match cli.command {
        Command::Encode { payload, output } => {
            let bits = payload_bits(payload.text.as_deref(), payload.bits.as_deref())?
                .expect("clap requires one payload flag");
            (Job::Encode { payload: bits }, output)
        }
        Command::Transmit {
            frame,
            config,
            output,
        } => {
            let config = config.resolve(ConfigMap::default_scene(), scene_keys, &["seed"])?;
            (Job::Transmit { frame, config }, output)
        }
        Command::Decode {
            input,
            reference_bits,
            reference_text,
            output,
        } => {
            let reference = payload_bits(reference_text.as_deref(), reference_bits.as_deref())?;
            match output {
                Some(output) => (Job::Decode { input, reference }, output),
                None => {
                    print!("{}", decode_report(&input, reference.as_deref())?);
                    return Ok(());
                }
            }
        }
        Command::Sweep { config, output } => {
            let config = config.resolve(
                ConfigMap::default_sweep(),
                sweep_keys,
                &["seed", "master_seed"],
            )?;
            (Job::Sweep { config }, output)
        }
        Command::Calibrate {
            distance,
            target,
            config,
            output,
        } => {
            let config = config.resolve(
                ConfigMap::default_sweep(),
                sweep_keys,
                &["seed", "master_seed"],
            )?;
            let job = Job::Calibrate {
                config,
                distance_m: distance,
                target,
            };
            (job, output)
        }
        Command::Fit { input, output } => (Job::Fit { input }, output),
        Command::Scan {
            orientation,
            radius,
            order,
            angles,
            config,
            output,
        } => {
            let config = config.resolve(ConfigMap::default_scene(), scene_keys, &["seed"])?;
            let order = match order {
                Some(m) => m,
                None => config.scene()?.tx.lambertian_order(),
            };
            let job = Job::Scan {
                config,
                orientation,
                radius_m: radius,
                order,
                angles,
            };
            (job, output)
        }
        Command::Ingest { input, output } => (Job::Ingest { input }, output),
        Command::Replay { manifest, out_dir } => return replay(&manifest, out_dir.as_deref()),
        Command::Defaults { sweep } => {
            let map = if sweep {
                ConfigMap::default_sweep()
            } else {
                ConfigMap::default_scene()
            };
            print!("{}", map.to_text());
            return Ok(());
        }
    };
    for path in job.run(&output)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn replay(manifest: &Path, out_dir: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(manifest)
        .with_context(|| format!("reading {}", manifest.display()))?;
    let recorded = RunManifest::parse(&text)?;
    if recorded.version != manifest::VERSION {
        eprintln!(
            "note: manifest written by version {}, replaying with {}",
            recorded.version,
            manifest::VERSION
        );
    }
    let job = Job::from_manifest(&recorded)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for path in job.run(&dir.join(&recorded.outputs[0]))? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Halt>() {
                Some(Halt::LinkBroken { .. }) => ExitCode::from(EXIT_LINK_BROKEN),
                Some(Halt::NoFrame) => ExitCode::from(EXIT_NO_FRAME),
                None => ExitCode::from(EXIT_FAILURE),
            }
        }
    }
}
