//! Flat `key = value` configuration.
//!
//! Values stay as the strings they were written with, so a resolved
//! configuration can be written out and read back without any float
//! re-formatting. Angles are given in degrees here and converted to
//! radians only when the domain types are built.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::channel::{ChannelParams, LinkGeometry, NoiseParams, TransmitterSpec};
use crate::codec::{bits_to_text, bytes_to_bits, parse_bits, FrameLayout};
use crate::error::{Error, Result};
use crate::harness::{PayloadSource, SweepConfig};
use crate::optics::{CameraSpec, SceneConfig};

/// Keys consumed by [`ConfigMap::scene`].
pub const SCENE_KEYS: &[&str] = &[
    "distance_m",
    "radiance_angle_deg",
    "incidence_angle_deg",
    "tilt_deg",
    "rotation_deg",
    "lambertian_order",
    "receiver_area_m2",
    "filter_gain",
    "concentrator_gain",
    "fov_semi_angle_deg",
    "noise_mean",
    "noise_sigma",
    "seed",
    "focal_length_px",
    "sensor_cols",
    "sensor_rows",
    "camera_frame_rate_hz",
    "tx_half_power_angle_deg",
    "tx_power_w",
    "screen_width_m",
    "screen_height_m",
    "tx_frame_rate_hz",
    "blur_sigma_px",
    "feature_px",
];

/// Keys consumed by [`ConfigMap::sweep`] on top of the scene keys.
pub const SWEEP_KEYS: &[&str] = &[
    "distances_m",
    "trials_per_distance",
    "payload",
    "master_seed",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n as u64 + 1,
                message: format!("expected `key = value`, found {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: n as u64 + 1,
                    message: "empty key".into(),
                });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    /// Defaults for every scene key.
    pub fn default_scene() -> Self {
        let scene = SceneConfig::default();
        let mut m = Self::default();
        let f = |v: f64| format!("{v}");
        m.set("distance_m", "0.2");
        m.set("radiance_angle_deg", "0");
        m.set("incidence_angle_deg", "0");
        m.set("tilt_deg", "0");
        m.set("rotation_deg", "0");
        m.set("lambertian_order", "1");
        m.set("receiver_area_m2", f(scene.channel.receiver_area_m2()));
        m.set("filter_gain", "1");
        m.set("concentrator_gain", "1");
        m.set(
            "fov_semi_angle_deg",
            f(scene.camera.fov_semi_angle().to_degrees()),
        );
        m.set("noise_mean", "0");
        m.set("noise_sigma", "0");
        m.set("seed", "0");
        m.set("focal_length_px", f(scene.camera.focal_length_px()));
        m.set("sensor_cols", scene.camera.sensor_cols().to_string());
        m.set("sensor_rows", scene.camera.sensor_rows().to_string());
        m.set("camera_frame_rate_hz", f(scene.camera.frame_rate_hz()));
        m.set("tx_half_power_angle_deg", "60");
        m.set("tx_power_w", f(scene.tx.transmit_power_w()));
        m.set("screen_width_m", f(scene.tx.screen_width_m()));
        m.set("screen_height_m", f(scene.tx.screen_height_m()));
        m.set("tx_frame_rate_hz", f(scene.tx.frame_rate_hz()));
        m.set("blur_sigma_px", "0");
        m.set("feature_px", f(scene.feature_px));
        m
    }

    /// Defaults for every scene and sweep key.
    pub fn default_sweep() -> Self {
        let mut m = Self::default_scene();
        m.set(
            "distances_m",
            "0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55",
        );
        m.set("trials_per_distance", "200");
        m.set("payload", "random");
        m.set("master_seed", "0");
        m
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Overlays every entry of `other` on top of `self`.
    pub fn merge(&mut self, other: &ConfigMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse {raw:?}")))
    }

    /// Rejects keys outside `allowed`, catching typos that would otherwise
    /// silently fall back to defaults.
    pub fn check_known(&self, allowed: &[&[&str]]) -> Result<()> {
        for k in self.entries.keys() {
            if !allowed.iter().any(|set| set.contains(&k.as_str())) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        let deg = |k: &str| -> Result<f64> { Ok(self.value::<f64>(k)?.to_radians()) };
        let geometry = LinkGeometry::new(
            self.value("distance_m")?,
            deg("radiance_angle_deg")?,
            deg("incidence_angle_deg")?,
            deg("tilt_deg")?,
            deg("rotation_deg")?,
        )?;
        let fov = deg("fov_semi_angle_deg")?;
        let channel = ChannelParams::new(
            self.value("lambertian_order")?,
            self.value("receiver_area_m2")?,
            self.value("filter_gain")?,
            self.value("concentrator_gain")?,
            fov,
        )?;
        let noise = NoiseParams::new(
            self.value("noise_mean")?,
            self.value("noise_sigma")?,
            self.value("seed")?,
        )?;
        let camera = CameraSpec::new(
            self.value("focal_length_px")?,
            self.value("sensor_cols")?,
            self.value("sensor_rows")?,
            fov,
            self.value("camera_frame_rate_hz")?,
        )?;
        let tx = TransmitterSpec::new(
            self.value("tx_half_power_angle_deg")?,
            self.value("tx_power_w")?,
            self.value("screen_width_m")?,
            self.value("screen_height_m")?,
            self.value("tx_frame_rate_hz")?,
        )?;
        let scene = SceneConfig {
            geometry,
            channel,
            noise,
            camera,
            tx,
            blur_sigma_px: self.value("blur_sigma_px")?,
            feature_px: self.value("feature_px")?,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn sweep(&self, layout: FrameLayout) -> Result<SweepConfig> {
        let distances = self
            .require("distances_m")?
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("key `distances_m`: cannot parse {:?}", s.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SweepConfig::new(
            distances,
            self.value("trials_per_distance")?,
            self.scene()?,
            parse_payload(self.require("payload")?)?,
            self.value("master_seed")?,
            layout,
        )
    }

    /// `key = value` lines in key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// `random`, `bits:<0/1 string>` or `text:<ASCII text>`.
pub fn parse_payload(spec: &str) -> Result<PayloadSource> {
    let spec = spec.trim();
    if spec == "random" {
        Ok(PayloadSource::RandomPerTrial)
    } else if let Some(bits) = spec.strip_prefix("bits:") {
        Ok(PayloadSource::Fixed(parse_bits(bits)?))
    } else if let Some(text) = spec.strip_prefix("text:") {
        Ok(PayloadSource::Fixed(bytes_to_bits(text.as_bytes())))
    } else {
        Err(Error::Config(format!(
            "key `payload`: expected `random`, `bits:...` or `text:...`, found {spec:?}"
        )))
    }
}

/// Inverse of [`parse_payload`] (fixed payloads are written as bits).
pub fn format_payload(source: &PayloadSource) -> String {
    match source {
        PayloadSource::RandomPerTrial => "random".into(),
        PayloadSource::Fixed(bits) => format!("bits:{}", crate::codec::format_bits(bits)),
    }
}

/// Printable text form of a fixed payload, if it is whole ASCII bytes.
pub fn payload_text(bits: &[bool]) -> Option<String> {
    bits.len().is_multiple_of(8).then(|| bits_to_text(bits))
}
