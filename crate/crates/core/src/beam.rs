//! Beam profiling: scanning-slit and knife-edge scans of intensity maps,
//! angular power scans of an extended Lambertian screen, and Lambertian
//! order estimation from a measured angular profile.
//!
//! Angular profiles use the 0–180° arc convention with 90° at broadside;
//! the fitter works with the off-axis angle `θ = |angle − 90°|`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::TransmitterSpec;
use crate::error::{Error, Result};
use crate::image::RenderedImage;

/// Non-negative 2-D intensity samples on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    width: usize,
    height: usize,
    spacing_m: f64,
    values: Vec<f64>,
}

impl IntensityMap {
    pub fn new(width: usize, height: usize, spacing_m: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: width * height,
            });
        }
        if !(spacing_m > 0.0) || !spacing_m.is_finite() {
            return Err(Error::domain("map spacing", format!("{spacing_m}")));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(
                "intensity",
                format!("{v}, must be finite and >= 0"),
            ));
        }
        Ok(Self {
            width,
            height,
            spacing_m,
            values,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        spacing_m: f64,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, spacing_m, values)
    }

    pub fn from_image(image: &RenderedImage, spacing_m: f64) -> Result<Self> {
        Self::new(
            image.width(),
            image.height(),
            spacing_m,
            image.pixels().to_vec(),
        )
    }

    pub fn read_pgm(path: impl AsRef<Path>, spacing_m: f64) -> Result<Self> {
        Self::from_image(&RenderedImage::read_pgm(path)?, spacing_m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    fn extent(&self, axis: ScanAxis) -> usize {
        match axis {
            ScanAxis::Horizontal => self.width,
            ScanAxis::Vertical => self.height,
        }
    }

    /// Sum over the full transverse extent at each position along `axis`.
    pub fn line_sums(&self, axis: ScanAxis) -> Vec<f64> {
        match axis {
            ScanAxis::Horizontal => {
                let mut sums = vec![CompensatedSum::default(); self.width];
                for row in self.values.chunks_exact(self.width.max(1)) {
                    for (s, &v) in sums.iter_mut().zip(row) {
                        s.add(v);
                    }
                }
                sums.into_iter().map(|s| s.value()).collect()
            }
            ScanAxis::Vertical => self
                .values
                .chunks_exact(self.width.max(1))
                .map(|row| row.iter().copied().collect::<CompensatedSum>().value())
                .collect(),
        }
    }
}

/// Direction in which the slit or knife edge travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    /// Moves along x; positions index columns.
    Horizontal,
    /// Moves along y; positions index rows.
    Vertical,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Power through a `slit_width`-sample slit at every slit position;
/// `extent − slit_width + 1` values.
pub fn scanning_slit_profile(
    map: &IntensityMap,
    axis: ScanAxis,
    slit_width: usize,
) -> Result<Vec<f64>> {
    let extent = map.extent(axis);
    if slit_width == 0 || slit_width > extent {
        return Err(Error::domain(
            "slit width",
            format!("{slit_width} samples on an axis of {extent}"),
        ));
    }
    let lines = map.line_sums(axis);
    Ok(lines
        .windows(slit_width)
        .map(|w| w.iter().copied().collect::<CompensatedSum>().value())
        .collect())
}

/// Power left unobstructed when a knife edge covers positions `< k`, for
/// `k = 0..=extent`: starts at the total map power and ends at 0.
pub fn knife_edge_profile(map: &IntensityMap, axis: ScanAxis) -> Vec<f64> {
    let lines = map.line_sums(axis);
    let mut curve = vec![0.0; lines.len() + 1];
    for k in (0..lines.len()).rev() {
        curve[k] = curve[k + 1] + lines[k];
    }
    curve
}

/// Edge position (in samples, interpolated) where a knife-edge curve falls
/// through `level` times its initial value.
fn knife_edge_crossing(curve: &[f64], level: f64) -> Option<f64> {
    let total = *curve.first()?;
    if !(total > 0.0) {
        return None;
    }
    let target = level * total;
    curve.windows(2).enumerate().find_map(|(k, w)| {
        (w[0] >= target && w[1] < target).then(|| k as f64 + (w[0] - target) / (w[0] - w[1]))
    })
}

/// Distance in samples between the `high` and `low` power-fraction crossings
/// of a knife-edge curve, e.g. `(0.9, 0.1)` for the 10–90% width.
pub fn knife_edge_width(curve: &[f64], high: f64, low: f64) -> Result<f64> {
    if !(0.0 < low && low < high && high < 1.0) {
        return Err(Error::domain(
            "knife-edge levels",
            format!("need 0 < {low} < {high} < 1"),
        ));
    }
    let a = knife_edge_crossing(curve, high);
    let b = knife_edge_crossing(curve, low);
    match (a, b) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(Error::domain("knife-edge curve", "no power to measure")),
    }
}

/// Centroid and second-moment (rms) width of a 1-D profile, in samples.
pub fn profile_moments(profile: &[f64]) -> Option<(f64, f64)> {
    let total: f64 = profile.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let centroid = profile
        .iter()
        .enumerate()
        .map(|(i, &p)| i as f64 * p)
        .sum::<f64>()
        / total;
    let var = profile
        .iter()
        .enumerate()
        .map(|(i, &p)| (i as f64 - centroid).powi(2) * p)
        .sum::<f64>()
        / total;
    Some((centroid, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerUnit {
    Microwatt,
    Normalized,
}

impl fmt::Display for PowerUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerUnit::Microwatt => "uW",
            PowerUnit::Normalized => "norm",
        })
    }
}

impl FromStr for PowerUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uW" => Ok(PowerUnit::Microwatt),
            "norm" => Ok(PowerUnit::Normalized),
            other => Err(Error::Schema(format!("unknown power unit {other:?}"))),
        }
    }
}

/// Received power against arc angle in degrees (90° = broadside).
#[derive(Debug, Clone, PartialEq)]
pub struct AngularProfile {
    samples: Vec<(f64, f64)>,
    unit: PowerUnit,
}

impl AngularProfile {
    pub fn new(samples: Vec<(f64, f64)>, unit: PowerUnit) -> Result<Self> {
        for (i, &(a, p)) in samples.iter().enumerate() {
            if !(0.0..=180.0).contains(&a) {
                return Err(Error::domain(
                    "profile angle",
                    format!("{a} deg outside [0, 180]"),
                ));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::domain("profile power", format!("{p} at {a} deg")));
            }
            if i > 0 && !(a > samples[i - 1].0) {
                return Err(Error::domain(
                    "profile angles",
                    format!("not strictly increasing at {a} deg"),
                ));
            }
        }
        Ok(Self { samples, unit })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn unit(&self) -> PowerUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64)>, s| match best {
                Some(b) if b.1 >= s.1 => Some(b),
                _ => Some(s),
            })
    }

    /// CSV with a `# unit=` comment line and an `angle_deg,power` header.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# unit={}", self.unit)?;
        writeln!(out, "angle_deg,power")?;
        for &(a, p) in &self.samples {
            writeln!(out, "{a},{p}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads the CSV written by [`AngularProfile::write_csv`]. A missing unit
    /// comment means microwatts.
    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        crate::harness::parse_angular_csv(input)
    }
}

/// Divides every power by the peak so the peak becomes exactly 1.
pub fn normalize_profile(profile: &AngularProfile) -> Result<AngularProfile> {
    let peak = profile.peak().map(|p| p.1).unwrap_or(0.0);
    if !(peak > 0.0) {
        return Err(Error::domain(
            "angular profile",
            "no positive power to normalise by",
        ));
    }
    AngularProfile::new(
        profile
            .samples
            .iter()
            .map(|&(a, p)| (a, p / peak))
            .collect(),
        PowerUnit::Normalized,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub m_hat: f64,
    /// Best-fit amplitude of `gain · cosᵐθ` against the normalised profile.
    pub gain: f64,
    pub residual_rms: f64,
    pub samples_used: usize,
}

/// Samples at or beyond this off-axis angle are excluded from the fit.
pub const FIT_MAX_OFF_AXIS_DEG: f64 = 85.0;

const FIT_M_MIN: f64 = 1e-3;
const FIT_M_MAX: f64 = 1e3;

/// Least-squares Lambertian order of a normalised angular profile.
///
/// Minimises `Σ (p̂ᵢ − a·cosᵐθᵢ)²` where `a` is eliminated in closed form
/// for each `m`; the remaining 1-D problem is bracketed on a log grid and
/// polished by golden-section search in `ln m`.
pub fn fit_lambertian(profile: &AngularProfile) -> Result<FitResult> {
    let normalized = normalize_profile(profile)?;
    let pts: Vec<(f64, f64)> = normalized
        .samples
        .iter()
        .map(|&(a, p)| ((a - 90.0).abs(), p))
        .filter(|&(theta, _)| theta < FIT_MAX_OFF_AXIS_DEG)
        .map(|(theta, p)| (theta.to_radians().cos(), p))
        .collect();

    let positive = pts.iter().filter(|p| p.1 > 0.0).count();
    let off_axis = pts.iter().any(|p| p.0 < 1.0);
    let distinct = {
        let mut cs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        cs.len()
    };
    if positive < 3 || distinct < 2 || !off_axis {
        return Err(Error::domain(
            "angular profile",
            format!(
                "need >= 3 positive samples over >= 2 distinct off-axis angles below \
                 {FIT_MAX_OFF_AXIS_DEG} deg (have {positive} positive, {distinct} distinct)"
            ),
        ));
    }

    let cost = |log_m: f64| -> (f64, f64) {
        let m = log_m.exp();
        let (mut pc, mut cc) = (0.0, 0.0);
        for &(c, p) in &pts {
            let cm = c.powf(m);
            pc += p * cm;
            cc += cm * cm;
        }
        let gain = if cc > 0.0 { pc / cc } else { 0.0 };
        let sse = pts
            .iter()
            .map(|&(c, p)| (p - gain * c.powf(m)).powi(2))
            .sum::<f64>();
        (sse, gain)
    };

    const GRID: usize = 240;
    let (lo, hi) = (FIT_M_MIN.ln(), FIT_M_MAX.ln());
    let step = (hi - lo) / GRID as f64;
    let best = (0..=GRID)
        .map(|i| (i, cost(lo + i as f64 * step).0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let mut a = lo + best.saturating_sub(1) as f64 * step;
    let mut b = lo + (best + 1).min(GRID) as f64 * step;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (cost(x1).0, cost(x2).0);
    while b - a > 1e-13 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = cost(x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = cost(x2).0;
        }
    }
    let log_m = 0.5 * (a + b);
    let (sse, gain) = cost(log_m);
    Ok(FitResult {
        m_hat: log_m.exp(),
        gain,
        residual_rms: (sse / pts.len() as f64).sqrt(),
        samples_used: pts.len(),
    })
}

/// Which screen axis lies in the plane of the measurement arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Short screen side in-plane.
    Portrait,
    /// Long screen side in-plane.
    Landscape,
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "portrait" => Ok(Orientation::Portrait),
            "landscape" => Ok(Orientation::Landscape),
            other => Err(Error::Config(format!("unknown orientation {other:?}"))),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Portrait => "portrait",
            Orientation::Landscape => "landscape",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub orientation: Orientation,
    pub arc_radius_m: f64,
    pub order: f64,
    pub n_angles: usize,
    /// Emitter grid (in-plane, out-of-plane).
    pub grid: (usize, usize),
    pub receiver_area_m2: f64,
}

impl ScanConfig {
    pub fn new(orientation: Orientation, arc_radius_m: f64, order: f64, n_angles: usize) -> Self {
        Self {
            orientation,
            arc_radius_m,
            order,
            n_angles,
            grid: (64, 64),
            receiver_area_m2: 1e-5,
        }
    }
}

/// Received power around a 0–180° arc centred on the screen.
///
/// The screen is a uniform grid of Lambertian point emitters sharing the
/// transmit power; the detector faces the screen centre. Each emitter adds
/// `P/N · A_r (m+1)/(2πr²) · cosᵐθ · cosψ`. Powers are in microwatts.
pub fn angular_power_scan(tx: &TransmitterSpec, config: &ScanConfig) -> Result<AngularProfile> {
    if !(config.arc_radius_m > 0.0) {
        return Err(Error::domain(
            "arc radius",
            format!("{}", config.arc_radius_m),
        ));
    }
    if config.n_angles < 3 {
        return Err(Error::domain(
            "angle count",
            format!("{} < 3", config.n_angles),
        ));
    }
    if !(config.order > 0.0) {
        return Err(Error::domain(
            "Lambertian order",
            format!("{}", config.order),
        ));
    }
    let (nx, ny) = config.grid;
    if nx == 0 || ny == 0 {
        return Err(Error::domain("emitter grid", "zero elements"));
    }
    let (short, long) = {
        let (w, h) = (tx.screen_width_m(), tx.screen_height_m());
        (w.min(h), w.max(h))
    };
    let (in_plane, out_of_plane) = match config.orientation {
        Orientation::Portrait => (short, long),
        Orientation::Landscape => (long, short),
    };
    // emitter centres; integer numerators keep mirrored positions exact negatives
    let centres = |n: usize, extent: f64| -> Vec<f64> {
        (0..n)
            .map(|i| (2 * i + 1) as f64 - n as f64)
            .map(|k| k / (2 * n) as f64 * extent)
            .collect()
    };
    let xs = centres(nx, in_plane);
    let ys = centres(ny, out_of_plane);
    let per_emitter = tx.transmit_power_w() / (nx * ny) as f64;
    let m = config.order;
    let r = config.arc_radius_m;
    let k = config.receiver_area_m2 * (m + 1.0) / (2.0 * std::f64::consts::PI);

    let samples: Vec<(f64, f64)> = (0..config.n_angles)
        .into_par_iter()
        .map(|idx| {
            let last = (config.n_angles - 1) as f64;
            let angle = 180.0 * idx as f64 / last;
            // off-broadside angle, exactly antisymmetric between mirrored indices
            let off = (90.0 * (2.0 * idx as f64 - last) / last).to_radians();
            let (s, c) = off.sin_cos();
            let det = (r * s, 0.0, r * c);
            let mut acc = CompensatedSum::default();
            for &y in &ys {
                for &x in &xs {
                    let v = (det.0 - x, det.1 - y, det.2);
                    let dist2 = v.0 * v.0 + v.1 * v.1 + v.2 * v.2;
                    let dist = dist2.sqrt();
                    let cos_theta = (v.2 / dist).max(0.0);
                    // detector normal points at the origin: -det / r
                    let cos_psi = (-(v.0 * det.0 + v.1 * det.1 + v.2 * det.2) / (dist * r)).abs();
                    if cos_theta > 0.0 {
                        acc.add(k / dist2 * cos_theta.powf(m) * cos_psi);
                    }
                }
            }
            (angle, acc.value() * per_emitter * 1e6)
        })
        .collect();
    AngularProfile::new(samples, PowerUnit::Microwatt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GaussianSampler;

    fn gaussian_map(n: usize, sigma: f64) -> IntensityMap {
        let c = (n as f64 - 1.0) / 2.0;
        IntensityMap::from_fn(n, n, 1e-4, |x, y| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .unwrap()
    }

    fn integer_map() -> IntensityMap {
        IntensityMap::from_fn(23, 17, 1e-3, |x, y| ((x * 31 + y * 17) % 97) as f64).unwrap()
    }

    fn cos_profile(order: f64, angles: impl Iterator<Item = f64>) -> AngularProfile {
        AngularProfile::new(
            angles
                .map(|a: f64| (a, (a - 90.0).abs().to_radians().cos().max(0.0).powf(order)))
                .collect(),
            PowerUnit::Normalized,
        )
        .unwrap()
    }

    #[test]
    fn map_validation() {
        assert!(IntensityMap::new(2, 2, 1.0, vec![0.0, 1.0, -1.0, 0.0]).is_err());
        assert!(IntensityMap::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(IntensityMap::new(2, 2, 1.0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn single_spike() {
        let map = IntensityMap::from_fn(9, 5, 1.0, |x, y| if (x, y) == (6, 2) { 3.0 } else { 0.0 })
            .unwrap();
        let p = scanning_slit_profile(&map, ScanAxis::Horizontal, 1).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let v = scanning_slit_profile(&map, ScanAxis::Vertical, 2).unwrap();
        assert_eq!(v, vec![0.0, 3.0, 3.0, 0.0]);
        assert!(scanning_slit_profile(&map, ScanAxis::Vertical, 6).is_err());
        assert!(scanning_slit_profile(&map, ScanAxis::Horizontal, 0).is_err());
    }

    #[test]
    fn knife_edge_and_slit_are_dual() {
        let map = integer_map();
        for axis in [ScanAxis::Horizontal, ScanAxis::Vertical] {
            let knife = knife_edge_profile(&map, axis);
            let slit = scanning_slit_profile(&map, axis, 1).unwrap();
            let diff: Vec<f64> = knife.windows(2).map(|w| w[0] - w[1]).collect();
            assert_eq!(diff, slit);
            let total: f64 = map.values().iter().sum();
            assert_eq!(knife[0], total);
            assert_eq!(slit.iter().sum::<f64>(), total);
            assert_eq!(*knife.last().unwrap(), 0.0);
            assert!(knife.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn uniform_map_gives_linear_ramp() {
        let map = IntensityMap::from_fn(10, 4, 1.0, |_, _| 1.0).unwrap();
        let knife = knife_edge_profile(&map, ScanAxis::Horizontal);
        let expected: Vec<f64> = (0..=10).rev().map(|k| 4.0 * k as f64).collect();
        assert_eq!(knife, expected);
    }

    #[test]
    fn gaussian_knife_edge_width() {
        let sigma = 12.0;
        let map = gaussian_map(161, sigma);
        let knife = knife_edge_profile(&map, ScanAxis::Horizontal);
        let width = knife_edge_width(&knife, 0.9, 0.1).unwrap();
        // z(0.9) - z(0.1) of the standard normal
        let expected = 2.0 * 1.281_551_565_544_600_5 * sigma;
        assert!(
            (width / expected - 1.0).abs() < 0.02,
            "{width} vs {expected}"
        );
        assert!(knife_edge_width(&knife, 0.1, 0.9).is_err());
    }

    #[test]
    fn gaussian_slit_profile_keeps_sigma() {
        let sigma = 9.0;
        let map = gaussian_map(121, sigma);
        let p = scanning_slit_profile(&map, ScanAxis::Vertical, 1).unwrap();
        let (centroid, rms) = profile_moments(&p).unwrap();
        assert!((centroid - 60.0).abs() < 1e-9);
        assert!((rms / sigma - 1.0).abs() < 0.01);
    }

    #[test]
    fn disk_profile_follows_chord_length() {
        // anti-aliased disk via 8x8 supersampling
        let (n, radius) = (121usize, 45.0);
        let c = n as f64 / 2.0;
        let map = IntensityMap::from_fn(n, n, 1.0, |x, y| {
            let mut hits = 0;
            for sy in 0..8 {
                for sx in 0..8 {
                    let px = x as f64 + (sx as f64 + 0.5) / 8.0 - c;
                    let py = y as f64 + (sy as f64 + 0.5) / 8.0 - c;
                    if px * px + py * py <= radius * radius {
                        hits += 1;
                    }
                }
            }
            hits as f64 / 64.0
        })
        .unwrap();
        let p = scanning_slit_profile(&map, ScanAxis::Horizontal, 1).unwrap();
        // chord length 2√(R²−x²) integrated across each one-sample column
        let strip = |t: f64| {
            let t = t.clamp(-radius, radius);
            t * (radius * radius - t * t).sqrt() + radius * radius * (t / radius).asin()
        };
        let peak = 2.0 * radius;
        for (i, &v) in p.iter().enumerate() {
            let left = i as f64 - c;
            let chord = strip(left + 1.0) - strip(left);
            assert!(
                (v - chord).abs() / peak < 0.02,
                "column {i}: {v} vs {chord}"
            );
        }
    }

    #[test]
    fn normalize_divides_by_peak() {
        let p = AngularProfile::new(
            vec![(10.0, 2.0), (90.0, 8.0), (170.0, 4.0)],
            PowerUnit::Microwatt,
        )
        .unwrap();
        let n = normalize_profile(&p).unwrap();
        assert_eq!(n.samples(), &[(10.0, 0.25), (90.0, 1.0), (170.0, 0.5)]);
        assert_eq!(n.unit(), PowerUnit::Normalized);
        assert_eq!(normalize_profile(&n).unwrap(), n);
        let zero = AngularProfile::new(vec![(0.0, 0.0), (1.0, 0.0)], PowerUnit::Microwatt).unwrap();
        assert!(normalize_profile(&zero).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(
            AngularProfile::new(vec![(10.0, 1.0), (10.0, 1.0)], PowerUnit::Normalized).is_err()
        );
        assert!(AngularProfile::new(vec![(181.0, 1.0)], PowerUnit::Normalized).is_err());
        assert!(AngularProfile::new(vec![(1.0, -1.0)], PowerUnit::Normalized).is_err());
    }

    #[test]
    fn fit_exact_orders() {
        for order in [1.0, 2.0, 0.7, 5.5] {
            let p = cos_profile(order, (0..=8).map(|i| 90.0 + 10.0 * i as f64));
            let fit = fit_lambertian(&p).unwrap();
            assert!((fit.m_hat - order).abs() < 1e-6, "{order}: {}", fit.m_hat);
            assert!(fit.residual_rms < 1e-6);
            assert!((fit.gain - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_is_scale_invariant() {
        let p = cos_profile(1.7, (0..=36).map(|i| 5.0 * i as f64));
        let scaled = AngularProfile::new(
            p.samples().iter().map(|&(a, v)| (a, v * 123.4)).collect(),
            PowerUnit::Microwatt,
        )
        .unwrap();
        let a = fit_lambertian(&p).unwrap();
        let b = fit_lambertian(&scaled).unwrap();
        assert!((a.m_hat - b.m_hat).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_profiles() {
        let broadside = AngularProfile::new(vec![(90.0, 1.0)], PowerUnit::Normalized).unwrap();
        assert!(fit_lambertian(&broadside).is_err());
        let mirrored = AngularProfile::new(
            vec![(70.0, 0.5), (90.0, 1.0), (110.0, 0.5)],
            PowerUnit::Normalized,
        )
        .unwrap();
        // two distinct off-axis angles: 0 and 20 degrees
        assert!(fit_lambertian(&mirrored).is_ok());
        let one_angle =
            AngularProfile::new(vec![(70.0, 0.5), (110.0, 0.5)], PowerUnit::Normalized).unwrap();
        assert!(fit_lambertian(&one_angle).is_err());
    }

    #[test]
    fn fit_tolerates_noise() {
        let mut within = 0;
        for seed in 0..100 {
            let mut g = GaussianSampler::new(seed);
            let samples = (0..=180)
                .map(|a| {
                    let clean = (a as f64 - 90.0).abs().to_radians().cos();
                    (a as f64, (clean + 0.02 * g.standard()).max(0.0))
                })
                .collect();
            let p = AngularProfile::new(samples, PowerUnit::Normalized).unwrap();
            if (fit_lambertian(&p).unwrap().m_hat - 1.0).abs() <= 0.05 {
                within += 1;
            }
        }
        assert!(within >= 95, "{within}/100");
    }

    fn scan(orientation: Orientation, radius: f64) -> AngularProfile {
        let tx = TransmitterSpec::phone_screen();
        angular_power_scan(&tx, &ScanConfig::new(orientation, radius, 1.0, 181)).unwrap()
    }

    #[test]
    fn scan_is_symmetric_with_broadside_peak() {
        for o in [Orientation::Portrait, Orientation::Landscape] {
            let p = scan(o, 0.2);
            let s = p.samples();
            for i in 0..s.len() {
                let (a, b) = (s[i].1, s[s.len() - 1 - i].1);
                assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300));
            }
            assert_eq!(p.peak().unwrap().0, 90.0);
        }
    }

    #[test]
    fn scan_far_field_matches_point_source() {
        let tx = TransmitterSpec::phone_screen();
        let p = normalize_profile(&scan(Orientation::Landscape, 20.0 * tx.diagonal_m())).unwrap();
        for &(a, v) in p.samples() {
            let point = (a - 90.0).abs().to_radians().cos();
            assert!((v - point).abs() < 0.01, "{a}: {v} vs {point}");
        }
    }

    #[test]
    fn scan_converges_with_grid() {
        let tx = TransmitterSpec::phone_screen();
        let mut cfg = ScanConfig::new(Orientation::Portrait, 0.1, 1.0, 37);
        let coarse = angular_power_scan(&tx, &cfg).unwrap();
        cfg.grid = (128, 128);
        let fine = angular_power_scan(&tx, &cfg).unwrap();
        let peak = coarse.peak().unwrap().1;
        for (a, b) in coarse.samples().iter().zip(fine.samples()) {
            assert!((a.1 - b.1).abs() / peak < 0.005);
        }
    }

    #[test]
    fn square_screen_orientation_invariant() {
        let tx = TransmitterSpec::new(60.0, 1e-3, 0.07, 0.07, 60.0).unwrap();
        let mut cfg = ScanConfig::new(Orientation::Portrait, 0.15, 1.0, 19);
        let a = angular_power_scan(&tx, &cfg).unwrap();
        cfg.orientation = Orientation::Landscape;
        assert_eq!(a, angular_power_scan(&tx, &cfg).unwrap());
    }

    #[test]
    fn scan_rejects_bad_config() {
        let tx = TransmitterSpec::phone_screen();
        assert!(
            angular_power_scan(&tx, &ScanConfig::new(Orientation::Portrait, 0.0, 1.0, 9)).is_err()
        );
        assert!(
            angular_power_scan(&tx, &ScanConfig::new(Orientation::Portrait, 0.2, 1.0, 2)).is_err()
        );
    }

    #[test]
    fn csv_round_trip() {
        let p = scan(Orientation::Portrait, 0.2);
        let text = p.to_csv_string();
        assert!(text.starts_with("# unit=uW\nangle_deg,power\n"));
        let back = AngularProfile::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, p);
    }
}
