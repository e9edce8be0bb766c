//! Line-of-sight optical channel between a Lambertian screen and a camera.
//!
//! Angles are radians everywhere in this module except
//! [`lambertian_order`] and [`TransmitterSpec`], whose half-power semi-angle
//! is the datasheet-style degree value.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Emitting screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitterSpec {
    half_power_semi_angle_deg: f64,
    transmit_power_w: f64,
    screen_width_m: f64,
    screen_height_m: f64,
    frame_rate_hz: f64,
}

impl TransmitterSpec {
    pub fn new(
        half_power_semi_angle_deg: f64,
        transmit_power_w: f64,
        screen_width_m: f64,
        screen_height_m: f64,
        frame_rate_hz: f64,
    ) -> Result<Self> {
        check_half_angle(half_power_semi_angle_deg)?;
        if !(transmit_power_w >= 0.0) || !transmit_power_w.is_finite() {
            return Err(Error::domain(
                "transmit power",
                format!("{transmit_power_w} W, must be >= 0"),
            ));
        }
        for (what, v) in [
            ("screen width", screen_width_m),
            ("screen height", screen_height_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(what, format!("{v} m, must be > 0")));
            }
        }
        if !(frame_rate_hz > 0.0) {
            return Err(Error::domain(
                "frame rate",
                format!("{frame_rate_hz} Hz, must be > 0"),
            ));
        }
        Ok(Self {
            half_power_semi_angle_deg,
            transmit_power_w,
            screen_width_m,
            screen_height_m,
            frame_rate_hz,
        })
    }

    /// A 6.41-inch 20:9 OLED phone screen in portrait, 60 fps, m = 1 emitter,
    /// 1 mW of emitted optical power.
    pub fn phone_screen() -> Self {
        let (w, h) = diagonal_to_sides(6.41 * 0.0254, 9.0, 20.0);
        Self::new(60.0, 1e-3, w, h, 60.0).expect("valid preset")
    }

    pub fn half_power_semi_angle_deg(&self) -> f64 {
        self.half_power_semi_angle_deg
    }

    pub fn transmit_power_w(&self) -> f64 {
        self.transmit_power_w
    }

    pub fn screen_width_m(&self) -> f64 {
        self.screen_width_m
    }

    pub fn screen_height_m(&self) -> f64 {
        self.screen_height_m
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn lambertian_order(&self) -> f64 {
        lambertian_order(self.half_power_semi_angle_deg).expect("validated at construction")
    }

    /// Side length of the square data frame as displayed: the frame is
    /// scaled to span the screen's shorter side.
    pub fn frame_extent_m(&self) -> f64 {
        self.screen_width_m.min(self.screen_height_m)
    }

    pub fn diagonal_m(&self) -> f64 {
        self.screen_width_m.hypot(self.screen_height_m)
    }
}

/// Splits a diagonal into (short, long) sides for an aspect ratio `a:b`.
pub fn diagonal_to_sides(diagonal: f64, a: f64, b: f64) -> (f64, f64) {
    let unit = diagonal / a.hypot(b);
    (a * unit, b * unit)
}

fn check_half_angle(deg: f64) -> Result<()> {
    if deg > 0.0 && deg < 90.0 {
        Ok(())
    } else {
        Err(Error::domain(
            "half-power semi-angle",
            format!("{deg} deg, must lie strictly inside (0, 90)"),
        ))
    }
}

/// Lambertian order from the half-power semi-angle in degrees:
/// `m = -ln 2 / ln(cos θ½)`.
pub fn lambertian_order(half_power_semi_angle_deg: f64) -> Result<f64> {
    check_half_angle(half_power_semi_angle_deg)?;
    let c = half_power_semi_angle_deg.to_radians().cos();
    let m = -LN_2 / c.ln();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::domain(
            "half-power semi-angle",
            format!("{half_power_semi_angle_deg} deg gives a degenerate order"),
        ));
    }
    Ok(m)
}

/// Inverse of [`lambertian_order`]: the half-power semi-angle in degrees.
pub fn half_power_semi_angle_deg(order: f64) -> Result<f64> {
    if !(order > 0.0) || !order.is_finite() {
        return Err(Error::domain("Lambertian order", format!("{order}")));
    }
    Ok((-LN_2 / order).exp().acos().to_degrees())
}

/// Normalised radiant intensity `(m + 1) / 2π · cosᵐ θ` in sr⁻¹.
pub fn radiant_intensity(theta: f64, order: f64) -> Result<f64> {
    if !(order > 0.0) {
        return Err(Error::domain("Lambertian order", format!("{order}")));
    }
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::domain(
            "radiance angle",
            format!("{theta} rad outside [0, pi/2]"),
        ));
    }
    Ok((order + 1.0) / (2.0 * PI) * theta.cos().max(0.0).powf(order))
}

/// Relative placement of receiver and transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    distance_m: f64,
    radiance_angle: f64,
    incidence_angle: f64,
    tilt: f64,
    rotation: f64,
}

impl LinkGeometry {
    pub fn new(
        distance_m: f64,
        radiance_angle: f64,
        incidence_angle: f64,
        tilt: f64,
        rotation: f64,
    ) -> Result<Self> {
        if !(distance_m > 0.0) || !distance_m.is_finite() {
            return Err(Error::domain(
                "link distance",
                format!("{distance_m} m, must be > 0"),
            ));
        }
        for (what, a) in [
            ("radiance angle", radiance_angle),
            ("incidence angle", incidence_angle),
        ] {
            if !(0.0..=FRAC_PI_2).contains(&a) {
                return Err(Error::domain(what, format!("{a} rad outside [0, pi/2]")));
            }
        }
        if !tilt.is_finite() || !rotation.is_finite() {
            return Err(Error::domain("tilt/rotation", "non-finite angle"));
        }
        Ok(Self {
            distance_m,
            radiance_angle,
            incidence_angle,
            tilt,
            rotation,
        })
    }

    /// Receiver facing the screen on its axis.
    pub fn on_axis(distance_m: f64) -> Result<Self> {
        Self::new(distance_m, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn with_distance(self, distance_m: f64) -> Result<Self> {
        Self::new(
            distance_m,
            self.radiance_angle,
            self.incidence_angle,
            self.tilt,
            self.rotation,
        )
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn radiance_angle(&self) -> f64 {
        self.radiance_angle
    }

    pub fn incidence_angle(&self) -> f64 {
        self.incidence_angle
    }

    pub fn tilt(&self) -> f64 {
        self.tilt
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }
}

/// Emitter order and receiver optics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    lambertian_order: f64,
    receiver_area_m2: f64,
    filter_gain: f64,
    concentrator_gain: f64,
    fov_semi_angle: f64,
}

impl ChannelParams {
    pub fn new(
        lambertian_order: f64,
        receiver_area_m2: f64,
        filter_gain: f64,
        concentrator_gain: f64,
        fov_semi_angle: f64,
    ) -> Result<Self> {
        if !(lambertian_order > 0.0) || !lambertian_order.is_finite() {
            return Err(Error::domain(
                "Lambertian order",
                format!("{lambertian_order}, must be > 0"),
            ));
        }
        if !(receiver_area_m2 > 0.0) || !receiver_area_m2.is_finite() {
            return Err(Error::domain(
                "receiver area",
                format!("{receiver_area_m2} m^2, must be > 0"),
            ));
        }
        for (what, g) in [
            ("filter gain", filter_gain),
            ("concentrator gain", concentrator_gain),
        ] {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::domain(what, format!("{g}, must be >= 0")));
            }
        }
        if !(fov_semi_angle > 0.0 && fov_semi_angle <= FRAC_PI_2) {
            return Err(Error::domain(
                "FOV semi-angle",
                format!("{fov_semi_angle} rad outside (0, pi/2]"),
            ));
        }
        Ok(Self {
            lambertian_order,
            receiver_area_m2,
            filter_gain,
            concentrator_gain,
            fov_semi_angle,
        })
    }

    /// Unit filter and concentrator gains.
    pub fn with_unit_gains(
        lambertian_order: f64,
        receiver_area_m2: f64,
        fov_semi_angle: f64,
    ) -> Result<Self> {
        Self::new(lambertian_order, receiver_area_m2, 1.0, 1.0, fov_semi_angle)
    }

    pub fn lambertian_order(&self) -> f64 {
        self.lambertian_order
    }

    pub fn receiver_area_m2(&self) -> f64 {
        self.receiver_area_m2
    }

    pub fn filter_gain(&self) -> f64 {
        self.filter_gain
    }

    pub fn concentrator_gain(&self) -> f64 {
        self.concentrator_gain
    }

    pub fn fov_semi_angle(&self) -> f64 {
        self.fov_semi_angle
    }
}

/// LOS DC gain `H(0)`; zero outside the receiver field of view.
pub fn channel_gain(geom: &LinkGeometry, params: &ChannelParams) -> f64 {
    let psi = geom.incidence_angle;
    if psi > params.fov_semi_angle {
        return 0.0;
    }
    let m = params.lambertian_order;
    let d = geom.distance_m;
    params.receiver_area_m2 * (m + 1.0) / (2.0 * PI * d * d)
        * geom.radiance_angle.cos().powf(m)
        * params.filter_gain
        * params.concentrator_gain
        * psi.cos()
}

pub fn received_power(gain: f64, transmit_power_w: f64) -> f64 {
    debug_assert!(gain >= 0.0 && transmit_power_w >= 0.0);
    gain * transmit_power_w
}

pub fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma", format!("{sigma}, must be > 0")));
    }
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// Additive pixel noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub mean: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(mean: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() || !mean.is_finite() {
            return Err(Error::domain(
                "noise",
                format!("mean {mean}, sigma {sigma}; sigma must be finite and >= 0"),
            ));
        }
        Ok(Self { mean, sigma, seed })
    }

    pub fn noiseless() -> Self {
        Self {
            mean: 0.0,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.mean, sigma, self.seed)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Standard-normal generator: Marsaglia's polar method driven by ChaCha8.
///
/// Uniforms are the top 53 bits of each ChaCha output word, so the stream
/// depends only on the seed and not on the platform or thread.
pub struct GaussianSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.gen::<f64>() - 1.0;
            let v = 2.0 * self.rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * k);
                return u * k;
            }
        }
    }
}

pub fn sample_gaussian_noise(count: usize, params: &NoiseParams) -> Vec<f64> {
    if params.sigma == 0.0 {
        return vec![params.mean; count];
    }
    let mut sampler = GaussianSampler::new(params.seed);
    (0..count)
        .map(|_| params.mean + params.sigma * sampler.standard())
        .collect()
}
