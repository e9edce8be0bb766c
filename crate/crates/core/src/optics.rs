//! Free-space capture of a displayed frame by a pinhole camera.

use crate::channel::{
    channel_gain, sample_gaussian_noise, ChannelParams, LinkGeometry, NoiseParams, TransmitterSpec,
};
use crate::codec::FrameLayout;
use crate::error::{Error, Result};
use crate::image::{gaussian_blur, place_scaled, warp, RenderedImage};

/// Link distance at which the captured signal has unit amplitude.
pub const REFERENCE_DISTANCE_M: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    focal_length_px: f64,
    sensor_cols: usize,
    sensor_rows: usize,
    fov_semi_angle: f64,
    frame_rate_hz: f64,
}

impl Default for CameraSpec {
    /// 480 × 360 sensor with a 450 px focal length: the default phone frame
    /// spans about 150 px (42% of the sensor height) at 20 cm and still fits
    /// at 10 cm. The FOV semi-angle is the half-diagonal field.
    fn default() -> Self {
        let (f, cols, rows) = (450.0, 480, 360);
        let fov = ((cols as f64 / 2.0).hypot(rows as f64 / 2.0) / f).atan();
        Self::new(f, cols, rows, fov, 60.0).expect("default camera is valid")
    }
}

impl CameraSpec {
    pub fn new(
        focal_length_px: f64,
        sensor_cols: usize,
        sensor_rows: usize,
        fov_semi_angle: f64,
        frame_rate_hz: f64,
    ) -> Result<Self> {
        if !(focal_length_px > 0.0) || !focal_length_px.is_finite() {
            return Err(Error::domain(
                "focal length",
                format!("{focal_length_px} px, must be > 0"),
            ));
        }
        if sensor_cols == 0 || sensor_rows == 0 {
            return Err(Error::domain("sensor size", "zero pixels"));
        }
        if !(fov_semi_angle > 0.0 && fov_semi_angle <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::domain(
                "FOV semi-angle",
                format!("{fov_semi_angle} rad outside (0, pi/2]"),
            ));
        }
        if !(frame_rate_hz > 0.0) {
            return Err(Error::domain("frame rate", format!("{frame_rate_hz}")));
        }
        Ok(Self {
            focal_length_px,
            sensor_cols,
            sensor_rows,
            fov_semi_angle,
            frame_rate_hz,
        })
    }

    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_px
    }

    pub fn sensor_cols(&self) -> usize {
        self.sensor_cols
    }

    pub fn sensor_rows(&self) -> usize {
        self.sensor_rows
    }

    pub fn fov_semi_angle(&self) -> f64 {
        self.fov_semi_angle
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }
}

/// Everything needed to turn a displayed frame into a captured one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub geometry: LinkGeometry,
    pub channel: ChannelParams,
    pub noise: NoiseParams,
    pub camera: CameraSpec,
    pub tx: TransmitterSpec,
    pub blur_sigma_px: f64,
    /// Smallest transmitted feature in frame pixels (one cell). The link is
    /// broken once it projects below one sensor pixel.
    pub feature_px: f64,
}

impl Default for SceneConfig {
    /// Phone screen and default camera facing each other at 20 cm, no noise.
    fn default() -> Self {
        let tx = TransmitterSpec::phone_screen();
        let camera = CameraSpec::default();
        let channel =
            ChannelParams::with_unit_gains(tx.lambertian_order(), 1e-5, camera.fov_semi_angle())
                .expect("valid preset");
        Self {
            geometry: LinkGeometry::on_axis(REFERENCE_DISTANCE_M).expect("valid preset"),
            channel,
            noise: NoiseParams::noiseless(),
            camera,
            tx,
            blur_sigma_px: 0.0,
            feature_px: FrameLayout::default().cell_px() as f64,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma_px >= 0.0) || !self.blur_sigma_px.is_finite() {
            return Err(Error::domain(
                "blur sigma",
                format!("{} px, must be >= 0", self.blur_sigma_px),
            ));
        }
        if !(self.feature_px > 0.0) {
            return Err(Error::domain(
                "feature size",
                format!("{} px, must be > 0", self.feature_px),
            ));
        }
        Ok(())
    }

    pub fn at_distance(&self, distance_m: f64) -> Result<Self> {
        Ok(Self {
            geometry: self.geometry.with_distance(distance_m)?,
            ..*self
        })
    }

    pub fn with_noise(&self, noise: NoiseParams) -> Self {
        Self { noise, ..*self }
    }

    /// Channel gain relative to the on-axis gain at [`REFERENCE_DISTANCE_M`].
    pub fn relative_gain(&self) -> f64 {
        let reference = LinkGeometry::on_axis(REFERENCE_DISTANCE_M).expect("positive distance");
        channel_gain(&self.geometry, &self.channel) / channel_gain(&reference, &self.channel)
    }

    /// Side of the displayed frame on the sensor, in pixels.
    pub fn projected_frame_px(&self) -> f64 {
        self.tx.frame_extent_m() * self.camera.focal_length_px / self.geometry.distance_m()
    }
}

/// Pinhole image size `extent · f / d` in pixels.
pub fn projected_size(screen_extent_m: f64, distance_m: f64, camera: &CameraSpec) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::domain(
            "link distance",
            format!("{distance_m} m, must be > 0"),
        ));
    }
    Ok(screen_extent_m * camera.focal_length_px / distance_m)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Capture {
    Image(RenderedImage),
    /// The smallest feature projects below one pixel.
    LinkBroken {
        projected_feature_px: f64,
    },
}

impl Capture {
    pub fn image(&self) -> Option<&RenderedImage> {
        match self {
            Capture::Image(img) => Some(img),
            Capture::LinkBroken { .. } => None,
        }
    }

    pub fn into_image(self) -> Option<RenderedImage> {
        match self {
            Capture::Image(img) => Some(img),
            Capture::LinkBroken { .. } => None,
        }
    }
}

/// Where the frame image lands on the sensor for an untilted, unrotated
/// link: `(x0, y0, scale)` with the frame's top-left at `(x0, y0)` and each
/// frame pixel spanning `scale` sensor pixels.
pub fn frame_placement(frame_w: usize, frame_h: usize, scene: &SceneConfig) -> (f64, f64, f64) {
    let scale = scene.projected_frame_px() / frame_w.max(frame_h) as f64;
    let x0 = (scene.camera.sensor_cols as f64 - frame_w as f64 * scale) / 2.0;
    let y0 = (scene.camera.sensor_rows as f64 - frame_h as f64 * scale) / 2.0;
    (x0, y0, scale)
}

/// Renders the sensor image for `frame_image` displayed under `scene`.
///
/// The frame is projected through a pinhole onto a white sensor (box-filter
/// resampling), scaled by the channel gain relative to the 20 cm on-axis
/// reference, optionally blurred, and perturbed by seeded Gaussian noise
/// before clamping to `[0, 1]`. Non-zero tilt or rotation go through an
/// experimental bilinear affine warp.
pub fn capture(frame_image: &RenderedImage, scene: &SceneConfig) -> Result<Capture> {
    scene.validate()?;
    if frame_image.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let (fw, fh) = (frame_image.width(), frame_image.height());
    let (x0, y0, scale) = frame_placement(fw, fh, scene);
    let feature = scene.feature_px * scale;
    if feature < 1.0 {
        return Ok(Capture::LinkBroken {
            projected_feature_px: feature,
        });
    }

    let cols = scene.camera.sensor_cols;
    let rows = scene.camera.sensor_rows;
    let tilt = scene.geometry.tilt();
    let rotation = scene.geometry.rotation();
    let projected = if tilt == 0.0 && rotation == 0.0 {
        place_scaled(frame_image, cols, rows, x0, y0, scale, scale, 1.0)
    } else {
        let (cx, cy) = (cols as f64 / 2.0, rows as f64 / 2.0);
        let (sin, cos) = rotation.sin_cos();
        let sx = scale * tilt.cos();
        warp(frame_image, cols, rows, 1.0, |x, y| {
            let (dx, dy) = (x - cx, y - cy);
            let (rx, ry) = (cos * dx + sin * dy, -sin * dx + cos * dy);
            (rx / sx + fw as f64 / 2.0, ry / scale + fh as f64 / 2.0)
        })
    };

    let gain = scene.relative_gain();
    let mut signal = projected.map(|p| p * gain);
    if scene.blur_sigma_px > 0.0 {
        signal = gaussian_blur(&signal, scene.blur_sigma_px);
    }
    let noise = sample_gaussian_noise(cols * rows, &scene.noise);
    let pixels = signal
        .pixels()
        .iter()
        .zip(noise)
        .map(|(s, n)| s + n)
        .collect();
    Ok(Capture::Image(RenderedImage::new(cols, rows, pixels)?))
}
