//! Simulation and analysis toolkit for screen-to-camera optical links.
//!
//! The transmit side packs bits into a black/white cell grid
//! ([`codec`]), the free-space hop is a Lambertian line-of-sight channel
//! with pinhole projection and Gaussian pixel noise ([`channel`],
//! [`optics`]), and the receive side locates, resamples and thresholds the
//! grid again. [`beam`] covers beam profiling and Lambertian-order fitting;
//! [`harness`] runs seeded Monte Carlo sweeps over link distance.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod beam;
pub mod channel;
pub mod codec;
pub mod config;
pub mod error;
pub mod harness;
pub mod image;
pub mod optics;

pub use channel::{
    channel_gain, gaussian_pdf, lambertian_order, radiant_intensity, received_power,
    sample_gaussian_noise, ChannelParams, LinkGeometry, NoiseParams, TransmitterSpec,
};
pub use codec::{
    decode_frame, encode_frame, extract_roi, rasterize_frame, rescale_roi, success_rate, BitFrame,
    DecodeReport, FrameLayout, RoiBox,
};
pub use error::{Error, Result};
pub use image::RenderedImage;
pub use optics::{capture, projected_size, CameraSpec, Capture, SceneConfig};
