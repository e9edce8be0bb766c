use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use occsim_core::beam::{
    angular_power_scan, fit_lambertian, knife_edge_profile, AngularProfile, IntensityMap,
    Orientation, PowerUnit, ScanAxis, ScanConfig,
};
use occsim_core::harness::{random_payload, run_trial};
use occsim_core::*;

fn codec(c: &mut Criterion) {
    let layout = FrameLayout::default();
    let payload = random_payload(1, layout.capacity());
    let frame = rasterize_frame(&encode_frame(&payload, &layout).unwrap());
    let noisy = SceneConfig::default()
        .at_distance(0.4)
        .unwrap()
        .with_noise(NoiseParams::new(0.0, 0.15, 3).unwrap());
    let captured = capture(&frame, &noisy).unwrap().into_image().unwrap();

    c.bench_function("encode_rasterize", |b| {
        b.iter(|| rasterize_frame(&encode_frame(black_box(&payload), &layout).unwrap()))
    });
    c.bench_function("capture_noisy_0.4m", |b| {
        b.iter(|| capture(black_box(&frame), &noisy).unwrap())
    });
    c.bench_function("decode_unit_scale", |b| {
        b.iter(|| decode_frame(black_box(&frame), &layout, None).unwrap())
    });
    c.bench_function("decode_noisy_capture", |b| {
        b.iter(|| decode_frame(black_box(&captured), &layout, None).unwrap())
    });
    c.bench_function("trial_noisy_0.4m", |b| {
        b.iter(|| run_trial(&noisy, &layout, black_box(&payload), 9).unwrap())
    });
}

fn beam(c: &mut Criterion) {
    let samples = (0..=180)
        .map(|a| (a as f64, (a as f64 - 90.0).to_radians().cos().max(0.0)))
        .collect();
    let profile = AngularProfile::new(samples, PowerUnit::Normalized).unwrap();
    c.bench_function("fit_lambertian_181", |b| {
        b.iter(|| fit_lambertian(black_box(&profile)).unwrap())
    });

    let tx = TransmitterSpec::phone_screen();
    let scan = ScanConfig::new(Orientation::Portrait, 0.3, 1.0, 181);
    c.bench_function("angular_scan_181x64x64", |b| {
        b.iter(|| angular_power_scan(&tx, black_box(&scan)).unwrap())
    });

    let map = IntensityMap::from_fn(256, 256, 1e-5, |x, y| {
        let r2 = (x as f64 - 127.5).powi(2) + (y as f64 - 127.5).powi(2);
        (-r2 / 800.0).exp()
    })
    .unwrap();
    c.bench_function("knife_edge_256", |b| {
        b.iter(|| knife_edge_profile(black_box(&map), ScanAxis::Horizontal))
    });
}

criterion_group!(benches, codec, beam);
criterion_main!(benches);
