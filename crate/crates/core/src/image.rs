//! Grayscale rasters in normalised intensity, PGM I/O and resampling.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale raster; every pixel lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl RenderedImage {
    /// Builds an image, clamping every pixel into `[0, 1]` (NaN becomes 0).
    pub fn new(width: usize, height: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                left: pixels.len(),
                right: width * height,
            });
        }
        for p in &mut pixels {
            *p = clamp_unit(*p);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![clamp_unit(value); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp_unit(f(x, y)));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::EmptyRegion);
        }
        let mut pixels = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            pixels.extend_from_slice(&self.row(y)[x0..x0 + width]);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| clamp_unit(f(p))).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Mean over the half-open rectangle `[x0, x1) × [y0, y1)`.
    pub fn region_mean(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let mut sum = 0.0;
        for y in y0..y1 {
            sum += self.row(y)[x0..x1].iter().sum::<f64>();
        }
        sum / ((x1 - x0) * (y1 - y0)) as f64
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&p| (p * 255.0).round() as u8));
        out
    }

    /// Parses binary PGM (P5) with maxval up to 255.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = pgm_token(bytes, &mut pos)?;
        if magic != b"P5" {
            return Err(Error::Pgm(format!(
                "expected magic P5, found {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let width = pgm_number(bytes, &mut pos, "width")?;
        let height = pgm_number(bytes, &mut pos, "height")?;
        let maxval = pgm_number(bytes, &mut pos, "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Pgm(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::Pgm("missing whitespace after header".into()));
        }
        pos += 1;
        let n = width * height;
        let data = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Pgm(format!("raster truncated: need {n} bytes")))?;
        let scale = maxval as f64;
        Self::new(
            width,
            height,
            data.iter().map(|&b| b as f64 / scale).collect(),
        )
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes)
    }
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Pgm("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Pgm(format!("bad {what} field")))
}

/// Bilinear resampling with pixel-centre alignment; same-size input is
/// returned unchanged.
pub fn resize_bilinear(src: &RenderedImage, width: usize, height: usize) -> Result<RenderedImage> {
    if src.is_empty() || width == 0 || height == 0 {
        return Err(Error::EmptyRegion);
    }
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    let taps = |n_dst: usize, n_src: usize, s: f64| -> Vec<(usize, usize, f64)> {
        (0..n_dst)
            .map(|i| {
                let p = ((i as f64 + 0.5) * s - 0.5).clamp(0.0, (n_src - 1) as f64);
                let i0 = p.floor() as usize;
                let i1 = (i0 + 1).min(n_src - 1);
                (i0, i1, p - i0 as f64)
            })
            .collect()
    };
    let xs = taps(width, src.width, sx);
    let ys = taps(height, src.height, sy);
    let mut pixels = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (src.row(y0), src.row(y1));
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            pixels.push(top + (bottom - top) * fy);
        }
    }
    RenderedImage::new(width, height, pixels)
}

/// Per-destination-index list of `(source index, coverage fraction)`.
fn area_taps(n_dst: usize, n_src: usize, offset: f64, scale: f64) -> Vec<Vec<(usize, f64)>> {
    (0..n_dst)
        .map(|x| {
            let lo = x as f64;
            let hi = lo + 1.0;
            let first = ((lo - offset) / scale).floor().max(0.0) as usize;
            let last = (((hi - offset) / scale).ceil().max(0.0) as usize).min(n_src);
            (first..last)
                .filter_map(|j| {
                    let a = offset + j as f64 * scale;
                    let b = a + scale;
                    let w = hi.min(b) - lo.max(a);
                    (w > 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect()
}

/// Draws `src` onto a `canvas_w × canvas_h` canvas filled with `background`,
/// with the source's top-left corner at `(x0, y0)` and each source pixel
/// covering `scale_x × scale_y` canvas pixels. Every canvas pixel is the area
/// average of the continuous scene over its footprint (box filter).
pub fn place_scaled(
    src: &RenderedImage,
    canvas_w: usize,
    canvas_h: usize,
    x0: f64,
    y0: f64,
    scale_x: f64,
    scale_y: f64,
    background: f64,
) -> RenderedImage {
    let xt = area_taps(canvas_w, src.width, x0, scale_x);
    let yt = area_taps(canvas_h, src.height, y0, scale_y);

    // horizontal pass over every source row that contributes anywhere
    let mut rows = vec![0.0; src.height * canvas_w];
    let mut used = vec![false; src.height];
    for taps in &yt {
        for &(i, _) in taps {
            used[i] = true;
        }
    }
    for (i, &u) in used.iter().enumerate() {
        if !u {
            continue;
        }
        let r = src.row(i);
        let out = &mut rows[i * canvas_w..(i + 1) * canvas_w];
        for (o, taps) in out.iter_mut().zip(&xt) {
            *o = taps.iter().map(|&(j, w)| w * r[j]).sum();
        }
    }
    let cover_x: Vec<f64> = xt.iter().map(|t| t.iter().map(|&(_, w)| w).sum()).collect();

    let mut pixels = Vec::with_capacity(canvas_w * canvas_h);
    for taps in &yt {
        let cover_y: f64 = taps.iter().map(|&(_, w)| w).sum();
        for x in 0..canvas_w {
            let v: f64 = taps.iter().map(|&(i, w)| w * rows[i * canvas_w + x]).sum();
            pixels.push(v + (1.0 - cover_x[x] * cover_y) * background);
        }
    }
    RenderedImage::new(canvas_w, canvas_h, pixels).expect("dimensions match")
}

/// Area-averaging (box filter) resize.
pub fn resize_area(src: &RenderedImage, width: usize, height: usize) -> Result<RenderedImage> {
    if src.is_empty() || width == 0 || height == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(place_scaled(
        src,
        width,
        height,
        0.0,
        0.0,
        width as f64 / src.width as f64,
        height as f64 / src.height as f64,
        0.0,
    ))
}

/// Inverse-mapped bilinear warp. `inverse` maps a canvas point (pixel-centre
/// coordinates) to a source point; samples outside the source take
/// `background`.
pub fn warp(
    src: &RenderedImage,
    canvas_w: usize,
    canvas_h: usize,
    background: f64,
    inverse: impl Fn(f64, f64) -> (f64, f64),
) -> RenderedImage {
    let w = src.width as f64;
    let h = src.height as f64;
    RenderedImage::from_fn(canvas_w, canvas_h, |x, y| {
        let (u, v) = inverse(x as f64 + 0.5, y as f64 + 0.5);
        if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
            return background;
        }
        let px = (u - 0.5).clamp(0.0, w - 1.0);
        let py = (v - 0.5).clamp(0.0, h - 1.0);
        let (x0, y0) = (px.floor() as usize, py.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(src.width - 1), (y0 + 1).min(src.height - 1));
        let (fx, fy) = (px - x0 as f64, py - y0 as f64);
        let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
        let bottom = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn convolve_separable(src: &RenderedImage, kernel: &[f64]) -> RenderedImage {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (src.width as isize, src.height as isize);
    let mut tmp = vec![0.0; src.pixels.len()];
    for y in 0..h {
        let row = src.row(y as usize);
        for x in 0..w {
            tmp[(y * w + x) as usize] = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * row[(x + k as isize - r).clamp(0, w - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; src.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            out[(y * w + x) as usize] = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * tmp[((y + k as isize - r).clamp(0, h - 1) * w + x) as usize])
                .sum();
        }
    }
    RenderedImage::new(src.width, src.height, out).expect("dimensions match")
}

/// Isotropic Gaussian blur, radius `ceil(3σ)`, replicated edges.
pub fn gaussian_blur(src: &RenderedImage, sigma_px: f64) -> RenderedImage {
    if !(sigma_px > 0.0) || src.is_empty() {
        return src.clone();
    }
    let r = (3.0 * sigma_px).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma_px).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    convolve_separable(src, &kernel)
}

/// `(2r+1)²` mean filter with replicated edges.
pub fn box_blur(src: &RenderedImage, radius: usize) -> RenderedImage {
    if radius == 0 || src.is_empty() {
        return src.clone();
    }
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0.0; w * h];
    let mut line = Vec::new();
    for y in 0..h {
        running_mean(src.row(y), radius, &mut line);
        tmp[y * w..(y + 1) * w].copy_from_slice(&line);
    }
    let mut out = vec![0.0; w * h];
    let mut column = vec![0.0; h];
    for x in 0..w {
        for (y, c) in column.iter_mut().enumerate() {
            *c = tmp[y * w + x];
        }
        running_mean(&column, radius, &mut line);
        for (y, &v) in line.iter().enumerate() {
            out[y * w + x] = v;
        }
    }
    RenderedImage::new(w, h, out).expect("dimensions match")
}

/// Sliding `2r+1` window mean with replicated edges.
fn running_mean(src: &[f64], radius: usize, out: &mut Vec<f64>) {
    let n = src.len() as isize;
    let r = radius as isize;
    let at = |i: isize| src[i.clamp(0, n - 1) as usize];
    let scale = 1.0 / (2 * radius + 1) as f64;
    out.clear();
    let mut acc: f64 = (-r..=r).map(at).sum();
    for i in 0..n {
        out.push(acc * scale);
        acc += at(i + r + 1) - at(i - r);
    }
}

/// Otsu threshold of a 256-bin intensity histogram, returned in `[0, 1]` as
/// the upper edge of the last background bin.
pub fn otsu_threshold(img: &RenderedImage) -> f64 {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[((p * 255.0).round() as usize).min(255)] += 1;
    }
    let total = img.pixels.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let (mut w_b, mut sum_b) = (0.0, 0.0);
    let (mut best, mut best_var) = (0usize, -1.0);
    for (i, &c) in hist.iter().enumerate() {
        w_b += c as f64;
        if w_b == 0.0 {
            continue;
        }
        let w_f = total - w_b;
        if w_f == 0.0 {
            break;
        }
        sum_b += i as f64 * c as f64;
        let diff = sum_b / w_b - (sum_all - sum_b) / w_f;
        let var = w_b * w_f * diff * diff;
        if var > best_var {
            best_var = var;
            best = i;
        }
    }
    (best as f64 + 0.5) / 255.0
}
