//! OOK cell-grid frames: bit packing, rendering, locator search and decoding.
//!
//! A frame is a `data_cols × data_rows` grid of square cells (black = 1,
//! white = 0) surrounded by a solid black locator ring `border_cells` thick,
//! centred on a white canvas. The receiver finds the ring, resamples the
//! enclosed region back to nominal size, averages the centre of every cell
//! and splits the cell means with Otsu's criterion.

use crate::error::{Error, Result};
use crate::image::{box_blur, otsu_threshold, resize_bilinear, RenderedImage};

/// Geometry of a rendered frame, in cells and pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    data_cols: usize,
    data_rows: usize,
    cell_px: usize,
    border_cells: usize,
    quiet_zone_px: usize,
    canvas_w: usize,
    canvas_h: usize,
}

impl Default for FrameLayout {
    /// 14 × 13 data cells (182 bits), 12 px cells, one-cell ring, 4 px quiet
    /// zone on a 200 × 200 canvas.
    fn default() -> Self {
        Self::new(14, 13, 12, 1, 4, 200, 200).expect("default layout is valid")
    }
}

impl FrameLayout {
    pub fn new(
        data_cols: usize,
        data_rows: usize,
        cell_px: usize,
        border_cells: usize,
        quiet_zone_px: usize,
        canvas_w: usize,
        canvas_h: usize,
    ) -> Result<Self> {
        let layout = Self {
            data_cols,
            data_rows,
            cell_px,
            border_cells,
            quiet_zone_px,
            canvas_w,
            canvas_h,
        };
        if data_cols == 0 || data_rows == 0 || cell_px == 0 || border_cells == 0 {
            return Err(Error::domain(
                "frame layout",
                "zero-sized grid, cell or border",
            ));
        }
        if layout.grid_width_px() + 2 * quiet_zone_px > canvas_w
            || layout.grid_height_px() + 2 * quiet_zone_px > canvas_h
        {
            return Err(Error::domain(
                "frame layout",
                format!(
                    "{}x{} px grid plus {} px quiet zone exceeds {}x{} canvas",
                    layout.grid_width_px(),
                    layout.grid_height_px(),
                    quiet_zone_px,
                    canvas_w,
                    canvas_h
                ),
            ));
        }
        Ok(layout)
    }

    pub fn capacity(&self) -> usize {
        self.data_cols * self.data_rows
    }

    pub fn data_cols(&self) -> usize {
        self.data_cols
    }

    pub fn data_rows(&self) -> usize {
        self.data_rows
    }

    pub fn cell_px(&self) -> usize {
        self.cell_px
    }

    pub fn border_cells(&self) -> usize {
        self.border_cells
    }

    pub fn quiet_zone_px(&self) -> usize {
        self.quiet_zone_px
    }

    pub fn canvas_size(&self) -> (usize, usize) {
        (self.canvas_w, self.canvas_h)
    }

    /// Cells across, ring included.
    pub fn grid_cols(&self) -> usize {
        self.data_cols + 2 * self.border_cells
    }

    pub fn grid_rows(&self) -> usize {
        self.data_rows + 2 * self.border_cells
    }

    pub fn grid_width_px(&self) -> usize {
        self.grid_cols() * self.cell_px
    }

    pub fn grid_height_px(&self) -> usize {
        self.grid_rows() * self.cell_px
    }

    /// Canvas box occupied by the ring's outer edge.
    pub fn ring_box(&self) -> RoiBox {
        let x0 = (self.canvas_w - self.grid_width_px()) / 2;
        let y0 = (self.canvas_h - self.grid_height_px()) / 2;
        RoiBox {
            x0,
            y0,
            x1: x0 + self.grid_width_px(),
            y1: y0 + self.grid_height_px(),
        }
    }

    fn is_ring_cell(&self, gx: usize, gy: usize) -> bool {
        let b = self.border_cells;
        gx < b || gy < b || gx >= b + self.data_cols || gy >= b + self.data_rows
    }
}

/// Exactly one frame's worth of bits, row-major over the data cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFrame {
    layout: FrameLayout,
    bits: Vec<bool>,
    padding: usize,
}

impl BitFrame {
    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of zero bits appended after the payload.
    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn payload(&self) -> &[bool] {
        &self.bits[..self.bits.len() - self.padding]
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl RoiBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub bits: Vec<bool>,
    /// `|cell mean − threshold|` for each data cell.
    pub per_cell_margin: Vec<f64>,
    pub threshold: f64,
    pub roi_found: bool,
    pub roi: Option<RoiBox>,
    pub success_rate_vs_reference: Option<f64>,
}

impl DecodeReport {
    fn not_found() -> Self {
        Self {
            bits: Vec::new(),
            per_cell_margin: Vec::new(),
            threshold: f64::NAN,
            roi_found: false,
            roi: None,
            success_rate_vs_reference: None,
        }
    }
}

pub fn encode_frame(payload: &[bool], layout: &FrameLayout) -> Result<BitFrame> {
    let capacity = layout.capacity();
    if payload.len() > capacity {
        return Err(Error::Capacity {
            len: payload.len(),
            capacity,
        });
    }
    let mut bits = payload.to_vec();
    bits.resize(capacity, false);
    Ok(BitFrame {
        layout: *layout,
        bits,
        padding: capacity - payload.len(),
    })
}

/// Renders a frame: bit 1 → 0.0, bit 0 → 1.0, black ring, white elsewhere.
pub fn rasterize_frame(frame: &BitFrame) -> RenderedImage {
    let layout = &frame.layout;
    let (w, h) = layout.canvas_size();
    let ring = layout.ring_box();
    let cell = layout.cell_px;
    let b = layout.border_cells;
    RenderedImage::from_fn(w, h, |x, y| {
        if x < ring.x0 || x >= ring.x1 || y < ring.y0 || y >= ring.y1 {
            return 1.0;
        }
        let gx = (x - ring.x0) / cell;
        let gy = (y - ring.y0) / cell;
        if layout.is_ring_cell(gx, gy) {
            return 0.0;
        }
        let bit = frame.bits[(gy - b) * layout.data_cols + (gx - b)];
        if bit {
            0.0
        } else {
            1.0
        }
    })
}

/// Minimum intensity spread for an image to be searched at all.
const MIN_CONTRAST: f64 = 0.02;
/// Edge-refinement band as a fraction of the smaller box side.
const EDGE_BAND_FRACTION: f64 = 0.03;
/// Mean-filter radii tried for the coarse search, finest first.
const COARSE_BLUR_RADII: [usize; 5] = [1, 2, 3, 5, 8];

/// Finds the locator ring: the dark connected component (8-neighbour, on a
/// mean-filtered copy thresholded by Otsu) with the largest bounding box.
/// The finest filter radius whose box agrees with the next coarser one wins,
/// and the box's four edges are then snapped to the strongest white-to-black
/// step in the averaged row/column profiles of the original image.
pub fn locate_frame(image: &RenderedImage) -> Option<RoiBox> {
    if image.width() < 3 || image.height() < 3 {
        return None;
    }
    let (lo, hi) = image
        .pixels()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(p), hi.max(p))
        });
    if hi - lo < MIN_CONTRAST {
        return None;
    }
    // a noise cluster changes shape with the smoothing scale; the ring does not
    let coarse_at = |radius: usize| {
        let smooth = box_blur(image, radius);
        let threshold = otsu_threshold(&smooth);
        let dark: Vec<bool> = smooth.pixels().iter().map(|&p| p < threshold).collect();
        largest_component_box(&dark, image.width(), image.height())
            .filter(|bb| bb.width() >= 3 && bb.height() >= 3)
    };
    let mut prev: Option<(usize, RoiBox)> = None;
    let mut chosen = None;
    for &radius in &COARSE_BLUR_RADII {
        let Some(bb) = coarse_at(radius) else {
            continue;
        };
        if let Some((r, p)) = prev {
            if boxes_agree(p, bb, radius + 1) {
                chosen = Some((r, p));
                break;
            }
        }
        prev = Some((radius, bb));
    }
    let (radius, coarse) = chosen.or(prev)?;
    Some(refine_box(image, coarse, radius))
}

fn boxes_agree(a: RoiBox, b: RoiBox, tol: usize) -> bool {
    a.x0.abs_diff(b.x0) <= tol
        && a.y0.abs_diff(b.y0) <= tol
        && a.x1.abs_diff(b.x1) <= tol
        && a.y1.abs_diff(b.y1) <= tol
}

fn largest_component_box(mask: &[bool], w: usize, h: usize) -> Option<RoiBox> {
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut best: Option<(usize, usize, RoiBox)> = None;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut count = 0;
        let mut bb = RoiBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = (i % w, i / w);
            bb.x0 = bb.x0.min(x);
            bb.y0 = bb.y0.min(y);
            bb.x1 = bb.x1.max(x + 1);
            bb.y1 = bb.y1.max(y + 1);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        let area = bb.width() * bb.height();
        if best.is_none_or(|(a, c, _)| (area, count) > (a, c)) {
            best = Some((area, count, bb));
        }
    }
    best.map(|(_, _, bb)| bb)
}

fn refine_box(image: &RenderedImage, coarse: RoiBox, blur_radius: usize) -> RoiBox {
    let band =
        ((coarse.width().min(coarse.height()) as f64 * EDGE_BAND_FRACTION).round() as usize).max(1);
    // profiles are averaged over the middle half of the opposite span so the
    // corners (where noise blobs tend to attach) do not dominate
    let mid = |a: usize, b: usize| (a + (b - a) / 4, b - (b - a) / 4);
    let (ry0, ry1) = mid(coarse.y0, coarse.y1);
    let (rx0, rx1) = mid(coarse.x0, coarse.x1);
    let col_profile: Vec<f64> = (0..image.width())
        .map(|x| (ry0..ry1).map(|y| image.get(x, y)).sum::<f64>() / (ry1 - ry0) as f64)
        .collect();
    let row_profile: Vec<f64> = (0..image.height())
        .map(|y| image.row(y)[rx0..rx1].iter().sum::<f64>() / (rx1 - rx0) as f64)
        .collect();
    let x0 = snap_edge(&col_profile, coarse.x0, band, blur_radius, true);
    let x1 = snap_edge(&col_profile, coarse.x1, band, blur_radius, false);
    let y0 = snap_edge(&row_profile, coarse.y0, band, blur_radius, true);
    let y1 = snap_edge(&row_profile, coarse.y1, band, blur_radius, false);
    if x1 > x0 + 1 && y1 > y0 + 1 {
        RoiBox { x0, y0, x1, y1 }
    } else {
        coarse
    }
}

/// Boundary index `c` (between samples `c-1` and `c`) near `guess` with the
/// largest outside-minus-inside mean over `band` samples on either side.
/// `leading` means the dark side lies at and after `c`.
fn snap_edge(profile: &[f64], guess: usize, band: usize, slack: usize, leading: bool) -> usize {
    let n = profile.len();
    let mean = |a: usize, b: usize| profile[a..b].iter().sum::<f64>() / (b - a) as f64;
    let reach = 2 * band + 1 + slack;
    let lo = guess.saturating_sub(reach).max(1);
    let hi = (guess + reach).min(n - 1);
    let mut best = (f64::NEG_INFINITY, guess);
    for c in lo..=hi {
        let before = mean(c.saturating_sub(band), c);
        let after = mean(c, (c + band).min(n));
        let step = if leading {
            before - after
        } else {
            after - before
        };
        // ties resolve to the candidate nearest the coarse guess
        let better = step > best.0 + 1e-12
            || ((step - best.0).abs() <= 1e-12 && c.abs_diff(guess) < best.1.abs_diff(guess));
        if better {
            best = (step, c);
        }
    }
    best.1
}

/// Crops the located ring's bounding box, or `None` when no ring is visible.
pub fn extract_roi(image: &RenderedImage) -> Option<RenderedImage> {
    let b = locate_frame(image)?;
    image.crop(b.x0, b.y0, b.width(), b.height()).ok()
}

/// Bilinear resampling of a ROI to the layout's nominal grid size.
pub fn rescale_roi(roi: &RenderedImage, layout: &FrameLayout) -> Result<RenderedImage> {
    resize_bilinear(roi, layout.grid_width_px(), layout.grid_height_px())
}

/// Mean over the central half of every grid cell of a nominal-size image.
fn cell_means(nominal: &RenderedImage, layout: &FrameLayout) -> Vec<f64> {
    let c = layout.cell_px;
    let inset = if c >= 4 { c / 4 } else { 0 };
    let mut out = Vec::with_capacity(layout.grid_cols() * layout.grid_rows());
    for gy in 0..layout.grid_rows() {
        for gx in 0..layout.grid_cols() {
            let (x0, y0) = (gx * c + inset, gy * c + inset);
            out.push(nominal.region_mean(x0, y0, x0 + c - 2 * inset, y0 + c - 2 * inset));
        }
    }
    out
}

/// Mean of the band one cell wide just outside `roi`, clipped to the image.
fn surround_mean(image: &RenderedImage, roi: RoiBox, band: usize) -> Option<f64> {
    let x0 = roi.x0.saturating_sub(band);
    let y0 = roi.y0.saturating_sub(band);
    let x1 = (roi.x1 + band).min(image.width());
    let y1 = (roi.y1 + band).min(image.height());
    let (mut sum, mut n) = (0.0, 0usize);
    for y in y0..y1 {
        for x in x0..x1 {
            if x < roi.x0 || x >= roi.x1 || y < roi.y0 || y >= roi.y1 {
                sum += image.get(x, y);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Otsu's criterion on weighted scalar samples. The threshold is the
/// midpoint of the two adjacent distinct values at the best split; a
/// single-valued set falls back to 0.5.
pub fn weighted_otsu(samples: &[(f64, f64)]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_w: f64 = sorted.iter().map(|s| s.1).sum();
    let total_m: f64 = sorted.iter().map(|s| s.0 * s.1).sum();
    let (mut w0, mut m0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0.5);
    for i in 0..sorted.len().saturating_sub(1) {
        w0 += sorted[i].1;
        m0 += sorted[i].0 * sorted[i].1;
        if sorted[i + 1].0 == sorted[i].0 {
            continue;
        }
        let w1 = total_w - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let diff = m0 / w0 - (total_m - m0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best.0 {
            best = (between, 0.5 * (sorted[i].0 + sorted[i + 1].0));
        }
    }
    best.1
}

/// Full receive pipeline. When `reference` is given it is compared against
/// the first `reference.len()` decoded bits.
pub fn decode_frame(
    image: &RenderedImage,
    layout: &FrameLayout,
    reference: Option<&[bool]>,
) -> Result<DecodeReport> {
    if let Some(r) = reference {
        if r.len() > layout.capacity() {
            return Err(Error::Capacity {
                len: r.len(),
                capacity: layout.capacity(),
            });
        }
    }
    let Some(roi_box) = locate_frame(image) else {
        return Ok(DecodeReport::not_found());
    };
    let roi = image.crop(roi_box.x0, roi_box.y0, roi_box.width(), roi_box.height())?;
    let nominal = rescale_roi(&roi, layout)?;
    let means = cell_means(&nominal, layout);

    let gc = layout.grid_cols();
    let b = layout.border_cells;
    let mut data = Vec::with_capacity(layout.capacity());
    let mut samples = Vec::with_capacity(means.len() + 1);
    let mut ring_cells = 0usize;
    for (i, &m) in means.iter().enumerate() {
        let (gx, gy) = (i % gc, i / gc);
        samples.push((m, 1.0));
        if layout.is_ring_cell(gx, gy) {
            ring_cells += 1;
        } else {
            debug_assert_eq!(data.len(), (gy - b) * layout.data_cols + (gx - b));
            data.push(m);
        }
    }
    // the quiet zone stands in for a white reference as heavy as the ring, so
    // all-black or all-white payloads still see two classes
    let band = (roi_box.width() / gc).max(1);
    if let Some(white) = surround_mean(image, roi_box, band) {
        samples.push((white, ring_cells as f64));
    }
    let threshold = weighted_otsu(&samples);

    let bits: Vec<bool> = data.iter().map(|&m| m < threshold).collect();
    let per_cell_margin = data.iter().map(|&m| (m - threshold).abs()).collect();
    let success_rate_vs_reference = match reference {
        Some(r) => Some(success_rate(r, &bits[..r.len()])?),
        None => None,
    };
    Ok(DecodeReport {
        bits,
        per_cell_margin,
        threshold,
        roi_found: true,
        roi: Some(roi_box),
        success_rate_vs_reference,
    })
}

/// Fraction of positions where `sent` and `received` agree. Empty inputs
/// agree trivially.
pub fn success_rate(sent: &[bool], received: &[bool]) -> Result<f64> {
    if sent.len() != received.len() {
        return Err(Error::LengthMismatch {
            left: sent.len(),
            right: received.len(),
        });
    }
    if sent.is_empty() {
        return Ok(1.0);
    }
    let matches = sent.iter().zip(received).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / sent.len() as f64)
}

/// Parses an ASCII `0`/`1` string; ASCII whitespace is ignored.
pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .filter(|c| !c.is_ascii_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::BitString(other)),
        })
        .collect()
}

pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Bytes to bits, MSB first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&byte| (0..8).rev().map(move |k| byte >> k & 1 == 1))
        .collect()
}

/// Whole bytes from the front of `bits`, MSB first; a trailing partial byte
/// is dropped.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| acc << 1 | b as u8))
        .collect()
}

/// Recovered text: whole bytes with trailing NUL padding removed.
pub fn bits_to_text(bits: &[bool]) -> String {
    let mut bytes = bits_to_bytes(bits);
    while bytes.last() == Some(&0) {
        bytes.pop();
    }
    String::from_utf8_lossy(&bytes).into_owned()
}
