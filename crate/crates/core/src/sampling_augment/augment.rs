//! Seeded training augmentation for (RGB patch, mask) pairs.
//!
//! Geometric transforms act on both image and mask (bilinear for the image,
//! nearest-neighbour for the mask, reflected borders). Photometric transforms
//! touch the image only. Order is fixed: rotation, 90° rotation, flips,
//! scaling, then gamma, contrast, equalization, solarization, HSV shift,
//! blur. Each transform draws its own gate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, BinaryMask, Raster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub rotate_prob: f64,
    pub rotate_degrees: [f64; 2],
    /// Counter-clockwise quarter turns, count drawn from {1, 2, 3}.
    pub rot90_prob: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub scale_prob: f64,
    pub scale_range: [f64; 2],
    pub gamma_prob: f64,
    pub gamma_range: [f64; 2],
    pub contrast_prob: f64,
    pub contrast_range: [f64; 2],
    pub equalize_prob: f64,
    pub solarize_prob: f64,
    pub solarize_threshold: [f64; 2],
    pub hsv_prob: f64,
    /// Hue shift bound in degrees, applied as ±.
    pub hue_shift_degrees: f64,
    /// Relative saturation change bound, applied as ±.
    pub saturation_shift: f64,
    /// Relative value change bound, applied as ±.
    pub value_shift: f64,
    pub blur_prob: f64,
    pub blur_sigma: [f64; 2],
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rotate_prob: 0.5,
            rotate_degrees: [-45.0, 45.0],
            rot90_prob: 0.5,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            scale_prob: 0.5,
            scale_range: [0.8, 1.25],
            gamma_prob: 0.5,
            gamma_range: [0.7, 1.5],
            contrast_prob: 0.5,
            contrast_range: [0.75, 1.25],
            equalize_prob: 0.5,
            solarize_prob: 0.5,
            solarize_threshold: [128.0, 255.0],
            hsv_prob: 0.5,
            hue_shift_degrees: 10.0,
            saturation_shift: 0.15,
            value_shift: 0.15,
            blur_prob: 0.5,
            blur_sigma: [0.1, 2.0],
        }
    }
}

impl AugmentationConfig {
    /// Every gate closed.
    pub fn disabled() -> Self {
        Self {
            rotate_prob: 0.0,
            rot90_prob: 0.0,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            scale_prob: 0.0,
            gamma_prob: 0.0,
            contrast_prob: 0.0,
            equalize_prob: 0.0,
            solarize_prob: 0.0,
            hsv_prob: 0.0,
            blur_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("rotate_prob", self.rotate_prob),
            ("rot90_prob", self.rot90_prob),
            ("hflip_prob", self.hflip_prob),
            ("vflip_prob", self.vflip_prob),
            ("scale_prob", self.scale_prob),
            ("gamma_prob", self.gamma_prob),
            ("contrast_prob", self.contrast_prob),
            ("equalize_prob", self.equalize_prob),
            ("solarize_prob", self.solarize_prob),
            ("hsv_prob", self.hsv_prob),
            ("blur_prob", self.blur_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let ranges = [
            ("rotate_degrees", self.rotate_degrees),
            ("scale_range", self.scale_range),
            ("gamma_range", self.gamma_range),
            ("contrast_range", self.contrast_range),
            ("solarize_threshold", self.solarize_threshold),
            ("blur_sigma", self.blur_sigma),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} = [{lo}, {hi}] is empty")));
            }
        }
        let positive = [
            ("scale_range", self.scale_range[0]),
            ("gamma_range", self.gamma_range[0]),
            ("blur_sigma", self.blur_sigma[0]),
        ];
        for (name, lo) in positive {
            if !(lo > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let bounds = [
            ("hue_shift_degrees", self.hue_shift_degrees, 180.0),
            ("saturation_shift", self.saturation_shift, 1.0),
            ("value_shift", self.value_shift, 1.0),
        ];
        for (name, v, max) in bounds {
            if !(0.0..=max).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, {max}]")));
            }
        }
        Ok(())
    }
}

/// A transform that fired, with its drawn parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AppliedTransform {
    Rotate { degrees: f64 },
    Rot90 { quarter_turns: u8 },
    HorizontalFlip,
    VerticalFlip,
    Scale { factor: f64 },
    Gamma { gamma: f64 },
    Contrast { factor: f64 },
    Equalize,
    Solarize { threshold: u8 },
    HsvShift { hue_degrees: f64, saturation: f64, value: f64 },
    GaussianBlur { sigma: f64 },
}

pub fn apply_augmentation(
    patch: &Raster,
    mask: &BinaryMask,
    config: &AugmentationConfig,
    seed: u64,
) -> Result<(Raster, BinaryMask)> {
    apply_augmentation_traced(patch, mask, config, seed).map(|(p, m, _)| (p, m))
}

/// Like [`apply_augmentation`], also reporting which transforms fired.
pub fn apply_augmentation_traced(
    patch: &Raster,
    mask: &BinaryMask,
    config: &AugmentationConfig,
    seed: u64,
) -> Result<(Raster, BinaryMask, Vec<AppliedTransform>)> {
    config.validate()?;
    ensure_same_shape(patch.shape(), mask.shape())?;
    if patch.channels() != 3 {
        return Err(Error::InvalidDimensions {
            height: patch.height(),
            width: patch.width(),
            channels: patch.channels(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = patch.clone();
    let mut m = mask.clone();
    let mut applied = Vec::new();
    let uniform = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| if lo < hi { rng.gen_range(lo..=hi) } else { lo };

    if rng.gen_bool(config.rotate_prob) {
        let degrees = uniform(&mut rng, config.rotate_degrees);
        (img, m) = rotate(&img, &m, degrees);
        applied.push(AppliedTransform::Rotate { degrees });
    }
    if rng.gen_bool(config.rot90_prob) && img.width() == img.height() {
        let quarter_turns = rng.gen_range(1..=3u8);
        for _ in 0..quarter_turns {
            (img, m) = rot90(&img, &m);
        }
        applied.push(AppliedTransform::Rot90 { quarter_turns });
    }
    if rng.gen_bool(config.hflip_prob) {
        (img, m) = hflip(&img, &m);
        applied.push(AppliedTransform::HorizontalFlip);
    }
    if rng.gen_bool(config.vflip_prob) {
        (img, m) = vflip(&img, &m);
        applied.push(AppliedTransform::VerticalFlip);
    }
    if rng.gen_bool(config.scale_prob) {
        let factor = uniform(&mut rng, config.scale_range);
        (img, m) = scale(&img, &m, factor);
        applied.push(AppliedTransform::Scale { factor });
    }

    if rng.gen_bool(config.gamma_prob) {
        let gamma = uniform(&mut rng, config.gamma_range);
        adjust_gamma(&mut img, gamma);
        applied.push(AppliedTransform::Gamma { gamma });
    }
    if rng.gen_bool(config.contrast_prob) {
        let factor = uniform(&mut rng, config.contrast_range);
        adjust_contrast(&mut img, factor);
        applied.push(AppliedTransform::Contrast { factor });
    }
    if rng.gen_bool(config.equalize_prob) {
        equalize(&mut img);
        applied.push(AppliedTransform::Equalize);
    }
    if rng.gen_bool(config.solarize_prob) {
        let threshold = uniform(&mut rng, config.solarize_threshold).round().clamp(0.0, 255.0) as u8;
        solarize(&mut img, threshold);
        applied.push(AppliedTransform::Solarize { threshold });
    }
    if rng.gen_bool(config.hsv_prob) {
        let h = config.hue_shift_degrees;
        let (s, v) = (config.saturation_shift, config.value_shift);
        let hue_degrees = uniform(&mut rng, [-h, h]);
        let saturation = uniform(&mut rng, [-s, s]);
        let value = uniform(&mut rng, [-v, v]);
        shift_hsv(&mut img, hue_degrees, saturation, value);
        applied.push(AppliedTransform::HsvShift {
            hue_degrees,
            saturation,
            value,
        });
    }
    if rng.gen_bool(config.blur_prob) {
        let sigma = uniform(&mut rng, config.blur_sigma);
        img = gaussian_blur(&img, sigma);
        applied.push(AppliedTransform::GaussianBlur { sigma });
    }
    Ok((img, m, applied))
}

/// Folds a continuous coordinate into `[0, n-1]` by mirroring at the edges.
fn reflect(x: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let last = (n - 1) as f64;
    let period = 2.0 * last;
    let y = x.rem_euclid(period);
    if y > last {
        period - y
    } else {
        y
    }
}

/// Resamples image and mask through an inverse map from output to source
/// coordinates (pixel-index space).
fn warp(img: &Raster, mask: &BinaryMask, inverse: impl Fn(f64, f64) -> (f64, f64)) -> (Raster, BinaryMask) {
    let (h, w) = img.shape();
    let ch = img.channels();
    let mut out = vec![0u8; h * w * ch];
    let mut out_mask = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let (sy, sx) = inverse(r as f64, c as f64);
            let (y, x) = (reflect(sy, h), reflect(sx, w));

            let (ny, nx) = (y.round() as usize, x.round() as usize);
            out_mask[r * w + c] = mask.get(ny.min(h - 1), nx.min(w - 1));

            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let (p00, p01, p10, p11) = (img.pixel(y0, x0), img.pixel(y0, x1), img.pixel(y1, x0), img.pixel(y1, x1));
            for k in 0..ch {
                let top = p00[k] as f64 * (1.0 - fx) + p01[k] as f64 * fx;
                let bottom = p10[k] as f64 * (1.0 - fx) + p11[k] as f64 * fx;
                out[(r * w + c) * ch + k] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    (
        Raster::new(w, h, ch, out).expect("warp keeps shape"),
        BinaryMask::new(w, h, out_mask).expect("warp keeps mask binary"),
    )
}

fn center(img: &Raster) -> (f64, f64) {
    ((img.height() as f64 - 1.0) / 2.0, (img.width() as f64 - 1.0) / 2.0)
}

/// Counter-clockwise rotation about the patch center.
fn rotate(img: &Raster, mask: &BinaryMask, degrees: f64) -> (Raster, BinaryMask) {
    let (cy, cx) = center(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    // Rows grow downward, so a visual CCW turn maps output (dx, dy) back
    // through the clockwise matrix in (x, -y) coordinates.
    warp(img, mask, |r, c| {
        let (dx, dy) = (c - cx, cy - r);
        let sx = cos * dx + sin * dy;
        let sy = -sin * dx + cos * dy;
        (cy - sy, cx + sx)
    })
}

/// Zoom about the center; factors above 1 crop, below 1 reflect-pad.
fn scale(img: &Raster, mask: &BinaryMask, factor: f64) -> (Raster, BinaryMask) {
    let (cy, cx) = center(img);
    warp(img, mask, |r, c| (cy + (r - cy) / factor, cx + (c - cx) / factor))
}

fn permute(img: &Raster, mask: &BinaryMask, out_h: usize, out_w: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> (Raster, BinaryMask) {
    let ch = img.channels();
    let mut out = Vec::with_capacity(out_h * out_w * ch);
    let mut out_mask = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        for c in 0..out_w {
            let (sr, sc) = src(r, c);
            out.extend_from_slice(img.pixel(sr, sc));
            out_mask.push(mask.get(sr, sc));
        }
    }
    (
        Raster::new(out_w, out_h, ch, out).expect("permutation keeps size"),
        BinaryMask::new(out_w, out_h, out_mask).expect("permutation keeps mask binary"),
    )
}

/// One counter-clockwise quarter turn.
fn rot90(img: &Raster, mask: &BinaryMask) -> (Raster, BinaryMask) {
    let (h, w) = img.shape();
    permute(img, mask, w, h, |r, c| (c, w - 1 - r))
}

fn hflip(img: &Raster, mask: &BinaryMask) -> (Raster, BinaryMask) {
    let (h, w) = img.shape();
    permute(img, mask, h, w, |r, c| (r, w - 1 - c))
}

fn vflip(img: &Raster, mask: &BinaryMask) -> (Raster, BinaryMask) {
    let (h, w) = img.shape();
    permute(img, mask, h, w, |r, c| (h - 1 - r, c))
}

fn apply_lut(img: &mut Raster, lut: &[u8; 256]) {
    img.data_mut().iter_mut().for_each(|v| *v = lut[*v as usize]);
}

fn adjust_gamma(img: &mut Raster, gamma: f64) {
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        *out = (255.0 * (v as f64 / 255.0).powf(gamma)).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(img, &lut);
}

/// Blends each sample with the mean luminance of the patch.
fn adjust_contrast(img: &mut Raster, factor: f64) {
    let n = (img.width() * img.height()) as f64;
    let mean = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .sum::<f64>()
        / n;
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        *out = (mean + factor * (v as f64 - mean)).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(img, &lut);
}

/// Per-channel histogram equalization.
fn equalize(img: &mut Raster) {
    let ch = img.channels();
    let n = img.width() * img.height();
    for k in 0..ch {
        let mut hist = [0usize; 256];
        for p in img.data().chunks_exact(ch) {
            hist[p[k] as usize] += 1;
        }
        let mut cdf = [0usize; 256];
        let mut acc = 0;
        for (v, &count) in hist.iter().enumerate() {
            acc += count;
            cdf[v] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
        if n == cdf_min {
            continue;
        }
        let mut lut = [0u8; 256];
        for (v, out) in lut.iter_mut().enumerate() {
            let scaled = (cdf[v].saturating_sub(cdf_min)) as f64 / (n - cdf_min) as f64 * 255.0;
            *out = scaled.round().clamp(0.0, 255.0) as u8;
        }
        for p in img.data_mut().chunks_exact_mut(ch) {
            p[k] = lut[p[k] as usize];
        }
    }
}

/// Inverts samples at or above `threshold`.
fn solarize(img: &mut Raster, threshold: u8) {
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        *out = if v as u8 >= threshold { 255 - v as u8 } else { v as u8 };
    }
    apply_lut(img, &lut);
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Hue rotated by `hue_degrees`; saturation and value scaled by `1 + shift`.
fn shift_hsv(img: &mut Raster, hue_degrees: f64, saturation: f64, value: f64) {
    for p in img.data_mut().chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0);
        let (r, g, b) = hsv_to_rgb(
            h + hue_degrees,
            (s * (1.0 + saturation)).clamp(0.0, 1.0),
            (v * (1.0 + value)).clamp(0.0, 1.0),
        );
        for (dst, x) in p.iter_mut().zip([r, g, b]) {
            *dst = (x * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Separable Gaussian blur, radius `ceil(3σ)`, mirrored borders.
fn gaussian_blur(img: &Raster, sigma: f64) -> Raster {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.into_iter().map(|t| t / norm).collect();
    let (h, w) = img.shape();
    let ch = img.channels();
    let mirror = |i: isize, n: usize| reflect(i as f64, n) as usize;

    let mut tmp = vec![0f64; h * w * ch];
    for r in 0..h {
        for c in 0..w {
            for (t, &k) in taps.iter().enumerate() {
                let sc = mirror(c as isize + t as isize - radius, w);
                let src = img.pixel(r, sc);
                for j in 0..ch {
                    tmp[(r * w + c) * ch + j] += k * src[j] as f64;
                }
            }
        }
    }
    let mut out = vec![0u8; h * w * ch];
    for r in 0..h {
        for c in 0..w {
            for j in 0..ch {
                let acc: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(t, &k)| k * tmp[(mirror(r as isize + t as isize - radius, h) * w + c) * ch + j])
                    .sum();
                out[(r * w + c) * ch + j] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Raster::new(w, h, ch, out).expect("blur keeps shape")
}
