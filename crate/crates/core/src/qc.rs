//! Image-group quality control.
//!
//! Three checks run on every panel of a group:
//!
//! * **Duplicates**: 64-bit DCT perceptual hashes, compared pairwise by
//!   Hamming distance.
//! * **Blankness**: SSIM against an all-white reference plus an ink-coverage
//!   floor.
//! * **Detail**: mean squared forward-difference gradient of the luma.
//!
//! # pHash layout
//!
//! 1. Luma (BT.601) in `[0, 255]`.
//! 2. Area-weighted box resample to 32×32.
//! 3. Orthonormal 2-D DCT-II over the 32×32 block.
//! 4. Keep coefficients `C[u][v]` for `u, v ∈ 1..=8` (row 0 and column 0,
//!    which carry the DC term and pure-axis averages, are skipped).
//! 5. Median = mean of the 32nd and 33rd smallest of those 64 values.
//! 6. Bit `(u−1)·8 + (v−1)` (LSB first) is set iff `C[u][v] > median`.

use serde::{Deserialize, Serialize};

use crate::image_buf::ImageBuf;
use crate::render::ImageGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PHash(pub u64);

impl PHash {
    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

const HASH_GRID: usize = 32;
const HASH_BAND: usize = 8;

pub fn phash(img: &ImageBuf) -> PHash {
    let small = box_resample(&img.luma(), img.width() as usize, img.height() as usize, HASH_GRID, HASH_GRID);
    let coeffs = dct2_square(&small, HASH_GRID);
    let mut band = Vec::with_capacity(HASH_BAND * HASH_BAND);
    for u in 1..=HASH_BAND {
        for v in 1..=HASH_BAND {
            band.push(coeffs[u * HASH_GRID + v]);
        }
    }
    let mut sorted = band.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[31] + sorted[32]) / 2.0;
    let bits = band.iter().enumerate().fold(0u64, |acc, (i, &c)| if c > median { acc | (1 << i) } else { acc });
    PHash(bits)
}

pub fn hamming(a: PHash, b: PHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Area-weighted resample of a single-channel image.
fn box_resample(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let horizontal = resample_axis(src, w, h, out_w, true);
    resample_axis(&horizontal, out_w, h, out_h, false)
}

fn resample_axis(src: &[f64], w: usize, h: usize, out_len: usize, along_x: bool) -> Vec<f64> {
    let in_len = if along_x { w } else { h };
    let scale = in_len as f64 / out_len as f64;
    // Precompute (source index, weight) spans per output index.
    let spans: Vec<Vec<(usize, f64)>> = (0..out_len)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = lo + scale;
            let mut span = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < in_len {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    span.push((i, overlap / scale));
                }
                i += 1;
            }
            span
        })
        .collect();
    if along_x {
        let mut out = vec![0.0; out_len * h];
        for y in 0..h {
            for (o, span) in spans.iter().enumerate() {
                out[y * out_len + o] = span.iter().map(|&(i, wgt)| src[y * w + i] * wgt).sum();
            }
        }
        out
    } else {
        let mut out = vec![0.0; w * out_len];
        for (o, span) in spans.iter().enumerate() {
            for x in 0..w {
                out[o * w + x] = span.iter().map(|&(i, wgt)| src[i * w + x] * wgt).sum();
            }
        }
        out
    }
}

/// Orthonormal separable 2-D DCT-II of an `n × n` row-major block.
fn dct2_square(block: &[f64], n: usize) -> Vec<f64> {
    let basis: Vec<f64> = (0..n)
        .flat_map(|k| {
            let alpha = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n).map(move |i| {
                alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
            })
        })
        .collect();
    // rows: tmp[y][k] = Σ_x block[y][x]·B[k][x]
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for k in 0..n {
            tmp[y * n + k] = (0..n).map(|x| block[y * n + x] * basis[k * n + x]).sum();
        }
    }
    // columns: out[u][k] = Σ_y tmp[y][k]·B[u][y]
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for k in 0..n {
            out[u * n + k] = (0..n).map(|y| tmp[y * n + k] * basis[u * n + y]).sum();
        }
    }
    out
}

const SSIM_WINDOW: usize = 8;
const SSIM_STRIDE: usize = 4;
const SSIM_L: f64 = 255.0;

/// Mean SSIM of the luma against an all-white image of the same size, over
/// 8×8 windows at stride 4. Images smaller than a window use one window
/// spanning the whole image.
pub fn ssim_vs_white(img: &ImageBuf) -> f64 {
    let c1 = (0.01 * SSIM_L).powi(2);
    let c2 = (0.03 * SSIM_L).powi(2);
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return 1.0;
    }
    let luma = img.luma();
    // Summed-area tables of x and x² with a zero row/column.
    let stride = w + 1;
    let mut sum = vec![0.0; (w + 1) * (h + 1)];
    let mut sq = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let (mut row, mut row_sq) = (0.0, 0.0);
        for x in 0..w {
            let v = luma[y * w + x];
            row += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
        }
    }
    let rect = |t: &[f64], x0: usize, y0: usize, x1: usize, y1: usize| {
        t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0]
    };
    let (win_w, win_h) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let n = (win_w * win_h) as f64;
    let white = SSIM_L;
    let mut total = 0.0;
    let mut windows = 0usize;
    let mut y0 = 0;
    while y0 + win_h <= h {
        let mut x0 = 0;
        while x0 + win_w <= w {
            let s = rect(&sum, x0, y0, x0 + win_w, y0 + win_h);
            let s2 = rect(&sq, x0, y0, x0 + win_w, y0 + win_h);
            let mu = s / n;
            let var = (s2 / n - mu * mu).max(0.0);
            // Reference window is constant white: σ_y = σ_xy = 0.
            let num = (2.0 * mu * white + c1) * c2;
            let den = (mu * mu + white * white + c1) * (var + c2);
            total += num / den;
            windows += 1;
            x0 += SSIM_STRIDE;
        }
        y0 += SSIM_STRIDE;
    }
    total / windows as f64
}

/// Mean over pixels of `dx² + dy²` using forward differences on luma scaled
/// to `[0, 1]`; differences past the last row/column are zero.
pub fn gradient_energy(img: &ImageBuf) -> f64 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return 0.0;
    }
    let luma: Vec<f64> = img.luma().into_iter().map(|v| v / 255.0).collect();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = luma[y * w + x];
            if x + 1 < w {
                let d = luma[y * w + x + 1] - v;
                total += d * d;
            }
            if y + 1 < h {
                let d = luma[(y + 1) * w + x] - v;
                total += d * d;
            }
        }
    }
    total / (w * h) as f64
}

/// Luma below this counts as ink (non-background).
pub const INK_LUMA: f64 = 245.0;

pub fn ink_fraction(img: &ImageBuf) -> f64 {
    let luma = img.luma();
    if luma.is_empty() {
        return 0.0;
    }
    luma.iter().filter(|&&v| v < INK_LUMA).count() as f64 / luma.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlankMode {
    /// `ssim ≥ blank_ssim` or ink fraction below `min_ink_fraction`.
    Content,
    /// `ssim < literal_ssim` (the comparator as originally worded).
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub dup_threshold: u32,
    pub blank_mode: BlankMode,
    pub blank_ssim: f64,
    pub min_ink_fraction: f64,
    pub literal_ssim: f64,
    pub energy_threshold: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            dup_threshold: 10,
            blank_mode: BlankMode::Content,
            blank_ssim: 0.98,
            min_ink_fraction: 0.005,
            literal_ssim: 0.1,
            energy_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QcReason {
    DuplicatePair { i: usize, j: usize, distance: u32 },
    Blank { panel: usize, score: f64 },
    LowDetail { panel: usize, energy: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcVerdict {
    pub accepted: bool,
    pub reasons: Vec<QcReason>,
}

impl QcVerdict {
    pub fn from_reasons(reasons: Vec<QcReason>) -> Self {
        Self { accepted: reasons.is_empty(), reasons }
    }
}

/// Per-panel measurements, computed once and reused by checks and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelStats {
    pub phash: PHash,
    pub ssim_white: f64,
    pub ink: f64,
    pub energy: f64,
}

pub fn panel_stats(img: &ImageBuf) -> PanelStats {
    PanelStats { phash: phash(img), ssim_white: ssim_vs_white(img), ink: ink_fraction(img), energy: gradient_energy(img) }
}

pub fn is_blank(stats: &PanelStats, cfg: &QcConfig) -> bool {
    match cfg.blank_mode {
        BlankMode::Content => stats.ssim_white >= cfg.blank_ssim || stats.ink < cfg.min_ink_fraction,
        BlankMode::Literal => stats.ssim_white < cfg.literal_ssim,
    }
}

/// Verdict over precomputed panel statistics (panels in group order:
/// five correct then three incorrect).
pub fn qc_stats(stats: &[PanelStats], cfg: &QcConfig) -> QcVerdict {
    let mut reasons = Vec::new();
    for i in 0..stats.len() {
        for j in i + 1..stats.len() {
            let distance = hamming(stats[i].phash, stats[j].phash);
            if distance < cfg.dup_threshold {
                reasons.push(QcReason::DuplicatePair { i, j, distance });
            }
        }
    }
    for (panel, s) in stats.iter().enumerate() {
        if is_blank(s, cfg) {
            reasons.push(QcReason::Blank { panel, score: s.ssim_white });
        }
        if s.energy < cfg.energy_threshold {
            reasons.push(QcReason::LowDetail { panel, energy: s.energy });
        }
    }
    QcVerdict::from_reasons(reasons)
}

pub fn qc_group(group: &ImageGroup, cfg: &QcConfig) -> QcVerdict {
    let stats: Vec<PanelStats> = crate::par::map(&group.panels().collect::<Vec<_>>(), |p| panel_stats(p));
    qc_stats(&stats, cfg)
}
