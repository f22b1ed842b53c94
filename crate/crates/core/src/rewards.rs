//! Image rewards: a differentiable aesthetic proxy, a compressibility reward
//! and a linear brightness probe.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::buffer::Buffer;
use crate::error::{Error, Result};
use crate::renderer::io::quantize;

const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];
const W_CONTRAST: f64 = 1.0;
const W_SATURATION: f64 = 1.0;
const W_TV: f64 = 0.5;

/// zlib level used by [`compression_reward`].
pub const DEFLATE_LEVEL: u32 = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    #[serde(rename = "aes-proxy")]
    AesProxy,
    #[serde(rename = "compression")]
    Compression,
    #[serde(rename = "brightness")]
    Brightness,
}

impl RewardKind {
    pub fn name(self) -> &'static str {
        match self {
            RewardKind::AesProxy => "aes-proxy",
            RewardKind::Compression => "compression",
            RewardKind::Brightness => "brightness",
        }
    }

    pub fn differentiable(self) -> bool {
        !matches!(self, RewardKind::Compression)
    }

    pub fn evaluate(self, image: &Buffer) -> f64 {
        match self {
            RewardKind::AesProxy => aes_proxy(image),
            RewardKind::Compression => compression_reward(image),
            RewardKind::Brightness => brightness(image),
        }
    }

    /// Pathwise gradient; `None` for non-differentiable rewards.
    pub fn gradient(self, image: &Buffer) -> Option<Buffer> {
        match self {
            RewardKind::AesProxy => Some(aes_proxy_grad(image)),
            RewardKind::Brightness => Some(brightness_grad(image)),
            RewardKind::Compression => None,
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aes-proxy" => Ok(RewardKind::AesProxy),
            "compression" => Ok(RewardKind::Compression),
            "brightness" => Ok(RewardKind::Brightness),
            other => Err(Error::InvalidConfig(format!(
                "unknown reward `{other}` (expected aes-proxy, compression or brightness)"
            ))),
        }
    }
}

/// A reward with its weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub name: RewardKind,
    pub weight: f64,
}

impl RewardSpec {
    pub fn new(name: RewardKind, weight: f64) -> Self {
        RewardSpec { name, weight }
    }

    pub fn differentiable(&self) -> bool {
        self.name.differentiable()
    }

    /// Checks the spec can drive the pathwise (guidance) path.
    pub fn validate_guidance(&self) -> Result<()> {
        if !self.differentiable() {
            return Err(Error::InvalidConfig(format!(
                "reward `{}` is not differentiable and cannot be used for guidance",
                self.name
            )));
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::InvalidConfig(format!("reward weight {} must be >= 0", self.weight)));
        }
        Ok(())
    }
}

fn luminance(image: &Buffer) -> Vec<f64> {
    assert_eq!(image.channels, 3, "aesthetic proxy needs an RGB buffer");
    image
        .data
        .chunks_exact(3)
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect()
}

/// Contrast, saturation and total-variation parts of the aesthetic proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AesTerms {
    pub contrast: f64,
    pub saturation: f64,
    pub tv: f64,
}

impl AesTerms {
    pub fn score(&self) -> f64 {
        W_CONTRAST * self.contrast + W_SATURATION * self.saturation - W_TV * self.tv
    }
}

fn tv_pairs(w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let horizontal = (0..h).flat_map(move |y| (0..w.saturating_sub(1)).map(move |x| (y * w + x, y * w + x + 1)));
    let vertical = (0..h.saturating_sub(1)).flat_map(move |y| (0..w).map(move |x| (y * w + x, (y + 1) * w + x)));
    horizontal.chain(vertical)
}

pub fn aes_terms(image: &Buffer) -> AesTerms {
    let lum = luminance(image);
    let n = lum.len() as f64;
    let mean = lum.iter().sum::<f64>() / n;
    let contrast = (lum.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
    let saturation = image
        .data
        .chunks_exact(3)
        .map(|p| p[0].max(p[1]).max(p[2]) - p[0].min(p[1]).min(p[2]))
        .sum::<f64>()
        / n;
    let mut count = 0usize;
    let mut tv = 0.0;
    for (a, b) in tv_pairs(image.width, image.height) {
        tv += (lum[a] - lum[b]).abs();
        count += 1;
    }
    let tv = if count == 0 { 0.0 } else { tv / count as f64 };
    AesTerms {
        contrast,
        saturation,
        tv,
    }
}

/// `contrast + saturation - 0.5 tv` over Rec. 709 luminance.
pub fn aes_proxy(image: &Buffer) -> f64 {
    aes_terms(image).score()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Exact gradient of [`aes_proxy`]. `|.|` has derivative 0 at 0 and channel
/// ties in max/min go to the first channel.
pub fn aes_proxy_grad(image: &Buffer) -> Buffer {
    let lum = luminance(image);
    let n = lum.len() as f64;
    let mean = lum.iter().sum::<f64>() / n;
    let std = (lum.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();

    let mut d_lum: Vec<f64> = if std > 0.0 {
        lum.iter().map(|l| W_CONTRAST * (l - mean) / (n * std)).collect()
    } else {
        vec![0.0; lum.len()]
    };
    let pairs: Vec<(usize, usize)> = tv_pairs(image.width, image.height).collect();
    if !pairs.is_empty() {
        let k = W_TV / pairs.len() as f64;
        for (a, b) in pairs {
            let s = sign(lum[a] - lum[b]);
            d_lum[a] -= k * s;
            d_lum[b] += k * s;
        }
    }

    let mut grad = image.zeros_like();
    for (i, p) in image.data.chunks_exact(3).enumerate() {
        let (mut hi, mut lo) = (0, 0);
        for c in 1..3 {
            if p[c] > p[hi] {
                hi = c;
            }
            if p[c] < p[lo] {
                lo = c;
            }
        }
        let g = &mut grad.data[i * 3..i * 3 + 3];
        for c in 0..3 {
            g[c] = d_lum[i] * LUMA[c];
        }
        g[hi] += W_SATURATION / n;
        g[lo] -= W_SATURATION / n;
    }
    grad
}

/// 8-bit quantized, row-major interleaved RGB bytes.
pub fn quantized_bytes(image: &Buffer) -> Vec<u8> {
    image.data.iter().map(|&v| quantize(v)).collect()
}

pub fn compressed_len(bytes: &[u8]) -> usize {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(DEFLATE_LEVEL));
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write").len()
}

/// Negative zlib-compressed size per byte of raw 8-bit data.
///
/// Stands in for a JPEG-size reward: deflate at a pinned level is lossless and
/// bit-deterministic across platforms.
pub fn compression_reward(image: &Buffer) -> f64 {
    let bytes = quantized_bytes(image);
    -(compressed_len(&bytes) as f64) / bytes.len() as f64
}

/// Mean of all values.
pub fn brightness(image: &Buffer) -> f64 {
    image.data.iter().sum::<f64>() / image.len() as f64
}

pub fn brightness_grad(image: &Buffer) -> Buffer {
    Buffer::filled(image.width, image.height, image.channels, 1.0 / image.len() as f64)
}
