//! Low-level visual statistics of decoded frames.
//!
//! Pixels are RGB in `[0, 1]`. Grayscale uses BT.601 luma weights. Sobel
//! gradients are taken over the valid interior only (no padding). All sums
//! are strictly sequential in row-major order, so results are reproducible
//! bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::domain::FrameFeatures;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("frame is empty")]
    EmptyFrame,
    #[error("frame {width}x{height} is smaller than the 3x3 Sobel kernel")]
    TooSmall { width: usize, height: usize },
    #[error("expected {expected} pixels, got {got}")]
    PixelCount { expected: usize, got: usize },
    #[error("pixel {index} has a channel outside [0, 1]")]
    ChannelOutOfRange { index: usize },
    #[error("no frames to average")]
    NoFrames,
    #[error("stride must be >= 1")]
    InvalidStride,
    #[error("pixel scale must be finite and > 0")]
    InvalidScale,
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major RGB frame with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, FeatureError> {
        let expected = width * height;
        if pixels.len() != expected {
            return Err(FeatureError::PixelCount {
                expected,
                got: pixels.len(),
            });
        }
        if let Some(index) = pixels
            .iter()
            .position(|px| px.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(FeatureError::ChannelOutOfRange { index });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self, FeatureError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    /// 8-bit interleaved RGB, each channel divided by 255.
    pub fn from_rgb8(width: usize, height: usize, data: &[u8]) -> Result<Self, FeatureError> {
        if data.len() != width * height * 3 {
            return Err(FeatureError::PixelCount {
                expected: width * height,
                got: data.len() / 3,
            });
        }
        let pixels = data
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]].map(|v| f64::from(v) / 255.0))
            .collect();
        Self::new(width, height, pixels)
    }

    /// Decode a PNG or binary PPM file.
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let img = image::open(path).map_err(|e| FeatureError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        Self::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    fn nonempty(&self) -> Result<(), FeatureError> {
        if self.pixels.is_empty() {
            Err(FeatureError::EmptyFrame)
        } else {
            Ok(())
        }
    }
}

pub fn luma([r, g, b]: [f64; 3]) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn mean_and_population_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    // shifted by the first value so constant inputs give exactly zero spread
    let origin = values.clone().next().unwrap_or(0.0);
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), x| (n + 1, s + (x - origin)));
    let shift = sum / n as f64;
    let ss = values.fold(0.0, |acc, x| {
        let d = x - origin - shift;
        acc + d * d
    });
    (origin + shift, (ss / n as f64).sqrt())
}

/// Mean of the HSV value channel, `max(R, G, B)`.
pub fn brightness(frame: &Frame) -> Result<f64, FeatureError> {
    frame.nonempty()?;
    let sum: f64 = frame
        .pixels
        .iter()
        .map(|&[r, g, b]| r.max(g).max(b))
        .sum();
    Ok(sum / frame.pixels.len() as f64)
}

/// Population standard deviation of luma.
pub fn contrast(frame: &Frame) -> Result<f64, FeatureError> {
    frame.nonempty()?;
    Ok(mean_and_population_sd(frame.pixels.iter().map(|&px| luma(px))).1)
}

/// Opponent-channel colorfulness over `rg = |R - G|` and
/// `yb = |(R + G) / 2 - B|`.
pub fn colorfulness(frame: &Frame) -> Result<f64, FeatureError> {
    frame.nonempty()?;
    let rg = frame.pixels.iter().map(|&[r, g, _]| (r - g).abs());
    let yb = frame.pixels.iter().map(|&[r, g, b]| (0.5 * (r + g) - b).abs());
    let (mu_rg, sd_rg) = mean_and_population_sd(rg);
    let (mu_yb, sd_yb) = mean_and_population_sd(yb);
    Ok((sd_rg * sd_rg + sd_yb * sd_yb).sqrt() + 0.3 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt())
}

/// Mean Sobel gradient magnitude of luma over the valid interior.
pub fn mean_gradient_magnitude(frame: &Frame) -> Result<f64, FeatureError> {
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return Err(FeatureError::TooSmall {
            width: w,
            height: h,
        });
    }
    let y: Vec<f64> = frame.pixels.iter().map(|&px| luma(px)).collect();
    let at = |x: usize, yy: usize| y[yy * w + x];
    let mut sum = 0.0;
    for row in 1..h - 1 {
        for col in 1..w - 1 {
            let gx = (at(col + 1, row - 1) + 2.0 * at(col + 1, row) + at(col + 1, row + 1))
                - (at(col - 1, row - 1) + 2.0 * at(col - 1, row) + at(col - 1, row + 1));
            let gy = (at(col - 1, row + 1) + 2.0 * at(col, row + 1) + at(col + 1, row + 1))
                - (at(col - 1, row - 1) + 2.0 * at(col, row - 1) + at(col + 1, row - 1));
            sum += (gx * gx + gy * gy).sqrt();
        }
    }
    Ok(sum / ((w - 2) * (h - 2)) as f64)
}

/// `ln(1 + mean |grad|)`.
pub fn sharpness(frame: &Frame) -> Result<f64, FeatureError> {
    Ok(mean_gradient_magnitude(frame)?.ln_1p())
}

pub fn frame_features(frame: &Frame) -> Result<FrameFeatures, FeatureError> {
    frame_features_scaled(frame, 1.0)
}

/// Features as if pixel values were multiplied by `pixel_scale` (e.g. 255
/// for 8-bit units). Brightness, contrast and colorfulness scale linearly;
/// the scale enters sharpness inside the logarithm.
pub fn frame_features_scaled(frame: &Frame, pixel_scale: f64) -> Result<FrameFeatures, FeatureError> {
    if !(pixel_scale.is_finite() && pixel_scale > 0.0) {
        return Err(FeatureError::InvalidScale);
    }
    Ok(FrameFeatures {
        brightness: pixel_scale * brightness(frame)?,
        contrast: pixel_scale * contrast(frame)?,
        colorfulness: pixel_scale * colorfulness(frame)?,
        sharpness: (pixel_scale * mean_gradient_magnitude(frame)?).ln_1p(),
    })
}

#[derive(Default)]
struct FeatureMean {
    sum: [f64; 4],
    n: usize,
}

impl FeatureMean {
    fn push(&mut self, f: &FrameFeatures) {
        for (acc, x) in self.sum.iter_mut().zip(f.as_array()) {
            *acc += x;
        }
        self.n += 1;
    }

    fn finish(self) -> Result<(FrameFeatures, usize), FeatureError> {
        if self.n == 0 {
            return Err(FeatureError::NoFrames);
        }
        let n = self.n as f64;
        let [b, c, col, s] = self.sum.map(|x| x / n);
        Ok((
            FrameFeatures {
                brightness: b,
                contrast: c,
                colorfulness: col,
                sharpness: s,
            },
            self.n,
        ))
    }
}

/// Mean of per-frame features over every `stride`-th frame, starting with
/// the first.
pub fn video_features(frames: &[Frame], stride: usize) -> Result<FrameFeatures, FeatureError> {
    if stride == 0 {
        return Err(FeatureError::InvalidStride);
    }
    let mut acc = FeatureMean::default();
    for frame in frames.iter().step_by(stride) {
        acc.push(&frame_features(frame)?);
    }
    Ok(acc.finish()?.0)
}

/// One line of `features.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoFeatureRecord {
    pub video_id: String,
    pub brightness: f64,
    pub contrast: f64,
    pub colorfulness: f64,
    pub sharpness: f64,
    pub n_frames_sampled: usize,
}

impl VideoFeatureRecord {
    pub fn features(&self) -> FrameFeatures {
        FrameFeatures {
            brightness: self.brightness,
            contrast: self.contrast,
            colorfulness: self.colorfulness,
            sharpness: self.sharpness,
        }
    }
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
}

/// Frame files (PNG or PPM) in `dir`, sorted by file name.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>, FeatureError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if is_frame_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Stream the frames of one video directory, decoding only sampled frames.
pub fn video_features_from_dir(
    video_id: &str,
    dir: &Path,
    stride: usize,
    pixel_scale: f64,
) -> Result<VideoFeatureRecord, FeatureError> {
    if stride == 0 {
        return Err(FeatureError::InvalidStride);
    }
    let mut acc = FeatureMean::default();
    for path in list_frame_files(dir)?.iter().step_by(stride) {
        let frame = Frame::load(path)?;
        acc.push(&frame_features_scaled(&frame, pixel_scale)?);
    }
    let (f, n) = acc.finish()?;
    Ok(VideoFeatureRecord {
        video_id: video_id.to_string(),
        brightness: f.brightness,
        contrast: f.contrast,
        colorfulness: f.colorfulness,
        sharpness: f.sharpness,
        n_frames_sampled: n,
    })
}
