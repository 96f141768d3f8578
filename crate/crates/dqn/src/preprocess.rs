//! The observation pipeline φ: grayscale conversion, area-average
//! downsampling, cropping, scaling to [0,1], and stacking of the most recent
//! processed frames into the network input.
//!
//! Planes stay in 8-bit form through the pixel stages and are normalized to
//! `value/255` when read, so a [`PhiState`] is an exact, compact record of
//! the pipeline output. States are immutable once built; appending returns a
//! new state that shares storage with the old one.

use crate::env::Frame;
use crate::error::{Error, Result};
use crate::tensor::Scalar;
use std::sync::Arc;

/// A single-channel 8-bit image plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayPlane {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Crop window in downsampled-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Pipeline settings. `target_*` is the downsample size (source size means
/// no resampling), the crop rect selects the playing area, and
/// `stack_depth` frames form one network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocConfig {
    pub target_width: usize,
    pub target_height: usize,
    pub crop: CropRect,
    pub stack_depth: usize,
    pub grayscale_weights: [f64; 3],
}

/// Standard luminance weights for the grayscale conversion.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

impl PreprocConfig {
    /// Identity spatial pipeline for a `width`×`height` environment: no
    /// resampling, full-frame crop, stack of 4.
    pub fn identity(width: usize, height: usize) -> PreprocConfig {
        PreprocConfig {
            target_width: width,
            target_height: height,
            crop: CropRect {
                x: 0,
                y: 0,
                width,
                height,
            },
            stack_depth: 4,
            grayscale_weights: LUMA_WEIGHTS,
        }
    }

    /// The classic full-scale profile: 210×160 RGB → 110×84 grayscale →
    /// centered 84×84 crop anchored to the bottom, stack of 4.
    pub fn full_scale() -> PreprocConfig {
        PreprocConfig {
            target_width: 84,
            target_height: 110,
            crop: CropRect {
                x: 0,
                y: 110 - 84,
                width: 84,
                height: 84,
            },
            stack_depth: 4,
            grayscale_weights: LUMA_WEIGHTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.target_width == 0 || self.target_height == 0 {
            problems.push(format!(
                "downsample target must be positive, got {}x{}",
                self.target_width, self.target_height
            ));
        }
        if self.crop.width == 0 || self.crop.height == 0 {
            problems.push("crop must be non-empty".to_string());
        }
        if self.crop.x + self.crop.width > self.target_width
            || self.crop.y + self.crop.height > self.target_height
        {
            problems.push(format!(
                "crop {:?} exceeds the {}x{} downsampled image",
                self.crop, self.target_width, self.target_height
            ));
        }
        if self.stack_depth == 0 {
            problems.push("stack_depth must be at least 1".to_string());
        }
        let sum: f64 = self.grayscale_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            problems.push(format!("grayscale weights must sum to 1, got {sum}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Converts a frame to one gray plane: single-channel frames pass through,
/// RGB pixels become `round(dot(weights, rgb))` clamped to [0,255].
pub fn to_grayscale(frame: &Frame, weights: &[f64; 3]) -> GrayPlane {
    match frame.channels {
        1 => GrayPlane {
            width: frame.width,
            height: frame.height,
            pixels: frame.pixels.clone(),
        },
        _ => {
            let mut pixels = Vec::with_capacity(frame.width * frame.height);
            for rgb in frame.pixels.chunks_exact(3) {
                let v = weights[0] * rgb[0] as f64
                    + weights[1] * rgb[1] as f64
                    + weights[2] * rgb[2] as f64;
                pixels.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
            GrayPlane {
                width: frame.width,
                height: frame.height,
                pixels,
            }
        }
    }
}

/// Area-average downsampling: each target pixel averages the (possibly
/// fractional) source box it maps onto, rounded half-up. The target may not
/// exceed the source in either dimension.
pub fn downsample(plane: &GrayPlane, target_width: usize, target_height: usize) -> Result<GrayPlane> {
    if target_width > plane.width || target_height > plane.height {
        return Err(Error::Input(format!(
            "cannot downsample {}x{} to larger {}x{}",
            plane.width, plane.height, target_width, target_height
        )));
    }
    if target_width == 0 || target_height == 0 {
        return Err(Error::Input("downsample target must be positive".into()));
    }
    if target_width == plane.width && target_height == plane.height {
        return Ok(plane.clone());
    }
    let sx = plane.width as f64 / target_width as f64;
    let sy = plane.height as f64 / target_height as f64;
    let mut pixels = Vec::with_capacity(target_width * target_height);
    for ty in 0..target_height {
        let y0 = ty as f64 * sy;
        let y1 = (ty + 1) as f64 * sy;
        for tx in 0..target_width {
            let x0 = tx as f64 * sx;
            let x1 = (tx + 1) as f64 * sx;
            let mut acc = 0.0;
            let mut area = 0.0;
            let y_start = y0.floor() as usize;
            let y_end = (y1.ceil() as usize).min(plane.height);
            let x_start = x0.floor() as usize;
            let x_end = (x1.ceil() as usize).min(plane.width);
            for py in y_start..y_end {
                let wy = overlap(py as f64, y0, y1);
                if wy == 0.0 {
                    continue;
                }
                let row = &plane.pixels[py * plane.width..(py + 1) * plane.width];
                for (px, &v) in row.iter().enumerate().take(x_end).skip(x_start) {
                    let wx = overlap(px as f64, x0, x1);
                    if wx == 0.0 {
                        continue;
                    }
                    acc += wx * wy * v as f64;
                    area += wx * wy;
                }
            }
            pixels.push(((acc / area) + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayPlane {
        width: target_width,
        height: target_height,
        pixels,
    })
}

fn overlap(cell: f64, lo: f64, hi: f64) -> f64 {
    let a = cell.max(lo);
    let b = (cell + 1.0).min(hi);
    (b - a).max(0.0)
}

/// Copies the exact sub-rectangle out of a plane.
pub fn crop(plane: &GrayPlane, rect: CropRect) -> Result<GrayPlane> {
    if rect.width == 0 || rect.height == 0 {
        return Err(Error::Input("crop must be non-empty".into()));
    }
    if rect.x + rect.width > plane.width || rect.y + rect.height > plane.height {
        return Err(Error::Input(format!(
            "crop {rect:?} out of bounds for a {}x{} plane",
            plane.width, plane.height
        )));
    }
    let mut pixels = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.y + rect.height {
        let row = &plane.pixels[y * plane.width..(y + 1) * plane.width];
        pixels.extend_from_slice(&row[rect.x..rect.x + rect.width]);
    }
    Ok(GrayPlane {
        width: rect.width,
        height: rect.height,
        pixels,
    })
}

/// A stack of `depth` processed planes, oldest first; the network input.
/// Values are the stored bytes scaled by 1/255 and therefore lie in [0,1].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiState {
    width: usize,
    height: usize,
    depth: usize,
    planes: Arc<[u8]>,
}

impl PhiState {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Raw bytes of one plane; index 0 is the oldest frame.
    pub fn plane(&self, index: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.planes[index * n..(index + 1) * n]
    }

    /// Writes the normalized stack (`byte/255`) into `out`, depth-major.
    pub fn write_normalized<T: Scalar>(&self, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.planes.len());
        let scale = T::from_f64(255.0);
        for (dst, &b) in out.iter_mut().zip(self.planes.iter()) {
            *dst = T::from_f64(b as f64) / scale;
        }
    }

    pub fn normalized<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.planes.len()];
        self.write_normalized(&mut out);
        out
    }

    pub fn num_values(&self) -> usize {
        self.planes.len()
    }
}

/// Runs one frame through the pipeline and appends it to the stack. On
/// episode start (`state` = `None`) the stack is filled with `stack_depth`
/// copies of the processed frame; afterwards the oldest plane is dropped.
pub fn phi_append(
    state: Option<&PhiState>,
    frame: &Frame,
    config: &PreprocConfig,
) -> Result<PhiState> {
    config.validate()?;
    let gray = to_grayscale(frame, &config.grayscale_weights);
    let down = downsample(&gray, config.target_width, config.target_height)?;
    let cropped = crop(&down, config.crop)?;
    let n = cropped.width * cropped.height;
    match state {
        None => {
            let mut planes = Vec::with_capacity(n * config.stack_depth);
            for _ in 0..config.stack_depth {
                planes.extend_from_slice(&cropped.pixels);
            }
            Ok(PhiState {
                width: cropped.width,
                height: cropped.height,
                depth: config.stack_depth,
                planes: planes.into(),
            })
        }
        Some(prev) => {
            if prev.width != cropped.width
                || prev.height != cropped.height
                || prev.depth != config.stack_depth
            {
                return Err(Error::Input(format!(
                    "frame processed to {}x{} does not fit existing stack of {} {}x{} planes",
                    cropped.width, cropped.height, prev.depth, prev.width, prev.height
                )));
            }
            let mut planes = Vec::with_capacity(n * prev.depth);
            planes.extend_from_slice(&prev.planes[n..]);
            planes.extend_from_slice(&cropped.pixels);
            Ok(PhiState {
                width: cropped.width,
                height: cropped.height,
                depth: prev.depth,
                planes: planes.into(),
            })
        }
    }
}
