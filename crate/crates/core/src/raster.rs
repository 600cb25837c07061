//! Raster containers shared by every stage, and the bilinear sampling used
//! to warp disparity maps along the optical flow.
//!
//! All grids are row-major. A pixel coordinate `(x, y)` addresses column `x`
//! and row `y`; real-valued points use the same axes, with integer points
//! sitting exactly on pixel centres.

use crate::error::{Error, Result};

/// A real-valued 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f32,
    pub y: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }
}

/// 8-bit raster with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateExtent {
                width,
                height,
                reason: "images need at least one pixel",
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParam {
                name: "channels",
                reason: format!("expected 1 or 3, got {channels}"),
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidParam {
                name: "data",
                reason: format!(
                    "length {} does not match {width}x{height}x{channels}",
                    data.len()
                ),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Grayscale image filled by `f(x, y)`.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn_gray(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Self {
        assert!(width > 0 && height > 0, "images need at least one pixel");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// First channel at `(x, y)`; the intensity for gray images.
    #[inline]
    pub fn gray(&self, x: usize, y: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Luma conversion with weights 0.299 / 0.587 / 0.114, rounded to nearest.
    /// Gray images are returned unchanged.
    pub fn to_gray(&self) -> Image {
        if self.is_gray() {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| luma(px[0], px[1], px[2]))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Mirror left-to-right.
    pub fn flip_horizontal(&self) -> Image {
        let c = self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width * c) {
            for px in row.chunks_exact(c).rev() {
                data.extend_from_slice(px);
            }
        }
        Image { data, ..*self }
    }

    /// Bilinear intensity of channel 0 at an in-bounds point, using the
    /// clamped footprint of [`bilinear_sample`].
    #[inline]
    pub(crate) fn sample_gray(&self, x: f32, y: f32) -> f32 {
        let fp = Footprint::new(self.width, self.height, x, y);
        let v = |i: usize| self.data[i * self.channels] as f32;
        fp.combine(v)
    }
}

#[inline]
pub(crate) fn luma(r: u8, g: u8, b: u8) -> u8 {
    let l = 0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32;
    (l + 0.5).floor().min(255.0) as u8
}

/// Real-valued grid with a validity mask, e.g. a disparity map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl ScalarField {
    /// All-invalid field of zeros.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Fully valid field filled by `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
            valid: vec![true; width * height],
        }
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Value at `(x, y)` if the pixel is valid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let i = self.index(x, y);
        self.valid[i].then(|| self.values[i])
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        let i = self.index(x, y);
        self.values[i] = value;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn density(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len().max(1) as f64
    }
}

/// Field of 2D vectors (optical flow) with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Vec2Field {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

impl Vec2Field {
    pub fn invalid(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    /// Fully valid field holding the same vector everywhere.
    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f32, f32)> {
        let i = self.index(x, y);
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = self.index(x, y);
        self.u[i] = u;
        self.v[i] = v;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.u[i] = 0.0;
        self.v[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Fraction of valid pixels.
    pub fn density(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len().max(1) as f64
    }
}

/// Membership in the closed image domain `[0, W-1] x [0, H-1]`.
#[inline]
pub fn in_bounds(extent: (usize, usize), p: Point) -> bool {
    let (w, h) = extent;
    w > 0 && h > 0 && p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f32 && p.y <= (h - 1) as f32
}

/// Four-pixel bilinear footprint of an in-bounds point. The `+1` neighbours
/// are clamped to the last column/row, where their weight is zero anyway.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Footprint {
    pub idx: [usize; 4],
    pub fx: f32,
    pub fy: f32,
}

impl Footprint {
    #[inline]
    pub fn new(width: usize, height: usize, x: f32, y: f32) -> Self {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Self {
            idx: [
                y0 * width + x0,
                y0 * width + x1,
                y1 * width + x0,
                y1 * width + x1,
            ],
            fx,
            fy,
        }
    }

    #[inline]
    pub fn is_lattice(&self) -> bool {
        self.fx == 0.0 && self.fy == 0.0
    }

    #[inline]
    pub fn combine(&self, v: impl Fn(usize) -> f32) -> f32 {
        if self.is_lattice() {
            return v(self.idx[0]);
        }
        let (fx, fy) = (self.fx, self.fy);
        v(self.idx[0]) * (1.0 - fx) * (1.0 - fy)
            + v(self.idx[1]) * fx * (1.0 - fy)
            + v(self.idx[2]) * (1.0 - fx) * fy
            + v(self.idx[3]) * fx * fy
    }
}

/// Bilinear interpolation of `field` at `p`.
///
/// Returns `Ok(Some(value))` when all four footprint pixels are valid,
/// `Ok(None)` when any of them is a gap, and an error when `p` lies outside
/// the domain. Lattice points return the stored value unchanged.
pub fn bilinear_sample(field: &ScalarField, p: Point) -> Result<Option<f32>> {
    if !in_bounds(field.extent(), p) {
        return Err(Error::OutOfBounds {
            x: p.x,
            y: p.y,
            width: field.width,
            height: field.height,
        });
    }
    Ok(sample_valid(field, p))
}

/// Same as [`bilinear_sample`] for a point already known to be in bounds.
#[inline]
pub(crate) fn sample_valid(field: &ScalarField, p: Point) -> Option<f32> {
    let fp = Footprint::new(field.width, field.height, p.x, p.y);
    if fp.idx.iter().all(|&i| field.valid[i]) {
        Some(fp.combine(|i| field.values[i]))
    } else {
        None
    }
}

/// Bilinear interpolation of a vector field at an in-bounds point; `None`
/// when any footprint pixel is invalid.
#[inline]
pub(crate) fn sample_vec2(field: &Vec2Field, p: Point) -> Option<(f32, f32)> {
    let fp = Footprint::new(field.width, field.height, p.x, p.y);
    if fp.idx.iter().all(|&i| field.valid[i]) {
        Some((fp.combine(|i| field.u[i]), fp.combine(|i| field.v[i])))
    } else {
        None
    }
}

/// 2x2 box-filter reduction to `ceil(W/2) x ceil(H/2)`. Odd trailing
/// rows/columns average the pixels that exist. Means are rounded half up.
pub fn downsample_half(image: &Image) -> Result<Image> {
    let (w, h) = image.extent();
    if w < 2 || h < 2 {
        return Err(Error::DegenerateExtent {
            width: w,
            height: h,
            reason: "downsampling needs at least 2x2 pixels",
        });
    }
    let c = image.channels;
    let nw = w.div_ceil(2);
    let nh = h.div_ceil(2);
    let mut data = Vec::with_capacity(nw * nh * c);
    for ny in 0..nh {
        let ys = 2 * ny..(2 * ny + 2).min(h);
        for nx in 0..nw {
            let xs = 2 * nx..(2 * nx + 2).min(w);
            for ch in 0..c {
                let mut sum = 0u32;
                let mut count = 0u32;
                for y in ys.clone() {
                    for x in xs.clone() {
                        sum += image.data[(y * w + x) * c + ch] as u32;
                        count += 1;
                    }
                }
                let mean = sum as f32 / count as f32;
                data.push((mean + 0.5).floor() as u8);
            }
        }
    }
    Image::new(nw, nh, c, data)
}
