//! Semi-global matching stereo.
//!
//! The pipeline is census transform, Hamming-distance cost volume,
//! aggregation along eight 1D paths, winner-takes-all with parabolic
//! subpixel refinement, and a left-right consistency check. The result is a
//! left-view disparity map with gaps where the two views disagree.
//!
//! A disparity `d` at left pixel `(x, y)` refers to right pixel `(x - d, y)`.

use rayon::prelude::*;

use crate::error::{check_extent, Error, Result};
use crate::raster::{Image, ScalarField};

/// Parameters of the stereo matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct SgmParams {
    /// Largest disparity searched; the cost volume has `max_disparity + 1` levels.
    pub max_disparity: usize,
    /// Census window edge length, odd, 3 to 7.
    pub census_window: usize,
    /// Penalty for a disparity change of one level between path neighbours.
    pub p1: u32,
    /// Penalty for larger disparity jumps.
    pub p2: u32,
    /// Maximum left/right disagreement in pixels.
    pub lr_threshold: f32,
}

/// Number of aggregation directions.
pub const NUM_PATHS: usize = 8;

/// The eight path directions `(dx, dy)`: each path enters a pixel from
/// `(x - dx, y - dy)`.
pub const PATH_DIRECTIONS: [(isize, isize); NUM_PATHS] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

impl Default for SgmParams {
    fn default() -> Self {
        Self {
            max_disparity: 128,
            census_window: 5,
            p1: 7,
            p2: 100,
            lr_threshold: 1.0,
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_disparity < 1 {
            return Err(Error::InvalidParam {
                name: "max_disparity",
                reason: "must be at least 1".into(),
            });
        }
        check_census_window(self.census_window)?;
        if !(0 < self.p1 && self.p1 < self.p2) {
            return Err(Error::InvalidParam {
                name: "p1/p2",
                reason: format!("need 0 < p1 < p2, got p1={} p2={}", self.p1, self.p2),
            });
        }
        if !(self.lr_threshold > 0.0) {
            return Err(Error::InvalidParam {
                name: "lr_threshold",
                reason: format!("must be positive, got {}", self.lr_threshold),
            });
        }
        Ok(())
    }
}

fn check_census_window(window: usize) -> Result<()> {
    if window.is_multiple_of(2) || !(3..=7).contains(&window) {
        return Err(Error::InvalidParam {
            name: "census_window",
            reason: format!("must be odd and in 3..=7, got {window}"),
        });
    }
    Ok(())
}

/// Per-pixel census descriptors, packed into the low bits of a `u64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusGrid {
    pub width: usize,
    pub height: usize,
    /// Number of meaningful bits per descriptor: `window^2 - 1`.
    pub bits: u32,
    pub codes: Vec<u64>,
}

impl CensusGrid {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u64 {
        self.codes[y * self.width + x]
    }
}

/// Census transform with edge-clamped neighbourhoods. Neighbours are visited
/// in raster order, skipping the centre; bit `i` is set iff the `i`-th
/// neighbour is strictly darker than the centre.
pub fn census_transform(image: &Image, window: usize) -> Result<CensusGrid> {
    check_census_window(window)?;
    let (w, h) = image.extent();
    let r = (window / 2) as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut codes = vec![0u64; w * h];
    codes.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, code) in row.iter_mut().enumerate() {
            let centre = image.gray(x, y);
            let mut bits = 0u64;
            let mut bit = 0;
            for dy in -r..=r {
                let sy = clamp(y as isize + dy, h);
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let sx = clamp(x as isize + dx, w);
                    if image.gray(sx, sy) < centre {
                        bits |= 1 << bit;
                    }
                    bit += 1;
                }
            }
            *code = bits;
        }
    });
    Ok(CensusGrid {
        width: w,
        height: h,
        bits: (window * window - 1) as u32,
        codes,
    })
}

/// Matching costs, `depth` levels per pixel, stored pixel-major:
/// `costs[(y * width + x) * depth + d]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub costs: Vec<u32>,
}

impl CostVolume {
    pub fn zeros(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
            costs: vec![0; width * height * depth],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> u32 {
        self.costs[(y * self.width + x) * self.depth + d]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u32] {
        let i = (y * self.width + x) * self.depth;
        &self.costs[i..i + self.depth]
    }
}

/// Hamming distances between left descriptors and right descriptors shifted
/// by each disparity. Disparities that leave the right image cost the full
/// descriptor length.
pub fn build_cost_volume(
    left: &CensusGrid,
    right: &CensusGrid,
    max_disparity: usize,
) -> Result<CostVolume> {
    check_extent(
        "right census",
        (left.width, left.height),
        (right.width, right.height),
    )?;
    let (w, h) = (left.width, left.height);
    let depth = max_disparity + 1;
    let mut vol = CostVolume::zeros(w, h, depth);
    let worst = left.bits;
    vol.costs
        .par_chunks_mut(w * depth)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let l = left.get(x, y);
                let px = &mut row[x * depth..(x + 1) * depth];
                for (d, c) in px.iter_mut().enumerate() {
                    *c = if d > x {
                        worst
                    } else {
                        (l ^ right.get(x - d, y)).count_ones()
                    };
                }
            }
        });
    Ok(vol)
}

/// One step of the path recursion:
/// `L(p, d) = C(p, d) + min(L(p-r, d), L(p-r, d±1) + P1, min_k L(p-r, k) + P2) - min_k L(p-r, k)`.
#[inline]
fn path_step(cost: &[u32], prev: &[u32], prev_min: u32, p1: u32, p2: u32, out: &mut [u32]) -> u32 {
    let depth = cost.len();
    let jump = prev_min + p2;
    let mut out_min = u32::MAX;
    for d in 0..depth {
        let mut best = prev[d].min(jump);
        if d > 0 {
            best = best.min(prev[d - 1] + p1);
        }
        if d + 1 < depth {
            best = best.min(prev[d + 1] + p1);
        }
        let l = cost[d] + best - prev_min;
        out[d] = l;
        out_min = out_min.min(l);
    }
    out_min
}

#[inline]
fn min_of(xs: &[u32]) -> u32 {
    xs.iter().copied().min().unwrap_or(0)
}

/// Sum of the eight per-path aggregated costs. At a path's first pixel the
/// path cost equals the matching cost.
pub fn aggregate(costs: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    if !(0 < params.p1 && params.p1 < params.p2) {
        return Err(Error::InvalidParam {
            name: "p1/p2",
            reason: format!("need 0 < p1 < p2, got p1={} p2={}", params.p1, params.p2),
        });
    }
    let mut total = CostVolume::zeros(costs.width, costs.height, costs.depth);
    for &(dx, dy) in &PATH_DIRECTIONS {
        if dy == 0 {
            aggregate_horizontal(costs, dx, params, &mut total);
        } else {
            aggregate_rowwise(costs, dx, dy, params, &mut total);
        }
    }
    Ok(total)
}

/// Paths along rows: rows are independent, each is a sequential scan.
fn aggregate_horizontal(costs: &CostVolume, dx: isize, params: &SgmParams, total: &mut CostVolume) {
    let (w, depth) = (costs.width, costs.depth);
    total
        .costs
        .par_chunks_mut(w * depth)
        .zip(costs.costs.par_chunks(w * depth))
        .for_each(|(acc, src)| {
            let mut prev = vec![0u32; depth];
            let mut cur = vec![0u32; depth];
            let mut prev_min = 0;
            for step in 0..w {
                let x = if dx > 0 { step } else { w - 1 - step };
                let c = &src[x * depth..(x + 1) * depth];
                if step == 0 {
                    cur.copy_from_slice(c);
                    prev_min = min_of(c);
                } else {
                    prev_min = path_step(c, &prev, prev_min, params.p1, params.p2, &mut cur);
                }
                for (a, l) in acc[x * depth..(x + 1) * depth].iter_mut().zip(&cur) {
                    *a += l;
                }
                std::mem::swap(&mut prev, &mut cur);
            }
        });
}

/// Paths with a vertical component: rows are processed in path order, and
/// pixels within a row are independent of each other.
fn aggregate_rowwise(
    costs: &CostVolume,
    dx: isize,
    dy: isize,
    params: &SgmParams,
    total: &mut CostVolume,
) {
    let (w, h, depth) = (costs.width, costs.height, costs.depth);
    let row_len = w * depth;
    let mut prev = vec![0u32; row_len];
    let mut prev_min = vec![0u32; w];
    let mut cur = vec![0u32; row_len];
    let mut cur_min = vec![0u32; w];
    for step in 0..h {
        let y = if dy > 0 { step } else { h - 1 - step };
        let src = &costs.costs[y * row_len..(y + 1) * row_len];
        cur.par_chunks_mut(depth)
            .zip(cur_min.par_iter_mut())
            .enumerate()
            .for_each(|(x, (out, out_min))| {
                let c = &src[x * depth..(x + 1) * depth];
                let px = x as isize - dx;
                if step == 0 || px < 0 || px >= w as isize {
                    out.copy_from_slice(c);
                    *out_min = min_of(c);
                } else {
                    let px = px as usize;
                    *out_min = path_step(
                        c,
                        &prev[px * depth..(px + 1) * depth],
                        prev_min[px],
                        params.p1,
                        params.p2,
                        out,
                    );
                }
            });
        total.costs[y * row_len..(y + 1) * row_len]
            .par_iter_mut()
            .zip(cur.par_iter())
            .for_each(|(a, l)| *a += l);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_min, &mut cur_min);
    }
}

/// Subpixel disparity from costs around the integer minimum. Ties go to the
/// smallest disparity; the parabola offset is clamped to half a pixel and
/// dropped at the ends of the range or when the neighbourhood is flat.
pub fn refine_disparity(costs: &[u32]) -> f32 {
    let mut best = 0;
    for (d, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = d;
        }
    }
    if best == 0 || best + 1 == costs.len() {
        return best as f32;
    }
    let lo = costs[best - 1] as f32;
    let mid = costs[best] as f32;
    let hi = costs[best + 1] as f32;
    let denom = 2.0 * (lo + hi - 2.0 * mid);
    if denom <= 0.0 {
        return best as f32;
    }
    let offset = ((lo - hi) / denom).clamp(-0.5, 0.5);
    best as f32 + offset
}

/// Winner-takes-all over an aggregated volume; every pixel is valid.
pub fn wta_subpixel(aggregated: &CostVolume) -> ScalarField {
    let (w, h) = (aggregated.width, aggregated.height);
    let values = aggregated
        .costs
        .par_chunks(aggregated.depth)
        .map(refine_disparity)
        .collect();
    ScalarField {
        width: w,
        height: h,
        values,
        valid: vec![true; w * h],
    }
}

/// Keeps a left pixel iff it is valid, its right correspondence
/// `(round(x - d), y)` is in the image and valid, and the two disparities
/// differ by at most `threshold`.
pub fn lr_consistency(
    left: &ScalarField,
    right: &ScalarField,
    threshold: f32,
) -> Result<ScalarField> {
    check_extent("right disparity", left.extent(), right.extent())?;
    let w = left.width;
    let mut out = left.clone();
    out.values
        .par_chunks_mut(w)
        .zip(out.valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (vals, valid))| {
            for x in 0..w {
                if !valid[x] {
                    vals[x] = 0.0;
                    continue;
                }
                let d = vals[x];
                let xr = (x as f32 - d).round();
                let keep = xr >= 0.0
                    && xr < w as f32
                    && right
                        .get(xr as usize, y)
                        .is_some_and(|dr| (d - dr).abs() <= threshold);
                if !keep {
                    vals[x] = 0.0;
                    valid[x] = false;
                }
            }
        });
    Ok(out)
}

/// Unfiltered left-view disparity: census, costs, aggregation, WTA.
pub fn raw_disparity(left: &Image, right: &Image, params: &SgmParams) -> Result<ScalarField> {
    let cl = census_transform(left, params.census_window)?;
    let cr = census_transform(right, params.census_window)?;
    let vol = build_cost_volume(&cl, &cr, params.max_disparity)?;
    let agg = aggregate(&vol, params)?;
    Ok(wta_subpixel(&agg))
}

fn flip_field(field: &ScalarField) -> ScalarField {
    let mut out = field.clone();
    for (dst, src) in out
        .values
        .chunks_exact_mut(field.width)
        .zip(field.values.chunks_exact(field.width))
    {
        dst.iter_mut()
            .zip(src.iter().rev())
            .for_each(|(d, s)| *d = *s);
    }
    for (dst, src) in out
        .valid
        .chunks_exact_mut(field.width)
        .zip(field.valid.chunks_exact(field.width))
    {
        dst.iter_mut()
            .zip(src.iter().rev())
            .for_each(|(d, s)| *d = *s);
    }
    out
}

/// Right-view disparity: mirror both images, swap their roles, run the
/// left-view matcher, mirror the result back. A right-view disparity `d` at
/// `(x, y)` refers to left pixel `(x + d, y)`.
pub fn right_disparity(left: &Image, right: &Image, params: &SgmParams) -> Result<ScalarField> {
    let mirrored = raw_disparity(&right.flip_horizontal(), &left.flip_horizontal(), params)?;
    Ok(flip_field(&mirrored))
}

/// Filtered left-view disparity of a rectified pair.
pub fn compute_disparity(left: &Image, right: &Image, params: &SgmParams) -> Result<ScalarField> {
    params.validate()?;
    check_extent("right image", left.extent(), right.extent())?;
    let left = left.to_gray();
    let right = right.to_gray();
    let dl = raw_disparity(&left, &right, params)?;
    let dr = right_disparity(&left, &right, params)?;
    lr_consistency(&dl, &dr, params.lr_threshold)
}
