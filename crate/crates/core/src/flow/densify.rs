//! Edge-aware sparse-to-dense interpolation of a filtered flow field.
//!
//! Each gap pixel takes an inverse-square-distance weighted mean of its
//! nearest seeds, where distance is the Euclidean length of the straight
//! segment plus the guide's gradient magnitude accumulated along it. Seeds
//! across a strong image edge are therefore far away even when they are
//! spatially close.

use rayon::prelude::*;

use super::kdtree::KdTree;
use crate::error::{check_extent, Error, Result};
use crate::raster::{Image, Vec2Field};

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyParams {
    /// Seeds contributing to each gap pixel.
    pub neighbors: usize,
    /// Euclidean-nearest seeds examined before ranking by edge-aware distance.
    pub candidates: usize,
    /// Scale of accumulated gradient magnitude relative to path length.
    pub edge_weight: f32,
}

impl Default for DensifyParams {
    fn default() -> Self {
        Self {
            neighbors: 25,
            candidates: 100,
            edge_weight: 1.0,
        }
    }
}

/// Central-difference gradient magnitude of the guide's intensity.
pub fn gradient_magnitude(guide: &Image) -> Vec<f32> {
    let (w, h) = guide.extent();
    let at = |x: usize, y: usize| guide.gray(x, y) as f32;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, g) in row.iter_mut().enumerate() {
            let gx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            let gy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
            *g = gx.hypot(gy);
        }
    });
    out
}

/// Edge-aware distance between pixels `from` and `to`: segment length plus
/// `edge_weight` times the gradient integrated along the segment (sampled
/// at unit steps, nearest pixel, excluding both endpoints).
pub fn edge_aware_distance(
    grad: &[f32],
    width: usize,
    from: (usize, usize),
    to: (usize, usize),
    edge_weight: f32,
) -> f32 {
    let dx = to.0 as f32 - from.0 as f32;
    let dy = to.1 as f32 - from.1 as f32;
    let len = dx.hypot(dy);
    if len == 0.0 {
        return 0.0;
    }
    let steps = len.ceil() as usize;
    let step_len = len / steps as f32;
    let mut acc = 0.0;
    for k in 1..steps {
        let t = k as f32 / steps as f32;
        let x = (from.0 as f32 + dx * t).round() as usize;
        let y = (from.1 as f32 + dy * t).round() as usize;
        acc += grad[y * width + x];
    }
    len + edge_weight * acc * step_len
}

/// Fills every invalid pixel of `sparse`; valid pixels keep their vectors
/// unchanged and the result is fully valid.
pub fn densify(sparse: &Vec2Field, guide: &Image) -> Result<Vec2Field> {
    densify_with(sparse, guide, &DensifyParams::default())
}

pub fn densify_with(
    sparse: &Vec2Field,
    guide: &Image,
    params: &DensifyParams,
) -> Result<Vec2Field> {
    check_extent("guide image", sparse.extent(), guide.extent())?;
    if params.neighbors == 0 {
        return Err(Error::InvalidParam {
            name: "neighbors",
            reason: "must be at least 1".into(),
        });
    }
    let w = sparse.width;
    let seeds: Vec<usize> = (0..sparse.valid.len())
        .filter(|&i| sparse.valid[i])
        .collect();
    if seeds.is_empty() {
        return Err(Error::NoValidPixels);
    }
    if seeds.len() == sparse.valid.len() {
        return Ok(sparse.clone());
    }
    let coords: Vec<f32> = seeds
        .iter()
        .flat_map(|&i| [(i % w) as f32, (i / w) as f32])
        .collect();
    let tree = KdTree::new(2, coords);
    let grad = gradient_magnitude(guide);
    let pool = params.candidates.max(params.neighbors);

    let mut out = sparse.clone();
    out.u
        .par_iter_mut()
        .zip(out.v.par_iter_mut())
        .zip(out.valid.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((u, v), valid))| {
            if *valid {
                return;
            }
            let p = (i % w, i / w);
            let mut ranked: Vec<(f32, usize)> = tree
                .nearest(&[p.0 as f32, p.1 as f32], pool)
                .into_iter()
                .map(|n| {
                    let s = seeds[n.index];
                    let d = edge_aware_distance(&grad, w, (s % w, s / w), p, params.edge_weight);
                    (d, s)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ranked.truncate(params.neighbors);
            let (mut su, mut sv, mut sw) = (0.0f64, 0.0f64, 0.0f64);
            for (d, s) in ranked {
                let wt = 1.0 / (d as f64 * d as f64);
                su += wt * sparse.u[s] as f64;
                sv += wt * sparse.v[s] as f64;
                sw += wt;
            }
            *u = (su / sw) as f32;
            *v = (sv / sw) as f32;
            *valid = true;
        });
    Ok(out)
}
