//! Optical flow by coarse-to-fine patch matching.
//!
//! At the coarsest pyramid level every pixel is seeded by nearest-neighbour
//! search over Walsh-Hadamard descriptors. On each level the seeds are
//! refined by alternating propagation sweeps and random search, then lifted
//! to the next finer level. At full resolution the forward field is checked
//! against two independently estimated inverse fields, and the surviving
//! matches are interpolated back to a dense field.

mod densify;
mod filter;
mod kdtree;
mod matching;
mod wht;

pub use densify::{densify, densify_with, edge_aware_distance, gradient_magnitude, DensifyParams};
pub use filter::consistency_filter;
pub use kdtree::{KdTree, Neighbor};
pub use matching::{
    knn_init, lift_level, patch_cost, propagate_and_search, propagate_and_search_observed,
    recompute_costs, SweepStage, OUT_OF_IMAGE_PENALTY,
};
pub use wht::{walsh_matrix, wht_descriptors, Descriptors, DESCRIPTOR_LEN};

use crate::error::{check_extent, Error, Result};
use crate::raster::{downsample_half, Image, Vec2Field};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Number of pyramid levels including full resolution.
    pub pyramid_levels: usize,
    /// Patch radius of the matching cost.
    pub patch_radius: usize,
    /// Propagation sweeps per pyramid level.
    pub prop_iterations: usize,
    /// Random-search radius for each sweep; the last entry repeats.
    pub search_radius_schedule: Vec<f32>,
    /// Walsh-Hadamard patch size: 4, 8 or 16.
    pub descriptor_window: usize,
    /// Descriptor neighbours examined per pixel during initialization.
    pub knn: usize,
    /// Forward-backward tolerance in pixels.
    pub consistency_threshold: f32,
    pub rng_seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            patch_radius: 4,
            prop_iterations: 8,
            search_radius_schedule: (0..8).map(|i| 8.0 / (1u32 << i) as f32).collect(),
            descriptor_window: 8,
            knn: 4,
            consistency_threshold: 1.0,
            rng_seed: 0x5eed,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParam { name, reason });
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels", "must be at least 1".into());
        }
        if self.search_radius_schedule.is_empty() {
            return bad("search_radius_schedule", "must not be empty".into());
        }
        if self
            .search_radius_schedule
            .iter()
            .any(|&r| !(r > 0.0 && r.is_finite()))
        {
            return bad("search_radius_schedule", "radii must be positive".into());
        }
        if self.search_radius_schedule.windows(2).any(|w| w[1] > w[0]) {
            return bad("search_radius_schedule", "radii must not increase".into());
        }
        if !matches!(self.descriptor_window, 4 | 8 | 16) {
            return bad(
                "descriptor_window",
                format!("must be 4, 8 or 16, got {}", self.descriptor_window),
            );
        }
        if self.knn < 1 {
            return bad("knn", "must be at least 1".into());
        }
        if !(self.consistency_threshold > 0.0) {
            return bad("consistency_threshold", "must be positive".into());
        }
        Ok(())
    }

    /// Random-search radius for sweep index `i` (0-based).
    pub fn search_radius(&self, i: usize) -> f32 {
        let s = &self.search_radius_schedule;
        s[i.min(s.len() - 1)]
    }
}

/// A flow field together with the patch cost of each stored vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchField {
    pub field: Vec2Field,
    pub cost: Vec<f32>,
}

/// Image pyramid, full resolution first.
pub fn build_pyramid(image: &Image, levels: usize) -> Result<Vec<Image>> {
    let mut out = vec![image.clone()];
    for _ in 1..levels {
        let next = downsample_half(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

/// Coarse-to-fine estimate of the field mapping `a` onto `b`.
pub fn estimate_match_field(
    a: &[Image],
    b: &[Image],
    params: &FlowParams,
    radius: usize,
    seed: u64,
) -> Result<MatchField> {
    let top = a.len() - 1;
    let da = wht_descriptors(&a[top], params.descriptor_window)?;
    let db = wht_descriptors(&b[top], params.descriptor_window)?;
    let mut field = knn_init(&da, &db, params.knn, &a[top], &b[top], radius)?;
    propagate_and_search(&mut field, &a[top], &b[top], params, radius, seed, top)?;
    for level in (0..top).rev() {
        field = lift_level(&field, level + 1, &a[level], &b[level], radius)?;
        propagate_and_search(
            &mut field, &a[level], &b[level], params, radius, seed, level,
        )?;
    }
    Ok(field)
}

/// Output of [`compute_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEstimate {
    /// Unfiltered forward matches.
    pub forward: MatchField,
    /// Matches surviving the two-way consistency check.
    pub sparse: Vec2Field,
    /// `sparse` with its gaps interpolated; fully valid.
    pub dense: Vec2Field,
}

/// Dense optical flow from `a` to `b`.
///
/// The two inverse fields use seeds `rng_seed + 1` and `rng_seed + 2` and
/// patch radii `r` and `r + 2`.
pub fn compute_flow(a: &Image, b: &Image, params: &FlowParams) -> Result<FlowEstimate> {
    params.validate()?;
    check_extent("second frame", a.extent(), b.extent())?;
    let a = a.to_gray();
    let b = b.to_gray();
    let pa = build_pyramid(&a, params.pyramid_levels)?;
    let pb = build_pyramid(&b, params.pyramid_levels)?;
    let r = params.patch_radius;
    let seed = params.rng_seed;

    let forward = estimate_match_field(&pa, &pb, params, r, seed)?;
    let inv_a = estimate_match_field(&pb, &pa, params, r, seed.wrapping_add(1))?;
    let inv_b = estimate_match_field(&pb, &pa, params, r + 2, seed.wrapping_add(2))?;
    let sparse = consistency_filter(&forward, [&inv_a, &inv_b], params.consistency_threshold)?;
    let dense = densify(&sparse, &a)?;
    Ok(FlowEstimate {
        forward,
        sparse,
        dense,
    })
}
