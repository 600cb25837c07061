//! Patch data term, nearest-neighbour initialization, propagation with
//! random search, and lifting between pyramid levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kdtree::KdTree;
use super::wht::{Descriptors, DESCRIPTOR_LEN};
use super::{FlowParams, MatchField};
use crate::error::{check_extent, Error, Result};
use crate::raster::{in_bounds, Image, Point, Vec2Field};

/// Cost charged for each patch sample that falls outside the target frame.
pub const OUT_OF_IMAGE_PENALTY: f32 = 20.0;

/// Sum of absolute gray differences between the patch of radius `radius`
/// around `x` in `a` and the bilinearly sampled patch around `x + flow` in
/// `b`. Offsets whose source pixel lies outside `a` are skipped; target
/// samples outside `b` cost [`OUT_OF_IMAGE_PENALTY`] each.
pub fn patch_cost(a: &Image, b: &Image, x: (usize, usize), flow: (f32, f32), radius: usize) -> f32 {
    let (aw, ah) = a.extent();
    let r = radius as isize;
    let (cx, cy) = (x.0 as isize, x.1 as isize);
    let mut sum = 0.0f32;
    for oy in -r..=r {
        let sy = cy + oy;
        if sy < 0 || sy >= ah as isize {
            continue;
        }
        let ty = sy as f32 + flow.1;
        for ox in -r..=r {
            let sx = cx + ox;
            if sx < 0 || sx >= aw as isize {
                continue;
            }
            let t = Point::new(sx as f32 + flow.0, ty);
            if in_bounds(b.extent(), t) {
                let va = a.gray(sx as usize, sy as usize) as f32;
                sum += (va - b.sample_gray(t.x, t.y)).abs();
            } else {
                sum += OUT_OF_IMAGE_PENALTY;
            }
        }
    }
    sum
}

/// Coarse initialization: for each pixel of `a`, the `knn` nearest
/// descriptors of `b` propose flow vectors, and the proposal with the lowest
/// patch cost is kept. Earlier (closer) proposals win ties.
pub fn knn_init(
    desc_a: &Descriptors,
    desc_b: &Descriptors,
    knn: usize,
    a: &Image,
    b: &Image,
    radius: usize,
) -> Result<MatchField> {
    let (w, h) = (desc_a.width, desc_a.height);
    if w * h == 0 || desc_b.width * desc_b.height == 0 {
        return Err(Error::DegenerateExtent {
            width: w,
            height: h,
            reason: "nothing to match",
        });
    }
    check_extent("second descriptors", (w, h), (desc_b.width, desc_b.height))?;
    check_extent("first frame", (w, h), a.extent())?;
    check_extent("second frame", (w, h), b.extent())?;
    if knn == 0 {
        return Err(Error::InvalidParam {
            name: "knn",
            reason: "must be at least 1".into(),
        });
    }
    let tree = KdTree::new(DESCRIPTOR_LEN, desc_b.data.clone());
    let results: Vec<(f32, f32, f32)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let mut best = (0.0, 0.0, f32::INFINITY);
            for n in tree.nearest(desc_a.get(x, y), knn) {
                let (bx, by) = (n.index % w, n.index / w);
                let f = (bx as f32 - x as f32, by as f32 - y as f32);
                let c = patch_cost(a, b, (x, y), f, radius);
                if c < best.2 {
                    best = (f.0, f.1, c);
                }
            }
            best
        })
        .collect();
    let mut field = Vec2Field::constant(w, h, 0.0, 0.0);
    let mut cost = Vec::with_capacity(w * h);
    for (i, (u, v, c)) in results.into_iter().enumerate() {
        field.u[i] = u;
        field.v[i] = v;
        cost.push(c);
    }
    Ok(MatchField { field, cost })
}

/// Random-number stream for one pixel at one sweep. Each (pixel, sweep,
/// level) owns a distinct ChaCha block, so results do not depend on the
/// order pixels are visited in.
fn pixel_rng(seed: u64, level: usize, sweep: usize, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | sweep as u64);
    rng.set_word_pos(pixel as u128 * 16);
    rng
}

#[inline]
fn try_candidate(
    field: &mut MatchField,
    i: usize,
    cand: (f32, f32),
    a: &Image,
    b: &Image,
    radius: usize,
) {
    let (w, u, v) = (field.field.width, field.field.u[i], field.field.v[i]);
    if cand == (u, v) {
        return;
    }
    let c = patch_cost(a, b, (i % w, i / w), cand, radius);
    if c < field.cost[i] {
        field.field.u[i] = cand.0;
        field.field.v[i] = cand.1;
        field.cost[i] = c;
    }
}

/// One in-place propagation sweep. Forward sweeps scan from the top-left and
/// offer each pixel its left and upper neighbours' vectors; backward sweeps
/// scan from the bottom-right and offer the right and lower neighbours'.
fn propagate(field: &mut MatchField, a: &Image, b: &Image, radius: usize, forward: bool) {
    let (w, h) = field.field.extent();
    let n = w * h;
    for step in 0..n {
        let i = if forward { step } else { n - 1 - step };
        let (x, y) = (i % w, i / w);
        if forward {
            if x > 0 {
                let j = i - 1;
                try_candidate(field, i, (field.field.u[j], field.field.v[j]), a, b, radius);
            }
            if y > 0 {
                let j = i - w;
                try_candidate(field, i, (field.field.u[j], field.field.v[j]), a, b, radius);
            }
        } else {
            if x + 1 < w {
                let j = i + 1;
                try_candidate(field, i, (field.field.u[j], field.field.v[j]), a, b, radius);
            }
            if y + 1 < h {
                let j = i + w;
                try_candidate(field, i, (field.field.u[j], field.field.v[j]), a, b, radius);
            }
        }
    }
}

/// Each pixel tests one offset drawn uniformly from `[-r, r]^2` around its
/// current vector and keeps it on strict improvement.
#[allow(clippy::too_many_arguments)]
fn random_search(
    field: &mut MatchField,
    a: &Image,
    b: &Image,
    radius: usize,
    search_radius: f32,
    seed: u64,
    level: usize,
    sweep: usize,
) {
    let w = field.field.width;
    let MatchField { field: f, cost } = field;
    f.u.par_iter_mut()
        .zip(f.v.par_iter_mut())
        .zip(cost.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((u, v), c))| {
            let mut rng = pixel_rng(seed, level, sweep, i);
            let du: f32 = rng.random_range(-search_radius..=search_radius);
            let dv: f32 = rng.random_range(-search_radius..=search_radius);
            let cand = (*u + du, *v + dv);
            let cc = patch_cost(a, b, (i % w, i / w), cand, radius);
            if cc < *c {
                *u = cand.0;
                *v = cand.1;
                *c = cc;
            }
        });
}

/// Which half of a sweep just finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStage {
    Propagation,
    RandomSearch,
}

/// [`propagate_and_search`] with a callback after every propagation and
/// every random-search step; `sweep` counts from 1.
#[allow(clippy::too_many_arguments)]
pub fn propagate_and_search_observed(
    field: &mut MatchField,
    a: &Image,
    b: &Image,
    params: &FlowParams,
    radius: usize,
    seed: u64,
    level: usize,
    mut observe: impl FnMut(usize, SweepStage, &MatchField),
) -> Result<()> {
    check_extent("first frame", field.field.extent(), a.extent())?;
    check_extent("second frame", field.field.extent(), b.extent())?;
    for sweep in 1..=params.prop_iterations {
        propagate(field, a, b, radius, sweep % 2 == 1);
        observe(sweep, SweepStage::Propagation, field);
        let r = params.search_radius(sweep - 1);
        random_search(field, a, b, radius, r, seed, level, sweep);
        observe(sweep, SweepStage::RandomSearch, field);
    }
    Ok(())
}

/// Runs `params.prop_iterations` alternating propagation sweeps, each
/// followed by a random search with the scheduled radius. A stored vector
/// only ever changes to one with strictly lower patch cost.
pub fn propagate_and_search(
    field: &mut MatchField,
    a: &Image,
    b: &Image,
    params: &FlowParams,
    radius: usize,
    seed: u64,
    level: usize,
) -> Result<()> {
    propagate_and_search_observed(field, a, b, params, radius, seed, level, |_, _, _| {})
}

/// Doubles the vectors and nearest-neighbour upsamples them onto the finer
/// frames' grid, recomputing costs there. `level` is the pyramid level the
/// field currently lives on; lifting from level 0 is an error.
pub fn lift_level(
    field: &MatchField,
    level: usize,
    finer_a: &Image,
    finer_b: &Image,
    radius: usize,
) -> Result<MatchField> {
    if level == 0 {
        return Err(Error::InvalidParam {
            name: "level",
            reason: "field is already at full resolution".into(),
        });
    }
    let (cw, ch) = field.field.extent();
    let (fw, fh) = finer_a.extent();
    check_extent("second finer frame", (fw, fh), finer_b.extent())?;
    if fw.div_ceil(2) != cw || fh.div_ceil(2) != ch {
        return Err(Error::ExtentMismatch {
            what: "coarse field",
            want_w: fw.div_ceil(2),
            want_h: fh.div_ceil(2),
            got_w: cw,
            got_h: ch,
        });
    }
    let lifted: Vec<(f32, f32, f32)> = (0..fw * fh)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % fw, i / fw);
            let j = (y / 2) * cw + x / 2;
            let f = (field.field.u[j] * 2.0, field.field.v[j] * 2.0);
            (f.0, f.1, patch_cost(finer_a, finer_b, (x, y), f, radius))
        })
        .collect();
    let mut out = MatchField {
        field: Vec2Field::constant(fw, fh, 0.0, 0.0),
        cost: Vec::with_capacity(fw * fh),
    };
    for (i, (u, v, c)) in lifted.into_iter().enumerate() {
        out.field.u[i] = u;
        out.field.v[i] = v;
        out.cost.push(c);
    }
    Ok(out)
}

/// Recomputes every stored cost from scratch.
pub fn recompute_costs(field: &mut MatchField, a: &Image, b: &Image, radius: usize) {
    let w = field.field.width;
    let (u, v) = (&field.field.u, &field.field.v);
    field
        .cost
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, c)| *c = patch_cost(a, b, (i % w, i / w), (u[i], v[i]), radius));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::wht::wht_descriptors;
    use crate::synthetic;

    #[test]
    fn patch_cost_examples() {
        let a = synthetic::texture(20, 20, 3);
        assert_eq!(patch_cost(&a, &a, (10, 10), (0.0, 0.0), 4), 0.0);
        assert_eq!(patch_cost(&a, &a, (0, 19), (0.0, 0.0), 4), 0.0);

        let flat = Image::from_fn_gray(10, 10, |_, _| 50);
        let brighter = Image::from_fn_gray(10, 10, |_, _| 60);
        assert_eq!(patch_cost(&flat, &brighter, (5, 5), (0.0, 0.0), 1), 90.0);

        assert_eq!(
            patch_cost(&flat, &brighter, (5, 5), (100.0, 0.0), 1),
            9.0 * OUT_OF_IMAGE_PENALTY
        );
    }

    #[test]
    fn knn_init_identical_frames_is_zero_flow() {
        let a = synthetic::texture(24, 16, 11);
        let d = wht_descriptors(&a, 8).unwrap();
        let m = knn_init(&d, &d, 4, &a, &a, 2).unwrap();
        for y in 2..14 {
            for x in 2..22 {
                let i = y * 24 + x;
                assert_eq!((m.field.u[i], m.field.v[i], m.cost[i]), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn knn_init_recovers_translation() {
        let (a, b) = synthetic::translated_pair(48, 32, 3, 0, 5);
        let da = wht_descriptors(&a, 8).unwrap();
        let db = wht_descriptors(&b, 8).unwrap();
        let m = knn_init(&da, &db, 4, &a, &b, 3).unwrap();
        let (mut hit, mut total) = (0, 0);
        for y in 4..28 {
            for x in 4..40 {
                let i = y * 48 + x;
                total += 1;
                if (m.field.u[i], m.field.v[i]) == (3.0, 0.0) {
                    hit += 1;
                }
            }
        }
        assert!(hit as f64 >= 0.9 * total as f64, "{hit}/{total}");
    }

    #[test]
    fn knn_init_degenerate_two_pixels() {
        let a = Image::new(2, 1, 1, vec![10, 200]).unwrap();
        let d = wht_descriptors(&a, 4).unwrap();
        let m = knn_init(&d, &d, 1, &a, &a, 0).unwrap();
        assert_eq!(m.field.valid_count(), 2);
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let (a, b) = synthetic::translated_pair(32, 24, 2, 1, 9);
        let mut m = MatchField {
            field: Vec2Field::constant(32, 24, 2.0, 1.0),
            cost: vec![0.0; 32 * 24],
        };
        recompute_costs(&mut m, &a, &b, 2);
        // Interior pixels sit at zero cost, which nothing can beat.
        let before = m.clone();
        propagate_and_search(&mut m, &a, &b, &FlowParams::default(), 2, 1, 0).unwrap();
        for y in 3..21 {
            for x in 3..27 {
                let i = y * 32 + x;
                if before.cost[i] == 0.0 {
                    assert_eq!(m.field.u[i], 2.0);
                    assert_eq!(m.field.v[i], 1.0);
                }
            }
        }
    }

    #[test]
    fn single_seed_spreads() {
        let (a, b) = synthetic::translated_pair(40, 30, 4, -2, 21);
        let mut m = MatchField {
            field: Vec2Field::constant(40, 30, -6.0, 5.0),
            cost: vec![0.0; 40 * 30],
        };
        let seed = 15 * 40 + 20;
        m.field.u[seed] = 4.0;
        m.field.v[seed] = -2.0;
        recompute_costs(&mut m, &a, &b, 2);
        let params = FlowParams {
            prop_iterations: 2,
            search_radius_schedule: vec![0.25],
            ..FlowParams::default()
        };
        propagate_and_search(&mut m, &a, &b, &params, 2, 3, 0).unwrap();
        let good = (0..40 * 30)
            .filter(|&i| (m.field.u[i] - 4.0).abs() <= 0.5 && (m.field.v[i] + 2.0).abs() <= 0.5)
            .count();
        assert!(good * 2 >= 40 * 30, "{good}");
    }

    #[test]
    fn costs_never_increase() {
        let (a, b) = synthetic::translated_pair(32, 24, 5, 3, 2);
        let da = wht_descriptors(&a, 8).unwrap();
        let db = wht_descriptors(&b, 8).unwrap();
        let mut m = knn_init(&da, &db, 2, &a, &b, 2).unwrap();
        let mut last = m.cost.clone();
        propagate_and_search_observed(
            &mut m,
            &a,
            &b,
            &FlowParams::default(),
            2,
            7,
            0,
            |_, _, f| {
                for (new, old) in f.cost.iter().zip(&last) {
                    assert!(new <= old);
                }
                last = f.cost.clone();
            },
        )
        .unwrap();
    }

    #[test]
    fn lift_examples() {
        let a = synthetic::texture(4, 4, 1);
        let mut coarse = MatchField {
            field: Vec2Field::constant(2, 2, 0.0, 0.0),
            cost: vec![0.0; 4],
        };
        coarse.field.u[3] = 3.0;
        coarse.field.v[3] = -1.0;
        let fine = lift_level(&coarse, 1, &a, &a, 1).unwrap();
        assert_eq!(fine.field.get(3, 3), Some((6.0, -2.0)));
        assert_eq!(fine.field.get(2, 2), Some((6.0, -2.0)));
        assert_eq!(fine.field.get(1, 1), Some((0.0, 0.0)));
        assert!(lift_level(&coarse, 0, &a, &a, 1).is_err());

        let flat = MatchField {
            field: Vec2Field::constant(3, 2, 1.5, 0.5),
            cost: vec![0.0; 6],
        };
        let odd = synthetic::texture(5, 3, 1);
        let fine = lift_level(&flat, 2, &odd, &odd, 1).unwrap();
        assert!(fine.field.u.iter().all(|&u| u == 3.0));
        assert!(fine.field.v.iter().all(|&v| v == 1.0));
    }
}
