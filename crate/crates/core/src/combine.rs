//! Fusion of optical flow and the two disparity maps into scene flow.
//!
//! Every reference pixel `x` maps to `(u, v, d0, d1)`: its flow, its
//! disparity at `t`, and the disparity at `t + 1` read where the flow
//! points, `D1(x + F(x))`, interpolated bilinearly. The result is undefined
//! wherever the flow leaves the image or either disparity lookup hits a gap.

use rayon::prelude::*;

use crate::error::{check_extent, Error, Result};
use crate::raster::{in_bounds, sample_valid, Point, ScalarField, Vec2Field};

/// Per-pixel `(u, v, d0, d1)` with validity. Invalid pixels hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub d0: Vec<f32>,
    pub d1: Vec<f32>,
    pub valid: Vec<bool>,
}

/// One pixel's scene flow components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneFlowSample {
    pub u: f32,
    pub v: f32,
    pub d0: f32,
    pub d1: f32,
}

impl SceneFlowField {
    pub fn invalid(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            d0: vec![0.0; n],
            d1: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> Option<SceneFlowSample> {
        let i = y * self.width + x;
        self.valid[i].then(|| SceneFlowSample {
            u: self.u[i],
            v: self.v[i],
            d0: self.d0[i],
            d1: self.d1[i],
        })
    }

    pub fn set(&mut self, x: usize, y: usize, s: SceneFlowSample) {
        let i = y * self.width + x;
        self.u[i] = s.u;
        self.v[i] = s.v;
        self.d0[i] = s.d0;
        self.d1[i] = s.d1;
        self.valid[i] = true;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// The flow channels as a vector field.
    pub fn flow(&self) -> Vec2Field {
        Vec2Field {
            width: self.width,
            height: self.height,
            u: self.u.clone(),
            v: self.v.clone(),
            valid: self.valid.clone(),
        }
    }

    pub fn disparity0(&self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.d0.clone(),
            valid: self.valid.clone(),
        }
    }

    /// Second disparity, already warped to the reference frame.
    pub fn disparity1(&self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.d1.clone(),
            valid: self.valid.clone(),
        }
    }
}

/// Combines a flow field with the disparity maps of both time steps.
///
/// A pixel is valid iff its flow is valid, `x + F(x)` lies inside the image,
/// `D0(x)` is a valid positive disparity, and all four bilinear neighbours of
/// `x + F(x)` in `D1` are valid with a positive result.
pub fn combine(
    flow: &Vec2Field,
    disp0: &ScalarField,
    disp1: &ScalarField,
) -> Result<SceneFlowField> {
    let ext = flow.extent();
    check_extent("first disparity", ext, disp0.extent())?;
    check_extent("second disparity", ext, disp1.extent())?;
    let w = flow.width;
    let samples: Vec<Option<SceneFlowSample>> = (0..w * flow.height)
        .into_par_iter()
        .map(|i| {
            if !flow.valid[i] || !disp0.valid[i] || !(disp0.values[i] > 0.0) {
                return None;
            }
            let (u, v) = (flow.u[i], flow.v[i]);
            let target = Point::new((i % w) as f32 + u, (i / w) as f32 + v);
            if !in_bounds(ext, target) {
                return None;
            }
            let d1 = sample_valid(disp1, target).filter(|&d| d > 0.0)?;
            Some(SceneFlowSample {
                u,
                v,
                d0: disp0.values[i],
                d1,
            })
        })
        .collect();
    let mut out = SceneFlowField::invalid(w, flow.height);
    for (i, s) in samples.into_iter().enumerate() {
        if let Some(s) = s {
            out.set(i % w, i / w, s);
        }
    }
    Ok(out)
}

/// Fraction of pixels with a valid estimate, optionally restricted to a
/// ground-truth mask: `|valid ∧ gt| / |gt|`.
pub fn density(sf: &SceneFlowField, gt_mask: Option<&[bool]>) -> Result<f64> {
    match gt_mask {
        None => Ok(sf.valid_count() as f64 / sf.valid.len().max(1) as f64),
        Some(mask) => {
            if mask.len() != sf.valid.len() {
                return Err(Error::InvalidParam {
                    name: "gt_mask",
                    reason: format!("length {} != {}", mask.len(), sf.valid.len()),
                });
            }
            let gt = mask.iter().filter(|&&m| m).count();
            if gt == 0 {
                return Err(Error::EmptyGroundTruth);
            }
            let covered = mask.iter().zip(&sf.valid).filter(|(&m, &v)| m && v).count();
            Ok(covered as f64 / gt as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cell_disp1() -> ScalarField {
        ScalarField {
            width: 2,
            height: 2,
            values: vec![1.0, 3.0, 5.0, 7.0],
            valid: vec![true; 4],
        }
    }

    #[test]
    fn static_scene_keeps_disparity() {
        let d = ScalarField::from_fn(7, 5, |x, y| 5.0 + x as f32 * 0.37 + y as f32);
        let sf = combine(&Vec2Field::constant(7, 5, 0.0, 0.0), &d, &d).unwrap();
        assert_eq!(sf.valid_count(), 35);
        for i in 0..35 {
            assert_eq!(sf.d0[i], sf.d1[i]);
        }
    }

    #[test]
    fn flow_leaving_the_image_is_invalid() {
        let d = ScalarField::from_fn(6, 4, |_, _| 3.0);
        let sf = combine(&Vec2Field::constant(6, 4, 6.0, 0.0), &d, &d).unwrap();
        assert_eq!(sf.valid_count(), 0);
        assert!(sf.d0.iter().chain(&sf.d1).chain(&sf.u).all(|&v| v == 0.0));
    }

    #[test]
    fn composed_hand_example() {
        let mut flow = Vec2Field::constant(2, 2, 0.0, 0.0);
        flow.set(0, 0, 0.25, 0.5);
        let mut d0 = ScalarField::from_fn(2, 2, |_, _| 1.0);
        d0.set(0, 0, 10.0);
        let sf = combine(&flow, &d0, &unit_cell_disp1()).unwrap();
        assert_eq!(
            sf.get(0, 0),
            Some(SceneFlowSample {
                u: 0.25,
                v: 0.5,
                d0: 10.0,
                d1: 3.5
            })
        );
    }

    #[test]
    fn each_input_gap_invalidates() {
        let d1 = unit_cell_disp1();
        let flow = Vec2Field::constant(2, 2, 0.0, 0.0);
        let d0 = ScalarField::from_fn(2, 2, |_, _| 4.0);
        assert!(combine(&flow, &d0, &d1).unwrap().valid[0]);

        let mut f = flow.clone();
        f.invalidate(0, 0);
        assert!(!combine(&f, &d0, &d1).unwrap().valid[0]);

        let mut g = d0.clone();
        g.invalidate(0, 0);
        assert!(!combine(&flow, &g, &d1).unwrap().valid[0]);

        let mut h = d1.clone();
        h.invalidate(1, 1);
        assert!(!combine(&flow, &d0, &h).unwrap().valid[0]);
    }

    #[test]
    fn extent_mismatch() {
        let d = ScalarField::from_fn(3, 3, |_, _| 1.0);
        let e = ScalarField::from_fn(3, 4, |_, _| 1.0);
        assert!(combine(&Vec2Field::constant(3, 3, 0.0, 0.0), &d, &e).is_err());
    }

    #[test]
    fn density_examples() {
        let d = ScalarField::from_fn(5, 2, |_, _| 2.0);
        let mut sf = combine(&Vec2Field::constant(5, 2, 0.0, 0.0), &d, &d).unwrap();
        assert_eq!(density(&sf, None).unwrap(), 1.0);
        assert_eq!(density(&SceneFlowField::invalid(5, 2), None).unwrap(), 0.0);

        sf.valid[0] = false;
        sf.valid[1] = false;
        let gt = vec![true; 10];
        assert_eq!(density(&sf, Some(&gt)).unwrap(), 0.8);
        assert!(matches!(
            density(&sf, Some(&[false; 10])),
            Err(Error::EmptyGroundTruth)
        ));
    }
}
