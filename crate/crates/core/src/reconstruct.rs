//! Back-projection of scene flow into metric 3D points and motion vectors.
//!
//! Camera frame: left camera at time `t`, X right, Y down, Z forward.

use std::path::Path;

use crate::combine::SceneFlowField;
use crate::error::{Error, Result};
use crate::keyvalue::KeyValues;

/// Rectified stereo calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalib {
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Stereo baseline in meters.
    pub baseline: f64,
}

impl CameraCalib {
    pub fn new(focal: f64, cx: f64, cy: f64, baseline: f64) -> Result<Self> {
        let c = Self {
            focal,
            cx,
            cy,
            baseline,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(Error::InvalidParam {
                name: "focal",
                reason: format!("must be positive, got {}", self.focal),
            });
        }
        if !(self.baseline > 0.0) {
            return Err(Error::InvalidParam {
                name: "baseline",
                reason: format!("must be positive, got {}", self.baseline),
            });
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidParam {
                name: "cx/cy",
                reason: "principal point must be finite".into(),
            });
        }
        Ok(())
    }

    /// Reads `focal`, `cx`, `cy` and `baseline` from a key=value file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        Self::new(
            kv.require("focal")?,
            kv.require("cx")?,
            kv.require("cy")?,
            kv.require("baseline")?,
        )
    }
}

/// Pinhole back-projection of pixel `(x, y)` at disparity `d`:
/// `Z = f·B/d`, `X = (x - cx)·Z/f`, `Y = (y - cy)·Z/f`.
pub fn triangulate(x: f64, y: f64, d: f64, calib: &CameraCalib) -> Result<[f64; 3]> {
    if !(d > 0.0) {
        return Err(Error::InvalidParam {
            name: "disparity",
            reason: format!("must be positive, got {d}"),
        });
    }
    let z = calib.focal * calib.baseline / d;
    Ok([
        (x - calib.cx) * z / calib.focal,
        (y - calib.cy) * z / calib.focal,
        z,
    ])
}

/// A 3D point at time `t` and its displacement to `t + 1`, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionVector3D {
    pub start: [f64; 3],
    pub delta: [f64; 3],
}

impl MotionVector3D {
    pub fn end(&self) -> [f64; 3] {
        [
            self.start[0] + self.delta[0],
            self.start[1] + self.delta[1],
            self.start[2] + self.delta[2],
        ]
    }

    pub fn magnitude(&self) -> f64 {
        let [a, b, c] = self.delta;
        (a * a + b * b + c * c).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub vectors: Vec<MotionVector3D>,
    /// Valid pixels dropped because a disparity was not positive.
    pub skipped: usize,
}

/// One motion vector per valid pixel, in raster order: the start is `x`
/// triangulated at `d0`, the end is `x + (u, v)` triangulated at `d1`.
pub fn scene_flow_vectors(sf: &SceneFlowField, calib: &CameraCalib) -> Result<Reconstruction> {
    calib.validate()?;
    let mut vectors = Vec::with_capacity(sf.valid_count());
    let mut skipped = 0;
    for y in 0..sf.height {
        for x in 0..sf.width {
            let Some(s) = sf.get(x, y) else { continue };
            let (px, py) = (x as f64, y as f64);
            let start = triangulate(px, py, s.d0 as f64, calib);
            let end = triangulate(px + s.u as f64, py + s.v as f64, s.d1 as f64, calib);
            match (start, end) {
                (Ok(a), Ok(b)) => vectors.push(MotionVector3D {
                    start: a,
                    delta: [b[0] - a[0], b[1] - a[1], b[2] - a[2]],
                }),
                _ => skipped += 1,
            }
        }
    }
    Ok(Reconstruction { vectors, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combine::SceneFlowSample;
    use proptest::prelude::*;

    fn calib() -> CameraCalib {
        CameraCalib::new(100.0, 0.0, 0.0, 0.5).unwrap()
    }

    #[test]
    fn triangulate_examples() {
        let c = calib();
        assert_eq!(triangulate(10.0, 3.0, 50.0, &c).unwrap()[2], 1.0);
        let z1 = triangulate(3.0, 4.0, 20.0, &c).unwrap()[2];
        let z2 = triangulate(3.0, 4.0, 40.0, &c).unwrap()[2];
        assert_eq!(z1, 2.0 * z2);
        let c2 = CameraCalib::new(700.0, 320.5, 180.25, 0.54).unwrap();
        let p = triangulate(320.5, 180.25, 17.0, &c2).unwrap();
        assert_eq!((p[0], p[1]), (0.0, 0.0));
        assert!(triangulate(1.0, 1.0, 0.0, &c).is_err());
        assert!(triangulate(1.0, 1.0, -2.0, &c).is_err());
    }

    #[test]
    fn invalid_calibration() {
        assert!(CameraCalib::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(CameraCalib::new(1.0, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn vectors_examples() {
        let c = calib();
        let mut sf = SceneFlowField::invalid(3, 1);
        sf.set(
            0,
            0,
            SceneFlowSample {
                u: 0.0,
                v: 0.0,
                d0: 50.0,
                d1: 25.0,
            },
        );
        sf.set(
            1,
            0,
            SceneFlowSample {
                u: 0.0,
                v: 0.0,
                d0: 20.0,
                d1: 20.0,
            },
        );
        sf.set(
            2,
            0,
            SceneFlowSample {
                u: 0.0,
                v: 0.0,
                d0: 20.0,
                d1: 30.0,
            },
        );
        let r = scene_flow_vectors(&sf, &c).unwrap();
        assert_eq!(r.skipped, 0);
        assert_eq!(r.vectors[0].delta, [0.0, 0.0, 1.0]);
        assert_eq!(r.vectors[1].delta, [0.0, 0.0, 0.0]);
        assert!(r.vectors[2].delta[2] < 0.0);
    }

    #[test]
    fn non_positive_d1_is_skipped_and_counted() {
        let mut sf = SceneFlowField::invalid(2, 1);
        sf.set(
            0,
            0,
            SceneFlowSample {
                u: 1.0,
                v: 0.0,
                d0: 10.0,
                d1: 0.0,
            },
        );
        sf.set(
            1,
            0,
            SceneFlowSample {
                u: 0.0,
                v: 0.0,
                d0: 10.0,
                d1: 10.0,
            },
        );
        let r = scene_flow_vectors(&sf, &calib()).unwrap();
        assert_eq!((r.vectors.len(), r.skipped), (1, 1));
    }

    #[test]
    fn calib_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calib.txt");
        std::fs::write(&p, "focal = 721.5\ncx=609.6\ncy = 172.9\nbaseline = 0.54\n").unwrap();
        let c = CameraCalib::from_file(&p).unwrap();
        assert_eq!(c, CameraCalib::new(721.5, 609.6, 172.9, 0.54).unwrap());
        std::fs::write(&p, "focal = 721.5\n").unwrap();
        assert!(CameraCalib::from_file(&p).is_err());
    }

    proptest! {
        #[test]
        fn depth_round_trip(z in 0.5f64..200.0, x in 0.0f64..1000.0, f in 100.0f64..2000.0, b in 0.1f64..1.0) {
            let c = CameraCalib::new(f, 600.0, 180.0, b).unwrap();
            let p = triangulate(x, 10.0, f * b / z, &c).unwrap();
            prop_assert!((p[2] - z).abs() <= 1e-6 * z);
        }

        #[test]
        fn approach_sign(d0 in 1.0f32..100.0, d1 in 1.0f32..100.0) {
            let mut sf = SceneFlowField::invalid(1, 1);
            sf.set(0, 0, SceneFlowSample { u: 0.0, v: 0.0, d0, d1 });
            let r = scene_flow_vectors(&sf, &calib()).unwrap();
            let dz = r.vectors[0].delta[2];
            prop_assert_eq!(dz.partial_cmp(&0.0), (d0 - d1).partial_cmp(&0.0));
        }
    }
}
