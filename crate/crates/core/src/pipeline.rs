//! End-to-end scene flow from a frame quadruple, with stage timings.

use std::time::{Duration, Instant};

use crate::combine::{combine, SceneFlowField};
use crate::error::{Error, Result};
use crate::flow::{compute_flow, FlowEstimate, FlowParams};
use crate::kitti::FrameQuadruple;
use crate::raster::ScalarField;
use crate::stereo::{compute_disparity, SgmParams};

/// Wall time spent in each stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub stereo_t0: Duration,
    pub stereo_t1: Duration,
    pub flow: Duration,
    pub combine: Duration,
    pub total: Duration,
}

impl StageTimings {
    /// `(name, duration)` pairs in execution order, total last.
    pub fn stages(&self) -> [(&'static str, Duration); 5] {
        [
            ("stereo_t0", self.stereo_t0),
            ("stereo_t1", self.stereo_t1),
            ("flow", self.flow),
            ("combine", self.combine),
            ("total", self.total),
        ]
    }

    /// Share of the total spent combining, in percent.
    pub fn combine_share(&self) -> f64 {
        100.0 * self.combine.as_secs_f64() / self.total.as_secs_f64().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFlowResult {
    pub disp0: ScalarField,
    pub disp1: ScalarField,
    pub flow: FlowEstimate,
    pub scene_flow: SceneFlowField,
    pub timings: StageTimings,
}

fn timed<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })?;
    Ok((out, start.elapsed()))
}

/// Disparity at both time steps, flow between the left views, and their
/// combination. Errors name the stage that failed.
pub fn run_sceneflow(
    q: &FrameQuadruple,
    sgm: &SgmParams,
    flow: &FlowParams,
) -> Result<SceneFlowResult> {
    let start = Instant::now();
    q.check()?;
    let (disp0, stereo_t0) = timed("stereo_t0", || {
        compute_disparity(&q.left_t, &q.right_t, sgm)
    })?;
    let (disp1, stereo_t1) = timed("stereo_t1", || {
        compute_disparity(&q.left_t1, &q.right_t1, sgm)
    })?;
    let (fl, flow_time) = timed("flow", || compute_flow(&q.left_t, &q.left_t1, flow))?;
    let (sf, combine_time) = timed("combine", || combine(&fl.dense, &disp0, &disp1))?;
    Ok(SceneFlowResult {
        disp0,
        disp1,
        flow: fl,
        scene_flow: sf,
        timings: StageTimings {
            stereo_t0,
            stereo_t1,
            flow: flow_time,
            combine: combine_time,
            total: start.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn small_params() -> (SgmParams, FlowParams) {
        let sgm = SgmParams {
            max_disparity: 16,
            ..Default::default()
        };
        let flow = FlowParams {
            pyramid_levels: 2,
            prop_iterations: 4,
            ..Default::default()
        };
        (sgm, flow)
    }

    #[test]
    fn static_scene() {
        let q = synthetic::quadruple(64, 40, 5, (0, 0), 11);
        let (sgm, flow) = small_params();
        let r = run_sceneflow(&q, &sgm, &flow).unwrap();
        let sf = &r.scene_flow;
        assert!(sf.valid_count() > 0);
        for i in 0..sf.valid.len() {
            if sf.valid[i] {
                assert_eq!(sf.d0[i], sf.d1[i]);
            }
        }
        let t = r.timings;
        assert!(t.total >= t.stereo_t0 + t.stereo_t1 + t.flow + t.combine);
    }

    #[test]
    fn stage_errors_are_labelled() {
        let q = synthetic::quadruple(32, 24, 4, (0, 0), 1);
        let (mut sgm, flow) = small_params();
        sgm.max_disparity = 0;
        let err = run_sceneflow(&q, &sgm, &flow).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "stereo_t0",
                    ..
                }
            ),
            "{err}"
        );
    }
}
