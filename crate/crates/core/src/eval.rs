//! Outlier metrics for sparse scene flow estimates.
//!
//! A pixel is an outlier for a component when its error exceeds both an
//! absolute threshold (3 px) and a fraction (5%) of the ground-truth
//! magnitude. D1 and D2 score the two disparities, Fl the flow endpoint
//! error, and SF flags a pixel that is an outlier in any of the three.
//! Only pixels that carry both ground truth and an estimate are scored;
//! density reports how many ground-truth pixels the estimate covers.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::combine::SceneFlowField;
use crate::error::{check_extent, Error, Result};
use crate::raster::{ScalarField, Vec2Field};

/// Reference values for one frame. `disp1` is sampled on the grid of
/// frame `t`, like the estimate's second disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub disp0: ScalarField,
    pub disp1: ScalarField,
    pub flow: Vec2Field,
    /// Non-occluded pixels. Only meaningful where all three maps are valid.
    pub noc_mask: Vec<bool>,
}

impl GroundTruth {
    pub fn new(
        disp0: ScalarField,
        disp1: ScalarField,
        flow: Vec2Field,
        noc_mask: Vec<bool>,
    ) -> Result<Self> {
        let ext = disp0.extent();
        check_extent("second ground-truth disparity", ext, disp1.extent())?;
        check_extent("ground-truth flow", ext, flow.extent())?;
        if noc_mask.len() != ext.0 * ext.1 {
            return Err(Error::InvalidParam {
                name: "noc_mask",
                reason: format!(
                    "length {} does not match {}x{}",
                    noc_mask.len(),
                    ext.0,
                    ext.1
                ),
            });
        }
        Ok(Self {
            disp0,
            disp1,
            flow,
            noc_mask,
        })
    }

    /// Ground truth where every map is valid and the estimate is defined.
    pub fn dense(disp0: ScalarField, disp1: ScalarField, flow: Vec2Field) -> Result<Self> {
        let n = disp0.values.len();
        Self::new(disp0, disp1, flow, vec![true; n])
    }

    pub fn extent(&self) -> (usize, usize) {
        self.disp0.extent()
    }

    /// Whether pixel `i` belongs to the ground-truth set of `split`.
    #[inline]
    pub fn covers(&self, i: usize, split: Split) -> bool {
        let all = self.disp0.valid[i] && self.disp1.valid[i] && self.flow.valid[i];
        match split {
            Split::Occ => all,
            Split::Noc => all && self.noc_mask[i],
        }
    }

    pub fn mask(&self, split: Split) -> Vec<bool> {
        (0..self.noc_mask.len())
            .map(|i| self.covers(i, split))
            .collect()
    }
}

/// Which ground-truth pixels are scored: non-occluded only, or all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Noc,
    Occ,
}

impl Split {
    pub const BOTH: [Split; 2] = [Split::Noc, Split::Occ];

    pub fn label(self) -> &'static str {
        match self {
            Split::Noc => "noc",
            Split::Occ => "occ",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Noc => "Noc",
            Split::Occ => "Occ",
        })
    }
}

/// Outlier rule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Errors at or below this many pixels are never outliers.
    pub absolute: f64,
    /// Errors at or below this fraction of the true magnitude are never outliers.
    pub relative: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            absolute: 3.0,
            relative: 0.05,
        }
    }
}

impl Thresholds {
    #[inline]
    pub fn is_outlier(&self, err: f64, gt_magnitude: f64) -> bool {
        err > self.absolute && err > self.relative * gt_magnitude
    }
}

/// Outlier test with the default thresholds.
#[inline]
pub fn is_outlier(err: f64, gt_magnitude: f64) -> bool {
    Thresholds::default().is_outlier(err, gt_magnitude)
}

/// Per-component outlier flags of one pixel, in D1, D2, Fl order.
pub fn pixel_outliers(
    est: &SceneFlowField,
    gt: &GroundTruth,
    i: usize,
    t: &Thresholds,
) -> [bool; 3] {
    let d0_gt = gt.disp0.values[i] as f64;
    let d1_gt = gt.disp1.values[i] as f64;
    let (fu, fv) = (gt.flow.u[i] as f64, gt.flow.v[i] as f64);
    let d1 = t.is_outlier((est.d0[i] as f64 - d0_gt).abs(), d0_gt.abs());
    let d2 = t.is_outlier((est.d1[i] as f64 - d1_gt).abs(), d1_gt.abs());
    let epe = (est.u[i] as f64 - fu).hypot(est.v[i] as f64 - fv);
    let fl = t.is_outlier(epe, fu.hypot(fv));
    [d1, d2, fl]
}

/// Integer tallies; these add across frames without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutlierCounts {
    /// Ground-truth pixels of the split.
    pub ground_truth: usize,
    /// Of those, pixels with a valid estimate.
    pub evaluated: usize,
    pub d1: usize,
    pub d2: usize,
    pub fl: usize,
    pub sf: usize,
}

impl std::ops::Add for OutlierCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            ground_truth: self.ground_truth + o.ground_truth,
            evaluated: self.evaluated + o.evaluated,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
            fl: self.fl + o.fl,
            sf: self.sf + o.sf,
        }
    }
}

impl std::iter::Sum for OutlierCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

impl OutlierCounts {
    /// Percentages over evaluated pixels, density over ground-truth pixels.
    pub fn stats(&self, split: Split) -> Result<OutlierStats> {
        if self.ground_truth == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        if self.evaluated == 0 {
            return Err(Error::NothingToEvaluate);
        }
        let pct = |n: usize| 100.0 * n as f64 / self.evaluated as f64;
        Ok(OutlierStats {
            split,
            d1: pct(self.d1),
            d2: pct(self.d2),
            fl: pct(self.fl),
            sf: pct(self.sf),
            density: 100.0 * self.evaluated as f64 / self.ground_truth as f64,
            counts: *self,
        })
    }
}

/// Outlier percentages of one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierStats {
    pub split: Split,
    pub d1: f64,
    pub d2: f64,
    pub fl: f64,
    pub sf: f64,
    pub density: f64,
    pub counts: OutlierCounts,
}

pub fn count_outliers(
    est: &SceneFlowField,
    gt: &GroundTruth,
    split: Split,
    t: &Thresholds,
) -> Result<OutlierCounts> {
    check_extent("estimate", gt.extent(), est.extent())?;
    Ok((0..est.valid.len())
        .into_par_iter()
        .filter(|&i| gt.covers(i, split))
        .map(|i| {
            let mut c = OutlierCounts {
                ground_truth: 1,
                ..Default::default()
            };
            if est.valid[i] {
                let [d1, d2, fl] = pixel_outliers(est, gt, i, t);
                c.evaluated = 1;
                c.d1 = d1 as usize;
                c.d2 = d2 as usize;
                c.fl = fl as usize;
                c.sf = (d1 || d2 || fl) as usize;
            }
            c
        })
        .sum())
}

/// Scores `est` on one split with the default thresholds.
pub fn evaluate(est: &SceneFlowField, gt: &GroundTruth, split: Split) -> Result<OutlierStats> {
    evaluate_with(est, gt, split, &Thresholds::default())
}

pub fn evaluate_with(
    est: &SceneFlowField,
    gt: &GroundTruth,
    split: Split,
    t: &Thresholds,
) -> Result<OutlierStats> {
    count_outliers(est, gt, split, t)?.stats(split)
}

/// Per-frame and pooled results for both splits.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub frames: Vec<(String, [OutlierCounts; 2])>,
}

impl Report {
    pub fn push(&mut self, frame_id: impl Into<String>, noc: OutlierCounts, occ: OutlierCounts) {
        self.frames.push((frame_id.into(), [noc, occ]));
    }

    /// Counts pooled over all frames, so large frames weigh more.
    pub fn total(&self) -> [OutlierCounts; 2] {
        [
            self.frames.iter().map(|(_, c)| c[0]).sum(),
            self.frames.iter().map(|(_, c)| c[1]).sum(),
        ]
    }

    fn rows(&self) -> Vec<(String, [OutlierCounts; 2])> {
        let mut rows = self.frames.clone();
        if self.frames.len() != 1 {
            rows.push(("all".into(), self.total()));
        }
        rows
    }

    /// Human-readable table, one line per frame and split.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:<5} {:>7} {:>7} {:>7} {:>7} {:>8}\n",
            "frame", "split", "D1", "D2", "Fl", "SF", "density"
        );
        for (id, counts) in self.rows() {
            for (split, c) in Split::BOTH.into_iter().zip(counts) {
                match c.stats(split) {
                    Ok(st) => writeln!(
                        s,
                        "{id:<10} {split:<5} {:>6.2}% {:>6.2}% {:>6.2}% {:>6.2}% {:>7.2}%",
                        st.d1, st.d2, st.fl, st.sf, st.density
                    ),
                    Err(e) => writeln!(s, "{id:<10} {split:<5} n/a ({e})"),
                }
                .expect("writing to a String");
            }
        }
        s
    }

    /// Machine-readable `key = value` lines such as `all.noc.d1 = 4.610000`.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        for (id, counts) in self.rows() {
            for (split, c) in Split::BOTH.into_iter().zip(counts) {
                let p = format!("{id}.{}", split.label());
                let mut kv = |k: &str, v: String| {
                    writeln!(s, "{p}.{k} = {v}").expect("writing to a String");
                };
                kv("ground_truth", c.ground_truth.to_string());
                kv("evaluated", c.evaluated.to_string());
                if let Ok(st) = c.stats(split) {
                    kv("d1", format!("{:.6}", st.d1));
                    kv("d2", format!("{:.6}", st.d2));
                    kv("fl", format!("{:.6}", st.fl));
                    kv("sf", format!("{:.6}", st.sf));
                    kv("density", format!("{:.6}", st.density));
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combine::SceneFlowSample;
    use proptest::prelude::*;

    fn perfect(w: usize, h: usize) -> (SceneFlowField, GroundTruth) {
        let d = ScalarField::from_fn(w, h, |x, y| 5.0 + (x + y) as f32);
        let f = Vec2Field::constant(w, h, 6.0, 8.0);
        let mut sf = SceneFlowField::invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                let d0 = d.get(x, y).unwrap();
                sf.set(
                    x,
                    y,
                    SceneFlowSample {
                        u: 6.0,
                        v: 8.0,
                        d0,
                        d1: d0,
                    },
                );
            }
        }
        (sf, GroundTruth::dense(d.clone(), d, f).unwrap())
    }

    #[test]
    fn outlier_rule() {
        assert!(!is_outlier(2.9, 0.0));
        assert!(!is_outlier(2.9, 1000.0));
        assert!(!is_outlier(4.0, 100.0));
        assert!(is_outlier(10.0, 50.0));
        assert!(!is_outlier(3.0, 0.0));
        // Errors scale with the data, decisions do not.
        assert!(!is_outlier(2.0, 10.0));
        assert!(is_outlier(4.0, 20.0));
    }

    #[test]
    fn exact_estimate_scores_zero() {
        let (sf, gt) = perfect(5, 2);
        for split in Split::BOTH {
            let st = evaluate(&sf, &gt, split).unwrap();
            assert_eq!(
                (st.d1, st.d2, st.fl, st.sf, st.density),
                (0.0, 0.0, 0.0, 0.0, 100.0)
            );
        }
    }

    #[test]
    fn single_flow_outlier() {
        let (mut sf, gt) = perfect(5, 2);
        // gt flow (6, 8) has magnitude 10; push one pixel 100 px away.
        sf.u[3] = 106.0;
        let st = evaluate(&sf, &gt, Split::Occ).unwrap();
        assert_eq!((st.fl, st.sf, st.d1, st.d2), (10.0, 10.0, 0.0, 0.0));
    }

    #[test]
    fn density_ignores_errors() {
        let (mut sf, gt) = perfect(5, 2);
        sf.valid[0] = false;
        sf.valid[9] = false;
        sf.d0[4] = 1000.0;
        let st = evaluate(&sf, &gt, Split::Occ).unwrap();
        assert_eq!(st.density, 80.0);
        assert_eq!(st.counts.evaluated, 8);
    }

    #[test]
    fn error_cases() {
        let (sf, gt) = perfect(4, 4);
        let (other, _) = perfect(4, 3);
        assert!(matches!(
            evaluate(&other, &gt, Split::Occ),
            Err(Error::ExtentMismatch { .. })
        ));
        let empty = SceneFlowField::invalid(4, 4);
        assert!(matches!(
            evaluate(&empty, &gt, Split::Occ),
            Err(Error::NothingToEvaluate)
        ));
        let none = GroundTruth::new(
            gt.disp0.clone(),
            gt.disp1.clone(),
            gt.flow.clone(),
            vec![false; 16],
        )
        .unwrap();
        assert!(matches!(
            evaluate(&sf, &none, Split::Noc),
            Err(Error::EmptyGroundTruth)
        ));
    }

    #[test]
    fn report_formats() {
        let (mut sf, gt) = perfect(5, 2);
        sf.u[3] = 106.0;
        let t = Thresholds::default();
        let noc = count_outliers(&sf, &gt, Split::Noc, &t).unwrap();
        let occ = count_outliers(&sf, &gt, Split::Occ, &t).unwrap();
        let mut r = Report::default();
        r.push("000000", noc, occ);
        r.push("000001", noc, occ);
        assert_eq!(r.total()[1].evaluated, 20);
        let kv = r.key_values();
        assert!(kv.contains("000000.noc.fl = 10.000000"), "{kv}");
        assert!(kv.contains("all.occ.sf = 10.000000"), "{kv}");
        let table = r.table();
        assert!(table.contains("Noc") && table.contains("Occ"));
        assert_eq!(table.lines().count(), 1 + 3 * 2);
    }

    fn random_case() -> impl Strategy<Value = (SceneFlowField, GroundTruth)> {
        let px = (
            any::<bool>(),
            (0.5f32..60.0, 0.5f32..60.0, -20.0f32..20.0, -20.0f32..20.0),
            [any::<bool>(); 4],
            (0.5f32..60.0, 0.5f32..60.0, -20.0f32..20.0, -20.0f32..20.0),
        );
        proptest::collection::vec(px, 64).prop_map(|cells| {
            let (w, h) = (8, 8);
            let mut sf = SceneFlowField::invalid(w, h);
            let mut d0 = ScalarField::invalid(w, h);
            let mut d1 = ScalarField::invalid(w, h);
            let mut fl = Vec2Field::invalid(w, h);
            let mut noc = vec![false; w * h];
            for (i, (ev, e, gv, g)) in cells.into_iter().enumerate() {
                let (x, y) = (i % w, i / w);
                if ev {
                    sf.set(
                        x,
                        y,
                        SceneFlowSample {
                            d0: e.0,
                            d1: e.1,
                            u: e.2,
                            v: e.3,
                        },
                    );
                }
                if gv[0] {
                    d0.set(x, y, g.0)
                }
                if gv[1] {
                    d1.set(x, y, g.1)
                }
                if gv[2] {
                    fl.set(x, y, g.2, g.3)
                }
                noc[i] = gv[3];
            }
            (sf, GroundTruth::new(d0, d1, fl, noc).unwrap())
        })
    }

    proptest! {
        #[test]
        fn sf_dominates_components((sf, gt) in random_case()) {
            for split in Split::BOTH {
                if let Ok(st) = evaluate(&sf, &gt, split) {
                    prop_assert!(st.sf >= st.d1 && st.sf >= st.d2 && st.sf >= st.fl);
                    for p in [st.d1, st.d2, st.fl, st.sf, st.density] {
                        prop_assert!((0.0..=100.0).contains(&p));
                    }
                }
            }
        }

        #[test]
        fn noc_is_a_subset((sf, gt) in random_case()) {
            let t = Thresholds::default();
            let noc = count_outliers(&sf, &gt, Split::Noc, &t).unwrap();
            let occ = count_outliers(&sf, &gt, Split::Occ, &t).unwrap();
            prop_assert!(noc.evaluated <= occ.evaluated);
            prop_assert!(noc.ground_truth <= occ.ground_truth);
        }
    }
}
