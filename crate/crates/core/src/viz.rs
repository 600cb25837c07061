//! Color renderings of disparity, flow and error maps, and point-cloud
//! export of 3D motion vectors.

use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::combine::SceneFlowField;
use crate::error::{check_extent, Error, Result};
use crate::eval::{pixel_outliers, GroundTruth, Thresholds};
use crate::raster::{Image, ScalarField, Vec2Field};
use crate::reconstruct::MotionVector3D;

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];
pub const INLIER: Rgb = [0, 192, 0];
pub const OUTLIER: Rgb = [224, 0, 0];
/// Pixels with ground truth but no estimate, typically where the motion
/// leaves the image.
pub const SHADED: Rgb = [96, 96, 96];

const fn rainbow_entry(i: usize) -> Rgb {
    let t = ((i % 64) * 255 / 63) as u8;
    match i / 64 {
        0 => [0, t, 255],
        1 => [0, 255, 255 - t],
        2 => [t, 255, 0],
        _ => [255, 255 - t, 0],
    }
}

const fn rainbow_table() -> [Rgb; 256] {
    let mut lut = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        lut[i] = rainbow_entry(i);
        i += 1;
    }
    lut
}

/// Blue to red in four linear segments: blue, cyan, green, yellow, red.
pub static RAINBOW: [Rgb; 256] = rainbow_table();

/// Segment lengths of the flow color wheel: red-yellow, yellow-green,
/// green-cyan, cyan-blue, blue-magenta, magenta-red.
const WHEEL_SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];
pub const WHEEL_LEN: usize = 55;

const fn wheel_table() -> [Rgb; WHEEL_LEN] {
    let mut wheel = [[0u8; 3]; WHEEL_LEN];
    let mut k = 0;
    let mut seg = 0;
    while seg < 6 {
        let n = WHEEL_SEGMENTS[seg];
        let mut i = 0;
        while i < n {
            let up = (255 * i / n) as u8;
            let down = 255 - up;
            wheel[k] = match seg {
                0 => [255, up, 0],
                1 => [down, 255, 0],
                2 => [0, 255, up],
                3 => [0, down, 255],
                4 => [up, 0, 255],
                _ => [255, 0, down],
            };
            k += 1;
            i += 1;
        }
        seg += 1;
    }
    wheel
}

pub static COLOR_WHEEL: [Rgb; WHEEL_LEN] = wheel_table();

/// Display settings shared by the scalar renderers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSpec {
    /// Value mapped to the last rainbow entry.
    pub max_display_value: f32,
    /// Draw ground-truth pixels without an estimate in gray instead of black.
    pub shade_oob: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            max_display_value: 128.0,
            shade_oob: true,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_display_value > 0.0) || !self.max_display_value.is_finite() {
            return Err(Error::InvalidParam {
                name: "max_display_value",
                reason: format!(
                    "must be positive and finite, got {}",
                    self.max_display_value
                ),
            });
        }
        Ok(())
    }
}

/// Rainbow index of `value`: `[0, max]` maps linearly onto `0..=255`.
pub fn rainbow_index(value: f32, max: f32) -> usize {
    ((value / max).clamp(0.0, 1.0) * 255.0).round() as usize
}

fn rgb_image(width: usize, height: usize, px: impl Fn(usize) -> Rgb + Sync) -> Image {
    let mut data = vec![0u8; width * height * 3];
    data.par_chunks_mut(3).enumerate().for_each(|(i, out)| {
        out.copy_from_slice(&px(i));
    });
    Image::new(width, height, 3, data).expect("extent of a valid field")
}

/// Valid pixels through [`RAINBOW`], gaps black.
pub fn render_disparity(field: &ScalarField, spec: &RenderSpec) -> Result<Image> {
    spec.validate()?;
    Ok(rgb_image(field.width, field.height, |i| {
        if field.valid[i] {
            RAINBOW[rainbow_index(field.values[i], spec.max_display_value)]
        } else {
            BLACK
        }
    }))
}

/// Continuous position of direction `(u, v)` on the color wheel, in
/// `[0, WHEEL_LEN - 1]`. Opposite directions lie half a turn apart.
pub fn wheel_position(u: f32, v: f32) -> f32 {
    let a = (-v).atan2(-u) / std::f32::consts::PI;
    (a + 1.0) / 2.0 * (WHEEL_LEN - 1) as f32
}

/// Wheel color of `(u, v)` scaled so that `|(u, v)| = max` is fully
/// saturated; the origin is white.
pub fn flow_color(u: f32, v: f32, max: f32) -> Rgb {
    let rad = (u.hypot(v) / max).min(1.0);
    let fk = wheel_position(u, v);
    let k0 = (fk.floor() as usize).min(WHEEL_LEN - 1);
    let k1 = (k0 + 1) % WHEEL_LEN;
    let f = fk - k0 as f32;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let col0 = COLOR_WHEEL[k0][c] as f32 / 255.0;
        let col1 = COLOR_WHEEL[k1][c] as f32 / 255.0;
        let col = (1.0 - f) * col0 + f * col1;
        out[c] = (255.0 * (1.0 - rad * (1.0 - col))).floor() as u8;
    }
    out
}

/// Nearest-rank 95th percentile of the valid flow magnitudes.
pub fn flow_normalization(field: &Vec2Field) -> f32 {
    let mut mags: Vec<f32> = (0..field.u.len())
        .filter(|&i| field.valid[i])
        .map(|i| field.u[i].hypot(field.v[i]))
        .collect();
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f32::total_cmp);
    let rank = ((0.95 * mags.len() as f64).ceil() as usize).clamp(1, mags.len());
    let m = mags[rank - 1];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Color-wheel rendering, saturating at the 95th percentile magnitude.
pub fn render_flow(field: &Vec2Field) -> Image {
    let max = flow_normalization(field);
    rgb_image(field.width, field.height, |i| {
        if field.valid[i] {
            flow_color(field.u[i], field.v[i], max)
        } else {
            BLACK
        }
    })
}

/// Which component an error map scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    D1,
    D2,
    Fl,
    Sf,
}

impl ErrorMetric {
    fn has_gt(self, gt: &GroundTruth, i: usize) -> bool {
        match self {
            ErrorMetric::D1 => gt.disp0.valid[i],
            ErrorMetric::D2 => gt.disp1.valid[i],
            ErrorMetric::Fl => gt.flow.valid[i],
            ErrorMetric::Sf => gt.disp0.valid[i] && gt.disp1.valid[i] && gt.flow.valid[i],
        }
    }
}

/// Inliers green, outliers red, ground truth without estimate shaded,
/// everything else black.
pub fn render_error(
    est: &SceneFlowField,
    gt: &GroundTruth,
    metric: ErrorMetric,
    spec: &RenderSpec,
) -> Result<Image> {
    spec.validate()?;
    check_extent("estimate", gt.extent(), est.extent())?;
    let t = Thresholds::default();
    Ok(rgb_image(est.width, est.height, |i| {
        if !metric.has_gt(gt, i) {
            return BLACK;
        }
        if !est.valid[i] {
            return if spec.shade_oob { SHADED } else { BLACK };
        }
        let [d1, d2, fl] = pixel_outliers(est, gt, i, &t);
        let bad = match metric {
            ErrorMetric::D1 => d1,
            ErrorMetric::D2 => d2,
            ErrorMetric::Fl => fl,
            ErrorMetric::Sf => d1 || d2 || fl,
        };
        if bad {
            OUTLIER
        } else {
            INLIER
        }
    }))
}

/// Writes an ASCII PLY file with a start and an end vertex per vector and
/// one edge joining them. Both vertices are colored by motion magnitude.
pub fn export_pointcloud(vectors: &[MotionVector3D], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if vectors.is_empty() {
        return Err(Error::InvalidParam {
            name: "vectors",
            reason: "point cloud needs at least one vector".into(),
        });
    }
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let max = vectors
        .iter()
        .map(MotionVector3D::magnitude)
        .fold(0.0, f64::max);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    write!(
        out,
        "ply\nformat ascii 1.0\ncomment scene flow motion vectors\n\
         element vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element edge {}\nproperty int vertex1\nproperty int vertex2\nend_header\n",
        2 * vectors.len(),
        vectors.len()
    )
    .map_err(io)?;
    for mv in vectors {
        let [r, g, b] = if max > 0.0 {
            RAINBOW[rainbow_index(mv.magnitude() as f32, max as f32)]
        } else {
            RAINBOW[0]
        };
        for p in [mv.start, mv.end()] {
            writeln!(out, "{} {} {} {r} {g} {b}", p[0], p[1], p[2]).map_err(io)?;
        }
    }
    for i in 0..vectors.len() {
        writeln!(out, "{} {}", 2 * i, 2 * i + 1).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combine::SceneFlowSample;
    use proptest::prelude::*;

    fn px(img: &Image, i: usize) -> Rgb {
        let p = img.pixel(i % img.width(), i / img.width());
        [p[0], p[1], p[2]]
    }

    #[test]
    fn tables() {
        assert_eq!(RAINBOW[0], [0, 0, 255]);
        assert_eq!(RAINBOW[255], [255, 0, 0]);
        assert_eq!(COLOR_WHEEL.len(), 55);
        assert_eq!(COLOR_WHEEL[0], [255, 0, 0]);
        assert_eq!(COLOR_WHEEL[15], [255, 255, 0]);
        assert_eq!(COLOR_WHEEL[21], [0, 255, 0]);
    }

    #[test]
    fn disparity_rendering() {
        let spec = RenderSpec {
            max_display_value: 64.0,
            ..Default::default()
        };
        let mut f = ScalarField::from_fn(3, 1, |x, _| [64.0, 32.0, 0.0][x]);
        let img = render_disparity(&f, &spec).unwrap();
        assert_eq!(px(&img, 0), RAINBOW[255]);
        assert_eq!(px(&img, 1), RAINBOW[128]);
        assert_eq!(px(&img, 2), RAINBOW[0]);
        f.valid = vec![false; 3];
        let img = render_disparity(&f, &spec).unwrap();
        assert!(img.data().iter().all(|&b| b == 0));
        let bad = RenderSpec {
            max_display_value: 0.0,
            ..Default::default()
        };
        assert!(render_disparity(&f, &bad).is_err());
    }

    #[test]
    fn flow_rendering() {
        let mut f = Vec2Field::constant(2, 1, 0.0, 0.0);
        assert_eq!(px(&render_flow(&f), 0), [255, 255, 255]);
        f.valid = vec![false; 2];
        assert!(render_flow(&f).data().iter().all(|&b| b == 0));
        for m in [0.5f32, 3.0, 40.0] {
            let d = (wheel_position(m, 0.0) - wheel_position(-m, 0.0)).abs();
            assert_eq!(d, (WHEEL_LEN - 1) as f32 / 2.0);
            assert_ne!(flow_color(m, 0.0, m), flow_color(-m, 0.0, m));
        }
    }

    #[test]
    fn percentile_normalization() {
        let mut f = Vec2Field::invalid(20, 1);
        for x in 0..20 {
            f.set(x, 0, (x + 1) as f32, 0.0);
        }
        assert_eq!(flow_normalization(&f), 19.0);
        assert_eq!(
            flow_normalization(&Vec2Field::constant(3, 3, 0.0, 0.0)),
            1.0
        );
    }

    fn error_fixture() -> (SceneFlowField, GroundTruth) {
        let d = ScalarField::from_fn(4, 3, |_, _| 20.0);
        let f = Vec2Field::constant(4, 3, 1.0, 0.0);
        let mut sf = SceneFlowField::invalid(4, 3);
        for i in 0..12 {
            sf.set(
                i % 4,
                i / 4,
                SceneFlowSample {
                    u: 1.0,
                    v: 0.0,
                    d0: 20.0,
                    d1: 20.0,
                },
            );
        }
        (sf, GroundTruth::dense(d.clone(), d, f).unwrap())
    }

    #[test]
    fn error_rendering() {
        let spec = RenderSpec::default();
        let (mut sf, mut gt) = error_fixture();
        let img = render_error(&sf, &gt, ErrorMetric::Sf, &spec).unwrap();
        assert!((0..12).all(|i| px(&img, i) == INLIER));

        sf.d0[5] = 40.0;
        let img = render_error(&sf, &gt, ErrorMetric::D1, &spec).unwrap();
        assert_eq!((0..12).filter(|&i| px(&img, i) == OUTLIER).count(), 1);
        assert_eq!(px(&img, 5), OUTLIER);
        let img = render_error(&sf, &gt, ErrorMetric::Fl, &spec).unwrap();
        assert_eq!(px(&img, 5), INLIER);

        gt.disp0.valid[0] = false;
        sf.valid = vec![false; 12];
        let img = render_error(&sf, &gt, ErrorMetric::D1, &spec).unwrap();
        assert_eq!(px(&img, 0), BLACK);
        assert!((1..12).all(|i| px(&img, i) == SHADED));
    }

    #[test]
    fn error_extent_mismatch() {
        let (_, gt) = error_fixture();
        let other = SceneFlowField::invalid(3, 3);
        assert!(render_error(&other, &gt, ErrorMetric::Sf, &RenderSpec::default()).is_err());
    }

    fn parse_ply(text: &str) -> (Vec<[f64; 3]>, Vec<[usize; 2]>) {
        let mut lines = text.lines();
        let (mut nv, mut ne) = (0, 0);
        for l in lines.by_ref() {
            let t: Vec<&str> = l.split_whitespace().collect();
            match t.as_slice() {
                ["element", "vertex", n] => nv = n.parse().unwrap(),
                ["element", "edge", n] => ne = n.parse().unwrap(),
                ["end_header"] => break,
                _ => {}
            }
        }
        let verts = lines
            .by_ref()
            .take(nv)
            .map(|l| {
                let v: Vec<f64> = l
                    .split_whitespace()
                    .take(3)
                    .map(|s| s.parse().unwrap())
                    .collect();
                [v[0], v[1], v[2]]
            })
            .collect();
        let edges = lines
            .take(ne)
            .map(|l| {
                let v: Vec<usize> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
                [v[0], v[1]]
            })
            .collect();
        (verts, edges)
    }

    #[test]
    fn pointcloud_static_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let mv = MotionVector3D {
            start: [1.0, 2.0, 3.0],
            delta: [0.0; 3],
        };
        export_pointcloud(&[mv], &p).unwrap();
        let (v, e) = parse_ply(&std::fs::read_to_string(&p).unwrap());
        assert_eq!(v, vec![[1.0, 2.0, 3.0]; 2]);
        assert_eq!(e, vec![[0, 1]]);
        assert!(export_pointcloud(&[], &p).is_err());
        assert!(export_pointcloud(&[mv], dir.path().join("missing/dir/c.ply")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pointcloud_roundtrip(raw in proptest::collection::vec(proptest::array::uniform6(-500.0f64..500.0), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("c.ply");
            let vs: Vec<MotionVector3D> = raw
                .iter()
                .map(|a| MotionVector3D { start: [a[0], a[1], a[2]], delta: [a[3], a[4], a[5]] })
                .collect();
            export_pointcloud(&vs, &p).unwrap();
            let (verts, edges) = parse_ply(&std::fs::read_to_string(&p).unwrap());
            prop_assert_eq!(verts.len(), 2 * vs.len());
            prop_assert_eq!(edges.len(), vs.len());
            for (i, mv) in vs.iter().enumerate() {
                prop_assert_eq!(edges[i], [2 * i, 2 * i + 1]);
                for (got, want) in [(verts[2 * i], mv.start), (verts[2 * i + 1], mv.end())] {
                    for c in 0..3 {
                        prop_assert!((got[c] - want[c]).abs() <= 1e-4);
                    }
                }
            }
        }

        #[test]
        fn error_classes_partition(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (mut sf, mut gt) = error_fixture();
            for i in 0..12 {
                sf.valid[i] = rng.random_bool(0.7);
                sf.d0[i] = rng.random_range(1.0..60.0);
                gt.disp0.valid[i] = rng.random_bool(0.7);
            }
            let img = render_error(&sf, &gt, ErrorMetric::D1, &RenderSpec::default()).unwrap();
            for i in 0..12 {
                let c = px(&img, i);
                prop_assert!([INLIER, OUTLIER, SHADED, BLACK].contains(&c));
                prop_assert_eq!(c == BLACK, !gt.disp0.valid[i]);
            }
        }
    }
}
