//! Deterministic synthetic scenes with known disparity and motion, used by
//! the test suites, the guide, and for smoke-testing the command line tool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kitti::FrameQuadruple;
use crate::raster::Image;

/// Margin of hidden texture kept around every generated view so shifted
/// views show real content instead of clamped borders.
pub const MARGIN: usize = 24;

/// Lattice spacings of the noise octaves summed by [`texture`].
const OCTAVES: [usize; 5] = [1, 2, 4, 8, 16];

/// Multi-scale random texture: equally weighted octaves of bilinearly
/// interpolated lattice noise, normalized to mean 128 and standard
/// deviation 50. The coarse octaves keep downsampled levels textured.
pub fn texture(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0f32; width * height];
    for s in OCTAVES {
        let gw = width / s + 2;
        let gh = height / s + 2;
        let lattice: Vec<f32> = (0..gw * gh)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        let at = |i: usize, j: usize| lattice[j * gw + i];
        for y in 0..height {
            let (y0, fy) = (y / s, (y % s) as f32 / s as f32);
            for x in 0..width {
                let (x0, fx) = (x / s, (x % s) as f32 / s as f32);
                let top = (1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0);
                let bottom = (1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1);
                acc[y * width + x] += (1.0 - fy) * top + fy * bottom;
            }
        }
    }
    let n = acc.len() as f32;
    let mean = acc.iter().sum::<f32>() / n;
    let sd = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f32>() / n)
        .sqrt()
        .max(1e-6);
    Image::from_fn_gray(width, height, |x, y| {
        let v = 128.0 + 50.0 * (acc[y * width + x] - mean) / sd;
        v.round().clamp(0.0, 255.0) as u8
    })
}

/// Window of `canvas` whose top-left corner is at `(MARGIN + ox, MARGIN + oy)`.
fn view(canvas: &Image, width: usize, height: usize, ox: isize, oy: isize) -> Image {
    Image::from_fn_gray(width, height, |x, y| {
        let cx = (MARGIN as isize + x as isize + ox) as usize;
        let cy = (MARGIN as isize + y as isize + oy) as usize;
        canvas.gray(cx, cy)
    })
}

fn canvas(width: usize, height: usize, seed: u64) -> Image {
    texture(width + 2 * MARGIN, height + 2 * MARGIN, seed)
}

fn check_shift(v: isize) {
    assert!(
        v.unsigned_abs() <= MARGIN,
        "shift {v} exceeds margin {MARGIN}"
    );
}

/// Frames `(a, b)` where every pixel of `a` moves by `(tx, ty)`:
/// `b(x + tx, y + ty) = a(x, y)`.
///
/// # Panics
/// If a shift exceeds [`MARGIN`].
pub fn translated_pair(
    width: usize,
    height: usize,
    tx: isize,
    ty: isize,
    seed: u64,
) -> (Image, Image) {
    check_shift(tx);
    check_shift(ty);
    let c = canvas(width, height, seed);
    (
        view(&c, width, height, 0, 0),
        view(&c, width, height, -tx, -ty),
    )
}

/// Rectified pair of a fronto-parallel plane at constant `disparity`:
/// `right(x - d, y) = left(x, y)`. The leftmost `disparity` columns of the
/// left view are not visible in the right view.
pub fn stereo_pair(width: usize, height: usize, disparity: usize, seed: u64) -> (Image, Image) {
    check_shift(disparity as isize);
    let c = canvas(width, height, seed);
    (
        view(&c, width, height, 0, 0),
        view(&c, width, height, disparity as isize, 0),
    )
}

/// Two stereo pairs of a fronto-parallel plane at constant `disparity` that
/// translates by `motion` in the image between the two time steps. With
/// `motion = (0, 0)` the scene is static and both pairs are identical.
pub fn quadruple(
    width: usize,
    height: usize,
    disparity: usize,
    motion: (isize, isize),
    seed: u64,
) -> FrameQuadruple {
    check_shift(disparity as isize);
    check_shift(motion.0);
    check_shift(motion.1);
    check_shift(disparity as isize - motion.0);
    let c = canvas(width, height, seed);
    let d = disparity as isize;
    FrameQuadruple {
        left_t: view(&c, width, height, 0, 0),
        right_t: view(&c, width, height, d, 0),
        left_t1: view(&c, width, height, -motion.0, -motion.1),
        right_t1: view(&c, width, height, d - motion.0, -motion.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(texture(16, 8, 3), texture(16, 8, 3));
        assert_ne!(texture(16, 8, 3), texture(16, 8, 4));
    }

    #[test]
    fn geometry_conventions() {
        let (a, b) = translated_pair(20, 10, 3, -2, 1);
        assert_eq!(b.gray(5 + 3, 5 - 2), a.gray(5, 5));

        let (l, r) = stereo_pair(20, 10, 6, 1);
        assert_eq!(r.gray(10 - 6, 4), l.gray(10, 4));

        let q = quadruple(20, 10, 4, (2, 1), 9);
        assert_eq!(q.right_t.gray(8 - 4, 3), q.left_t.gray(8, 3));
        assert_eq!(q.left_t1.gray(8 + 2, 3 + 1), q.left_t.gray(8, 3));
        assert_eq!(q.right_t1.gray(10 - 4, 5), q.left_t1.gray(10, 5));
    }

    #[test]
    fn texture_uses_the_dynamic_range() {
        let t = texture(64, 64, 0);
        let lo = *t.data().iter().min().unwrap();
        let hi = *t.data().iter().max().unwrap();
        assert!(lo < 40 && hi > 215, "{lo}..{hi}");
    }
}
