//! Walsh-Hadamard patch descriptors for coarse flow initialization.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Image;

/// Number of coefficients kept per descriptor: the 4x4 block of lowest
/// sequencies in each axis, row-major.
pub const DESCRIPTOR_LEN: usize = 16;
const SIDE: usize = 4;

/// Row-major grid of `DESCRIPTOR_LEN`-dimensional descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptors {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Descriptors {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * DESCRIPTOR_LEN;
        &self.data[i..i + DESCRIPTOR_LEN]
    }
}

/// Walsh matrix of order `n` with rows sorted by sequency (number of sign
/// changes), entries ±1.
pub fn walsh_matrix(n: usize) -> Vec<Vec<i8>> {
    let mut rows: Vec<Vec<i8>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if (i & j).count_ones() % 2 == 0 { 1 } else { -1 })
                .collect()
        })
        .collect();
    rows.sort_by_key(|r| r.windows(2).filter(|w| w[0] != w[1]).count());
    rows
}

/// Unnormalized low-sequency Walsh-Hadamard coefficients of each pixel's
/// `window x window` patch. The patch spans `x - window/2 ..= x + window/2 - 1`
/// with edge clamping; the first coefficient is the patch sum.
pub fn wht_descriptors(image: &Image, window: usize) -> Result<Descriptors> {
    if !matches!(window, 4 | 8 | 16) {
        return Err(Error::InvalidParam {
            name: "descriptor_window",
            reason: format!("must be 4, 8 or 16, got {window}"),
        });
    }
    let (w, h) = image.extent();
    let basis = walsh_matrix(window);
    let half = (window / 2) as isize;
    let mut data = vec![0.0f32; w * h * DESCRIPTOR_LEN];
    data.par_chunks_mut(w * DESCRIPTOR_LEN)
        .enumerate()
        .for_each(|(y, row)| {
            let mut patch = vec![0.0f32; window * window];
            let mut partial = vec![0.0f32; window * SIDE];
            for x in 0..w {
                for r in 0..window {
                    let sy = (y as isize + r as isize - half).clamp(0, h as isize - 1) as usize;
                    for c in 0..window {
                        let sx = (x as isize + c as isize - half).clamp(0, w as isize - 1) as usize;
                        patch[r * window + c] = image.gray(sx, sy) as f32;
                    }
                }
                // Transform rows, keeping only the low-sequency columns.
                for r in 0..window {
                    for (s, b) in basis.iter().take(SIDE).enumerate() {
                        partial[r * SIDE + s] = (0..window)
                            .map(|c| b[c] as f32 * patch[r * window + c])
                            .sum();
                    }
                }
                let out = &mut row[x * DESCRIPTOR_LEN..(x + 1) * DESCRIPTOR_LEN];
                for (sy, b) in basis.iter().take(SIDE).enumerate() {
                    for sx in 0..SIDE {
                        out[sy * SIDE + sx] = (0..window)
                            .map(|r| b[r] as f32 * partial[r * SIDE + sx])
                            .sum();
                    }
                }
            }
        });
    Ok(Descriptors {
        width: w,
        height: h,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walsh_rows_are_sequency_ordered_and_orthogonal() {
        let m = walsh_matrix(8);
        for (s, row) in m.iter().enumerate() {
            assert_eq!(row.windows(2).filter(|w| w[0] != w[1]).count(), s);
        }
        for a in 0..8 {
            for b in 0..8 {
                let dot: i32 = (0..8).map(|k| m[a][k] as i32 * m[b][k] as i32).sum();
                assert_eq!(dot, if a == b { 8 } else { 0 });
            }
        }
    }

    #[test]
    fn constant_image_is_dc_only() {
        let img = Image::from_fn_gray(10, 9, |_, _| 7);
        let d = wht_descriptors(&img, 8).unwrap();
        let v = d.get(4, 4);
        assert_eq!(v[0], 7.0 * 64.0);
        assert!(v[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn impulse_has_unit_magnitude_coefficients() {
        // Patch of pixel (2, 2) with window 4 covers x, y in 0..4; impulse at (0, 0).
        let img = Image::from_fn_gray(4, 4, |x, y| if (x, y) == (0, 0) { 1 } else { 0 });
        let d = wht_descriptors(&img, 4).unwrap();
        assert!(d.get(2, 2).iter().all(|&c| c.abs() == 1.0));
    }

    #[test]
    fn linear_in_the_patch() {
        let a = Image::from_fn_gray(12, 12, |x, y| ((x * 13 + y * 29) % 97) as u8);
        let b = Image::from_fn_gray(12, 12, |x, y| 200 - ((x * 13 + y * 29) % 97) as u8);
        let da = wht_descriptors(&a, 8).unwrap();
        let db = wht_descriptors(&b, 8).unwrap();
        // b = 200 - a, so every non-DC coefficient negates.
        for (ca, cb) in da.get(6, 5)[1..].iter().zip(&db.get(6, 5)[1..]) {
            assert_eq!(*ca, -*cb);
        }
        assert_eq!(da.get(6, 5)[0] + db.get(6, 5)[0], 200.0 * 64.0);
    }

    #[test]
    fn rejects_bad_window() {
        let img = Image::from_fn_gray(8, 8, |_, _| 0);
        assert!(wht_descriptors(&img, 6).is_err());
        assert!(wht_descriptors(&img, 32).is_err());
    }
}
