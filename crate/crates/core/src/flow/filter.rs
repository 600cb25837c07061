use rayon::prelude::*;

use super::MatchField;
use crate::error::{check_extent, Result};
use crate::raster::{in_bounds, sample_vec2, Point, Vec2Field};

/// Forward-backward check against two inverse fields. A forward vector `f`
/// at `x` survives only if `x + f` is inside the image and, for *each*
/// inverse field `g`, `|f + g(x + f)| <= threshold` with `g` sampled
/// bilinearly. Failing either inverse field removes the match.
pub fn consistency_filter(
    forward: &MatchField,
    inverse: [&MatchField; 2],
    threshold: f32,
) -> Result<Vec2Field> {
    let fwd = &forward.field;
    for g in inverse {
        check_extent("inverse field", fwd.extent(), g.field.extent())?;
    }
    let w = fwd.width;
    let mut out = fwd.clone();
    out.u
        .par_iter_mut()
        .zip(out.v.par_iter_mut())
        .zip(out.valid.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((u, v), valid))| {
            if !*valid {
                return;
            }
            let target = Point::new((i % w) as f32 + *u, (i / w) as f32 + *v);
            let consistent = in_bounds(fwd.extent(), target)
                && inverse.iter().all(|g| match sample_vec2(&g.field, target) {
                    Some((gu, gv)) => (*u + gu).hypot(*v + gv) <= threshold,
                    None => false,
                });
            if !consistent {
                *u = 0.0;
                *v = 0.0;
                *valid = false;
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mf(field: Vec2Field) -> MatchField {
        let n = field.width * field.height;
        MatchField {
            field,
            cost: vec![0.0; n],
        }
    }

    #[test]
    fn zero_fields_are_consistent() {
        let z = mf(Vec2Field::constant(8, 6, 0.0, 0.0));
        let out = consistency_filter(&z, [&z, &z], 1.0).unwrap();
        assert_eq!(out.valid_count(), 48);
    }

    #[test]
    fn exact_cycle_passes_and_any_bad_inverse_fails() {
        let fwd = mf(Vec2Field::constant(12, 3, 4.0, 0.0));
        let back = mf(Vec2Field::constant(12, 3, -4.0, 0.0));
        let out = consistency_filter(&fwd, [&back, &back], 1.0).unwrap();
        assert_eq!(out.get(2, 1), Some((4.0, 0.0)));
        // x + 4 leaves the image for the last four columns.
        assert_eq!(out.get(8, 1), None);
        assert_eq!(out.get(7, 1), Some((4.0, 0.0)));

        let short = mf(Vec2Field::constant(12, 3, -1.0, 0.0));
        let out = consistency_filter(&fwd, [&back, &short], 1.0).unwrap();
        assert_eq!(out.valid_count(), 0);
        let out = consistency_filter(&fwd, [&short, &back], 1.0).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn extent_mismatch() {
        let a = mf(Vec2Field::constant(4, 4, 0.0, 0.0));
        let b = mf(Vec2Field::constant(4, 5, 0.0, 0.0));
        assert!(consistency_filter(&a, [&a, &b], 1.0).is_err());
    }
}
