use crate::error::{Error, Result};
use crate::mask::{distance_to_foreground, distance_transform, BBox, BinaryMask, Point};

/// Negative clicks closer than this to the foreground are dropped.
pub const MIN_NEGATIVE_DISTANCE: f64 = 2.0;

/// The foreground pixel deepest inside the mask (largest distance to the
/// background). Ties resolve to the first pixel in raster order.
pub fn positive_point(coarse: &BinaryMask) -> Result<Point> {
    let dt = distance_transform(coarse)?;
    deepest_point(coarse, dt.data())
}

pub(crate) fn deepest_point(coarse: &BinaryMask, dt: &[f64]) -> Result<Point> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&fg, &d)) in coarse.data().iter().zip(dt).enumerate() {
        if fg && best.is_none_or(|(_, b)| d > b) {
            best = Some((i, d));
        }
    }
    let (i, _) = best.ok_or(Error::EmptyMask("positive_point"))?;
    let w = coarse.width() as usize;
    Ok(Point::positive((i % w) as u32, (i / w) as u32))
}

/// The background pixel inside `bbox` farthest from the foreground, or `None`
/// when the box holds no background or every candidate sits within
/// [`MIN_NEGATIVE_DISTANCE`] of the foreground.
pub fn negative_point(coarse: &BinaryMask, bbox: &BBox) -> Result<Option<Point>> {
    if !bbox.fits(coarse.width(), coarse.height()) {
        return Err(Error::DimMismatch(format!(
            "box {:?} outside {}x{} mask",
            bbox,
            coarse.width(),
            coarse.height()
        )));
    }
    let dist = distance_to_foreground(coarse)?;
    let best = dist.argmax_where(|x, y| bbox.contains(x, y) && !coarse.get(x, y));
    Ok(match best {
        Some((x, y, d)) if d >= MIN_NEGATIVE_DISTANCE && d.is_finite() => {
            Some(Point::negative(x, y))
        }
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_square() {
        let m = BinaryMask::from_fn(21, 21, |x, y| (5..16).contains(&x) && (5..16).contains(&y));
        assert_eq!(positive_point(&m).unwrap(), Point::positive(10, 10));
    }

    #[test]
    fn empty_errors() {
        assert!(matches!(
            positive_point(&BinaryMask::new(4, 4)),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn filled_box_has_no_negative() {
        let m = BinaryMask::from_fn(20, 20, |x, y| (3..12).contains(&x) && (4..9).contains(&y));
        let b = m.tight_box().unwrap();
        assert_eq!(negative_point(&m, &b).unwrap(), None);
    }

    #[test]
    fn ring_center_is_negative() {
        let m = BinaryMask::from_fn(31, 31, |x, y| {
            let d2 = (x as i32 - 15).pow(2) + (y as i32 - 15).pow(2);
            (64..=144).contains(&d2)
        });
        let b = m.tight_box().unwrap();
        assert_eq!(
            negative_point(&m, &b).unwrap(),
            Some(Point::negative(15, 15))
        );
    }

    #[test]
    fn shallow_cavity_suppressed() {
        // one-pixel notch in a filled box
        let m = BinaryMask::from_fn(10, 10, |x, y| !(x == 5 && y == 2) && (2..8).contains(&y));
        let b = m.tight_box().unwrap();
        assert_eq!(negative_point(&m, &b).unwrap(), None);
    }
}
