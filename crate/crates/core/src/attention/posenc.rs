use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Sinusoid base shared with the transformer literature.
pub const POSITION_BASE: f64 = 10_000.0;

/// Fixed 2D sinusoidal encoding of normalized centers.
///
/// The first `d/2` channels encode x and the last `d/2` encode y. Inside each
/// half, channel `2i` is `sin(u * w_i)` and `2i + 1` is `cos(u * w_i)` with
/// `w_i = BASE^(-2i / (d/2))` and `u = coordinate * scale`.
pub fn positional_encoding_2d(centers: &[[f64; 2]], d: usize, scale: f64) -> Result<Tensor> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(Error::invalid("d", format!("{d} is not a positive multiple of 4")));
    }
    if centers.is_empty() {
        return Err(Error::invalid("centers", "no centers"));
    }
    let half = d / 2;
    let mut data = Vec::with_capacity(centers.len() * d);
    for c in centers {
        for &coord in c {
            let u = coord * scale;
            for i in 0..half / 2 {
                let w = POSITION_BASE.powf(-((2 * i) as f64) / half as f64);
                data.push((u * w).sin());
                data.push((u * w).cos());
            }
        }
    }
    Tensor::matrix(centers.len(), d, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_gives_zero_sin_unit_cos() {
        let e = positional_encoding_2d(&[[0.0, 0.0]], 12, 100.0).unwrap();
        for (j, &v) in e.data().iter().enumerate() {
            assert_eq!(v, if j % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn depends_only_on_position() {
        let e = positional_encoding_2d(&[[0.3, 0.6], [0.3, 0.6]], 8, 100.0).unwrap();
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn rejects_bad_width() {
        assert!(positional_encoding_2d(&[[0.1, 0.1]], 6, 100.0).is_err());
    }

    #[test]
    fn swapped_centers_match_direct_formula() {
        // Values below were produced by evaluating the sinusoid formula
        // independently (Python, math.sin/math.cos) for d = 16, scale = 100.
        let e = positional_encoding_2d(&[[0.2, 0.8], [0.8, 0.2]], 16, 100.0).unwrap();
        let expected_first: [f64; 16] = [
            0.9129452507276277,
            0.40808206181339196,
            0.9092974268256817,
            -0.4161468365471424,
            0.19866933079506122,
            0.9800665778412416,
            0.01999866669333308,
            0.9998000066665778,
            -0.9938886539233752,
            -0.11038724383904756,
            0.9893582466233818,
            -0.14550003380861354,
            0.7173560908995228,
            0.6967067093471654,
            0.0799146939691727,
            0.9968017063026194,
        ];
        for (a, b) in e.row(0).iter().zip(expected_first) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // Swapping the coordinates swaps the two halves.
        assert_eq!(&e.row(1)[..8], &e.row(0)[8..]);
        assert_eq!(&e.row(1)[8..], &e.row(0)[..8]);
        assert_ne!(&e.row(0)[..8], &e.row(1)[..8]);
    }
}
