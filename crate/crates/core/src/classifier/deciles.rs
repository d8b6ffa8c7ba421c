use crate::scalar::Scalar;

use super::ClassifierError;

pub const N_DECILES: usize = 9;

/// The 10th..90th percentiles of `scores`, ascending.
///
/// Percentile definition: sort ascending, `h = (n - 1) * q`, then linearly
/// interpolate between the order statistics at `floor(h)` and `floor(h) + 1`.
/// The position is computed in integer tenths so `h` carries no rounding.
pub fn compute_deciles<T: Scalar>(scores: &[T]) -> Result<[T; N_DECILES], ClassifierError> {
    if scores.is_empty() {
        return Err(ClassifierError::EmptyScores);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ClassifierError::NonFiniteScore);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values are totally ordered"));

    let mut out = [T::zero(); N_DECILES];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = interpolate_tenths(&sorted, i + 1);
    }
    Ok(out)
}

/// Percentile at `tenths / 10` of an ascending slice.
pub(crate) fn interpolate_tenths<T: Scalar>(sorted: &[T], tenths: usize) -> T {
    let pos = (sorted.len() - 1) * tenths;
    let lo = pos / 10;
    let rem = pos % 10;
    if rem == 0 {
        return sorted[lo];
    }
    let frac = T::of_usize(rem) / T::of(10.0);
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_through_ten() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        let d = compute_deciles(&s).unwrap();
        let want = [1.9, 2.8, 3.7, 4.6, 5.5, 6.4, 7.3, 8.2, 9.1];
        for (got, want) in d.iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_and_single() {
        assert_eq!(compute_deciles(&[0.8f64; 15]).unwrap(), [0.8; 9]);
        assert_eq!(compute_deciles(&[1.25f32]).unwrap(), [1.25; 9]);
    }

    #[test]
    fn empty_and_nan() {
        assert!(matches!(
            compute_deciles::<f64>(&[]),
            Err(ClassifierError::EmptyScores)
        ));
        assert!(matches!(
            compute_deciles(&[1.0, f64::NAN]),
            Err(ClassifierError::NonFiniteScore)
        ));
    }

    #[test]
    fn order_does_not_matter() {
        let a = [0.9, 0.1, 0.5, 0.7, 0.3];
        let b = [0.1, 0.3, 0.5, 0.7, 0.9];
        assert_eq!(compute_deciles(&a).unwrap(), compute_deciles(&b).unwrap());
    }
}
