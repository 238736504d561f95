//! Min-max normalization of prices and purchase counts.

use crate::error::{Error, Result};

/// Normalize raw prices to the inverse-price weight `alpha` in [0.01, 1]:
///
/// ```text
/// alpha_i = 0.01 + 0.99 * (p_max - p_i) / (p_max - p_min)
/// ```
///
/// The cheapest item maps to 1, the priciest to 0.01. When all prices are
/// equal every item maps to 1.0. Prices must be finite and positive.
pub fn normalize_price(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.is_empty() {
        return Err(Error::invalid("price list", "empty"));
    }
    for (i, &p) in prices.iter().enumerate() {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::invalid(
                format!("price at index {i}"),
                format!("{p} is not positive and finite"),
            ));
        }
    }
    let min = prices.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![1.0; prices.len()]);
    }
    let span = max - min;
    Ok(prices
        .iter()
        .map(|&p| 0.01 + 0.99 * (max - p) / span)
        .collect())
}

/// Normalize purchase counts to the frequency score `freq` in [0, 5]:
///
/// ```text
/// freq_i = 5 * (c_i - c_min) / (c_max - c_min)
/// ```
///
/// The most frequent buyer maps to 5, the least frequent to 0. When all
/// counts are equal every user maps to 2.5 (the midpoint).
pub fn normalize_frequency(counts: &[u64]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::invalid("count list", "empty"));
    }
    let min = *counts.iter().min().unwrap();
    let max = *counts.iter().max().unwrap();
    if min == max {
        return Ok(vec![2.5; counts.len()]);
    }
    let span = (max - min) as f64;
    Ok(counts
        .iter()
        .map(|&c| 5.0 * (c - min) as f64 / span)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn price_endpoints() {
        let a = normalize_price(&[10.0, 100.0]).unwrap();
        assert_eq!(a, vec![1.0, 0.01]);
    }

    #[test]
    fn price_midpoint() {
        let a = normalize_price(&[10.0, 55.0, 100.0]).unwrap();
        assert_relative_eq!(a[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(a[1], 0.505, max_relative = 1e-12);
        assert_relative_eq!(a[2], 0.01, max_relative = 1e-12);
    }

    #[test]
    fn price_all_equal_maps_to_one() {
        assert_eq!(normalize_price(&[7.0, 7.0, 7.0]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn price_rejects_bad_input() {
        assert!(normalize_price(&[]).is_err());
        assert!(normalize_price(&[1.0, 0.0]).is_err());
        assert!(normalize_price(&[1.0, -3.0]).is_err());
        assert!(normalize_price(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn frequency_endpoints_and_midpoint() {
        assert_eq!(normalize_frequency(&[0, 10]).unwrap(), vec![0.0, 5.0]);
        assert_eq!(
            normalize_frequency(&[0, 5, 10]).unwrap(),
            vec![0.0, 2.5, 5.0]
        );
        assert_eq!(normalize_frequency(&[4, 4]).unwrap(), vec![2.5, 2.5]);
        assert!(normalize_frequency(&[]).is_err());
    }

    proptest! {
        // Cheaper items never get smaller alpha; range always [0.01, 1].
        #[test]
        fn price_is_order_reversing(prices in proptest::collection::vec(0.01f64..1e6, 1..40)) {
            let a = normalize_price(&prices).unwrap();
            for i in 0..prices.len() {
                prop_assert!(a[i] >= 0.01 && a[i] <= 1.0);
                for j in 0..prices.len() {
                    if prices[i] < prices[j] {
                        prop_assert!(a[i] >= a[j]);
                    }
                }
            }
        }

        // Rescaling all prices by a common factor leaves alphas unchanged
        // up to float rounding.
        #[test]
        fn price_is_scale_invariant(
            prices in proptest::collection::vec(0.1f64..1e4, 2..20),
            scale in 0.01f64..100.0,
        ) {
            let spread = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - prices.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-6);
            let a = normalize_price(&prices).unwrap();
            let scaled: Vec<f64> = prices.iter().map(|p| p * scale).collect();
            let b = normalize_price(&scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        // Heavier buyers never get smaller freq; range always [0, 5].
        #[test]
        fn frequency_is_order_preserving(counts in proptest::collection::vec(0u64..10_000, 1..40)) {
            let f = normalize_frequency(&counts).unwrap();
            for i in 0..counts.len() {
                prop_assert!(f[i] >= 0.0 && f[i] <= 5.0);
                for j in 0..counts.len() {
                    if counts[i] < counts[j] {
                        prop_assert!(f[i] <= f[j]);
                    }
                }
            }
        }
    }
}
