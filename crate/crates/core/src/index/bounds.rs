//! Expected fraction of in-range neighbors seen per hop at the landing layer.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsCase {
    /// Landing one layer above `l`, windows always cover the range (`o > 4`).
    A,
    /// Landing one layer above `l`, `o <= 4`.
    B,
    /// Landing on layer `l` itself.
    C,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionBounds {
    pub lower: f64,
    pub upper: f64,
    pub case: BoundsCase,
}

impl FractionBounds {
    pub fn contains(&self, f: f64) -> bool {
        match self.case {
            BoundsCase::A => self.lower < f && f < self.upper,
            BoundsCase::B => self.lower <= f && f < self.upper,
            BoundsCase::C => self.lower <= f && f <= self.upper,
        }
    }
}

/// Largest `l` with `2 o^l <= n'` (0 when `n' < 2`).
pub fn highest_covered_layer(o: u64, n_prime: u64) -> u32 {
    let mut l = 0u32;
    let mut w = 2u128 * o as u128;
    while w <= n_prime as u128 {
        l += 1;
        w *= o as u128;
    }
    l
}

/// `true` when `n' <= 2 o^(l + 1/2)`, i.e. `l' - l <= 1/2`, tested exactly
/// as `n'^2 <= 4 o^(2l + 1)`.
fn within_half_layer(o: u64, l: u32, n_prime: u64) -> bool {
    let lhs = (n_prime as u128).checked_mul(n_prime as u128);
    let rhs = (o as u128)
        .checked_pow(2 * l + 1)
        .and_then(|p| p.checked_mul(4));
    match (lhs, rhs) {
        (Some(a), Some(b)) => a <= b,
        (_, None) => true,
        (None, Some(_)) => false,
    }
}

/// Piecewise bounds on the per-hop in-range neighbor fraction for a range
/// holding `n'` values, where `l = floor(log_o(n'/2))`.
pub fn fraction_bounds(o: u64, l: u32, n_prime: u64) -> Result<FractionBounds> {
    let err = |reason| Error::BoundsCase { o, l, n_prime, reason };
    if o < 2 {
        return Err(err("o must be at least 2"));
    }
    if n_prime < 2 {
        return Err(err("n' must be at least 2"));
    }
    if l != highest_covered_layer(o, n_prime) {
        return Err(err("l is not floor(log_o(n'/2))"));
    }
    let of = o as f64;
    let ol = of.powi(l as i32);
    if within_half_layer(o, l, n_prime) {
        Ok(FractionBounds {
            lower: 0.75 - 1.0 / (4.0 * ol),
            upper: 1.0 - (ol + 1.0) / (4.0 * ol * of.sqrt()),
            case: BoundsCase::C,
        })
    } else if o > 4 {
        Ok(FractionBounds {
            lower: 1.0 / of.sqrt(),
            upper: 0.5,
            case: BoundsCase::A,
        })
    } else {
        let next = 4.0 * ol * of;
        Ok(FractionBounds {
            lower: std::f64::consts::SQRT_2 / 2.0 - 1.0 / next,
            upper: 0.75 - 1.0 / next,
            case: BoundsCase::B,
        })
    }
}

/// Closed-form expected fraction for sequential attributes, before bounding.
pub fn expected_fraction(o: u64, n_prime: u64) -> Result<f64> {
    let l = highest_covered_layer(o, n_prime);
    let b = fraction_bounds(o, l, n_prime)?;
    let n = n_prime as f64;
    let ol = (o as f64).powi(l as i32);
    Ok(match b.case {
        BoundsCase::C => 1.0 - (ol + 1.0) / (2.0 * n),
        BoundsCase::A if n < ol * o as f64 => n / (2.0 * ol * o as f64),
        BoundsCase::A | BoundsCase::B => {
            let w = ol * o as f64;
            w / (2.0 * n) + (n - 1.0) / (4.0 * w)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_two_anchor() {
        let b = fraction_bounds(2, 10, 2048).unwrap();
        assert_eq!(b.case, BoundsCase::C);
        assert!((b.lower - 0.7497).abs() < 1e-3, "{}", b.lower);
        assert!((b.upper - 0.8230).abs() < 1e-3, "{}", b.upper);
    }

    #[test]
    fn base_four_case_c() {
        let b = fraction_bounds(4, 1, 8).unwrap();
        assert_eq!(b.case, BoundsCase::C);
        assert_eq!(b.lower, 0.6875);
        assert_eq!(b.upper, 0.84375);
    }

    #[test]
    fn base_sixteen_case_a() {
        // l = 1, n'/2 = 16^1.7: strictly between l'-1 and l'-1/2.
        let b = fraction_bounds(16, 1, 223).unwrap();
        assert_eq!(b.case, BoundsCase::A);
        assert_eq!((b.lower, b.upper), (0.25, 0.5));
    }

    #[test]
    fn inconsistent_layer_rejected() {
        assert!(fraction_bounds(4, 2, 8).is_err());
        assert!(fraction_bounds(4, 0, 1).is_err());
        assert!(fraction_bounds(1, 0, 8).is_err());
    }

    #[test]
    fn closed_form_falls_inside_bounds() {
        for o in [2u64, 3, 4, 5, 8, 16] {
            for n in 2..5000u64 {
                let l = highest_covered_layer(o, n);
                let b = fraction_bounds(o, l, n).unwrap();
                let f = expected_fraction(o, n).unwrap();
                // case (a) is only exact below o^(l+1); above it the (b) form applies
                if b.case == BoundsCase::A && n as f64 >= (o as f64).powi(l as i32 + 1) {
                    continue;
                }
                assert!(b.contains(f) || (f - b.lower).abs() < 1e-12 || (f - b.upper).abs() < 1e-12,
                    "o={o} n'={n} f={f} bounds={b:?}");
            }
        }
    }

    #[test]
    fn highest_layer_matches_floor_log() {
        assert_eq!(highest_covered_layer(4, 2048), 5);
        assert_eq!(highest_covered_layer(4, 100), 2);
        assert_eq!(highest_covered_layer(4, 3), 0);
        assert_eq!(highest_covered_layer(2, 2048), 10);
        assert_eq!(highest_covered_layer(4, 1), 0);
    }
}
