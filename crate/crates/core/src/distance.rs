use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Distance metric tag.
///
/// `L2` reports *squared* Euclidean distance. Squaring is monotone on
/// non-negative reals so every ranking, heap order and pruning decision is
/// the same as with true Euclidean distance; only the reported magnitudes
/// differ. `Cosine` reports `1 - cos(a, b)`; a zero vector has similarity 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    L2,
    Cosine,
}

impl Metric {
    pub fn tag(self) -> u8 {
        match self {
            Metric::L2 => 0,
            Metric::Cosine => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Metric::L2),
            1 => Some(Metric::Cosine),
            _ => None,
        }
    }

    /// Unchecked hot-path distance. Callers guarantee equal lengths.
    #[inline]
    pub fn eval(self, a: &[f32], b: &[f32]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L2 => squared_l2(a, b),
            Metric::Cosine => cosine(a, b),
        }
    }

    /// Same as [`Metric::eval`] with 64-bit accumulation, for auditing ties.
    pub fn eval_f64(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum(),
            Metric::Cosine => cosine(a, b) as f64,
        }
    }

    /// Converts a reported distance to the metric's native scale
    /// (square root for L2, identity for cosine).
    pub fn native(self, reported: f64) -> f64 {
        match self {
            Metric::L2 => reported.max(0.0).sqrt(),
            Metric::Cosine => reported,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "cosine" | "angular" => Ok(Metric::Cosine),
            other => Err(Error::InvalidParams(format!("unknown metric {other:?}"))),
        }
    }
}

#[inline]
fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let (ra, rb) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..4 {
            let d = ca[i] - cb[i];
            acc[i] += d * d;
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        sum += d * d;
    }
    sum
}

fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = (na * nb).sqrt();
    if denom == 0.0 {
        return 1.0;
    }
    (1.0 - dot / denom).max(0.0) as f32
}

/// Number of distance evaluations performed by one search context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DistanceCounter {
    count: u64,
}

impl DistanceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn bump(&mut self) {
        self.count += 1;
    }

    pub fn get(&self) -> u64 {
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }
}

/// Checked distance evaluation that charges one unit to `counter`.
pub fn distance(metric: Metric, a: &[f32], b: &[f32], counter: &mut DistanceCounter) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    counter.bump();
    Ok(metric.eval(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let mut c = DistanceCounter::new();
        assert_eq!(distance(Metric::L2, &[1., 2., 3.], &[1., 2., 3.], &mut c).unwrap(), 0.0);
        assert_eq!(distance(Metric::Cosine, &[1., 0.], &[0., 1.], &mut c).unwrap(), 1.0);
        assert_eq!(distance(Metric::L2, &[0., 0.], &[3., 4.], &mut c).unwrap(), 25.0);
        assert_eq!(c.get(), 3);
        c.reset();
        assert_eq!(c.get(), 0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut c = DistanceCounter::new();
        assert!(matches!(
            distance(Metric::L2, &[1.0], &[1.0, 2.0], &mut c),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert_eq!(c.get(), 0);
    }

    #[test]
    fn identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let d = rng.random_range(1..40);
            let a: Vec<f32> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f32> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            for m in [Metric::L2, Metric::Cosine] {
                assert_eq!(m.eval(&a, &a), 0.0, "{m} identity");
                assert_eq!(m.eval(&a, &b), m.eval(&b, &a), "{m} symmetry");
                assert!(m.eval(&a, &b) >= 0.0);
            }
        }
    }

    #[test]
    fn squared_ordering_matches_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p: Vec<[f32; 3]> = (0..3)
                .map(|_| [rng.random(), rng.random(), rng.random()])
                .collect();
            let q = [rng.random::<f32>(), rng.random(), rng.random()];
            let sq: Vec<f64> = p.iter().map(|v| Metric::L2.eval_f64(v, &q)).collect();
            let eu: Vec<f64> = sq.iter().map(|d| d.sqrt()).collect();
            let argmin = |xs: &[f64]| {
                (0..xs.len())
                    .min_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(i.cmp(&j)))
                    .unwrap()
            };
            assert_eq!(argmin(&sq), argmin(&eu));
        }
    }

    #[test]
    fn metric_tags_round_trip() {
        for m in [Metric::L2, Metric::Cosine] {
            assert_eq!(Metric::from_tag(m.tag()), Some(m));
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
        assert!(Metric::from_tag(9).is_none());
    }
}
