use crate::error::{Error, Result};

/// Smallest standard deviation a normalizer will divide by.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension standardization of regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        for row in rows {
            if count == 0 {
                sum = vec![0.0; row.len()];
                sum_sq = vec![0.0; row.len()];
            } else if row.len() != sum.len() {
                return Err(Error::DimensionMismatch {
                    what: "normalizer rows",
                    expected: sum.len(),
                    got: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyInput("normalizer targets"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_dimension_is_floored() {
        let rows = [vec![1.0, 2.0], vec![1.0, 4.0]];
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(n.mean, vec![1.0, 3.0]);
        assert_eq!(n.std, vec![STD_FLOOR, 1.0]);
        assert!(Normalizer::fit(std::iter::empty()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 2..20),
                      probe in proptest::collection::vec(-10.0f64..10.0, 4)) {
            let n = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
            let back = n.denormalize(&n.normalize(&probe));
            for (a, b) in back.iter().zip(&probe) {
                prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
