//! Weight codebooks: the finite set of rational values a network may use.

use crate::rational::{ceil_log2, format_rat, rat, Rat};
use num_traits::Signed;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantMode {
    /// `{-1, 1/lambda, 2/lambda, ..., (lambda-1)/lambda}`.
    Linear,
    /// Arbitrary distinct rationals.
    Nonlinear,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodebookError {
    #[error("codebook needs at least 2 values, got {0}")]
    TooSmall(usize),
    #[error("duplicate codebook value {0}")]
    Duplicate(String),
    #[error("linear codebook size must be a power of two >= 2, got {0}")]
    BadLinearSize(u64),
}

/// An ordered list of distinct rational weight values. Edges store indices
/// into this list, so storing one weight costs `ceil(log2 lambda)` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightCodebook {
    mode: QuantMode,
    values: Vec<Rat>,
}

impl WeightCodebook {
    pub fn nonlinear(values: Vec<Rat>) -> Result<Self, CodebookError> {
        if values.len() < 2 {
            return Err(CodebookError::TooSmall(values.len()));
        }
        let mut sorted = values.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(CodebookError::Duplicate(format_rat(&w[0])));
            }
        }
        Ok(Self {
            mode: QuantMode::Nonlinear,
            values,
        })
    }

    /// The evenly spaced codebook `{-1, 1/lambda, ..., (lambda-1)/lambda}`.
    /// `lambda` must be a power of two so indices fill the bit budget.
    pub fn linear(lambda: u64) -> Result<Self, CodebookError> {
        if lambda < 2 || !lambda.is_power_of_two() {
            return Err(CodebookError::BadLinearSize(lambda));
        }
        let mut values = vec![rat(-1, 1)];
        for k in 1..lambda {
            values.push(rat(k as i64, lambda as i64));
        }
        Ok(Self {
            mode: QuantMode::Linear,
            values,
        })
    }

    pub fn from_parts(mode: QuantMode, values: Vec<Rat>) -> Result<Self, CodebookError> {
        match mode {
            QuantMode::Nonlinear => Self::nonlinear(values),
            QuantMode::Linear => {
                let lambda = values.len() as u64;
                let expected = Self::linear(lambda)?;
                if expected.values != values {
                    // Accept only the canonical layout for the linear mode.
                    return Err(CodebookError::BadLinearSize(lambda));
                }
                Ok(expected)
            }
        }
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }

    pub fn lambda(&self) -> usize {
        self.values.len()
    }

    /// Bits per stored weight.
    pub fn bit_width(&self) -> u32 {
        ceil_log2(self.values.len() as u128)
    }

    pub fn value(&self, idx: usize) -> Option<&Rat> {
        self.values.get(idx)
    }

    pub fn index_of(&self, v: &Rat) -> Option<usize> {
        self.values.iter().position(|x| x == v)
    }

    /// Largest |value| in the book (used by resource estimates).
    pub fn max_abs(&self) -> Rat {
        self.values
            .iter()
            .map(|v| v.abs())
            .max()
            .expect("non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn linear_layout() {
        let cb = WeightCodebook::linear(4).unwrap();
        assert_eq!(
            cb.values(),
            &[rat(-1, 1), rat(1, 4), rat(2, 4), rat(3, 4)]
        );
        assert_eq!(cb.lambda(), 4);
        assert_eq!(cb.bit_width(), 2);
    }

    #[test]
    fn linear_rejects_non_power_of_two() {
        assert!(WeightCodebook::linear(3).is_err());
        assert!(WeightCodebook::linear(1).is_err());
        assert!(WeightCodebook::linear(2).is_ok());
    }

    #[test]
    fn nonlinear_rejects_duplicates_and_singletons() {
        assert!(WeightCodebook::nonlinear(vec![rat(1, 2)]).is_err());
        assert!(WeightCodebook::nonlinear(vec![rat(1, 2), rat(1, 2)]).is_err());
        let cb = WeightCodebook::nonlinear(vec![rat(1, 2), rat(-1, 2)]).unwrap();
        assert_eq!(cb.bit_width(), 1);
        assert_eq!(cb.index_of(&rat(-1, 2)), Some(1));
    }

    #[test]
    fn bit_width_rounds_up() {
        let vals: Vec<_> = (1..=5).map(|k| rat(k, 8)).collect();
        assert_eq!(WeightCodebook::nonlinear(vals).unwrap().bit_width(), 3);
    }
}
