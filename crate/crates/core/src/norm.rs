use serde::{Deserialize, Serialize};

/// Vector norm used for error measurement, contraction certificates and
/// multiplier bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    LInf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Norm of `a - b` without allocating.
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            Norm::L1 => diffs.map(f64::abs).sum(),
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::LInf => diffs.fold(0.0, |m, d| m.max(d.abs())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_simple_vector() {
        let v = [3.0, -4.0];
        assert_eq!(Norm::L1.of(&v), 7.0);
        assert_eq!(Norm::L2.of(&v), 5.0);
        assert_eq!(Norm::LInf.of(&v), 4.0);
        assert_eq!(Norm::L2.dist(&v, &[3.0, 0.0]), 4.0);
    }
}
