use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::softmax_row;

/// Names accepted by [`BehaviorMatrix::named`].
pub const CATALOGUE: [&str; 9] = [
    "standard",
    "cascade",
    "independent",
    "top_2_cascade",
    "neighbor_1",
    "inverse_cascade",
    "random_0",
    "random_1",
    "random_2",
];

/// Fixed-structure behavior used by the embedding-level reward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorKind {
    #[default]
    Standard,
    Cascade,
    Independent,
}

impl BehaviorKind {
    pub fn name(self) -> &'static str {
        match self {
            BehaviorKind::Standard => "standard",
            BehaviorKind::Cascade => "cascade",
            BehaviorKind::Independent => "independent",
        }
    }

    pub fn matrix(self, positions: usize) -> BehaviorMatrix {
        BehaviorMatrix::named(self.name(), positions).expect("built-in behavior")
    }
}

/// `K x K` binary matrix; `c(k, l) = 1` iff the item at position `l`
/// influences the reward at position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BehaviorMatrix {
    pub name: String,
    positions: usize,
    c: Vec<bool>,
}

impl BehaviorMatrix {
    pub fn from_fn(name: &str, positions: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut c = Vec::with_capacity(positions * positions);
        for k in 0..positions {
            for l in 0..positions {
                c.push(f(k, l));
            }
        }
        Self {
            name: name.to_string(),
            positions,
            c,
        }
    }

    /// Builds from 0/1 rows; any other entry is rejected.
    pub fn from_rows(name: &str, rows: &[Vec<u8>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!(
                "behavior matrix '{name}' is not square"
            )));
        }
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "behavior matrix '{name}' has non-binary entries"
            )));
        }
        Ok(Self::from_fn(name, k, |a, b| rows[a][b] == 1))
    }

    /// Catalogue matrix for `positions` slots. Random variants are seeded by
    /// their suffix.
    pub fn named(name: &str, positions: usize) -> Result<Self> {
        Self::named_with_seed(name, positions, None)
    }

    /// Like [`BehaviorMatrix::named`], with an explicit seed for random variants.
    pub fn named_with_seed(name: &str, positions: usize, seed: Option<u64>) -> Result<Self> {
        let key = name.to_ascii_lowercase();
        let m = match key.as_str() {
            "standard" => Self::from_fn(&key, positions, |_, _| true),
            "cascade" => Self::from_fn(&key, positions, |k, l| l <= k),
            "independent" => Self::from_fn(&key, positions, |k, l| l == k),
            "top_2_cascade" => Self::from_fn(&key, positions, |k, l| l < 2 || l == k),
            "neighbor_1" => Self::from_fn(&key, positions, |k, l| k.abs_diff(l) <= 1),
            "inverse_cascade" => Self::from_fn(&key, positions, |k, l| l >= k),
            _ => {
                let idx = key
                    .strip_prefix("random_")
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::UnknownBehavior(name.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(idx));
                let mut c = Vec::with_capacity(positions * positions);
                for k in 0..positions {
                    for l in 0..positions {
                        let coin = rng.random_bool(0.5);
                        c.push(k == l || coin);
                    }
                }
                Self {
                    name: key,
                    positions,
                    c,
                }
            }
        };
        Ok(m)
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> bool {
        self.c[k * self.positions + l]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.positions)
            .map(|k| (0..self.positions).map(|l| self.get(k, l) as u8).collect())
            .collect()
    }
}

/// Context-dependent distribution over a behavior catalogue:
/// `p(c_z | x) = softmax_z(lambda_z * |theta_z . x|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorDistribution {
    pub lambdas: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub catalogue: Vec<BehaviorMatrix>,
}

impl BehaviorDistribution {
    pub fn new(
        lambdas: Vec<f64>,
        thetas: Vec<Vec<f64>>,
        catalogue: Vec<BehaviorMatrix>,
    ) -> Result<Self> {
        if catalogue.is_empty() {
            return Err(Error::InvalidArgument("behavior catalogue is empty".into()));
        }
        if lambdas.len() != catalogue.len() || thetas.len() != catalogue.len() {
            return Err(Error::Shape(
                "one lambda and theta per behavior required".into(),
            ));
        }
        Ok(Self {
            lambdas,
            thetas,
            catalogue,
        })
    }

    /// `theta_z ~ U[-1, 1]^dim_x`, shared temperature `lambda`.
    pub fn generate<R: Rng + ?Sized>(
        catalogue: Vec<BehaviorMatrix>,
        dim_x: usize,
        lambda: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let thetas = catalogue
            .iter()
            .map(|_| (0..dim_x).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Self::new(vec![lambda; catalogue.len()], thetas, catalogue)
    }

    pub fn len(&self) -> usize {
        self.catalogue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalogue.is_empty()
    }

    /// Writes `p(c_z | x)` for every catalogue entry into `out`.
    pub fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        let logits: Vec<f64> = self
            .thetas
            .iter()
            .zip(&self.lambdas)
            .map(|(t, l)| l * dot(t, x).abs())
            .collect();
        softmax_row(&logits, 1.0, out);
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.probs_into(x, &mut out);
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(name: &str, k: usize) -> Vec<Vec<u8>> {
        BehaviorMatrix::named(name, k).unwrap().rows()
    }

    #[test]
    fn cascade_is_lower_triangular() {
        assert_eq!(
            rows("cascade", 3),
            vec![vec![1, 0, 0], vec![1, 1, 0], vec![1, 1, 1]]
        );
    }

    #[test]
    fn independent_is_identity() {
        for k in 1..6 {
            let m = BehaviorMatrix::named("independent", k).unwrap();
            for a in 0..k {
                for b in 0..k {
                    assert_eq!(m.get(a, b), a == b);
                }
            }
        }
    }

    #[test]
    fn neighbor_rows() {
        assert_eq!(rows("neighbor_1", 4)[1], vec![1, 1, 1, 0]);
        assert_eq!(rows("neighbor_1", 4)[0], vec![1, 1, 0, 0]);
    }

    #[test]
    fn top_two_and_inverse() {
        assert_eq!(rows("top_2_cascade", 4)[3], vec![1, 1, 0, 1]);
        assert_eq!(rows("top_2_cascade", 4)[0], vec![1, 1, 0, 0]);
        assert_eq!(
            rows("inverse_cascade", 3),
            vec![vec![1, 1, 1], vec![0, 1, 1], vec![0, 0, 1]]
        );
    }

    #[test]
    fn random_variants_are_seeded_with_unit_diagonal() {
        let a = BehaviorMatrix::named("random_1", 6).unwrap();
        let b = BehaviorMatrix::named("random_1", 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.rows(),
            BehaviorMatrix::named("random_2", 6).unwrap().rows()
        );
        assert!((0..6).all(|k| a.get(k, k)));
        let c = BehaviorMatrix::named_with_seed("random_1", 6, Some(99)).unwrap();
        assert!((0..6).all(|k| c.get(k, k)));
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(
            BehaviorMatrix::named("zigzag", 3),
            Err(Error::UnknownBehavior(_))
        ));
        assert!(BehaviorMatrix::from_rows("bad", &[vec![0, 2], vec![1, 1]]).is_err());
    }

    #[test]
    fn distribution_cases() {
        let one = BehaviorDistribution::new(
            vec![1.0],
            vec![vec![0.3]],
            vec![BehaviorMatrix::named("standard", 2).unwrap()],
        )
        .unwrap();
        assert_eq!(one.probs(&[2.0]), vec![1.0]);

        let cat = vec![
            BehaviorMatrix::named("standard", 2).unwrap(),
            BehaviorMatrix::named("cascade", 2).unwrap(),
        ];
        let flat =
            BehaviorDistribution::new(vec![0.0; 2], vec![vec![1.0], vec![-4.0]], cat.clone())
                .unwrap();
        assert_eq!(flat.probs(&[1.5]), vec![0.5, 0.5]);

        // logits |0.5 * 2| = 1 and |-1 * 2| = 2
        let bd = BehaviorDistribution::new(vec![1.0; 2], vec![vec![0.5], vec![-1.0]], cat).unwrap();
        let p = bd.probs(&[2.0]);
        let expect = 1.0 / (1.0 + 1f64.exp());
        assert!((p[0] - expect).abs() < 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }
}
