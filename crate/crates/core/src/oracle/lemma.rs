use rand::Rng;

/// Both sides of the pairwise rearrangement
/// `sum_s f_s g_s (h_s - c sum_t g_t h_t)
///  = (1 - c) sum_s f_s g_s h_s + c sum_{s<t} g_s g_t (h_s - h_t)(f_s - f_t)`,
/// which needs `sum_s g_s = 1`.
pub fn pairwise_identity_sides(f: &[f64], g: &[f64], h: &[f64], c: f64) -> (f64, f64) {
    let gh: f64 = g.iter().zip(h).map(|(g, h)| g * h).sum();
    let lhs = (0..f.len()).map(|s| f[s] * g[s] * (h[s] - c * gh)).sum();
    let fgh: f64 = (0..f.len()).map(|s| f[s] * g[s] * h[s]).sum();
    let mut pairs = 0.0;
    for s in 0..f.len() {
        for t in s + 1..f.len() {
            pairs += g[s] * g[t] * (h[s] - h[t]) * (f[s] - f[t]);
        }
    }
    (lhs, (1.0 - c) * fgh + c * pairs)
}

/// `|lhs - rhs|` of the rearrangement for random `f, h`, a random simplex
/// vector `g` of length `m` and a random `c`.
pub fn pairwise_identity_check<R: Rng + ?Sized>(m: usize, rng: &mut R) -> f64 {
    let f: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
    let h: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
    let raw: Vec<f64> = (0..m)
        .map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let g: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let c = rng.random_range(-3.0..3.0);
    let (lhs, rhs) = pairwise_identity_sides(&f, &g, &h, c);
    (lhs - rhs).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_term() {
        let (l, r) = pairwise_identity_sides(&[2.0], &[1.0], &[3.0], 0.4);
        assert_eq!(l, r);
        assert!((l - 0.6 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn hand_values() {
        let (l, r) = pairwise_identity_sides(&[1.0, 2.0], &[0.3, 0.7], &[5.0, -1.0], 0.5);
        // sum g h = 0.8; lhs = 0.3 * 4.6 + 2 * 0.7 * (-1.4) = -0.58
        assert!((l + 0.58).abs() < 1e-12);
        assert!((l - r).abs() < 1e-12);
    }

    #[test]
    fn thousand_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let worst = (0..1000)
            .map(|i| pairwise_identity_check(1 + i % 8, &mut rng))
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    proptest! {
        #[test]
        fn holds_for_any_seed(seed in any::<u64>(), m in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert!(pairwise_identity_check(m, &mut rng) < 1e-9);
        }
    }
}
