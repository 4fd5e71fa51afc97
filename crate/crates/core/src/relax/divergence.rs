use crate::sampler::Distribution;

/// Smoothing mass added to every point of `q` before normalizing.
pub const KL_SMOOTHING: f64 = 1e-9;

/// `KL(p || q)` over the union of both supports, with `q` smoothed by
/// [`KL_SMOOTHING`] and renormalized. Points where `p` is zero contribute 0.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> f64 {
    let mut support: Vec<_> = p.keys().collect();
    support.extend(q.keys().filter(|k| !p.contains_key(*k)));
    let q_mass: f64 = q.values().sum();
    let norm = q_mass + KL_SMOOTHING * support.len() as f64;
    let mut kl = 0.0;
    for x in support {
        let px = p.get(x).copied().unwrap_or(0.0);
        if px <= 0.0 {
            continue;
        }
        let qx = (q.get(x).copied().unwrap_or(0.0) + KL_SMOOTHING) / norm;
        kl += px * (px / qx).ln();
    }
    kl.max(0.0)
}

/// Jensen-Shannon divergence, bounded by ln 2.
pub fn js_divergence(p: &Distribution, q: &Distribution) -> f64 {
    let mut m = Distribution::new();
    for (x, v) in p.iter().chain(q.iter()) {
        *m.entry(x.clone()).or_insert(0.0) += 0.5 * v;
    }
    let half = |d: &Distribution| -> f64 {
        d.iter()
            .filter(|(_, &v)| v > 0.0)
            .map(|(x, &v)| v * (v / m[x]).ln())
            .sum::<f64>()
    };
    (0.5 * half(p) + 0.5 * half(q)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::Assignment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(points: &[(&[u8], f64)]) -> Distribution {
        points.iter().map(|(b, p)| (Assignment::from_bits(b), *p)).collect()
    }

    #[test]
    fn identical_distributions() {
        let p = dist(&[(&[0, 1], 0.3), (&[1, 1], 0.7)]);
        assert!(kl_divergence(&p, &p) < 1e-8);
        assert!(js_divergence(&p, &p) < 1e-15);
    }

    #[test]
    fn point_mass_against_uniform_is_ln2() {
        let p = dist(&[(&[0], 1.0), (&[1], 0.0)]);
        let q = dist(&[(&[0], 0.5), (&[1], 0.5)]);
        assert!((kl_divergence(&p, &q) - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn matches_direct_summation() {
        // Independent evaluator: dense vectors indexed by support position.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let mut pv: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut qv: Vec<f64> = (0..8).map(|_| rng.gen_range(0.01..1.0)).collect();
            let (ps, qs): (f64, f64) = (pv.iter().sum(), qv.iter().sum());
            pv.iter_mut().for_each(|v| *v /= ps);
            qv.iter_mut().for_each(|v| *v /= qs);
            let key = |i: usize| Assignment::from_bits(&[(i & 1) as u8, (i >> 1 & 1) as u8, (i >> 2 & 1) as u8]);
            let p: Distribution = (0..8).map(|i| (key(i), pv[i])).collect();
            let q: Distribution = (0..8).map(|i| (key(i), qv[i])).collect();
            let norm = 1.0 + 8.0 * KL_SMOOTHING;
            let direct: f64 = (0..8).map(|i| pv[i] * (pv[i] / ((qv[i] + KL_SMOOTHING) / norm)).ln()).sum();
            assert!((kl_divergence(&p, &q) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn divergences_are_nonnegative_on_disjoint_supports() {
        let p = dist(&[(&[0, 0], 1.0)]);
        let q = dist(&[(&[1, 1], 1.0)]);
        assert!(kl_divergence(&p, &q) > 10.0);
        assert!((js_divergence(&p, &q) - 2f64.ln()).abs() < 1e-12);
    }
}
