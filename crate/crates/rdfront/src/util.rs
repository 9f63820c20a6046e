//! Small numeric helpers shared across modules.

/// Neumaier compensated summation.
///
/// Integral reductions (volumes, areas, mass) must agree across different
/// subdomain counts to ~1e-12 relative, which plain left-to-right summation
/// does not guarantee once partial sums are reordered.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Fold another compensated partial into this one, keeping both
    /// correction terms.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    /// Raw (sum, correction) pair, for sending partials between workers.
    pub fn parts(&self) -> (f64, f64) {
        (self.sum, self.comp)
    }

    pub fn from_parts(sum: f64, comp: f64) -> CompensatedSum {
        CompensatedSum { sum, comp }
    }
}

/// Deterministic xorshift-style generator for synthetic data in tests and
/// benchmarks. Not a statistical-quality RNG; stable across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Euclidean norm of a slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative difference in the 2-norm, `|a-b| / max(|a|, tiny)`.
pub fn rel_diff_norm2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let base = norm2(a).max(1e-300);
    diff / base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_on_cancellation() {
        // 1 + 1e-16 repeated: naive summation drops every small term.
        let mut c = CompensatedSum::new();
        c.add(1.0);
        for _ in 0..1000 {
            c.add(1e-16);
        }
        c.add(-1.0);
        assert!((c.value() - 1000.0e-16).abs() < 1e-26);
    }

    #[test]
    fn compensated_merge_matches_sequential() {
        let mut rng = SplitMix64::new(7);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.range(-1.0, 1.0)).collect();
        let mut whole = CompensatedSum::new();
        for &x in &xs {
            whole.add(x);
        }
        let mut a = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        for &x in &xs[..5_000] {
            a.add(x);
        }
        for &x in &xs[5_000..] {
            b.add(x);
        }
        a.merge(&b);
        assert!((a.value() - whole.value()).abs() <= 1e-15 * whole.value().abs().max(1.0));
    }

    #[test]
    fn splitmix_is_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
