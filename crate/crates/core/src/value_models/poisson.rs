//! Closed forms for `V(s) = kappa - J(s)` with `J` a rate-`q` Poisson process.
//!
//! With `L = kappa - x` and crossing times `s_j = (L - j) / drift`, the stop
//! satisfies `P(S > s) = P(J(s) <= j)` for `s` in `[s_{j+1}, s_j)`, and
//! `∫ pmf(m, y) dy` telescopes into Poisson CDFs.

use super::law::StopMoments;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonCrossing {
    kappa: f64,
    q: f64,
    drift: f64,
    level: f64,
}

/// `P(Poi(y) <= k)` for `k = 0..=n`.
fn cdf_table(y: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    if y <= 0.0 {
        out.resize(n + 1, 1.0);
        return out;
    }
    let ln_y = y.ln();
    let mut ln_fact = 0.0;
    let mut acc = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        acc += (k as f64 * ln_y - y - ln_fact).exp();
        out.push(acc.min(1.0));
    }
    out
}

impl PoissonCrossing {
    pub fn new(kappa: f64, q: f64, drift: f64, x: f64) -> Self {
        Self {
            kappa,
            q,
            drift,
            level: kappa - x,
        }
    }

    /// Largest jump count that leaves the process above threshold at time 0.
    fn top(&self) -> usize {
        self.level.floor() as usize
    }

    /// `s_j`, clamped at zero.
    fn crossing(&self, j: usize) -> f64 {
        ((self.level - j as f64) / self.drift).max(0.0)
    }

    pub fn moments(&self) -> StopMoments {
        if self.level <= 0.0 {
            return StopMoments::zero();
        }
        let q = self.q;
        let (mut mean, mut second, mut jump_area) = (0.0, 0.0, 0.0);
        for j in 0..=self.top() {
            let lo = cdf_table(q * self.crossing(j + 1), j + 1);
            let hi = cdf_table(q * self.crossing(j), j + 1);
            for m in 0..=j {
                let d = lo[m] - hi[m];
                mean += d;
                jump_area += m as f64 * d;
                second += (m + 1) as f64 * (lo[m + 1] - hi[m + 1]);
            }
        }
        let mean = mean / q;
        let value_integral = self.kappa * mean - jump_area / q;
        StopMoments::exact(mean, 2.0 * second / (q * q), value_integral)
    }

    /// `P(J(S) = n)` for `n = 0..=top+1`.
    pub fn jump_distribution(&self) -> Vec<f64> {
        if self.level <= 0.0 {
            return vec![1.0];
        }
        let n_max = self.top() + 1;
        // P(S >= s_n) = P(J(s_n) <= n)
        let at_least: Vec<f64> = (0..=n_max)
            .map(|n| cdf_table(self.q * self.crossing(n), n)[n])
            .collect();
        (0..=n_max)
            .map(|n| {
                let prev = if n == 0 { 0.0 } else { at_least[n - 1] };
                (at_least[n] - prev).max(0.0)
            })
            .collect()
    }
}
