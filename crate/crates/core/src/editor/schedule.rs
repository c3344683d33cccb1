use serde::{Deserialize, Serialize};

/// Linear-beta DDPM schedule with 1-indexed timesteps `1..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub t_total: usize,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 2e-2)
    }
}

impl DiffusionSchedule {
    pub fn linear(t_total: usize, beta_start: f64, beta_end: f64) -> Self {
        assert!(t_total >= 2, "schedule needs at least two steps");
        assert!(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0, "betas must increase within (0,1)");
        let betas: Vec<f64> =
            (0..t_total).map(|i| beta_start + (beta_end - beta_start) * i as f64 / (t_total - 1) as f64).collect();
        let mut alpha_bars = Vec::with_capacity(t_total);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Self { t_total, betas, alpha_bars }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// Noise-to-signal ratio `σ_t = √((1 − ᾱ_t) / ᾱ_t)`.
    pub fn sigma(&self, t: usize) -> f64 {
        let ab = self.alpha_bar(t);
        ((1.0 - ab) / ab).sqrt()
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma(1)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma(self.t_total)
    }

    /// Fractional timestep whose `σ` equals `sigma`, interpolating linearly
    /// in `log σ` between integer steps and clamping to `[1, T]`.
    pub fn t_for_sigma(&self, sigma: f64) -> f64 {
        let target = sigma.ln();
        if target <= self.sigma(1).ln() {
            return 1.0;
        }
        if target >= self.sigma(self.t_total).ln() {
            return self.t_total as f64;
        }
        // σ_t increases with t
        let (mut lo, mut hi) = (1usize, self.t_total);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.sigma(mid).ln() <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (self.sigma(lo).ln(), self.sigma(hi).ln());
        lo as f64 + (target - a) / (b - a)
    }

    /// `n` log-spaced noise levels from `σ_max` down to `σ_min`, followed
    /// by a final `0`.
    pub fn sampler_sigmas(&self, n: usize) -> Vec<f64> {
        assert!(n >= 1, "at least one sampler step");
        let (hi, lo) = (self.sigma_max().ln(), self.sigma_min().ln());
        let mut s: Vec<f64> = if n == 1 {
            vec![self.sigma_max()]
        } else {
            (0..n).map(|i| (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp()).collect()
        };
        s.push(0.0);
        s
    }
}

/// Splits the move from `sigma` to `sigma_next` into a deterministic part
/// `σ_down` and injected noise `σ_up` with `σ_up² + σ_down² = σ_next²`.
pub fn ancestral_step(sigma: f64, sigma_next: f64) -> (f64, f64) {
    if sigma_next == 0.0 {
        return (0.0, 0.0);
    }
    let up = (sigma_next * sigma_next * (sigma * sigma - sigma_next * sigma_next) / (sigma * sigma))
        .max(0.0)
        .sqrt()
        .min(sigma_next);
    let down = (sigma_next * sigma_next - up * up).max(0.0).sqrt();
    (up, down)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_monotone() {
        let s = DiffusionSchedule::default();
        for t in 2..=s.t_total {
            assert!(s.beta(t) > s.beta(t - 1));
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!((s.beta(1) - 1e-4).abs() < 1e-18);
        assert!((s.beta(1000) - 2e-2).abs() < 1e-15);
    }

    #[test]
    fn sigma_inversion() {
        let s = DiffusionSchedule::default();
        for t in [1usize, 2, 17, 500, 999, 1000] {
            assert!((s.t_for_sigma(s.sigma(t)) - t as f64).abs() < 1e-9, "t={t}");
        }
        let mid = (s.sigma(10).ln() + s.sigma(11).ln()) / 2.0;
        assert!((s.t_for_sigma(mid.exp()) - 10.5).abs() < 1e-9);
    }

    #[test]
    fn sampler_sigmas_shape() {
        let s = DiffusionSchedule::default();
        let sig = s.sampler_sigmas(20);
        assert_eq!(sig.len(), 21);
        assert_eq!(*sig.last().unwrap(), 0.0);
        assert!((sig[0] - s.sigma_max()).abs() < 1e-9 * s.sigma_max());
        assert!((sig[19] - s.sigma_min()).abs() < 1e-12);
        assert!(sig.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(s.sampler_sigmas(1), vec![s.sigma_max(), 0.0]);
    }
}
