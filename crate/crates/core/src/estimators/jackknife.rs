//! Binning and jackknife analysis of multi-component sample streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value with jackknife error. `autocorrelation_time` is the integrated time
/// in samples implied by the growth of the binned error over the unbinned one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_bins: usize,
    pub bin_size: usize,
    pub autocorrelation_time: f64,
    /// Whether the binned error stopped growing before bins ran out.
    pub plateau: bool,
}

/// Row-major samples with `k` components, grouped by independent chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    k: usize,
    chains: Vec<Vec<f64>>,
}

impl Samples {
    pub fn new(k: usize) -> Self {
        assert!(k > 0);
        Samples { k, chains: Vec::new() }
    }

    /// Adds one chain of rows.
    pub fn push_chain<I: IntoIterator<Item = Vec<f64>>>(&mut self, rows: I) {
        let mut flat = Vec::new();
        for r in rows {
            assert_eq!(r.len(), self.k, "row width");
            flat.extend(r);
        }
        self.chains.push(flat);
    }

    pub fn single<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let mut s = Samples::new(1);
        s.push_chain(values.into_iter().map(|v| vec![v]));
        s
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.chains.iter().map(|c| c.len() / self.k).sum()
    }

    /// Bin means: each chain is cut into whole bins from its start, the
    /// remainder at its end is dropped.
    pub fn bins(&self, bin_size: usize) -> Vec<Vec<f64>> {
        let k = self.k;
        let mut out = Vec::new();
        for c in &self.chains {
            for chunk in c.chunks_exact(k * bin_size) {
                let mut m = vec![0.0; k];
                for row in chunk.chunks_exact(k) {
                    for (a, x) in m.iter_mut().zip(row) {
                        *a += x;
                    }
                }
                m.iter_mut().for_each(|a| *a /= bin_size as f64);
                out.push(m);
            }
        }
        out
    }

    pub fn n_bins(&self, bin_size: usize) -> usize {
        self.chains.iter().map(|c| c.len() / (self.k * bin_size)).sum()
    }

    /// Component-wise mean over all rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for c in &self.chains {
            for row in c.chunks_exact(self.k) {
                for (a, x) in m.iter_mut().zip(row) {
                    *a += x;
                }
            }
        }
        let n = self.rows().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Bias-corrected jackknife of `f` applied to the bin means.
pub fn jackknife<F: Fn(&[f64]) -> f64>(bins: &[Vec<f64>], f: F) -> Result<(f64, f64)> {
    let n = bins.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} bins, need at least 2")));
    }
    let k = bins[0].len();
    let mut total = vec![0.0; k];
    for b in bins {
        for (t, x) in total.iter_mut().zip(b) {
            *t += x;
        }
    }
    let full_mean: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
    let full = f(&full_mean);
    let mut loo = Vec::with_capacity(n);
    let mut buf = vec![0.0; k];
    for b in bins {
        for ((o, t), x) in buf.iter_mut().zip(&total).zip(b) {
            *o = (t - x) / (n - 1) as f64;
        }
        loo.push(f(&buf));
    }
    let loo_mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    let value = n as f64 * full - (n - 1) as f64 * loo_mean;
    if !value.is_finite() || !var.is_finite() {
        return Err(Error::Numerical(format!("jackknife produced value {value}, variance {var}")));
    }
    Ok((value, var.sqrt()))
}

/// Jackknife at one bin size.
pub fn bin_and_jackknife<F: Fn(&[f64]) -> f64>(samples: &Samples, bin_size: usize, f: F) -> Result<RatioEstimate> {
    if bin_size == 0 {
        return Err(Error::InvalidParam("bin size must be positive".into()));
    }
    if samples.rows() < 2 * bin_size {
        return Err(Error::InsufficientData(format!("{} samples for bin size {bin_size}", samples.rows())));
    }
    let bins = samples.bins(bin_size);
    let (value, stderr) = jackknife(&bins, &f)?;
    Ok(RatioEstimate { value, stderr, n_bins: bins.len(), bin_size, autocorrelation_time: f64::NAN, plateau: true })
}

/// Relative tolerance for declaring the binned error converged.
pub const PLATEAU_TOLERANCE: f64 = 0.1;

/// Doubles the bin size until the error stops growing by more than 10%,
/// keeping at least `min_bins` bins. Reports the larger error of the
/// converged pair.
pub fn auto_jackknife<F: Fn(&[f64]) -> f64>(samples: &Samples, min_bins: usize, f: F) -> Result<RatioEstimate> {
    let min_bins = min_bins.max(2);
    if samples.n_bins(1) < min_bins {
        return Err(Error::InsufficientData(format!("{} samples, need at least {min_bins}", samples.rows())));
    }
    let base = bin_and_jackknife(samples, 1, &f)?;
    let tau = |e: &RatioEstimate| {
        if base.stderr > 0.0 {
            0.5 * (e.stderr / base.stderr).powi(2)
        } else {
            0.5
        }
    };
    let mut cur = base;
    loop {
        let b2 = cur.bin_size * 2;
        if samples.n_bins(b2) < min_bins {
            return Ok(RatioEstimate { autocorrelation_time: tau(&cur), plateau: false, ..cur });
        }
        let next = bin_and_jackknife(samples, b2, &f)?;
        if next.stderr <= (1.0 + PLATEAU_TOLERANCE) * cur.stderr {
            let best = if next.stderr >= cur.stderr { next } else { RatioEstimate { bin_size: b2, n_bins: next.n_bins, ..cur } };
            let best = RatioEstimate { value: next.value, ..best };
            return Ok(RatioEstimate { autocorrelation_time: tau(&best), plateau: true, ..best });
        }
        cur = next;
    }
}

/// Mean of one component with automatic binning.
pub fn mean_estimate(samples: &Samples, component: usize, min_bins: usize) -> Result<RatioEstimate> {
    auto_jackknife(samples, min_bins, |m| m[component])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_stream_has_zero_error() {
        let s = Samples::single(std::iter::repeat_n(2.5, 1000));
        let e = auto_jackknife(&s, 100, |m| m[0]).unwrap();
        assert_eq!(e.value, 2.5);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn iid_uniform_matches_analytic_error() {
        // Var of U(0,1) is 1/12
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let s = Samples::single((0..n).map(|_| rng.random::<f64>()));
        let e = auto_jackknife(&s, 100, |m| m[0]).unwrap();
        let want = (1.0 / 12.0 / n as f64).sqrt();
        assert!((e.stderr / want - 1.0).abs() < 0.1, "{} vs {want}", e.stderr);
        assert!((e.value - 0.5).abs() < 4.0 * want);
    }

    #[test]
    fn ar1_needs_long_bins() {
        // x_t = a x_{t-1} + noise, a = exp(-1/10): integrated time ~ (1+a)/(2(1-a)) ~ 10
        let a = (-0.1f64).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let s = Samples::single((0..400_000).map(|_| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            x = a * x + eps;
            x
        }));
        let e = auto_jackknife(&s, 100, |m| m[0]).unwrap();
        assert!(e.plateau);
        assert!(e.bin_size >= 20, "{e:?}");
        let tau_exact = (1.0 + a) / (2.0 * (1.0 - a));
        assert!((e.autocorrelation_time / tau_exact - 1.0).abs() < 0.25, "{e:?} vs {tau_exact}");
        // stationary variance 1/(1-a^2), error sqrt(2 tau var / n)
        let want = (2.0 * tau_exact / (1.0 - a * a) / 400_000.0).sqrt();
        assert!((e.stderr / want - 1.0).abs() < 0.2, "{} vs {want}", e.stderr);
    }

    #[test]
    fn error_shrinks_with_more_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draw = |n: usize| Samples::single((0..n).map(|_| rng.random::<f64>()));
        let e1 = bin_and_jackknife(&draw(10_000), 10, |m| m[0]).unwrap();
        let e4 = bin_and_jackknife(&draw(40_000), 10, |m| m[0]).unwrap();
        assert!((e1.stderr / e4.stderr - 2.0).abs() < 0.3);
    }

    #[test]
    fn jackknife_removes_first_order_bias() {
        // f(mean) = mean^2 is biased by Var/n; the corrected value is exact for this f
        let bins: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 6.0].iter().map(|&x| vec![x]).collect();
        let (v, _) = jackknife(&bins, |m| m[0] * m[0]).unwrap();
        let mean = 3.0;
        let sample_var = (4.0 + 1.0 + 0.0 + 9.0) / 3.0;
        assert!((v - (mean * mean - sample_var / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn insufficient_and_numerical_failures_differ() {
        let s = Samples::single([1.0, 2.0, 3.0]);
        assert!(matches!(bin_and_jackknife(&s, 2, |m| m[0]), Err(Error::InsufficientData(_))));
        assert!(matches!(auto_jackknife(&s, 100, |m| m[0]), Err(Error::InsufficientData(_))));
        let z = Samples::single(std::iter::repeat_n(0.0, 10));
        assert!(matches!(bin_and_jackknife(&z, 1, |m| 1.0 / m[0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn chains_are_binned_separately() {
        let mut s = Samples::new(1);
        s.push_chain([1.0, 1.0, 1.0].map(|x| vec![x]));
        s.push_chain([3.0, 3.0].map(|x| vec![x]));
        assert_eq!(s.bins(2), vec![vec![1.0], vec![3.0]]);
        assert_eq!(s.rows(), 5);
    }
}
