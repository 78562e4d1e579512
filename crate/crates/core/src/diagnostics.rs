//! Convergence and mixing diagnostics and pooled posterior summaries.

use faer::{Mat, Side};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{recorded_components, ChainHistory, GroupStats};
use crate::priors::{Marginal, PriorSpec};

/// Shortest series accepted by [`iact`].
pub const MIN_IACT_LENGTH: usize = 1000;
/// Shortest per-chain series accepted by [`mpsrf`].
pub const MIN_MPSRF_LENGTH: usize = 100;
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct Autocorrelation {
    /// `rho(0..=max_lag)`.
    pub values: Vec<f64>,
    /// The series was constant; the values are the conventional `1, 0, 0, ...`.
    pub constant: bool,
}

/// Biased sample autocorrelation `rho(k) = c(k)/c(0)`, `c(k) = (1/n) sum (x_t - m)(x_{t+k} - m)`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Autocorrelation> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::config(format!("series of length {n} is too short for lag {max_lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0: f64 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        let mut values = vec![0.0; max_lag + 1];
        values[0] = 1.0;
        return Ok(Autocorrelation { values, constant: true });
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let zero = buf[0].re;
    let values = (0..=max_lag).map(|k| buf[k].re / zero).collect();
    Ok(Autocorrelation { values, constant: false })
}

/// Integrated autocorrelation time `1 + 2 sum_k rho(k)`, truncated by
/// Geyer's initial positive sequence: pairs `rho(2m) + rho(2m+1)` are
/// summed while positive.
pub fn iact(series: &[f64]) -> Result<f64> {
    pooled_iact(&[series])
}

/// IACT of several chains of one quantity. The autocovariances of the
/// chains, each about its own mean, are averaged before the truncation,
/// so a single badly mixed chain cannot dominate the estimate.
pub fn pooled_iact(chains: &[&[f64]]) -> Result<f64> {
    let Some(first) = chains.first() else {
        return Err(Error::config("IACT needs at least one chain"));
    };
    let n = first.len();
    if n < MIN_IACT_LENGTH {
        return Err(Error::config(format!(
            "IACT needs at least {MIN_IACT_LENGTH} samples, got {n}"
        )));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::config("chains must have equal lengths"));
    }
    let mut cov = vec![0.0; n];
    for c in chains {
        let acf = autocorrelation(c, n - 1)?;
        if acf.constant {
            continue;
        }
        let mean = c.iter().sum::<f64>() / n as f64;
        let c0 = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        for (g, r) in cov.iter_mut().zip(&acf.values) {
            *g += c0 * r;
        }
    }
    if !(cov[0] > 0.0) {
        return Err(Error::domain("IACT is undefined for a constant series"));
    }
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (cov[2 * m] + cov[2 * m + 1]) / cov[0];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    Ok(tau)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mpsrf {
    pub value: f64,
    /// The within-chain covariance was singular and a diagonal jitter was added.
    pub jittered: bool,
}

/// Brooks–Gelman multivariate potential scale reduction factor.
///
/// `chains[c][t]` is the sample vector of chain `c` at step `t`. Returns
/// `(n-1)/n + (m+1)/m * lambda_max(W^-1 B/n)`.
pub fn mpsrf(chains: &[Vec<Vec<f64>>]) -> Result<Mpsrf> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::config("MPSRF needs at least two chains"));
    }
    let n = chains[0].len();
    if n < MIN_MPSRF_LENGTH || chains.iter().any(|c| c.len() != n) {
        return Err(Error::config(format!(
            "MPSRF needs chains of equal length of at least {MIN_MPSRF_LENGTH}"
        )));
    }
    let p = chains[0][0].len();
    if p == 0 || chains.iter().flatten().any(|s| s.len() != p) {
        return Err(Error::shape("all samples must have the same positive dimension"));
    }
    let means: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| (0..p).map(|k| c.iter().map(|s| s[k]).sum::<f64>() / n as f64).collect())
        .collect();
    let grand: Vec<f64> = (0..p).map(|k| means.iter().map(|mu| mu[k]).sum::<f64>() / m as f64).collect();
    let mut w = Mat::<f64>::zeros(p, p);
    for (c, mu) in chains.iter().zip(&means) {
        for s in c {
            for i in 0..p {
                let di = s[i] - mu[i];
                for j in 0..=i {
                    w[(i, j)] += di * (s[j] - mu[j]);
                }
            }
        }
    }
    let wscale = 1.0 / (m as f64 * (n as f64 - 1.0));
    let mut bn = Mat::<f64>::zeros(p, p);
    for mu in &means {
        for i in 0..p {
            for j in 0..=i {
                bn[(i, j)] += (mu[i] - grand[i]) * (mu[j] - grand[j]) / (m as f64 - 1.0);
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            w[(i, j)] *= wscale;
            w[(j, i)] = w[(i, j)];
            bn[(j, i)] = bn[(i, j)];
        }
    }
    let (l, jittered) = match w.llt(Side::Lower) {
        Ok(l) => (l.L().to_owned(), false),
        Err(_) => {
            let mut wj = w.clone();
            for i in 0..p {
                wj[(i, i)] += 1e-12;
            }
            let l = wj.llt(Side::Lower).map_err(|_| Error::Numerical {
                message: "within-chain covariance is not positive definite even after jitter".into(),
                iterations: 0,
            })?;
            (l.L().to_owned(), true)
        }
    };
    // L^-1 (B/n) L^-T shares its spectrum with W^-1 B/n and is symmetric
    let mut x = bn;
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), faer::Par::Seq);
    let mut y = x.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), y.as_mut(), faer::Par::Seq);
    let sym = Mat::from_fn(p, p, |i, j| 0.5 * (y[(i, j)] + y[(j, i)]));
    let eig = sym.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Numerical {
        message: format!("eigenvalues of the scale matrix: {e:?}"),
        iterations: 0,
    })?;
    let lambda = eig.iter().copied().fold(0.0f64, f64::max);
    let value = (n as f64 - 1.0) / n as f64 + (m as f64 + 1.0) / m as f64 * lambda;
    Ok(Mpsrf { value, jittered })
}

/// Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic tail `P(K > t)` of the Kolmogorov distribution.
pub fn kolmogorov_tail(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let s: f64 = (1..=100).map(|k| (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * t * t).exp()).sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// KS p-value with an effective sample size, for autocorrelated draws pass `n / IACT`.
pub fn ks_p_value(samples: &[f64], cdf: impl Fn(f64) -> f64, effective_size: f64) -> f64 {
    kolmogorov_tail(ks_statistic(samples, cdf) * effective_size.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub posterior_density: Vec<f64>,
    pub prior_density: Vec<f64>,
}

impl Histogram {
    /// `sum density * width`, one for a non-empty histogram.
    pub fn mass(&self) -> f64 {
        self.posterior_density.iter().zip(self.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    /// Per chain; absent when the window is too short or constant.
    pub iact: Vec<Option<f64>>,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub n_chains: usize,
    pub thin: usize,
    pub burn_in_fraction: f64,
    /// Stored samples kept per chain after burn-in.
    pub samples_per_chain: usize,
    pub parameters: Vec<ParameterSummary>,
    pub mpsrf: Option<Mpsrf>,
    /// `(stored samples used, MPSRF)` on growing windows.
    pub mpsrf_trace: Vec<(usize, f64)>,
    pub acceptance: Vec<Vec<GroupStats>>,
    pub forward_solves: u64,
}

impl SummaryReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn histogram(values: &[f64], mean: f64, sd: f64, marginal: Option<Marginal>) -> Histogram {
    let (lo, hi) = match marginal.and_then(|m| m.bounded_support()) {
        Some((lo, hi)) if hi > lo => (lo, hi),
        _ => {
            let half = if sd > 0.0 { 4.0 * sd } else { 1e-9_f64.max(mean.abs() * 1e-9) };
            (mean - half, mean + half)
        }
    };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        if v >= lo && v <= hi {
            let k = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[k] += 1;
        }
    }
    let inside: usize = counts.iter().sum();
    let posterior_density =
        counts.iter().map(|&c| if inside == 0 { 0.0 } else { c as f64 / (inside as f64 * width) }).collect();
    let prior_density = edges
        .windows(2)
        .map(|e| marginal.map_or(0.0, |m| m.pdf(0.5 * (e[0] + e[1]))))
        .collect();
    Histogram { edges, posterior_density, prior_density }
}

/// Drops the first `burn_in_fraction` of every chain and pools the rest.
/// With a prior, histograms cover bounded prior supports and carry the
/// prior density; otherwise they span the posterior mean plus or minus four sd.
pub fn summarize(
    histories: &[ChainHistory],
    burn_in_fraction: f64,
    prior: Option<(&PriorSpec, usize)>,
) -> Result<SummaryReport> {
    if histories.is_empty() {
        return Err(Error::config("no chains to summarize"));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::config(format!("burn-in fraction {burn_in_fraction} outside [0, 1)")));
    }
    let names = &histories[0].names;
    if histories.iter().any(|h| &h.names != names || h.thin != histories[0].thin) {
        return Err(Error::Schema("chains record different parameters or thinning".into()));
    }
    let len = histories.iter().map(|h| h.samples.len()).min().unwrap_or(0);
    let start = (burn_in_fraction * len as f64).floor() as usize;
    let kept = len - start;
    if kept == 0 {
        return Err(Error::config("no samples left after burn-in"));
    }
    let windows: Vec<&[Vec<f64>]> = histories.iter().map(|h| &h.samples[start..len]).collect();
    let marginals: Vec<Option<Marginal>> = match prior {
        Some((spec, modes)) => recorded_components(spec, modes)
            .iter()
            .map(|c| spec.marginal(c.block, c.index).ok())
            .collect(),
        None => vec![None; names.len()],
    };
    if marginals.len() != names.len() {
        return Err(Error::Schema("chain columns do not match the prior".into()));
    }
    let parameters = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let pooled: Vec<f64> = windows.iter().flat_map(|w| w.iter().map(|s| s[k])).collect();
            let n = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / n;
            let variance = if pooled.len() > 1 {
                pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let iact = windows
                .iter()
                .map(|w| iact(&w.iter().map(|s| s[k]).collect::<Vec<_>>()).ok())
                .collect();
            let histogram = histogram(&pooled, mean, variance.sqrt(), marginals[k]);
            ParameterSummary { name: name.clone(), mean, variance, iact, histogram }
        })
        .collect();
    let chains: Vec<Vec<Vec<f64>>> = windows.iter().map(|w| w.to_vec()).collect();
    let mpsrf_value = mpsrf(&chains).ok();
    let mut mpsrf_trace = Vec::new();
    if mpsrf_value.is_some() {
        for step in 1..=20 {
            let upto = kept * step / 20;
            if upto < MIN_MPSRF_LENGTH {
                continue;
            }
            let prefix: Vec<Vec<Vec<f64>>> = chains.iter().map(|c| c[..upto].to_vec()).collect();
            if let Ok(r) = mpsrf(&prefix) {
                mpsrf_trace.push((upto, r.value));
            }
        }
    }
    Ok(SummaryReport {
        n_chains: histories.len(),
        thin: histories[0].thin,
        burn_in_fraction,
        samples_per_chain: kept,
        parameters,
        mpsrf: mpsrf_value,
        mpsrf_trace,
        acceptance: histories.iter().map(|h| h.groups.clone()).collect(),
        forward_solves: histories.iter().map(|h| h.forward_solves).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Geometry, LayerFaultParams};
    use crate::priors::{ParameterVector, Permeability};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let z = white(n + 1000, seed);
        let mut x = 0.0;
        let s = (1.0 - rho * rho).sqrt();
        let mut out = Vec::with_capacity(n);
        for (t, e) in z.iter().enumerate() {
            x = rho * x + s * e;
            if t >= 1000 {
                out.push(x);
            }
        }
        out
    }

    #[test]
    fn acf_matches_direct_sum() {
        let x = ar1(500, 0.5, 1);
        let acf = autocorrelation(&x, 20).unwrap();
        let m = x.iter().sum::<f64>() / 500.0;
        let c = |k: usize| (0..500 - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / 500.0;
        for k in 0..=20 {
            assert!((acf.values[k] - c(k) / c(0)).abs() < 1e-12);
        }
        assert_eq!(acf.values[0], 1.0);
        assert!(autocorrelation(&x, 500).is_err());
    }

    #[test]
    fn white_noise_acf_is_within_bands() {
        let n = 100_000;
        let acf = autocorrelation(&white(n, 2), 50).unwrap();
        let band = 3.0 / (n as f64).sqrt();
        assert!(acf.values[1..].iter().all(|r| r.abs() < band));
    }

    #[test]
    fn ar1_acf_is_geometric() {
        let n = 100_000;
        let rho: f64 = 0.9;
        let acf = autocorrelation(&ar1(n, rho, 3), 10).unwrap();
        for k in 1..=10 {
            // Bartlett's variance of the lag-k estimate for AR(1)
            let r = rho.powi(k as i32);
            let var = ((1.0 + rho * rho) * (1.0 - r * r) / (1.0 - rho * rho) - 2.0 * k as f64 * r * r) / n as f64;
            assert!((acf.values[k] - r).abs() < 3.0 * var.sqrt(), "lag {k}");
        }
    }

    #[test]
    fn constant_series_is_flagged() {
        let acf = autocorrelation(&[2.0; 50], 3).unwrap();
        assert!(acf.constant);
        assert_eq!(acf.values, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(iact(&[2.0; 2000]), Err(Error::Domain(_))));
        assert!(iact(&[1.0; 999]).is_err());
    }

    #[test]
    fn pooled_iact_of_one_chain_is_iact() {
        let x = ar1(20_000, 0.7, 8);
        assert_eq!(pooled_iact(&[&x]).unwrap(), iact(&x).unwrap());
        let chains: Vec<Vec<f64>> = (0..8).map(|k| ar1(50_000, 0.9, 20 + k)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let tau = pooled_iact(&refs).unwrap();
        assert!((tau - 19.0).abs() < 0.1 * 19.0, "{tau}");
        assert!(pooled_iact(&[&x, &x[1..]]).is_err());
        assert!(pooled_iact(&[]).is_err());
    }

    #[test]
    fn iact_oracles() {
        assert!((iact(&white(100_000, 4)).unwrap() - 1.0).abs() < 0.1);
        let tau = iact(&ar1(100_000, 0.9, 5)).unwrap();
        assert!((tau / 19.0 - 1.0).abs() < 0.15, "{tau}");
        let taus: Vec<f64> = [0.5, 0.7, 0.9].iter().map(|&r| iact(&ar1(50_000, r, 6)).unwrap()).collect();
        assert!(taus[0] < taus[1] && taus[1] < taus[2], "{taus:?}");
    }

    fn vector_chain(n: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let a = white(n, seed);
        let b = white(n, seed + 1000);
        a.iter().zip(&b).map(|(x, y)| vec![x + shift, 0.5 * x + y]).collect()
    }

    #[test]
    fn mpsrf_oracles() {
        let one = vector_chain(1000, 0.0, 7);
        let copies = mpsrf(&[one.clone(), one.clone(), one.clone()]).unwrap();
        assert!((copies.value - 999.0 / 1000.0).abs() < 1e-12);
        assert!(copies.value < 1.0);

        let iid: Vec<_> = (0..4).map(|c| vector_chain(10_000, 0.0, 10 + c)).collect();
        assert!(mpsrf(&iid).unwrap().value < 1.05);

        let shifted = vec![vector_chain(1000, 0.0, 20), vector_chain(1000, 5.0, 21)];
        assert!(mpsrf(&shifted).unwrap().value > 1.2);
        assert!(mpsrf(&[one.clone()]).is_err());
        assert!(mpsrf(&[one[..50].to_vec(), one[..50].to_vec()]).is_err());
    }

    #[test]
    fn mpsrf_with_a_constant_component_is_jittered() {
        let mk = |seed| -> Vec<Vec<f64>> { white(500, seed).into_iter().map(|x| vec![x, 1.0]).collect() };
        let r = mpsrf(&[mk(1), mk(2)]).unwrap();
        assert!(r.jittered && r.value.is_finite());
    }

    #[test]
    fn ks_detects_mismatch() {
        let x = white(20_000, 8);
        let normal = |t: f64| Marginal::StandardNormal.cdf(t);
        assert!(ks_p_value(&x, normal, x.len() as f64) > 0.01);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        assert!(ks_p_value(&shifted, normal, x.len() as f64) < 0.01);
    }

    fn history(names: &[&str], rows: Vec<Vec<f64>>, chain: usize) -> ChainHistory {
        let n = rows.len();
        ChainHistory {
            chain,
            seed: 0,
            thin: 1,
            n_sweeps: n,
            names: names.iter().map(|s| s.to_string()).collect(),
            sweeps: (1..=n).collect(),
            samples: rows,
            misfits: vec![0.0; n],
            groups: vec![],
            forward_solves: 0,
            final_state: ParameterVector {
                geometry: Geometry::Layers(LayerFaultParams { a: vec![0.5], b: vec![0.5], c: 0.0 }),
                perm: Permeability::Constant(vec![1.0, 1.0]),
            },
        }
    }

    #[test]
    fn constant_chain_summary() {
        let h = history(&["x"], vec![vec![2.5]; 40], 0);
        let r = summarize(&[h], 0.0, None).unwrap();
        assert_eq!(r.parameters[0].mean, 2.5);
        assert_eq!(r.parameters[0].variance, 0.0);
        assert!((r.parameters[0].histogram.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_moments_and_permutation_invariance() {
        let a: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let b: Vec<f64> = (0..10).map(|k| 2.0 * k as f64 + 1.0).collect();
        let ha = history(&["x"], a.iter().map(|v| vec![*v]).collect(), 0);
        let hb = history(&["x"], b.iter().map(|v| vec![*v]).collect(), 1);
        let r = summarize(&[ha.clone(), hb.clone()], 0.2, None).unwrap();
        let pooled: Vec<f64> = a[2..].iter().chain(&b[2..]).copied().collect();
        let m = pooled.iter().sum::<f64>() / 16.0;
        let v = pooled.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 15.0;
        assert_eq!(r.samples_per_chain, 8);
        assert!((r.parameters[0].mean - m).abs() < 1e-12);
        assert!((r.parameters[0].variance - v).abs() < 1e-12);
        let swapped = summarize(&[hb, ha], 0.2, None).unwrap();
        assert!((swapped.parameters[0].mean - m).abs() < 1e-12);
        assert!((swapped.parameters[0].variance - v).abs() < 1e-12);
        assert!(summarize(&[history(&["x"], vec![], 0)], 0.5, None).is_err());
    }

    #[test]
    fn histograms_use_prior_support_and_overlay() {
        let spec = PriorSpec {
            geometry: crate::priors::GeometryPrior::Layers { layers: 2, slip_max: None },
            perm: vec![crate::priors::PermPrior::Uniform { lower: 1.0, upper: 3.0 }; 2],
            fixed: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let u = crate::priors::sample_prior(&spec, &mut rng).unwrap();
                crate::mcmc::recorded_values(&u, &spec, 0)
            })
            .collect();
        let h1 = history(&["a", "b", "kappa1", "kappa2"], rows[..1000].to_vec(), 0);
        let h2 = history(&["a", "b", "kappa1", "kappa2"], rows[1000..].to_vec(), 1);
        let r = summarize(&[h1, h2], 0.0, Some((&spec, 0))).unwrap();
        let k = r.parameter("kappa1").unwrap();
        assert_eq!(k.histogram.edges.len(), HISTOGRAM_BINS + 1);
        assert_eq!((k.histogram.edges[0], k.histogram.edges[HISTOGRAM_BINS]), (1.0, 3.0));
        assert!(k.histogram.prior_density.iter().all(|d| (d - 0.5).abs() < 1e-12));
        assert!((k.histogram.mass() - 1.0).abs() < 1e-12);
        assert_eq!(k.iact.len(), 2);
        assert!(k.iact.iter().all(|t| t.is_some()));
        assert!(r.mpsrf.unwrap().value < 1.1);
        assert!(!r.mpsrf_trace.is_empty());
    }
}
