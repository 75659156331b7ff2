//! Deterministic-equivalent physical layer of the massive-MIMO downlink.
//!
//! With RZF precoding and a large antenna array, the power constraint
//! `Tr(P V^H V) <= P` collapses to the weighted budget
//!
//! ```text
//!   (1/N) * sum_m p_m / Omega_m <= P
//! ```
//!
//! where the `Omega_m` solve a coupled fixed point driven by the spatial
//! correlation matrices, and the ergodic rate of each UE converges to
//! `log2(1 + p_m (1 - tau_m^2))`. The production path uses scalar correlation
//! (`Theta_m = g_m I`); matrix correlation and the random-matrix Monte Carlo
//! estimator exist to validate the closed forms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial correlation of every UE's channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Correlation {
    /// `Theta_m = g_m * I_N`, one positive gain per UE.
    Scalar(Vec<f64>),
    /// Explicit real symmetric PSD `N x N` matrices, one per UE.
    Matrix(Vec<DMatrix<f64>>),
}

impl Correlation {
    pub fn len(&self) -> usize {
        match self {
            Correlation::Scalar(g) => g.len(),
            Correlation::Matrix(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub n_antennas: usize,
    /// RZF regularization `alpha`.
    pub regularization: f64,
    pub correlation: Correlation,
    /// Per-UE CSI error `tau_m` in `[0, 1]`; zero is perfect CSI.
    pub csi_accuracy: Vec<f64>,
    /// Total transmit power `P` in watts.
    pub power_budget: f64,
}

impl ChannelParams {
    pub fn n_ues(&self) -> usize {
        self.correlation.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_ues();
        if m == 0 {
            return Err(Error::invalid("channel has no UEs"));
        }
        if self.n_antennas == 0 || self.n_antennas < m {
            return Err(Error::invalid(format!(
                "need N >= M >= 1, got N={} M={m}",
                self.n_antennas
            )));
        }
        if !(self.regularization > 0.0) {
            return Err(Error::invalid("regularization must be positive"));
        }
        if !(self.power_budget > 0.0) {
            return Err(Error::invalid("power budget must be positive"));
        }
        if self.csi_accuracy.len() != m {
            return Err(Error::invalid("csi_accuracy length differs from UE count"));
        }
        if let Some(t) = self.csi_accuracy.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::invalid(format!("csi accuracy {t} outside [0, 1]")));
        }
        match &self.correlation {
            Correlation::Scalar(g) => {
                if let Some(x) = g.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                    return Err(Error::invalid(format!(
                        "correlation gain {x} must be positive"
                    )));
                }
            }
            Correlation::Matrix(ts) => {
                let n = self.n_antennas;
                for (i, t) in ts.iter().enumerate() {
                    if t.nrows() != n || t.ncols() != n {
                        return Err(Error::invalid(format!("Theta_{i} is not {n}x{n}")));
                    }
                    let asym = (t - t.transpose()).amax();
                    if asym > 1e-9 * (1.0 + t.amax()) {
                        return Err(Error::invalid(format!("Theta_{i} is not symmetric")));
                    }
                    if !(t.trace() > 0.0) {
                        return Err(Error::invalid(format!("Theta_{i} has non-positive trace")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-UE gain `g_m = Tr(Theta_m) / N`.
    pub fn gains(&self) -> Vec<f64> {
        match &self.correlation {
            Correlation::Scalar(g) => g.clone(),
            Correlation::Matrix(ts) => ts
                .iter()
                .map(|t| t.trace() / self.n_antennas as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSolution {
    pub omegas: Vec<f64>,
    /// Max fixed-point residual `max_m |Omega_m - F_m(Omega)|` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// Evaluates the fixed-point map `F(Omega)`.
pub fn omega_map(params: &ChannelParams, omegas: &[f64]) -> Result<Vec<f64>> {
    let n = params.n_antennas as f64;
    let alpha = params.regularization;
    match &params.correlation {
        Correlation::Scalar(g) => {
            let s: f64 = g
                .iter()
                .zip(omegas)
                .map(|(gk, ok)| gk / (alpha + ok))
                .sum::<f64>()
                / n;
            Ok(g.iter().map(|gm| gm / (s + 1.0)).collect())
        }
        Correlation::Matrix(ts) => {
            let dim = params.n_antennas;
            let mut a = DMatrix::<f64>::identity(dim, dim);
            for (t, o) in ts.iter().zip(omegas) {
                a += t * (1.0 / (n * (alpha + o)));
            }
            let inv = a
                .cholesky()
                .ok_or_else(|| {
                    Error::LinearAlgebra("omega kernel is not positive definite".into())
                })?
                .inverse();
            Ok(ts
                .iter()
                .map(|t| t.component_mul(&inv.transpose()).sum() / n)
                .collect())
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Solves the `Omega` fixed point by plain iteration from `Omega = 1`,
/// switching to half-step damping once the residual starts growing.
pub fn solve_omega(params: &ChannelParams, tol: f64, max_iter: usize) -> Result<OmegaSolution> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut omegas = vec![1.0; params.n_ues()];
    let mut mapped = omega_map(params, &omegas)?;
    let mut residual = max_abs_diff(&omegas, &mapped);
    let mut damping = 1.0;
    let mut iterations = 0;
    while residual > tol {
        if iterations == max_iter {
            return Err(Error::OmegaNotConverged {
                iterations,
                residual,
                last: omegas,
            });
        }
        for (o, f) in omegas.iter_mut().zip(&mapped) {
            *o += damping * (f - *o);
        }
        mapped = omega_map(params, &omegas)?;
        let next = max_abs_diff(&omegas, &mapped);
        if next > residual {
            damping = 0.5;
        }
        residual = next;
        iterations += 1;
    }
    Ok(OmegaSolution {
        omegas,
        residual,
        iterations,
    })
}

/// Left-hand side of the power constraint: `(1/N) * sum_m p_m / Omega_m`.
pub fn power_budget_used(powers: &[f64], omegas: &OmegaSolution, n_antennas: usize) -> f64 {
    powers
        .iter()
        .zip(&omegas.omegas)
        .map(|(p, o)| p / o)
        .sum::<f64>()
        / n_antennas as f64
}

/// Deterministic-equivalent spectral efficiency `log2(1 + p (1 - tau^2))` in bits/s/Hz.
pub fn deterministic_rate(power: f64, tau: f64) -> f64 {
    (power * (1.0 - tau * tau)).ln_1p() / std::f64::consts::LN_2
}

/// Log-distance path loss `PL(d) = a + 10 b log10(d / 1 m)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossConfig {
    /// `a`, loss at the 1 m reference distance (dB).
    pub intercept_db: f64,
    /// `b`, path-loss exponent.
    pub exponent: f64,
}

impl Default for PathLossConfig {
    fn default() -> Self {
        // 28 GHz urban line-of-sight.
        Self {
            intercept_db: 61.4,
            exponent: 2.0,
        }
    }
}

impl PathLossConfig {
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.intercept_db + 10.0 * self.exponent * distance_m.log10()
    }
}

/// Linear power gain `10^(-PL(d)/10)` at `distance_m` metres.
pub fn pathloss_gain(distance_m: f64, model: &PathLossConfig) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::invalid(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok(10f64.powf(-model.loss_db(distance_m) / 10.0))
}

/// Receiver noise: thermal density plus a noise figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub thermal_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            thermal_dbm_per_hz: -174.0,
            noise_figure_db: 9.0,
        }
    }
}

impl NoiseConfig {
    /// Noise power in watts over `bandwidth_hz`.
    pub fn power_w(&self, bandwidth_hz: f64) -> f64 {
        dbm_to_watts(self.thermal_dbm_per_hz + 10.0 * bandwidth_hz.log10() + self.noise_figure_db)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Symmetric PSD square root by eigendecomposition; negative eigenvalues are clipped.
fn psd_sqrt(t: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = t.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Per-UE `Theta_m^{1/2}`.
enum CorrelationRoot {
    Scalar(Vec<f64>),
    Matrix(Vec<DMatrix<Complex64>>),
}

impl CorrelationRoot {
    fn new(c: &Correlation) -> Self {
        match c {
            Correlation::Scalar(g) => CorrelationRoot::Scalar(g.iter().map(|x| x.sqrt()).collect()),
            Correlation::Matrix(ts) => CorrelationRoot::Matrix(
                ts.iter()
                    .map(|t| psd_sqrt(t).map(|x| Complex64::new(x, 0.0)))
                    .collect(),
            ),
        }
    }

    fn apply(&self, m: usize, v: DVector<Complex64>) -> DVector<Complex64> {
        match self {
            CorrelationRoot::Scalar(s) => v * Complex64::new(s[m], 0.0),
            CorrelationRoot::Matrix(r) => &r[m] * v,
        }
    }
}

/// Vector of i.i.d. circularly-symmetric complex Gaussians with variance `var`.
fn complex_gaussian(rng: &mut ChaCha8Rng, n: usize, var: f64) -> DVector<Complex64> {
    let s = (var / 2.0).sqrt();
    DVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(s * re, s * im)
    })
}

/// Monte Carlo estimate of the ergodic RZF downlink rate of every UE.
///
/// Each trial draws `h_m = sqrt(N) Theta_m^{1/2} h~_m` and the imperfect
/// estimate `h^_m = sqrt(1 - tau_m^2) h_m + tau_m sqrt(N) Theta_m^{1/2} z_m`,
/// builds `V = (H^ H^^H + N alpha I_N)^{-1} H^` (evaluated through the
/// equivalent `M x M` Gram form), and averages
/// `log2(1 + p_m |h_m^H v_m|^2 / (1 + sum_{k != m} p_k |h_m^H v_k|^2))`.
/// Powers are applied as given; no precoder normalisation is performed.
pub fn ergodic_rate_mc(
    params: &ChannelParams,
    powers: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    let n = params.n_antennas;
    let m = params.n_ues();
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if powers.len() != m {
        return Err(Error::invalid("power vector length differs from UE count"));
    }
    if n > 128 {
        return Err(Error::invalid("Monte Carlo oracle is limited to N <= 128"));
    }
    let root = CorrelationRoot::new(&params.correlation);
    let sqrt_n = (n as f64).sqrt();
    let var = 1.0 / n as f64;
    let reg = Complex64::new(n as f64 * params.regularization, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; m];

    let mut h = DMatrix::<Complex64>::zeros(n, m);
    let mut h_hat = DMatrix::<Complex64>::zeros(n, m);
    for _ in 0..trials {
        for ue in 0..m {
            let tau = params.csi_accuracy[ue];
            let hm =
                root.apply(ue, complex_gaussian(&mut rng, n, var)) * Complex64::new(sqrt_n, 0.0);
            let zm =
                root.apply(ue, complex_gaussian(&mut rng, n, var)) * Complex64::new(sqrt_n, 0.0);
            let est =
                &hm * Complex64::new((1.0 - tau * tau).sqrt(), 0.0) + zm * Complex64::new(tau, 0.0);
            h.set_column(ue, &hm);
            h_hat.set_column(ue, &est);
        }
        // (H^ H^^H + N a I_N)^{-1} H^ = H^ (H^^H H^ + N a I_M)^{-1}
        let mut gram = h_hat.adjoint() * &h_hat;
        for i in 0..m {
            gram[(i, i)] += reg;
        }
        let gram_inv = gram
            .cholesky()
            .ok_or_else(|| Error::LinearAlgebra("RZF Gram matrix is singular".into()))?
            .inverse();
        let v = &h_hat * gram_inv;
        let cross = h.adjoint() * v;
        for ue in 0..m {
            let mut interference = 1.0;
            for k in 0..m {
                if k != ue {
                    interference += powers[k] * cross[(ue, k)].norm_sqr();
                }
            }
            let sinr = powers[ue] * cross[(ue, ue)].norm_sqr() / interference;
            sums[ue] += sinr.ln_1p() / std::f64::consts::LN_2;
        }
    }
    Ok(sums.into_iter().map(|s| s / trials as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_params(n: usize, m: usize, alpha: f64) -> ChannelParams {
        ChannelParams {
            n_antennas: n,
            regularization: alpha,
            correlation: Correlation::Scalar(vec![1.0; m]),
            csi_accuracy: vec![0.0; m],
            power_budget: 1.0,
        }
    }

    // Positive root of N x^2 + (N a + M - N) x - N a = 0.
    fn identity_root(n: f64, m: f64, a: f64) -> f64 {
        let b = n * a + m - n;
        (-b + (b * b + 4.0 * n * n * a).sqrt()) / (2.0 * n)
    }

    #[test]
    fn omega_identity_matches_quadratic_root() {
        let sol = solve_omega(&identity_params(32, 16, 0.01), 1e-13, 10_000).unwrap();
        let root = identity_root(32.0, 16.0, 0.01);
        for o in &sol.omegas {
            assert!((o - root).abs() < 1e-8, "{o} vs {root}");
        }
    }

    #[test]
    fn omega_single_antenna_golden_ratio() {
        let sol = solve_omega(&identity_params(1, 1, 1.0), 1e-14, 10_000).unwrap();
        assert_relative_eq!(sol.omegas[0], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn omega_rejects_empty_ue_set() {
        let p = identity_params(4, 0, 0.1);
        assert!(matches!(
            solve_omega(&p, 1e-9, 100),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn omega_iteration_limit_carries_last_iterate() {
        let err = solve_omega(&identity_params(32, 16, 0.01), 1e-15, 2).unwrap_err();
        match err {
            Error::OmegaNotConverged {
                iterations,
                last,
                residual,
            } => {
                assert_eq!(iterations, 2);
                assert_eq!(last.len(), 16);
                assert!(residual > 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn omega_matrix_with_identity_agrees_with_scalar() {
        let n = 8;
        let m = 4;
        let mut p = identity_params(n, m, 0.1);
        let scalar = solve_omega(&p, 1e-13, 10_000).unwrap();
        p.correlation = Correlation::Matrix(vec![DMatrix::identity(n, n); m]);
        let matrix = solve_omega(&p, 1e-13, 10_000).unwrap();
        for (a, b) in scalar.omegas.iter().zip(&matrix.omegas) {
            assert_relative_eq!(a, b, epsilon = 1e-11);
        }
    }

    #[test]
    fn budget_used_examples() {
        let om = |v: Vec<f64>| OmegaSolution {
            omegas: v,
            residual: 0.0,
            iterations: 0,
        };
        assert_eq!(power_budget_used(&[0.0, 0.0], &om(vec![1.0, 2.0]), 2), 0.0);
        assert_eq!(power_budget_used(&[2.0], &om(vec![0.5]), 1), 4.0);
        assert_eq!(power_budget_used(&[1.0, 1.0], &om(vec![1.0, 1.0]), 2), 1.0);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(deterministic_rate(0.0, 0.3), 0.0);
        assert_relative_eq!(deterministic_rate(3.0, 0.0), 2.0, epsilon = 1e-15);
        assert_eq!(deterministic_rate(7.0, 1.0), 0.0);
    }

    #[test]
    fn pathloss_examples() {
        let pl = PathLossConfig::default();
        assert_relative_eq!(
            pathloss_gain(1.0, &pl).unwrap(),
            10f64.powf(-6.14),
            max_relative = 1e-12
        );
        assert_relative_eq!(pl.loss_db(100.0), 101.4, epsilon = 1e-12);
        let ratio = pathloss_gain(10.0, &pl).unwrap() / pathloss_gain(100.0, &pl).unwrap();
        // one decade of distance costs 10 b dB
        assert_relative_eq!(ratio, 10f64.powf(pl.exponent), max_relative = 1e-12);
        assert!(pathloss_gain(0.0, &pl).is_err());
        assert!(pathloss_gain(-3.0, &pl).is_err());
    }

    #[test]
    fn noise_default_is_thermal_plus_nf() {
        // -174 + 90 + 9 = -75 dBm
        assert_relative_eq!(
            NoiseConfig::default().power_w(1e9),
            dbm_to_watts(-75.0),
            max_relative = 1e-12
        );
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mc_zero_power_gives_zero_rates() {
        let r = ergodic_rate_mc(&identity_params(8, 4, 0.01), &[0.0; 4], 20, 7).unwrap();
        assert!(r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn mc_is_deterministic_given_seed() {
        let p = identity_params(8, 3, 0.05);
        let a = ergodic_rate_mc(&p, &[1.0, 2.0, 3.0], 50, 11).unwrap();
        let b = ergodic_rate_mc(&p, &[1.0, 2.0, 3.0], 50, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_single_user_approaches_closed_form() {
        let p = 3.0;
        let det = deterministic_rate(p, 0.0);
        let gaps: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let r = ergodic_rate_mc(&identity_params(n, 1, 0.01), &[p], 2000, 5).unwrap();
                (r[0] - det).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
