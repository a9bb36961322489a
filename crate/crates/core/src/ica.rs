//! Independent component analysis by minimising the joint rank dependence of
//! rotated, whitened data.
//!
//! Observations `x = M s` are whitened to `z = O (x - mean)`; the unmixing
//! rotation is parameterised by Givens angles and chosen to minimise the
//! compact joint statistic of the components after each is pushed through a
//! kernel-smoothed distribution function.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::solve_dense;
use crate::calibration::all_permutations;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Centred and whitened data with the transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningResult {
    pub mean: DVector<f64>,
    /// `Lambda^{-1/2} P^T`.
    pub transform: DMatrix<f64>,
    /// `n x r`, row `a` is `O (x_a - mean)`.
    pub whitened: DMatrix<f64>,
}

/// Whitens the rows of `data` (sample covariance with denominator `n - 1`).
pub fn whiten(data: &DMatrix<f64>) -> Result<WhiteningResult> {
    let (n, r) = data.shape();
    if n < 2 || r == 0 {
        return Err(Error::invalid("whitening needs at least two rows and one column"));
    }
    let mean = DVector::from_fn(r, |k, _| data.column(k).mean());
    let mut centred = data.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::SingularCovariance);
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let transform = inv_sqrt * eig.eigenvectors.transpose();
    let whitened = &centred * transform.transpose();
    Ok(WhiteningResult { mean, transform, whitened })
}

/// Givens angles `theta_{ij}`, `i < j`, stored in lexicographic pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationAngles {
    pub r: usize,
    pub theta: Vec<f64>,
}

/// Lexicographic list of 0-based pairs `(i, j)`, `i < j < r`.
pub fn angle_pairs(r: usize) -> Vec<(usize, usize)> {
    (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect()
}

impl RotationAngles {
    pub fn new(r: usize, theta: Vec<f64>) -> Result<Self> {
        if r < 2 {
            return Err(Error::invalid("rotations need r >= 2"));
        }
        let p = r * (r - 1) / 2;
        if theta.len() != p {
            return Err(Error::SizeMismatch { expected: p, found: theta.len() });
        }
        Ok(RotationAngles { r, theta })
    }

    pub fn zeros(r: usize) -> Self {
        RotationAngles { r, theta: vec![0.0; r * (r - 1) / 2] }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Angle of the 0-based plane `(i, j)`.
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        let idx = angle_pairs(self.r).iter().position(|&p| p == (i, j)).expect("valid pair");
        self.theta[idx]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        rotation_matrix(self)
    }

    /// True when angles in the first row lie in `[0, 2 pi)` and the rest in `[0, pi)`.
    pub fn is_canonical(&self) -> bool {
        angle_pairs(self.r).iter().zip(&self.theta).all(|(&(i, _), &t)| {
            let hi = if i == 0 { 2.0 * PI } else { PI };
            (0.0..hi).contains(&t)
        })
    }

    /// Equivalent angles in the canonical ranges. The rotation changes by a
    /// diagonal sign matrix on the left, `W' = S W`, which flips the sign of
    /// some components and leaves the objective unchanged.
    pub fn canonicalize(&self) -> RotationAngles {
        let pairs = angle_pairs(self.r);
        let mut theta = self.theta.clone();
        // factors are applied right to left in lexicographic order, so walk
        // from the rightmost factor and push any pi-shift to the left
        for k in 0..theta.len() {
            theta[k] = theta[k].rem_euclid(2.0 * PI);
            let (i, j) = pairs[k];
            if i > 0 && theta[k] >= PI {
                theta[k] -= PI;
                for m in k + 1..theta.len() {
                    let (a, b) = pairs[m];
                    let shared = [a == i, a == j, b == i, b == j].iter().filter(|&&s| s).count();
                    if shared == 1 {
                        theta[m] = -theta[m];
                    }
                }
            }
            if theta[k] >= if i == 0 { 2.0 * PI } else { PI } {
                // rounding in rem_euclid can land exactly on the upper bound
                theta[k] = 0.0;
            }
        }
        RotationAngles { r: self.r, theta }
    }
}

fn givens(r: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let mut q = DMatrix::identity(r, r);
    let (s, c) = t.sin_cos();
    q[(i, i)] = c;
    q[(j, j)] = c;
    q[(i, j)] = -s;
    q[(j, i)] = s;
    q
}

fn givens_derivative(r: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(r, r);
    let (s, c) = t.sin_cos();
    q[(i, i)] = -s;
    q[(j, j)] = -s;
    q[(i, j)] = -c;
    q[(j, i)] = c;
    q
}

/// `W = Q^{(r-1)} ... Q^{(1)}` with `Q^{(i)} = Q_{i,r} ... Q_{i,i+1}`: the
/// factors in lexicographic order are applied right to left.
pub fn rotation_matrix(angles: &RotationAngles) -> DMatrix<f64> {
    let r = angles.r;
    let mut w = DMatrix::identity(r, r);
    for (&(i, j), &t) in angle_pairs(r).iter().zip(&angles.theta) {
        w = givens(r, i, j, t) * w;
    }
    w
}

/// `dW / d theta_p` for every angle, from prefix and suffix products.
pub fn rotation_derivatives(angles: &RotationAngles) -> Vec<DMatrix<f64>> {
    let r = angles.r;
    let pairs = angle_pairs(r);
    let factors: Vec<DMatrix<f64>> = pairs.iter().zip(&angles.theta).map(|(&(i, j), &t)| givens(r, i, j, t)).collect();
    let p = factors.len();
    // right[k] = F_{k-1} ... F_0, left[k] = F_{p-1} ... F_{k+1}
    let mut right = vec![DMatrix::identity(r, r); p + 1];
    for k in 0..p {
        right[k + 1] = &factors[k] * &right[k];
    }
    let mut left = vec![DMatrix::identity(r, r); p + 1];
    for k in (0..p).rev() {
        left[k] = &left[k + 1] * &factors[k];
    }
    (0..p)
        .map(|k| {
            let (i, j) = pairs[k];
            &left[k + 1] * givens_derivative(r, i, j, angles.theta[k]) * &right[k]
        })
        .collect()
}

/// Bandwidth of the smoothed distribution functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h_i = factor * sd_i * n^{-1/5}`.
    Silverman { factor: f64 },
    Fixed { h: f64 },
}

/// Logistic kernel integral with a bandwidth rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCdfConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelCdfConfig {
    fn default() -> Self {
        KernelCdfConfig { bandwidth: Bandwidth::Silverman { factor: 1.06 } }
    }
}

impl KernelCdfConfig {
    pub fn fixed(h: f64) -> Self {
        KernelCdfConfig { bandwidth: Bandwidth::Fixed { h } }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.bandwidth {
            Bandwidth::Silverman { factor } => factor > 0.0 && factor.is_finite(),
            Bandwidth::Fixed { h } => h > 0.0 && h.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("bandwidth must be positive and finite"))
        }
    }

    pub fn bandwidth_for(&self, values: &[f64]) -> f64 {
        match self.bandwidth {
            Bandwidth::Fixed { h } => h,
            Bandwidth::Silverman { factor } => {
                let n = values.len() as f64;
                let m = values.iter().sum::<f64>() / n;
                let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                factor * sd * n.powf(-0.2)
            }
        }
    }
}

/// Logistic CDF.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Smoothed CDF `(1/n) sum_v G((s - x_v)/h)` evaluated at an arbitrary point.
pub fn smoothed_cdf_at(values: &[f64], h: f64, s: f64) -> f64 {
    values.iter().map(|v| logistic((s - v) / h)).sum::<f64>() / values.len() as f64
}

/// Smoothed CDF at every sample point, plus `G'` over pairs `a < v` packed
/// row by row.
fn smoothed_cdf_with_density(values: &[f64], h: f64, want_density: bool) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let mut u = vec![0.5; n];
    let mut dens = if want_density { Vec::with_capacity(n * (n - 1) / 2) } else { Vec::new() };
    for a in 0..n {
        let xa = values[a];
        let mut acc = 0.0;
        for v in a + 1..n {
            let g = logistic((xa - values[v]) / h);
            acc += g;
            u[v] += 1.0 - g;
            if want_density {
                dens.push(g * (1.0 - g));
            }
        }
        u[a] += acc;
    }
    let nf = n as f64;
    u.iter_mut().for_each(|x| *x /= nf);
    (u, dens)
}

/// Smoothed CDF at every sample point.
pub fn smoothed_cdf(values: &[f64], h: f64) -> Vec<f64> {
    smoothed_cdf_with_density(values, h, false).0
}

/// `sum_b w_b sign(u_a - u_b)` for every `a`, by sorting.
fn signed_sums(u: &[f64], order: &[usize], w: &[f64]) -> Vec<f64> {
    let n = u.len();
    let total: f64 = w.iter().sum();
    let mut out = vec![0.0; n];
    let mut below = 0.0;
    let mut p = 0;
    while p < n {
        let mut q = p;
        let mut tied = 0.0;
        while q < n && u[order[q]] == u[order[p]] {
            tied += w[order[q]];
            q += 1;
        }
        let above = total - below - tied;
        for &a in &order[p..q] {
            out[a] = below - above;
        }
        below += tied;
        p = q;
    }
    out
}

fn sort_order(u: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    order
}

/// One rank component, with `alpha_a = m_a - g/2 + c/2` so that the shifted
/// centred distance is `alpha_a + alpha_b - |u_a - u_b|`.
struct Component {
    u: Vec<f64>,
    order: Vec<usize>,
    alpha: Vec<f64>,
}

impl Component {
    fn new(u: Vec<f64>, c: f64) -> Self {
        let n = u.len();
        let nf = n as f64;
        let order = sort_order(&u);
        let total: f64 = u.iter().sum();
        // row means of |u_a - u_b| from prefix sums over the sorted order
        let mut rowmean = vec![0.0; n];
        let mut prefix = 0.0;
        for (p, &a) in order.iter().enumerate() {
            let v = u[a];
            let above = total - prefix - v;
            rowmean[a] = (p as f64 * v - prefix + above - (n - p - 1) as f64 * v) / nf;
            prefix += v;
        }
        let grand = rowmean.iter().sum::<f64>() / nf;
        let alpha = rowmean.iter().map(|m| m - 0.5 * grand + 0.5 * c).collect();
        Component { u, order, alpha }
    }
}

/// Observation-major copy `(alpha, u)` of every component, for the pair loops.
fn interleave(comps: &[Component]) -> Vec<[f64; 2]> {
    let n = comps[0].u.len();
    let mut out = Vec::with_capacity(n * comps.len());
    for a in 0..n {
        for comp in comps {
            out.push([comp.alpha[a], comp.u[a]]);
        }
    }
    out
}

fn compact_value(comps: &[Component], c: f64) -> f64 {
    let r = comps.len();
    let n = comps[0].u.len();
    let data = interleave(comps);
    let mut total = 0.0;
    for a in 0..n {
        let ra = &data[a * r..(a + 1) * r];
        total += ra.iter().map(|x| 2.0 * x[0]).product::<f64>();
        let mut off = 0.0;
        for b in a + 1..n {
            let rb = &data[b * r..(b + 1) * r];
            let mut prod = 1.0;
            for i in 0..r {
                prod *= ra[i][0] + rb[i][0] - (ra[i][1] - rb[i][1]).abs();
            }
            off += prod;
        }
        total += 2.0 * off;
    }
    total / (n * n) as f64 - c.powi(r as i32)
}

/// Compact joint statistic of 1-d rank points `u_i` (one vector per component).
pub fn compact_statistic_1d(points: &[Vec<f64>], c: f64) -> f64 {
    let comps: Vec<Component> = points.iter().map(|u| Component::new(u.clone(), c)).collect();
    compact_value(&comps, c)
}

fn rotate(theta: &RotationAngles, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.ncols() != theta.r {
        return Err(Error::DimensionMismatch { expected: theta.r, found: z.ncols() });
    }
    if z.nrows() < 2 {
        return Err(Error::invalid("need at least two observations"));
    }
    Ok(z * rotation_matrix(theta).transpose())
}

fn columns(y: &DMatrix<f64>) -> Vec<Vec<f64>> {
    y.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Smoothed objective: compact joint statistic of the smoothed-CDF transformed
/// components of `Z W(theta)^T`.
pub fn ica_objective(theta: &RotationAngles, whitened: &DMatrix<f64>, config: &KernelCdfConfig, c: f64) -> Result<f64> {
    config.validate()?;
    let y = rotate(theta, whitened)?;
    let pts: Vec<Vec<f64>> = columns(&y).iter().map(|col| smoothed_cdf(col, config.bandwidth_for(col))).collect();
    Ok(compact_statistic_1d(&pts, c))
}

/// Nonsmooth objective using empirical-CDF ranks `rank / n`.
pub fn ecdf_objective(theta: &RotationAngles, whitened: &DMatrix<f64>, c: f64) -> Result<f64> {
    let y = rotate(theta, whitened)?;
    let n = y.nrows();
    let pts: Vec<Vec<f64>> = columns(&y)
        .iter()
        .map(|col| {
            let mut u = vec![0.0; n];
            for (rank, &a) in sort_order(col).iter().enumerate() {
                u[a] = (rank + 1) as f64 / n as f64;
            }
            u
        })
        .collect();
    Ok(compact_statistic_1d(&pts, c))
}

/// How the gradient treats the dependence of each smoothed CDF value on the
/// other observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Full chain rule through the double centring and the kernel sums.
    #[default]
    Exact,
    /// Keeps only the row-mean and pair terms of the centring derivative and
    /// the own-argument term of the kernel sum, dropping the `O(1/n)` rest.
    Approximate,
}

/// Objective value and gradient in one pass.
pub fn ica_value_and_gradient(
    theta: &RotationAngles,
    whitened: &DMatrix<f64>,
    config: &KernelCdfConfig,
    c: f64,
    mode: GradientMode,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    let y = rotate(theta, whitened)?;
    let (n, r) = y.shape();
    let nf = n as f64;
    let cols = columns(&y);
    let hs: Vec<f64> = cols.iter().map(|col| config.bandwidth_for(col)).collect();
    let mut comps = Vec::with_capacity(r);
    let mut dens = Vec::with_capacity(r);
    for (col, &h) in cols.iter().zip(&hs) {
        let (u, d) = smoothed_cdf_with_density(col, h, true);
        comps.push(Component::new(u, c));
        dens.push(d);
    }

    // One pass over pairs a <= b. With Q_i(a, b) the product over k != i of
    // the shifted centred distances, accumulate row sums of Q_i and
    // sum_b Q_i(a, b) sign(u_a - u_b).
    let data = interleave(&comps);
    let mut rows = vec![0.0; n * r];
    let mut signed = vec![0.0; n * r];
    let mut e = vec![0.0; r];
    let mut pre = vec![0.0; r + 1];
    let mut total = 0.0;
    for a in 0..n {
        let ra = &data[a * r..(a + 1) * r];
        for b in a..n {
            let rb = &data[b * r..(b + 1) * r];
            pre[0] = 1.0;
            for i in 0..r {
                e[i] = ra[i][0] + rb[i][0] - (ra[i][1] - rb[i][1]).abs();
                pre[i + 1] = pre[i] * e[i];
            }
            let mut suf = 1.0;
            for i in (0..r).rev() {
                let q = pre[i] * suf;
                suf *= e[i];
                if a == b {
                    rows[a * r + i] += q;
                } else {
                    rows[a * r + i] += q;
                    rows[b * r + i] += q;
                    let s = sign(ra[i][1] - rb[i][1]);
                    signed[a * r + i] += q * s;
                    signed[b * r + i] -= q * s;
                }
            }
            total += if a == b { pre[r] } else { 2.0 * pre[r] };
        }
    }
    let value = total / (nf * nf) - c.powi(r as i32);

    let ones = vec![1.0; n];
    let mut dy = DMatrix::zeros(n, r);
    for i in 0..r {
        let comp = &comps[i];
        let rowmean: Vec<f64> = (0..n).map(|a| rows[a * r + i] / nf).collect();
        let sign_count = signed_sums(&comp.u, &comp.order, &ones);
        let mut g = vec![0.0; n];
        match mode {
            GradientMode::Exact => {
                // dJ/dD = -(H Q H) / n^2 with Q symmetric
                let grand = rowmean.iter().sum::<f64>() / nf;
                let signed_rowmean = signed_sums(&comp.u, &comp.order, &rowmean);
                for a in 0..n {
                    let s = -signed[a * r + i] + (rowmean[a] - grand) * sign_count[a] + signed_rowmean[a];
                    g[a] = 2.0 * s / (nf * nf);
                }
            }
            GradientMode::Approximate => {
                for a in 0..n {
                    let s = sign_count[a] / nf * rows[a * r + i] - signed[a * r + i];
                    g[a] = s / (nf * nf);
                }
            }
        }
        let mut own = vec![0.0; n];
        let mut cross = vec![0.0; n];
        let mut idx = 0;
        let d = &dens[i];
        for a in 0..n {
            let (mut own_a, mut cross_a) = (0.0, 0.0);
            let ga = g[a];
            for v in a + 1..n {
                let w = d[idx];
                idx += 1;
                own_a += w;
                own[v] += w;
                cross_a += g[v] * w;
                cross[v] += ga * w;
            }
            own[a] += own_a;
            cross[a] += cross_a;
        }
        let scale = 1.0 / (nf * hs[i]);
        for k in 0..n {
            let val = match mode {
                GradientMode::Exact => g[k] * own[k] - cross[k],
                GradientMode::Approximate => g[k] * (own[k] + 0.25),
            };
            dy[(k, i)] = scale * val;
        }
    }
    let gw = dy.transpose() * whitened;
    let grad = rotation_derivatives(theta).iter().map(|dw| dw.component_mul(&gw).sum()).collect();
    Ok((value, grad))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of [`ica_objective`] with respect to the angles. Bandwidths are
/// held fixed; under the Silverman rule this is exact for whitened input,
/// where every rotated component has unit sample variance.
pub fn ica_gradient(
    theta: &RotationAngles,
    whitened: &DMatrix<f64>,
    config: &KernelCdfConfig,
    c: f64,
    mode: GradientMode,
) -> Result<Vec<f64>> {
    ica_value_and_gradient(theta, whitened, config, c, mode).map(|(_, g)| g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub c: f64,
    pub kernel: KernelCdfConfig,
    pub gradient: GradientMode,
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub rel_window: usize,
    pub min_n: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            c: 1.0,
            kernel: KernelCdfConfig::default(),
            gradient: GradientMode::Exact,
            restarts: 8,
            max_iter: 500,
            grad_tol: 1e-5,
            rel_tol: 1e-9,
            rel_window: 5,
            min_n: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaEstimate {
    pub theta_hat: RotationAngles,
    pub w_hat: DMatrix<f64>,
    /// `W_hat O`; estimated sources are `unmixing (x - mean)`.
    pub unmixing: DMatrix<f64>,
    /// Inverse of `unmixing`.
    pub mixing_hat: DMatrix<f64>,
    pub whitening: WhiteningResult,
    pub objective: f64,
    /// Trace of the best restart.
    pub trace: Vec<TraceEntry>,
    pub restarts: Vec<RestartSummary>,
    /// False when the best restart hit `max_iter` before either tolerance.
    pub converged: bool,
}

impl IcaEstimate {
    /// Estimated sources, `n x r`.
    pub fn sources(&self) -> DMatrix<f64> {
        &self.whitening.whitened * self.w_hat.transpose()
    }

    /// Standard deviation of the final objective across restarts.
    pub fn restart_dispersion(&self) -> f64 {
        let v: Vec<f64> = self.restarts.iter().map(|s| s.objective).collect();
        if v.len() < 2 {
            return 0.0;
        }
        crate::stats::std_dev(&v)
    }
}

struct RestartRun {
    theta: RotationAngles,
    value: f64,
    trace: Vec<TraceEntry>,
    converged: bool,
}

fn initial_angles(r: usize, seed: u64, restart: usize) -> RotationAngles {
    let mut rng = substream(seed, Stream::Restarts, restart as u64);
    let theta = angle_pairs(r)
        .iter()
        .map(|&(i, _)| rng.random::<f64>() * if i == 0 { 2.0 * PI } else { PI })
        .collect();
    RotationAngles { r, theta }
}

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn descend(z: &DMatrix<f64>, start: RotationAngles, opts: &FitOptions) -> Result<RestartRun> {
    let eval = |t: &RotationAngles| ica_value_and_gradient(t, z, &opts.kernel, opts.c, opts.gradient);
    // iterate on angles wrapped only by periodicity, so that successive
    // gradients share coordinates; sign-flip canonicalisation happens at the end
    let wrap = |t: f64| t.rem_euclid(2.0 * PI);
    let mut theta = RotationAngles { r: start.r, theta: start.theta.iter().map(|&t| wrap(t)).collect() };
    let (mut f, mut g) = eval(&theta)?;
    let mut trace = vec![TraceEntry { iteration: 0, value: f, grad_norm: inf_norm(&g) }];
    let mut history = vec![f];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;

    for it in 1..=opts.max_iter {
        let gn = inf_norm(&g);
        if gn < opts.grad_tol {
            converged = true;
            break;
        }
        let g2: f64 = g.iter().map(|v| v * v).sum();
        // Barzilai-Borwein trial step, capped so no angle moves more than 1 rad
        let mut t = match &prev {
            None => 0.1 / gn,
            Some((t_prev, g_prev)) => {
                let y: Vec<f64> = g.iter().zip(g_prev).map(|(a, b)| a - b).collect();
                let sy: f64 = -t_prev * g_prev.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
                let ss = t_prev * t_prev * g_prev.iter().map(|v| v * v).sum::<f64>();
                if sy > 0.0 {
                    ss / sy
                } else {
                    2.0 * t_prev
                }
            }
        };
        t = t.min(1.0 / gn);
        let accepted = loop {
            let trial = RotationAngles { r: theta.r, theta: theta.theta.iter().zip(&g).map(|(a, b)| wrap(a - t * b)).collect() };
            let ft = ica_objective(&trial, z, &opts.kernel, opts.c)?;
            if ft <= f - 1e-4 * t * g2 {
                break Some(trial);
            }
            t *= 0.5;
            if t * gn < 1e-14 {
                break None;
            }
        };
        let Some(next) = accepted else {
            // no descent possible at machine precision
            converged = true;
            break;
        };
        theta = next;
        let g_old = std::mem::take(&mut g);
        (f, g) = eval(&theta)?;
        prev = Some((t, g_old));
        trace.push(TraceEntry { iteration: it, value: f, grad_norm: inf_norm(&g) });
        history.push(f);
        if history.len() > opts.rel_window {
            let old = history[history.len() - 1 - opts.rel_window];
            if old - f <= opts.rel_tol * old.abs() {
                converged = true;
                break;
            }
        }
    }
    if !converged && inf_norm(&g) < opts.grad_tol {
        converged = true;
    }
    Ok(RestartRun { theta: theta.canonicalize(), value: f, trace, converged })
}

/// Whitens `data` (`n x r`, rows are observations) and minimises the smoothed
/// objective from several random starting rotations.
///
/// A run that exhausts `max_iter` is not an error: the best iterate is
/// returned with `converged = false` and a warning is logged.
pub fn fit_ica(data: &DMatrix<f64>, opts: &FitOptions) -> Result<IcaEstimate> {
    let (n, r) = data.shape();
    if r < 2 {
        return Err(Error::invalid("ICA needs at least two columns"));
    }
    if n < opts.min_n {
        return Err(Error::invalid(format!("ICA needs n >= {}, got {n}", opts.min_n)));
    }
    if opts.restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    opts.kernel.validate()?;
    let whitening = whiten(data)?;
    let z = &whitening.whitened;
    let runs = (0..opts.restarts)
        .into_par_iter()
        .map(|k| descend(z, initial_angles(r, opts.seed, k), opts))
        .collect::<Result<Vec<_>>>()?;
    let restarts: Vec<RestartSummary> = runs
        .iter()
        .enumerate()
        .map(|(k, run)| RestartSummary {
            restart: k,
            objective: run.value,
            iterations: run.trace.len() - 1,
            converged: run.converged,
        })
        .collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one restart");
    if !best.converged {
        log::warn!("ICA did not converge within {} iterations", opts.max_iter);
    }
    let w_hat = rotation_matrix(&best.theta);
    let unmixing = &w_hat * &whitening.transform;
    let mixing_hat = unmixing.clone().try_inverse().ok_or(Error::SingularMatrix)?;
    Ok(IcaEstimate {
        theta_hat: best.theta,
        w_hat,
        unmixing,
        mixing_hat,
        whitening,
        objective: best.value,
        trace: best.trace,
        restarts,
        converged: best.converged,
    })
}

/// Recovery error `D(M_hat, M)`: the Frobenius distance of `C M_hat^{-1} M`
/// to the identity, minimised over signed permutations with positive row
/// scaling `C`, divided by `sqrt(r - 1)`.
pub fn recovery_error(m_hat: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let r = m.nrows();
    if m.ncols() != r || m_hat.nrows() != r || m_hat.ncols() != r {
        return Err(Error::invalid("recovery error needs two square matrices of equal size"));
    }
    if r < 2 {
        return Err(Error::invalid("recovery error needs r >= 2"));
    }
    let inv = m_hat.clone().try_inverse().ok_or(Error::SingularMatrix)?;
    let v = inv * m;
    // cost of sending row a to unit vector k with its best scale
    let mut cost = vec![0.0; r * r];
    for a in 0..r {
        let row = v.row(a);
        let norm2 = row.norm_squared();
        for k in 0..r {
            cost[a * r + k] = if norm2 > 0.0 { 1.0 - row[k] * row[k] / norm2 } else { 1.0 };
        }
    }
    let best = if r <= 8 {
        all_permutations(r)
            .iter()
            .map(|p| (0..r).map(|a| cost[a * r + p[a]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    } else {
        let p = solve_dense(&cost, r);
        (0..r).map(|a| cost[a * r + p[a]]).sum()
    };
    Ok(best.max(0.0).sqrt() / ((r - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_matrix(n: usize, r: usize, rng: &mut StreamRng) -> DMatrix<f64> {
        DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_matrix(&RotationAngles::zeros(4)), DMatrix::identity(4, 4));
        let w = rotation_matrix(&RotationAngles::new(2, vec![PI / 2.0]).unwrap());
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((w - want).norm() < 1e-15);
        for r in 2..6 {
            let a = initial_angles(r, 3, r);
            let w = rotation_matrix(&a);
            assert!((w.transpose() * &w - DMatrix::identity(r, r)).norm() < 1e-12);
            assert!((w.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_order_matches_definition() {
        // r = 3: W = Q_23 Q_13 Q_12
        let a = RotationAngles::new(3, vec![0.3, 0.7, 1.1]).unwrap();
        let want = givens(3, 1, 2, 1.1) * givens(3, 0, 2, 0.7) * givens(3, 0, 1, 0.3);
        assert!((rotation_matrix(&a) - want).norm() < 1e-15);
    }

    #[test]
    fn canonicalization_is_a_sign_flip() {
        let mut rng = substream(5, Stream::Data, 1);
        for r in 2..6 {
            for _ in 0..20 {
                let p = r * (r - 1) / 2;
                let theta: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
                let a = RotationAngles::new(r, theta).unwrap();
                let c = a.canonicalize();
                assert!(c.is_canonical(), "{c:?}");
                let s = rotation_matrix(&c) * rotation_matrix(&a).transpose();
                for i in 0..r {
                    for j in 0..r {
                        let want = if i == j { s[(i, i)].signum() } else { 0.0 };
                        assert!((s[(i, j)] - want).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let a = initial_angles(4, 9, 0);
        let ds = rotation_derivatives(&a);
        for (k, d) in ds.iter().enumerate() {
            let mut hi = a.clone();
            let mut lo = a.clone();
            hi.theta[k] += 1e-6;
            lo.theta[k] -= 1e-6;
            let fd = (rotation_matrix(&hi) - rotation_matrix(&lo)) / 2e-6;
            assert!((fd - d).norm() < 1e-8);
        }
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let mut rng = substream(2, Stream::Data, 0);
        let x = gaussian_matrix(300, 3, &mut rng) * DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.5, 0.2, 1.0]);
        let w = whiten(&x).unwrap();
        let z = &w.whitened;
        let cov = z.transpose() * z / 299.0;
        assert!((cov - DMatrix::identity(3, 3)).norm() < 1e-6);
        for k in 0..3 {
            assert!(z.column(k).mean().abs() < 1e-12);
        }
    }

    #[test]
    fn whitening_diagonal_scales() {
        let mut rng = substream(3, Stream::Data, 0);
        let x = gaussian_matrix(20000, 2, &mut rng) * DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let o = whiten(&x).unwrap().transform;
        let mut diag: Vec<f64> = (0..2).map(|k| o.column(k).abs().max()).collect();
        diag.sort_by(f64::total_cmp);
        assert!((diag[0] - 1.0 / 3.0).abs() < 0.01);
        assert!((diag[1] - 0.5).abs() < 0.01);
    }

    #[test]
    fn singular_covariance_rejected() {
        let x = DMatrix::from_fn(10, 2, |a, k| if k == 0 { a as f64 } else { 2.0 * a as f64 });
        assert!(matches!(whiten(&x), Err(Error::SingularCovariance)));
    }

    #[test]
    fn smoothed_cdf_close_to_gaussian() {
        let mut rng = substream(4, Stream::Data, 0);
        let x: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = KernelCdfConfig::default().bandwidth_for(&x);
        let gap = (-40..=40)
            .map(|k| k as f64 / 10.0)
            .map(|s| (smoothed_cdf_at(&x, h, s) - crate::stats::std_normal_cdf(s)).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 0.03, "gap {gap}");
        let u = smoothed_cdf(&x[..50], h);
        assert!((u[7] - smoothed_cdf_at(&x[..50], h, x[7])).abs() < 1e-14);
    }

    #[test]
    fn tiny_bandwidth_matches_ecdf_objective() {
        let mut rng = substream(6, Stream::Data, 0);
        let z = whiten(&gaussian_matrix(200, 3, &mut rng)).unwrap().whitened;
        let t = initial_angles(3, 1, 0);
        let smooth = ica_objective(&t, &z, &KernelCdfConfig::fixed(1e-9), 1.0).unwrap();
        let ecdf = ecdf_objective(&t, &z, 1.0).unwrap();
        assert!((smooth - ecdf).abs() <= 1e-3);
    }

    #[test]
    fn objective_invariant_under_canonicalization() {
        let mut rng = substream(7, Stream::Data, 0);
        let z = whiten(&gaussian_matrix(80, 3, &mut rng)).unwrap().whitened;
        let a = RotationAngles::new(3, vec![7.0, -2.0, 4.0]).unwrap();
        let cfg = KernelCdfConfig::default();
        let f1 = ica_objective(&a, &z, &cfg, 1.0).unwrap();
        let f2 = ica_objective(&a.canonicalize(), &z, &cfg, 1.0).unwrap();
        assert!((f1 - f2).abs() <= 1e-12 * f1.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = substream(8, Stream::Data, 0);
        let z = whiten(&gaussian_matrix(60, 3, &mut rng).map(|v: f64| v.powi(3))).unwrap().whitened;
        let cfg = KernelCdfConfig::default();
        let t = initial_angles(3, 2, 0);
        let g = ica_gradient(&t, &z, &cfg, 0.7, GradientMode::Exact).unwrap();
        for k in 0..3 {
            let (mut hi, mut lo) = (t.clone(), t.clone());
            hi.theta[k] += 1e-5;
            lo.theta[k] -= 1e-5;
            let fd = (ica_objective(&hi, &z, &cfg, 0.7).unwrap() - ica_objective(&lo, &z, &cfg, 0.7).unwrap()) / 2e-5;
            assert!((fd - g[k]).abs() <= 1e-3 * fd.abs().max(1e-6), "{k}: {fd} vs {}", g[k]);
        }
        // the approximation is a descent direction in practice but not exact
        let ga = ica_gradient(&t, &z, &cfg, 0.7, GradientMode::Approximate).unwrap();
        assert_eq!(ga.len(), 3);
    }

    fn naive_compact(points: &[Vec<f64>], c: f64) -> f64 {
        let n = points[0].len();
        let nf = n as f64;
        let es: Vec<Vec<f64>> = points
            .iter()
            .map(|u| {
                let d: Vec<f64> = (0..n * n).map(|ab| (u[ab / n] - u[ab % n]).abs()).collect();
                let m: Vec<f64> = (0..n).map(|a| d[a * n..(a + 1) * n].iter().sum::<f64>() / nf).collect();
                let g = m.iter().sum::<f64>() / nf;
                (0..n * n).map(|ab| m[ab / n] + m[ab % n] - d[ab] - g).collect()
            })
            .collect();
        let total: f64 = (0..n * n).map(|ab| es.iter().map(|e| e[ab] + c).product::<f64>()).sum();
        total / (nf * nf) - c.powi(points.len() as i32)
    }

    #[test]
    fn fused_statistic_matches_dense() {
        let mut rng = substream(12, Stream::Data, 0);
        for &c in &[0.0, 0.5, 2.0] {
            let mut pts: Vec<Vec<f64>> =
                (0..3).map(|_| (0..17).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
            pts[1][4] = pts[1][9];
            let a = compact_statistic_1d(&pts, c);
            let b = naive_compact(&pts, c);
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn signed_sums_with_ties() {
        let u = [0.3, 0.1, 0.3, 0.5];
        let w = [1.0, 2.0, 4.0, 8.0];
        let got = signed_sums(&u, &sort_order(&u), &w);
        let want: Vec<f64> = (0..4).map(|a| (0..4).map(|b| w[b] * sign(u[a] - u[b])).sum()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn recovery_error_identifiability_class() {
        let mut rng = substream(9, Stream::Data, 0);
        let m = gaussian_matrix(3, 3, &mut rng);
        assert!(recovery_error(&m, &m).unwrap() < 1e-12);
        let p = DMatrix::from_row_slice(3, 3, &[0.0, -2.0, 0.0, 0.0, 0.0, 0.5, 3.0, 0.0, 0.0]);
        assert!(recovery_error(&(&m * p), &m).unwrap() < 1e-12);
        let singular = DMatrix::zeros(3, 3);
        assert!(matches!(recovery_error(&singular, &m), Err(Error::SingularMatrix)));
    }

    #[test]
    fn max_iter_zero_returns_start() {
        let mut rng = substream(10, Stream::Data, 0);
        let x = gaussian_matrix(60, 2, &mut rng).map(|v: f64| v.powi(3));
        let opts = FitOptions { max_iter: 0, restarts: 1, ..FitOptions::default() };
        let est = fit_ica(&x, &opts).unwrap();
        assert!(!est.converged);
        assert_eq!(est.theta_hat, initial_angles(2, 0, 0).canonicalize());
        assert_eq!(est.trace.len(), 1);
        assert!(fit_ica(&x.rows(0, 10).into_owned(), &opts).is_err());
    }
}
