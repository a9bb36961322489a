//! Multi-permutation combinatorial CLT lab.
//!
//! For an order-`r` tensor `a` with side `n` centred along every axis,
//! `C_n = sum_i a_{i, pi_1(i), ..., pi_{r-1}(i)}` with independent uniform
//! permutations is approximately normal. This module centres tensors,
//! evaluates `C_n`, computes its exact variance and checks normality by
//! simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{random_permutation, substream, Stream};
use crate::stats::{ks_one_sample, mean, std_normal_cdf, variance};

/// Dense order-`r` tensor with side `n`, last index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    order: usize,
    n: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(order: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if order < 2 || n == 0 {
            return Err(Error::invalid("tensor needs order >= 2 and side >= 1"));
        }
        let len = n.checked_pow(order as u32).ok_or_else(|| Error::invalid("tensor too large"))?;
        if data.len() != len {
            return Err(Error::SizeMismatch { expected: len, found: data.len() });
        }
        Ok(Tensor { order, n, data })
    }

    pub fn from_fn(order: usize, n: usize, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = n.checked_pow(order as u32).ok_or_else(|| Error::invalid("tensor too large"))?;
        let mut idx = vec![0usize; order];
        let mut data = Vec::with_capacity(len);
        for flat in 0..len {
            let mut rem = flat;
            for k in (0..order).rev() {
                idx[k] = rem % n;
                rem /= n;
            }
            data.push(f(&idx));
        }
        Tensor::new(order, n, data)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.order - 1 - axis) as u32)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.n + i);
        self.data[flat]
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, lambda: f64) -> Tensor {
        Tensor { data: self.data.iter().map(|v| v * lambda).collect(), ..self.clone() }
    }

    /// Subtracts the mean along one axis.
    fn center_axis(&mut self, axis: usize) {
        let n = self.n;
        let stride = self.stride(axis);
        let block = stride * n;
        for start in (0..self.data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                let m = (0..n).map(|k| self.data[base + k * stride]).sum::<f64>() / n as f64;
                for k in 0..n {
                    self.data[base + k * stride] -= m;
                }
            }
        }
    }

    /// Largest absolute sum over any single axis slice.
    pub fn max_slice_sum(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for axis in 0..self.order {
            let stride = self.stride(axis);
            let block = stride * n;
            for start in (0..self.data.len()).step_by(block) {
                for off in 0..stride {
                    let s: f64 = (0..n).map(|k| self.data[start + off + k * stride]).sum();
                    worst = worst.max(s.abs());
                }
            }
        }
        worst
    }
}

/// Tensor whose every axis slice sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredTensor {
    tensor: Tensor,
    /// `max |a| * sqrt(n)`.
    k1: f64,
}

impl CenteredTensor {
    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn order(&self) -> usize {
        self.tensor.order
    }

    pub fn n(&self) -> usize {
        self.tensor.n
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn sum_sq(&self) -> f64 {
        self.tensor.sum_sq()
    }
}

/// Centres along each axis in turn. The axis projections commute, so this
/// equals the inclusion-exclusion over all axis subsets.
pub fn center_tensor(raw: &Tensor) -> CenteredTensor {
    let mut t = raw.clone();
    for axis in 0..t.order {
        t.center_axis(axis);
    }
    let k1 = t.max_abs() * (t.n as f64).sqrt();
    CenteredTensor { tensor: t, k1 }
}

/// Order-3 centring written out term by term.
pub fn center_order3_explicit(raw: &Tensor) -> Result<Tensor> {
    if raw.order != 3 {
        return Err(Error::invalid(format!("explicit centring is for order 3, got {}", raw.order)));
    }
    let n = raw.n;
    let nf = n as f64;
    let a = |i: usize, j: usize, k: usize| raw.data[(i * n + j) * n + k];
    let mut m_jk = vec![0.0; n * n];
    let mut m_ik = vec![0.0; n * n];
    let mut m_ij = vec![0.0; n * n];
    let (mut m_i, mut m_j, mut m_k) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut m_all = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = a(i, j, k);
                m_jk[j * n + k] += v / nf;
                m_ik[i * n + k] += v / nf;
                m_ij[i * n + j] += v / nf;
                m_i[i] += v / (nf * nf);
                m_j[j] += v / (nf * nf);
                m_k[k] += v / (nf * nf);
                m_all += v / (nf * nf * nf);
            }
        }
    }
    Tensor::from_fn(3, n, |idx| {
        let (i, j, k) = (idx[0], idx[1], idx[2]);
        a(i, j, k) - m_jk[j * n + k] - m_ik[i * n + k] - m_ij[i * n + j] + m_i[i] + m_j[j] + m_k[k] - m_all
    })
}

/// `C_n = sum_i a_{i, pi_1(i), ..., pi_{r-1}(i)}`.
pub fn combinatorial_sum(tensor: &CenteredTensor, perms: &[Vec<usize>]) -> Result<f64> {
    let t = &tensor.tensor;
    if perms.len() != t.order - 1 {
        return Err(Error::SizeMismatch { expected: t.order - 1, found: perms.len() });
    }
    if let Some(p) = perms.iter().find(|p| p.len() != t.n) {
        return Err(Error::SizeMismatch { expected: t.n, found: p.len() });
    }
    let n = t.n;
    Ok((0..n)
        .map(|i| {
            let flat = perms.iter().fold(i, |acc, p| acc * n + p[i]);
            t.data[flat]
        })
        .sum())
}

/// Exact `Var[C_n] = (n-2) / (n (n-1)^2) * sum a^2` for order 3.
pub fn variance_formula(tensor: &CenteredTensor) -> Result<f64> {
    if tensor.order() != 3 {
        return Err(Error::invalid(format!("the closed-form variance is for order 3, got {}", tensor.order())));
    }
    let n = tensor.n() as f64;
    Ok((n - 2.0) / (n * (n - 1.0).powi(2)) * tensor.sum_sq())
}

/// Exact variance for any order `r`:
/// `sum a^2 * (n^{-(r-1)} + (-1)^r (n (n-1))^{-(r-1)})`.
pub fn variance_any_order(tensor: &CenteredTensor) -> f64 {
    let n = tensor.n() as f64;
    let k = (tensor.order() - 1) as i32;
    let sign = if tensor.order().is_multiple_of(2) { 1.0 } else { -1.0 };
    tensor.sum_sq() * (n.powi(-k) + sign * (n * (n - 1.0)).powi(-k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub schema_version: u32,
    pub order: usize,
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
    pub k1: f64,
    pub k2: f64,
    pub sum_sq: f64,
    pub empirical_mean: f64,
    pub empirical_var: f64,
    pub analytic_var: f64,
    pub relative_var_error: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
}

/// Default lower bound constant in `sum a^2 >= K_2 n^{r-1}`.
pub const DEFAULT_K2: f64 = 0.01;

/// `draws` independent values of `C_n`, one RNG substream per draw.
pub fn simulate_combinatorial_sums(tensor: &CenteredTensor, draws: usize, seed: u64) -> Vec<f64> {
    let (n, r) = (tensor.n(), tensor.order());
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(seed, Stream::Clt, d as u64);
            let perms: Vec<Vec<usize>> = (0..r - 1).map(|_| random_permutation(n, &mut rng)).collect();
            combinatorial_sum(tensor, &perms).expect("shapes match")
        })
        .collect()
}

/// Simulates `C_n` and compares the standardised draws with `N(0,1)`.
pub fn normality_diagnostic(tensor: &CenteredTensor, draws: usize, seed: u64, k2: f64) -> Result<NormalityReport> {
    if draws < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let (n, r) = (tensor.n(), tensor.order());
    let floor = k2 * (n as f64).powi(r as i32 - 1);
    let sum_sq = tensor.sum_sq();
    if !(sum_sq >= floor) || n < 3 {
        return Err(Error::DegenerateVariance(format!("sum of squares {sum_sq:.3e} below K2 n^(r-1) = {floor:.3e}")));
    }
    let analytic_var = variance_any_order(tensor);
    let values = simulate_combinatorial_sums(tensor, draws, seed);
    let sd = analytic_var.sqrt();
    let standardized: Vec<f64> = values.iter().map(|v| v / sd).collect();
    let ks = ks_one_sample(&standardized, std_normal_cdf);
    let empirical_var = variance(&values);
    Ok(NormalityReport {
        schema_version: 1,
        order: r,
        n,
        draws,
        seed,
        k1: tensor.k1(),
        k2,
        sum_sq,
        empirical_mean: mean(&values),
        empirical_var,
        analytic_var,
        relative_var_error: (empirical_var - analytic_var).abs() / analytic_var,
        ks_statistic: ks.statistic,
        ks_pvalue: ks.p_value,
    })
}

/// Random tensor with i.i.d. `Uniform(-1, 1)` entries, centred.
pub fn random_centered_tensor(order: usize, n: usize, seed: u64) -> Result<CenteredTensor> {
    use rand::Rng;
    let mut rng = substream(seed, Stream::Clt, u64::MAX);
    let raw = Tensor::from_fn(order, n, |_| rng.random::<f64>() * 2.0 - 1.0)?;
    Ok(center_tensor(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centring_kills_slice_sums() {
        let t = random_centered_tensor(3, 7, 1).unwrap();
        assert!(t.tensor().max_slice_sum() < 1e-9);
        let t4 = random_centered_tensor(4, 5, 2).unwrap();
        assert!(t4.tensor().max_slice_sum() < 1e-9);
    }

    #[test]
    fn explicit_formula_agrees() {
        let raw = Tensor::from_fn(3, 6, |i| (i[0] * 7 + i[1] * i[1] + 3 * i[2]) as f64 * 0.1 + (i[0] * i[2]) as f64).unwrap();
        let a = center_tensor(&raw);
        let b = center_order3_explicit(&raw).unwrap();
        for (x, y) in a.tensor().data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn centring_examples() {
        let c = center_tensor(&Tensor::new(3, 4, vec![2.5; 64]).unwrap());
        assert!(c.tensor().max_abs() < 1e-12);
        let u = [1.0, -2.0, 1.0];
        let v = [0.5, 0.5, -1.0];
        let w = [3.0, -1.0, -2.0];
        let rank1 = Tensor::from_fn(3, 3, |i| u[i[0]] * v[i[1]] * w[i[2]]).unwrap();
        let c = center_tensor(&rank1);
        for (x, y) in c.tensor().data().iter().zip(rank1.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let again = center_tensor(c.tensor());
        assert_eq!(again.tensor().data().len(), c.tensor().data().len());
        for (x, y) in again.tensor().data().iter().zip(c.tensor().data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn combinatorial_sum_identity_and_errors() {
        let t = random_centered_tensor(3, 5, 3).unwrap();
        let id: Vec<usize> = (0..5).collect();
        let diag: f64 = (0..5).map(|i| t.tensor().get(&[i, i, i])).sum();
        assert!((combinatorial_sum(&t, &[id.clone(), id.clone()]).unwrap() - diag).abs() < 1e-15);
        assert!(combinatorial_sum(&t, std::slice::from_ref(&id)).is_err());
        assert!(combinatorial_sum(&t, &[id.clone(), vec![0, 1]]).is_err());
    }

    #[test]
    fn variance_matches_exhaustive_enumeration() {
        use crate::calibration::all_permutations;
        let t = random_centered_tensor(3, 4, 4).unwrap();
        let perms = all_permutations(4);
        let mut vals = Vec::new();
        for p in &perms {
            for q in &perms {
                vals.push(combinatorial_sum(&t, &[p.clone(), q.clone()]).unwrap());
            }
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-12);
        assert!((v - variance_formula(&t).unwrap()).abs() < 1e-12);

        // order 2 and 4 use the general formula
        for order in [2, 4] {
            let t = random_centered_tensor(order, 4, 5).unwrap();
            let mut vals = Vec::new();
            let k = order - 1;
            let total = perms.len().pow(k as u32);
            for mut code in 0..total {
                let ps: Vec<Vec<usize>> = (0..k)
                    .map(|_| {
                        let p = perms[code % perms.len()].clone();
                        code /= perms.len();
                        p
                    })
                    .collect();
                vals.push(combinatorial_sum(&t, &ps).unwrap());
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((v - variance_any_order(&t)).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn variance_homogeneity_and_order_check() {
        let t = random_centered_tensor(3, 6, 6).unwrap();
        let scaled = center_tensor(&t.tensor().scale(3.0));
        assert!((variance_formula(&scaled).unwrap() - 9.0 * variance_formula(&t).unwrap()).abs() < 1e-10);
        assert!(variance_formula(&random_centered_tensor(2, 5, 1).unwrap()).is_err());
    }

    #[test]
    fn degenerate_variance_rejected() {
        let zero = center_tensor(&Tensor::new(3, 10, vec![0.0; 1000]).unwrap());
        assert_eq!(variance_formula(&zero).unwrap(), 0.0);
        assert!(matches!(normality_diagnostic(&zero, 100, 0, DEFAULT_K2), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn diagnostic_is_deterministic() {
        let t = random_centered_tensor(3, 12, 7).unwrap();
        let a = normality_diagnostic(&t, 500, 3, DEFAULT_K2).unwrap();
        assert_eq!(a, normality_diagnostic(&t, 500, 3, DEFAULT_K2).unwrap());
    }
}
