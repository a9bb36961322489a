//! Synthetic data generators for the standard simulation designs.
//!
//! Every generator is a pure function of its parameters and `seed`: draws come
//! from the [`Stream::Data`] substream of the seed, so the same call returns
//! the same sample on every platform.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Cauchy, ChiSquared, Exp, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream, StreamRng};
use crate::sample::{Block, BlockedSample};

fn data_rng(seed: u64) -> StreamRng {
    substream(seed, Stream::Data, 0)
}

fn std_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn std_cauchy(rng: &mut StreamRng) -> f64 {
    rng.sample(Cauchy::new(0.0, 1.0).expect("valid Cauchy"))
}

/// Covariance structures of the Gaussian power designs.
#[derive(Debug, Clone, PartialEq)]
pub enum CovKind {
    /// `sigma_ij = rho^|i-j|`.
    Ar(f64),
    /// `sigma_ii = 1`, `sigma_ij = rho` for `1 <= |i-j| <= 2`, else 0.
    Banded(f64),
    Custom(DMatrix<f64>),
}

impl CovKind {
    pub fn matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        match self {
            CovKind::Ar(rho) => Ok(DMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))),
            CovKind::Banded(rho) => Ok(DMatrix::from_fn(dim, dim, |i, j| match i.abs_diff(j) {
                0 => 1.0,
                1 | 2 => *rho,
                _ => 0.0,
            })),
            CovKind::Custom(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
                }
                Ok(m.clone())
            }
        }
    }
}

/// Lower Cholesky factor, or `NotPositiveDefinite`.
pub fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cov.clone().cholesky().map(|c| c.l()).ok_or(Error::NotPositiveDefinite)
}

fn gaussian_rows(n: usize, chol: &DMatrix<f64>, rng: &mut StreamRng) -> Vec<f64> {
    let dim = chol.nrows();
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let z = DVector::from_fn(dim, |_, _| std_normal(rng));
        out.extend((chol * z).iter());
    }
    out
}

/// `N(0, Sigma)` draws split into consecutive blocks of the given sizes.
pub fn gen_gaussian_cov(n: usize, dim: usize, cov: &CovKind, block_dims: &[usize], seed: u64) -> Result<BlockedSample> {
    let sigma = cov.matrix(dim)?;
    let chol = cholesky_factor(&sigma)?;
    let data = gaussian_rows(n, &chol, &mut data_rng(seed));
    BlockedSample::from_columns(n, dim, &data, block_dims)
}

fn check_odd_power(q: u32) -> Result<()> {
    if q == 0 || q.is_multiple_of(2) {
        return Err(Error::invalid(format!("copula power q must be a positive odd integer, got {q}")));
    }
    Ok(())
}

/// Componentwise `Z^q` with `Z ~ N(0, Sigma)`.
pub fn gen_copula_power(n: usize, q: u32, sigma: &DMatrix<f64>, seed: u64) -> Result<Block> {
    check_odd_power(q)?;
    let chol = cholesky_factor(sigma)?;
    let data = gaussian_rows(n, &chol, &mut data_rng(seed));
    Block::new(sigma.nrows(), data.into_iter().map(|v| v.powi(q as i32)).collect())
}

/// The three null designs: r = 3 independent blocks of dimension 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSetting {
    /// i.i.d. `N_3(0, I)` blocks.
    Gaussian,
    /// i.i.d. coordinates distributed as `N(0,1)^3`.
    CopulaCube,
    /// i.i.d. standard Cauchy coordinates.
    Cauchy,
}

pub fn gen_null(setting: NullSetting, n: usize, seed: u64) -> Result<BlockedSample> {
    let mut rng = data_rng(seed);
    let draw = |rng: &mut StreamRng| match setting {
        NullSetting::Gaussian => std_normal(rng),
        NullSetting::CopulaCube => std_normal(rng).powi(3),
        NullSetting::Cauchy => std_cauchy(rng),
    };
    let data: Vec<f64> = (0..n * 9).map(|_| draw(&mut rng)).collect();
    BlockedSample::from_columns(n, 9, &data, &[3, 3, 3])
}

/// `X_i = Z_i + a V` with Cauchy `Z_i` in `R^3` and one shared Cauchy `V`
/// broadcast to all coordinates.
pub fn gen_cauchy_regression(n: usize, a: f64, seed: u64) -> Result<BlockedSample> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("a must be >= 0, got {a}")));
    }
    let mut rng = data_rng(seed);
    shared_noise_design(n, &mut rng, |rng| a * std_cauchy(rng))
}

/// `X_i = Z_i + sin(b W)` with Cauchy `Z_i` and `W`.
pub fn gen_sine_dependence(n: usize, b: f64, seed: u64) -> Result<BlockedSample> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("b must be >= 0, got {b}")));
    }
    let mut rng = data_rng(seed);
    shared_noise_design(n, &mut rng, |rng| (b * std_cauchy(rng)).sin())
}

fn shared_noise_design(n: usize, rng: &mut StreamRng, noise: impl Fn(&mut StreamRng) -> f64) -> Result<BlockedSample> {
    let mut data = Vec::with_capacity(n * 9);
    for _ in 0..n {
        let z: Vec<f64> = (0..9).map(|_| std_cauchy(rng)).collect();
        let v = noise(rng);
        data.extend(z.into_iter().map(|zk| zk + v));
    }
    BlockedSample::from_columns(n, 9, &data, &[3, 3, 3])
}

/// Law of each independent base block in the Konijn construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum BaseLaw {
    Gaussian,
    /// Componentwise odd power of a Gaussian vector.
    GaussianCopula { q: u32 },
    /// Multivariate t with `df` degrees of freedom.
    StudentT { df: f64 },
}

impl BaseLaw {
    fn draw(&self, chol: &DMatrix<f64>, rng: &mut StreamRng) -> Vec<f64> {
        let dim = chol.nrows();
        let z = chol * DVector::from_fn(dim, |_, _| std_normal(rng));
        match self {
            BaseLaw::Gaussian => z.iter().copied().collect(),
            BaseLaw::GaussianCopula { q } => z.iter().map(|v| v.powi(*q as i32)).collect(),
            BaseLaw::StudentT { df } => {
                let w: f64 = rng.sample(ChiSquared::new(*df).expect("valid df"));
                let s = (df / w).sqrt();
                z.iter().map(|v| v * s).collect()
            }
        }
    }
}

/// Konijn alternative `X = A_delta X'` with independent base blocks `X'_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KonijnSpec {
    pub block_dims: Vec<usize>,
    /// `M_{i,j}` for `i != j`; `None` means the identity (requires `d_i = d_j`).
    pub couplings: Vec<Vec<Option<DMatrix<f64>>>>,
    pub delta: f64,
    pub base: BaseLaw,
    /// Covariance (scale) matrix of every base block.
    pub base_cov: Vec<DMatrix<f64>>,
}

impl KonijnSpec {
    /// `r` blocks of dimension `d`, identity couplings, base covariance with
    /// unit variances and correlation `rho`.
    pub fn standard(base: BaseLaw, r: usize, d: usize, rho: f64, delta: f64) -> Self {
        let cov = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
        KonijnSpec {
            block_dims: vec![d; r],
            couplings: vec![vec![None; r]; r],
            delta,
            base,
            base_cov: vec![cov; r],
        }
    }

    /// Local alternative with `delta = h / sqrt(n)`.
    pub fn local(base: BaseLaw, r: usize, d: usize, rho: f64, h: f64, n: usize) -> Self {
        Self::standard(base, r, d, rho, h / (n as f64).sqrt())
    }

    /// Block matrix with `(1 - delta) I` on the diagonal and `delta M_{i,j}` off it.
    pub fn mixing_matrix(&self) -> Result<DMatrix<f64>> {
        let r = self.block_dims.len();
        let total: usize = self.block_dims.iter().sum();
        let offsets: Vec<usize> = self.block_dims.iter().scan(0, |s, &d| { let o = *s; *s += d; Some(o) }).collect();
        let mut a = DMatrix::zeros(total, total);
        for i in 0..r {
            for j in 0..r {
                let (di, dj) = (self.block_dims[i], self.block_dims[j]);
                let block = if i == j {
                    DMatrix::identity(di, di) * (1.0 - self.delta)
                } else {
                    let m = match &self.couplings[i][j] {
                        Some(m) => {
                            if m.nrows() != di || m.ncols() != dj {
                                return Err(Error::DimensionMismatch { expected: di, found: m.nrows() });
                            }
                            m.clone()
                        }
                        None => {
                            if di != dj {
                                return Err(Error::invalid(format!("identity coupling needs d_{i} = d_{j}")));
                            }
                            DMatrix::identity(di, dj)
                        }
                    };
                    m * self.delta
                };
                a.view_mut((offsets[i], offsets[j]), (di, dj)).copy_from(&block);
            }
        }
        Ok(a)
    }

    fn validate(&self) -> Result<DMatrix<f64>> {
        let r = self.block_dims.len();
        if r < 2 || self.couplings.len() != r || self.base_cov.len() != r {
            return Err(Error::invalid("Konijn spec needs r >= 2 and per-block couplings and covariances"));
        }
        let a = self.mixing_matrix()?;
        let det = a.clone().lu().determinant();
        if !det.is_finite() || det.abs() < 1e-10 {
            return Err(Error::SingularMixing);
        }
        Ok(a)
    }

    /// `A Sigma' A^T` for Gaussian base blocks.
    pub fn population_covariance(&self) -> Result<DMatrix<f64>> {
        let a = self.mixing_matrix()?;
        let total = a.nrows();
        let mut s = DMatrix::zeros(total, total);
        let mut o = 0;
        for c in &self.base_cov {
            s.view_mut((o, o), (c.nrows(), c.ncols())).copy_from(c);
            o += c.nrows();
        }
        Ok(&a * s * a.transpose())
    }
}

pub fn gen_konijn(n: usize, spec: &KonijnSpec, seed: u64) -> Result<BlockedSample> {
    let a = spec.validate()?;
    let chols = spec.base_cov.iter().map(cholesky_factor).collect::<Result<Vec<_>>>()?;
    let total: usize = spec.block_dims.iter().sum();
    let mut rng = data_rng(seed);
    let mut data = Vec::with_capacity(n * total);
    for _ in 0..n {
        let mut xp = Vec::with_capacity(total);
        for c in &chols {
            xp.extend(spec.base.draw(c, &mut rng));
        }
        let x = &a * DVector::from_vec(xp);
        data.extend(x.iter());
    }
    BlockedSample::from_columns(n, total, &data, &spec.block_dims)
}

/// Draws one joint row (all blocks concatenated).
pub type RowSampler = Arc<dyn Fn(&mut StreamRng) -> Vec<f64> + Send + Sync>;

/// Joint laws used in mixture alternatives.
#[derive(Clone)]
pub enum MixtureLaw {
    /// All coordinates i.i.d. standard normal.
    IndependentGaussian,
    /// Every block equals one shared standard normal vector (blocks must share a dimension).
    Coupled,
    /// Coordinates `k` of all blocks are jointly Gaussian with correlation `rho`.
    Equicorrelated { rho: f64 },
    Custom(RowSampler),
}

impl fmt::Debug for MixtureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixtureLaw::IndependentGaussian => write!(f, "IndependentGaussian"),
            MixtureLaw::Coupled => write!(f, "Coupled"),
            MixtureLaw::Equicorrelated { rho } => write!(f, "Equicorrelated {{ rho: {rho} }}"),
            MixtureLaw::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl MixtureLaw {
    fn draw(&self, dims: &[usize], rng: &mut StreamRng) -> Vec<f64> {
        let total: usize = dims.iter().sum();
        match self {
            MixtureLaw::IndependentGaussian => (0..total).map(|_| std_normal(rng)).collect(),
            MixtureLaw::Coupled => {
                let z: Vec<f64> = (0..dims[0]).map(|_| std_normal(rng)).collect();
                dims.iter().flat_map(|_| z.iter().copied()).collect()
            }
            MixtureLaw::Equicorrelated { rho } => {
                let d = dims[0];
                let shared: Vec<f64> = (0..d).map(|_| std_normal(rng)).collect();
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                dims.iter().flat_map(|_| (0..d).map(|k| a * shared[k] + b * std_normal(rng)).collect::<Vec<_>>()).collect()
            }
            MixtureLaw::Custom(f) => f(rng),
        }
    }
}

/// `(1 - delta) * product law + delta * g`.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub delta: f64,
    pub block_dims: Vec<usize>,
    pub product: MixtureLaw,
    pub dependent: MixtureLaw,
}

impl MixtureSpec {
    /// Local alternative with `delta = h / sqrt(n)`, clamped to `[0, 1]`.
    pub fn local(h: f64, n: usize, block_dims: Vec<usize>, dependent: MixtureLaw) -> Self {
        MixtureSpec {
            delta: (h / (n as f64).sqrt()).clamp(0.0, 1.0),
            block_dims,
            product: MixtureLaw::IndependentGaussian,
            dependent,
        }
    }
}

/// Each observation comes from the dependent law with probability `delta`.
/// The caller is responsible for `g` having support inside that of the product law.
pub fn gen_mixture(n: usize, spec: &MixtureSpec, seed: u64) -> Result<BlockedSample> {
    if !(0.0..=1.0).contains(&spec.delta) {
        return Err(Error::invalid(format!("mixture delta must lie in [0,1], got {}", spec.delta)));
    }
    let dims = &spec.block_dims;
    let needs_equal = matches!(spec.dependent, MixtureLaw::Coupled | MixtureLaw::Equicorrelated { .. })
        || matches!(spec.product, MixtureLaw::Coupled | MixtureLaw::Equicorrelated { .. });
    if needs_equal && dims.iter().any(|&d| d != dims[0]) {
        return Err(Error::invalid("coupled mixture laws need equal block dimensions"));
    }
    let total: usize = dims.iter().sum();
    let mut rng = data_rng(seed);
    let mut data = Vec::with_capacity(n * total);
    for _ in 0..n {
        let from_g = rng.random::<f64>() < spec.delta;
        let row = if from_g { spec.dependent.draw(dims, &mut rng) } else { spec.product.draw(dims, &mut rng) };
        if row.len() != total {
            return Err(Error::SizeMismatch { expected: total, found: row.len() });
        }
        data.extend(row);
    }
    BlockedSample::from_columns(n, total, &data, dims)
}

/// Symmetric marginal laws of the sign model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricLaw {
    Gaussian,
    StudentT(f64),
    Cauchy,
}

impl SymmetricLaw {
    pub const TABLE: [SymmetricLaw; 4] =
        [SymmetricLaw::Gaussian, SymmetricLaw::StudentT(3.0), SymmetricLaw::StudentT(2.0), SymmetricLaw::Cauchy];

    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self {
            SymmetricLaw::Gaussian => std_normal(rng),
            SymmetricLaw::StudentT(df) => rng.sample(StudentT::new(*df).expect("valid df")),
            SymmetricLaw::Cauchy => std_cauchy(rng),
        }
    }
}

impl fmt::Display for SymmetricLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymmetricLaw::Gaussian => write!(f, "gaussian"),
            SymmetricLaw::StudentT(df) => write!(f, "t{df}"),
            SymmetricLaw::Cauchy => write!(f, "cauchy"),
        }
    }
}

/// Pairwise independent but jointly dependent triple `(X, Y, Z')`: `Z'`
/// equals `Z` except that its last coordinate is negated whenever
/// `X_d Y_d Z_d > 0`.
pub fn gen_sign_model(n: usize, d: usize, law: SymmetricLaw, seed: u64) -> Result<BlockedSample> {
    if d == 0 {
        return Err(Error::invalid("sign model needs d >= 1"));
    }
    let mut rng = data_rng(seed);
    let mut data = Vec::with_capacity(n * 3 * d);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..3 * d).map(|_| law.draw(&mut rng)).collect();
        let (x, y, z) = (row[d - 1], row[2 * d - 1], row[3 * d - 1]);
        if x * y * z > 0.0 {
            row[3 * d - 1] = -z;
        }
        data.extend(row);
    }
    BlockedSample::from_columns(n, 3 * d, &data, &[d, d, d])
}

/// Source laws of the ICA experiments, indexed `a` to `l`.
///
/// `N(0,1)^k` denotes the `k`-th power of a standard normal and `N(m, s)`
/// takes `s` as the standard deviation; `Exp(l)` is parameterised by rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IcaSource {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
}

impl IcaSource {
    pub const ALL: [IcaSource; 12] = [
        IcaSource::A,
        IcaSource::B,
        IcaSource::C,
        IcaSource::D,
        IcaSource::E,
        IcaSource::F,
        IcaSource::G,
        IcaSource::H,
        IcaSource::I,
        IcaSource::J,
        IcaSource::K,
        IcaSource::L,
    ];

    pub fn description(&self) -> &'static str {
        match self {
            IcaSource::A => "N(0,1)^3",
            IcaSource::B => "N(0,1)^5",
            IcaSource::C => "Gamma(5,1)",
            IcaSource::D => "Gamma(10,1)",
            IcaSource::E => "0.3 Exp(1) + 0.7 Exp(5)",
            IcaSource::F => "0.3 N(-2,1) + 0.7 N(2,1)",
            IcaSource::G => "Uniform(0,1)",
            IcaSource::H => "0.7 N(-2,3) + 0.3 N(2,1)",
            IcaSource::I => "0.5 N(-2,2) + 0.5 N(2,2)",
            IcaSource::J => "(0.5 N(-2,2) + 0.5 N(2,2))^3",
            IcaSource::K => "(0.5 N(-2,2) + 0.5 N(2,2))^5",
            IcaSource::L => "(0.5 N(-2,2) + 0.5 N(2,2))^7",
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        let mix = |rng: &mut StreamRng, w: f64, a: (f64, f64), b: (f64, f64)| {
            let (m, s) = if rng.random::<f64>() < w { a } else { b };
            m + s * std_normal(rng)
        };
        match self {
            IcaSource::A => std_normal(rng).powi(3),
            IcaSource::B => std_normal(rng).powi(5),
            IcaSource::C => rng.sample(Gamma::new(5.0, 1.0).expect("valid gamma")),
            IcaSource::D => rng.sample(Gamma::new(10.0, 1.0).expect("valid gamma")),
            IcaSource::E => {
                let rate = if rng.random::<f64>() < 0.3 { 1.0 } else { 5.0 };
                rng.sample(Exp::new(rate).expect("valid rate"))
            }
            IcaSource::F => mix(rng, 0.3, (-2.0, 1.0), (2.0, 1.0)),
            IcaSource::G => rng.random::<f64>(),
            IcaSource::H => mix(rng, 0.7, (-2.0, 3.0), (2.0, 1.0)),
            IcaSource::I => mix(rng, 0.5, (-2.0, 2.0), (2.0, 2.0)),
            IcaSource::J => mix(rng, 0.5, (-2.0, 2.0), (2.0, 2.0)).powi(3),
            IcaSource::K => mix(rng, 0.5, (-2.0, 2.0), (2.0, 2.0)).powi(5),
            IcaSource::L => mix(rng, 0.5, (-2.0, 2.0), (2.0, 2.0)).powi(7),
        }
    }
}

impl FromStr for IcaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let idx = match s.trim().trim_matches(|c| c == '(' || c == ')').to_ascii_lowercase().as_str() {
            "a" => 0,
            "b" => 1,
            "c" => 2,
            "d" => 3,
            "e" => 4,
            "f" => 5,
            "g" => 6,
            "h" => 7,
            "i" => 8,
            "j" => 9,
            "k" => 10,
            "l" => 11,
            other => return Err(Error::invalid(format!("unknown ICA source distribution `{other}`, expected a..l"))),
        };
        Ok(IcaSource::ALL[idx])
    }
}

/// Condition number (ratio of extreme singular values).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn random_orthogonal(r: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(r, r, |_, _| std_normal(rng));
    let qr = g.qr();
    let (mut q, rr) = (qr.q(), qr.r());
    // sign fix makes the draw Haar-distributed
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random `r x r` mixing matrix with condition number in `[1, 2]`: a Gaussian
/// matrix whose singular values are replaced by uniform draws from `[1, 2]`,
/// rejected if numerically outside the range.
pub fn random_mixing_matrix(r: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    loop {
        let u = random_orthogonal(r, rng);
        let v = random_orthogonal(r, rng);
        let s = DMatrix::from_diagonal(&DVector::from_fn(r, |_, _| 1.0 + rng.random::<f64>()));
        let m = u * s * v.transpose();
        let k = condition_number(&m);
        if (1.0..=2.0).contains(&k) {
            return m;
        }
    }
}

/// i.i.d. sources (`n x r`) and a random mixing matrix `M`; observations are
/// `X = S M^T` (each row is `M s_a`).
#[derive(Debug, Clone, PartialEq)]
pub struct IcaProblem {
    pub sources: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
}

impl IcaProblem {
    pub fn observations(&self) -> DMatrix<f64> {
        &self.sources * self.mixing.transpose()
    }
}

pub fn gen_ica_sources(n: usize, r: usize, source: IcaSource, seed: u64) -> Result<IcaProblem> {
    if r < 2 {
        return Err(Error::invalid("ICA needs r >= 2 sources"));
    }
    let mut rng = data_rng(seed);
    let mut sources = DMatrix::zeros(n, r);
    for a in 0..n {
        for k in 0..r {
            sources[(a, k)] = source.draw(&mut rng);
        }
    }
    let mixing = random_mixing_matrix(r, &mut rng);
    Ok(IcaProblem { sources, mixing })
}

/// Named one-parameter designs used by the power harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    NullGaussian,
    NullCopula,
    NullCauchy,
    /// Parameter: rho.
    GaussianAr,
    /// Parameter: rho.
    GaussianBanded,
    /// Parameter: a.
    CauchyRegression,
    /// Parameter: b.
    Sine,
    /// Parameter: delta. Bivariate blocks, correlation 0.5, identity couplings.
    KonijnGaussian,
    /// Parameter: h, with delta = h / sqrt(n).
    KonijnGaussianLocal,
    KonijnCopula,
    KonijnT,
    /// Parameter: delta. Three 1-d blocks mixing independent and coupled Gaussians.
    Mixture,
    /// Parameter: block dimension d.
    Sign(SymmetricLaw),
}

impl ModelFamily {
    pub const NAMES: [&'static str; 16] = [
        "null-gaussian",
        "null-copula",
        "null-cauchy",
        "gaussian-ar",
        "gaussian-banded",
        "cauchy-regression",
        "sine",
        "konijn-gaussian",
        "konijn-gaussian-local",
        "konijn-copula",
        "konijn-t",
        "mixture",
        "sign-gaussian",
        "sign-t3",
        "sign-t2",
        "sign-cauchy",
    ];

    pub fn generate(&self, n: usize, param: f64, seed: u64) -> Result<BlockedSample> {
        match self {
            ModelFamily::NullGaussian => gen_null(NullSetting::Gaussian, n, seed),
            ModelFamily::NullCopula => gen_null(NullSetting::CopulaCube, n, seed),
            ModelFamily::NullCauchy => gen_null(NullSetting::Cauchy, n, seed),
            ModelFamily::GaussianAr => gen_gaussian_cov(n, 9, &CovKind::Ar(param), &[3, 3, 3], seed),
            ModelFamily::GaussianBanded => gen_gaussian_cov(n, 9, &CovKind::Banded(param), &[3, 3, 3], seed),
            ModelFamily::CauchyRegression => gen_cauchy_regression(n, param, seed),
            ModelFamily::Sine => gen_sine_dependence(n, param, seed),
            ModelFamily::KonijnGaussian => gen_konijn(n, &KonijnSpec::standard(BaseLaw::Gaussian, 3, 2, 0.5, param), seed),
            ModelFamily::KonijnGaussianLocal => {
                gen_konijn(n, &KonijnSpec::local(BaseLaw::Gaussian, 3, 2, 0.5, param, n), seed)
            }
            ModelFamily::KonijnCopula => {
                gen_konijn(n, &KonijnSpec::standard(BaseLaw::GaussianCopula { q: 3 }, 3, 2, 0.5, param), seed)
            }
            ModelFamily::KonijnT => {
                gen_konijn(n, &KonijnSpec::standard(BaseLaw::StudentT { df: 5.0 }, 3, 2, 0.5, param), seed)
            }
            ModelFamily::Mixture => gen_mixture(
                n,
                &MixtureSpec {
                    delta: param,
                    block_dims: vec![1, 1, 1],
                    product: MixtureLaw::IndependentGaussian,
                    dependent: MixtureLaw::Coupled,
                },
                seed,
            ),
            ModelFamily::Sign(law) => {
                if param < 1.0 || param.fract() != 0.0 {
                    return Err(Error::invalid(format!("sign model parameter is the block dimension, got {param}")));
                }
                gen_sign_model(n, param as usize, *law, seed)
            }
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "null-gaussian" => ModelFamily::NullGaussian,
            "null-copula" => ModelFamily::NullCopula,
            "null-cauchy" => ModelFamily::NullCauchy,
            "gaussian-ar" => ModelFamily::GaussianAr,
            "gaussian-banded" => ModelFamily::GaussianBanded,
            "cauchy-regression" => ModelFamily::CauchyRegression,
            "sine" => ModelFamily::Sine,
            "konijn-gaussian" => ModelFamily::KonijnGaussian,
            "konijn-gaussian-local" => ModelFamily::KonijnGaussianLocal,
            "konijn-copula" => ModelFamily::KonijnCopula,
            "konijn-t" => ModelFamily::KonijnT,
            "mixture" => ModelFamily::Mixture,
            "sign-gaussian" => ModelFamily::Sign(SymmetricLaw::Gaussian),
            "sign-t3" => ModelFamily::Sign(SymmetricLaw::StudentT(3.0)),
            "sign-t2" => ModelFamily::Sign(SymmetricLaw::StudentT(2.0)),
            "sign-cauchy" => ModelFamily::Sign(SymmetricLaw::Cauchy),
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ModelFamily::NullGaussian => "null-gaussian",
            ModelFamily::NullCopula => "null-copula",
            ModelFamily::NullCauchy => "null-cauchy",
            ModelFamily::GaussianAr => "gaussian-ar",
            ModelFamily::GaussianBanded => "gaussian-banded",
            ModelFamily::CauchyRegression => "cauchy-regression",
            ModelFamily::Sine => "sine",
            ModelFamily::KonijnGaussian => "konijn-gaussian",
            ModelFamily::KonijnGaussianLocal => "konijn-gaussian-local",
            ModelFamily::KonijnCopula => "konijn-copula",
            ModelFamily::KonijnT => "konijn-t",
            ModelFamily::Mixture => "mixture",
            ModelFamily::Sign(SymmetricLaw::Gaussian) => "sign-gaussian",
            ModelFamily::Sign(SymmetricLaw::StudentT(df)) if *df == 3.0 => "sign-t3",
            ModelFamily::Sign(SymmetricLaw::StudentT(df)) if *df == 2.0 => "sign-t2",
            ModelFamily::Sign(SymmetricLaw::StudentT(_)) => "sign-t",
            ModelFamily::Sign(SymmetricLaw::Cauchy) => "sign-cauchy",
        };
        f.write_str(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{kurtosis, mean, skewness, variance};

    #[test]
    fn generators_are_deterministic() {
        let a = gen_cauchy_regression(20, 0.5, 3).unwrap();
        assert_eq!(a, gen_cauchy_regression(20, 0.5, 3).unwrap());
        assert_ne!(a, gen_cauchy_regression(20, 0.5, 4).unwrap());
        let k = KonijnSpec::standard(BaseLaw::Gaussian, 3, 2, 0.5, 0.4);
        assert_eq!(gen_konijn(10, &k, 1).unwrap(), gen_konijn(10, &k, 1).unwrap());
    }

    #[test]
    fn ar_and_banded_matrices() {
        let m = CovKind::Ar(0.5).matrix(3).unwrap();
        assert_eq!(m[(0, 2)], 0.25);
        let b = CovKind::Banded(0.25).matrix(4).unwrap();
        assert_eq!(b[(0, 2)], 0.25);
        assert_eq!(b[(0, 3)], 0.0);
        let bad = CovKind::Custom(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(gen_gaussian_cov(5, 2, &bad, &[1, 1], 0), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn copula_power() {
        let id = DMatrix::identity(1, 1);
        assert!(gen_copula_power(10, 2, &id, 0).is_err());
        let g1 = gen_copula_power(5, 1, &id, 8).unwrap();
        let g3 = gen_copula_power(5, 3, &id, 8).unwrap();
        for (a, b) in g1.as_flat().iter().zip(g3.as_flat()) {
            assert!((a.powi(3) - b).abs() < 1e-12);
        }
        let big = gen_copula_power(5000, 3, &id, 9).unwrap();
        assert!(kurtosis(big.as_flat()) > 3.0);
    }

    #[test]
    fn sign_model_identity_holds() {
        for law in SymmetricLaw::TABLE {
            for d in [1, 3] {
                let s = gen_sign_model(500, d, law, 5).unwrap();
                for a in 0..500 {
                    let p = s.block(0).row(a)[d - 1] * s.block(1).row(a)[d - 1] * s.block(2).row(a)[d - 1];
                    assert!(p <= 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_signal_designs_are_independent_constructions() {
        // a = 0 and b = 0 reduce to pure Cauchy noise
        let s = gen_sine_dependence(10, 0.0, 1).unwrap();
        assert_eq!(s.r(), 3);
        let k = KonijnSpec::standard(BaseLaw::Gaussian, 3, 2, 0.5, 0.0);
        assert_eq!(k.mixing_matrix().unwrap(), DMatrix::identity(6, 6));
    }

    #[test]
    fn konijn_singular_detected() {
        // with identity couplings and r = 3 the matrix is singular at delta = 1/2
        let k = KonijnSpec::standard(BaseLaw::Gaussian, 3, 2, 0.5, 0.5);
        assert!(matches!(gen_konijn(10, &k, 0), Err(Error::SingularMixing)));
    }

    #[test]
    fn konijn_covariance_converges() {
        // a single n = 5000 draw exceeds a 0.1 gap about one time in ten, so
        // look at the median over seeds
        let k = KonijnSpec::standard(BaseLaw::Gaussian, 3, 2, 0.5, 0.4);
        let pop = k.population_covariance().unwrap();
        let mut gaps: Vec<f64> = (0..9)
            .map(|seed| {
                let s = gen_konijn(5000, &k, seed).unwrap();
                let n = s.n();
                let rows: Vec<Vec<f64>> = (0..n).map(|a| s.joint_row(a)).collect();
                let p = rows[0].len();
                let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
                let emp = DMatrix::from_fn(p, p, |i, j| {
                    rows.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).sum::<f64>() / (n - 1) as f64
                });
                (emp - &pop).norm()
            })
            .collect();
        assert!(crate::stats::median(&mut gaps) <= 0.1, "{gaps:?}");
    }

    #[test]
    fn mixture_extremes() {
        let spec = MixtureSpec {
            delta: 1.0,
            block_dims: vec![2, 2],
            product: MixtureLaw::IndependentGaussian,
            dependent: MixtureLaw::Coupled,
        };
        let s = gen_mixture(20, &spec, 3).unwrap();
        assert_eq!(s.block(0), s.block(1));
        let spec0 = MixtureSpec { delta: 0.0, ..spec.clone() };
        let s0 = gen_mixture(20, &spec0, 3).unwrap();
        assert_ne!(s0.block(0), s0.block(1));
        assert!(gen_mixture(5, &MixtureSpec { delta: 1.5, ..spec }, 0).is_err());
    }

    #[test]
    fn ica_sources_moments_and_mixing() {
        let p = gen_ica_sources(5000, 1, IcaSource::G, 1);
        assert!(p.is_err());
        let p = gen_ica_sources(5000, 3, IcaSource::G, 1).unwrap();
        let col: Vec<f64> = p.sources.column(0).iter().copied().collect();
        assert!((variance(&col) - 1.0 / 12.0).abs() < 0.005);
        let k = condition_number(&p.mixing);
        assert!((1.0..=2.0).contains(&k));

        let p = gen_ica_sources(10000, 2, IcaSource::A, 2).unwrap();
        let col: Vec<f64> = p.sources.column(0).iter().copied().collect();
        // the sample skewness of Z^3 is too noisy to pin; check symmetry directly
        let positive = col.iter().filter(|&&v| v > 0.0).count() as f64 / col.len() as f64;
        assert!((positive - 0.5).abs() < 0.02);
        assert!(skewness(&col).abs() < 3.0);
        assert!(kurtosis(&col) > 3.0);
        assert!(mean(&col).abs() < 0.2);
    }

    #[test]
    fn mixing_matrices_always_in_range() {
        let mut rng = substream(4, Stream::Data, 9);
        for r in 2..=5 {
            for _ in 0..20 {
                let k = condition_number(&random_mixing_matrix(r, &mut rng));
                assert!((1.0..=2.0).contains(&k));
            }
        }
    }

    #[test]
    fn model_names_round_trip() {
        for name in ModelFamily::NAMES {
            let m: ModelFamily = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
        assert!(matches!("nope".parse::<ModelFamily>(), Err(Error::UnknownModel(_))));
        assert!("e".parse::<IcaSource>().is_ok());
        assert!("(z)".parse::<IcaSource>().is_err());
    }
}
