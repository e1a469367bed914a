//! Synthetic datasets with known ground truth.
//!
//! Gaussian features are drawn as `L z` with `L` the Cholesky factor of the
//! covariance and `z` standard normals obtained by the inverse-CDF method
//! from a ChaCha8 uniform stream, so outputs are reproducible from the seed.

use nalgebra::{DMatrix, DVector};
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{default_feature_names, Dataset};
use crate::error::{Error, Result};

/// Dataset plus the features that actually drive each row's response.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    /// Active feature indices per row, ascending.
    pub truth: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// `Y = (X1 + X2) 1{X5 <= 0} + (X3 + X4) 1{X5 > 0}`, `X ~ N(0, 0.8 J + 5 I)`.
    LinearSwitch { n: usize, p: usize, seed: u64 },
    /// Two interleaving half-circles plus Gaussian noise columns; the label
    /// is flipped where the first noise column is positive.
    MoonNoise { n: usize, seed: u64, jitter: f64, n_noise: usize, flip: bool },
    /// Hourly demand with piecewise-constant structure (regression).
    StepDemand { n: usize, seed: u64, noise_std: f64 },
    /// Integer-coded tabular features with a rule-based label
    /// (classification).
    TabularClf { n: usize, seed: u64, label_noise: f64 },
}

impl GeneratorSpec {
    pub fn linear_switch(n: usize, p: usize, seed: u64) -> Self {
        GeneratorSpec::LinearSwitch { n, p, seed }
    }

    pub fn moon_noise(n: usize, seed: u64) -> Self {
        GeneratorSpec::MoonNoise { n, seed, jitter: 0.1, n_noise: 100, flip: true }
    }

    pub fn step_demand(n: usize, seed: u64) -> Self {
        GeneratorSpec::StepDemand { n, seed, noise_std: 10.0 }
    }

    pub fn tabular_clf(n: usize, seed: u64) -> Self {
        GeneratorSpec::TabularClf { n, seed, label_noise: 0.03 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::LinearSwitch { .. } => "linear_switch",
            GeneratorSpec::MoonNoise { .. } => "moon_noise",
            GeneratorSpec::StepDemand { .. } => "step_demand",
            GeneratorSpec::TabularClf { .. } => "tabular_clf",
        }
    }

    pub fn generate(&self) -> Result<Synthetic> {
        match *self {
            GeneratorSpec::LinearSwitch { n, p, seed } => gen_linear_switch(n, p, seed),
            GeneratorSpec::MoonNoise { n, seed, jitter, n_noise, flip } => gen_moon_noise(n, seed, jitter, n_noise, flip),
            GeneratorSpec::StepDemand { n, seed, noise_std } => gen_step_demand(n, seed, noise_std),
            GeneratorSpec::TabularClf { n, seed, label_noise } => gen_tabular_clf(n, seed, label_noise),
        }
    }
}

/// `rho J + sigma2 I` over `p` dimensions.
pub fn equicorrelated_covariance(p: usize, rho: f64, sigma2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { rho + sigma2 } else { rho })
}

/// Covariance used by the linear-switch and moon noise features.
pub fn linear_switch_covariance(p: usize) -> DMatrix<f64> {
    equicorrelated_covariance(p, 0.8, 5.0)
}

/// Zero-mean Gaussian sampler with a fixed covariance.
pub struct GaussianSampler {
    chol: DMatrix<f64>,
    normal: Normal,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cov.clone().cholesky().ok_or_else(|| Error::param("covariance", "matrix is not positive definite"))?.l();
        Ok(GaussianSampler { chol, normal: Normal::new(0.0, 1.0).expect("standard normal") })
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    /// One standard normal by inversion of a uniform in (0, 1).
    pub fn standard_normal(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.normal.inverse_cdf(u)
    }

    pub fn sample_into(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let p = self.dim();
        let z = DVector::from_fn(p, |_, _| self.standard_normal(rng));
        let x = &self.chol * z;
        out.copy_from_slice(x.as_slice());
    }
}

pub fn linear_switch_response(x: &[f64]) -> f64 {
    if x[4] <= 0.0 {
        x[0] + x[1]
    } else {
        x[2] + x[3]
    }
}

pub fn linear_switch_truth(x: &[f64]) -> Vec<usize> {
    if x[4] <= 0.0 {
        vec![0, 1, 4]
    } else {
        vec![2, 3, 4]
    }
}

pub fn gen_linear_switch(n: usize, p: usize, seed: u64) -> Result<Synthetic> {
    if p < 5 {
        return Err(Error::param("p", format!("linear_switch needs p >= 5, got {p}")));
    }
    let sampler = GaussianSampler::new(&linear_switch_covariance(p))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = vec![0.0; n * p];
    let mut targets = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for row in features.chunks_exact_mut(p) {
        sampler.sample_into(&mut rng, row);
        targets.push(linear_switch_response(row));
        truth.push(linear_switch_truth(row));
    }
    let data = Dataset::from_flat(features, targets, default_feature_names("X", p), crate::Task::Regression, 0)?;
    Ok(Synthetic { data, truth })
}

/// Noise-free half-moon membership of a point drawn at angle `t` on moon
/// `label` (0: upper moon centred at the origin, 1: lower moon shifted to
/// `(1, 0.5)`).
pub fn moon_point(label: usize, t: f64) -> (f64, f64) {
    if label == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    }
}

pub fn gen_moon_noise(n: usize, seed: u64, jitter: f64, n_noise: usize, flip: bool) -> Result<Synthetic> {
    if n < 2 {
        return Err(Error::param("n", "moon_noise needs at least 2 rows"));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::param("jitter", "must be finite and non-negative"));
    }
    if flip && n_noise == 0 {
        return Err(Error::param("n_noise", "label flipping needs at least one noise column"));
    }
    let p = 2 + n_noise;
    let sampler = if n_noise > 0 { Some(GaussianSampler::new(&linear_switch_covariance(n_noise))?) } else { None };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = vec![0.0; n * p];
    let mut labels = Vec::with_capacity(n);
    for (i, row) in features.chunks_exact_mut(p).enumerate() {
        let moon = i % 2;
        let t = rng.gen::<f64>() * std::f64::consts::PI;
        let (a, b) = moon_point(moon, t);
        let ea = normal.inverse_cdf(rng.sample(Open01));
        let eb = normal.inverse_cdf(rng.sample(Open01));
        row[0] = a + jitter * ea;
        row[1] = b + jitter * eb;
        if let Some(s) = &sampler {
            s.sample_into(&mut rng, &mut row[2..]);
        }
        let flipped = flip && row[2] > 0.0;
        labels.push(if flipped { 1 - moon } else { moon });
    }
    let mut names = vec!["X1".to_string(), "X2".to_string()];
    names.extend(default_feature_names("Z", n_noise));
    let targets = labels.iter().map(|&l| l as f64).collect();
    let data = Dataset::from_flat(features, targets, names, crate::Task::Classification, 2)?;
    let truth_row = if flip { vec![0, 1, 2] } else { vec![0, 1] };
    Ok(Synthetic { data, truth: vec![truth_row; n] })
}

/// Mean demand for an hour of a working or non-working day.
fn base_demand(hour: usize, workingday: bool) -> f64 {
    if workingday {
        match hour {
            0..=5 => 15.0,
            7 | 8 => 420.0,
            17 | 18 => 480.0,
            9..=16 => 190.0,
            _ => 110.0,
        }
    } else {
        match hour {
            0..=6 => 30.0,
            10..=17 => 320.0,
            _ => 90.0,
        }
    }
}

pub const STEP_DEMAND_FEATURES: [&str; 7] = ["hour", "workingday", "year", "month", "temp", "humidity", "windspeed"];

/// Demand depends on hour, working day, year and a temperature step;
/// month, humidity and wind speed are distractors.
pub fn step_demand_response(x: &[f64]) -> f64 {
    let hour = x[0] as usize;
    let workingday = x[1] > 0.5;
    let year = if x[2] > 0.5 { 1.4 } else { 1.0 };
    let temp = if x[4] > 0.3 { 1.0 } else { 0.6 };
    base_demand(hour, workingday) * year * temp
}

pub fn gen_step_demand(n: usize, seed: u64, noise_std: f64) -> Result<Synthetic> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::param("noise_std", "must be finite and non-negative"));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = STEP_DEMAND_FEATURES.len();
    let mut features = Vec::with_capacity(n * p);
    let mut targets = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [
            rng.gen_range(0..24) as f64,
            if rng.gen_bool(5.0 / 7.0) { 1.0 } else { 0.0 },
            rng.gen_range(0..2) as f64,
            rng.gen_range(1..13) as f64,
            rng.gen::<f64>(),
            rng.gen::<f64>(),
            rng.gen::<f64>(),
        ];
        let eps = normal.inverse_cdf(rng.sample(Open01));
        targets.push(step_demand_response(&row) + noise_std * eps);
        truth.push(vec![0, 1, 2, 4]);
        features.extend_from_slice(&row);
    }
    let names = STEP_DEMAND_FEATURES.iter().map(|s| s.to_string()).collect();
    let data = Dataset::from_flat(features, targets, names, crate::Task::Regression, 0)?;
    Ok(Synthetic { data, truth })
}

pub const TABULAR_CLF_FEATURES: [&str; 8] =
    ["age_band", "priors", "sex", "charge_degree", "juvenile", "region", "employment", "education"];

/// Noise-free label of the tabular classification generator.
pub fn tabular_clf_label(x: &[f64]) -> usize {
    let age_band = x[0];
    let priors = x[1];
    let charge = x[3];
    let juvenile = x[4];
    usize::from(priors >= 4.0 || (age_band <= 1.0 && charge > 0.5) || juvenile >= 2.0)
}

pub fn gen_tabular_clf(n: usize, seed: u64, label_noise: f64) -> Result<Synthetic> {
    if !(0.0..0.5).contains(&label_noise) {
        return Err(Error::param("label_noise", "must lie in [0, 0.5)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = TABULAR_CLF_FEATURES.len();
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [
            rng.gen_range(0..7) as f64,
            rng.gen_range(0..11) as f64,
            rng.gen_range(0..2) as f64,
            rng.gen_range(0..2) as f64,
            rng.gen_range(0..4) as f64,
            rng.gen_range(0..5) as f64,
            rng.gen_range(0..3) as f64,
            rng.gen_range(0..6) as f64,
        ];
        let clean = tabular_clf_label(&row);
        let noisy = rng.gen_bool(label_noise);
        labels.push(if noisy { 1 - clean } else { clean } as f64);
        truth.push(vec![0, 1, 3, 4]);
        features.extend_from_slice(&row);
    }
    let names = TABULAR_CLF_FEATURES.iter().map(|s| s.to_string()).collect();
    let data = Dataset::from_flat(features, labels, names, crate::Task::Classification, 2)?;
    Ok(Synthetic { data, truth })
}
