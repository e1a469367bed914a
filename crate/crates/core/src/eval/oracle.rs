//! Monte-Carlo oracle for projected CDFs of Gaussian-feature generators and
//! the curve comparison used to validate the forest estimate against it.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{linear_switch_covariance, linear_switch_response, GaussianSampler, GeneratorSpec};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::subset::Subset;

/// Default number of points of a validation grid.
pub const Y_GRID_POINTS: usize = 512;

/// `n_points` evenly spaced values over the range of `targets` widened by
/// 5% of its span on each side.
pub fn y_grid(targets: &[f64], n_points: usize) -> Vec<f64> {
    let min = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (max - min);
    let (lo, hi) = (min - pad, max + pad);
    if n_points < 2 {
        return vec![lo; n_points];
    }
    (0..n_points).map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64).collect()
}

/// Law of the `free` coordinates of a zero-mean Gaussian given the `given`
/// coordinates.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    pub free: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `mu_F|S = C_FS C_SS^-1 x_S`, `C_F|S = C_FF - C_FS C_SS^-1 C_SF`.
pub fn conditional_gaussian(cov: &DMatrix<f64>, given: &[usize], values: &[f64], free: &[usize]) -> Result<ConditionalGaussian> {
    if given.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: given.len(), got: values.len() });
    }
    let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i], cols[j])]);
    let c_ff = sub(free, free);
    if given.is_empty() {
        return Ok(ConditionalGaussian { free: free.to_vec(), mean: DVector::zeros(free.len()), cov: c_ff });
    }
    let c_ss = sub(given, given);
    let c_fs = sub(free, given);
    let chol = c_ss.cholesky().ok_or_else(|| Error::param("covariance", "conditioning block is not positive definite"))?;
    let x_s = DVector::from_column_slice(values);
    let mean = &c_fs * chol.solve(&x_s);
    let cov = &c_ff - &c_fs * chol.solve(&c_fs.transpose());
    Ok(ConditionalGaussian { free: free.to_vec(), mean, cov })
}

/// Source of reference projected CDFs.
pub trait CdfOracle: Sync {
    /// `P(Y <= y | X_S = x_s)` for every `y` of `y_grid`; `x_s` is aligned
    /// with `subset`.
    fn cdf(&self, x_s: &[f64], subset: &Subset, y_grid: &[f64]) -> Result<Vec<f64>>;
}

/// Exact-law Monte-Carlo oracle: draws the unobserved response-relevant
/// coordinates from their conditional Gaussian law and pushes them through
/// the generator's response.
#[derive(Debug, Clone)]
pub struct McOracle {
    pub spec: GeneratorSpec,
    pub n_mc: usize,
    pub seed: u64,
}

const MC_CHUNK: usize = 1 << 16;

impl McOracle {
    pub fn new(spec: GeneratorSpec, n_mc: usize, seed: u64) -> Result<Self> {
        match spec {
            GeneratorSpec::LinearSwitch { .. } => {}
            ref other => return Err(Error::UnsupportedGenerator(other.name().to_string())),
        }
        if n_mc == 0 {
            return Err(Error::param("n_mc", "must be at least 1"));
        }
        Ok(McOracle { spec, n_mc, seed })
    }

    /// Monte-Carlo responses given `X_S = x_s`.
    pub fn sample_responses(&self, x_s: &[f64], subset: &Subset) -> Result<Vec<f64>> {
        let GeneratorSpec::LinearSwitch { p, .. } = self.spec else {
            return Err(Error::UnsupportedGenerator(self.spec.name().to_string()));
        };
        subset.validate(p)?;
        if x_s.len() != subset.len() {
            return Err(Error::DimensionMismatch { expected: subset.len(), got: x_s.len() });
        }
        // The response only reads X1..X5.
        let free: Vec<usize> = (0..5).filter(|f| !subset.contains(*f)).collect();
        let cov = linear_switch_covariance(p);
        let cond = conditional_gaussian(&cov, subset.indices(), x_s, &free)?;
        let sampler = if free.is_empty() { None } else { Some(GaussianSampler::new(&cond.cov)?) };
        let mut base = [0.0; 5];
        for (f, v) in subset.iter().zip(x_s) {
            if f < 5 {
                base[f] = *v;
            }
        }
        let n_chunks = self.n_mc.div_ceil(MC_CHUNK);
        let chunks: Vec<Vec<f64>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let len = MC_CHUNK.min(self.n_mc - c * MC_CHUNK);
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(c as u64);
                let mut draw = vec![0.0; free.len()];
                let mut x = base;
                (0..len)
                    .map(|_| {
                        if let Some(s) = &sampler {
                            s.sample_into(&mut rng, &mut draw);
                            for (k, &f) in free.iter().enumerate() {
                                x[f] = cond.mean[k] + draw[k];
                            }
                        }
                        linear_switch_response(&x)
                    })
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }
}

impl CdfOracle for McOracle {
    fn cdf(&self, x_s: &[f64], subset: &Subset, y_grid: &[f64]) -> Result<Vec<f64>> {
        let mut ys = self.sample_responses(x_s, subset)?;
        ys.sort_by(f64::total_cmp);
        let n = ys.len() as f64;
        Ok(y_grid.iter().map(|&y| ys.partition_point(|&v| v <= y) as f64 / n).collect())
    }
}

/// Distances between two CDF curves on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    /// `max |F_est - F_ref|` over the grid.
    pub ks: f64,
    /// Trapezoid integral of `|F_est - F_ref|` over the grid.
    pub abs_integral: f64,
    /// `abs_integral` divided by the grid span: the mean absolute
    /// deviation over the y-range.
    pub mad: f64,
}

pub fn compare_curves(estimated: &[f64], reference: &[f64], y_grid: &[f64]) -> CurveComparison {
    let d: Vec<f64> = estimated.iter().zip(reference).map(|(a, b)| (a - b).abs()).collect();
    let ks = d.iter().copied().fold(0.0, f64::max);
    let abs_integral: f64 = y_grid.windows(2).zip(d.windows(2)).map(|(y, v)| (y[1] - y[0]) * (v[0] + v[1]) / 2.0).sum();
    let span = y_grid.last().copied().unwrap_or(0.0) - y_grid.first().copied().unwrap_or(0.0);
    CurveComparison { ks, abs_integral, mad: if span > 0.0 { abs_integral / span } else { 0.0 } }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfValidation {
    /// Mean over instances of the sup-distance.
    pub mks: f64,
    /// Mean over instances of the span-normalized absolute deviation.
    pub mad: f64,
    /// Mean over instances of the raw trapezoid integral of `|dF|`.
    pub mad_integral: f64,
    pub per_instance: Vec<CurveComparison>,
    pub y_grid: Vec<f64>,
    pub estimated: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
}

impl CdfValidation {
    /// Fraction of (instance, grid point) pairs with `|dF| <= tol`.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        let mut total = 0usize;
        let mut ok = 0usize;
        for (e, r) in self.estimated.iter().zip(&self.reference) {
            for (a, b) in e.iter().zip(r) {
                total += 1;
                if (a - b).abs() <= tol {
                    ok += 1;
                }
            }
        }
        if total == 0 {
            1.0
        } else {
            ok as f64 / total as f64
        }
    }
}

/// Compare the forest's projected CDF with `oracle` at each instance.
pub fn cdf_validation(
    forest: &Forest,
    oracle: &dyn CdfOracle,
    instances: &[Vec<f64>],
    subset: &Subset,
    y_grid: &[f64],
    min_node_size: usize,
) -> Result<CdfValidation> {
    forest.require_task("cdf_validation", crate::Task::Regression)?;
    if instances.is_empty() {
        return Err(Error::param("instances", "at least one instance is required"));
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = instances
        .par_iter()
        .map(|x| {
            let proj = forest.projection(x, subset, min_node_size)?;
            let est: Vec<f64> = y_grid.iter().map(|&y| proj.cdf(y)).collect();
            let x_s: Vec<f64> = subset.iter().map(|f| x[f]).collect();
            let reference = oracle.cdf(&x_s, subset, y_grid)?;
            Ok((est, reference))
        })
        .collect::<Result<_>>()?;
    let per_instance: Vec<CurveComparison> = pairs.iter().map(|(e, r)| compare_curves(e, r, y_grid)).collect();
    let m = per_instance.len() as f64;
    let (estimated, reference) = pairs.into_iter().unzip();
    Ok(CdfValidation {
        mks: per_instance.iter().map(|c| c.ks).sum::<f64>() / m,
        mad: per_instance.iter().map(|c| c.mad).sum::<f64>() / m,
        mad_integral: per_instance.iter().map(|c| c.abs_integral).sum::<f64>() / m,
        per_instance,
        y_grid: y_grid.to_vec(),
        estimated,
        reference,
    })
}
