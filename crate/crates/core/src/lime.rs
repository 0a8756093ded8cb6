//! Local linear surrogates: perturb one row, weight the perturbations by
//! proximity, and fit a weighted LASSO to the model's scores.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{column_stats, ColumnStats, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::model::ScoreFn;
use crate::rng;

pub const LASSO_TOLERANCE: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Kernel width on standardized features; `None` means `0.75 * sqrt(P)`.
    pub kernel_width: Option<f64>,
    /// Penalties to try, strictly descending.
    pub lambda_grid: Vec<f64>,
    pub target_nonzero: usize,
    /// Features replaced by one-hot quantile-bin indicators.
    pub discretize: Vec<usize>,
    pub bins_per_feature: usize,
    pub seed: u64,
}

/// 25 penalties spaced evenly in log scale from 1 down to 1e-6.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..25).map(|k| 10f64.powf(-(k as f64) / 4.0)).collect()
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: None,
            lambda_grid: default_lambda_grid(),
            target_nonzero: 8,
            discretize: Vec::new(),
            bins_per_feature: 4,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl LimeConfig {
    pub fn width_for(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_samples < 10 * n_features.max(1) {
            return bad(format!(
                "n_samples {} below 10 x {n_features} features",
                self.n_samples
            ));
        }
        let width = self.width_for(n_features);
        if !(width > 0.0 && width.is_finite()) {
            return bad(format!("kernel width {width} must be positive"));
        }
        if self.lambda_grid.is_empty() {
            return bad("lambda grid is empty".into());
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite()))
            || self.lambda_grid.windows(2).any(|w| w[0] <= w[1])
        {
            return bad("lambda grid must be finite, non-negative and strictly descending".into());
        }
        if self.bins_per_feature < 2 {
            return bad("bins_per_feature must be at least 2".into());
        }
        if let Some(&j) = self.discretize.iter().find(|&&j| j >= n_features) {
            return bad(format!("discretized feature {j} out of range"));
        }
        Ok(())
    }
}

/// `n` draws of `x` plus independent normal noise with each column's
/// standard deviation; zero-spread columns stay at `x`.
pub fn sample_locality(x: &[f64], stats: &[ColumnStats], n: usize, seed: u64) -> Result<Matrix> {
    if stats.len() != x.len() {
        return Err(Error::Shape(format!(
            "{} column stats for a row of {} values",
            stats.len(),
            x.len()
        )));
    }
    let mut r = rng::seeded(seed);
    let mut out = Matrix::zeros(n, x.len());
    for i in 0..n {
        let row = out.row_mut(i);
        for (j, s) in stats.iter().enumerate() {
            row[j] = if s.std > 0.0 {
                x[j] + s.std * r.sample::<f64, _>(StandardNormal)
            } else {
                x[j]
            };
        }
    }
    Ok(out)
}

/// `exp(-d^2 / width^2)` with `d` the Euclidean distance to `x` after
/// dividing each coordinate by its column's standard deviation.
pub fn kernel_weights(x: &[f64], samples: &Matrix, width: f64, stats: &[ColumnStats]) -> Result<Vec<f64>> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel width {width} must be positive")));
    }
    if samples.n_cols() != x.len() || stats.len() != x.len() {
        return Err(Error::Shape("samples, row and stats disagree on width".into()));
    }
    Ok(samples
        .rows()
        .map(|s| {
            let d2: f64 = s
                .iter()
                .zip(x)
                .zip(stats)
                .filter(|(_, st)| st.std > 0.0)
                .map(|((a, b), st)| ((a - b) / st.std).powi(2))
                .sum();
            (-d2 / (width * width)).exp()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    /// On the original design scale.
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
}

/// Weighted, standardized copy of a design: each column centered at its
/// weighted mean and scaled to unit weighted variance.
struct Standardized {
    columns: Vec<Vec<f64>>,
    means: Vec<f64>,
    /// Zero marks a column with no weighted spread; it is never fitted.
    scales: Vec<f64>,
    centered_y: Vec<f64>,
    y_mean: f64,
    w: Vec<f64>,
    total_weight: f64,
}

impl Standardized {
    fn new(design: &Matrix, targets: &[f64], weights: &[f64]) -> Result<Self> {
        let n = design.n_rows();
        if n == 0 {
            return Err(Error::Empty("design"));
        }
        if targets.len() != n || weights.len() != n {
            return Err(Error::Shape(format!(
                "design has {n} rows, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        if design.rows().flatten().chain(targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design and targets must be finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total_weight: f64 = weights.iter().sum();
        if total_weight <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let wmean = |v: &dyn Fn(usize) -> f64| -> f64 {
            (0..n).map(|i| weights[i] * v(i)).sum::<f64>() / total_weight
        };
        let y_mean = wmean(&|i| targets[i]);
        let centered_y: Vec<f64> = targets.iter().map(|y| y - y_mean).collect();
        let p = design.n_cols();
        let mut columns = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        for j in 0..p {
            let m = wmean(&|i| design.get(i, j));
            let var = wmean(&|i| (design.get(i, j) - m).powi(2));
            let sd = var.sqrt();
            let col: Vec<f64> = if sd > 1e-12 * (1.0 + m.abs()) {
                (0..n).map(|i| (design.get(i, j) - m) / sd).collect()
            } else {
                vec![0.0; n]
            };
            let keep = col.iter().any(|&v| v != 0.0);
            columns.push(col);
            means.push(m);
            scales.push(if keep { sd } else { 0.0 });
        }
        Ok(Self {
            columns,
            means,
            scales,
            centered_y,
            y_mean,
            w: weights.to_vec(),
            total_weight,
        })
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.scales.len()).filter(|&j| self.scales[j] > 0.0)
    }

    fn correlation(&self, j: usize, residual: &[f64]) -> f64 {
        self.columns[j]
            .iter()
            .zip(residual)
            .zip(&self.w)
            .map(|((z, r), w)| w * z * r)
            .sum::<f64>()
            / self.total_weight
    }

    fn lambda_max(&self) -> f64 {
        self.active()
            .map(|j| self.correlation(j, &self.centered_y).abs())
            .fold(0.0, f64::max)
    }

    /// Cyclic coordinate descent from `start` (standardized scale).
    fn solve(&self, lambda: f64, start: &[f64]) -> Result<(Vec<f64>, usize)> {
        let mut b = start.to_vec();
        let mut residual = self.centered_y.clone();
        for j in self.active() {
            if b[j] != 0.0 {
                for (r, z) in residual.iter_mut().zip(&self.columns[j]) {
                    *r -= b[j] * z;
                }
            }
        }
        for sweep in 1..=LASSO_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in self.active() {
                let rho = self.correlation(j, &residual) + b[j];
                let new = soft_threshold(rho, lambda);
                let delta = new - b[j];
                if delta != 0.0 {
                    for (r, z) in residual.iter_mut().zip(&self.columns[j]) {
                        *r -= delta * z;
                    }
                    b[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < LASSO_TOLERANCE {
                return Ok((b, sweep));
            }
        }
        let fit = self.back_transform(&b, LASSO_MAX_SWEEPS);
        Err(Error::NotConverged {
            sweeps: LASSO_MAX_SWEEPS,
            intercept: fit.intercept,
            coefficients: fit.coefficients,
        })
    }

    fn back_transform(&self, b: &[f64], sweeps: usize) -> LassoFit {
        let coefficients: Vec<f64> = b
            .iter()
            .zip(&self.scales)
            .map(|(bj, sd)| if *sd > 0.0 { bj / sd } else { 0.0 })
            .collect();
        let intercept = self.y_mean
            - coefficients
                .iter()
                .zip(&self.means)
                .map(|(c, m)| c * m)
                .sum::<f64>();
        LassoFit {
            intercept,
            coefficients,
            sweeps,
        }
    }
}

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

/// Smallest penalty at which every standardized coefficient is zero.
pub fn lasso_lambda_max(design: &Matrix, targets: &[f64], weights: &[f64]) -> Result<f64> {
    Ok(Standardized::new(design, targets, weights)?.lambda_max())
}

/// Minimize `(1/2W) sum w_i (y_i - b0 - b.z_i)^2 + lambda * sum |b_j|` where
/// `z` is the design standardized by weighted mean and weighted standard
/// deviation. Coefficients are returned on the original scale; the intercept
/// is unpenalized.
pub fn fit_lasso(design: &Matrix, targets: &[f64], weights: &[f64], lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be non-negative")));
    }
    let s = Standardized::new(design, targets, weights)?;
    let (b, sweeps) = s.solve(lambda, &vec![0.0; design.n_cols()])?;
    Ok(s.back_transform(&b, sweeps))
}

/// LASSO fits at each penalty of a descending grid, warm-started along the
/// path.
pub fn lasso_path(design: &Matrix, targets: &[f64], weights: &[f64], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    let s = Standardized::new(design, targets, weights)?;
    let mut b = vec![0.0; design.n_cols()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (next, sweeps) = s.solve(lambda, &b)?;
        out.push(s.back_transform(&next, sweeps));
        b = next;
    }
    Ok(out)
}

/// How raw features map onto design columns.
#[derive(Debug, Clone)]
struct Encoding {
    /// Per feature: `None` for a raw column, otherwise the interior bin edges.
    edges: Vec<Option<Vec<f64>>>,
    /// First design column of each feature.
    offsets: Vec<usize>,
    width: usize,
}

impl Encoding {
    fn new(stats: &[ColumnStats], discretize: &[usize]) -> Self {
        let mut edges = Vec::with_capacity(stats.len());
        let mut offsets = Vec::with_capacity(stats.len());
        let mut width = 0;
        for (j, s) in stats.iter().enumerate() {
            offsets.push(width);
            if discretize.contains(&j) {
                let e: Vec<f64> = s.quantiles.iter().map(|q| q.1).collect();
                width += e.len() + 1;
                edges.push(Some(e));
            } else {
                width += 1;
                edges.push(None);
            }
        }
        Self { edges, offsets, width }
    }

    fn encode(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, v) in row.iter().enumerate() {
            let at = self.offsets[j];
            match &self.edges[j] {
                None => out[at] = *v,
                Some(e) => out[at + bin_of(*v, e)] = 1.0,
            }
        }
    }

    /// Contribution of each feature at an encoded row.
    fn contributions(&self, fit: &LassoFit, encoded: &[f64]) -> Vec<f64> {
        (0..self.edges.len())
            .map(|j| {
                let at = self.offsets[j];
                let span = self.edges[j].as_ref().map_or(1, |e| e.len() + 1);
                (at..at + span).map(|c| fit.coefficients[c] * encoded[c]).sum()
            })
            .collect()
    }
}

/// Number of interior edges at or below `v`.
fn bin_of(v: f64, edges: &[f64]) -> usize {
    edges.iter().filter(|&&e| e <= v).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub nonzero_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub feature_names: Vec<String>,
    /// Coefficient times design value at the explained row; for a
    /// discretized feature, the coefficient of its active bin.
    pub contributions: Vec<f64>,
    pub intercept: f64,
    /// Weighted R^2 of the surrogate over the perturbed samples.
    pub local_r2: f64,
    pub surrogate_prediction: f64,
    pub model_prediction: f64,
    pub nonzero_count: usize,
    pub lambda_used: f64,
    pub kernel_width: f64,
    pub path: Vec<PathPoint>,
    pub config: LimeConfig,
}

/// Explain `score` near `x`. The penalty is the smallest one on the grid
/// whose explanation has at most `target_nonzero` nonzero contributions;
/// when none qualifies, the largest penalty is used.
pub fn explain_lime<S: ScoreFn + ?Sized>(
    score: &S,
    x: &[f64],
    data: &Dataset,
    config: &LimeConfig,
) -> Result<LimeExplanation> {
    let p = data.n_cols();
    if x.len() != p {
        return Err(Error::Shape(format!("row has {} values, data has {p} columns", x.len())));
    }
    config.validate(p)?;
    let bins = config.bins_per_feature;
    let levels: Vec<f64> = (1..bins).map(|k| k as f64 / bins as f64).collect();
    let stats = column_stats(data, &levels)?;
    let width = config.width_for(p);

    let samples = sample_locality(x, &stats, config.n_samples, config.seed)?;
    let weights = kernel_weights(x, &samples, width, &stats)?;
    let targets = score.score_matrix(&samples);

    let encoding = Encoding::new(&stats, &config.discretize);
    let mut design = Matrix::zeros(samples.n_rows(), encoding.width);
    for i in 0..samples.n_rows() {
        encoding.encode(samples.row(i), design.row_mut(i));
    }
    let mut x_encoded = vec![0.0; encoding.width];
    encoding.encode(x, &mut x_encoded);

    let standardized = Standardized::new(&design, &targets, &weights)?;
    if standardized.active().next().is_none() {
        return Err(Error::DegenerateDesign("every design column is constant"));
    }
    let fits = {
        let mut b = vec![0.0; encoding.width];
        let mut fits = Vec::with_capacity(config.lambda_grid.len());
        for &lambda in &config.lambda_grid {
            let (next, sweeps) = standardized.solve(lambda, &b)?;
            fits.push(standardized.back_transform(&next, sweeps));
            b = next;
        }
        fits
    };
    let contributions: Vec<Vec<f64>> = fits
        .iter()
        .map(|f| encoding.contributions(f, &x_encoded))
        .collect();
    let path: Vec<PathPoint> = config
        .lambda_grid
        .iter()
        .zip(&contributions)
        .map(|(&lambda, c)| PathPoint {
            lambda,
            nonzero_count: c.iter().filter(|v| **v != 0.0).count(),
        })
        .collect();
    let chosen = path
        .iter()
        .rposition(|pt| pt.nonzero_count <= config.target_nonzero)
        .unwrap_or(0);
    let fit = &fits[chosen];
    let contributions = contributions[chosen].clone();

    let predictions: Vec<f64> = design
        .rows()
        .map(|z| fit.intercept + z.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let local_r2 = weighted_r2(&targets, &predictions, &weights);
    let surrogate_prediction = fit.intercept + contributions.iter().sum::<f64>();

    let mut echo = config.clone();
    echo.kernel_width = Some(width);
    Ok(LimeExplanation {
        feature_names: data.feature_names().to_vec(),
        nonzero_count: path[chosen].nonzero_count,
        lambda_used: path[chosen].lambda,
        contributions,
        intercept: fit.intercept,
        local_r2,
        surrogate_prediction,
        model_prediction: score.score(x),
        kernel_width: width,
        path,
        config: echo,
    })
}

fn weighted_r2(y: &[f64], yhat: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let y_bar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let sse: f64 = y.iter().zip(yhat).zip(w).map(|((a, b), c)| c * (a - b).powi(2)).sum();
    let sst: f64 = y.iter().zip(w).map(|(a, c)| c * (a - y_bar).powi(2)).sum();
    if sst == 0.0 {
        1.0
    } else {
        1.0 - sse / sst
    }
}

/// Population standard deviation of each feature's contribution over runs
/// with the given seeds.
pub fn lime_std_over_seeds<S: ScoreFn + ?Sized>(
    score: &S,
    x: &[f64],
    data: &Dataset,
    config: &LimeConfig,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 repeats".into()));
    }
    let runs = seeds
        .iter()
        .map(|&seed| {
            let cfg = LimeConfig {
                seed,
                ..config.clone()
            };
            explain_lime(score, x, data, &cfg).map(|e| e.contributions)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    Ok((0..data.n_cols())
        .map(|j| {
            let m = runs.iter().map(|r| r[j]).sum::<f64>() / n;
            (runs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect())
}

/// Contribution spread over `repeats` runs with seeds derived from
/// `config.seed`.
pub fn lime_cv_std<S: ScoreFn + ?Sized>(
    score: &S,
    x: &[f64],
    data: &Dataset,
    config: &LimeConfig,
    repeats: usize,
) -> Result<Vec<f64>> {
    let seeds: Vec<u64> = (0..repeats as u64)
        .map(|r| rng::derive_seed(config.seed, r))
        .collect();
    lime_std_over_seeds(score, x, data, config, &seeds)
}
