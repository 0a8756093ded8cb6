//! Datasets, the simulated signal, CSV ingestion and column statistics.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Column-major feature table with optional binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    feature_names: Vec<String>,
    labels: Option<Vec<u8>>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(
        columns: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if columns.len() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} feature names",
                columns.len(),
                feature_names.len()
            )));
        }
        let n_rows = match (columns.first(), labels.as_ref()) {
            (Some(c), _) => c.len(),
            (None, Some(l)) => l.len(),
            (None, None) => 0,
        };
        if let Some(j) = columns.iter().position(|c| c.len() != n_rows) {
            return Err(Error::Shape(format!(
                "column `{}` has {} rows, expected {n_rows}",
                feature_names[j],
                columns[j].len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n_rows {
                return Err(Error::Shape(format!(
                    "{} labels for {n_rows} rows",
                    labels.len()
                )));
            }
            if labels.iter().any(|&y| y > 1) {
                return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            columns,
            feature_names,
            labels,
            n_rows,
        })
    }

    /// Build a dataset from row-major data.
    pub fn from_rows(
        rows: &[Vec<f64>],
        feature_names: Vec<String>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); n_cols];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        let mut data = Self::new(columns, feature_names, labels)?;
        data.n_rows = rows.len();
        Ok(data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Row-major copy of the feature table.
    pub fn to_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.n_rows * self.n_cols());
        for i in 0..self.n_rows {
            data.extend(self.columns.iter().map(|c| c[i]));
        }
        Matrix {
            data,
            n_rows: self.n_rows,
            n_cols: self.n_cols(),
        }
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            feature_names: self.feature_names.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
            n_rows: rows.len(),
        }
    }

    /// Write the features, followed by the label column when present.
    pub fn write_csv(&self, path: &Path, label_name: &str) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        let mut header = self.feature_names.join(",");
        if self.labels.is_some() {
            header.push(',');
            header.push_str(label_name);
        }
        writeln!(out, "{header}").map_err(io_err)?;
        let mut line = String::new();
        for i in 0..self.n_rows {
            line.clear();
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&col[i].to_string());
            }
            if let Some(labels) = &self.labels {
                line.push(',');
                line.push_str(&labels[i].to_string());
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} values cannot form a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            n_rows: rows.len(),
            n_cols,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            data: vec![0.0; n_rows * n_cols],
            n_rows,
            n_cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// Overwrite column `j` with `value` in every row.
    pub fn fill_column(&mut self, j: usize, value: f64) {
        for i in 0..self.n_rows {
            self.data[i * self.n_cols + j] = value;
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }
}

/// Marginal distribution of every simulated feature, scaled by
/// [`SimConfig::scale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureDistribution {
    /// Uniform on `[-scale, scale]`.
    #[default]
    Uniform,
    /// Normal with mean 0 and standard deviation `scale`.
    Normal,
}

/// Parameters of the simulated binary signal
/// `num1*num4 + |num8|*num9^2 >= threshold` with label switching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_rows: usize,
    pub seed: u64,
    pub noise_fraction: f64,
    pub threshold: f64,
    #[serde(default)]
    pub distribution: FeatureDistribution,
    pub scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            seed: crate::DEFAULT_SEED,
            noise_fraction: 0.15,
            threshold: 0.42,
            distribution: FeatureDistribution::default(),
            scale: 1.0,
        }
    }
}

pub const SIM_FEATURES: usize = 12;

/// Column indices of num1, num4, num8 and num9.
pub const SIM_SIGNAL_FEATURES: [usize; 4] = [0, 3, 7, 8];

/// Noise-free simulated label for a 12-wide row.
pub fn signal_label(row: &[f64], threshold: f64) -> u8 {
    let value = row[0] * row[3] + row[7].abs() * row[8] * row[8];
    u8::from(value >= threshold)
}

pub fn simulate_signal(config: &SimConfig) -> Result<Dataset> {
    if config.n_rows == 0 {
        return Err(Error::InvalidArgument("n_rows must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.noise_fraction) {
        return Err(Error::InvalidArgument(format!(
            "noise_fraction {} outside [0, 1]",
            config.noise_fraction
        )));
    }
    let n = config.n_rows;
    let mut rng = rng::seeded(config.seed);
    let mut columns = vec![Vec::with_capacity(n); SIM_FEATURES];
    let mut labels = Vec::with_capacity(n);
    let mut row = [0.0; SIM_FEATURES];
    for _ in 0..n {
        for (col, v) in columns.iter_mut().zip(row.iter_mut()) {
            *v = match config.distribution {
                FeatureDistribution::Normal => config.scale * rng.sample::<f64, _>(StandardNormal),
                FeatureDistribution::Uniform => rng.gen_range(-config.scale..=config.scale),
            };
            col.push(*v);
        }
        labels.push(signal_label(&row, config.threshold));
    }
    let n_flip = (config.noise_fraction * n as f64).round() as usize;
    for i in rng::sample_without_replacement(n, n_flip, &mut rng) {
        labels[i] = 1 - labels[i];
    }
    let names = (1..=SIM_FEATURES).map(|k| format!("num{k}")).collect();
    Dataset::new(columns, names, Some(labels))
}

/// Read a numeric CSV with a header row. The target column becomes the
/// labels and the optional id column is dropped.
pub fn load_csv(path: &Path, target: &str, id_column: Option<&str>) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::MissingColumn(target.to_string()))?;
    let id_idx = match id_column {
        Some(id) => Some(
            headers
                .iter()
                .position(|h| h == id)
                .ok_or_else(|| Error::MissingColumn(id.to_string()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != target_idx && Some(c) != id_idx)
        .collect();
    let mut columns = vec![Vec::new(); feature_cols.len()];
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let parse = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                value: raw.to_string(),
            })
        };
        for (col, &c) in columns.iter_mut().zip(&feature_cols) {
            col.push(parse(c)?);
        }
        let y = parse(target_idx)?;
        if y != 0.0 && y != 1.0 {
            return Err(Error::Parse {
                row,
                column: headers[target_idx].clone(),
                value: record.get(target_idx).unwrap_or("").to_string(),
            });
        }
        labels.push(y as u8);
    }
    let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let mut data = Dataset::new(columns, names, Some(labels))?;
    data.n_rows = data.labels.as_ref().map_or(0, Vec::len);
    Ok(data)
}

/// Row indices `(train, validation)` for a seeded random partition.
///
/// The validation set is the first `round(fraction * n)` entries of a seeded
/// permutation; both index lists are returned in ascending order.
pub fn split_indices(
    n_rows: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {validation_fraction} outside (0, 1)"
        )));
    }
    let n_valid = (validation_fraction * n_rows as f64).round() as usize;
    if n_valid == 0 || n_valid == n_rows {
        return Err(Error::InvalidArgument(format!(
            "split of {n_rows} rows at {validation_fraction} leaves an empty partition"
        )));
    }
    let perm = rng::permutation(n_rows, &mut rng::seeded(seed));
    let mut valid = perm[..n_valid].to_vec();
    let mut train = perm[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    Ok((train, valid))
}

pub fn split(data: &Dataset, validation_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, valid) = split_indices(data.n_rows(), validation_fraction, seed)?;
    Ok((data.select_rows(&train), data.select_rows(&valid)))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Monotone directions from the signs of feature/label correlations.
/// Features with `|r| < min_abs_correlation` (or constant features) stay
/// unconstrained.
pub fn monotone_directions(data: &Dataset, min_abs_correlation: f64) -> Result<Vec<i8>> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidArgument("dataset has no labels".into()))?;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    data.columns()
        .iter()
        .map(|col| match pearson(col, &y) {
            Ok(r) if r.abs() >= min_abs_correlation => Ok(if r > 0.0 { 1 } else { -1 }),
            Ok(_) | Err(Error::UndefinedCorrelation(_)) => Ok(0),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
}

/// Value at index `floor(level * (n - 1))` of an ascending slice.
pub fn lower_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let idx = ((level.clamp(0.0, 1.0) * (n - 1) as f64).floor() as usize).min(n - 1);
    sorted[idx]
}

pub fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn stats_of(column: &[f64], quantile_levels: &[f64]) -> ColumnStats {
    let sorted = sorted_copy(column);
    ColumnStats {
        mean: mean(column),
        std: std_dev(column),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        quantiles: quantile_levels
            .iter()
            .map(|&q| (q, lower_quantile(&sorted, q)))
            .collect(),
    }
}

pub fn column_stats(data: &Dataset, quantile_levels: &[f64]) -> Result<Vec<ColumnStats>> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("dataset"));
    }
    Ok(data
        .columns()
        .iter()
        .map(|c| stats_of(c, quantile_levels))
        .collect())
}
