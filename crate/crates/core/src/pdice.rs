//! Partial dependence, individual conditional expectation and the
//! diagnostics that compare them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::model::ScoreFn;

pub const DEFAULT_GRID_POINTS: usize = 20;
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub values: Vec<f64>,
    /// The column held a single distinct value.
    pub degenerate: bool,
}

/// Evaluation grid for one column: its sorted distinct values when there are
/// at most `max_points` of them, otherwise `max_points` evenly spaced
/// lower-interpolated quantiles with duplicates dropped.
pub fn make_grid(column: &[f64], max_points: usize) -> Result<Grid> {
    if column.is_empty() {
        return Err(Error::Empty("column"));
    }
    if max_points < 2 {
        return Err(Error::InvalidArgument("a grid needs at least 2 points".into()));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("grid column must be finite".into()));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let values = if distinct.len() <= max_points {
        distinct
    } else {
        let n = sorted.len();
        let mut v: Vec<f64> = (0..max_points)
            .map(|k| sorted[k * (n - 1) / (max_points - 1)])
            .collect();
        v.dedup();
        v
    };
    Ok(Grid {
        degenerate: values.len() == 1,
        values,
    })
}

fn check_feature(data: &Dataset, feature: usize) -> Result<()> {
    if feature >= data.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "feature {feature} out of range for {} columns",
            data.n_cols()
        )));
    }
    Ok(())
}

/// Mean score over all rows with `feature` overwritten by each grid value.
pub fn partial_dependence<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    feature: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    check_feature(data, feature)?;
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if data.n_rows() == 0 {
        return Err(Error::Empty("data"));
    }
    let mut rows = data.to_matrix();
    Ok(grid
        .iter()
        .map(|&value| {
            rows.fill_column(feature, value);
            let scores = score.score_matrix(&rows);
            scores.iter().sum::<f64>() / scores.len() as f64
        })
        .collect())
}

/// ICE curves: entry `(i, k)` scores row `instance_ids[i]` with `feature`
/// set to `grid[k]`.
pub fn ice<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    feature: usize,
    grid: &[f64],
    instance_ids: &[usize],
) -> Result<Matrix> {
    check_feature(data, feature)?;
    if let Some(&bad) = instance_ids.iter().find(|&&i| i >= data.n_rows()) {
        return Err(Error::InvalidArgument(format!("row {bad} out of range")));
    }
    let m = grid.len();
    let p = data.n_cols();
    let mut expanded = Matrix::zeros(instance_ids.len() * m, p);
    for (a, &i) in instance_ids.iter().enumerate() {
        let row = data.row(i);
        for (k, &g) in grid.iter().enumerate() {
            let dst = expanded.row_mut(a * m + k);
            dst.copy_from_slice(&row);
            dst[feature] = g;
        }
    }
    Matrix::new(score.score_matrix(&expanded), instance_ids.len(), m)
}

/// Row index at each lower-interpolated level of the stable score order.
pub fn percentile_rows<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    levels: &[f64],
) -> Result<Vec<usize>> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("data"));
    }
    let order = score_order(score, data);
    let n = order.len();
    levels
        .iter()
        .map(|&l| {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidArgument(format!("level {l} outside [0, 1]")));
            }
            Ok(order[(l * (n - 1) as f64).floor() as usize])
        })
        .collect()
}

fn score_order<S: ScoreFn + ?Sized>(score: &S, data: &Dataset) -> Vec<usize> {
    let scores = score.score_matrix(&data.to_matrix());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Rows at the minimum, each decile and the maximum of the score, in score
/// order with repeats removed.
pub fn decile_instances<S: ScoreFn + ?Sized>(score: &S, data: &Dataset) -> Result<Vec<usize>> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("data"));
    }
    let order = score_order(score, data);
    let n = order.len();
    let mut out: Vec<usize> = Vec::with_capacity(11);
    for k in 0..=10 {
        let row = order[k * (n - 1) / 10];
        if !out.contains(&row) {
            out.push(row);
        }
    }
    Ok(out)
}

/// Two-feature partial dependence; entry `(p, q)` overwrites `feature_a`
/// with `grid_a[p]` and `feature_b` with `grid_b[q]`.
pub fn pd2<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    feature_a: usize,
    feature_b: usize,
    grid_a: &[f64],
    grid_b: &[f64],
) -> Result<Matrix> {
    check_feature(data, feature_a)?;
    check_feature(data, feature_b)?;
    if feature_a == feature_b {
        return Err(Error::InvalidArgument("pd2 needs two distinct features".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::Empty("data"));
    }
    let mut rows = data.to_matrix();
    let mut out = Matrix::zeros(grid_a.len(), grid_b.len());
    for (p, &a) in grid_a.iter().enumerate() {
        rows.fill_column(feature_a, a);
        for (q, &b) in grid_b.iter().enumerate() {
            rows.fill_column(feature_b, b);
            let scores = score.score_matrix(&rows);
            out.set(p, q, scores.iter().sum::<f64>() / scores.len() as f64);
        }
    }
    Ok(out)
}

/// Per grid point, the population standard deviation across ICE curves
/// after shifting each curve to mean zero.
pub fn pd_ice_divergence(ice: &Matrix) -> Result<Vec<f64>> {
    let (n, m) = (ice.n_rows(), ice.n_cols());
    if n == 0 || m == 0 {
        return Err(Error::Empty("ice"));
    }
    let centered: Vec<Vec<f64>> = ice
        .rows()
        .map(|r| {
            let mu = r.iter().sum::<f64>() / m as f64;
            r.iter().map(|v| v - mu).collect()
        })
        .collect();
    Ok((0..m)
        .map(|k| {
            let mu = centered.iter().map(|c| c[k]).sum::<f64>() / n as f64;
            let var = centered.iter().map(|c| (c[k] - mu).powi(2)).sum::<f64>() / n as f64;
            var.sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(column: &[f64], bins: usize) -> Result<Histogram> {
    if column.is_empty() {
        return Err(Error::Empty("column"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|b| if b == bins { hi } else { lo + width * b as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for &v in column {
        let b = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdIceResult {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    pub grid_degenerate: bool,
    pub pd: Vec<f64>,
    /// One uncentered curve per entry of `instance_ids`.
    pub ice: Vec<Vec<f64>>,
    pub instance_ids: Vec<usize>,
    pub divergence: Vec<f64>,
    pub histogram: Histogram,
}

impl PdIceResult {
    /// Long-format plot data: `feature,grid_value,series_id,value` with the
    /// PD curve as series `pd` and each ICE curve under its row index.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("feature,grid_value,series_id,value\n");
        for (g, v) in self.grid.iter().zip(&self.pd) {
            let _ = writeln!(out, "{},{g},pd,{v}", self.feature_name);
        }
        for (id, curve) in self.instance_ids.iter().zip(&self.ice) {
            for (g, v) in self.grid.iter().zip(curve) {
                let _ = writeln!(out, "{},{g},{id},{v}", self.feature_name);
            }
        }
        out
    }
}

/// PD over all rows plus ICE for `instance_ids` (decile rows when `None`).
pub fn pd_ice<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    feature: usize,
    grid_points: usize,
    instance_ids: Option<&[usize]>,
) -> Result<PdIceResult> {
    check_feature(data, feature)?;
    let column = data.column(feature);
    let grid = make_grid(column, grid_points)?;
    let ids = match instance_ids {
        Some(ids) => ids.to_vec(),
        None => decile_instances(score, data)?,
    };
    if ids.is_empty() {
        return Err(Error::Empty("instance_ids"));
    }
    let pd = partial_dependence(score, data, feature, &grid.values)?;
    let curves = ice(score, data, feature, &grid.values, &ids)?;
    Ok(PdIceResult {
        feature,
        feature_name: data.feature_names()[feature].clone(),
        grid_degenerate: grid.degenerate,
        pd,
        divergence: pd_ice_divergence(&curves)?,
        ice: curves.rows().map(<[f64]>::to_vec).collect(),
        instance_ids: ids,
        histogram: histogram(column, HISTOGRAM_BINS)?,
        grid: grid.values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(columns: Vec<Vec<f64>>) -> Dataset {
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        Dataset::new(columns, names, None).unwrap()
    }

    fn stump(r: &[f64]) -> f64 {
        if r[0] >= 1.5 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn grid_rules() {
        assert_eq!(make_grid(&[1.0, 1.0, 2.0], 20).unwrap().values, vec![1.0, 2.0]);
        let col: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(
            make_grid(&col, 5).unwrap().values,
            vec![0.0, 24.0, 49.0, 74.0, 99.0]
        );
        let g = make_grid(&[3.0; 7], 20).unwrap();
        assert_eq!(g.values, vec![3.0]);
        assert!(g.degenerate);
        assert!(make_grid(&[], 5).is_err());
    }

    #[test]
    fn grid_drops_repeated_quantiles() {
        let mut col = vec![0.0; 90];
        col.extend((1..=10).map(f64::from));
        let g = make_grid(&col, 5).unwrap();
        assert!(g.values.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.values[0], 0.0);
        assert_eq!(*g.values.last().unwrap(), 10.0);
    }

    #[test]
    fn pd_closed_forms() {
        let data = dataset(vec![vec![0.0, 1.0, 3.0], vec![-1.0, 0.5, 0.5]]);
        assert_eq!(
            partial_dependence(&|_: &[f64]| 0.25, &data, 1, &[0.0, 1.0]).unwrap(),
            vec![0.25, 0.25]
        );
        assert_eq!(partial_dependence(&stump, &data, 0, &[0.0, 2.0]).unwrap(), vec![0.0, 1.0]);
        let additive = |r: &[f64]| r[0] + 2.0 * r[1];
        let pd = partial_dependence(&additive, &data, 0, &[10.0]).unwrap();
        let hand = ((10.0 - 2.0) + (10.0 + 1.0) + (10.0 + 1.0)) / 3.0;
        assert!((pd[0] - hand).abs() < 1e-12);
    }

    #[test]
    fn ice_entries_and_identity() {
        let data = dataset(vec![vec![0.0, 1.0, 3.0, 2.0], vec![0.3, -1.0, 0.5, 0.1]]);
        let m = ice(&stump, &data, 0, &[0.0, 2.0], &[2]).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0]);

        let score = |r: &[f64]| (r[0] * r[1]).sin() + r[1];
        let grid = [-1.0, 0.0, 0.7, 2.0];
        let all: Vec<usize> = (0..4).collect();
        let curves = ice(&score, &data, 0, &grid, &all).unwrap();
        let pd = partial_dependence(&score, &data, 0, &grid).unwrap();
        for k in 0..grid.len() {
            let mean = curves.column(k).iter().sum::<f64>() / 4.0;
            assert!((mean - pd[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn unused_feature_leaves_predictions_unchanged() {
        let data = dataset(vec![vec![0.0, 1.0, 3.0], vec![5.0, 6.0, 7.0]]);
        let curves = ice(&stump, &data, 1, &[-4.0, 0.0, 9.0], &[0, 1, 2]).unwrap();
        for i in 0..3 {
            assert!(curves.row(i).iter().all(|&v| v == stump(&data.row(i))));
        }
    }

    #[test]
    fn decile_rows() {
        let data = dataset(vec![(0..100).map(f64::from).collect()]);
        let ids = decile_instances(&|r: &[f64]| r[0], &data).unwrap();
        assert_eq!(ids, vec![0, 9, 19, 29, 39, 49, 59, 69, 79, 89, 99]);

        let data = dataset(vec![(0..11).rev().map(f64::from).collect()]);
        let ids = decile_instances(&|r: &[f64]| r[0], &data).unwrap();
        assert_eq!(ids, (0..11).rev().collect::<Vec<_>>());

        let one = dataset(vec![vec![4.0]]);
        assert_eq!(decile_instances(&|r: &[f64]| r[0], &one).unwrap(), vec![0]);
    }

    #[test]
    fn percentile_rows_follow_score_order() {
        let data = dataset(vec![vec![5.0, 1.0, 3.0, 2.0, 4.0]]);
        let rows = percentile_rows(&|r: &[f64]| r[0], &data, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(rows, vec![1, 2, 0]);
    }

    #[test]
    fn pd2_structure() {
        let data = dataset(vec![vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 4.0], vec![0.0, 0.0, 1.0]]);
        let ga = [0.0, 1.0, 2.0];
        let gb = [-1.0, 3.0];
        let additive = pd2(&|r: &[f64]| r[0] + r[1] + r[2], &data, 0, 1, &ga, &gb).unwrap();
        let c = 1.0 / 3.0;
        for p in 0..3 {
            for q in 0..2 {
                assert!((additive.get(p, q) - (ga[p] + gb[q] + c)).abs() < 1e-12);
            }
        }
        let only_a = pd2(&stump, &data, 0, 1, &ga, &gb).unwrap();
        for p in 0..3 {
            assert_eq!(only_a.get(p, 0), only_a.get(p, 1));
        }
        assert!(pd2(&stump, &data, 1, 1, &ga, &gb).is_err());
    }

    #[test]
    fn divergence_examples() {
        let two = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pd_ice_divergence(&two).unwrap(), vec![0.5, 0.5]);
        let parallel = Matrix::from_rows(&[vec![0.0, 1.0, 3.0], vec![2.0, 3.0, 5.0]]).unwrap();
        assert!(pd_ice_divergence(&parallel).unwrap().iter().all(|&d| d.abs() < 1e-15));
        let single = Matrix::from_rows(&[vec![0.3, 0.9]]).unwrap();
        assert_eq!(pd_ice_divergence(&single).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.5, 1.0, 10.0], 10).unwrap();
        assert_eq!(h.edges.len(), 11);
        assert_eq!(h.edges[0], 0.0);
        assert_eq!(h.edges[10], 10.0);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[9], 1);
        assert_eq!(histogram(&[2.0, 2.0], 10).unwrap().counts[0], 2);
    }

    #[test]
    fn result_csv_and_json() {
        let data = dataset(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let r = pd_ice(&stump, &data, 0, 20, Some(&[1, 3])).unwrap();
        let csv = r.to_long_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "feature,grid_value,series_id,value");
        assert_eq!(lines.len(), 1 + 4 + 2 * 4);
        assert_eq!(lines[1], "x0,0,pd,0");
        assert!(lines.contains(&"x0,3,3,1"));
        let back: PdIceResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn pd_is_ice_mean(
            rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..30),
            feature in 0usize..3,
            grid in prop::collection::vec(-4.0f64..4.0, 1..6),
        ) {
            let cols: Vec<Vec<f64>> = (0..3).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
            let data = dataset(cols);
            let score = |r: &[f64]| r[0] * r[1] - r[2].abs() + (r[0] > 0.5) as u8 as f64;
            let all: Vec<usize> = (0..rows.len()).collect();
            let curves = ice(&score, &data, feature, &grid, &all).unwrap();
            let pd = partial_dependence(&score, &data, feature, &grid).unwrap();
            for k in 0..grid.len() {
                let mean = curves.column(k).iter().sum::<f64>() / rows.len() as f64;
                prop_assert!((mean - pd[k]).abs() < 1e-12);
            }
        }
    }
}
