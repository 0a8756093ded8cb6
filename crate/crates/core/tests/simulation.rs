use std::sync::OnceLock;

use explainkit::data::{simulate_signal, SimConfig};
use explainkit::lime::{explain_lime, LimeConfig};
use explainkit::pdice::{make_grid, partial_dependence, percentile_rows, DEFAULT_GRID_POINTS};
use explainkit::shapley::{shapley_exact, Marginalization};
use explainkit::surrogate::extract_surrogate;
use explainkit::{fit_gbm, Dataset, GbmConfig, GbmModel};

const SIGNAL: [usize; 4] = [0, 3, 7, 8];

struct Fixture {
    valid: Dataset,
    model: GbmModel,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let train = simulate_signal(&SimConfig { n_rows: 8000, ..SimConfig::default() }).unwrap();
        let valid = simulate_signal(&SimConfig { n_rows: 8000, seed: 54321, ..SimConfig::default() }).unwrap();
        let model = fit_gbm(&train, &valid, &GbmConfig::default(), &[]).unwrap();
        Fixture { valid, model }
    })
}

#[test]
fn surrogate_ranks_signal_above_noise() {
    let f = fixture();
    let report = extract_surrogate(&f.model, &f.valid, 4).unwrap();
    let weakest_signal = SIGNAL.iter().map(|&j| report.importance[j]).fold(f64::INFINITY, f64::min);
    for j in (0..12).filter(|j| !SIGNAL.contains(j)) {
        assert!(report.importance[j] < weakest_signal, "noise feature {j}");
    }
    assert!(report
        .interactions
        .iter()
        .any(|i| (i.parent, i.child) == (8, 7) || (i.parent, i.child) == (7, 8)));
}

#[test]
fn num9_partial_dependence_is_u_shaped() {
    let f = fixture();
    let grid = make_grid(f.valid.column(8), DEFAULT_GRID_POINTS).unwrap().values;
    let pd = partial_dependence(&f.model, &f.valid, 8, &grid).unwrap();
    let argmin = (0..pd.len()).min_by(|&a, &b| pd[a].total_cmp(&pd[b])).unwrap();
    assert!(argmin > 0 && argmin + 1 < pd.len());
    assert!(pd[0] > pd[argmin] && pd[pd.len() - 1] > pd[argmin]);
}

#[test]
fn lime_respects_sparsity_target_and_zeroes_noise_at_high_penalty() {
    let f = fixture();
    let row = percentile_rows(&f.model, &f.valid, &[0.5]).unwrap()[0];
    let cfg = LimeConfig { discretize: SIGNAL.to_vec(), ..LimeConfig::default() };
    let e = explain_lime(&f.model, &f.valid.row(row), &f.valid, &cfg).unwrap();
    assert!(e.nonzero_count <= cfg.target_nonzero);
    assert!(e.local_r2.is_finite());
    let sum: f64 = e.contributions.iter().sum();
    assert!((e.surrogate_prediction - e.intercept - sum).abs() < 1e-10);

    // the first features to enter the path are signal features
    let first = e.path.iter().position(|p| p.nonzero_count > 0).unwrap();
    let sparse = LimeConfig { lambda_grid: vec![e.path[first].lambda], ..cfg };
    let s = explain_lime(&f.model, &f.valid.row(row), &f.valid, &sparse).unwrap();
    let zero_noise = (0..12).filter(|j| !SIGNAL.contains(j) && s.contributions[*j] == 0.0).count();
    assert_eq!(zero_noise, 8);
}

#[test]
fn shapley_sign_patterns_at_extreme_percentiles() {
    let f = fixture();
    let rows = percentile_rows(&f.model, &f.valid, &[0.1, 0.9]).unwrap();
    let low = shapley_exact(&f.model, &f.valid.row(rows[0]), None, Marginalization::PathDependent).unwrap();
    let high = shapley_exact(&f.model, &f.valid.row(rows[1]), None, Marginalization::PathDependent).unwrap();
    assert!(SIGNAL.iter().all(|&j| low.phi[j] < 0.0), "{:?}", low.phi);
    // num8 and num9 push the 90th percentile row up
    assert!(high.phi[7] > 0.0 && high.phi[8] > 0.0, "{:?}", high.phi);
    assert!(high.prediction > high.base_value);
}
