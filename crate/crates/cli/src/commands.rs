use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use explainkit::data::{load_csv, monotone_directions, simulate_signal, split, FeatureDistribution};
use explainkit::lime::{explain_lime, lime_cv_std};
use explainkit::model::{fit_gbm_traced, RoundRecord};
use explainkit::pdice::{make_grid, pd2, pd_ice, percentile_rows, DEFAULT_GRID_POINTS};
use explainkit::rng::{derive_seed, sample_without_replacement, seeded};
use explainkit::shapley::{explain_row, summarize, SummaryOptions};
use explainkit::surrogate::{cv_stability, extract_surrogate, CvStability};
use explainkit::{
    auc, Dataset, GbmConfig, GbmModel, LimeConfig, Marginalization, ModelDocument, ReferenceData, ShapleyExplanation,
    ShapleyMethod, SimConfig, SurrogateReport,
};
use serde::Serialize;

use crate::config::{read_config, Resolver, SEED_ENV};
use crate::reasons::{reason_codes, Codebook};
use crate::svg::{line_plot, summary_plot, ScatterRow, Series};
use crate::{
    Cli, Command, DataArgs, Distribution, Link, Marginal, Method, ModelArgs, Monotone, RowArgs,
    ShapleyArgs,
};

// Independent random streams derived from the run seed.
const STREAM_SPLIT: u64 = 1;
const STREAM_SURROGATE_CV: u64 = 2;
const STREAM_REFERENCE: u64 = 3;

struct Ctx {
    r: Resolver,
    out_dir: PathBuf,
    seed: u64,
}

impl Ctx {
    /// Reject unknown config keys, then write the resolved settings.
    fn finish(&mut self, command: &str) -> Result<()> {
        let unused = self.r.unused_keys();
        if !unused.is_empty() {
            bail!("config keys not used by `{command}`: {}", unused.join(", "));
        }
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        self.write(&format!("{command}.resolved.conf"), &self.r.echo(command))
    }

    fn path(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

pub(crate) fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => read_config(Path::new(path))?,
        None => BTreeMap::new(),
    };
    let mut r = Resolver::new(file, std::env::var(SEED_ENV).ok());
    let seed = r.seed(cli.seed)?;
    let out_dir = PathBuf::from(r.value("out-dir", cli.out_dir, ".".to_string())?);
    let mut ctx = Ctx { r, out_dir, seed };
    match cli.command {
        Command::Simulate(a) => simulate(&mut ctx, a),
        Command::Train(a) => train(&mut ctx, a),
        Command::Surrogate(a) => surrogate(&mut ctx, a),
        Command::Pd(a) => pd(&mut ctx, a),
        Command::Ice(a) => ice(&mut ctx, a),
        Command::Lime(a) => lime(&mut ctx, a),
        Command::Shap(a) => shap(&mut ctx, a),
        Command::Summary(a) => summary(&mut ctx, a),
        Command::Reasons(a) => reasons(&mut ctx, a),
        Command::Compare(a) => compare(&mut ctx, a),
    }
}

fn simulate(ctx: &mut Ctx, a: crate::SimulateArgs) -> Result<()> {
    let defaults = SimConfig::default();
    let config = SimConfig {
        n_rows: ctx.r.value("rows", a.rows, defaults.n_rows)?,
        seed: ctx.seed,
        noise_fraction: ctx.r.value("noise", a.noise, defaults.noise_fraction)?,
        threshold: ctx.r.value("threshold", a.threshold, defaults.threshold)?,
        distribution: match ctx.r.value("distribution", a.distribution, Distribution::Uniform)? {
            Distribution::Uniform => FeatureDistribution::Uniform,
            Distribution::Normal => FeatureDistribution::Normal,
        },
        scale: ctx.r.value("scale", a.scale, defaults.scale)?,
    };
    let out = ctx.r.value("out", a.out, "simulated.csv".to_string())?;
    ctx.finish("simulate")?;
    let data = simulate_signal(&config)?;
    data.write_csv(&ctx.path(&out), "label")?;
    println!("wrote {} rows x {} features", data.n_rows(), data.n_cols());
    Ok(())
}

fn resolve_data(ctx: &mut Ctx, a: DataArgs) -> Result<(String, String, Option<String>)> {
    Ok((
        ctx.r.required("data", a.data)?,
        ctx.r.value("target", a.target, "label".to_string())?,
        ctx.r.optional("id-column", a.id_column)?,
    ))
}

fn load_data((path, target, id): &(String, String, Option<String>)) -> Result<Dataset> {
    load_csv(Path::new(path), target, id.as_deref()).with_context(|| format!("loading {path}"))
}

struct Loaded {
    model: GbmModel,
    data: Dataset,
}

impl Loaded {
    fn names(&self) -> &[String] {
        self.data.feature_names()
    }

    fn feature(&self, name: &str) -> Result<usize> {
        self.data
            .feature_index(name)
            .ok_or_else(|| anyhow!("no feature named `{name}`"))
    }
}

type ModelInputs = (String, (String, String, Option<String>));

fn resolve_model(ctx: &mut Ctx, a: ModelArgs) -> Result<ModelInputs> {
    Ok((ctx.r.required("model", a.model)?, resolve_data(ctx, a.data)?))
}

fn load_model((model_path, data): &ModelInputs) -> Result<Loaded> {
    let doc = ModelDocument::load(Path::new(model_path))
        .with_context(|| format!("loading model {model_path}"))?;
    let data = load_data(data)?;
    if doc.feature_names != data.feature_names() {
        bail!(
            "model features [{}] do not match data features [{}]",
            doc.feature_names.join(", "),
            data.feature_names().join(", ")
        );
    }
    Ok(Loaded { model: doc.model, data })
}

enum RowChoice {
    Index(usize),
    Percentile(f64),
}

fn resolve_row(ctx: &mut Ctx, a: RowArgs) -> Result<RowChoice> {
    let row = ctx.r.optional("row", a.row)?;
    match row {
        Some(i) => {
            ensure!(
                ctx.r.optional("percentile", a.percentile)?.is_none(),
                "give either --row or --percentile, not both"
            );
            Ok(RowChoice::Index(i))
        }
        None => Ok(RowChoice::Percentile(ctx.r.value("percentile", a.percentile, 0.5)?)),
    }
}

fn pick_row(choice: &RowChoice, l: &Loaded) -> Result<usize> {
    match *choice {
        RowChoice::Index(i) => {
            ensure!(i < l.data.n_rows(), "row {i} out of range ({} rows)", l.data.n_rows());
            Ok(i)
        }
        RowChoice::Percentile(p) => Ok(percentile_rows(&l.model, &l.data, &[p])?[0]),
    }
}

struct ShapleySettings {
    method: ShapleyMethod,
    permutations: usize,
    marginalization: Marginalization,
    reference_rows: usize,
}

fn resolve_shapley(ctx: &mut Ctx, a: ShapleyArgs, default_permutations: usize) -> Result<ShapleySettings> {
    Ok(ShapleySettings {
        method: match ctx.r.value("method", a.method, Method::Exact)? {
            Method::Exact => ShapleyMethod::Exact,
            Method::Sampled => ShapleyMethod::Sampled,
            Method::Path => ShapleyMethod::Path,
        },
        permutations: ctx.r.value("permutations", a.permutations, default_permutations)?,
        marginalization: match ctx.r.value("marginalization", a.marginalization, Marginal::PathDependent)? {
            Marginal::PathDependent => Marginalization::PathDependent,
            Marginal::Interventional => Marginalization::Interventional,
        },
        reference_rows: ctx.r.value("reference-rows", a.reference_rows, 200)?,
    })
}

impl ShapleySettings {
    fn options(&self, seed: u64, budget: Option<usize>) -> SummaryOptions {
        SummaryOptions {
            method: self.method,
            budget,
            n_permutations: self.permutations,
            marginalization: self.marginalization,
            seed,
        }
    }

    /// Seeded subsample of the data used as the background distribution;
    /// only interventional marginalization needs one.
    fn reference(&self, l: &Loaded, seed: u64) -> Option<Dataset> {
        if self.marginalization != Marginalization::Interventional {
            return None;
        }
        let n = l.data.n_rows();
        let k = self.reference_rows.min(n);
        let mut rows = sample_without_replacement(n, k, &mut seeded(derive_seed(seed, STREAM_REFERENCE)));
        rows.sort_unstable();
        Some(l.data.select_rows(&rows))
    }
}

#[derive(Serialize)]
struct TrainMetrics {
    train_rows: usize,
    valid_rows: usize,
    best_round: usize,
    train_auc: f64,
    valid_auc: f64,
    constraints: BTreeMap<String, i8>,
    config: GbmConfig,
    history: Vec<RoundRecord>,
}

fn train(ctx: &mut Ctx, a: crate::TrainArgs) -> Result<()> {
    let inputs = resolve_data(ctx, a.data)?;
    let valid_fraction = ctx.r.value("valid-fraction", a.valid_fraction, 0.3)?;
    let monotone = ctx.r.value("monotone", a.monotone, Monotone::None)?;
    let min_abs_corr = ctx.r.value("min-abs-corr", a.min_abs_corr, 0.01)?;
    let d = GbmConfig::default();
    let config = GbmConfig {
        learning_rate: ctx.r.value("learning-rate", a.learning_rate, d.learning_rate)?,
        subsample: ctx.r.value("subsample", a.subsample, d.subsample)?,
        colsample: ctx.r.value("colsample", a.colsample, d.colsample)?,
        max_depth: ctx.r.value("max-depth", a.max_depth, d.max_depth)?,
        max_rounds: ctx.r.value("max-rounds", a.max_rounds, d.max_rounds)?,
        early_stopping_rounds: ctx.r.value("early-stopping", a.early_stopping, d.early_stopping_rounds)?,
        min_samples_leaf: ctx.r.value("min-samples-leaf", a.min_samples_leaf, d.min_samples_leaf)?,
        seed: ctx.seed,
    };
    let out = ctx.r.value("out", a.out, "model.json".to_string())?;
    ctx.finish("train")?;

    let data = load_data(&inputs)?;
    let (train, valid) = split(&data, valid_fraction, derive_seed(ctx.seed, STREAM_SPLIT))?;
    let constraints = match monotone {
        Monotone::Auto => monotone_directions(&train, min_abs_corr)?,
        Monotone::None => vec![0; data.n_cols()],
    };
    let (model, history) = fit_gbm_traced(&train, &valid, &config, &constraints)?;
    let auc_of = |d: &Dataset| -> Result<f64> {
        let labels = d.labels().ok_or_else(|| anyhow!("data has no labels"))?;
        Ok(auc(&model.predict(&d.to_matrix()), labels)?)
    };
    let metrics = TrainMetrics {
        train_rows: train.n_rows(),
        valid_rows: valid.n_rows(),
        best_round: model.best_round,
        train_auc: auc_of(&train)?,
        valid_auc: auc_of(&valid)?,
        constraints: data
            .feature_names()
            .iter()
            .cloned()
            .zip(constraints.iter().copied())
            .collect(),
        config,
        history,
    };
    let model_path = ctx.path(&out);
    ModelDocument::new(data.feature_names().to_vec(), model).save(&model_path)?;
    let metrics_path = model_path.with_file_name("metrics.json");
    let mut text = serde_json::to_string_pretty(&metrics)?;
    text.push('\n');
    std::fs::write(&metrics_path, text).with_context(|| format!("writing {}", metrics_path.display()))?;
    println!(
        "best round {}, train AUC {:.4}, validation AUC {:.4}",
        metrics.best_round, metrics.train_auc, metrics.valid_auc
    );
    Ok(())
}

#[derive(Serialize)]
struct SurrogateOutput<'a> {
    link: String,
    depth: usize,
    importance_order: Vec<&'a str>,
    report: &'a SurrogateReport,
    cross_validation: CvStability,
}

fn surrogate(ctx: &mut Ctx, a: crate::SurrogateArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let depth = ctx.r.value("depth", a.depth, 3)?;
    let folds = ctx.r.value("folds", a.folds, 3)?;
    let link = ctx.r.value("link", a.link, Link::Probability)?;
    ctx.finish("surrogate")?;
    let l = load_model(&inputs)?;
    let cv_seed = derive_seed(ctx.seed, STREAM_SURROGATE_CV);
    let (report, cv) = match link {
        Link::Probability => (
            extract_surrogate(&l.model, &l.data, depth)?,
            cv_stability(&l.model, &l.data, depth, folds, cv_seed)?,
        ),
        Link::LogOdds => {
            let margin = |row: &[f64]| l.model.predict_margin(row);
            (
                extract_surrogate(&margin, &l.data, depth)?,
                cv_stability(&margin, &l.data, depth, folds, cv_seed)?,
            )
        }
    };
    let order = report.importance_order();
    let output = SurrogateOutput {
        link: link.to_string(),
        depth,
        importance_order: order.iter().map(|&j| l.names()[j].as_str()).collect(),
        report: &report,
        cross_validation: cv,
    };
    ctx.write_json("surrogate.json", &output)?;
    ctx.write("surrogate.dot", &report.to_dot())?;
    println!(
        "surrogate R2 {:.4}, RMSE {:.4}; top features: {}",
        report.fidelity.r2,
        report.fidelity.rmse,
        output.importance_order.iter().take(4).copied().collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

#[derive(Serialize)]
struct Pd2Output {
    feature_a: String,
    feature_b: String,
    grid_a: Vec<f64>,
    grid_b: Vec<f64>,
    /// `values[p][q]` at `(grid_a[p], grid_b[q])`.
    values: Vec<Vec<f64>>,
}

fn pd(ctx: &mut Ctx, a: crate::PdArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let feature: String = ctx.r.required("feature", a.feature)?;
    let feature_b: Option<String> = ctx.r.optional("feature-b", a.feature_b)?;
    let grid_points = ctx.r.value("grid-points", a.grid_points, DEFAULT_GRID_POINTS)?;
    ctx.finish("pd")?;
    let l = load_model(&inputs)?;
    let fa = l.feature(&feature)?;
    if let Some(name_b) = feature_b {
        let fb = l.feature(&name_b)?;
        let ga = make_grid(l.data.column(fa), grid_points)?.values;
        let gb = make_grid(l.data.column(fb), grid_points)?.values;
        let table = pd2(&l.model, &l.data, fa, fb, &ga, &gb)?;
        let values = (0..table.n_rows()).map(|p| table.row(p).to_vec()).collect();
        ctx.write_json(
            &format!("pd2_{feature}_{name_b}.json"),
            &Pd2Output { feature_a: feature.clone(), feature_b: name_b.clone(), grid_a: ga, grid_b: gb, values },
        )?;
        println!("two-way partial dependence of {feature} and {name_b} written");
        return Ok(());
    }
    let result = pd_ice(&l.model, &l.data, fa, grid_points, None)?;
    ctx.write_json(&format!("pd_{feature}.json"), &result)?;
    ctx.write(&format!("pd_{feature}.csv"), &result.to_long_csv())?;
    let series = vec![Series {
        label: "partial dependence".into(),
        points: result.grid.iter().copied().zip(result.pd.iter().copied()).collect(),
        emphasis: true,
    }];
    ctx.write(
        &format!("pd_{feature}.svg"),
        &line_plot(&format!("Partial dependence: {feature}"), &feature, "mean score", &series),
    )?;
    println!("partial dependence of {feature} over {} grid points", result.grid.len());
    Ok(())
}

fn parse_rows(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("row `{}`", s.trim())))
        .collect()
}

fn ice(ctx: &mut Ctx, a: crate::IceArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let feature: String = ctx.r.required("feature", a.feature)?;
    let grid_points = ctx.r.value("grid-points", a.grid_points, DEFAULT_GRID_POINTS)?;
    let rows: Option<String> = ctx.r.optional("rows", a.rows)?;
    ctx.finish("ice")?;
    let l = load_model(&inputs)?;
    let f = l.feature(&feature)?;
    let ids = rows.as_deref().map(parse_rows).transpose()?;
    if let Some(ids) = &ids {
        if let Some(&bad) = ids.iter().find(|&&i| i >= l.data.n_rows()) {
            bail!("row {bad} out of range ({} rows)", l.data.n_rows());
        }
    }
    let result = pd_ice(&l.model, &l.data, f, grid_points, ids.as_deref())?;
    ctx.write_json(&format!("ice_{feature}.json"), &result)?;
    ctx.write(&format!("ice_{feature}.csv"), &result.to_long_csv())?;
    let mut series: Vec<Series> = result
        .instance_ids
        .iter()
        .zip(&result.ice)
        .map(|(id, curve)| Series {
            label: format!("row {id}"),
            points: result.grid.iter().copied().zip(curve.iter().copied()).collect(),
            emphasis: false,
        })
        .collect();
    series.push(Series {
        label: "partial dependence".into(),
        points: result.grid.iter().copied().zip(result.pd.iter().copied()).collect(),
        emphasis: true,
    });
    ctx.write(
        &format!("ice_{feature}.svg"),
        &line_plot(&format!("ICE and partial dependence: {feature}"), &feature, "score", &series),
    )?;
    println!("{} ICE curves for {feature}", result.instance_ids.len());
    Ok(())
}

#[derive(Serialize)]
struct LimeOutput {
    row: usize,
    explanation: explainkit::LimeExplanation,
    /// Contribution standard deviation over repeated runs, when requested.
    contribution_std: Option<Vec<f64>>,
}

fn lime(ctx: &mut Ctx, a: crate::LimeArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let choice = resolve_row(ctx, a.row)?;
    let d = LimeConfig::default();
    let n_samples = ctx.r.value("samples", a.samples, d.n_samples)?;
    let kernel_width: Option<f64> = ctx.r.optional("kernel-width", a.kernel_width)?;
    let target_nonzero = ctx.r.value("target-nonzero", a.target_nonzero, d.target_nonzero)?;
    let discretize: Option<String> = ctx.r.optional("discretize", a.discretize)?;
    let bins = ctx.r.value("bins", a.bins, d.bins_per_feature)?;
    let repeats = ctx.r.value("repeats", a.repeats, 0usize)?;
    ctx.finish("lime")?;
    let l = load_model(&inputs)?;
    let discretize = match discretize.as_deref() {
        None | Some("") => Vec::new(),
        Some(list) => list.split(',').map(|n| l.feature(n.trim())).collect::<Result<_>>()?,
    };
    let config = LimeConfig {
        n_samples,
        kernel_width,
        target_nonzero,
        discretize,
        bins_per_feature: bins,
        seed: ctx.seed,
        ..d
    };
    let row = pick_row(&choice, &l)?;
    let x = l.data.row(row);
    let explanation = explain_lime(&l.model, &x, &l.data, &config)?;
    let contribution_std = match repeats {
        0 => None,
        n => Some(lime_cv_std(&l.model, &x, &l.data, &config, n)?),
    };
    println!(
        "row {row}: {} nonzero contributions at lambda {:.3e}, local R2 {:.4}",
        explanation.nonzero_count, explanation.lambda_used, explanation.local_r2
    );
    ctx.write_json("lime.json", &LimeOutput { row, explanation, contribution_std })
}

#[derive(Serialize)]
struct Attribution<'a> {
    feature: &'a str,
    value: f64,
    phi: f64,
    missing: bool,
}

#[derive(Serialize)]
struct ShapOutput<'a> {
    row: usize,
    method: ShapleyMethod,
    base_value: f64,
    prediction: f64,
    base_value_proba: f64,
    prediction_proba: f64,
    additivity_error: f64,
    attributions: Vec<Attribution<'a>>,
}

fn attributions<'a>(e: &ShapleyExplanation, x: &[f64], names: &'a [String]) -> Vec<Attribution<'a>> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| Attribution { feature: n, value: x[j], phi: e.phi[j], missing: e.missing_mask[j] })
        .collect()
}

fn explain_one(l: &Loaded, s: &ShapleySettings, row: usize, seed: u64) -> Result<ShapleyExplanation> {
    let reference = s.reference(l, seed);
    let prepared = match &reference {
        Some(d) => ReferenceData::new(&l.model, d)?,
        None => None,
    };
    Ok(explain_row(
        &l.model,
        &l.data.row(row),
        prepared.as_ref(),
        &s.options(seed, None),
        derive_seed(seed, row as u64),
    )?)
}

fn shap(ctx: &mut Ctx, a: crate::ShapArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let choice = resolve_row(ctx, a.row)?;
    let settings = resolve_shapley(ctx, a.shapley, 1000)?;
    ctx.finish("shap")?;
    let l = load_model(&inputs)?;
    let row = pick_row(&choice, &l)?;
    let e = explain_one(&l, &settings, row, ctx.seed)?;
    let x = l.data.row(row);
    let output = ShapOutput {
        row,
        method: e.method,
        base_value: e.base_value,
        prediction: e.prediction,
        base_value_proba: e.base_value_proba,
        prediction_proba: e.prediction_proba,
        additivity_error: e.additivity_error(),
        attributions: attributions(&e, &x, l.names()),
    };
    println!(
        "row {row}: base {:.4} + sum(phi) = {:.4} (log-odds)",
        e.base_value, e.prediction
    );
    ctx.write_json("shap.json", &output)
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    feature: &'a str,
    mean_abs_phi: f64,
}

#[derive(Serialize)]
struct SummaryOutput<'a> {
    method: ShapleyMethod,
    rows_explained: usize,
    /// Features by descending mean absolute attribution.
    ranking: Vec<SummaryEntry<'a>>,
}

fn summary(ctx: &mut Ctx, a: crate::SummaryArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let settings = resolve_shapley(ctx, a.shapley, 64)?;
    let budget = ctx.r.value("budget", a.budget, 1000usize)?;
    ctx.finish("summary")?;
    let l = load_model(&inputs)?;
    let reference = settings.reference(&l, ctx.seed);
    let report = summarize(&l.model, &l.data, reference.as_ref(), &settings.options(ctx.seed, Some(budget)))?;
    let names = l.names();
    let output = SummaryOutput {
        method: report.method,
        rows_explained: report.rows.len(),
        ranking: report
            .ordering
            .iter()
            .map(|&j| SummaryEntry { feature: &names[j], mean_abs_phi: report.features[j].mean_abs_phi })
            .collect(),
    };
    ctx.write_json("summary.json", &output)?;
    let rows: Vec<ScatterRow> = report
        .ordering
        .iter()
        .map(|&j| {
            let f = &report.features[j];
            let lo = f.feature_values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.feature_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            ScatterRow {
                label: names[j].clone(),
                points: f
                    .phi_values
                    .iter()
                    .zip(&f.feature_values)
                    .map(|(&p, &v)| (p, (v - lo) / span))
                    .collect(),
            }
        })
        .collect();
    ctx.write("summary.svg", &summary_plot("Attribution summary", &rows))?;
    for e in &output.ranking {
        println!("{:<24} {:.6}", e.feature, e.mean_abs_phi);
    }
    Ok(())
}

#[derive(Serialize)]
struct ReasonsOutput {
    row: usize,
    prediction_proba: f64,
    #[serde(flatten)]
    codes: crate::reasons::ReasonCodes,
}

fn reasons(ctx: &mut Ctx, a: crate::ReasonsArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let choice = resolve_row(ctx, a.row)?;
    let settings = resolve_shapley(ctx, a.shapley, 1000)?;
    let k = ctx.r.value("k", a.k, 3usize)?;
    let codebook: Option<String> = ctx.r.optional("codebook", a.codebook)?;
    ctx.finish("reasons")?;
    let book = codebook.as_deref().map(|p| Codebook::load(Path::new(p))).transpose()?;
    let l = load_model(&inputs)?;
    let row = pick_row(&choice, &l)?;
    let e = explain_one(&l, &settings, row, ctx.seed)?;
    let codes = reason_codes(&e, &l.data.row(row), l.names(), k, book.as_ref())?;
    for c in &codes.codes {
        println!("{}. {}", c.rank, c.text);
    }
    if codes.incomplete {
        println!("only {} of {k} features raised the score", codes.codes.len());
    }
    ctx.write_json("reasons.json", &ReasonsOutput { row, prediction_proba: e.prediction_proba, codes })
}

#[derive(Serialize)]
struct CompareRow<'a> {
    feature: &'a str,
    exact: f64,
    sampled: f64,
    path: f64,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    row: usize,
    permutations: usize,
    max_abs_sampled_vs_exact: f64,
    max_abs_path_vs_exact: f64,
    features: Vec<CompareRow<'a>>,
}

fn compare(ctx: &mut Ctx, a: crate::CompareArgs) -> Result<()> {
    let inputs = resolve_model(ctx, a.io)?;
    let choice = resolve_row(ctx, a.row)?;
    let permutations = ctx.r.value("permutations", a.permutations, 1000usize)?;
    ctx.finish("compare")?;
    let l = load_model(&inputs)?;
    let row = pick_row(&choice, &l)?;
    let run = |method| {
        let s = ShapleySettings {
            method,
            permutations,
            marginalization: Marginalization::PathDependent,
            reference_rows: 0,
        };
        explain_one(&l, &s, row, ctx.seed)
    };
    let (exact, sampled, path) = (run(ShapleyMethod::Exact)?, run(ShapleyMethod::Sampled)?, run(ShapleyMethod::Path)?);
    let max_diff = |e: &ShapleyExplanation| {
        e.phi.iter().zip(&exact.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let output = CompareOutput {
        row,
        permutations,
        max_abs_sampled_vs_exact: max_diff(&sampled),
        max_abs_path_vs_exact: max_diff(&path),
        features: l
            .names()
            .iter()
            .enumerate()
            .map(|(j, n)| CompareRow { feature: n, exact: exact.phi[j], sampled: sampled.phi[j], path: path.phi[j] })
            .collect(),
    };
    println!("{:<24} {:>10} {:>10} {:>10}", "feature", "exact", "sampled", "path");
    for f in &output.features {
        println!("{:<24} {:>10.5} {:>10.5} {:>10.5}", f.feature, f.exact, f.sampled, f.path);
    }
    println!(
        "max |sampled - exact| {:.3e}, max |path - exact| {:.3e}",
        output.max_abs_sampled_vs_exact, output.max_abs_path_vs_exact
    );
    ctx.write_json("compare.json", &output)
}
