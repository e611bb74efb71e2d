use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tten_core::evaluation::{
    cosine_quadrant_analysis, magnitude_popularity_correlation, Quadrant, HISTOGRAM_BINS,
};
use tten_core::matrix::norm;
use tten_core::model::{load_embeddings, save_embeddings};
use tten_core::{
    assign_groups, evaluate, generate_synthetic, load_dataset, p_sweep, train, EvalReport,
    FinalEmbeddings, InteractionDataset, Matrix, NormalizedAdjacency, PopularityGroups, Split,
    SyntheticSpec, TrainConfig, TrainReport,
};

use crate::args::{AnalyzeArgs, Cli, Command, EvaluateArgs, GenerateArgs, RunArgs, SweepArgs, TrainArgs};
use crate::config_file::ConfigFile;
use crate::output::{cell, RunDir};
use crate::settings::{self, DataSettings, DataSource, Layers, PGrid};

/// Runs one command and returns the directory it wrote to.
pub fn run(cli: Cli) -> Result<PathBuf> {
    let command = cli.command;
    let file = match &command.run_args().config {
        Some(path) => Some(ConfigFile::load(path)?),
        None => None,
    };
    let layers = Layers::new(file.as_ref());
    let common = Common::resolve(&layers, command.run_args(), command.name())?;
    match &command {
        Command::Generate(a) => generate(&layers, &common, a),
        Command::Train(a) => train_cmd(&layers, &common, a),
        Command::Evaluate(a) => evaluate_cmd(&layers, &common, a),
        Command::Analyze(a) => analyze(&layers, &common, a),
        Command::Sweep(a) => sweep(&layers, &common, a),
    }
}

struct Common {
    name: &'static str,
    seed: u64,
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(layers: &Layers, run: &RunArgs, name: &'static str) -> Result<Self> {
        let seed = layers.or("seed", run.seed, settings::DEFAULT_SEED)?;
        if let Some(threads) = layers.get("threads", run.threads)? {
            configure_threads(threads)?;
        }
        // the output location is not part of the echoed configuration
        let out = layers.path("out", run.out.clone())?;
        layers.forget("out");
        Ok(Common { name, seed, out })
    }

    fn run_dir(&self) -> Result<RunDir> {
        let dir = RunDir::create(self.out.as_deref(), self.name)?;
        log::info!("writing outputs to {}", dir.path().display());
        Ok(dir)
    }

    fn finish(&self, layers: &Layers, dir: &RunDir) -> Result<PathBuf> {
        dir.write(
            "config.txt",
            &layers.render(&format!("effective configuration of `tten {}`", self.name)),
        )?;
        Ok(dir.path().to_path_buf())
    }
}

fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    // the global pool can be built once per process; a matching pool is fine
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        Ok(()) => Ok(()),
        Err(_) if rayon::current_num_threads() == threads => Ok(()),
        Err(e) => Err(e).context(format!(
            "cannot configure {threads} threads; the pool already has {}",
            rayon::current_num_threads()
        )),
    }
}

fn load_data(data: &DataSettings) -> Result<InteractionDataset> {
    let ds = match &data.source {
        DataSource::Files { train, test } => {
            load_dataset(train, test, data.validation_fraction, data.seed)?
        }
        DataSource::Synthetic(spec) => generate_synthetic(spec)?
            .dataset
            .with_validation_split(data.validation_fraction, data.seed)?,
    };
    log::info!(
        "dataset: {} users, {} items, {} train / {} validation / {} test interactions",
        ds.num_users(),
        ds.num_items(),
        ds.num_train_interactions(),
        ds.num_interactions(Split::Validation),
        ds.num_interactions(Split::Test),
    );
    Ok(ds)
}

fn load_finals(layers: &Layers, flag: Option<PathBuf>, ds: &InteractionDataset) -> Result<FinalEmbeddings> {
    let Some(path) = layers.path("embeddings", flag)? else {
        bail!("--embeddings is required (the final.emb written by `tten train`)");
    };
    let table = load_embeddings(&path)?;
    if table.num_users != ds.num_users() || table.num_items != ds.num_items() {
        bail!(
            "{} holds {} users and {} items but the dataset has {} and {}",
            path.display(),
            table.num_users,
            table.num_items,
            ds.num_users(),
            ds.num_items()
        );
    }
    Ok(FinalEmbeddings::from_table(table.num_users, table.num_items, table.values)?)
}

fn popularity_groups(layers: &Layers, flag: Option<usize>, ds: &InteractionDataset) -> Result<PopularityGroups> {
    let g = layers.or("groups", flag, settings::DEFAULT_GROUPS)?;
    Ok(assign_groups(ds.popularity(), g)?)
}

#[derive(Serialize)]
struct GroundTruth<'a> {
    spec: &'a SyntheticSpec,
    base_popularity: &'a [f64],
    user_latent: Vec<&'a [f64]>,
    item_latent: Vec<&'a [f64]>,
}

fn generate(layers: &Layers, common: &Common, args: &GenerateArgs) -> Result<PathBuf> {
    let spec = settings::synthetic_spec(layers, &args.spec, common.seed)?;
    let data = generate_synthetic(&spec)?;
    let dir = common.run_dir()?;
    data.dataset.write_files(&dir.file("train.txt"), &dir.file("test.txt"))?;
    dir.write_json(
        "ground_truth.json",
        &GroundTruth {
            spec: &spec,
            base_popularity: &data.base_popularity,
            user_latent: rows(&data.user_latent),
            item_latent: rows(&data.item_latent),
        },
    )?;
    common.finish(layers, &dir)
}

#[derive(Serialize)]
struct DatasetSummary {
    source: &'static str,
    train_file: Option<String>,
    test_file: Option<String>,
    synthetic: Option<SyntheticSpec>,
    validation_fraction: f64,
    num_users: usize,
    num_items: usize,
    train_interactions: usize,
    validation_interactions: usize,
    test_interactions: usize,
}

impl DatasetSummary {
    fn new(data: &DataSettings, ds: &InteractionDataset) -> Self {
        let (source, train_file, test_file, synthetic) = match &data.source {
            DataSource::Files { train, test } => (
                "files",
                Some(train.display().to_string()),
                Some(test.display().to_string()),
                None,
            ),
            DataSource::Synthetic(spec) => ("synthetic", None, None, Some(*spec)),
        };
        DatasetSummary {
            source,
            train_file,
            test_file,
            synthetic,
            validation_fraction: data.validation_fraction,
            num_users: ds.num_users(),
            num_items: ds.num_items(),
            train_interactions: ds.num_train_interactions(),
            validation_interactions: ds.num_interactions(Split::Validation),
            test_interactions: ds.num_interactions(Split::Test),
        }
    }
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    config: &'a TrainConfig,
    dataset: DatasetSummary,
    #[serde(flatten)]
    report: &'a TrainReport,
}

fn train_cmd(layers: &Layers, common: &Common, args: &TrainArgs) -> Result<PathBuf> {
    let data = settings::data_settings(layers, &args.data, common.seed)?;
    let config = settings::train_config(layers, &args.model, args.p, args.k, common.seed)?;
    let ds = load_data(&data)?;
    let dir = common.run_dir()?;
    let (model, report) = train(&ds, &config)?;
    let finals = model.forward(&NormalizedAdjacency::build(&ds), false)?;
    save_embeddings(model.base(), ds.num_users(), ds.num_items(), &dir.file("base.emb"))?;
    save_embeddings(finals.values(), ds.num_users(), ds.num_items(), &dir.file("final.emb"))?;
    dir.write_json(
        "report.json",
        &TrainOutput {
            config: &config,
            dataset: DatasetSummary::new(&data, &ds),
            report: &report,
        },
    )?;
    match report.best_validation_recall {
        Some(r) => println!(
            "best validation recall@{} {r:.5} at epoch {} of {}",
            config.eval_k, report.best_epoch, report.epochs_run
        ),
        None => println!("trained {} epochs without validation", report.epochs_run),
    }
    common.finish(layers, &dir)
}

fn groups_csv(report: &EvalReport, groups: &PopularityGroups) -> String {
    let sizes = groups.group_sizes();
    let mut out = String::from("group,items,frequency,recall\n");
    for g in 0..groups.num_groups() {
        writeln!(
            out,
            "{},{},{},{}",
            g + 1,
            sizes[g],
            report.group_frequency[g],
            cell(report.group_recall[g])
        )
        .unwrap();
    }
    out
}

fn evaluate_cmd(layers: &Layers, common: &Common, args: &EvaluateArgs) -> Result<PathBuf> {
    let data = settings::data_settings(layers, &args.data, common.seed)?;
    let p = layers.or("p", args.p, settings::DEFAULT_P)?;
    let k = layers.or("k", args.k, settings::DEFAULT_K)?;
    let ds = load_data(&data)?;
    let finals = load_finals(layers, args.embeddings.clone(), &ds)?;
    let groups = popularity_groups(layers, args.groups, &ds)?;
    let report = evaluate(&finals, &ds, &groups, p, k, Split::Test)?;
    let dir = common.run_dir()?;
    dir.write_json("eval.json", &report)?;
    dir.write("groups.csv", &groups_csv(&report, &groups))?;
    println!(
        "p={} recall@{k} {:.5} ndcg@{k} {:.5} over {} users",
        report.p, report.recall, report.ndcg, report.users_evaluated
    );
    common.finish(layers, &dir)
}

#[derive(Serialize)]
struct CorrelationOut {
    /// `null` when undefined.
    value: Option<f64>,
    note: Option<String>,
}

#[derive(Serialize)]
struct QuadrantOut {
    name: &'static str,
    users: usize,
    mean_of_means: Option<f64>,
}

#[derive(Serialize)]
struct Separation {
    positive_over_negative_unpopular: Option<f64>,
    positive_over_negative_popular: Option<f64>,
}

#[derive(Serialize)]
struct Analysis {
    correlation: CorrelationOut,
    popular_fraction: f64,
    num_popular_items: usize,
    users_analyzed: usize,
    quadrants: Vec<QuadrantOut>,
    separation: Separation,
}

fn analyze(layers: &Layers, common: &Common, args: &AnalyzeArgs) -> Result<PathBuf> {
    let data = settings::data_settings(layers, &args.data, common.seed)?;
    let fraction = layers.or(
        "popular-fraction",
        args.popular_fraction,
        settings::DEFAULT_POPULAR_FRACTION,
    )?;
    let ds = load_data(&data)?;
    let finals = load_finals(layers, args.embeddings.clone(), &ds)?;
    let corr = magnitude_popularity_correlation(&finals, ds.popularity())?;
    let stats = cosine_quadrant_analysis(&finals, &ds, fraction)?;
    let dir = common.run_dir()?;

    let analysis = Analysis {
        correlation: CorrelationOut {
            value: corr.value.is_finite().then_some(corr.value),
            note: corr.note.clone(),
        },
        popular_fraction: stats.popular_fraction,
        num_popular_items: stats.num_popular_items,
        users_analyzed: stats.per_user.len(),
        quadrants: Quadrant::ALL
            .iter()
            .enumerate()
            .map(|(q, &quad)| QuadrantOut {
                name: quad.name(),
                users: stats.per_user.iter().filter(|u| u.means[q].is_some()).count(),
                mean_of_means: stats.mean_of_means(quad),
            })
            .collect(),
        separation: Separation {
            positive_over_negative_unpopular: stats
                .separation_rate(Quadrant::PositiveUnpopular, Quadrant::NegativeUnpopular),
            positive_over_negative_popular: stats
                .separation_rate(Quadrant::PositivePopular, Quadrant::NegativePopular),
        },
    };
    dir.write_json("analysis.json", &analysis)?;

    let names: Vec<&str> = Quadrant::ALL.iter().map(|q| q.name()).collect();
    let mut quadrants = format!("user,{}\n", names.join(","));
    for u in &stats.per_user {
        let cells: Vec<String> = u.means.iter().map(|m| cell(*m)).collect();
        writeln!(quadrants, "{},{}", ds.user_label(u.user), cells.join(",")).unwrap();
    }
    dir.write("quadrants.csv", &quadrants)?;

    let mut hist = format!("bin_lower,bin_upper,{}\n", names.join(","));
    // one rounding per edge keeps the printed edges clean
    let edge = |b: usize| (2.0 * b as f64 - HISTOGRAM_BINS as f64) / HISTOGRAM_BINS as f64;
    for b in 0..HISTOGRAM_BINS {
        let counts: Vec<String> = stats.histograms.iter().map(|h| h[b].to_string()).collect();
        writeln!(hist, "{},{},{}", edge(b), edge(b + 1), counts.join(",")).unwrap();
    }
    dir.write("histograms.csv", &hist)?;

    let mut mags = String::from("item,magnitude,popularity\n");
    for i in 0..ds.num_items() {
        writeln!(mags, "{},{},{}", ds.item_label(i), norm(finals.item(i)), ds.popularity()[i]).unwrap();
    }
    dir.write("magnitudes.csv", &mags)?;

    match analysis.correlation.value {
        Some(r) => println!("magnitude-popularity correlation {r:.4}"),
        None => println!("magnitude-popularity correlation undefined"),
    }
    common.finish(layers, &dir)
}

pub fn sweep_csv(reports: &[EvalReport], num_groups: usize) -> String {
    let mut header = vec!["p".to_string(), "recall".into(), "ndcg".into()];
    header.extend((1..=num_groups).map(|g| format!("freq_g{g}")));
    header.extend((1..=num_groups).map(|g| format!("recall_g{g}")));
    let mut out = header.join(",");
    out.push('\n');
    for r in reports {
        let mut row = vec![r.p.to_string(), r.recall.to_string(), r.ndcg.to_string()];
        row.extend(r.group_frequency.iter().map(|f| f.to_string()));
        row.extend(r.group_recall.iter().map(|g| cell(*g)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn sweep(layers: &Layers, common: &Common, args: &SweepArgs) -> Result<PathBuf> {
    let data = settings::data_settings(layers, &args.data, common.seed)?;
    let k = layers.or("k", args.k, settings::DEFAULT_K)?;
    let grid = layers.or("p-grid", args.p_grid, PGrid::default())?;
    let ds = load_data(&data)?;
    let finals = load_finals(layers, args.embeddings.clone(), &ds)?;
    let groups = popularity_groups(layers, args.groups, &ds)?;
    let reports = p_sweep(&finals, &ds, &groups, &grid.values()?, k, Split::Test)?;
    let dir = common.run_dir()?;
    dir.write("sweep.csv", &sweep_csv(&reports, groups.num_groups()))?;
    println!("swept {} values of p", reports.len());
    common.finish(layers, &dir)
}

fn rows(m: &Matrix) -> Vec<&[f64]> {
    (0..m.rows()).map(|r| m.row(r)).collect()
}
