use std::collections::HashMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use iam_core::data::synth::{self, SynthConfig};
use iam_core::data::{load_dataset, DatasetSplit, LoadOptions, RawDataset, Separator, SparseRatings, UserSet};
use iam_core::eval::protocol::{self, Method, Selector};
use iam_core::eval::{
    average_reports, csw_sweep, grid_search, run_cold_eval, run_warm_eval, write_results, GridConfig, MetricsReport,
    Predictor, ResultRow,
};
use iam_core::iam::Interview;
use iam_core::knn::ItemKnn;
use iam_core::modelfile::{ModelFile, SavedModel};
use iam_core::observe::NoObserver;
use iam_core::select::{self, SelectionMethod};
use iam_core::session::Session;
use iam_core::{mf, pca, Error, Hyperparams};
use log::info;

use crate::config::Config;
use crate::{Cli, Command, DataArgs, HyperArgs, ModelChoice, ProtocolChoice, SelectChoice, ShapeChoice};

const DEFAULT_THRESHOLD: f64 = 3.0;

struct Ctx {
    config: Config,
    seed: u64,
}

impl Ctx {
    fn data(&self, args: &DataArgs) -> Result<(RawDataset, SparseRatings, String)> {
        let path: PathBuf = self
            .config
            .pick_opt(args.dataset.clone(), "dataset")?
            .context("no dataset given (use --dataset or a `dataset =` config entry)")?;
        let options = LoadOptions {
            separator: self.config.pick(args.format.clone(), "format", Separator::Tab)?,
            header: args.header || self.config.pick(None, "header", false)?,
        };
        let mut raw = load_dataset(&path, &options)?;
        if let Some(k) = self.config.pick_opt(args.min_user_ratings, "min-user-ratings")? {
            raw = raw.filter_min_user_ratings(k);
        }
        let threshold = self.config.pick(args.threshold, "threshold", DEFAULT_THRESHOLD)?;
        let data = raw.binarize(threshold);
        if data.is_empty() {
            return Err(Error::EmptyDataset.into());
        }
        let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
        info!("{name}: {} users, {} items, {} ratings", data.num_users(), data.num_items(), data.len());
        Ok((raw, data, name))
    }

    fn hyper(&self, args: &HyperArgs) -> Result<Hyperparams> {
        let d = Hyperparams::default();
        let h = Hyperparams {
            latent_dim: self.config.pick(args.latent_dim, "latent-dim", d.latent_dim)?,
            learning_rate: self.config.pick(args.lr, "lr", d.learning_rate)?,
            lambda1: self.config.pick(args.lambda1, "lambda1", d.lambda1)?,
            lambda2: self.config.pick(args.lambda2, "lambda2", d.lambda2)?,
            epochs: self.config.pick(args.epochs, "epochs", d.epochs)?,
            seed: self.seed,
        };
        h.validate()?;
        Ok(h)
    }

    fn seeds(&self, runs: usize) -> Vec<u64> {
        (0..runs.max(1) as u64).map(|r| self.seed + r).collect()
    }
}

/// Loads a manifest and checks it was written for this dataset.
fn load_split(path: &Path, data: &SparseRatings) -> Result<DatasetSplit> {
    let (split, shape) = DatasetSplit::load(path)?;
    if shape != (data.num_users(), data.num_items()) {
        return Err(Error::Format(format!(
            "split {} was made for {} users x {} items, dataset has {} x {}",
            path.display(),
            shape.0,
            shape.1,
            data.num_users(),
            data.num_items()
        ))
        .into());
    }
    Ok(split)
}

fn print_report(r: &MetricsReport) {
    let q = match r.requested_questions {
        Some(k) if k != r.interview_size => format!("{} (asked for {k})", r.interview_size),
        _ => r.interview_size.to_string(),
    };
    println!(
        "{}\tseeds={:?}\t#Q={q}\tusers={}\trmse={:.4}\taccuracy={:.4}",
        r.method, r.seeds, r.users_evaluated, r.rmse, r.accuracy
    );
}

fn read_names(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let mut names = HashMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let pair = line.split_once('\t').or_else(|| line.split_once("::")).or_else(|| line.split_once(','));
        if let Some((id, title)) = pair {
            names.insert(id.trim().to_string(), title.trim().to_string());
        }
    }
    Ok(names)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = config.pick(cli.seed, "seed", 0u64)?;
    let ctx = Ctx { config, seed };
    match cli.command {
        Command::Ingest { data, out } => ingest(&ctx, &data, out.as_deref()),
        Command::Split { data, out } => split(&ctx, &data, &out),
        Command::Train {
            data,
            hyper,
            split,
            model,
            users,
            neighbours,
            out,
            interview_out,
        } => train(&ctx, &data, &hyper, &split, model, users, neighbours, &out, interview_out),
        Command::Evaluate {
            data,
            hyper,
            split,
            method,
            select,
            questions,
            protocol,
            users,
            neighbours,
            runs,
            model,
            out,
        } => {
            let run = RunSpec { method, select, questions, protocol, neighbours };
            evaluate(&ctx, &data, &hyper, &split, &run, users, runs, model.as_deref(), out.as_deref())
        }
        Command::Select {
            data,
            split,
            select,
            questions,
            out,
        } => select_cmd(&ctx, &data, &split, select, questions, &out),
        Command::Sweep {
            data,
            hyper,
            split,
            method,
            select,
            questions,
            protocol,
            neighbours,
            grid_latent_dim,
            grid_lr,
            grid_lambda1,
            grid_lambda2,
            runs,
            out,
        } => {
            let base = ctx.hyper(&hyper)?;
            let space = grid(&base, &grid_latent_dim, &grid_lr, &grid_lambda1, &grid_lambda2);
            let run = RunSpec { method, select, questions, protocol, neighbours };
            sweep(&ctx, &data, &split, &run, &space, runs, out.as_deref())
        }
        Command::CswSweep {
            data,
            hyper,
            split,
            fractions,
            users,
            runs,
            out,
        } => csw_sweep_cmd(&ctx, &data, &hyper, &split, &fractions, users, runs, out.as_deref()),
        Command::ExportPca { model, out } => {
            let file = ModelFile::load(&model)?;
            let SavedModel::Iam(m) = file.decode()? else {
                bail!(Error::Mode(format!("{} is a {} file, not an IAM model", model.display(), file.kind.name())));
            };
            let rows = pca::export_pca(&m)?;
            pca::write_pca(&rows, &file.item_ids, &out)?;
            println!("wrote {} translations to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Interview { model, top_k, names } => {
            let file = ModelFile::load(&model)?;
            let SavedModel::Iam(m) = file.decode()? else {
                bail!(Error::Mode(format!("{} is a {} file, not an IAM model", model.display(), file.kind.name())));
            };
            let names = names.as_deref().map(read_names).transpose()?;
            let session = Session::new(&m, &file.item_ids, names.as_ref(), top_k)?;
            let stdin = io::stdin();
            let stdout = io::stdout();
            session.run(&mut stdin.lock(), &mut stdout.lock())?;
            Ok(())
        }
        Command::Synth { shape, users, items, out } => {
            let mut cfg = match shape {
                ShapeChoice::Default => SynthConfig { seed: ctx.seed, ..Default::default() },
                ShapeChoice::Yahoo => SynthConfig::yahoo_shape(ctx.seed),
                ShapeChoice::Flixter => SynthConfig::flixter_shape(ctx.seed),
            };
            cfg.users = users.unwrap_or(cfg.users);
            cfg.items = items.unwrap_or(cfg.items);
            let raw = synth::generate(&cfg);
            synth::write_tsv(&raw, &out)?;
            println!(
                "wrote {} ratings ({} users, {} items, threshold {}) to {}",
                raw.entries.len(),
                raw.user_ids.len(),
                raw.item_ids.len(),
                cfg.scale.default_threshold(),
                out.display()
            );
            Ok(())
        }
    }
}

fn ingest(ctx: &Ctx, args: &DataArgs, out: Option<&Path>) -> Result<()> {
    let (raw, data, name) = ctx.data(args)?;
    let likes = data.triples().iter().filter(|t| t.value == iam_core::data::Vote::Like).count();
    println!(
        "{name}\tusers={}\titems={}\tratings={}\tlike_fraction={:.4}",
        data.num_users(),
        data.num_items(),
        data.len(),
        likes as f64 / data.len() as f64
    );
    if let Some(out) = out {
        synth::write_tsv(&raw, out)?;
    }
    Ok(())
}

fn split(ctx: &Ctx, args: &DataArgs, out: &Path) -> Result<()> {
    let (_, data, _) = ctx.data(args)?;
    let split = DatasetSplit::protocol(&data, ctx.seed)?;
    split.save(&data, out)?;
    println!(
        "train={} valid={} test={} -> {}",
        split.users(UserSet::Train).len(),
        split.users(UserSet::Valid).len(),
        split.users(UserSet::Test).len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    ctx: &Ctx,
    args: &DataArgs,
    hyper: &HyperArgs,
    split_path: &Path,
    model: ModelChoice,
    users: UserSet,
    neighbours: Option<usize>,
    out: &Path,
    interview_out: Option<PathBuf>,
) -> Result<()> {
    let (_, data, _) = ctx.data(args)?;
    let split = load_split(split_path, &data)?;
    let hyper = ctx.hyper(hyper)?;
    let items = data.item_ids();
    let file = match model {
        ModelChoice::Mf => {
            let m = mf::mf_train_warm_protocol(&data, &split, users, &hyper, &mut NoObserver)?;
            ModelFile::from_mf(&m, data.user_ids(), items)
        }
        ModelChoice::Itemknn => {
            let knn = ItemKnn::fit(&split.training_with_answers(&data, users, |_| true), neighbours)?;
            ModelFile::from_knn(&knn, items)
        }
        ModelChoice::IamWarm | ModelChoice::IamCold | ModelChoice::IamCsw => {
            let method = match model {
                ModelChoice::IamWarm => Method::Iam,
                ModelChoice::IamCold => Method::CsIam,
                _ => Method::CswIam,
            };
            let m = protocol::train_iam(method, &split.training_data(&data), &hyper, None)?;
            if model != ModelChoice::IamWarm {
                let iv = m.interview()?;
                let path = interview_out.unwrap_or_else(|| out.with_extension("interview.tsv"));
                write_text(&path, &iv.to_text(items))?;
                println!("interview: {} items -> {}", iv.len(), path.display());
            }
            ModelFile::from_iam(&m, items)
        }
    };
    file.save(out)?;
    println!("saved {} model to {}", file.kind.name(), out.display());
    Ok(())
}

/// What one protocol run trains and how it asks.
struct RunSpec {
    method: Method,
    select: Selector,
    questions: Option<usize>,
    protocol: ProtocolChoice,
    neighbours: Option<usize>,
}

impl RunSpec {
    fn run(&self, data: &SparseRatings, split: &DatasetSplit, set: UserSet, hyper: &Hyperparams) -> iam_core::Result<MetricsReport> {
        match self.protocol {
            ProtocolChoice::Warm => protocol::warm_run(data, split, set, self.method, hyper, self.neighbours, None),
            ProtocolChoice::Cold => protocol::cold_run(
                data,
                split,
                set,
                self.method,
                self.select,
                self.questions,
                hyper,
                self.neighbours,
                None,
            ),
        }
    }
}

fn evaluate_saved(
    path: &Path,
    data: &SparseRatings,
    split: &DatasetSplit,
    run: &RunSpec,
    set: UserSet,
    hyper: &Hyperparams,
) -> Result<MetricsReport> {
    let file = ModelFile::load(path)?;
    if file.item_ids.len() != data.num_items() {
        bail!(Error::Format(format!(
            "{} covers {} items, dataset has {}",
            path.display(),
            file.item_ids.len(),
            data.num_items()
        )));
    }
    let saved = file.decode()?;
    let predictor: &dyn Predictor = match &saved {
        SavedModel::Mf(m) => m,
        SavedModel::Iam(m) => m,
        SavedModel::ItemKnn(m) => m,
        SavedModel::Interview(_) => bail!(Error::Mode("an interview file cannot predict".into())),
    };
    let mut report = match run.protocol {
        ProtocolChoice::Warm => run_warm_eval(predictor, split, set)?,
        ProtocolChoice::Cold => {
            let interview = match (&saved, run.select) {
                (SavedModel::Iam(m), Selector::Alpha) => {
                    let iv = m.interview()?;
                    run.questions.map_or(iv.clone(), |k| iv.truncated(k))
                }
                (_, Selector::Alpha) => bail!(Error::Mode("alpha selection needs a cold or mixed IAM model".into())),
                _ => protocol::build_interview(&split.training_data(data), run.select, run.questions, hyper, None)?,
            };
            let mut r = run_cold_eval(predictor, split, &interview, set)?;
            r.requested_questions = run.questions;
            r
        }
    };
    report.method = format!("{}:{}", file.kind.name(), report.method);
    report.hyper = Some(file.hyper);
    report.seeds = vec![file.hyper.seed];
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    ctx: &Ctx,
    args: &DataArgs,
    hyper: &HyperArgs,
    split_path: &Path,
    run: &RunSpec,
    set: UserSet,
    runs: usize,
    model: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (_, data, name) = ctx.data(args)?;
    let split = load_split(split_path, &data)?;
    let hyper = ctx.hyper(hyper)?;
    let reports = match model {
        Some(path) => vec![evaluate_saved(path, &data, &split, run, set, &hyper)?],
        None => ctx
            .seeds(runs)
            .into_iter()
            .map(|s| run.run(&data, &split, set, &hyper.with_seed(s)))
            .collect::<iam_core::Result<Vec<_>>>()?,
    };
    for r in &reports {
        print_report(r);
    }
    let mean = average_reports(&reports)?;
    if reports.len() > 1 {
        print_report(&mean);
    }
    if let Some(out) = out {
        let config = hyper.describe();
        let rows: Vec<ResultRow> = reports.iter().map(|r| ResultRow::from_report(r, &name, set, &config)).collect();
        write_results(out, &rows)?;
    }
    Ok(())
}

fn select_cmd(ctx: &Ctx, args: &DataArgs, split_path: &Path, choice: SelectChoice, k: usize, out: &Path) -> Result<()> {
    let (_, data, _) = ctx.data(args)?;
    let split = load_split(split_path, &data)?;
    let method = match choice {
        SelectChoice::Pop => SelectionMethod::Pop,
        SelectChoice::Helf => SelectionMethod::Helf,
    };
    let iv = select::select(&split.training_data(&data), k, method)?;
    write_text(out, &iv.to_text(data.item_ids()))?;
    println!("{} items -> {}", iv.len(), out.display());
    Ok(())
}

/// Cartesian product of the grid lists; an empty list keeps the base value.
fn grid(base: &Hyperparams, dims: &[usize], lrs: &[f64], l1s: &[f64], l2s: &[f64]) -> Vec<Hyperparams> {
    fn or<T: Copy>(list: &[T], v: T) -> Vec<T> {
        if list.is_empty() {
            vec![v]
        } else {
            list.to_vec()
        }
    }
    let mut space = Vec::new();
    for &latent_dim in &or(dims, base.latent_dim) {
        for &learning_rate in &or(lrs, base.learning_rate) {
            for &lambda1 in &or(l1s, base.lambda1) {
                for &lambda2 in &or(l2s, base.lambda2) {
                    space.push(Hyperparams {
                        latent_dim,
                        learning_rate,
                        lambda1,
                        lambda2,
                        ..*base
                    });
                }
            }
        }
    }
    space
}

fn sweep(
    ctx: &Ctx,
    args: &DataArgs,
    split_path: &Path,
    run: &RunSpec,
    space: &[Hyperparams],
    runs: usize,
    out: Option<&Path>,
) -> Result<()> {
    let (_, data, name) = ctx.data(args)?;
    let split = load_split(split_path, &data)?;
    for h in space {
        h.validate()?;
    }
    let result = grid_search(
        space,
        &ctx.seeds(runs),
        |c: &Hyperparams, seed, set| run.run(&data, &split, set, &c.with_seed(seed)),
        |r: &MetricsReport, _| Ok(r.clone()),
    )?;
    println!("config\tlambda2\t#Q\tmean_accuracy");
    for (c, cfg) in space.iter().enumerate() {
        let q = result
            .cells
            .iter()
            .find_map(|cell| (cell.config == c).then(|| cell.outcome.as_ref().ok().map(|r| r.interview_size)).flatten());
        let acc = result.mean_accuracy[c].map_or("failed".to_string(), |a| format!("{a:.4}"));
        let q = q.map_or("-".to_string(), |q| q.to_string());
        println!("{}\t{:e}\t{q}\t{acc}", cfg.describe(), cfg.lambda2);
    }
    println!("best: {}", result.best_config().describe());
    for r in &result.test_runs {
        print_report(r);
    }
    print_report(&result.test);
    if let Some(out) = out {
        write_results(out, &result.rows(&name, run.method.name()))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn csw_sweep_cmd(
    ctx: &Ctx,
    args: &DataArgs,
    hyper: &HyperArgs,
    split_path: &Path,
    fractions: &[f64],
    set: UserSet,
    runs: usize,
    out: Option<&Path>,
) -> Result<()> {
    let (_, data, name) = ctx.data(args)?;
    let split = load_split(split_path, &data)?;
    let hyper = ctx.hyper(hyper)?;
    let train = split.training_data(&data);
    let mut per_fraction: Vec<Vec<MetricsReport>> = vec![Vec::new(); fractions.len()];
    for seed in ctx.seeds(runs) {
        let h = hyper.with_seed(seed);
        let model = protocol::train_iam(Method::CswIam, &train, &h, None)?;
        let interview: Interview = model.interview()?;
        for (slot, (_, r)) in per_fraction.iter_mut().zip(csw_sweep(&model, &split, &interview, set, fractions, seed)?) {
            slot.push(r);
        }
    }
    let mut rows = Vec::new();
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "fraction\t#Q\trmse\taccuracy")?;
    for (f, reports) in fractions.iter().zip(&per_fraction) {
        let mean = average_reports(reports)?;
        writeln!(stdout, "{f}\t{}\t{:.4}\t{:.4}", mean.interview_size, mean.rmse, mean.accuracy)?;
        for r in reports {
            rows.push(ResultRow::from_report(r, &name, set, &format!("fraction={f} {}", hyper.describe())));
        }
    }
    if let Some(out) = out {
        write_results(out, &rows)?;
    }
    Ok(())
}
