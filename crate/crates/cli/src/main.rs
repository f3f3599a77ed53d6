mod args;
mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use daso::baseline::{self, read_baseline, save_baseline, train_baseline, BaselineParams};
use daso::checkpoint::{read_checkpoint, save_checkpoint};
use daso::dataset::{generate_synthetic, write_interactions, write_social};
use daso::eval::{evaluate, recommend_topk};
use daso::{fit, MetricReport, ModelParams, Scorer, TrainData};

use args::{Cli, Command, EvalArgs, ModelArgs, RecommendArgs, SynthArgs, TrainArgs};
use settings::{fixture_config, load, resolve, Settings};

const REPORT_KS: [usize; 3] = [3, 5, 10];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] daso::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Run(daso::Error::UnknownId { .. }) => 2,
            CliError::Run(_) => 1,
        }
    }
}

enum Model {
    Daso(Box<ModelParams>),
    Baseline(BaselineParams),
}

impl Model {
    fn scorer(&self) -> &dyn Scorer {
        match self {
            Model::Daso(p) => p.as_ref(),
            Model::Baseline(p) => p,
        }
    }
}

/// Either file format, told apart by its magic bytes.
fn load_model(path: &Path) -> Result<Model, CliError> {
    let bytes = fs::read(path).map_err(|e| daso::Error::io(path, e))?;
    if bytes.starts_with(&baseline::MAGIC) {
        Ok(Model::Baseline(read_baseline(bytes.as_slice())?))
    } else {
        Ok(Model::Daso(Box::new(read_checkpoint(bytes.as_slice())?.0)))
    }
}

fn checkpoint_path(args: &ModelArgs) -> Result<PathBuf, CliError> {
    match (&args.checkpoint, &args.out) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(if args.baseline { "baseline.ckpt" } else { "model.ckpt" })),
        (None, None) => Err(CliError::Usage("missing --checkpoint (or --out)".to_owned())),
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| daso::Error::io(path, e).into())
}

fn report_text(report: &MetricReport) -> String {
    let mut text = report.to_string();
    for line in report.records() {
        text.push_str(&line);
        text.push('\n');
    }
    text
}

fn check_dims(model: &dyn Scorer, users: usize, items: usize) -> Result<(), CliError> {
    if model.num_users() != users || model.num_items() != items {
        return Err(daso::Error::Dimension(format!(
            "checkpoint covers {} users x {} items, data has {users} x {items}",
            model.num_users(),
            model.num_items()
        ))
        .into());
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let settings = resolve(&args.data, &args.hyper)?;
    if !args.baseline && !settings.has_social() {
        return Err(CliError::Usage("training needs --social (or --synthetic)".to_owned()));
    }
    let data = load(&settings)?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| daso::Error::io(out, e))?;
    write(&out.join("config.txt"), &settings.to_config_text())?;
    let split = &data.split;

    let (checkpoint, history, report) = if args.baseline {
        let fit = train_baseline(&split.train, &settings.train)?;
        let path = out.join("baseline.ckpt");
        save_baseline(&fit.params, &path)?;
        let mut history = String::from("epoch\tloss\n");
        for (i, l) in fit.epoch_losses.iter().enumerate() {
            history.push_str(&format!("{}\t{l}\n", i + 1));
        }
        let report = evaluate(&fit.params, &split.validation, &split.train, &REPORT_KS);
        (path, history, report)
    } else {
        let train_data = TrainData::new(split.train.clone(), split.validation.clone(), data.social.clone())?;
        let fit = fit(&settings.train, &train_data)?;
        let path = out.join("model.ckpt");
        save_checkpoint(&fit.params, &fit.state, &path)?;
        let report = evaluate(&fit.params, &split.validation, &split.train, &REPORT_KS);
        (path, fit.history.to_tsv(), report)
    };
    write(&out.join("history.tsv"), &history)?;
    let text = match report {
        Ok(r) => report_text(&r),
        Err(daso::Error::NoEvaluableUsers) => "no validation users\n".to_owned(),
        Err(e) => return Err(e.into()),
    };
    write(&out.join("validation.txt"), &text)?;
    print!("{text}");
    eprintln!("wrote {}", checkpoint.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    if args.k.is_empty() || args.k.contains(&0) {
        return Err(CliError::Usage("--k needs positive cutoffs".to_owned()));
    }
    let settings: Settings = resolve(&args.data, &args.hyper)?;
    let model = load_model(&checkpoint_path(&args.model)?)?;
    let data = load(&settings)?;
    let split = &data.split;
    check_dims(model.scorer(), split.test.num_users(), split.test.num_items())?;
    let report = evaluate(model.scorer(), &split.test, &split.train, &args.k)?;
    print!("{}", report_text(&report));
    Ok(())
}

fn recommend(args: RecommendArgs) -> Result<(), CliError> {
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".to_owned()));
    }
    let settings = resolve(&args.data, &args.hyper)?;
    let model = load_model(&checkpoint_path(&args.model)?)?;
    let data = load(&settings)?;
    let train = &data.split.train;
    check_dims(model.scorer(), train.num_users(), train.num_items())?;
    let Some(user) = data.users.get(&args.user) else {
        let n = data.users.len();
        let range = match (data.users.external(0), n.checked_sub(1).and_then(|i| data.users.external(i))) {
            (Some(a), Some(b)) => format!("{n} ids, {a} .. {b}"),
            _ => "none".to_owned(),
        };
        return Err(daso::Error::UnknownId {
            kind: "user",
            id: args.user,
            range,
        }
        .into());
    };
    let seen = &train.items_by_user()[user];
    let ranked = recommend_topk(model.scorer(), user, args.k, seen)?;
    println!("rank\titem\tscore");
    for (r, (&item, score)) in ranked.items.iter().zip(&ranked.scores).enumerate() {
        let id = data.items.external(item).unwrap_or("?");
        println!("{}\t{id}\t{score:.6}", r + 1);
    }
    if ranked.short {
        eprintln!("only {} unseen items available", ranked.items.len());
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = fixture_config(&args.fixture, args.seed);
    let syn = generate_synthetic(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| daso::Error::io(out, e))?;
    let (ratings, trust) = (out.join("ratings.tsv"), out.join("trust.tsv"));
    write_interactions(&syn.interactions, &ratings)?;
    write_social(&syn.social, &trust)?;
    println!("{} interactions -> {}", syn.interactions.len(), ratings.display());
    println!("{} ties -> {}", syn.social.len() / 2, trust.display());
    Ok(())
}

/// Applies `DASO_THREADS` to the global evaluation pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DASO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("DASO_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Recommend(a) => recommend(a),
        Command::Synth(a) => synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
