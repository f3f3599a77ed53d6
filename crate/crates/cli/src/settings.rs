//! Config file + flag resolution and dataset loading shared by all commands.

use std::fmt::Write as _;
use std::path::PathBuf;

use daso::dataset::{generate_synthetic, load_interactions, load_social, split};
use daso::trainer::parse_kv;
use daso::{DatasetSplit, IdMap, SocialGraph, SyntheticConfig, TrainConfig};

use crate::args::{DataArgs, FixtureArgs, HyperArgs};
use crate::CliError;

pub const SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone)]
pub enum Source {
    Files {
        interactions: PathBuf,
        social: Option<PathBuf>,
        threshold: f64,
    },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub train: TrainConfig,
    pub source: Source,
}

/// Data-side keys a config file may carry next to the hyperparameters.
#[derive(Debug, Default)]
struct DataKeys {
    data: DataArgs,
}

impl DataKeys {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        let d = &mut self.data;
        let f = &mut d.fixture;
        match key {
            "interactions" => d.interactions = Some(PathBuf::from(value)),
            "social" => d.social = Some(PathBuf::from(value)),
            "synthetic" => d.synthetic = parse(key, value)?,
            "threshold" => d.threshold = Some(parse(key, value)?),
            "users" => f.users = Some(parse(key, value)?),
            "items" => f.items = Some(parse(key, value)?),
            "communities" => f.communities = Some(parse(key, value)?),
            "affinity" => f.affinity = Some(parse(key, value)?),
            "noise" => f.noise = Some(parse(key, value)?),
            "social_within" => f.social_within = Some(parse(key, value)?),
            "social_across" => f.social_across = Some(parse(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("bad value {value:?} for {key}")))
}

fn merge<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

/// Fixture settings with `seed`; unset fields keep the defaults.
pub fn fixture_config(args: &FixtureArgs, seed: u64) -> SyntheticConfig {
    let d = SyntheticConfig::default();
    SyntheticConfig {
        num_users: args.users.unwrap_or(d.num_users),
        num_items: args.items.unwrap_or(d.num_items),
        num_communities: args.communities.unwrap_or(d.num_communities),
        affinity: args.affinity.unwrap_or(d.affinity),
        noise: args.noise.unwrap_or(d.noise),
        social_within: args.social_within.unwrap_or(d.social_within),
        social_across: args.social_across.unwrap_or(d.social_across),
        seed,
    }
}

pub fn resolve(data: &DataArgs, hyper: &HyperArgs) -> Result<Settings, CliError> {
    let mut train = TrainConfig::default();
    let mut file = DataKeys::default();
    if let Some(path) = &hyper.config {
        let text = std::fs::read_to_string(path).map_err(|e| daso::Error::io(path, e))?;
        for (k, v) in parse_kv(&text, path)? {
            let known = train
                .set(&k, &v)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if !known && !file.set(&k, &v)? {
                return Err(CliError::Usage(format!("{}: unknown key {k:?}", path.display())));
            }
        }
    }
    if let Some(v) = hyper.dim {
        train.dim = v;
    }
    if let Some(v) = hyper.lr {
        train.lr = v;
    }
    if let Some(v) = hyper.batch {
        train.batch = v;
    }
    if let Some(v) = hyper.lambda {
        train.lambda = v;
    }
    if let Some(v) = hyper.epochs {
        train.epochs = v;
    }
    if let Some(v) = hyper.seed {
        train.seed = v;
    }
    train.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let f = &file.data;
    let synthetic = if data.synthetic {
        if data.interactions.is_some() {
            return Err(CliError::Usage(
                "--synthetic and --interactions are mutually exclusive".to_owned(),
            ));
        }
        true
    } else {
        data.interactions.is_none() && f.synthetic
    };
    let interactions = merge(&data.interactions, &f.interactions);
    let social = merge(&data.social, &f.social);
    let source = match (synthetic, interactions) {
        (true, _) => {
            let fx = FixtureArgs {
                users: merge(&data.fixture.users, &f.fixture.users),
                items: merge(&data.fixture.items, &f.fixture.items),
                communities: merge(&data.fixture.communities, &f.fixture.communities),
                affinity: merge(&data.fixture.affinity, &f.fixture.affinity),
                noise: merge(&data.fixture.noise, &f.fixture.noise),
                social_within: merge(&data.fixture.social_within, &f.fixture.social_within),
                social_across: merge(&data.fixture.social_across, &f.fixture.social_across),
            };
            Source::Synthetic(fixture_config(&fx, train.seed))
        }
        (false, Some(interactions)) => Source::Files {
            interactions,
            social,
            threshold: merge(&data.threshold, &f.threshold).unwrap_or(0.0),
        },
        (false, None) => {
            return Err(CliError::Usage(
                "missing --interactions (or --synthetic)".to_owned(),
            ))
        }
    };
    Ok(Settings { train, source })
}

impl Settings {
    /// Everything needed to rebuild the same data and model, as a config file.
    pub fn to_config_text(&self) -> String {
        let mut out = self.train.to_kv();
        if self.train.hidden.is_none() {
            // keep the widths tied to `dim` when the file is reused with another --dim
            out = out
                .lines()
                .map(|l| if l.starts_with("hidden =") { "hidden = default".to_owned() } else { l.to_owned() })
                .collect::<Vec<_>>()
                .join("\n")
                + "\n";
        }
        match &self.source {
            Source::Files {
                interactions,
                social,
                threshold,
            } => {
                let _ = writeln!(out, "interactions = {}", interactions.display());
                if let Some(s) = social {
                    let _ = writeln!(out, "social = {}", s.display());
                }
                let _ = writeln!(out, "threshold = {threshold}");
            }
            Source::Synthetic(c) => {
                let _ = writeln!(out, "synthetic = true");
                for (k, v) in [
                    ("users", c.num_users.to_string()),
                    ("items", c.num_items.to_string()),
                    ("communities", c.num_communities.to_string()),
                    ("affinity", c.affinity.to_string()),
                    ("noise", c.noise.to_string()),
                    ("social_within", c.social_within.to_string()),
                    ("social_across", c.social_across.to_string()),
                ] {
                    let _ = writeln!(out, "{k} = {v}");
                }
            }
        }
        out
    }

    pub fn has_social(&self) -> bool {
        match &self.source {
            Source::Files { social, .. } => social.is_some(),
            Source::Synthetic(_) => true,
        }
    }
}

/// A split dataset with its external id maps.
pub struct Loaded {
    pub split: DatasetSplit,
    pub social: SocialGraph,
    pub users: IdMap,
    pub items: IdMap,
}

pub fn load(settings: &Settings) -> Result<Loaded, CliError> {
    let seed = settings.train.seed;
    let (set, social, users, items) = match &settings.source {
        Source::Synthetic(cfg) => {
            let syn = generate_synthetic(cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            let users = IdMap::identity(cfg.num_users);
            let items = IdMap::identity(cfg.num_items);
            (syn.interactions, syn.social, users, items)
        }
        Source::Files {
            interactions,
            social,
            threshold,
        } => {
            let loaded = load_interactions(interactions, *threshold)?;
            let graph = match social {
                Some(path) => load_social(path, &loaded.users, true)?.graph,
                None => SocialGraph::new(loaded.set.num_users(), Vec::new())?,
            };
            (loaded.set, graph, loaded.users, loaded.items)
        }
    };
    Ok(Loaded {
        split: split(&set, SPLIT, seed)?,
        social,
        users,
        items,
    })
}
