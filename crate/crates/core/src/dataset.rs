//! Implicit-feedback interactions, the user-user social graph, splitting and
//! a planted-community synthetic generator.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Binary user-item feedback: every stored pair is an observed interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    num_users: usize,
    num_items: usize,
    pairs: Vec<(usize, usize)>,
}

impl InteractionSet {
    /// Builds a set, dropping duplicate pairs. Out-of-range indices are an error.
    pub fn new(num_users: usize, num_items: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut kept = Vec::with_capacity(pairs.len());
        for (u, i) in pairs {
            if u >= num_users || i >= num_items {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {i}) outside {num_users} users x {num_items} items"
                )));
            }
            if seen.insert((u, i)) {
                kept.push((u, i));
            }
        }
        Ok(InteractionSet {
            num_users,
            num_items,
            pairs: kept,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Items of every user, sorted ascending.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users];
        for &(u, i) in &self.pairs {
            out[u].push(i);
        }
        for items in &mut out {
            items.sort_unstable();
        }
        out
    }
}

/// User-user relations. Stored as directed edges; loaders symmetrize by default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    num_users: usize,
    edges: Vec<(usize, usize)>,
}

impl SocialGraph {
    /// Builds a graph from directed edges. Self-loops and out-of-range ids are
    /// rejected; duplicates are collapsed.
    pub fn new(num_users: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut kept = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= num_users || b >= num_users {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) outside {num_users} users"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on user {a}")));
            }
            if seen.insert((a, b)) {
                kept.push((a, b));
            }
        }
        Ok(SocialGraph {
            num_users,
            edges: kept,
        })
    }

    /// Builds a graph containing both directions of every given edge.
    pub fn undirected(num_users: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let both = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        Self::new(num_users, both)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        let set: HashSet<_> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(a, b)| set.contains(&(b, a)))
    }

    /// Neighbours of every user, sorted ascending.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        for n in &mut out {
            n.sort_unstable();
        }
        out
    }
}

/// Dense re-indexing of external string ids, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Identity map `"0"`, `"1"`, ... used for synthetic data.
    pub fn identity(n: usize) -> Self {
        let mut map = Self::new();
        for i in 0..n {
            map.intern(&i.to_string());
        }
        map
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Result of reading an interaction file.
#[derive(Debug, Clone)]
pub struct LoadedInteractions {
    pub set: InteractionSet,
    pub users: IdMap,
    pub items: IdMap,
}

/// Result of reading a trust file.
#[derive(Debug, Clone)]
pub struct LoadedSocial {
    pub graph: SocialGraph,
    /// Relations with at least one endpoint missing from the user map.
    pub dropped_unknown: usize,
    pub dropped_self_loops: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads `user item rating` lines. Ratings at or above `threshold` become
/// implicit interactions; everything else is skipped.
pub fn load_interactions(path: impl AsRef<Path>, threshold: f64) -> Result<LoadedInteractions> {
    let path = path.as_ref();
    read_interactions(open(path)?, path, threshold)
}

pub fn read_interactions<R: BufRead>(
    reader: R,
    source: &Path,
    threshold: f64,
) -> Result<LoadedInteractions> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rating threshold must be >= 0, got {threshold}"
        )));
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: source.to_owned(),
        line,
        msg,
    };

    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut pairs = Vec::new();
    let mut records = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(user), Some(item), Some(rating)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err(
                lineno + 1,
                "expected `user item rating`".to_owned(),
            ));
        };
        if fields.next().is_some() {
            return Err(parse_err(lineno + 1, "trailing fields".to_owned()));
        }
        let rating: f64 = rating
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("bad rating {rating:?}")))?;
        records += 1;
        if rating >= threshold {
            pairs.push((users.intern(user), items.intern(item)));
        }
    }
    if records == 0 || pairs.is_empty() {
        return Err(Error::EmptyInput(source.to_owned()));
    }
    let set = InteractionSet::new(users.len(), items.len(), pairs)?;
    Ok(LoadedInteractions { set, users, items })
}

/// Reads `user user [weight]` lines. Edges are symmetrized when `symmetrize` is set.
pub fn load_social(
    path: impl AsRef<Path>,
    users: &IdMap,
    symmetrize: bool,
) -> Result<LoadedSocial> {
    let path = path.as_ref();
    read_social(open(path)?, path, users, symmetrize)
}

pub fn read_social<R: BufRead>(
    reader: R,
    source: &Path,
    users: &IdMap,
    symmetrize: bool,
) -> Result<LoadedSocial> {
    let mut edges = Vec::new();
    let mut dropped_unknown = 0;
    let mut dropped_self_loops = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: lineno + 1,
                msg: "expected `user user [weight]`".to_owned(),
            });
        }
        if let Some(w) = fields.get(2) {
            w.parse::<f64>().map_err(|_| Error::Parse {
                path: source.to_owned(),
                line: lineno + 1,
                msg: format!("bad weight {w:?}"),
            })?;
        }
        match (users.get(fields[0]), users.get(fields[1])) {
            (Some(a), Some(b)) if a == b => dropped_self_loops += 1,
            (Some(a), Some(b)) => {
                edges.push((a, b));
                if symmetrize {
                    edges.push((b, a));
                }
            }
            _ => dropped_unknown += 1,
        }
    }
    Ok(LoadedSocial {
        graph: SocialGraph::new(users.len(), edges)?,
        dropped_unknown,
        dropped_self_loops,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
}

/// Largest-remainder allocation of `n` items to the given ratios.
pub(crate) fn allocate(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    // stable sort keeps the lower index first on equal remainders
    order.sort_by(|&a, &b| {
        let fa = exact[a] - sizes[a] as f64;
        let fb = exact[b] - sizes[b] as f64;
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    sizes
}

/// Uniformly random global split of the pairs into train/validation/test.
pub fn split(set: &InteractionSet, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }
    let mut pairs = set.pairs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let sizes = allocate(pairs.len(), &ratios);
    let test = pairs.split_off(sizes[0] + sizes[1]);
    let validation = pairs.split_off(sizes[0]);
    let mk = |pairs| InteractionSet {
        num_users: set.num_users,
        num_items: set.num_items,
        pairs,
    };
    Ok(DatasetSplit {
        train: mk(pairs),
        validation: mk(validation),
        test: mk(test),
    })
}

/// Parameters of the planted-community fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_communities: usize,
    /// Probability that a user interacts with an item of its community's block.
    pub affinity: f64,
    /// Probability of interacting with an item outside the block.
    pub noise: f64,
    /// Probability of a social tie between two users of the same community.
    pub social_within: f64,
    /// Probability of a social tie across communities.
    pub social_across: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 500,
            num_items: 1000,
            num_communities: 5,
            affinity: 0.3,
            noise: 0.02,
            social_within: 0.1,
            social_across: 0.002,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: InteractionSet,
    pub social: SocialGraph,
    /// Community of every user.
    pub communities: Vec<usize>,
}

impl SyntheticConfig {
    /// Community owning user `u` (contiguous, balanced blocks).
    pub fn user_community(&self, u: usize) -> usize {
        u * self.num_communities / self.num_users
    }

    /// Community whose preferred block contains item `i`.
    pub fn item_community(&self, i: usize) -> usize {
        i * self.num_communities / self.num_items
    }

    fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.num_communities == 0 {
            return Err(Error::InvalidArgument(
                "synthetic sizes must be non-zero".to_owned(),
            ));
        }
        if self.num_communities > self.num_users.min(self.num_items) {
            return Err(Error::InvalidArgument(format!(
                "{} communities do not fit {} users / {} items",
                self.num_communities, self.num_users, self.num_items
            )));
        }
        if !(0.0 <= self.noise && self.noise < self.affinity && self.affinity <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= noise < affinity <= 1, got noise={} affinity={}",
                self.noise, self.affinity
            )));
        }
        for p in [self.social_within, self.social_across] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "social tie probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let communities: Vec<usize> = (0..cfg.num_users).map(|u| cfg.user_community(u)).collect();

    let mut pairs = Vec::new();
    for (u, &c) in communities.iter().enumerate() {
        for i in 0..cfg.num_items {
            let p = if cfg.item_community(i) == c {
                cfg.affinity
            } else {
                cfg.noise
            };
            if rng.random::<f64>() < p {
                pairs.push((u, i));
            }
        }
    }

    let mut ties = Vec::new();
    for a in 0..cfg.num_users {
        for b in a + 1..cfg.num_users {
            let p = if communities[a] == communities[b] {
                cfg.social_within
            } else {
                cfg.social_across
            };
            if rng.random::<f64>() < p {
                ties.push((a, b));
            }
        }
    }

    Ok(SyntheticData {
        interactions: InteractionSet::new(cfg.num_users, cfg.num_items, pairs)?,
        social: SocialGraph::undirected(cfg.num_users, &ties)?,
        communities,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `user item 1` lines using index ids.
pub fn write_interactions(set: &InteractionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    for &(u, i) in &set.pairs {
        writeln!(out, "{u}\t{i}\t1").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes each undirected tie once (`a < b`), or every edge if the graph is not symmetric.
pub fn write_social(graph: &SocialGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    let symmetric = graph.is_symmetric();
    for &(a, b) in &graph.edges {
        if !symmetric || a < b {
            writeln!(out, "{a}\t{b}").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
