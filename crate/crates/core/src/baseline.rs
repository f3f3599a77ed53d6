//! Negative-sampling matrix factorization: pointwise sigmoid cross-entropy
//! on observed pairs and one uniformly sampled unobserved item per pair.
//! Shares the optimizer, initialization scale and evaluation path with the
//! adversarial model so the two can be compared at matched settings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Reader, Writer};
use crate::dataset::InteractionSet;
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricReport, Scorer};
use crate::math::{axpy, dot, sigmoid, softplus};
use crate::optim::{update, RmsProp};
use crate::params::Matrix;
use crate::trainer::TrainConfig;

pub const MAGIC: [u8; 4] = *b"DSBL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub users: Matrix,
    pub items: Matrix,
    pub item_bias: Vec<f64>,
}

impl BaselineParams {
    pub fn init(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<Self> {
        if num_users == 0 || num_items == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "baseline dimensions must be non-zero".to_owned(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-0.05f32, 0.05f32).expect("valid range");
        let mut table = |rows| {
            let data = (0..rows * dim).map(|_| dist.sample(&mut rng) as f64).collect();
            Matrix::from_vec(rows, dim, data)
        };
        Ok(BaselineParams {
            users: table(num_users)?,
            items: table(num_items)?,
            item_bias: vec![0.0; num_items],
        })
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item)) + self.item_bias[item]
    }

    pub fn all_finite(&self) -> bool {
        self.users
            .as_slice()
            .iter()
            .chain(self.items.as_slice())
            .chain(&self.item_bias)
            .all(|v| v.is_finite())
    }
}

impl Scorer for BaselineParams {
    fn num_users(&self) -> usize {
        self.users.rows()
    }

    fn num_items(&self) -> usize {
        self.items.rows()
    }

    fn score_items(&self, user: usize, out: &mut [f64]) {
        let u = self.users.row(user);
        for (j, s) in out.iter_mut().enumerate() {
            *s = dot(u, self.items.row(j)) + self.item_bias[j];
        }
    }
}

/// Draws an item `user` has not interacted with; gives up after a bounded
/// number of rejections and returns the last draw.
fn sample_negative<R: Rng>(rng: &mut R, num_items: usize, seen: &[usize]) -> usize {
    let mut item = rng.random_range(0..num_items);
    for _ in 0..64 {
        if seen.binary_search(&item).is_err() {
            break;
        }
        item = rng.random_range(0..num_items);
    }
    item
}

/// Mean per-pair loss of each epoch plus the final parameters.
#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub params: BaselineParams,
    pub epoch_losses: Vec<f64>,
}

/// Trains with `config.dim`, `lr`, `rho`, `eps`, `batch`, `epochs` and `seed`.
pub fn train_baseline(train: &InteractionSet, config: &TrainConfig) -> Result<BaselineFit> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".to_owned()));
    }
    if config.batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".to_owned()));
    }
    let mut params = BaselineParams::init(train.num_users(), train.num_items(), config.dim, config.seed)?;
    let opt = RmsProp {
        lr: config.lr,
        rho: config.rho,
        eps: config.eps,
    };
    let d = config.dim;
    let seen = train.items_by_user();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xba5e_11e0_0000_0001);
    let mut acc_users = vec![0.0; params.users.as_slice().len()];
    let mut acc_items = vec![0.0; params.items.as_slice().len()];
    let mut acc_bias = vec![0.0; params.item_bias.len()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    let mut pairs = train.pairs().to_vec();
    for _ in 0..config.epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pairs.chunks(config.batch) {
            let mut g_users = vec![0.0; acc_users.len()];
            let mut g_items = vec![0.0; acc_items.len()];
            let mut g_bias = vec![0.0; acc_bias.len()];
            for &(u, pos) in batch {
                let neg = sample_negative(&mut rng, train.num_items(), &seen[u]);
                for (item, label) in [(pos, true), (neg, false)] {
                    let f = params.score(u, item);
                    let df = if label {
                        total += softplus(-f);
                        -sigmoid(-f)
                    } else {
                        total += softplus(f);
                        sigmoid(f)
                    };
                    axpy(&mut g_users[u * d..(u + 1) * d], df, params.items.row(item));
                    axpy(&mut g_items[item * d..(item + 1) * d], df, params.users.row(u));
                    g_bias[item] += df;
                }
            }
            update(params.users.as_mut_slice(), &mut acc_users, &g_users, opt, "baseline_users")?;
            update(params.items.as_mut_slice(), &mut acc_items, &g_items, opt, "baseline_items")?;
            update(&mut params.item_bias, &mut acc_bias, &g_bias, opt, "baseline_item_bias")?;
        }
        epoch_losses.push(total / (2 * pairs.len()) as f64);
    }
    Ok(BaselineFit {
        params,
        epoch_losses,
    })
}

/// Same contract as [`crate::eval::evaluate`], scoring with `u·v + b`.
pub fn evaluate_baseline(
    params: &BaselineParams,
    test: &InteractionSet,
    train: &InteractionSet,
    ks: &[usize],
) -> Result<MetricReport> {
    evaluate(params, test, train, ks)
}

pub fn write_baseline<W: Write>(params: &BaselineParams, out: W) -> std::io::Result<W> {
    let mut w = Writer::new(out);
    w.bytes(&MAGIC)?;
    w.bytes(&VERSION.to_le_bytes())?;
    w.u32(params.users.rows())?;
    w.u32(params.items.rows())?;
    w.u32(params.users.cols())?;
    w.f32s(params.users.as_slice())?;
    w.f32s(params.items.as_slice())?;
    w.f32s(&params.item_bias)?;
    w.finish()
}

pub fn read_baseline<R: Read>(input: R) -> Result<BaselineParams> {
    let mut r = Reader::new(input);
    let magic = r.magic()?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let (n, m, d) = (r.u32("user count")?, r.u32("item count")?, r.u32("dimension")?);
    let mut users = Matrix::zeros(n, d);
    let mut items = Matrix::zeros(m, d);
    let mut item_bias = vec![0.0; m];
    r.f32s_into(users.as_mut_slice(), "users")?;
    r.f32s_into(items.as_mut_slice(), "items")?;
    r.f32s_into(&mut item_bias, "item bias")?;
    r.end()?;
    Ok(BaselineParams {
        users,
        items,
        item_bias,
    })
}

pub fn save_baseline(params: &BaselineParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_baseline(params, BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineParams> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_baseline(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> InteractionSet {
        InteractionSet::new(4, 6, vec![(0, 0), (0, 1), (1, 1), (2, 3), (3, 4), (3, 5)]).unwrap()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            dim: 4,
            epochs,
            batch: 2,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let fit = train_baseline(&toy(), &config(0)).unwrap();
        assert_eq!(fit.params, BaselineParams::init(4, 6, 4, 3).unwrap());
    }

    #[test]
    fn seed_deterministic_and_loss_falls() {
        let a = train_baseline(&toy(), &config(40)).unwrap();
        let b = train_baseline(&toy(), &config(40)).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.params.all_finite());
        assert!(a.epoch_losses.last().unwrap() < &a.epoch_losses[0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = train_baseline(&toy(), &config(3)).unwrap().params;
        let bytes = write_baseline(&p, Vec::new()).unwrap();
        assert_eq!(read_baseline(bytes.as_slice()).unwrap(), p);
        assert!(matches!(
            read_baseline(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn negatives_avoid_seen_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let n = sample_negative(&mut rng, 5, &[0, 1, 3]);
            assert!(n == 2 || n == 4);
        }
    }
}
