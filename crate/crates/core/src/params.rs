//! Trainable parameters: the six representation tables, the four bias
//! vectors and the two cross-domain mapping networks.
//!
//! All values are stored as `f64` but kept exactly representable in `f32`
//! (initialization draws in `f32`; the optimizer rounds after each update),
//! which is what makes single-precision checkpoints lossless.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense row-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} table",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Fully connected network `W_L·(… relu(W_1·x + b_1) …) + b_L`.
///
/// Parameters are one flat buffer; layer `l` stores its `out x in` weight
/// matrix row-major followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingNet {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer outputs of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `layers[0]` is the input, `layers[l]` the (post-activation) output of layer `l`.
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace has an input layer")
    }
}

impl MappingNet {
    /// A zero network with layer widths `dims` (input first, output last).
    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "mapping layer widths must be non-zero with at least one layer, got {dims:?}"
            )));
        }
        let len = Self::param_count_for(&dims);
        Ok(MappingNet {
            dims,
            params: vec![0.0; len],
        })
    }

    pub fn param_count_for(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        Self::param_count_for(&self.dims[..=layer])
    }

    /// Weight matrix and bias of `layer`.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.layer_offset(layer);
        let (w, rest) = self.params[start..].split_at(fan_in * fan_out);
        (w, &rest[..fan_out])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.layer_offset(layer);
        let (w, rest) = self.params[start..].split_at_mut(fan_in * fan_out);
        (w, &mut rest[..fan_out])
    }

    pub fn forward(&self, input: &[f64]) -> Trace {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut layers = Vec::with_capacity(self.dims.len());
        layers.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let x = &layers[l];
            let fan_in = x.len();
            let out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, &bias)| {
                    let z = bias + crate::math::dot(&w[o * fan_in..(o + 1) * fan_in], x);
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            layers.push(out);
        }
        Trace { layers }
    }

    /// Backpropagates `grad_output` through a recorded pass. Parameter
    /// gradients are added into `grad_params`; the input gradient is returned.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad_params.len(), self.params.len());
        let mut delta = grad_output.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            if l + 1 < self.num_layers() {
                // ReLU: output > 0 exactly where pre-activation > 0
                for (d, &y) in delta.iter_mut().zip(&trace.layers[l + 1]) {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.layers[l];
            let start = self.layer_offset(l);
            let (gw, rest) = grad_params[start..].split_at_mut(fan_in * fan_out);
            let gb = &mut rest[..fan_out];
            let (w, _) = self.layer(l);
            let mut next = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                crate::math::axpy(&mut gw[o * fan_in..(o + 1) * fan_in], d, x);
                crate::math::axpy(&mut next, d, &w[o * fan_in..(o + 1) * fan_in]);
            }
            delta = next;
        }
        delta
    }
}

/// Parameter groups in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    /// Item-domain generator user table (p^I).
    GenUserItem,
    /// Generator item table (q^I).
    GenItem,
    /// Item-domain discriminator user table (x^I).
    DiscUserItem,
    /// Discriminator item table (y^I).
    DiscItem,
    /// Social-domain generator user table (p^S).
    GenUserSocial,
    /// Social-domain discriminator user table (x^S).
    DiscUserSocial,
    /// Discriminator item bias (a).
    DiscItemBias,
    /// Generator item bias (b).
    GenItemBias,
    DiscSocialBias,
    GenSocialBias,
    /// Social -> item mapping network.
    SocialToItem,
    /// Item -> social mapping network.
    ItemToSocial,
}

impl Group {
    pub const ALL: [Group; 12] = [
        Group::GenUserItem,
        Group::GenItem,
        Group::DiscUserItem,
        Group::DiscItem,
        Group::GenUserSocial,
        Group::DiscUserSocial,
        Group::DiscItemBias,
        Group::GenItemBias,
        Group::DiscSocialBias,
        Group::GenSocialBias,
        Group::SocialToItem,
        Group::ItemToSocial,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::GenUserItem => "gen_user_item",
            Group::GenItem => "gen_item",
            Group::DiscUserItem => "disc_user_item",
            Group::DiscItem => "disc_item",
            Group::GenUserSocial => "gen_user_social",
            Group::DiscUserSocial => "disc_user_social",
            Group::DiscItemBias => "disc_item_bias",
            Group::GenItemBias => "gen_item_bias",
            Group::DiscSocialBias => "disc_social_bias",
            Group::GenSocialBias => "gen_social_bias",
            Group::SocialToItem => "social_to_item",
            Group::ItemToSocial => "item_to_social",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gen_user_item: Matrix,
    pub gen_item: Matrix,
    pub disc_user_item: Matrix,
    pub disc_item: Matrix,
    pub gen_user_social: Matrix,
    pub disc_user_social: Matrix,
    pub disc_item_bias: Vec<f64>,
    pub gen_item_bias: Vec<f64>,
    pub disc_social_bias: Vec<f64>,
    pub gen_social_bias: Vec<f64>,
    pub social_to_item: MappingNet,
    pub item_to_social: MappingNet,
}

/// Sizes that fully determine the parameter shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub hidden: Vec<usize>,
}

impl Shape {
    pub fn mapping_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.dim);
        dims
    }

    /// Number of scalars in a model of this shape.
    pub fn param_count(&self) -> usize {
        let (n, m, d) = (self.num_users, self.num_items, self.dim);
        4 * n * d + 2 * m * d + 2 * m + 2 * n + 2 * MappingNet::param_count_for(&self.mapping_dims())
    }
}

/// Default hidden widths: three layers of `2d`.
pub fn default_hidden(dim: usize) -> Vec<usize> {
    vec![2 * dim; 3]
}

impl ModelParams {
    pub fn zeros(shape: &Shape) -> Result<Self> {
        let Shape {
            num_users: n,
            num_items: m,
            dim: d,
            ..
        } = *shape;
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be non-zero (users={n}, items={m}, dim={d})"
            )));
        }
        let net = MappingNet::zeros(shape.mapping_dims())?;
        Ok(ModelParams {
            gen_user_item: Matrix::zeros(n, d),
            gen_item: Matrix::zeros(m, d),
            disc_user_item: Matrix::zeros(n, d),
            disc_item: Matrix::zeros(m, d),
            gen_user_social: Matrix::zeros(n, d),
            disc_user_social: Matrix::zeros(n, d),
            disc_item_bias: vec![0.0; m],
            gen_item_bias: vec![0.0; m],
            disc_social_bias: vec![0.0; n],
            gen_social_bias: vec![0.0; n],
            social_to_item: net.clone(),
            item_to_social: net,
        })
    }

    pub fn shape(&self) -> Shape {
        let dims = self.social_to_item.dims();
        Shape {
            num_users: self.num_users(),
            num_items: self.num_items(),
            dim: self.dim(),
            hidden: dims[1..dims.len() - 1].to_vec(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.gen_user_item.rows()
    }

    pub fn num_items(&self) -> usize {
        self.gen_item.rows()
    }

    pub fn dim(&self) -> usize {
        self.gen_user_item.cols()
    }

    pub fn group(&self, g: Group) -> &[f64] {
        match g {
            Group::GenUserItem => self.gen_user_item.as_slice(),
            Group::GenItem => self.gen_item.as_slice(),
            Group::DiscUserItem => self.disc_user_item.as_slice(),
            Group::DiscItem => self.disc_item.as_slice(),
            Group::GenUserSocial => self.gen_user_social.as_slice(),
            Group::DiscUserSocial => self.disc_user_social.as_slice(),
            Group::DiscItemBias => &self.disc_item_bias,
            Group::GenItemBias => &self.gen_item_bias,
            Group::DiscSocialBias => &self.disc_social_bias,
            Group::GenSocialBias => &self.gen_social_bias,
            Group::SocialToItem => self.social_to_item.params(),
            Group::ItemToSocial => self.item_to_social.params(),
        }
    }

    pub fn group_mut(&mut self, g: Group) -> &mut [f64] {
        match g {
            Group::GenUserItem => self.gen_user_item.as_mut_slice(),
            Group::GenItem => self.gen_item.as_mut_slice(),
            Group::DiscUserItem => self.disc_user_item.as_mut_slice(),
            Group::DiscItem => self.disc_item.as_mut_slice(),
            Group::GenUserSocial => self.gen_user_social.as_mut_slice(),
            Group::DiscUserSocial => self.disc_user_social.as_mut_slice(),
            Group::DiscItemBias => &mut self.disc_item_bias,
            Group::GenItemBias => &mut self.gen_item_bias,
            Group::DiscSocialBias => &mut self.disc_social_bias,
            Group::GenSocialBias => &mut self.gen_social_bias,
            Group::SocialToItem => self.social_to_item.params_mut(),
            Group::ItemToSocial => self.item_to_social.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        Group::ALL.iter().map(|&g| self.group(g).len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        Group::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|v| v.is_finite()))
    }
}

/// Random initialization: embeddings uniform on (-0.05, 0.05), mapping
/// weights uniform on ±sqrt(6 / (fan_in + fan_out)), all biases zero.
pub fn init_model(shape: &Shape, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed = Uniform::new(-0.05f32, 0.05f32).expect("valid range");
    for g in [
        Group::GenUserItem,
        Group::GenItem,
        Group::DiscUserItem,
        Group::DiscItem,
        Group::GenUserSocial,
        Group::DiscUserSocial,
    ] {
        for v in params.group_mut(g) {
            *v = embed.sample(&mut rng) as f64;
        }
    }
    for net in [&mut params.social_to_item, &mut params.item_to_social] {
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.dims()[l], net.dims()[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
            let (w, _) = net.layer_mut(l);
            for v in w {
                *v = dist.sample(&mut rng) as f64;
            }
        }
    }
    Ok(params)
}

/// Sparse-by-group gradient buffer. Groups never touched stay unallocated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    slots: [Option<Vec<f64>>; 12],
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero-initialized buffer for `g`, allocated on first use.
    pub fn slot(&mut self, g: Group, params: &ModelParams) -> &mut [f64] {
        let len = params.group(g).len();
        self.slots[g.index()].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn get(&self, g: Group) -> Option<&[f64]> {
        self.slots[g.index()].as_deref()
    }

    pub fn groups(&self) -> impl Iterator<Item = (Group, &[f64])> + '_ {
        Group::ALL
            .iter()
            .filter_map(move |&g| self.get(g).map(|v| (g, v)))
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.slots.iter_mut().flatten() {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Adds `factor * other` group-wise.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            if let Some(theirs) = theirs {
                let mine = mine.get_or_insert_with(|| vec![0.0; theirs.len()]);
                crate::math::axpy(mine, factor, theirs);
            }
        }
    }

    /// Drops every group not in `keep`.
    pub fn retain(&mut self, keep: &[Group]) {
        for g in Group::ALL {
            if !keep.contains(&g) {
                self.slots[g.index()] = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: usize, m: usize, d: usize) -> Shape {
        Shape {
            num_users: n,
            num_items: m,
            dim: d,
            hidden: default_hidden(d),
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let s = shape(7, 11, 16);
        assert_eq!(init_model(&s, 3).unwrap(), init_model(&s, 3).unwrap());
        assert_ne!(init_model(&s, 3).unwrap(), init_model(&s, 4).unwrap());
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(init_model(&shape(0, 3, 4), 0).is_err());
        assert!(init_model(&shape(3, 0, 4), 0).is_err());
        assert!(init_model(&shape(3, 3, 0), 0).is_err());
    }

    #[test]
    fn param_count_matches_shape_walk() {
        let s = Shape {
            num_users: 9,
            num_items: 13,
            dim: 4,
            hidden: vec![5, 7, 3],
        };
        let p = init_model(&s, 0).unwrap();
        // layers 4->5->7->3->4, twice
        let net = (4 * 5 + 5) + (5 * 7 + 7) + (7 * 3 + 3) + (3 * 4 + 4);
        let walk = 4 * 9 * 4 + 2 * 13 * 4 + 2 * 13 + 2 * 9 + 2 * net;
        assert_eq!(p.param_count(), walk);
        assert_eq!(s.param_count(), walk);
        assert_eq!(p.shape(), s);
        assert_eq!(p.social_to_item.num_layers(), 4);
    }

    #[test]
    fn embeddings_uniform_chi_square() {
        // 10^5 draws: gen_item of 6250 x 16
        let p = init_model(&shape(1, 6250, 16), 21).unwrap();
        let values = p.gen_item.as_slice();
        assert_eq!(values.len(), 100_000);
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for &v in values {
            assert!(v > -0.05 && v < 0.05);
            counts[(((v + 0.05) / 0.1) * bins as f64) as usize] += 1;
        }
        let expected = values.len() as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square 19 dof, 0.999 quantile
        assert!(chi2 < 43.82, "chi2={chi2}");
    }

    #[test]
    fn mapping_weights_fan_balanced_biases_zero() {
        let p = init_model(&shape(2, 2, 4), 1).unwrap();
        let net = &p.social_to_item;
        for l in 0..net.num_layers() {
            let (w, b) = net.layer(l);
            let limit = (6.0 / (net.dims()[l] + net.dims()[l + 1]) as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= limit + 1e-7));
            assert!(b.iter().all(|&v| v == 0.0));
        }
        assert!(p.disc_item_bias.iter().all(|&v| v == 0.0));
        assert!(p.all_finite());
        assert!(Group::ALL
            .iter()
            .all(|&g| p.group(g).iter().all(|&v| v as f32 as f64 == v)));
    }

    #[test]
    fn gradients_accumulate_by_group() {
        let p = init_model(&shape(2, 3, 2), 0).unwrap();
        let mut a = Gradients::new();
        a.slot(Group::GenItemBias, &p)[1] = 2.0;
        let mut b = Gradients::new();
        b.add_scaled(&a, 0.5);
        assert_eq!(b.get(Group::GenItemBias).unwrap(), &[0.0, 1.0, 0.0]);
        assert!(b.get(Group::GenItem).is_none());
        b.retain(&[Group::GenItem]);
        assert_eq!(b.groups().count(), 0);
    }
}
