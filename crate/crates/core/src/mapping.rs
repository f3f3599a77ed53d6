//! Cross-domain user mappings and the cycle-reconstruction loss.

use crate::error::{Error, Result};
use crate::math::norm;
use crate::params::{Gradients, Group, MappingNet, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    SocialToItem,
    ItemToSocial,
}

/// A user representation transferred into the other domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedRep {
    pub values: Vec<f64>,
    pub direction: Direction,
}

fn map_checked(input: &[f64], net: &MappingNet, direction: Direction) -> Result<MappedRep> {
    if input.len() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "mapping input has width {}, network expects {}",
            input.len(),
            net.input_dim()
        )));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mapping input".to_owned()));
    }
    Ok(MappedRep {
        values: net.forward(input).output().to_vec(),
        direction,
    })
}

/// Social-domain user representation -> item domain.
pub fn map_s_to_i(social_rep: &[f64], net: &MappingNet) -> Result<MappedRep> {
    map_checked(social_rep, net, Direction::SocialToItem)
}

/// Item-domain user representation -> social domain.
pub fn map_i_to_s(item_rep: &[f64], net: &MappingNet) -> Result<MappedRep> {
    map_checked(item_rep, net, Direction::ItemToSocial)
}

#[derive(Debug, Clone)]
pub struct CycleLoss {
    pub loss: f64,
    /// Gradients for both user tables and both mapping networks.
    pub grads: Gradients,
}

/// Sum over the batch of `‖h_si(h_is(p_i)) - p_i‖ + ‖h_is(h_si(p_s)) - p_s‖`
/// (unsquared norms) with its gradient. A zero residual contributes a zero
/// subgradient.
pub fn cycle_loss(users: &[usize], params: &ModelParams) -> Result<CycleLoss> {
    if users.is_empty() {
        return Err(Error::InvalidArgument("empty cycle-loss batch".to_owned()));
    }
    let d = params.dim();
    let mut grads = Gradients::new();
    let mut g_si = vec![0.0; params.social_to_item.params().len()];
    let mut g_is = vec![0.0; params.item_to_social.params().len()];
    let mut g_item_users = vec![0.0; params.num_users() * d];
    let mut g_social_users = vec![0.0; params.num_users() * d];
    let mut loss = 0.0;

    for &u in users {
        // item -> social -> item
        let (l, g) = round_trip(
            params.gen_user_item.row(u),
            &params.item_to_social,
            &params.social_to_item,
            &mut g_is,
            &mut g_si,
        );
        loss += l;
        add_row(&mut g_item_users, u, &g);

        // social -> item -> social
        let (l, g) = round_trip(
            params.gen_user_social.row(u),
            &params.social_to_item,
            &params.item_to_social,
            &mut g_si,
            &mut g_is,
        );
        loss += l;
        add_row(&mut g_social_users, u, &g);
    }

    grads.slot(Group::SocialToItem, params).copy_from_slice(&g_si);
    grads.slot(Group::ItemToSocial, params).copy_from_slice(&g_is);
    grads.slot(Group::GenUserItem, params).copy_from_slice(&g_item_users);
    grads.slot(Group::GenUserSocial, params).copy_from_slice(&g_social_users);
    Ok(CycleLoss { loss, grads })
}

fn add_row(table: &mut [f64], row: usize, g: &[f64]) {
    let d = g.len();
    crate::math::axpy(&mut table[row * d..(row + 1) * d], 1.0, g);
}

/// `‖second(first(x)) - x‖` and its gradient with respect to `x`; network
/// gradients accumulate into the given buffers.
fn round_trip(
    x: &[f64],
    first: &MappingNet,
    second: &MappingNet,
    g_first: &mut [f64],
    g_second: &mut [f64],
) -> (f64, Vec<f64>) {
    let t1 = first.forward(x);
    let t2 = second.forward(t1.output());
    let residual: Vec<f64> = t2.output().iter().zip(x).map(|(y, x)| y - x).collect();
    let len = norm(&residual);
    if len == 0.0 {
        return (0.0, vec![0.0; x.len()]);
    }
    let unit: Vec<f64> = residual.iter().map(|r| r / len).collect();
    let g_mid = second.backward(&t2, &unit, g_second);
    let mut g_x = first.backward(&t1, &g_mid, g_first);
    for (g, u) in g_x.iter_mut().zip(&unit) {
        *g -= u;
    }
    (len, g_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_model, Matrix, Shape};

    fn one_layer(d: usize, w: &[f64]) -> MappingNet {
        let mut net = MappingNet::zeros(vec![d, d]).unwrap();
        net.layer_mut(0).0.copy_from_slice(w);
        net
    }

    #[allow(clippy::needless_range_loop)]
    fn identity_net(d: usize, hidden: &[usize]) -> MappingNet {
        let mut dims = vec![d];
        dims.extend_from_slice(hidden);
        dims.push(d);
        let mut net = MappingNet::zeros(dims.clone()).unwrap();
        for l in 0..net.num_layers() {
            let fan_in = dims[l];
            let (w, _) = net.layer_mut(l);
            for k in 0..d {
                w[k * fan_in + k] = 1.0;
            }
        }
        net
    }

    #[test]
    fn zero_net_maps_to_zero() {
        let net = MappingNet::zeros(vec![3, 6, 6, 6, 3]).unwrap();
        let out = map_s_to_i(&[1.0, -2.0, 0.5], &net).unwrap();
        assert_eq!(out.values, vec![0.0; 3]);
        assert_eq!(out.direction, Direction::SocialToItem);
        let out = map_i_to_s(&[1.0, -2.0, 0.5], &net).unwrap();
        assert_eq!(out.values, vec![0.0; 3]);
        assert_eq!(out.direction, Direction::ItemToSocial);
    }

    #[test]
    fn embedded_identity_passes_nonnegative_input() {
        let net = identity_net(3, &[6, 6, 6]);
        let x = [0.3, 0.0, 2.5];
        assert_eq!(map_s_to_i(&x, &net).unwrap().values, x);
        assert_eq!(map_i_to_s(&x, &net).unwrap().values, x);
    }

    #[test]
    fn nan_input_rejected() {
        let net = identity_net(2, &[4]);
        assert!(matches!(
            map_s_to_i(&[f64::NAN, 0.0], &net),
            Err(Error::NonFinite(_))
        ));
        assert!(map_i_to_s(&[1.0], &net).is_err());
    }

    #[test]
    fn cycle_loss_zero_for_mutual_inverses() {
        let shape = Shape {
            num_users: 3,
            num_items: 1,
            dim: 2,
            hidden: vec![],
        };
        let mut p = init_model(&shape, 0).unwrap();
        // A = [[2,0],[1,1]], B = A^-1 = [[0.5,0],[-0.5,1]]
        p.social_to_item = one_layer(2, &[2.0, 0.0, 1.0, 1.0]);
        p.item_to_social = one_layer(2, &[0.5, 0.0, -0.5, 1.0]);
        let c = cycle_loss(&[0, 1, 2], &p).unwrap();
        assert!(c.loss.abs() < 1e-12, "{}", c.loss);
    }

    #[test]
    fn cycle_loss_hand_computed() {
        let shape = Shape {
            num_users: 1,
            num_items: 1,
            dim: 2,
            hidden: vec![],
        };
        let mut p = init_model(&shape, 0).unwrap();
        // h_si = A, h_is = identity: both round trips reduce to A
        p.social_to_item = one_layer(2, &[2.0, 0.0, 0.0, 3.0]);
        p.item_to_social = one_layer(2, &[1.0, 0.0, 0.0, 1.0]);
        p.gen_user_item = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        p.gen_user_social = Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap();
        // ‖(2,3)-(1,1)‖ + ‖(4,-3)-(2,-1)‖ = sqrt(5) + sqrt(8)
        let expected = 5f64.sqrt() + 8f64.sqrt();
        let c = cycle_loss(&[0], &p).unwrap();
        assert!((c.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        let shape = Shape {
            num_users: 1,
            num_items: 1,
            dim: 2,
            hidden: vec![2],
        };
        let p = init_model(&shape, 0).unwrap();
        assert!(cycle_loss(&[], &p).is_err());
    }
}
