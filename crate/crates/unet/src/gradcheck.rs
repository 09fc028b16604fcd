//! Central finite-difference check of the network's analytic gradients.

use bcs_core::Result;

use crate::loss::{mae, mae_with_grad};
use crate::model::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// `|a − n| / max(|a|, |n|, floor)`; the floor keeps near-zero gradients
    /// from turning rounding noise into large relative errors.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

fn train_loss(net: &mut Network, x: &Tensor, y: &Tensor) -> Result<f64> {
    let out = net.forward_train(x)?;
    mae(&out, y)
}

/// Compares the MAE-loss gradient (training-mode batch norm) with
/// `(L(θ+h) − L(θ−h)) / 2h` for each `(parameter index, element)` in `probes`.
/// Parameter indices follow [`Network::params_mut`] order and must name
/// trainable parameters.
pub fn check_gradients(
    net: &mut Network,
    x: &Tensor,
    y: &Tensor,
    probes: &[(usize, usize)],
    h: f64,
) -> Result<Vec<GradCheck>> {
    net.zero_grad();
    let out = net.forward_train(x)?;
    let (_, grad) = mae_with_grad(&out, y)?;
    net.backward(&grad);
    let analytic: Vec<(String, f64)> = {
        let params = net.params_mut();
        probes.iter().map(|&(p, i)| (params[p].name.clone(), params[p].grad[i])).collect()
    };
    let mut results = Vec::with_capacity(probes.len());
    for (&(p, i), (name, a)) in probes.iter().zip(analytic) {
        let original = net.params_mut()[p].value[i];
        net.params_mut()[p].value[i] = original + h;
        let plus = train_loss(net, x, y)?;
        net.params_mut()[p].value[i] = original - h;
        let minus = train_loss(net, x, y)?;
        net.params_mut()[p].value[i] = original;
        results.push(GradCheck { param: name, index: i, analytic: a, numeric: (plus - minus) / (2.0 * h) });
    }
    Ok(results)
}

/// Every `(parameter index, element)` pair of the trainable parameters.
pub fn trainable_entries(net: &mut Network) -> Vec<(usize, usize)> {
    net.params_mut()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(k, p)| (0..p.value.len()).map(move |i| (k, i)))
        .collect()
}
