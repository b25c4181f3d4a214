//! Central finite-difference gradient checks.

use crate::error::{Error, Result};

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use super::Tensor;

pub const FD_STEP: f64 = 1e-6;

/// Denominator floor: below this magnitude the comparison is absolute.
pub const REL_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Scalar-valued function built on a fresh graph from leaf inputs.
pub trait GraphFn: Fn(&mut Graph, &[NodeId]) -> Result<NodeId> {}
impl<F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>> GraphFn for F {}

fn evaluate(
    f: &impl GraphFn,
    store: Option<&ParamStore>,
    inputs: &[Tensor],
    pinned: &[Tensor],
) -> Result<f64> {
    let mut g = match store {
        Some(s) => Graph::with_params(s),
        None => Graph::new(),
    };
    g.pin_detached(pinned.to_vec());
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    let value = g.value(out);
    if value.shape() != (1, 1) {
        return Err(Error::shape("gradient check needs a scalar function"));
    }
    let v = value.item();
    if !v.is_finite() {
        return Err(Error::Evaluation(format!(
            "function value {v} is not finite"
        )));
    }
    Ok(v)
}

/// Maximum relative error between the analytic gradient of `f` and central
/// differences, over every entry of every input. Detached values stay at
/// their base-point values during the perturbed evaluations.
pub fn grad_check(f: impl GraphFn, inputs: &[Tensor]) -> Result<f64> {
    grad_check_with(f, None, inputs)
}

pub fn grad_check_with(
    f: impl GraphFn,
    store: Option<&ParamStore>,
    inputs: &[Tensor],
) -> Result<f64> {
    let mut g = match store {
        Some(s) => Graph::with_params(s),
        None => Graph::new(),
    };
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    if !g.value(out).is_finite() {
        return Err(Error::Evaluation("function value is not finite".into()));
    }
    let grads = g.backward(out)?;
    let pinned = g.detached_values();

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (which, id) in ids.iter().enumerate() {
        let analytic = grads.wrt_or_zeros(*id, inputs[which].shape());
        for j in 0..inputs[which].len() {
            let orig = inputs[which].data()[j];
            probe[which].data_mut()[j] = orig + FD_STEP;
            let plus = evaluate(&f, store, &probe, &pinned)?;
            probe[which].data_mut()[j] = orig - FD_STEP;
            let minus = evaluate(&f, store, &probe, &pinned)?;
            probe[which].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}

/// Like [`grad_check`] but perturbs parameter entries. `coords` selects
/// `(name, flat index)` pairs; `None` checks every entry of every parameter.
pub fn grad_check_params(
    f: impl Fn(&mut Graph) -> Result<NodeId>,
    store: &ParamStore,
    coords: Option<&[(String, usize)]>,
) -> Result<f64> {
    let mut g = Graph::with_params(store);
    let out = f(&mut g)?;
    let grads = g.backward(out)?.for_params(store);
    let pinned = g.detached_values();
    let run = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::with_params(s);
        g.pin_detached(pinned.clone());
        let out = f(&mut g)?;
        let v = g.value(out).item();
        if !v.is_finite() {
            return Err(Error::Evaluation(format!(
                "function value {v} is not finite"
            )));
        }
        Ok(v)
    };

    let all: Vec<(String, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = store
                .iter()
                .flat_map(|(n, t)| (0..t.len()).map(move |i| (n.to_string(), i)))
                .collect();
            &all
        }
    };

    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for (name, idx) in coords {
        let orig = store
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?
            .data()[*idx];
        probe.get_mut(name).unwrap().data_mut()[*idx] = orig + FD_STEP;
        let plus = run(&probe)?;
        probe.get_mut(name).unwrap().data_mut()[*idx] = orig - FD_STEP;
        let minus = run(&probe)?;
        probe.get_mut(name).unwrap().data_mut()[*idx] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grads[name].data()[*idx], numeric));
    }
    Ok(worst)
}
