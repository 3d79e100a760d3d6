use tch::Tensor;

use crate::error::Result;
use crate::networks::ParameterSet;

/// Adam with bias correction, moments kept per parameter entry so they can
/// be checkpointed. `updates` counts calls to [`Adam::step`].
#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    updates: u64,
}

impl Adam {
    pub const EPS: f64 = 1e-8;

    pub fn new(params: &ParameterSet, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros = || -> Vec<Tensor> { params.tensors().iter().map(|t| t.detach().zeros_like()).collect() };
        Self {
            lr,
            beta1,
            beta2,
            eps: Self::EPS,
            m: zeros(),
            v: zeros(),
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Restore the update counter; moments are restored through
    /// [`Adam::first_moments`] handles with `copy_`.
    pub fn set_updates(&mut self, updates: u64) {
        self.updates = updates;
    }

    pub fn step(&mut self, params: &ParameterSet, grads: &[Tensor]) {
        self.updates += 1;
        let t = self.updates as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        tch::no_grad(|| {
            for (((p, g), m), v) in params.tensors().into_iter().zip(grads).zip(&self.m).zip(&self.v) {
                let new_m = m * self.beta1 + g * (1.0 - self.beta1);
                let new_v = v * self.beta2 + g.square() * (1.0 - self.beta2);
                let update = (&new_m / c1) / ((&new_v / c2).sqrt() + self.eps) * self.lr;
                m.shallow_clone().copy_(&new_m);
                v.shallow_clone().copy_(&new_v);
                p.shallow_clone().copy_(&(p - update));
            }
        });
    }
}

/// Gradients of scalar `loss` with respect to every entry of `params`;
/// entries that do not influence the loss get zeros.
pub fn gradients(loss: &Tensor, params: &ParameterSet) -> Result<Vec<Tensor>> {
    Ok(gradients_many(loss, &[params])?.pop().expect("one set"))
}

/// [`gradients`] for several parameter sets from one backward pass.
pub fn gradients_many(loss: &Tensor, sets: &[&ParameterSet]) -> Result<Vec<Vec<Tensor>>> {
    let inputs: Vec<&Tensor> = sets.iter().flat_map(|s| s.tensors()).collect();
    let mut grads = Tensor::f_run_backward(&[loss], &inputs, false, false)?
        .into_iter()
        .zip(&inputs)
        .map(|(g, p)| if g.defined() { g } else { p.detach().zeros_like() });
    Ok(sets.iter().map(|s| grads.by_ref().take(s.len()).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{Architecture, LatentDiscriminator};
    use tch::Kind;

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let dl = LatentDiscriminator::new(Architecture::reduced(), 1, Kind::Double);
        let before: Vec<Tensor> = dl.params().tensors().iter().map(|t| t.detach().copy()).collect();
        let mut opt = Adam::new(dl.params(), 0.01, 0.5, 0.999);
        let grads: Vec<Tensor> = before.iter().map(|t| t.ones_like() * 3.0).collect();
        opt.step(dl.params(), &grads);
        assert_eq!(opt.updates(), 1);
        for (b, a) in before.iter().zip(dl.params().tensors()) {
            // Bias-corrected first step is lr * g / (|g| + eps).
            let delta = (b - a).flatten(0, -1).double_value(&[0]);
            assert!((delta - 0.01 * 3.0 / (3.0 + Adam::EPS)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_of_unused_parameters_are_zero() {
        let dl = LatentDiscriminator::new(Architecture::reduced(), 2, Kind::Double);
        let first = dl.params().tensors()[0].shallow_clone();
        let loss = first.sum(Kind::Double);
        let grads = gradients(&loss, dl.params()).unwrap();
        assert_eq!(grads.len(), dl.params().len());
        assert!(grads[0].eq(1.0).all().int64_value(&[]) != 0);
        assert_eq!(grads[1].abs().sum(Kind::Double).double_value(&[]), 0.0);
    }
}
