//! Training objectives for the visual and latent adversarial pairs and the
//! latent cycle term.
//!
//! Every function returns a scalar tensor still attached to the autograd
//! graph; callers pick which parameters to differentiate. Batch reductions
//! are means.

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::datamodel::{GpAt, LossConfig};
use crate::error::{Error, Result};
use crate::networks::{Critic, ImageEncoder, ImageGenerator, LatentCritic};

/// Per-batch values of the five losses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_dv: f64,
    pub l_gv: f64,
    pub l_dl: f64,
    pub l_gl: f64,
    pub l_mse: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.l_dv, self.l_gv, self.l_dl, self.l_gl, self.l_mse]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Scalar value of `t`, or an error naming `what` if it is NaN or infinite.
pub fn finite_value(t: &Tensor, what: &str) -> Result<f64> {
    let v = t.double_value(&[]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            iteration: 0,
        })
    }
}

fn ensure_finite(t: Tensor, what: &str) -> Result<Tensor> {
    finite_value(&t, what)?;
    Ok(t)
}

/// Gradient of `output.sum()` with respect to `input`, zero where `output`
/// does not depend on it.
pub fn input_gradient(output: &Tensor, input: &Tensor, create_graph: bool) -> Result<Tensor> {
    if !output.requires_grad() {
        return Ok(input.zeros_like());
    }
    let grads = Tensor::f_run_backward(&[output.sum(output.kind())], &[input], true, create_graph)?;
    let g = grads.into_iter().next().expect("one input gives one gradient");
    Ok(if g.defined() { g } else { input.zeros_like() })
}

fn check_batches(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!(
            "real batch {:?} and fake batch {:?} differ",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// Points where the penalty is evaluated: per-example mixes
/// `mix_i * real_i + (1 - mix_i) * fake_i`, or the fakes themselves.
pub fn penalty_points(x_real: &Tensor, x_fake: &Tensor, mix: &Tensor, at: GpAt) -> Result<Tensor> {
    check_batches(x_real, x_fake)?;
    let points = match at {
        GpAt::Fakes => x_fake.detach(),
        GpAt::Interpolates => {
            let b = x_real.size()[0];
            if mix.size() != [b] {
                return Err(Error::Shape(format!(
                    "mix draws {:?} do not match batch size {b}",
                    mix.size()
                )));
            }
            let m = mix.to_kind(x_real.kind()).view([b, 1, 1, 1]);
            let mixed: Tensor = &m * x_real.detach() + (1.0 - &m) * x_fake.detach();
            mixed.detach()
        }
    };
    Ok(points.set_requires_grad(true))
}

/// Mean over examples of `(||grad D_v(p_i)||_2 - 1)^2` at the penalty points.
/// The graph is kept so the penalty can itself be differentiated.
pub fn gradient_penalty<C: Critic + ?Sized>(
    dv: &C,
    x_real: &Tensor,
    x_fake: &Tensor,
    mix: &Tensor,
    at: GpAt,
) -> Result<Tensor> {
    let points = penalty_points(x_real, x_fake, mix, at)?;
    let scores = dv.critic(&points);
    let grad = input_gradient(&scores, &points, true)?;
    let norms = grad
        .flatten(1, -1)
        .norm_scalaropt_dim(2.0, [1i64].as_slice(), false);
    Ok((norms - 1.0).square().mean(None::<Kind>))
}

/// Critic objective in minimization form:
/// `mean D_v(fake) - mean D_v(real) + lambda * penalty`.
pub fn visual_critic_loss<C: Critic + ?Sized>(
    dv: &C,
    x_real: &Tensor,
    x_fake: &Tensor,
    mix: &Tensor,
    cfg: &LossConfig,
) -> Result<Tensor> {
    check_batches(x_real, x_fake)?;
    let wasserstein = dv.critic(x_fake).mean(None::<Kind>) - dv.critic(x_real).mean(None::<Kind>);
    let gp = gradient_penalty(dv, x_real, x_fake, mix, cfg.gp_at)?;
    ensure_finite(wasserstein + gp * cfg.lambda_gp, "l_dv")
}

/// `-mean D_v(G_v(z))`.
pub fn visual_generator_loss<C, G>(dv: &C, gv: &G, z: &Tensor) -> Result<Tensor>
where
    C: Critic + ?Sized,
    G: ImageGenerator + ?Sized,
{
    ensure_finite(-dv.critic(&gv.generate(z)).mean(None::<Kind>), "l_gv")
}

/// Binary cross-entropy from logits with real labelled 1 and fake 0:
/// `mean softplus(-real) + mean softplus(fake)`.
pub fn bce_logits(real_logits: &Tensor, fake_logits: &Tensor) -> Tensor {
    (-real_logits).softplus().mean(None::<Kind>) + fake_logits.softplus().mean(None::<Kind>)
}

/// `alpha * mean log(1 - sigmoid(logit))`, evaluated as `-softplus(logit)`.
pub fn saturating_log_term(logits: &Tensor, alpha: f64) -> Tensor {
    (-logits.softplus()).mean(None::<Kind>) * alpha
}

/// `-mean log D_l(z_real) - mean log(1 - D_l(z_fake))`.
pub fn latent_discriminator_loss<D: LatentCritic + ?Sized>(
    dl: &D,
    z_real: &Tensor,
    z_fake: &Tensor,
) -> Result<Tensor> {
    ensure_finite(bce_logits(&dl.logits(z_real), &dl.logits(z_fake)), "l_dl")
}

/// `alpha * mean log(1 - D_l(G_l(x_hat)))`, minimized as D_l is fooled.
pub fn latent_generator_loss<D, E>(dl: &D, gl: &E, x_hat: &Tensor, alpha: f64) -> Result<Tensor>
where
    D: LatentCritic + ?Sized,
    E: ImageEncoder + ?Sized,
{
    ensure_finite(saturating_log_term(&dl.logits(&gl.encode(x_hat)), alpha), "l_gl")
}

/// `beta * mean_i ||z_i - z_hat_i||^2`.
pub fn squared_error_mean(z: &Tensor, z_hat: &Tensor, beta: f64) -> Tensor {
    (z - z_hat)
        .square()
        .flatten(1, -1)
        .sum_dim_intlist([1i64].as_slice(), false, None::<Kind>)
        .mean(None::<Kind>)
        * beta
}

/// `beta * mean ||z - G_l(G_v(z))||^2`.
pub fn latent_cycle_mse<E, G>(gl: &E, gv: &G, z: &Tensor, beta: f64) -> Result<Tensor>
where
    E: ImageEncoder + ?Sized,
    G: ImageGenerator + ?Sized,
{
    ensure_finite(squared_error_mean(z, &gl.encode(&gv.generate(z)), beta), "l_mse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    struct Linear {
        w: Tensor,
        scale: f64,
    }

    impl Critic for Linear {
        fn critic(&self, x: &Tensor) -> Tensor {
            x.flatten(1, -1).matmul(&self.w) * self.scale
        }
    }

    struct Constant(f64);

    impl Critic for Constant {
        fn critic(&self, x: &Tensor) -> Tensor {
            Tensor::full([x.size()[0]], self.0, (Kind::Double, tch::Device::Cpu))
        }
    }

    impl LatentCritic for Constant {
        fn logits(&self, z: &Tensor) -> Tensor {
            Tensor::full([z.size()[0]], self.0, (Kind::Double, tch::Device::Cpu))
        }
    }

    /// Generator and encoder that reshape between (B, 3*4*4) and (B, 3, 4, 4).
    struct Reshape;

    impl ImageGenerator for Reshape {
        fn generate(&self, z: &Tensor) -> Tensor {
            z.view([-1, 3, 4, 4])
        }
    }

    impl ImageEncoder for Reshape {
        fn encode(&self, x: &Tensor) -> Tensor {
            x.flatten(1, -1)
        }
    }

    fn rand(shape: &[i64], seed: i64) -> Tensor {
        tch::manual_seed(seed);
        Tensor::rand(shape, (Kind::Double, tch::Device::Cpu)) * 2.0 - 1.0
    }

    fn unit(dim: i64, seed: i64) -> Tensor {
        let w = rand(&[dim], seed);
        &w / w.norm()
    }

    fn val(t: &Tensor) -> f64 {
        t.double_value(&[])
    }

    #[test]
    fn penalty_closed_forms() {
        let (real, fake) = (rand(&[6, 3, 4, 4], 1), rand(&[6, 3, 4, 4], 2));
        let mix = rand(&[6], 3).abs();
        for at in [GpAt::Interpolates, GpAt::Fakes] {
            let lin = Linear { w: unit(48, 4), scale: 1.0 };
            assert_abs_diff_eq!(val(&gradient_penalty(&lin, &real, &fake, &mix, at).unwrap()), 0.0, epsilon = 1e-12);
            let double = Linear { w: unit(48, 4), scale: 2.0 };
            assert_abs_diff_eq!(val(&gradient_penalty(&double, &real, &fake, &mix, at).unwrap()), 1.0, epsilon = 1e-12);
            assert_eq!(val(&gradient_penalty(&Constant(3.0), &real, &fake, &mix, at).unwrap()), 1.0);
        }
        assert!(gradient_penalty(&Constant(0.0), &real, &rand(&[5, 3, 4, 4], 2), &mix, GpAt::Fakes).is_err());
        assert!(penalty_points(&real, &fake, &rand(&[5], 1), GpAt::Interpolates).is_err());
    }

    #[test]
    fn penalty_points_interpolate() {
        let (real, fake) = (rand(&[2, 3, 4, 4], 1), rand(&[2, 3, 4, 4], 2));
        let mix = Tensor::from_slice(&[0.0f64, 1.0]);
        let p = penalty_points(&real, &fake, &mix, GpAt::Interpolates).unwrap();
        assert!(p.get(0).equal(&fake.get(0)));
        assert!(p.get(1).equal(&real.get(1)));
    }

    #[test]
    fn critic_loss_closed_forms() {
        let cfg = LossConfig::default();
        let (real, fake) = (rand(&[4, 3, 4, 4], 5), rand(&[4, 3, 4, 4], 6));
        let mix = rand(&[4], 7).abs();
        let c = val(&visual_critic_loss(&Constant(0.7), &real, &real, &mix, &cfg).unwrap());
        assert_abs_diff_eq!(c, cfg.lambda_gp, epsilon = 1e-12);
        let w = unit(48, 8);
        let lin = Linear { w: w.shallow_clone(), scale: 1.0 };
        assert_abs_diff_eq!(val(&visual_critic_loss(&lin, &real, &real, &mix, &cfg).unwrap()), 0.0, epsilon = 1e-12);
        let expected = val(&fake.flatten(1, -1).matmul(&w).mean(None::<Kind>))
            - val(&real.flatten(1, -1).matmul(&w).mean(None::<Kind>));
        assert_abs_diff_eq!(val(&visual_critic_loss(&lin, &real, &fake, &mix, &cfg).unwrap()), expected, epsilon = 1e-12);
    }

    #[test]
    fn generator_loss_closed_forms() {
        let z = rand(&[5, 48], 9);
        assert_eq!(val(&visual_generator_loss(&Constant(1.5), &Reshape, &z).unwrap()), -1.5);
        let w = unit(48, 10);
        let one = Linear { w: w.shallow_clone(), scale: 1.0 };
        let two = Linear { w: w.shallow_clone(), scale: 2.0 };
        let l1 = val(&visual_generator_loss(&one, &Reshape, &z).unwrap());
        assert_abs_diff_eq!(l1, -val(&z.matmul(&w).mean(None::<Kind>)), epsilon = 1e-12);
        let l2 = val(&visual_generator_loss(&two, &Reshape, &z).unwrap());
        assert_abs_diff_eq!(l2.abs(), 2.0 * l1.abs(), epsilon = 1e-12);
    }

    #[test]
    fn latent_discriminator_closed_forms() {
        let z = rand(&[3, 8], 1);
        let l = val(&latent_discriminator_loss(&Constant(0.0), &z, &z).unwrap());
        assert_abs_diff_eq!(l, 2.0 * 2f64.ln(), epsilon = 1e-12);
        let perfect = val(&bce_logits(&Tensor::from_slice(&[60.0f64]), &Tensor::from_slice(&[-60.0f64])));
        assert!(perfect < 1e-20);
        // ln(1 + e^-0.3) + ln(1 + e^-0.7)
        let l = val(&bce_logits(&Tensor::from_slice(&[0.3f64]), &Tensor::from_slice(&[-0.7f64])));
        let oracle = (1.0 + (-0.3f64).exp()).ln() + (1.0 + (-0.7f64).exp()).ln();
        assert_abs_diff_eq!(l, oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(l, 0.5543552444685272 + 0.4031860488854579, epsilon = 1e-12);
    }

    #[test]
    fn latent_generator_closed_forms() {
        let x = rand(&[3, 3, 4, 4], 2);
        let l = val(&latent_generator_loss(&Constant(0.0), &Reshape, &x, 1.5).unwrap());
        assert_abs_diff_eq!(l, -1.5 * 2f64.ln(), epsilon = 1e-12);
        let small = val(&latent_generator_loss(&Constant(0.4), &Reshape, &x, 0.1).unwrap());
        let large = val(&latent_generator_loss(&Constant(0.4), &Reshape, &x, 10.0).unwrap());
        assert_abs_diff_eq!(large, 100.0 * small, epsilon = 1e-12);
        // sigmoid(ln 9) = 0.9
        let l = val(&saturating_log_term(&Tensor::from_slice(&[9f64.ln()]), 2.0));
        assert_abs_diff_eq!(l, 2.0 * 0.1f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn cycle_mse_closed_forms() {
        let z = rand(&[4, 48], 3);
        assert_eq!(val(&latent_cycle_mse(&Reshape, &Reshape, &z, 1.0).unwrap()), 0.0);
        let zero = Tensor::zeros([1, 8], (Kind::Double, tch::Device::Cpu));
        let cycled = zero.ones_like() * 0.1;
        assert_abs_diff_eq!(val(&squared_error_mean(&zero, &cycled, 1.0)), 0.08, epsilon = 1e-15);
        let a = val(&squared_error_mean(&z, &rand(&[4, 48], 4), 1.0));
        let b = val(&squared_error_mean(&z, &rand(&[4, 48], 4), 10.0));
        assert_abs_diff_eq!(b, 10.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn losses_are_permutation_invariant() {
        let (real, fake) = (rand(&[5, 3, 4, 4], 11), rand(&[5, 3, 4, 4], 12));
        let mix = rand(&[5], 13).abs();
        let perm = Tensor::from_slice(&[3i64, 0, 4, 1, 2]);
        let lin = Linear { w: unit(48, 14), scale: 3.0 };
        let cfg = LossConfig::default();
        let a = val(&visual_critic_loss(&lin, &real, &fake, &mix, &cfg).unwrap());
        let b = val(&visual_critic_loss(
            &lin,
            &real.index_select(0, &perm),
            &fake.index_select(0, &perm),
            &mix.index_select(0, &perm),
            &cfg,
        )
        .unwrap());
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        let (lr, lf) = (rand(&[5], 15), rand(&[5], 16));
        assert_abs_diff_eq!(
            val(&bce_logits(&lr, &lf)),
            val(&bce_logits(&lr.index_select(0, &perm), &lf.index_select(0, &perm))),
            epsilon = 1e-14
        );
    }

    #[test]
    fn non_finite_inputs_are_reported() {
        let z = Tensor::from_slice(&[f64::NAN; 48]).view([1, 48]);
        let err = visual_generator_loss(&Linear { w: unit(48, 1), scale: 1.0 }, &Reshape, &z).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    proptest! {
        #[test]
        fn stable_bce_is_finite_and_nonnegative(r in -100.0f64..100.0, f in -100.0f64..100.0, alpha in 0.1f64..10.0) {
            let l = val(&bce_logits(&Tensor::from_slice(&[r]), &Tensor::from_slice(&[f])));
            prop_assert!(l.is_finite() && l >= 0.0);
            let g = val(&saturating_log_term(&Tensor::from_slice(&[r]), alpha));
            prop_assert!(g.is_finite() && g <= 0.0);
        }

        #[test]
        fn penalty_is_nonnegative(seed in 0i64..1000, scale in 0.0f64..5.0) {
            let lin = Linear { w: unit(48, seed), scale };
            let p = val(&gradient_penalty(&lin, &rand(&[3, 3, 4, 4], seed + 1), &rand(&[3, 3, 4, 4], seed + 2), &rand(&[3], seed).abs(), GpAt::Interpolates).unwrap());
            prop_assert!(p >= 0.0);
            prop_assert!((p - (scale - 1.0).powi(2)).abs() < 1e-10);
        }
    }
}
