//! Evaluate the critic gradient penalty on critics with known gradients.
//!
//! cargo run --example gradient_penalty

use adgan::datamodel::GpAt;
use adgan::losses::gradient_penalty;
use adgan::networks::Critic;
use tch::{Kind, Tensor};

/// `f(x) = scale * <w, x>` with a unit vector `w`.
struct Linear {
    w: Tensor,
    scale: f64,
}

impl Critic for Linear {
    fn critic(&self, x: &Tensor) -> Tensor {
        (x.flatten(1, -1) * &self.w).sum_dim_intlist([1i64].as_slice(), false, None::<Kind>) * self.scale
    }
}

fn main() -> anyhow::Result<()> {
    let opts = (Kind::Double, tch::Device::Cpu);
    let d = 3 * 4 * 4;
    let w = Tensor::ones([d], opts) / (d as f64).sqrt();
    let real = Tensor::rand([6, 3, 4, 4], opts) * 2.0 - 1.0;
    let fake = Tensor::rand([6, 3, 4, 4], opts) * 2.0 - 1.0;
    let mix = Tensor::rand([6], opts);
    for scale in [0.0, 1.0, 2.0, 3.0] {
        let critic = Linear { w: w.shallow_clone(), scale };
        let gp = gradient_penalty(&critic, &real, &fake, &mix, GpAt::Interpolates)?.double_value(&[]);
        println!("gradient norm {scale}: penalty {gp:.6} (expected {:.1})", (scale - 1.0) * (scale - 1.0));
    }
    Ok(())
}
