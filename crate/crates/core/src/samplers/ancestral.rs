use crate::error::Result;
use crate::numkit::{gaussian_sample, Rng, Tensor};
use crate::samplers::check_finite;
use crate::schedule::NoiseSchedule;
use crate::scorenet::ScoreFn;

/// Unconditional ancestral reverse-time chain from `x_T ~ N(0, I)` down to
/// `t = 0`, returning `n` samples of dimension `dim` as `[n, dim]` rows.
///
/// Per step: `x <- (x + beta_t * score(x, sigma_t)) / sqrt(1 - beta_t)`
/// plus `sqrt(beta_t)` noise for every step except the last.
pub fn sample_unconditional(
    model: &dyn ScoreFn,
    sched: &NoiseSchedule,
    dim: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(reverse_chain(model, sched, dim, rng)?);
    }
    if rows.is_empty() {
        return Tensor::new(vec![0, dim], Vec::new());
    }
    Tensor::stack_rows(&rows)
}

/// Single reverse chain; also used by the guided sampler, which adds its
/// correction between steps.
pub(crate) fn reverse_chain(
    model: &dyn ScoreFn,
    sched: &NoiseSchedule,
    dim: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let mut x = gaussian_sample(rng, &[dim], 0.0, 1.0)?;
    for t in (0..sched.t_steps()).rev() {
        x = reverse_step(model, sched, t, x, rng)?;
        check_finite(&x, t, "reverse chain state")?;
    }
    Ok(x)
}

pub(crate) fn reverse_step(
    model: &dyn ScoreFn,
    sched: &NoiseSchedule,
    t: usize,
    x: Tensor,
    rng: &mut Rng,
) -> Result<Tensor> {
    let beta = sched.beta(t);
    let score = model.score(&x, sched.sigma(t))?;
    let mut next = x;
    next.add_scaled_assign(beta, &score)?;
    let mut next = next.scale(1.0 / (1.0 - beta).sqrt());
    if t > 0 {
        let z = gaussian_sample(rng, next.shape(), 0.0, 1.0)?;
        next.add_scaled_assign(beta.sqrt(), &z)?;
    }
    Ok(next)
}
