use crate::error::{Error, Result};
use crate::rng;

/// First-order low-pass filtered Gaussian noise,
/// `u_t = a u_{t-1} + (1 - a) w_t` with `w_t ~ N(0, σ² I)` and `u_{-1} = 0`.
pub fn lowpass_random_input(
    len: usize,
    dim: usize,
    pole: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&pole) {
        return Err(Error::Parameter(format!(
            "filter pole must lie in [0, 1), got {pole}"
        )));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::Parameter(format!(
            "amplitude must be non-negative, got {amplitude}"
        )));
    }
    let mut r = rng::seeded(seed);
    let mut prev = vec![0.0; dim];
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let u: Vec<f64> = prev
            .iter()
            .map(|&p| pole * p + (1.0 - pole) * amplitude * rng::normal(&mut r))
            .collect();
        prev.clone_from(&u);
        out.push(u);
    }
    Ok(out)
}

/// Noise amplitude that gives a stationary output standard deviation of `std`
/// for the given pole.
pub fn amplitude_for_std(pole: f64, std: f64) -> f64 {
    std * (1.0 - pole * pole).sqrt() / (1.0 - pole)
}
