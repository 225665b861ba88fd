#![allow(dead_code)]

use guidance_lab::diffusion::{make_linear_schedule, NoiseSchedule, SigmaMode};

pub const T: usize = 250;

pub fn default_sched() -> NoiseSchedule {
    make_linear_schedule(T, 1e-4, 0.02, SigmaMode::PosteriorVar).unwrap()
}

/// Central finite differences with per-coordinate step `1e-4 * (1 + |x_j|)`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let h = 1e-4 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {id:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
