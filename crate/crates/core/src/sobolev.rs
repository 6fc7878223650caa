//! `(2, γ)`-Sobolev norms `∫ |ξ|^{2γ} |ν̂(ξ)|² dξ` of binned measures on the line.
//!
//! A binned measure has the step density `Σ w_i 2^m 1_{I_i}`, whose Fourier
//! transform is `S(ξh)·e^{-iπξh}·sinc(πξh)` with `h = 2^{-m}` and
//! `S(u) = Σ w_i e^{-2πi i u}`. The integral is evaluated in the variable
//! `u = ξh` on the grid `u = j/N`, where `S` is 1-periodic, so all samples come
//! from one FFT of length `N`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::Grid1D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    /// Frequency cutoff `Ξ`.
    pub cutoff: f64,
    /// Quadrature step in `ξ`.
    pub step: f64,
}

impl SobolevParams {
    /// `Ξ = 2^{m+5}` and a step of `2^m / 8192`.
    pub fn default_for(level: u32) -> Self {
        let scale = (level as f64).exp2();
        SobolevParams { cutoff: 32.0 * scale, step: scale / 8192.0 }
    }
}

fn sinc_sq(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        let s = x.sin() / x;
        s * s
    }
}

pub fn sobolev_norm_sq(line: &Grid1D, gamma: f64, params: &SobolevParams) -> Result<f64> {
    if !(gamma > -0.5 && gamma < 0.5) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} not in (-1/2, 1/2)")));
    }
    let h = (-(line.level() as f64)).exp2();
    let n_bins = line.masses().len().max(1);
    // Samples per unit of u; at least 8 per oscillation of S.
    let requested = (1.0 / (params.step * h)).ceil().max(1.0) as usize;
    let n = requested.max(8 * n_bins).next_power_of_two();
    let du = 1.0 / n as f64;
    let u_max = params.cutoff * h;
    let steps = (u_max / du).round() as usize;

    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n];
    for (i, m) in line.masses().iter().enumerate() {
        buf[i].re = *m;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = line.masses().iter().sum();

    // The cell |u| < du/2 around the origin, where |S|² sinc² ≈ total².
    let half = 0.5 * du;
    let mut acc = 2.0 * half.powf(2.0 * gamma + 1.0) / (2.0 * gamma + 1.0) * total * total;
    let mut tail = 0.0;
    for k in 1..=steps {
        let u = k as f64 * du;
        let w = if k == steps { 0.5 } else { 1.0 };
        tail += w * u.powf(2.0 * gamma) * power[k % n] * sinc_sq(std::f64::consts::PI * u);
    }
    acc += 2.0 * du * tail;
    // Back to ξ = u/h: dξ = du/h and |ξ|^{2γ} = |u|^{2γ} h^{-2γ}.
    Ok(acc * h.powf(-1.0 - 2.0 * gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::uniform_measure;
    use crate::projection::{project_grid, Direction};
    use crate::tree::MeasureTree;

    #[test]
    fn plancherel_on_indicator() {
        let line = Grid1D::from_bins(6, 1.0, (0..64).map(|i| (i, 1.0 / 64.0)).collect());
        let v = sobolev_norm_sq(&line, 0.0, &SobolevParams::default_for(6)).unwrap();
        assert!((v - 1.0).abs() < 0.02, "{v}");
        // γ = 0 is the L² norm of the step density for any binning.
        let bumpy = Grid1D::from_bins(4, 1.0, vec![(0, 0.5), (3, 0.25), (9, 0.25)]);
        let v = sobolev_norm_sq(&bumpy, 0.0, &SobolevParams::default_for(4)).unwrap();
        assert!((v / bumpy.l2_norm_sq() - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn triangle_density() {
        let u: MeasureTree<f64> = uniform_measure(2, 6).unwrap();
        let line = project_grid(&u.discretize(6).unwrap(), Direction::from_angle(std::f64::consts::FRAC_PI_4), 3).unwrap();
        let v = sobolev_norm_sq(&line, 0.0, &SobolevParams::default_for(6)).unwrap();
        assert!((v / (2.0 * 2f64.sqrt() / 3.0) - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn atom_grows_with_cutoff() {
        let line = Grid1D::from_bins(8, 1.0, vec![(100, 1.0)]);
        let base = SobolevParams::default_for(8);
        let a = sobolev_norm_sq(&line, 0.2, &base).unwrap();
        let b = sobolev_norm_sq(&line, 0.2, &SobolevParams { cutoff: 4.0 * base.cutoff, ..base }).unwrap();
        assert!(b > a);
        assert!(sobolev_norm_sq(&line, 0.5, &base).is_err());
    }

    #[test]
    fn negative_gamma_is_finite() {
        let line = Grid1D::from_bins(5, 1.0, (3..20).map(|i| (i, 1.0 / 17.0)).collect());
        let v = sobolev_norm_sq(&line, -0.3, &SobolevParams::default_for(5)).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
}
