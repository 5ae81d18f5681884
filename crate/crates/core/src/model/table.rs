//! Interlayer coupling tabulated on a polar grid.
//!
//! Each sample row holds the four orbital channels at one `(rho, phi)`. The
//! angular direction is interpolated trigonometrically, the radial direction
//! with Floater-Hormann rational interpolation of degree 7, which is smooth and
//! pole-free on the sampled interval and reproduces polynomials through the
//! Taylor orders the continuum expansion uses. Beyond the last radius the outermost
//! ring is continued with the declared exponential decay rate; below the first
//! radius it is held constant.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dual::Real;
use crate::{Error, Result};

/// Blending degree of the radial rational interpolant.
const FH_DEGREE: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct InterlayerTable {
    radii: Vec<f64>,
    angles_deg: Vec<f64>,
    /// `values[i * L + l]`, channels `AA, AB, BA, BB`.
    values: Vec<[Complex64; 4]>,
    tail_rate: f64,
    /// Angular Fourier coefficients per radius, frequencies `-kmax..=kmax`.
    coeffs: Vec<Vec<[Complex64; 4]>>,
    kmax: usize,
    /// Coefficient of `cos(L phi / 2)` per radius when `L` is even.
    nyquist: Option<Vec<[Complex64; 4]>>,
}

impl InterlayerTable {
    /// `angles_deg` must be the uniform grid `360 l / L`, `l = 0..L`.
    pub fn new(
        radii: Vec<f64>,
        angles_deg: Vec<f64>,
        values: Vec<[Complex64; 4]>,
        tail_rate: f64,
    ) -> Result<Self> {
        if radii.len() < 2 {
            return Err(Error::param("table", "need at least two radii"));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::param("table", "radii must be finite, non-negative and strictly increasing"));
        }
        let nl = angles_deg.len();
        if nl == 0 {
            return Err(Error::param("table", "need at least one angle"));
        }
        for (l, &ang) in angles_deg.iter().enumerate() {
            let expect = 360.0 * l as f64 / nl as f64;
            if (ang - expect).abs() > 1e-9 {
                return Err(Error::param(
                    "table",
                    format!("angles must be the uniform grid 360*l/{nl}; entry {l} is {ang}"),
                ));
            }
        }
        if values.len() != radii.len() * nl {
            return Err(Error::param(
                "table",
                format!("expected {} samples, got {}", radii.len() * nl, values.len()),
            ));
        }
        if !(tail_rate.is_finite() && tail_rate > 0.0) {
            return Err(Error::param("gamma12", "tail decay rate must be positive"));
        }

        let kmax = (nl - 1) / 2;
        let even = nl % 2 == 0;
        let mut coeffs = Vec::with_capacity(radii.len());
        let mut nyquist = even.then(Vec::new);
        for i in 0..radii.len() {
            let row = &values[i * nl..(i + 1) * nl];
            let mut ck = vec![[Complex64::default(); 4]; 2 * kmax + 1];
            for (slot, k) in ck.iter_mut().zip(-(kmax as i64)..=kmax as i64) {
                for (l, v) in row.iter().enumerate() {
                    let phase = Complex64::from_polar(1.0, -2.0 * PI * (k * l as i64) as f64 / nl as f64);
                    for c in 0..4 {
                        slot[c] += v[c] * phase / nl as f64;
                    }
                }
            }
            coeffs.push(ck);
            if let Some(ny) = nyquist.as_mut() {
                let mut acc = [Complex64::default(); 4];
                for (l, v) in row.iter().enumerate() {
                    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                    for c in 0..4 {
                        acc[c] += v[c] * sign / nl as f64;
                    }
                }
                ny.push(acc);
            }
        }
        Ok(Self {
            radii,
            angles_deg,
            values,
            tail_rate,
            coeffs,
            kmax,
            nyquist,
        })
    }

    /// Samples `f(rho, phi)` on the grid `radii x {2 pi l / L}`.
    pub fn from_fn<F>(radii: Vec<f64>, n_angles: usize, tail_rate: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> [Complex64; 4],
    {
        let angles_deg: Vec<f64> = (0..n_angles).map(|l| 360.0 * l as f64 / n_angles as f64).collect();
        let mut values = Vec::with_capacity(radii.len() * n_angles);
        for &r in &radii {
            for l in 0..n_angles {
                values.push(f(r, 2.0 * PI * l as f64 / n_angles as f64));
            }
        }
        Self::new(radii, angles_deg, values, tail_rate)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn values(&self) -> &[[Complex64; 4]] {
        &self.values
    }

    pub fn tail_rate(&self) -> f64 {
        self.tail_rate
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().expect("at least two radii")
    }

    pub(crate) fn scaled(&self, factor: f64) -> Self {
        let values = self.values.iter().map(|v| v.map(|z| z * factor)).collect();
        Self::new(self.radii.clone(), self.angles_deg.clone(), values, self.tail_rate)
            .expect("scaling preserves a valid table")
    }

    /// Cardinal radial weights at `x` inside `[radii[0], radii[n-1]]`.
    fn radial_weights<T: Real>(&self, x: &T) -> Vec<T> {
        let nodes = &self.radii;
        let n = nodes.len();
        let d = FH_DEGREE.min(n - 1);
        let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
        let diff: Vec<T> = nodes.iter().map(|&xj| (x.clone() - xj) * (1.0 / h)).collect();

        let one = x.lift(1.0);
        let mut pre = Vec::with_capacity(n + 1);
        pre.push(one.clone());
        for dj in &diff {
            let last = pre.last().cloned().expect("non-empty");
            pre.push(last * dj.clone());
        }
        let mut suf = vec![one.clone(); n + 1];
        for j in (0..n).rev() {
            suf[j] = suf[j + 1].clone() * diff[j].clone();
        }

        let mut weights = vec![x.lift(0.0); n];
        let mut denom = x.lift(0.0);
        for i in 0..n - d {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let lam = pre[i].clone() * suf[i + d + 1].clone() * sign;
            denom = denom + lam.clone();
            for k in i..=i + d {
                let mut ell = lam.clone();
                for m in i..=i + d {
                    if m != k {
                        ell = ell * diff[m].clone() * (h / (nodes[k] - nodes[m]));
                    }
                }
                weights[k] = weights[k].clone() + ell;
            }
        }
        let inv = denom.recip();
        weights.into_iter().map(|w| w * inv.clone()).collect()
    }

    /// `[re, im]` per channel at `(x, y)`.
    pub(crate) fn channels<T: Real>(&self, x: T, y: T) -> [[T; 2]; 4] {
        let rho = (x.square() + y.square()).sqrt();
        let (ur, ui) = if rho.value() > 0.0 {
            let inv = rho.recip();
            (x * inv.clone(), y * inv)
        } else {
            (rho.lift(1.0), rho.lift(0.0))
        };

        let r0 = self.radii[0];
        let rmax = self.max_radius();
        let n = self.radii.len();
        // (radial weights over nodes, extra factor)
        let (weights, factor): (Vec<T>, Option<T>) = if rho.value() >= rmax {
            let mut w = vec![rho.lift(0.0); n];
            w[n - 1] = rho.lift(1.0);
            let decay = ((rho.clone() - rmax) * (-self.tail_rate)).exp();
            (w, Some(decay))
        } else if rho.value() <= r0 {
            let mut w = vec![rho.lift(0.0); n];
            w[0] = rho.lift(1.0);
            (w, None)
        } else {
            (self.radial_weights(&rho), None)
        };

        let zero = rho.lift(0.0);
        let blend = |table: &dyn Fn(usize) -> [Complex64; 4]| -> [[T; 2]; 4] {
            let mut out: [[T; 2]; 4] = std::array::from_fn(|_| [zero.clone(), zero.clone()]);
            for (i, w) in weights.iter().enumerate() {
                let c = table(i);
                for ch in 0..4 {
                    out[ch][0] = out[ch][0].clone() + w.clone() * c[ch].re;
                    out[ch][1] = out[ch][1].clone() + w.clone() * c[ch].im;
                }
            }
            out
        };

        let mut total: [[T; 2]; 4] = std::array::from_fn(|_| [zero.clone(), zero.clone()]);
        let add = |total: &mut [[T; 2]; 4], c: [[T; 2]; 4], pr: &T, pi: &T| {
            for ch in 0..4 {
                let [cr, ci] = &c[ch];
                total[ch][0] = total[ch][0].clone() + cr.clone() * pr.clone() - ci.clone() * pi.clone();
                total[ch][1] = total[ch][1].clone() + cr.clone() * pi.clone() + ci.clone() * pr.clone();
            }
        };

        let km = self.kmax;
        let (mut pr, mut pi) = (rho.lift(1.0), rho.lift(0.0));
        for k in 0..=km {
            if k > 0 {
                let nr = pr.clone() * ur.clone() - pi.clone() * ui.clone();
                let ni = pr.clone() * ui.clone() + pi.clone() * ur.clone();
                pr = nr;
                pi = ni;
            }
            let pos = blend(&|i| self.coeffs[i][km + k]);
            add(&mut total, pos, &pr, &pi);
            if k > 0 {
                let neg = blend(&|i| self.coeffs[i][km - k]);
                add(&mut total, neg, &pr, &(-pi.clone()));
            }
        }
        if let Some(ny) = &self.nyquist {
            // cos(L phi / 2) = Re u^{L/2}, with L/2 = kmax + 1.
            let nr = pr.clone() * ur - pi * ui;
            let c = blend(&|i| ny[i]);
            add(&mut total, c, &nr, &rho.lift(0.0));
        }
        if let Some(f) = factor {
            for ch in total.iter_mut() {
                ch[0] = ch[0].clone() * f.clone();
                ch[1] = ch[1].clone() * f.clone();
            }
        }
        total
    }
}
