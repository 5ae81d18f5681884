//! Forward-mode differentiation with nested first-order dual numbers.
//!
//! A [`NestedDual`] of depth `d` is `d` dual numbers nested inside each other:
//! it carries one independent nilpotent infinitesimal per level
//! (`eps_k^2 = 0`), flattened into `2^d` coefficients indexed by the subset of
//! infinitesimals they multiply. Seeding `beta_1` levels on `x_1` and `beta_2`
//! levels on `x_2` and reading the coefficient of `eps_1 ... eps_d` yields the
//! mixed partial `D^beta f`.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by plain floats and dual numbers, enough to write the
/// interlayer kernels once.
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Primal part.
    fn value(&self) -> f64;
    /// A constant with the same shape as `self`.
    fn lift(&self, c: f64) -> Self;
    fn exp(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn recip(&self) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestedDual {
    depth: u32,
    coeffs: Vec<f64>,
}

impl NestedDual {
    pub fn constant(depth: u32, value: f64) -> Self {
        let mut coeffs = vec![0.0; 1 << depth];
        coeffs[0] = value;
        Self { depth, coeffs }
    }

    /// `value + sum_{k in seeds} eps_k`.
    pub fn variable(depth: u32, value: f64, seeds: &[u32]) -> Self {
        let mut d = Self::constant(depth, value);
        for &k in seeds {
            assert!(k < depth, "seed level {k} out of range for depth {depth}");
            d.coeffs[1 << k] += 1.0;
        }
        d
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Coefficient of the product of all infinitesimals.
    pub fn top(&self) -> f64 {
        *self.coeffs.last().expect("non-empty")
    }

    /// Coefficient of the product of the infinitesimals in `mask`.
    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    fn zeros_like(&self) -> Self {
        Self {
            depth: self.depth,
            coeffs: vec![0.0; self.coeffs.len()],
        }
    }

    /// `f(a_0 + N) = sum_k f^(k)(a_0) N^k / k!` with `N` the nilpotent part;
    /// `derivs[k] = f^(k)(a_0)` for `k = 0..=depth`.
    fn compose(&self, derivs: &[f64]) -> Self {
        let mut nil = self.clone();
        nil.coeffs[0] = 0.0;
        let mut out = self.zeros_like();
        out.coeffs[0] = derivs[0];
        let mut power = self.lift(1.0);
        let mut fact = 1.0;
        for (k, &dk) in derivs.iter().enumerate().skip(1) {
            power = &power * &nil;
            fact *= k as f64;
            let c = dk / fact;
            if c != 0.0 {
                for (o, p) in out.coeffs.iter_mut().zip(&power.coeffs) {
                    *o += c * p;
                }
            }
        }
        out
    }

    fn check_depth(&self, other: &Self) {
        assert_eq!(self.depth, other.depth, "mixing dual numbers of different depth");
    }
}

/// Subset convolution `c[S] = sum_{T subset S} a[T] b[S \ T]`.
fn convolve(a: &[f64], b: &[f64], out: &mut [f64]) {
    let n = a.len();
    if n == 1 {
        out[0] += a[0] * b[0];
        return;
    }
    let h = n / 2;
    let (a_lo, a_hi) = a.split_at(h);
    let (b_lo, b_hi) = b.split_at(h);
    let (o_lo, o_hi) = out.split_at_mut(h);
    convolve(a_lo, b_lo, o_lo);
    convolve(a_lo, b_hi, o_hi);
    convolve(a_hi, b_lo, o_hi);
}

impl<'a> Mul<&'a NestedDual> for &'a NestedDual {
    type Output = NestedDual;
    fn mul(self, rhs: &'a NestedDual) -> NestedDual {
        self.check_depth(rhs);
        let mut out = self.zeros_like();
        convolve(&self.coeffs, &rhs.coeffs, &mut out.coeffs);
        out
    }
}

impl Mul for NestedDual {
    type Output = NestedDual;
    fn mul(self, rhs: NestedDual) -> NestedDual {
        &self * &rhs
    }
}

impl Add for NestedDual {
    type Output = NestedDual;
    fn add(mut self, rhs: NestedDual) -> NestedDual {
        self.check_depth(&rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for NestedDual {
    type Output = NestedDual;
    fn sub(mut self, rhs: NestedDual) -> NestedDual {
        self.check_depth(&rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Div for NestedDual {
    type Output = NestedDual;
    fn div(self, rhs: NestedDual) -> NestedDual {
        &self * &rhs.recip()
    }
}

impl Neg for NestedDual {
    type Output = NestedDual;
    fn neg(mut self) -> NestedDual {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Add<f64> for NestedDual {
    type Output = NestedDual;
    fn add(mut self, rhs: f64) -> NestedDual {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for NestedDual {
    type Output = NestedDual;
    fn sub(mut self, rhs: f64) -> NestedDual {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for NestedDual {
    type Output = NestedDual;
    fn mul(mut self, rhs: f64) -> NestedDual {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl Real for NestedDual {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn lift(&self, c: f64) -> Self {
        Self::constant(self.depth, c)
    }

    fn exp(&self) -> Self {
        let e = self.coeffs[0].exp();
        self.compose(&vec![e; self.depth as usize + 1])
    }

    fn sqrt(&self) -> Self {
        let a = self.coeffs[0];
        let mut derivs = Vec::with_capacity(self.depth as usize + 1);
        let mut c = 1.0;
        for k in 0..=self.depth as i32 {
            derivs.push(c * a.powf(0.5 - k as f64));
            c *= 0.5 - k as f64;
        }
        self.compose(&derivs)
    }

    fn recip(&self) -> Self {
        let a = self.coeffs[0];
        let mut derivs = Vec::with_capacity(self.depth as usize + 1);
        let mut c = 1.0;
        for k in 0..=self.depth as i32 {
            derivs.push(c / a.powi(k + 1));
            c *= -(k as f64 + 1.0);
        }
        self.compose(&derivs)
    }
}

/// Mixed partial `D^beta f(x)` of a scalar function of two variables.
///
/// `order` lists the variable (0 or 1) differentiated at each nesting level,
/// innermost first, so `[0, 1]` and `[1, 0]` give the two orderings of a
/// mixed second derivative.
pub fn partial<F>(f: F, x: [f64; 2], order: &[usize]) -> f64
where
    F: Fn(NestedDual, NestedDual) -> NestedDual,
{
    let depth = order.len() as u32;
    let seeds = |var: usize| -> Vec<u32> {
        order
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == var)
            .map(|(k, _)| k as u32)
            .collect()
    };
    let x1 = NestedDual::variable(depth, x[0], &seeds(0));
    let x2 = NestedDual::variable(depth, x[1], &seeds(1));
    f(x1, x2).top()
}

/// Canonical seeding order for a multi-index: `beta[0]` levels on `x_1`, then
/// `beta[1]` levels on `x_2`.
pub fn seed_order(beta: [usize; 2]) -> Vec<usize> {
    let mut v = vec![0; beta[0]];
    v.extend(std::iter::repeat_n(1, beta[1]));
    v
}
