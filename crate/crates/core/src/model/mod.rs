//! Tight-binding models: real-space intralayer hoppings and a momentum-space
//! interlayer coupling, with derivatives of both.

mod file;
mod table;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dual::{self, NestedDual, Real};
use crate::geometry::{Layer, LayerGeometry, Orbital};
use crate::linalg::{cis, C2, Vec2};
use crate::{Error, Result};

pub use file::{load_wannier_model, parse_model, save_model, write_model};
pub use table::InterlayerTable;

/// Derivative order every built-in model supports.
pub const DEFAULT_N_MAX: usize = 10;

/// One real-space hopping `h_{sigma sigma'}(R)`, `R = A_j n`.
///
/// Amplitudes are Bloch-block energies: the `c_j^*` normalization of the
/// momentum-space blocks is already folded in, so a nearest-neighbour model
/// with hopping energy `t` stores `-t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hopping {
    pub n: [i64; 2],
    pub from: Orbital,
    pub to: Orbital,
    pub amplitude: Complex64,
}

/// How the twist angle recorded in a model file relates to the run geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaPolicy {
    /// The model is angle-independent and takes the twist from the caller.
    FromGeometry,
    /// The model was built for this angle (degrees) and refuses any other.
    Fixed(f64),
}

/// Closed-form interlayer coupling: the Fourier transform of
/// `e^{-beta sqrt(|x|^2 + z^2)}` times `scale`, identical on all orbital pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialCoupling {
    pub beta: f64,
    pub z: f64,
    pub scale: f64,
}

impl RadialCoupling {
    fn kernel<T: Real>(&self, x: T, y: T) -> T {
        let b2 = self.beta * self.beta;
        let s2 = x.square() + y.square() + b2;
        let s = s2.sqrt();
        let zs = s.clone() * self.z;
        let num = (-zs.clone()).exp() * (zs + 1.0);
        num / (s2 * s) * (self.scale * self.beta / (2.0 * PI))
    }

    /// `int_0^inf r^{k+1} e^{-beta sqrt(r^2+z^2)} dr`, rounded up.
    fn radial_moment(&self, k: usize) -> f64 {
        let b = self.beta;
        let upper = self.z + (k as f64 + 90.0) / b;
        let f = |r: f64| r.powi(k as i32 + 1) * (-b * (r * r + self.z * self.z).sqrt()).exp();
        let panels = 20_000;
        let h = upper / panels as f64;
        let mut acc = f(0.0) + f(upper);
        for i in 1..panels {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 * (1.0 + 1e-6)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Interlayer {
    Radial(RadialCoupling),
    Table(InterlayerTable),
}

impl Interlayer {
    /// `[re, im]` of the `AA, AB, BA, BB` channels of `h^_12` (without `c^*`).
    fn channels<T: Real>(&self, x: T, y: T) -> [[T; 2]; 4] {
        match self {
            Interlayer::Radial(r) => {
                let v = r.kernel(x, y);
                let zero = v.lift(0.0);
                std::array::from_fn(|_| [v.clone(), zero.clone()])
            }
            Interlayer::Table(t) => t.channels(x, y),
        }
    }

    fn scaled(&self, factor: f64) -> Interlayer {
        match self {
            Interlayer::Radial(r) => Interlayer::Radial(RadialCoupling {
                scale: r.scale * factor,
                ..*r
            }),
            Interlayer::Table(t) => Interlayer::Table(t.scaled(factor)),
        }
    }
}

/// Exponential decay rates declared by a model (`1/length`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRates {
    pub intralayer: [f64; 2],
    pub interlayer: f64,
}

/// Which hopping function a derivative refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Intralayer(Layer),
    Interlayer,
}

/// Parameters of the simplified model: three nearest-neighbour intralayer
/// hoppings of strength `t` and the radial interlayer coupling.
///
/// The defaults (`a` in Angstrom, energies in eV) are conventional graphene
/// values with an interlayer strength chosen so that 1.1 degrees is close to
/// the first magic angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplifiedParams {
    pub a: f64,
    /// Twist angle in radians.
    pub theta: f64,
    pub t: f64,
    /// Decay rate of the intralayer orbitals; declared, not used by the
    /// nearest-neighbour truncation.
    pub alpha: f64,
    pub beta: f64,
    pub z: f64,
    /// Interlayer energy scale multiplying the Fourier transform.
    pub scale: f64,
}

impl Default for SimplifiedParams {
    fn default() -> Self {
        Self {
            a: 2.46,
            theta: 1.1f64.to_radians(),
            t: 2.7,
            alpha: 1.5,
            beta: 4.0,
            z: 2.0,
            // w = c_1 c_2 h^_12(K) is about 98 meV, the flattest isolated
            // central pair at 1.1 degrees for this (beta, z).
            scale: 1035.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TBModel {
    pub geom: LayerGeometry,
    pub intralayer: [Vec<Hopping>; 2],
    pub interlayer: Interlayer,
    pub decay: DecayRates,
    /// Highest derivative order the model supports.
    pub n_max: usize,
    pub theta_policy: ThetaPolicy,
}

/// Nearest-neighbour hoppings giving the block `-t [[0, F], [conj F, 0]]`.
pub fn nearest_neighbour_hoppings(t: f64) -> Vec<Hopping> {
    let amp = Complex64::new(-t, 0.0);
    let mk = |n, from, to| Hopping {
        n,
        from,
        to,
        amplitude: amp,
    };
    vec![
        mk([0, 0], Orbital::A, Orbital::B),
        mk([1, 0], Orbital::A, Orbital::B),
        mk([0, 1], Orbital::A, Orbital::B),
        mk([0, 0], Orbital::B, Orbital::A),
        mk([-1, 0], Orbital::B, Orbital::A),
        mk([0, -1], Orbital::B, Orbital::A),
    ]
}

pub fn simplified_model(p: &SimplifiedParams) -> Result<TBModel> {
    for (name, v) in [
        ("a", p.a),
        ("t", p.t),
        ("alpha", p.alpha),
        ("beta", p.beta),
        ("z", p.z),
        ("scale", p.scale),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    let geom = LayerGeometry::new(p.a, p.theta)?;
    let hops = nearest_neighbour_hoppings(p.t);
    Ok(TBModel {
        geom,
        intralayer: [hops.clone(), hops],
        interlayer: Interlayer::Radial(RadialCoupling {
            beta: p.beta,
            z: p.z,
            scale: p.scale,
        }),
        decay: DecayRates {
            intralayer: [p.alpha, p.alpha],
            interlayer: p.beta,
        },
        n_max: DEFAULT_N_MAX,
        theta_policy: ThetaPolicy::FromGeometry,
    })
}

impl TBModel {
    /// `c_1^* c_2^*`.
    pub fn coupling_norm(&self) -> f64 {
        self.geom.bloch_norm(Layer::One) * self.geom.bloch_norm(Layer::Two)
    }

    /// Largest intralayer hopping magnitude, the `t` of tolerances; 1 for a
    /// model without intralayer hoppings.
    pub fn energy_scale(&self) -> f64 {
        let t = self.intralayer.iter().flatten().map(|h| h.amplitude.norm()).fold(0.0, f64::max);
        if t > 0.0 { t } else { 1.0 }
    }

    /// Bond vector `R + tau_sigma - tau_sigma'` of a hopping in layer `layer`.
    pub fn bond(&self, layer: Layer, h: &Hopping) -> Vec2 {
        self.geom.lattice_vector(layer, h.n) + self.geom.tau(layer, h.from) - self.geom.tau(layer, h.to)
    }

    /// `c_j^* h~_j(q)`.
    pub fn intralayer_bloch(&self, layer: Layer, q: &Vec2) -> C2 {
        self.intralayer_derivative(layer, [0, 0], q)
    }

    /// `c_1^* c_2^* h^_12(xi)`.
    pub fn interlayer_fourier(&self, xi: &Vec2) -> C2 {
        let ch = self.interlayer.channels(xi.x, xi.y);
        let c = self.coupling_norm();
        C2::new(
            Complex64::new(ch[0][0], ch[0][1]) * c,
            Complex64::new(ch[1][0], ch[1][1]) * c,
            Complex64::new(ch[2][0], ch[2][1]) * c,
            Complex64::new(ch[3][0], ch[3][1]) * c,
        )
    }

    /// `D^beta` of the chosen hopping function at `point`.
    pub fn hopping_derivative(&self, part: Part, beta: [usize; 2], point: &Vec2) -> Result<C2> {
        self.check_order(beta[0] + beta[1])?;
        Ok(match part {
            Part::Intralayer(layer) => self.intralayer_derivative(layer, beta, point),
            Part::Interlayer => self.interlayer_partial(&dual::seed_order(beta), point),
        })
    }

    pub(crate) fn check_order(&self, order: usize) -> Result<()> {
        if order > self.n_max {
            return Err(Error::Capability {
                requested: order,
                available: self.n_max,
            });
        }
        Ok(())
    }

    /// Each lattice-sum term gains `(-i d)^beta` with `d` the bond vector.
    fn intralayer_derivative(&self, layer: Layer, beta: [usize; 2], q: &Vec2) -> C2 {
        let mut out = C2::zeros();
        let mi = Complex64::new(0.0, -1.0);
        for h in &self.intralayer[layer.index()] {
            let d = self.bond(layer, h);
            let factor = (mi * d.x).powu(beta[0] as u32) * (mi * d.y).powu(beta[1] as u32);
            out[(h.from.index(), h.to.index())] += factor * cis(-q.dot(&d)) * h.amplitude;
        }
        out
    }

    /// Mixed partial of `c^* c^* h^_12` differentiating the variables in
    /// `order` (0 = first component, 1 = second) one nesting level at a time.
    pub fn interlayer_partial(&self, order: &[usize], point: &Vec2) -> C2 {
        let depth = order.len() as u32;
        let seeds = |var: usize| -> Vec<u32> {
            order
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v == var)
                .map(|(k, _)| k as u32)
                .collect()
        };
        let x = NestedDual::variable(depth, point.x, &seeds(0));
        let y = NestedDual::variable(depth, point.y, &seeds(1));
        let ch = self.interlayer.channels(x, y);
        let c = self.coupling_norm();
        let z = |k: usize| Complex64::new(ch[k][0].top(), ch[k][1].top()) * c;
        C2::new(z(0), z(1), z(2), z(3))
    }

    /// A copy with every interlayer coupling multiplied by `factor >= 0`.
    pub fn with_interlayer_scaled(&self, factor: f64) -> TBModel {
        TBModel {
            interlayer: self.interlayer.scaled(factor),
            ..self.clone()
        }
    }

    /// Radius beyond which `|h^_12|` is declared nonincreasing along rays.
    pub fn decay_radius(&self) -> f64 {
        match &self.interlayer {
            Interlayer::Radial(_) => 0.0,
            Interlayer::Table(t) => t.max_radius(),
        }
    }

    /// Rigorous bound on the remainder of the order-`order` Taylor polynomial
    /// of each entry of `c_j^* h~_j` about `K + delta` minus its value,
    /// i.e. `sum |h| |delta . d|^{m+1} / (m+1)!` entrywise.
    pub fn intralayer_remainder(&self, layer: Layer, order: usize, delta: &Vec2) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        let fact = factorial(order + 1);
        for h in &self.intralayer[layer.index()] {
            let d = self.bond(layer, h);
            out[h.from.index()][h.to.index()] +=
                h.amplitude.norm() * delta.dot(&d).abs().powi(order as i32 + 1) / fact;
        }
        out
    }

    /// Bound on the Taylor remainder of `c^* c^* h^_12` along a step `delta`.
    ///
    /// Only available for the radial coupling, whose Fourier representation
    /// gives `|d^k/ds^k h^(xi + s delta)| <= |delta|^k (2 pi)^-2 int |x . e|^k h(x) dx`.
    pub fn interlayer_remainder(&self, order: usize, delta: &Vec2) -> Result<f64> {
        Ok(self.interlayer_remainder_coefficient(order)? * delta.norm().powi(order as i32 + 1))
    }

    /// `C` with `interlayer_remainder(order, delta) = C |delta|^{order+1}`.
    pub fn interlayer_remainder_coefficient(&self, order: usize) -> Result<f64> {
        match &self.interlayer {
            Interlayer::Radial(r) => {
                let k = order + 1;
                let angular = 4.0 * wallis(k);
                Ok(self.coupling_norm() * r.scale / (2.0 * PI).powi(2) / factorial(k) * angular * r.radial_moment(k))
            }
            Interlayer::Table(_) => Err(Error::Domain(
                "remainder bounds need a closed-form interlayer coupling".into(),
            )),
        }
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `int_0^{pi/2} cos^k`.
fn wallis(k: usize) -> f64 {
    let mut w = [PI / 2.0, 1.0];
    for j in 2..=k {
        w[j % 2] *= (j as f64 - 1.0) / j as f64;
    }
    w[k % 2]
}
