//! Taylor expansion of the hopping functions about the Dirac points and the
//! resulting `(m, n, tau)` Hamiltonians and continuum models.
//!
//! The intralayer blocks are replaced by degree-`m` polynomials about
//! `K~_j`, the interlayer couplings by degree-`n` polynomials about
//! `K~_1 + G~` for every `G~` in the `tau` smallest hopping shells. No smooth
//! momentum cutoff is applied to the polynomials; on a finite basis they are
//! used as they are.

mod export;

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::geometry::{hopping_shells, Layer, LayerGeometry, MoireGeometry, Orbital, Valley};
use crate::linalg::{cis, max_row_sum, CMatrix, C2, Vec2};
use crate::model::{factorial, Part, TBModel};
use crate::momentum::{assemble_blocks, check_basis, phase_matrix, Basis, MomentumHamiltonian, Truncation};
use crate::{Error, Result};

pub use export::{parse_continuum_model, read_continuum_model, write_continuum_model};

/// Multi-indices with `|beta| <= order`, grouped by `|beta|`, `beta_1` descending.
pub fn multi_indices(order: usize) -> Vec<[usize; 2]> {
    (0..=order)
        .flat_map(|k| (0..=k).rev().map(move |b1| [b1, k - b1]))
        .collect()
}

fn slot(beta: [usize; 2]) -> usize {
    let k = beta[0] + beta[1];
    k * (k + 1) / 2 + beta[1]
}

/// `sum_beta c_beta delta^beta` with 2x2 complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialMatrix {
    pub order: usize,
    /// Momentum the polynomial is expanded about.
    pub point: Vec2,
    coeffs: Vec<C2>,
}

impl PolynomialMatrix {
    /// Coefficients in [`multi_indices`] order.
    pub fn from_coeffs(order: usize, point: Vec2, coeffs: Vec<C2>) -> Result<Self> {
        let expect = (order + 1) * (order + 2) / 2;
        if coeffs.len() != expect {
            return Err(Error::param(
                "coeffs",
                format!("order {order} needs {expect} coefficients, got {}", coeffs.len()),
            ));
        }
        Ok(Self { order, point, coeffs })
    }

    /// Taylor polynomial `D^beta f(point) / beta!`.
    pub fn taylor<F>(order: usize, point: Vec2, derivative: F) -> Result<Self>
    where
        F: Fn([usize; 2]) -> Result<C2>,
    {
        let coeffs = multi_indices(order)
            .into_iter()
            .map(|b| {
                let d = derivative(b)?;
                Ok(d.map(|z| z / (factorial(b[0]) * factorial(b[1]))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { order, point, coeffs })
    }

    pub fn coeff(&self, beta: [usize; 2]) -> Option<&C2> {
        (beta[0] + beta[1] <= self.order).then(|| &self.coeffs[slot(beta)])
    }

    pub fn terms(&self) -> impl Iterator<Item = ([usize; 2], &C2)> {
        multi_indices(self.order).into_iter().zip(self.coeffs.iter())
    }

    /// Value at `point + delta`.
    pub fn evaluate(&self, delta: &Vec2) -> C2 {
        let mut px = vec![1.0; self.order + 1];
        let mut py = vec![1.0; self.order + 1];
        for k in 1..=self.order {
            px[k] = px[k - 1] * delta.x;
            py[k] = py[k - 1] * delta.y;
        }
        let mut out = C2::zeros();
        for (b, c) in self.terms() {
            out += c * Complex64::new(px[b[0]] * py[b[1]], 0.0);
        }
        out
    }

    /// The lower-order polynomial sharing the leading coefficients.
    pub fn truncated(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Self {
            order,
            point: self.point,
            coeffs: self.coeffs[..(order + 1) * (order + 2) / 2].to_vec(),
        }
    }
}

/// Expansion orders `(m, n, tau)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExpansionOrders {
    pub m: usize,
    pub n: usize,
    pub tau: usize,
}

impl ExpansionOrders {
    pub fn new(m: usize, n: usize, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::param("tau", "need at least one hopping shell"));
        }
        Ok(Self { m, n, tau })
    }

    /// The leading-order (Bistritzer-MacDonald) orders `(1, 0, 1)`.
    pub fn bm() -> Self {
        Self { m: 1, n: 0, tau: 1 }
    }
}

impl std::fmt::Display for ExpansionOrders {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.m, self.n, self.tau)
    }
}

/// `c_j^* D^beta h~_j(K~_j) / beta!`.
pub fn expand_intralayer(model: &TBModel, layer: Layer, valley: Valley, m: usize) -> Result<PolynomialMatrix> {
    model.check_order(m)?;
    let point = model.geom.dirac_point(layer, valley);
    PolynomialMatrix::taylor(m, point, |b| model.hopping_derivative(Part::Intralayer(layer), b, &point))
}

/// `c_1^* c_2^* D^beta h^_12(K~_1 + G~) / beta!` for `G~` on the layer-1 reciprocal lattice.
pub fn expand_interlayer(model: &TBModel, valley: Valley, gtilde: &Vec2, n: usize) -> Result<PolynomialMatrix> {
    model.check_order(n)?;
    let point = model.geom.dirac_point(Layer::One, valley) + gtilde;
    PolynomialMatrix::taylor(n, point, |b| model.hopping_derivative(Part::Interlayer, b, &point))
}

/// All polynomials of one `(m, n, tau)` model at one valley, keyed by the
/// integer coordinates `nu` of `G~ = 2 pi A_1^{-T} nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub valley: Valley,
    pub orders: ExpansionOrders,
    pub intralayer: [PolynomialMatrix; 2],
    /// Hopping-shell members in shell order.
    pub shells: Vec<[i64; 2]>,
    pub interlayer: Vec<PolynomialMatrix>,
    lookup: HashMap<[i64; 2], usize>,
}

impl Expansion {
    pub fn new(model: &TBModel, valley: Valley, orders: ExpansionOrders) -> Result<Self> {
        let shells = hopping_shells(&model.geom, valley, orders.tau)?.members;
        let intralayer = [
            expand_intralayer(model, Layer::One, valley, orders.m)?,
            expand_intralayer(model, Layer::Two, valley, orders.m)?,
        ];
        let interlayer = shells
            .iter()
            .map(|&nu| expand_interlayer(model, valley, &model.geom.reciprocal_vector(Layer::One, nu), orders.n))
            .collect::<Result<Vec<_>>>()?;
        let lookup = shells.iter().enumerate().map(|(i, &nu)| (nu, i)).collect();
        Ok(Self {
            valley,
            orders,
            intralayer,
            shells,
            interlayer,
            lookup,
        })
    }

    pub fn interlayer_for(&self, nu: [i64; 2]) -> Option<&PolynomialMatrix> {
        self.lookup.get(&nu).map(|&i| &self.interlayer[i])
    }

    /// The polynomially approximated Hamiltonian on `basis` at `q`.
    pub fn assemble(&self, model: &TBModel, basis: &Basis, q: &Vec2) -> Result<MomentumHamiltonian> {
        self.assemble_mixed(model, basis, q, [true, true])
    }

    /// Like [`Expansion::assemble`], but a part whose flag in `expand`
    /// (`[intralayer, interlayer]`) is false keeps the exact hopping function,
    /// evaluated exactly as [`crate::momentum::assemble_hamiltonian`] does.
    pub fn assemble_mixed(
        &self,
        model: &TBModel,
        basis: &Basis,
        q: &Vec2,
        expand: [bool; 2],
    ) -> Result<MomentumHamiltonian> {
        check_basis(model, basis)?;
        if basis.valley != self.valley {
            return Err(Error::param("valley", "basis and expansion belong to different valleys"));
        }
        let geom = &model.geom;
        let k1 = geom.dirac_point(Layer::One, self.valley);
        let matrix = assemble_blocks(
            basis,
            |s| {
                if !expand[0] {
                    return model.intralayer_bloch(s.layer, &(q + s.g));
                }
                let j = s.layer;
                let kj = geom.dirac_point(j, self.valley);
                let p = self.intralayer[j.index()].evaluate(&(q - kj + s.gm));
                let shift = s.g - s.gm;
                C2::from_fn(|a, b| {
                    let d = geom.tau(j, Orbital::from_index(a)) - geom.tau(j, Orbital::from_index(b));
                    cis(-shift.dot(&d)) * p[(a, b)]
                })
            },
            |s1, s2| {
                let nu = [s1.n[0] + s2.n[0], s1.n[1] + s2.n[1]];
                self.interlayer_for(nu).map(|u| {
                    let t = phase_matrix(model, &s1.g, &s2.g);
                    if expand[1] {
                        t.component_mul(&u.evaluate(&(q - k1 + s1.gm)))
                    } else {
                        t.component_mul(&model.interlayer_fourier(&(q + s1.g + s2.g)))
                    }
                })
            },
        );
        Ok(MomentumHamiltonian {
            matrix,
            q: *q,
            truncation: Truncation::Shells(self.orders.tau),
        })
    }

    /// Row-sum bound on `||H^(tau) - H^(m,n,tau)||` at `q` from rigorous
    /// per-entry Taylor remainders.
    pub fn gershgorin_bound(&self, model: &TBModel, basis: &Basis, q: &Vec2) -> Result<f64> {
        let geom = &model.geom;
        let k1 = geom.dirac_point(Layer::One, self.valley);
        let inter_coeff = model.interlayer_remainder_coefficient(self.orders.n)?;
        let dim = basis.dimension();
        let mut bound = CMatrix::zeros(dim, dim);
        let b = assemble_blocks(
            basis,
            |s| {
                let kj = geom.dirac_point(s.layer, self.valley);
                let r = model.intralayer_remainder(s.layer, self.orders.m, &(q - kj + s.gm));
                C2::from_fn(|a, b| Complex64::new(r[a][b], 0.0))
            },
            |s1, s2| {
                let nu = [s1.n[0] + s2.n[0], s1.n[1] + s2.n[1]];
                self.lookup.contains_key(&nu).then(|| {
                    let r = inter_coeff * (q - k1 + s1.gm).norm().powi(self.orders.n as i32 + 1);
                    C2::from_element(Complex64::new(r, 0.0))
                })
            },
        );
        bound += b;
        Ok(max_row_sum(&bound))
    }
}

/// Convenience wrapper building the expansion and assembling once.
pub fn assemble_expanded_hamiltonian(
    model: &TBModel,
    basis: &Basis,
    q: &Vec2,
    orders: ExpansionOrders,
) -> Result<MomentumHamiltonian> {
    Expansion::new(model, basis.valley, orders)?.assemble(model, basis, q)
}

/// One interlayer term `T_b U_b(D) e^{-i s_b . x}` of a continuum model.
#[derive(Clone, Debug, PartialEq)]
pub struct InterlayerTerm {
    /// Moiré integer coordinates `b` of `G_M = 2 pi Theta b`.
    pub b: [i64; 2],
    pub gm: Vec2,
    /// `T^{sigma sigma'} = e^{i G_1(G_M) . tau_{1 sigma}} e^{-i G_2(G_M) . tau_{2 sigma'}}`.
    pub phase: C2,
    /// `s = K~_1 - K~_2 - G_M`.
    pub shift: Vec2,
    pub poly: PolynomialMatrix,
}

/// The `(m, n, tau)` continuum model of one valley.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuumModel {
    pub valley: Valley,
    pub orders: ExpansionOrders,
    pub a: f64,
    /// Twist angle in radians.
    pub theta: f64,
    pub dk: f64,
    pub intralayer: [PolynomialMatrix; 2],
    pub interlayer: Vec<InterlayerTerm>,
}

pub fn derive_continuum_model(model: &TBModel, valley: Valley, orders: ExpansionOrders) -> Result<ContinuumModel> {
    let moire = MoireGeometry::new(&model.geom)?;
    let ex = Expansion::new(model, valley, orders)?;
    Ok(ContinuumModel::from_expansion(&ex, &moire))
}

impl ContinuumModel {
    pub fn from_expansion(ex: &Expansion, moire: &MoireGeometry) -> Self {
        let geom = &moire.layers;
        let (k1, k2) = (geom.dirac_point(Layer::One, ex.valley), geom.dirac_point(Layer::Two, ex.valley));
        let interlayer = ex
            .shells
            .iter()
            .zip(&ex.interlayer)
            .map(|(&b, poly)| {
                let gm = moire.moire_vector(b);
                InterlayerTerm {
                    b,
                    gm,
                    phase: bm_phase(geom, b),
                    shift: k1 - k2 - gm,
                    poly: poly.clone(),
                }
            })
            .collect();
        Self {
            valley: ex.valley,
            orders: ex.orders,
            a: geom.a,
            theta: geom.theta,
            dk: moire.dk,
            intralayer: ex.intralayer.clone(),
            interlayer,
        }
    }

    /// Fermi velocity `|c_{(1,0)}^{AB}|` of layer 1.
    pub fn fermi_velocity(&self) -> Option<f64> {
        self.intralayer[0].coeff([1, 0]).map(|c| c[(0, 1)].norm())
    }

    /// Interlayer constant `w` of the `G~ = 0` term.
    pub fn coupling_constant(&self) -> Option<f64> {
        self.interlayer
            .iter()
            .find(|t| t.b == [0, 0])
            .map(|t| t.poly.coeff([0, 0]).expect("order >= 0")[(0, 0)].re)
    }

    /// Multiplies every interlayer coefficient by `factor`.
    pub fn with_interlayer_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.interlayer {
            t.poly.coeffs.iter_mut().for_each(|c| *c *= Complex64::new(factor, 0.0));
        }
        out
    }

    fn geometry(&self) -> Result<MoireGeometry> {
        MoireGeometry::from_params(self.a, self.theta)
    }
}

fn bm_phase(geom: &LayerGeometry, b: [i64; 2]) -> C2 {
    let g1 = geom.reciprocal_vector(Layer::One, b);
    let g2 = geom.reciprocal_vector(Layer::Two, b);
    C2::from_fn(|s, sp| {
        let t1 = geom.tau(Layer::One, Orbital::from_index(s));
        let t2 = geom.tau(Layer::Two, Orbital::from_index(sp));
        cis(g1.dot(&t1) - g2.dot(&t2))
    })
}

/// Plane-wave matrix of a continuum model.
///
/// Layer-1 waves carry envelope momentum `q - K~_1 + G_M`, layer-2 waves
/// `q - K~_2 - G_M'`, with `G_M = 2 pi Theta n` for the basis labels `n`.
/// Interlayer term `b` couples labels with `n + n' = b`.
pub fn continuum_bloch_matrix(cm: &ContinuumModel, basis: &Basis, q: &Vec2) -> Result<MomentumHamiltonian> {
    let moire = cm.geometry()?;
    let geom = &moire.layers;
    let terms: HashMap<[i64; 2], &InterlayerTerm> = cm.interlayer.iter().map(|t| (t.b, t)).collect();
    let k = [geom.dirac_point(Layer::One, cm.valley), geom.dirac_point(Layer::Two, cm.valley)];
    let tau = |j: Layer, s: usize| geom.tau(j, Orbital::from_index(s));
    let gauge = |j: Layer, n: [i64; 2]| -> Vec2 {
        // G_j(G_M) for the label n.
        geom.reciprocal_vector(j, n)
    };
    let matrix = assemble_blocks(
        basis,
        |s| {
            let j = s.layer;
            let gm = moire.moire_vector(s.n);
            let sign = if j == Layer::One { 1.0 } else { -1.0 };
            let p = cm.intralayer[j.index()].evaluate(&(q - k[j.index()] + gm * sign));
            let g = gauge(j, s.n);
            C2::from_fn(|a, b| cis(g.dot(&(tau(j, b) - tau(j, a)))) * p[(a, b)])
        },
        |s1, s2| {
            let b = [s1.n[0] + s2.n[0], s1.n[1] + s2.n[1]];
            terms.get(&b).map(|t| {
                let gm = moire.moire_vector(s1.n);
                let u = t.poly.evaluate(&(q - k[0] + gm));
                let g1 = gauge(Layer::One, s1.n);
                let g2 = gauge(Layer::Two, s2.n);
                C2::from_fn(|a, bb| {
                    let left = cis(-g1.dot(&tau(Layer::One, a)));
                    let right = cis(g2.dot(&tau(Layer::Two, bb)));
                    left * t.phase[(a, bb)] * right * u[(a, bb)]
                })
            })
        },
    );
    Ok(MomentumHamiltonian {
        matrix,
        q: *q,
        truncation: Truncation::Shells(cm.orders.tau),
    })
}

/// `phi = 2 pi / 3`, the phase step between the three leading couplings.
pub const BM_PHASE_STEP: f64 = 2.0 * PI / 3.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermiticity_defect;
    use crate::model::{simplified_model, SimplifiedParams};
    use crate::momentum::assemble_hamiltonian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> TBModel {
        simplified_model(&SimplifiedParams::default()).unwrap()
    }

    fn sorted_eigs(h: &CMatrix) -> Vec<f64> {
        let mut e: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn multi_index_layout() {
        assert_eq!(multi_indices(2), vec![[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]);
        for (i, b) in multi_indices(6).into_iter().enumerate() {
            assert_eq!(slot(b), i);
        }
    }

    #[test]
    fn linear_intralayer_term_is_a_rotated_dirac_cone() {
        let p = SimplifiedParams::default();
        let m = model();
        let v = 3f64.sqrt() / 2.0 * p.a * p.t;
        for (layer, tj) in [(Layer::One, -p.theta / 2.0), (Layer::Two, p.theta / 2.0)] {
            let poly = expand_intralayer(&m, layer, Valley::K, 1).unwrap();
            assert!(poly.coeff([0, 0]).unwrap().iter().all(|z| z.norm() < 1e-12));
            // v sigma_theta . q: AB entry v e^{i theta_j} (q1 - i q2).
            let c1 = poly.coeff([1, 0]).unwrap();
            let c2 = poly.coeff([0, 1]).unwrap();
            let e = cis(tj) * v;
            assert!((c1[(0, 1)] - e).norm() < 1e-12 * v);
            assert!((c2[(0, 1)] - e * Complex64::new(0.0, -1.0)).norm() < 1e-12 * v);
            assert!((c1[(1, 0)] - e.conj()).norm() < 1e-12 * v);
            assert!((c2[(1, 0)] - e.conj() * Complex64::new(0.0, 1.0)).norm() < 1e-12 * v);
        }
    }

    #[test]
    fn higher_orders_extend_lower_ones() {
        let m = model();
        let p1 = expand_intralayer(&m, Layer::One, Valley::K, 1).unwrap();
        let p3 = expand_intralayer(&m, Layer::One, Valley::K, 3).unwrap();
        assert_eq!(p3.truncated(1), p1);
        let g = m.geom.reciprocal_vector(Layer::One, [0, 1]);
        let u0 = expand_interlayer(&m, Valley::K, &g, 0).unwrap();
        let u2 = expand_interlayer(&m, Valley::K, &g, 2).unwrap();
        assert_eq!(u2.truncated(0), u0);
    }

    #[test]
    fn leading_couplings_are_equal_constants() {
        let m = model();
        let shells = hopping_shells(&m.geom, Valley::K, 1).unwrap();
        let ws: Vec<C2> = shells
            .members
            .iter()
            .map(|&nu| {
                let g = m.geom.reciprocal_vector(Layer::One, nu);
                let u = expand_interlayer(&m, Valley::K, &g, 0).unwrap();
                let direct = m.interlayer_fourier(&(m.geom.dirac[0] + g));
                assert!((u.coeff([0, 0]).unwrap() - direct).iter().all(|z| z.norm() < 1e-14 * direct[(0, 0)].norm()));
                direct
            })
            .collect();
        for w in &ws {
            assert!(w.iter().all(|z| (z - ws[0][(0, 0)]).norm() < 1e-12 * ws[0][(0, 0)].norm()));
        }
    }

    #[test]
    fn expanded_hamiltonian_converges_to_exact() {
        let m = model();
        let moire = MoireGeometry::new(&m.geom).unwrap();
        let basis = Basis::build(&moire, 3.0 * moire.shortest_length(), Valley::K).unwrap();
        let q = moire.k_m(Valley::K);
        let exact = assemble_hamiltonian(&m, &basis, &q, Truncation::Shells(2)).unwrap();
        let mut prev = f64::INFINITY;
        for k in [1, 3, 5, 8] {
            let orders = ExpansionOrders::new(k, k, 2).unwrap();
            let h = assemble_expanded_hamiltonian(&m, &basis, &q, orders).unwrap();
            assert!(hermiticity_defect(&h.matrix) < 1e-12);
            let gap = crate::linalg::max_abs(&(&h.matrix - &exact.matrix));
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-6 * 2.7, "gap at (8,8) is {prev}");
    }

    #[test]
    fn gershgorin_bound_dominates_norm_gap() {
        let m = model();
        let moire = MoireGeometry::new(&m.geom).unwrap();
        let basis = Basis::build(&moire, 2.5 * moire.shortest_length(), Valley::K).unwrap();
        let q = moire.k_m(Valley::K) + Vec2::new(0.003, -0.002);
        let exact = assemble_hamiltonian(&m, &basis, &q, Truncation::Shells(2)).unwrap();
        for k in 0..5 {
            let ex = Expansion::new(&m, Valley::K, ExpansionOrders::new(k, k, 2).unwrap()).unwrap();
            let h = ex.assemble(&m, &basis, &q).unwrap();
            let gap = crate::linalg::operator_norm(&(&h.matrix - &exact.matrix));
            let bound = ex.gershgorin_bound(&m, &basis, &q).unwrap();
            assert!(gap <= bound, "k={k}: {gap} > {bound}");
        }
    }

    #[test]
    fn bm_structure_is_recovered() {
        let m = model();
        let cm = derive_continuum_model(&m, Valley::K, ExpansionOrders::bm()).unwrap();
        let phi = BM_PHASE_STEP;
        let one = Complex64::new(1.0, 0.0);
        let t = [
            C2::new(one, one, one, one),
            C2::new(one, cis(-phi), cis(phi), one),
            C2::new(one, cis(phi), cis(-phi), one),
        ];
        let dk = cm.dk;
        let s3 = 3f64.sqrt() / 2.0;
        let s = [Vec2::new(0.0, -dk), Vec2::new(s3 * dk, dk / 2.0), Vec2::new(-s3 * dk, dk / 2.0)];
        assert_eq!(cm.interlayer.len(), 3);
        let mut hit = [false; 3];
        for term in &cm.interlayer {
            let i = s.iter().position(|x| (term.shift - x).norm() < 1e-12 * dk).unwrap();
            assert!((term.phase - t[i]).iter().all(|z| z.norm() < 1e-12));
            hit[i] = true;
        }
        assert_eq!(hit, [true; 3]);
        let kp = derive_continuum_model(&m, Valley::KPrime, ExpansionOrders::bm()).unwrap();
        for (a, b) in cm.interlayer.iter().zip(&kp.interlayer) {
            assert!((a.phase.map(|z| z.conj()) - b.phase).iter().all(|z| z.norm() < 1e-12));
            assert!((a.shift + b.shift).norm() < 1e-12 * dk);
        }
    }

    #[test]
    fn continuum_matrix_equals_expanded_matrix() {
        let m = model();
        let moire = MoireGeometry::new(&m.geom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for valley in Valley::BOTH {
            let basis = Basis::build(&moire, 2.5 * moire.shortest_length(), valley).unwrap();
            for orders in [ExpansionOrders::bm(), ExpansionOrders::new(2, 1, 2).unwrap()] {
                let ex = Expansion::new(&m, valley, orders).unwrap();
                let cm = ContinuumModel::from_expansion(&ex, &moire);
                for _ in 0..3 {
                    let q = moire.k_m(valley) + Vec2::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
                    let a = ex.assemble(&m, &basis, &q).unwrap().matrix;
                    let c = continuum_bloch_matrix(&cm, &basis, &q).unwrap().matrix;
                    assert!(hermiticity_defect(&c) < 1e-12);
                    let (ea, ec) = (sorted_eigs(&a), sorted_eigs(&c));
                    for (x, y) in ea.iter().zip(&ec) {
                        assert!((x - y).abs() < 1e-9 * 2.7);
                    }
                }
            }
        }
    }

    #[test]
    fn single_plane_wave_gives_dirac_cones() {
        let p = SimplifiedParams::default();
        let m = model().with_interlayer_scaled(0.0);
        let moire = MoireGeometry::new(&m.geom).unwrap();
        let basis = Basis::build(&moire, 1e-9, Valley::K).unwrap();
        let cm = derive_continuum_model(&m, Valley::K, ExpansionOrders::bm()).unwrap();
        let q = moire.k_m(Valley::K) + Vec2::new(0.01, 0.004);
        let e = sorted_eigs(&continuum_bloch_matrix(&cm, &basis, &q).unwrap().matrix);
        let v = 3f64.sqrt() / 2.0 * p.a * p.t;
        let mut expect: Vec<f64> = [Layer::One, Layer::Two]
            .iter()
            .flat_map(|&j| {
                let r = v * (q - m.geom.dirac_point(j, Valley::K)).norm();
                [-r, r]
            })
            .collect();
        expect.sort_by(f64::total_cmp);
        for (x, y) in e.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_interlayer_scales_coefficients_only() {
        let m = model();
        let cm = derive_continuum_model(&m, Valley::K, ExpansionOrders::new(2, 2, 2).unwrap()).unwrap();
        let cs = derive_continuum_model(&m.with_interlayer_scaled(3.0), Valley::K, cm.orders).unwrap();
        for (a, b) in cm.interlayer.iter().zip(&cs.interlayer) {
            assert_eq!(a.phase, b.phase);
            assert_eq!(a.shift, b.shift);
            for ((_, ca), (_, cb)) in a.poly.terms().zip(b.poly.terms()) {
                assert!((ca * Complex64::new(3.0, 0.0) - cb).iter().all(|z| z.norm() <= 1e-15 * cb.norm().max(1e-300)));
            }
        }
        assert_eq!(cm.intralayer, cs.intralayer);
    }
}
