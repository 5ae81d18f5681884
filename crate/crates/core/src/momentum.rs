//! Finite momentum bases and truncated momentum-space Hamiltonians.
//!
//! Layer-1 degrees of freedom sit at `q + G` with `G` on the layer-2
//! reciprocal lattice, layer-2 ones at `q + G'` with `G'` on the layer-1
//! lattice; both are labelled by the integer coordinates `n` of `G` in its
//! lattice. The basis keeps the `G` whose moiré image lies in a disk of
//! radius `Lambda`.

use std::collections::HashSet;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::geometry::{hopping_shells, Layer, MoireGeometry, Orbital, Valley};
use crate::linalg::{cis, CMatrix, C2, Vec2};
use crate::model::TBModel;
use crate::{Error, Result};

/// Largest matrix dimension built unless the caller raises the cap.
pub const DEFAULT_DIMENSION_CAP: usize = 6000;

/// One reciprocal-lattice vector of one layer; it carries both orbitals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Site {
    pub layer: Layer,
    /// Integer coordinates of `g` in the layer's degree-of-freedom lattice.
    pub n: [i64; 2],
    pub g: Vec2,
    /// Moiré image `G_M(g)`.
    pub gm: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    pub valley: Valley,
    pub lambda: f64,
    /// Centre of the truncation disk in the moiré reciprocal plane.
    pub center: Vec2,
    pub theta: f64,
    sites: Vec<Site>,
    layer_start: [usize; 2],
}

impl Basis {
    /// `{G : |G_M(G)| < Lambda}` for both layers.
    pub fn build(moire: &MoireGeometry, lambda: f64, valley: Valley) -> Result<Self> {
        Self::build_centered(moire, lambda, valley, Vec2::zeros(), DEFAULT_DIMENSION_CAP)
    }

    /// `{G : |G_M(G) - center| < Lambda}`, refusing more than `cap` rows.
    pub fn build_centered(
        moire: &MoireGeometry,
        lambda: f64,
        valley: Valley,
        center: Vec2,
        cap: usize,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param("lambda", format!("truncation radius must be positive, got {lambda}")));
        }
        // Any n with |2 pi Theta n - c| < Lambda has |n_i| <= ||(2 pi Theta)^-1|| (Lambda + |c|).
        let reach = moire.inverse_norm() * (lambda + center.norm());
        let estimate = 2.0 * 2.0 * std::f64::consts::PI * lambda * lambda / moire.cell_area();
        if !reach.is_finite() || estimate > 4.0 * cap as f64 + 64.0 {
            return Err(Error::Resource(format!(
                "a cutoff of {lambda} needs about {estimate:.0} rows, above the cap of {cap}"
            )));
        }
        let w = reach.ceil() as i64 + 1;

        let mut sites = Vec::new();
        let mut layer_start = [0; 2];
        for layer in Layer::BOTH {
            layer_start[layer.index()] = sites.len();
            let lattice = layer.dof_lattice();
            let mut found: Vec<(f64, Site)> = Vec::new();
            for i in -w..=w {
                for j in -w..=w {
                    let n = [i, j];
                    let gm = moire.moire_vector(n) * lattice.parity();
                    let dist = (gm - center).norm();
                    if dist < lambda {
                        let g = moire.layers.reciprocal_vector(lattice, n);
                        found.push((dist, Site { layer, n, g, gm }));
                    }
                }
            }
            found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.n.cmp(&b.1.n)));
            sites.extend(found.into_iter().map(|(_, s)| s));
        }
        if 2 * sites.len() > cap {
            return Err(Error::Resource(format!(
                "basis has {} rows, above the cap of {cap}",
                2 * sites.len()
            )));
        }
        Ok(Self {
            valley,
            lambda,
            center,
            theta: moire.layers.theta,
            sites,
            layer_start,
        })
    }

    pub fn dimension(&self) -> usize {
        2 * self.sites.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn layer_sites(&self, layer: Layer) -> &[Site] {
        match layer {
            Layer::One => &self.sites[..self.layer_start[1]],
            Layer::Two => &self.sites[self.layer_start[1]..],
        }
    }

    /// Row of the first layer-`layer` site.
    pub fn layer_offset(&self, layer: Layer) -> usize {
        2 * self.layer_start[layer.index()]
    }

    /// `(layer, G, sigma)` per row.
    pub fn elements(&self) -> impl Iterator<Item = (Layer, Vec2, Orbital)> + '_ {
        self.sites
            .iter()
            .flat_map(|s| Orbital::BOTH.into_iter().map(move |o| (s.layer, s.g, o)))
    }

    pub fn index_of(&self, layer: Layer, n: [i64; 2], orbital: Orbital) -> Option<usize> {
        self.layer_sites(layer)
            .iter()
            .position(|s| s.n == n)
            .map(|p| self.layer_offset(layer) + 2 * p + orbital.index())
    }
}

/// Which interlayer couplings are kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    /// Only `n + n'` in the `tau` smallest hopping shells.
    Shells(usize),
    All,
}

impl Truncation {
    pub(crate) fn mask(self, model: &TBModel, valley: Valley) -> Result<Option<HashSet<[i64; 2]>>> {
        Ok(match self {
            Truncation::All => None,
            Truncation::Shells(tau) => Some(hopping_shells(&model.geom, valley, tau)?.members.into_iter().collect()),
        })
    }
}

pub(crate) fn keeps(mask: &Option<HashSet<[i64; 2]>>, n: [i64; 2], np: [i64; 2]) -> bool {
    mask.as_ref().is_none_or(|m| m.contains(&[n[0] + np[0], n[1] + np[1]]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumHamiltonian {
    pub matrix: CMatrix,
    pub q: Vec2,
    pub truncation: Truncation,
}

impl MomentumHamiltonian {
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Fills the intralayer diagonal blocks and the upper interlayer block, then
/// mirrors the latter.
pub(crate) fn assemble_blocks<FI, FX>(basis: &Basis, intra: FI, inter: FX) -> CMatrix
where
    FI: Fn(&Site) -> C2,
    FX: Fn(&Site, &Site) -> Option<C2>,
{
    let dim = basis.dimension();
    let mut h = CMatrix::zeros(dim, dim);
    for (k, site) in basis.sites().iter().enumerate() {
        let b = intra(site);
        for s in 0..2 {
            for sp in 0..2 {
                h[(2 * k + s, 2 * k + sp)] = b[(s, sp)];
            }
        }
    }
    let off1 = basis.layer_offset(Layer::One);
    let off2 = basis.layer_offset(Layer::Two);
    for (i, s1) in basis.layer_sites(Layer::One).iter().enumerate() {
        for (j, s2) in basis.layer_sites(Layer::Two).iter().enumerate() {
            if let Some(b) = inter(s1, s2) {
                for s in 0..2 {
                    for sp in 0..2 {
                        let (r, c) = (off1 + 2 * i + s, off2 + 2 * j + sp);
                        h[(r, c)] = b[(s, sp)];
                        h[(c, r)] = b[(s, sp)].conj();
                    }
                }
            }
        }
    }
    h
}

/// `T^{sigma sigma'} = e^{i G' . tau_{1 sigma}} e^{-i G . tau_{2 sigma'}}` for a
/// layer-1 site `G` and a layer-2 site `G'`.
pub(crate) fn phase_matrix(model: &TBModel, g: &Vec2, gp: &Vec2) -> C2 {
    let geom = &model.geom;
    C2::from_fn(|s, sp| {
        let t1 = geom.tau(Layer::One, Orbital::from_index(s));
        let t2 = geom.tau(Layer::Two, Orbital::from_index(sp));
        cis(gp.dot(&t1) - g.dot(&t2))
    })
}

pub(crate) fn check_basis(model: &TBModel, basis: &Basis) -> Result<()> {
    if (model.geom.theta - basis.theta).abs() > 1e-14 {
        return Err(Error::param(
            "theta",
            format!("basis was built for twist {} but the model uses {}", basis.theta, model.geom.theta),
        ));
    }
    Ok(())
}

/// The truncated momentum-space Hamiltonian at `q`.
pub fn assemble_hamiltonian(
    model: &TBModel,
    basis: &Basis,
    q: &Vec2,
    truncation: Truncation,
) -> Result<MomentumHamiltonian> {
    check_basis(model, basis)?;
    let mask = truncation.mask(model, basis.valley)?;
    let matrix = assemble_blocks(
        basis,
        |s| model.intralayer_bloch(s.layer, &(q + s.g)),
        |s1, s2| {
            keeps(&mask, s1.n, s2.n).then(|| {
                let t = phase_matrix(model, &s1.g, &s2.g);
                t.component_mul(&model.interlayer_fourier(&(q + s1.g + s2.g)))
            })
        },
    );
    Ok(MomentumHamiltonian {
        matrix,
        q: *q,
        truncation,
    })
}

/// `(2 + alpha)` times the largest singular value of the interlayer block.
pub fn coupling_strength_eta(model: &TBModel, basis: &Basis, q: &Vec2, alpha: f64) -> Result<f64> {
    let n1 = basis.layer_sites(Layer::One).len();
    let n2 = basis.layer_sites(Layer::Two).len();
    if n1 == 0 || n2 == 0 {
        return Err(Error::Domain("coupling strength needs sites in both layers".into()));
    }
    let h = assemble_hamiltonian(model, basis, q, Truncation::All)?;
    let x = h
        .matrix
        .view((basis.layer_offset(Layer::One), basis.layer_offset(Layer::Two)), (2 * n1, 2 * n2))
        .into_owned();
    Ok((2.0 + alpha) * largest_singular_value(&x))
}

/// Power iteration on `X^dagger X` until the Rayleigh quotient settles to 1e-10.
fn largest_singular_value(x: &CMatrix) -> f64 {
    let cols = x.ncols();
    let mut v = DVector::from_fn(cols, |i, _| Complex64::new(1.0 + 0.1 * (i as f64 + 1.0).sqrt(), 0.3 * i as f64 % 1.0));
    v /= Complex64::new(v.norm(), 0.0);
    let mut prev = 0.0;
    for _ in 0..100_000 {
        let w = x.adjoint() * (x * &v);
        let lam = v.dotc(&w).re;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / Complex64::new(nw, 0.0);
        if (lam - prev).abs() <= 1e-12 * lam.abs() {
            return lam.max(0.0).sqrt();
        }
        prev = lam;
    }
    prev.max(0.0).sqrt()
}
