//! Layer lattices, Dirac points, the moiré reciprocal lattice and the maps
//! between monolayer and moiré reciprocal vectors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::linalg::{ivec, rotation, Mat2, Vec2};
use crate::{Error, Result};

/// Tolerance on integer lattice coordinates when testing lattice membership.
pub const LATTICE_TOL: f64 = 1e-6;
/// Relative tolerance for grouping equal magnitudes into one hopping shell.
pub const SHELL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    One,
    Two,
}

impl Layer {
    pub const BOTH: [Layer; 2] = [Layer::One, Layer::Two];

    pub fn index(self) -> usize {
        match self {
            Layer::One => 0,
            Layer::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(j: u8) -> Result<Self> {
        match j {
            1 => Ok(Layer::One),
            2 => Ok(Layer::Two),
            _ => Err(Error::param("layer", format!("expected 1 or 2, got {j}"))),
        }
    }

    /// `(-1)^j`.
    pub fn parity(self) -> f64 {
        match self {
            Layer::One => -1.0,
            Layer::Two => 1.0,
        }
    }

    pub fn other(self) -> Layer {
        match self {
            Layer::One => Layer::Two,
            Layer::Two => Layer::One,
        }
    }

    /// Reciprocal lattice that labels this layer's momentum-space degrees of
    /// freedom: layer 1 lives on the layer-2 reciprocal lattice and vice versa.
    pub fn dof_lattice(self) -> Layer {
        self.other()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orbital {
    A,
    B,
}

impl Orbital {
    pub const BOTH: [Orbital; 2] = [Orbital::A, Orbital::B];

    pub fn index(self) -> usize {
        match self {
            Orbital::A => 0,
            Orbital::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Orbital {
        if i == 0 {
            Orbital::A
        } else {
            Orbital::B
        }
    }
}

impl fmt::Display for Orbital {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orbital::A => "A",
            Orbital::B => "B",
        })
    }
}

impl FromStr for Orbital {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Orbital::A),
            "B" => Ok(Orbital::B),
            _ => Err(Error::param("orbital", format!("expected A or B, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Valley {
    K,
    KPrime,
}

impl Valley {
    pub const BOTH: [Valley; 2] = [Valley::K, Valley::KPrime];

    /// `+1` for `K`, `-1` for `K'` (`K' = -K`).
    pub fn sign(self) -> f64 {
        match self {
            Valley::K => 1.0,
            Valley::KPrime => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Valley::K => "K",
            Valley::KPrime => "Kp",
        }
    }
}

impl fmt::Display for Valley {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Valley {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" => Ok(Valley::K),
            "Kp" | "K'" | "KPrime" | "Kprime" => Ok(Valley::KPrime),
            _ => Err(Error::param("valley", format!("unknown valley `{s}` (use K or Kp)"))),
        }
    }
}

/// Monolayer lattices of the two rotated sheets.
///
/// Layer 1 is rotated by `-theta/2` and layer 2 by `+theta/2` relative to the
/// reference honeycomb with `a_1 = a/2 (1, sqrt 3)`, `a_2 = a/2 (-1, sqrt 3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGeometry {
    pub a: f64,
    pub theta: f64,
    /// `A_j`, columns are the lattice vectors.
    pub lattice: [Mat2; 2],
    /// `2 pi A_j^{-T}`.
    pub reciprocal: [Mat2; 2],
    /// `K_j`; the `K'` points are their negatives.
    pub dirac: [Vec2; 2],
    /// `tau_{j sigma}` indexed `[layer][orbital]`.
    pub orbitals: [[Vec2; 2]; 2],
}

impl LayerGeometry {
    /// Builds both sheets. `theta = 0` is accepted (aligned sheets) although no
    /// moiré lattice exists in that case.
    pub fn new(a: f64, theta: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param("a", format!("lattice constant must be positive, got {a}")));
        }
        if !(theta.is_finite() && (0.0..PI / 6.0).contains(&theta)) {
            return Err(Error::param(
                "theta",
                format!("twist angle must lie in [0, pi/6) radians, got {theta}"),
            ));
        }
        let s3 = 3f64.sqrt();
        let base = Mat2::new(a / 2.0, -a / 2.0, a * s3 / 2.0, a * s3 / 2.0);
        let k = Vec2::new(4.0 * PI / (3.0 * a), 0.0);
        let tau = [Vec2::zeros(), Vec2::new(0.0, a / s3)];

        let rot = [rotation(-theta / 2.0), rotation(theta / 2.0)];
        let lattice = [rot[0] * base, rot[1] * base];
        let reciprocal = lattice.map(|l| {
            2.0 * PI
                * l.try_inverse()
                    .expect("honeycomb lattice matrix is invertible")
                    .transpose()
        });
        Ok(Self {
            a,
            theta,
            lattice,
            reciprocal,
            dirac: [rot[0] * k, rot[1] * k],
            orbitals: [[rot[0] * tau[0], rot[0] * tau[1]], [rot[1] * tau[0], rot[1] * tau[1]]],
        })
    }

    /// Unrotated Dirac point `K = 4 pi / (3a) (1, 0)`.
    pub fn monolayer_dirac(&self) -> Vec2 {
        Vec2::new(4.0 * PI / (3.0 * self.a), 0.0)
    }

    /// `K_j` or `K'_j = -K_j`.
    pub fn dirac_point(&self, layer: Layer, valley: Valley) -> Vec2 {
        self.dirac[layer.index()] * valley.sign()
    }

    pub fn tau(&self, layer: Layer, orbital: Orbital) -> Vec2 {
        self.orbitals[layer.index()][orbital.index()]
    }

    pub fn lattice_vector(&self, layer: Layer, n: [i64; 2]) -> Vec2 {
        self.lattice[layer.index()] * ivec(n)
    }

    pub fn reciprocal_vector(&self, layer: Layer, n: [i64; 2]) -> Vec2 {
        self.reciprocal[layer.index()] * ivec(n)
    }

    /// `|Gamma_j^*|`, the reciprocal unit-cell area.
    pub fn reciprocal_cell_area(&self, layer: Layer) -> f64 {
        self.reciprocal[layer.index()].determinant().abs()
    }

    /// `c_j^* = |Gamma_j^*|^{1/2}`.
    pub fn bloch_norm(&self, layer: Layer) -> f64 {
        self.reciprocal_cell_area(layer).sqrt()
    }

    /// `I(G) = A_j^T G / 2 pi` for `G` on the layer-`j` reciprocal lattice.
    pub fn lattice_index(&self, layer: Layer, g: &Vec2) -> Result<[i64; 2]> {
        let coords = self.lattice[layer.index()].transpose() * g / (2.0 * PI);
        round_coords(&coords).ok_or_else(|| {
            Error::Domain(format!(
                "vector ({}, {}) is not on the layer-{} reciprocal lattice",
                g.x,
                g.y,
                layer.number()
            ))
        })
    }
}

fn round_coords(c: &Vec2) -> Option<[i64; 2]> {
    let r = [c.x.round(), c.y.round()];
    if (c.x - r[0]).abs() <= LATTICE_TOL && (c.y - r[1]).abs() <= LATTICE_TOL {
        Some([r[0] as i64, r[1] as i64])
    } else {
        None
    }
}

/// Labels of the moiré high-symmetry points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetryPoint {
    K,
    KPrime,
    Gamma,
    M,
}

impl FromStr for SymmetryPoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "K_M" | "KM" => Ok(SymmetryPoint::K),
            "Kp" | "K'" | "K'_M" | "Kp_M" | "KpM" => Ok(SymmetryPoint::KPrime),
            "G" | "Gamma" | "Gamma_M" | "GammaM" => Ok(SymmetryPoint::Gamma),
            "M" | "M_M" | "MM" => Ok(SymmetryPoint::M),
            _ => Err(Error::param("path", format!("unknown high-symmetry label `{s}`"))),
        }
    }
}

impl fmt::Display for SymmetryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymmetryPoint::K => "K_M",
            SymmetryPoint::KPrime => "K'_M",
            SymmetryPoint::Gamma => "Gamma_M",
            SymmetryPoint::M => "M_M",
        })
    }
}

/// The moiré reciprocal lattice `2 pi Theta Z^2`, `Theta = A_2^{-T} - A_1^{-T}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MoireGeometry {
    pub layers: LayerGeometry,
    /// `Theta`.
    pub theta_matrix: Mat2,
    /// `2 pi Theta`, generator of the moiré reciprocal lattice.
    pub reciprocal: Mat2,
    /// `|Delta K| = 2|K| sin(theta/2)`.
    pub dk: f64,
}

impl MoireGeometry {
    pub fn new(layers: &LayerGeometry) -> Result<Self> {
        if layers.theta <= 0.0 {
            return Err(Error::param("theta", "a moiré lattice needs a non-zero twist"));
        }
        let reciprocal = layers.reciprocal[1] - layers.reciprocal[0];
        Ok(Self {
            layers: layers.clone(),
            theta_matrix: reciprocal / (2.0 * PI),
            reciprocal,
            dk: 2.0 * layers.monolayer_dirac().norm() * (layers.theta / 2.0).sin(),
        })
    }

    pub fn from_params(a: f64, theta: f64) -> Result<Self> {
        Self::new(&LayerGeometry::new(a, theta)?)
    }

    pub fn moire_vector(&self, n: [i64; 2]) -> Vec2 {
        self.reciprocal * ivec(n)
    }

    /// `|Gamma_M^*|`.
    pub fn cell_area(&self) -> f64 {
        self.reciprocal.determinant().abs()
    }

    /// Length of the shortest generator column of `2 pi Theta`.
    pub fn shortest_length(&self) -> f64 {
        self.reciprocal
            .column(0)
            .norm()
            .min(self.reciprocal.column(1).norm())
    }

    /// `||(2 pi Theta)^{-1}||`, bounds integer coordinates of vectors in a disk.
    pub(crate) fn inverse_norm(&self) -> f64 {
        let s = self.reciprocal.singular_values();
        1.0 / s.min()
    }

    /// Integer coordinates `(2 pi Theta)^{-1} G_M`.
    pub fn moire_index(&self, gm: &Vec2) -> Result<[i64; 2]> {
        let inv = self
            .reciprocal
            .try_inverse()
            .expect("moiré lattice matrix is invertible for non-zero twist");
        round_coords(&(inv * gm)).ok_or_else(|| {
            Error::Domain(format!("vector ({}, {}) is not on the moiré reciprocal lattice", gm.x, gm.y))
        })
    }

    /// `G_M(G) = (-1)^j Theta A_j^T G` for `G` on the layer-`j` reciprocal lattice.
    pub fn map_to_moire(&self, g: &Vec2, lattice: Layer) -> Result<Vec2> {
        let n = self.layers.lattice_index(lattice, g)?;
        Ok(self.moire_vector(n) * lattice.parity())
    }

    /// `G_j(G_M) = A_j^{-T} Theta^{-1} G_M`.
    pub fn map_from_moire(&self, gm: &Vec2, lattice: Layer) -> Result<Vec2> {
        let n = self.moire_index(gm)?;
        Ok(self.layers.reciprocal_vector(lattice, n))
    }

    /// Moiré high-symmetry point for the given valley; `K'` valley points are
    /// the negatives of the `K` valley ones.
    ///
    /// `Gamma_M` is the centre of the moiré hexagon with corners `K_1`, `K_2`
    /// and `M_M` is the midpoint of the edge joining them.
    pub fn symmetry_point(&self, point: SymmetryPoint, valley: Valley) -> Vec2 {
        let k1 = self.layers.dirac[0];
        let k2 = self.layers.dirac[1];
        let mid = (k1 + k2) / 2.0;
        let edge = k2 - k1;
        let normal = Vec2::new(-edge.y, edge.x) / edge.norm();
        let p = match point {
            SymmetryPoint::K => k1,
            SymmetryPoint::KPrime => k2,
            SymmetryPoint::M => mid,
            SymmetryPoint::Gamma => mid + normal * (3f64.sqrt() / 2.0 * self.dk),
        };
        p * valley.sign()
    }

    /// Moiré Dirac point `K_M = K_1` of the valley (`-K_1` for `K'`).
    pub fn k_m(&self, valley: Valley) -> Vec2 {
        self.symmetry_point(SymmetryPoint::K, valley)
    }
}

/// The hopping index set `B_tau`: integer vectors `n` whose magnitude
/// `|K~_1 + 2 pi A_1^{-T} n|` lies in one of the `tau` smallest distinct shells.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellSet {
    pub valley: Valley,
    /// Members ordered by shell, then lexicographically.
    pub members: Vec<[i64; 2]>,
    /// Shell number (0-based) of each member.
    pub shell: Vec<usize>,
    /// Representative magnitude of each shell.
    pub magnitudes: Vec<f64>,
}

impl ShellSet {
    pub fn contains(&self, n: [i64; 2]) -> bool {
        self.members.contains(&n)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn hopping_shells(geom: &LayerGeometry, valley: Valley, tau: usize) -> Result<ShellSet> {
    if tau == 0 {
        return Err(Error::param("tau", "need at least one hopping shell"));
    }
    let k1 = geom.dirac[0];
    let b1 = geom.reciprocal[0];
    let a_norm = geom.lattice[0].transpose().norm();
    let mut half_width: i64 = 2;
    loop {
        let mut cands: Vec<(f64, [i64; 2])> = Vec::new();
        for i in -half_width..=half_width {
            for j in -half_width..=half_width {
                let n = [i, j];
                cands.push(((k1 + b1 * ivec(n)).norm(), n));
            }
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

        let mut magnitudes: Vec<f64> = Vec::new();
        let mut grouped: Vec<(usize, [i64; 2])> = Vec::new();
        for &(m, n) in &cands {
            let is_new = match magnitudes.last() {
                None => true,
                Some(&start) => (m - start) > SHELL_TOL * start.max(f64::MIN_POSITIVE),
            };
            if is_new {
                if magnitudes.len() == tau {
                    break;
                }
                magnitudes.push(m);
            }
            grouped.push((magnitudes.len() - 1, n));
        }
        // Every n with |K_1 + B_1 n| <= r satisfies |n_i| <= |A_1^T| (r + |K|) / 2 pi.
        let outermost = *magnitudes.last().expect("at least one candidate");
        let needed = a_norm * (outermost * (1.0 + 1e-6) + k1.norm()) / (2.0 * PI);
        if magnitudes.len() == tau && needed < half_width as f64 {
            grouped.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
            let sign = valley.sign() as i64;
            return Ok(ShellSet {
                valley,
                members: grouped.iter().map(|&(_, n)| [sign * n[0], sign * n[1]]).collect(),
                shell: grouped.iter().map(|&(s, _)| s).collect(),
                magnitudes,
            });
        }
        half_width *= 2;
    }
}
