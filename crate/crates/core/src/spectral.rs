//! Dense Hermitian spectra, band structures along the moiré high-symmetry
//! path and Gaussian-smeared densities of states.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::ops::Range;

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::exec::Execution;
use crate::geometry::{MoireGeometry, SymmetryPoint, Valley};
use crate::linalg::{hermiticity_defect, CMatrix, Vec2};
use crate::model::TBModel;
use crate::momentum::{assemble_hamiltonian, Basis, MomentumHamiltonian, Truncation};
use crate::taylor::{continuum_bloch_matrix, derive_continuum_model, ContinuumModel, Expansion, ExpansionOrders};
use crate::{Error, Result};

/// Largest `|H - H^dagger|` entry accepted by the eigensolvers.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Residual `||Hv - lambda v|| / ||H||` accepted on spot-checked pairs.
pub const RESIDUAL_TOL: f64 = 1e-9;
const SPOT_CHECKS: usize = 5;

fn to_faer(h: &CMatrix) -> Mat<Complex64> {
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)])
}

fn check_hermitian(h: &CMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::Contract(format!("matrix is {}x{}, not square", h.nrows(), h.ncols())));
    }
    let d = hermiticity_defect(h);
    if !(d <= HERMITICITY_TOL) {
        return Err(Error::Contract(format!("matrix is not Hermitian, defect {d:e}")));
    }
    Ok(())
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors (columns).
///
/// Five pairs spread over the spectrum are checked against
/// `||Hv - lambda v|| <= 1e-9 ||H||`.
pub fn eigenpairs(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    check_hermitian(h)?;
    let n = h.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let evd = to_faer(h)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Contract(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    let values: Vec<f64> = order.iter().map(|&k| s[k].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);

    let norm = values[0].abs().max(values[n - 1].abs());
    for k in 0..SPOT_CHECKS.min(n) {
        let j = if n == 1 { 0 } else { k * (n - 1) / (SPOT_CHECKS - 1).max(1) }.min(n - 1);
        let v = vectors.column(j);
        let r = (h * v - v * Complex64::new(values[j], 0.0)).norm();
        if r > RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Contract(format!(
                "eigenpair {j} has residual {r:e} against a norm of {norm:e}"
            )));
        }
    }
    Ok((values, vectors))
}

/// The full spectrum of a Hermitian matrix, ascending.
pub fn eigenvalues(h: &CMatrix) -> Result<Vec<f64>> {
    eigenpairs(h).map(|(v, _)| v)
}

/// Ascending spectrum without eigenvectors or residual checks, for sweeps
/// whose Hamiltonians are Hermitian by construction.
pub(crate) fn spectrum(h: &CMatrix) -> Result<Vec<f64>> {
    check_hermitian(h)?;
    let mut v = to_faer(h)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Contract(format!("eigensolver failed: {e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Which approximation of the momentum-space Hamiltonian to diagonalize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    /// Exact hopping functions, interlayer couplings restricted by `Truncation`.
    Exact(Truncation),
    /// Taylor-expanded hopping functions on the moiré basis. An order of
    /// `None` keeps the exact hopping function for that part.
    Expanded {
        m: Option<usize>,
        n: Option<usize>,
        tau: usize,
    },
    /// The exported continuum model in its plane-wave basis.
    Continuum(ExpansionOrders),
}

impl Family {
    pub fn expanded(orders: ExpansionOrders) -> Self {
        Family::Expanded {
            m: Some(orders.m),
            n: Some(orders.n),
            tau: orders.tau,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = |x: Option<usize>| x.map_or("inf".to_string(), |v| v.to_string());
        match self {
            Family::Exact(Truncation::All) => write!(f, "exact"),
            Family::Exact(Truncation::Shells(t)) => write!(f, "exact-tau{t}"),
            Family::Expanded { m, n, tau } => write!(f, "expanded-{}-{}-{tau}", o(*m), o(*n)),
            Family::Continuum(c) => write!(f, "continuum-{}-{}-{}", c.m, c.n, c.tau),
        }
    }
}

enum Kind {
    Exact(Truncation),
    Expanded(Expansion, [bool; 2]),
    Continuum(ContinuumModel),
}

/// A family prepared once (expansions derived, shells enumerated) and then
/// assembled at many momenta.
pub struct Assembler<'a> {
    model: &'a TBModel,
    valley: Valley,
    kind: Kind,
}

impl<'a> Assembler<'a> {
    pub fn new(model: &'a TBModel, family: Family, valley: Valley) -> Result<Self> {
        let kind = match family {
            Family::Exact(t) => Kind::Exact(t),
            Family::Expanded { m, n, tau } => {
                let orders = ExpansionOrders::new(m.unwrap_or(0), n.unwrap_or(0), tau)?;
                Kind::Expanded(Expansion::new(model, valley, orders)?, [m.is_some(), n.is_some()])
            }
            Family::Continuum(orders) => Kind::Continuum(derive_continuum_model(model, valley, orders)?),
        };
        Ok(Self { model, valley, kind })
    }

    pub fn valley(&self) -> Valley {
        self.valley
    }

    pub fn hamiltonian(&self, basis: &Basis, q: &Vec2) -> Result<MomentumHamiltonian> {
        if basis.valley != self.valley {
            return Err(Error::param("valley", "basis and family belong to different valleys"));
        }
        match &self.kind {
            Kind::Exact(t) => assemble_hamiltonian(self.model, basis, q, *t),
            Kind::Expanded(ex, expand) => ex.assemble_mixed(self.model, basis, q, *expand),
            Kind::Continuum(cm) => continuum_bloch_matrix(cm, basis, q),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathVertex {
    pub label: SymmetryPoint,
    pub q: Vec2,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPoint {
    /// Cumulative arc length.
    pub s: f64,
    pub q: Vec2,
}

/// Piecewise-straight path through moiré high-symmetry points.
#[derive(Clone, Debug, PartialEq)]
pub struct BandPath {
    pub valley: Valley,
    pub vertices: Vec<PathVertex>,
    pub samples_per_segment: usize,
    pub points: Vec<PathPoint>,
}

impl BandPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn momenta(&self) -> Vec<Vec2> {
        self.points.iter().map(|p| p.q).collect()
    }
}

pub const DEFAULT_PATH: [&str; 4] = ["K_M", "Gamma_M", "M_M", "K_M"];

/// Samples `samples_per_segment` points per segment, starting at each vertex,
/// and closes with the last vertex; `1` gives the vertices alone.
pub fn bz_path<S: AsRef<str>>(
    moire: &MoireGeometry,
    labels: &[S],
    samples_per_segment: usize,
    valley: Valley,
) -> Result<BandPath> {
    if labels.len() < 2 {
        return Err(Error::param("path", "needs at least two labels"));
    }
    if samples_per_segment == 0 {
        return Err(Error::param("samples_per_segment", "must be positive"));
    }
    let points: Vec<(SymmetryPoint, Vec2)> = labels
        .iter()
        .map(|l| {
            let p: SymmetryPoint = l.as_ref().parse()?;
            Ok((p, moire.symmetry_point(p, valley)))
        })
        .collect::<Result<_>>()?;

    let mut vertices = Vec::with_capacity(points.len());
    let mut samples = Vec::new();
    let mut s0 = 0.0;
    for (i, w) in points.windows(2).enumerate() {
        let (a, b) = (w[0].1, w[1].1);
        let len = (b - a).norm();
        if len == 0.0 {
            return Err(Error::param("path", format!("segment {} has zero length", i + 1)));
        }
        vertices.push(PathVertex { label: w[0].0, q: a, s: s0 });
        for k in 0..samples_per_segment {
            let f = k as f64 / samples_per_segment as f64;
            samples.push(PathPoint {
                s: s0 + f * len,
                q: if k == 0 { a } else { a + (b - a) * f },
            });
        }
        s0 += len;
    }
    let (label, q) = *points.last().expect("two labels");
    vertices.push(PathVertex { label, q, s: s0 });
    samples.push(PathPoint { s: s0, q });
    Ok(BandPath {
        valley,
        vertices,
        samples_per_segment,
        points: samples,
    })
}

/// Sorted eigenvalues at every path point.
#[derive(Clone, Debug, PartialEq)]
pub struct BandData {
    pub path: BandPath,
    pub energies: Vec<Vec<f64>>,
    pub family: Family,
    pub lambda: f64,
}

impl BandData {
    pub fn dimension(&self) -> usize {
        self.energies.first().map_or(0, Vec::len)
    }

    /// `s,qx,qy,E1..En` with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,qx,qy");
        for i in 1..=self.dimension() {
            let _ = write!(out, ",E{i}");
        }
        out.push('\n');
        for (p, row) in self.path.points.iter().zip(&self.energies) {
            let _ = write!(out, "{},{},{}", sig12(p.s), sig12(p.q.x), sig12(p.q.y));
            for e in row {
                let _ = write!(out, ",{}", sig12(*e));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Band structure of `family` along `path`, one eigensolve per point.
pub fn band_structure(
    model: &TBModel,
    family: Family,
    basis: &Basis,
    path: &BandPath,
    exec: Execution,
) -> Result<BandData> {
    if basis.valley != path.valley {
        return Err(Error::param("valley", "basis and path belong to different valleys"));
    }
    let assembler = Assembler::new(model, family, path.valley)?;
    let energies = exec.try_map(&path.points, |p| spectrum(&assembler.hamiltonian(basis, &p.q)?.matrix))?;
    Ok(BandData {
        path: path.clone(),
        energies,
        family,
        lambda: basis.lambda,
    })
}

/// Indices of the `count` eigenvalues around charge neutrality, `dim / 2`.
pub fn central_window(dim: usize, count: usize) -> Range<usize> {
    let lo = (dim / 2).saturating_sub(count / 2);
    lo..(lo + count).min(dim)
}

/// Number of eigenvalues compared when families are ranked against each other.
pub const CENTRAL_BANDS: usize = 6;

/// `max |e_i - e'_i| / W` over the path and the six central bands, `W` the
/// largest `|e_i|` of those bands in `reference`, floored at `1e-12 t`.
pub fn central_relative_error(reference: &BandData, other: &BandData, t: f64) -> Result<f64> {
    if reference.path.len() != other.path.len() {
        return Err(Error::param("path", "band data sampled on different paths"));
    }
    let mut scale: f64 = 1e-12 * t;
    let mut worst: f64 = 0.0;
    for (a, b) in reference.energies.iter().zip(&other.energies) {
        let (wa, wb) = (central_window(a.len(), CENTRAL_BANDS), central_window(b.len(), CENTRAL_BANDS));
        for (x, y) in a[wa].iter().zip(&b[wb]) {
            scale = scale.max(x.abs());
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst / scale)
}

/// Width of the two central bands and their separation from the bands on
/// either side, over the whole path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatBand {
    pub bottom: f64,
    pub top: f64,
    /// Highest energy of the band below the pair.
    pub below: f64,
    /// Lowest energy of the band above the pair.
    pub above: f64,
}

impl FlatBand {
    pub fn of(bands: &BandData) -> Result<Self> {
        let mut fb = FlatBand {
            bottom: f64::INFINITY,
            top: f64::NEG_INFINITY,
            below: f64::NEG_INFINITY,
            above: f64::INFINITY,
        };
        for row in &bands.energies {
            let c = row.len() / 2;
            if c < 2 || c + 2 > row.len() {
                return Err(Error::param("bands", "needs at least two bands on each side of neutrality"));
            }
            fb.bottom = fb.bottom.min(row[c - 1]);
            fb.top = fb.top.max(row[c]);
            fb.below = fb.below.max(row[c - 2]);
            fb.above = fb.above.min(row[c + 1]);
        }
        Ok(fb)
    }

    pub fn width(&self) -> f64 {
        self.top - self.bottom
    }

    /// Smaller of the two separations; negative when bands overlap in energy.
    pub fn gap(&self) -> f64 {
        (self.above - self.top).min(self.bottom - self.below)
    }
}

/// Energy grid, smearing and quadrature for a density of states.
#[derive(Clone, Debug, PartialEq)]
pub struct DosSpec {
    pub energies: Vec<f64>,
    pub epsilon: f64,
    /// The quadrature grid is `n x n` over one moiré reciprocal cell.
    pub n: usize,
    pub valleys: Vec<Valley>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DosCurve {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub epsilon: f64,
    /// `1 / (2 (|Gamma_1^*| + |Gamma_2^*|))`.
    pub nu_star: f64,
    pub n: usize,
    pub valleys: Vec<Valley>,
    /// `|Gamma_M^*|`.
    pub cell_area: f64,
    /// Basis dimension summed over valleys.
    pub dimension: usize,
}

impl DosCurve {
    /// Trapezoid rule over the energy grid.
    pub fn integral(&self) -> f64 {
        self.energies
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(e, d)| 0.5 * (e[1] - e[0]) * (d[0] + d[1]))
            .sum()
    }

    /// `nu^* |Gamma_M^*| dim`, the exact integral over the real line.
    pub fn total_weight(&self) -> f64 {
        self.nu_star * self.cell_area * self.dimension as f64
    }

    /// `E,D` with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,D\n");
        for (e, d) in self.energies.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", sig12(*e), sig12(*d));
        }
        out
    }
}

/// Half-shifted `n x n` grid over `K_M + Gamma_M^*`.
pub fn quadrature_grid(moire: &MoireGeometry, valley: Valley, n: usize) -> Vec<Vec2> {
    let origin = moire.k_m(valley);
    let (b1, b2) = (moire.moire_vector([1, 0]), moire.moire_vector([0, 1]));
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (u, v) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            pts.push(origin + b1 * u + b2 * v);
        }
    }
    pts
}

/// `D(E) = nu^* sum_valleys |Gamma_M^*| / N^2 sum_q sum_i delta_eps(E - e_i(q))`
/// with a unit-mass Gaussian `delta_eps`, on the basis of radius `lambda`.
pub fn density_of_states(
    model: &TBModel,
    family: Family,
    lambda: f64,
    spec: &DosSpec,
    exec: Execution,
) -> Result<DosCurve> {
    if !(spec.epsilon.is_finite() && spec.epsilon > 0.0) {
        return Err(Error::param("epsilon", "smearing width must be positive"));
    }
    if spec.n < 4 {
        return Err(Error::param("n", format!("quadrature needs n >= 4, got {}", spec.n)));
    }
    if spec.valleys.is_empty() {
        return Err(Error::param("valleys", "at least one valley is required"));
    }
    let moire = MoireGeometry::new(&model.geom)?;
    let nu_star = 0.5
        / (model.geom.reciprocal_cell_area(crate::Layer::One) + model.geom.reciprocal_cell_area(crate::Layer::Two));
    let weight = nu_star * moire.cell_area() / (spec.n * spec.n) as f64;

    let mut values = vec![0.0; spec.energies.len()];
    let mut dimension = 0;
    for &valley in &spec.valleys {
        let basis = Basis::build(&moire, lambda, valley)?;
        dimension += basis.dimension();
        let assembler = Assembler::new(model, family, valley)?;
        let grid = quadrature_grid(&moire, valley, spec.n);
        let spectra = exec.try_map(&grid, |q| spectrum(&assembler.hamiltonian(&basis, q)?.matrix))?;
        let mut levels: Vec<f64> = spectra.into_iter().flatten().collect();
        levels.sort_by(f64::total_cmp);
        let part = gaussian_sum(&levels, &spec.energies, spec.epsilon, exec);
        for (v, p) in values.iter_mut().zip(part) {
            *v += weight * p;
        }
    }
    Ok(DosCurve {
        energies: spec.energies.clone(),
        values,
        epsilon: spec.epsilon,
        nu_star,
        n: spec.n,
        valleys: spec.valleys.clone(),
        cell_area: moire.cell_area(),
        dimension,
    })
}

/// `sum_i delta_eps(E - e_i)` for sorted `levels`; terms beyond 12 widths
/// (relative weight below 1e-31) are skipped.
fn gaussian_sum(levels: &[f64], energies: &[f64], eps: f64, exec: Execution) -> Vec<f64> {
    let norm = 1.0 / (eps * (2.0 * PI).sqrt());
    let reach = 12.0 * eps;
    exec.map(energies, |&e| {
        let lo = levels.partition_point(|&x| x < e - reach);
        let hi = levels.partition_point(|&x| x <= e + reach);
        levels[lo..hi]
            .iter()
            .map(|&x| {
                let u = (e - x) / eps;
                (-0.5 * u * u).exp()
            })
            .sum::<f64>()
            * norm
    })
}

/// Evenly spaced grid of `count` energies covering `[lo, hi]`.
pub fn energy_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || count < 2 {
        return Err(Error::param("energies", "needs lo < hi and at least two points"));
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::operator_norm;
    use crate::model::{simplified_model, SimplifiedParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()).map(|z| z * 0.5)
    }

    #[test]
    fn dirac_block_has_symmetric_pair() {
        let (v, q) = (5.75, Vec2::new(0.03, -0.04));
        let th = 0.01_f64;
        let z = Complex64::new(q.x, -q.y) * crate::linalg::cis(th) * v;
        let h = CMatrix::from_row_slice(2, 2, &[Complex64::default(), z, z.conj(), Complex64::default()]);
        let e = eigenvalues(&h).unwrap();
        assert!((e[0] + v * q.norm()).abs() < 1e-14);
        assert!((e[1] - v * q.norm()).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        assert!(eigenvalues(&CMatrix::zeros(6, 6)).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn agrees_with_shift_invert_iteration() {
        let h = random_hermitian(8, 7);
        let e = eigenvalues(&h).unwrap();
        // Inverse iteration from a shift near each eigenvalue, solved with LU.
        for &target in &e {
            let shift = target + 1e-3;
            let a = &h - CMatrix::identity(8, 8) * Complex64::new(shift, 0.0);
            let lu = a.lu();
            let mut x = nalgebra::DVector::from_element(8, Complex64::new(1.0, 0.3));
            for _ in 0..30 {
                x = lu.solve(&x).unwrap();
                x /= Complex64::new(x.norm(), 0.0);
            }
            let rayleigh = (x.adjoint() * &h * &x)[(0, 0)].re;
            assert!((rayleigh - target).abs() < 1e-10, "{rayleigh} vs {target}");
        }
    }

    #[test]
    fn eigenpairs_are_orthonormal() {
        let h = random_hermitian(12, 3);
        let (e, v) = eigenpairs(&h).unwrap();
        let gram = v.adjoint() * &v;
        assert!((gram - CMatrix::identity(12, 12)).norm() < 1e-12);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(12, e.iter().map(|&x| Complex64::new(x, 0.0))));
        assert!((&h * &v - &v * d).norm() < 1e-12);
    }

    #[test]
    fn non_hermitian_input_is_a_contract_error() {
        let mut h = random_hermitian(5, 1);
        h[(0, 1)] += Complex64::new(1e-9, 0.0);
        assert!(matches!(eigenvalues(&h), Err(Error::Contract(_))));
        assert!(matches!(spectrum(&h), Err(Error::Contract(_))));
    }

    fn setup() -> (TBModel, MoireGeometry) {
        let m = simplified_model(&SimplifiedParams::default()).unwrap();
        let moire = MoireGeometry::new(&m.geom).unwrap();
        (m, moire)
    }

    #[test]
    fn default_path_structure() {
        let (_, moire) = setup();
        let p = bz_path(&moire, &DEFAULT_PATH, 10, Valley::K).unwrap();
        assert_eq!(p.vertices.len() - 1, 3);
        assert_eq!(p.len(), 31);
        assert!(p.points.windows(2).all(|w| w[1].s > w[0].s));
        let kg = (moire.symmetry_point(SymmetryPoint::K, Valley::K) - moire.symmetry_point(SymmetryPoint::Gamma, Valley::K)).norm();
        assert!((p.vertices[1].s - kg).abs() < 1e-15);
        for v in &p.vertices {
            assert!(p.points.iter().any(|x| x.q == v.q && x.s == v.s));
        }
        let only = bz_path(&moire, &DEFAULT_PATH, 1, Valley::K).unwrap();
        assert_eq!(only.momenta(), only.vertices.iter().map(|v| v.q).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_path_label_is_rejected() {
        let (_, moire) = setup();
        assert!(matches!(bz_path(&moire, &["K_M", "X"], 4, Valley::K), Err(Error::Parameter { .. })));
        assert!(bz_path(&moire, &["K_M", "K_M"], 4, Valley::K).is_err());
    }

    #[test]
    fn valleys_give_equal_bands_on_mirrored_paths() {
        let (m, moire) = setup();
        let lambda = 3.0 * moire.shortest_length();
        let mut rows = Vec::new();
        for v in Valley::BOTH {
            let basis = Basis::build(&moire, lambda, v).unwrap();
            let path = bz_path(&moire, &DEFAULT_PATH, 3, v).unwrap();
            rows.push(band_structure(&m, Family::Exact(Truncation::Shells(3)), &basis, &path, Execution::Parallel).unwrap());
        }
        for (a, b) in rows[0].energies.iter().zip(&rows[1].energies) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9 * 2.7);
            }
        }
    }

    #[test]
    fn execution_strategies_agree_exactly() {
        let (m, moire) = setup();
        let basis = Basis::build(&moire, 2.0 * moire.shortest_length(), Valley::K).unwrap();
        let path = bz_path(&moire, &DEFAULT_PATH, 4, Valley::K).unwrap();
        let f = Family::expanded(ExpansionOrders::new(2, 1, 2).unwrap());
        let a = band_structure(&m, f, &basis, &path, Execution::Sequential).unwrap();
        let b = band_structure(&m, f, &basis, &path, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.energies.iter().all(|r| r.len() == basis.dimension() && r.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn unexpanded_parts_reproduce_the_exact_family() {
        let (m, moire) = setup();
        let basis = Basis::build(&moire, 2.0 * moire.shortest_length(), Valley::K).unwrap();
        let q = moire.k_m(Valley::K) + Vec2::new(0.004, 0.001);
        let exact = Assembler::new(&m, Family::Exact(Truncation::Shells(3)), Valley::K).unwrap();
        let mixed = Assembler::new(&m, Family::Expanded { m: None, n: None, tau: 3 }, Valley::K).unwrap();
        assert_eq!(exact.hamiltonian(&basis, &q).unwrap(), mixed.hamiltonian(&basis, &q).unwrap());
    }

    #[test]
    fn band_csv_layout() {
        let (m, moire) = setup();
        let basis = Basis::build(&moire, 1.5 * moire.shortest_length(), Valley::K).unwrap();
        let path = bz_path(&moire, &DEFAULT_PATH, 2, Valley::K).unwrap();
        let b = band_structure(&m, Family::Exact(Truncation::All), &basis, &path, Execution::Parallel).unwrap();
        let csv = b.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("s,qx,qy,E1,"));
        assert_eq!(lines.len(), path.len() + 1);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 3 + basis.dimension()));
        let first: f64 = lines[2].split(',').nth(3).unwrap().parse().unwrap();
        assert!((first - b.energies[1][0]).abs() <= 1e-11 * first.abs());
    }

    #[test]
    fn central_window_is_centred() {
        assert_eq!(central_window(12, 6), 3..9);
        assert_eq!(central_window(4, 6), 0..4);
    }

    fn dos_spec(n: usize, valleys: Vec<Valley>) -> DosSpec {
        DosSpec {
            energies: energy_grid(-9.5, 9.5, 3801).unwrap(),
            epsilon: 0.02,
            n,
            valleys,
        }
    }

    #[test]
    fn dos_integrates_to_the_state_count() {
        let (m, moire) = setup();
        let lambda = 1.5 * moire.shortest_length();
        let d = density_of_states(&m, Family::Exact(Truncation::All), lambda, &dos_spec(4, vec![Valley::K]), Execution::Parallel).unwrap();
        assert!(d.values.iter().all(|&v| v >= 0.0));
        assert!((d.integral() / d.total_weight() - 1.0).abs() < 0.01);
    }

    #[test]
    fn dos_is_linear_in_valleys() {
        let (m, moire) = setup();
        let lambda = 1.5 * moire.shortest_length();
        let f = Family::Exact(Truncation::Shells(2));
        let run = |v| density_of_states(&m, f, lambda, &dos_spec(4, v), Execution::Parallel).unwrap();
        let (k, kp, both) = (run(vec![Valley::K]), run(vec![Valley::KPrime]), run(Valley::BOTH.to_vec()));
        for ((a, b), c) in k.values.iter().zip(&kp.values).zip(&both.values) {
            assert!((a + b - c).abs() <= 1e-12 * c.abs().max(1e-300));
        }
        assert_eq!(both.dimension, k.dimension + kp.dimension);
    }

    #[test]
    fn dos_rejects_bad_specs() {
        let (m, moire) = setup();
        let lambda = moire.shortest_length();
        let mut s = dos_spec(3, vec![Valley::K]);
        assert!(density_of_states(&m, Family::Exact(Truncation::All), lambda, &s, Execution::Sequential).is_err());
        s.n = 4;
        s.epsilon = 0.0;
        assert!(density_of_states(&m, Family::Exact(Truncation::All), lambda, &s, Execution::Sequential).is_err());
    }

    #[test]
    fn sharper_smearing_raises_peaks() {
        let (m, moire) = setup();
        let lambda = 1.5 * moire.shortest_length();
        let mut s = dos_spec(4, vec![Valley::K]);
        s.energies = energy_grid(-0.3, 0.3, 1201).unwrap();
        let wide = density_of_states(&m, Family::Exact(Truncation::Shells(1)), lambda, &s, Execution::Parallel).unwrap();
        s.epsilon /= 2.0;
        let narrow = density_of_states(&m, Family::Exact(Truncation::Shells(1)), lambda, &s, Execution::Parallel).unwrap();
        let peak = |d: &DosCurve| d.values.iter().cloned().fold(0.0, f64::max);
        assert!(peak(&narrow) >= peak(&wide));
    }

    #[test]
    fn adjacent_path_points_respect_the_lipschitz_bound() {
        // Weyl: sorted spectra of neighbouring points differ by at most ||H(q') - H(q)||.
        let (m, moire) = setup();
        let basis = Basis::build(&moire, 2.0 * moire.shortest_length(), Valley::K).unwrap();
        let path = bz_path(&moire, &DEFAULT_PATH, 6, Valley::K).unwrap();
        let f = Family::Exact(Truncation::Shells(2));
        let b = band_structure(&m, f, &basis, &path, Execution::Parallel).unwrap();
        let asm = Assembler::new(&m, f, Valley::K).unwrap();
        for (k, w) in path.points.windows(2).enumerate() {
            let ha = asm.hamiltonian(&basis, &w[0].q).unwrap().matrix;
            let hb = asm.hamiltonian(&basis, &w[1].q).unwrap().matrix;
            let bound = operator_norm(&(hb - ha));
            for (x, y) in b.energies[k].iter().zip(&b.energies[k + 1]) {
                assert!((x - y).abs() <= bound + 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sorted_gap_is_bounded_by_operator_norm(seed in 0u64..1000, scale in 0.0f64..2.0) {
            let a = random_hermitian(10, seed);
            let b = &a + random_hermitian(10, seed + 1) * Complex64::new(scale, 0.0);
            let (ea, eb) = (eigenvalues(&a).unwrap(), eigenvalues(&b).unwrap());
            let gap = ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(gap <= operator_norm(&(&a - &b)) + 1e-10);
        }
    }
}
