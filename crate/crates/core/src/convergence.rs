//! Truncation and expansion error diagnostics.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::exec::Execution;
use crate::geometry::MoireGeometry;
use crate::linalg::{operator_norm, Vec2};
use crate::model::TBModel;
use crate::momentum::{Basis, Truncation};
use crate::spectral::{band_structure, central_relative_error, sig12, spectrum, Assembler, BandPath, Family};
use crate::taylor::{Expansion, ExpansionOrders};
use crate::{Error, Result};

/// Distinct lengths `|2 pi Theta n|` up to `max`, ascending; the basis
/// changes only when the cutoff crosses one of them.
pub fn shell_radii(moire: &MoireGeometry, max: f64) -> Vec<f64> {
    let w = (moire.inverse_norm() * max).ceil() as i64 + 1;
    let mut r: Vec<f64> = (-w..=w)
        .flat_map(|i| (-w..=w).map(move |j| [i, j]))
        .map(|n| moire.moire_vector(n).norm())
        .filter(|&x| x <= max)
        .collect();
    r.sort_by(f64::total_cmp);
    r.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1e-300));
    r
}

/// Cutoffs halfway between consecutive shell radii: the `k`-th value keeps
/// exactly the first `k + 1` shells.
pub fn shell_aligned_cutoffs(moire: &MoireGeometry, count: usize) -> Vec<f64> {
    let mut max = 4.0 * moire.shortest_length();
    loop {
        let r = shell_radii(moire, max);
        if r.len() > count {
            return r.windows(2).take(count).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        max *= 1.5;
    }
}

/// `max |e_j(q) - e_j(Lambda, q)|` over path points and the eigenvalues of the
/// reference (cutoff `lambda_ref`) with `|e_j| <= sigma`.
///
/// Eigenvalues are paired by their offset from charge neutrality (`dim / 2`);
/// a reference level without a partner counts as an infinite error.
pub fn truncation_error(
    model: &TBModel,
    family: Family,
    lambda: f64,
    lambda_ref: f64,
    sigma: f64,
    path: &BandPath,
    exec: Execution,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "energy window must be positive"));
    }
    if lambda >= lambda_ref {
        return Err(Error::param(
            "lambda",
            format!("cutoff {lambda} must stay below the reference cutoff {lambda_ref}"),
        ));
    }
    let moire = MoireGeometry::new(&model.geom)?;
    let small = Basis::build(&moire, lambda, path.valley)?;
    let large = Basis::build(&moire, lambda_ref, path.valley)?;
    let a = band_structure(model, family, &small, path, exec)?;
    let b = band_structure(model, family, &large, path, exec)?;
    Ok(windowed_gap(&b.energies, &a.energies, sigma))
}

fn windowed_gap(reference: &[Vec<f64>], other: &[Vec<f64>], sigma: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, o) in reference.iter().zip(other) {
        let (cr, co) = ((r.len() / 2) as isize, (o.len() / 2) as isize);
        for (j, &e) in r.iter().enumerate() {
            if e.abs() > sigma {
                continue;
            }
            let k = co + (j as isize - cr);
            worst = match usize::try_from(k).ok().and_then(|k| o.get(k)) {
                Some(&x) => worst.max((e - x).abs()),
                None => f64::INFINITY,
            };
        }
    }
    worst
}

/// Smallest shell-aligned cutoff at or above `start` whose error against the
/// next shell is below `tol`; the next shell's cutoff is returned as the
/// converged reference.
pub fn converged_reference(
    model: &TBModel,
    family: Family,
    start: f64,
    sigma: f64,
    tol: f64,
    path: &BandPath,
    exec: Execution,
) -> Result<f64> {
    let moire = MoireGeometry::new(&model.geom)?;
    let mut cutoffs = shell_aligned_cutoffs(&moire, 64);
    cutoffs.retain(|&c| c >= start);
    for w in cutoffs.windows(2) {
        if truncation_error(model, family, w[0], w[1], sigma, path, exec)? < tol {
            return Ok(w[1]);
        }
    }
    Err(Error::Resource(format!("no cutoff up to {:?} converged to {tol:e}", cutoffs.last())))
}

/// The swept parameter of a [`SweepResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Lambda,
    Tau,
    M,
    N,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Lambda => "Lambda",
            Axis::Tau => "tau",
            Axis::M => "m",
            Axis::N => "n",
        })
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Lambda" | "lambda" => Ok(Axis::Lambda),
            "tau" => Ok(Axis::Tau),
            "m" => Ok(Axis::M),
            "n" => Ok(Axis::N),
            _ => Err(Error::param("axis", format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// `"relative"` for band sweeps, `"energy"` for `Err(Lambda, Sigma)`.
    pub units: &'static str,
    pub config: BTreeMap<String, String>,
}

impl SweepResult {
    /// `param,value,error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,value,error\n");
        for (v, e) in self.values.iter().zip(&self.errors) {
            let _ = writeln!(out, "{},{},{}", self.axis, sig12(*v), sig12(*e));
        }
        out
    }

    /// Least-squares fit of `ln error` against the swept value, as
    /// `(slope, r_squared)`; zero errors are skipped.
    pub fn log_linear_fit(&self) -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64)> = self
            .values
            .iter()
            .zip(&self.errors)
            .filter(|(_, &e)| e > 0.0 && e.is_finite())
            .map(|(&v, &e)| (v, e.ln()))
            .collect();
        linear_fit(&pts)
    }
}

pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// `Err(Lambda, Sigma)` at each cutoff against `lambda_ref`.
pub fn truncation_sweep(
    model: &TBModel,
    family: Family,
    lambdas: &[f64],
    lambda_ref: f64,
    sigma: f64,
    path: &BandPath,
    exec: Execution,
) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::param("range", "sweep range is empty"));
    }
    let moire = MoireGeometry::new(&model.geom)?;
    let large = Basis::build(&moire, lambda_ref, path.valley)?;
    let reference = band_structure(model, family, &large, path, exec)?;
    let errors = lambdas
        .iter()
        .map(|&l| {
            if l >= lambda_ref {
                return Err(Error::param("lambda", format!("cutoff {l} must stay below {lambda_ref}")));
            }
            let b = band_structure(model, family, &Basis::build(&moire, l, path.valley)?, path, exec)?;
            Ok(windowed_gap(&reference.energies, &b.energies, sigma))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = snapshot(model, family, path);
    config.insert("lambda_ref".into(), format!("{lambda_ref:?}"));
    config.insert("sigma".into(), format!("{sigma:?}"));
    Ok(SweepResult {
        axis: Axis::Lambda,
        values: lambdas.to_vec(),
        errors,
        units: "energy",
        config,
    })
}

fn snapshot(model: &TBModel, family: Family, path: &BandPath) -> BTreeMap<String, String> {
    let mut c = BTreeMap::new();
    c.insert("a".into(), format!("{:?}", model.geom.a));
    c.insert("theta_deg".into(), format!("{:?}", model.geom.theta.to_degrees()));
    c.insert("family".into(), family.to_string());
    c.insert("valley".into(), path.valley.to_string());
    c.insert("path_points".into(), path.len().to_string());
    c.insert(
        "path".into(),
        path.vertices.iter().map(|v| v.label.to_string()).collect::<Vec<_>>().join(" "),
    );
    c
}

/// Relative error of the six central bands along `path` as one order varies.
///
/// * `Tau`: `H^(tau)` against the untruncated `H` on the same basis.
/// * `M`: `H^(m, other, tau0)` against `H^(tau0)`.
/// * `N`: `H^(other, n, tau0)` against `H^(tau0)`.
///
/// `other` is the fixed order of the part not swept; `None` keeps that part
/// exact.
pub fn expansion_error_sweep(
    model: &TBModel,
    basis: &Basis,
    path: &BandPath,
    axis: Axis,
    range: &[usize],
    tau0: usize,
    other: Option<usize>,
    exec: Execution,
) -> Result<SweepResult> {
    if range.is_empty() || range.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("range", "sweep range must be nonempty and strictly ascending"));
    }
    let reference_family = match axis {
        Axis::Tau => Family::Exact(Truncation::All),
        Axis::M | Axis::N => Family::Exact(Truncation::Shells(tau0)),
        Axis::Lambda => return Err(Error::param("axis", "use truncation_sweep for Lambda")),
    };
    let reference = band_structure(model, reference_family, basis, path, exec)?;
    let t = model.energy_scale();
    let errors = range
        .iter()
        .map(|&v| {
            let family = match axis {
                Axis::Tau => Family::Exact(Truncation::Shells(v)),
                Axis::M => Family::Expanded { m: Some(v), n: other, tau: tau0 },
                _ => Family::Expanded { m: other, n: Some(v), tau: tau0 },
            };
            central_relative_error(&reference, &band_structure(model, family, basis, path, exec)?, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = snapshot(model, reference_family, path);
    config.insert("lambda".into(), format!("{:?}", basis.lambda));
    config.insert("tau0".into(), tau0.to_string());
    config.insert("other_order".into(), other.map_or("inf".into(), |o| o.to_string()));
    Ok(SweepResult {
        axis,
        values: range.iter().map(|&v| v as f64).collect(),
        errors,
        units: "relative",
        config,
    })
}

/// `||H^(tau)(q) - H^(m,n,tau)(q)||` through a dense SVD.
pub fn taylor_norm_gap(model: &TBModel, basis: &Basis, q: &Vec2, orders: ExpansionOrders) -> Result<f64> {
    let exact = Assembler::new(model, Family::Exact(Truncation::Shells(orders.tau)), basis.valley)?;
    let ex = Expansion::new(model, basis.valley, orders)?;
    let d = exact.hamiltonian(basis, q)?.matrix - ex.assemble(model, basis, q)?.matrix;
    Ok(operator_norm(&d))
}

/// Largest sorted-eigenvalue difference between `H^(tau)(q)` and
/// `H^(m,n,tau)(q)`, bounded by [`taylor_norm_gap`].
pub fn taylor_eigenvalue_gap(model: &TBModel, basis: &Basis, q: &Vec2, orders: ExpansionOrders) -> Result<f64> {
    let exact = Assembler::new(model, Family::Exact(Truncation::Shells(orders.tau)), basis.valley)?;
    let ex = Expansion::new(model, basis.valley, orders)?;
    let a = spectrum(&exact.hamiltonian(basis, q)?.matrix)?;
    let b = spectrum(&ex.assemble(model, basis, q)?.matrix)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}
