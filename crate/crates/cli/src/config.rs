//! Run configuration, read from a TOML file.
//!
//! ```toml
//! [geometry]
//! a = 2.46            # Angstrom
//! theta_deg = 1.1
//!
//! [model]
//! source = "simplified"   # or "wannier" with `file = "model.txt"`
//! t = 2.7
//! beta = 4.0
//! z = 2.0
//! scale = 1035.0
//!
//! [run]
//! families = ["exact", "expanded(1,0,1)", "continuum(2,1,6)"]
//! valleys = ["K", "Kp"]
//! lambda = 5.1            # in units of the shortest moire reciprocal vector
//!
//! [path]
//! labels = ["K_M", "Gamma_M", "M_M", "K_M"]
//! samples_per_segment = 16
//!
//! [dos]
//! e_min = -0.2
//! e_max = 0.2
//! points = 801
//! epsilon = 0.002
//! n = 12
//!
//! [converge]
//! axes = ["tau", "m"]
//! range = [1, 2, 3, 4]
//! tau0 = 2
//!
//! [derive]
//! orders = [1, 0, 1]
//! ```
//!
//! Every field is checked before any computation; errors name the offending
//! key.

use std::path::{Path, PathBuf};

use moire_core::convergence::Axis;
use moire_core::geometry::SymmetryPoint;
use moire_core::model::{load_wannier_model, simplified_model};
use moire_core::{ExpansionOrders, Family, LayerGeometry, MoireGeometry, SimplifiedParams, TBModel, Truncation, Valley};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub path: PathSection,
    #[serde(default)]
    pub dos: DosSection,
    #[serde(default)]
    pub converge: ConvergeSection,
    #[serde(default)]
    pub derive: DeriveSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "defaults::a")]
    pub a: f64,
    pub theta_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Simplified,
    Wannier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub source: ModelSource,
    /// Model file for `source = "wannier"`, relative to the config file.
    pub file: Option<PathBuf>,
    pub t: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub z: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "defaults::families")]
    pub families: Vec<String>,
    #[serde(default = "defaults::valleys")]
    pub valleys: Vec<String>,
    /// Basis radius in units of the shortest moire reciprocal vector.
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { families: defaults::families(), valleys: defaults::valleys(), lambda: defaults::lambda() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    #[serde(default = "defaults::labels")]
    pub labels: Vec<String>,
    #[serde(default = "defaults::samples")]
    pub samples_per_segment: usize,
}

impl Default for PathSection {
    fn default() -> Self {
        Self { labels: defaults::labels(), samples_per_segment: defaults::samples() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    #[serde(default = "defaults::e_min")]
    pub e_min: f64,
    #[serde(default = "defaults::e_max")]
    pub e_max: f64,
    #[serde(default = "defaults::points")]
    pub points: usize,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::quadrature")]
    pub n: usize,
}

impl Default for DosSection {
    fn default() -> Self {
        Self {
            e_min: defaults::e_min(),
            e_max: defaults::e_max(),
            points: defaults::points(),
            epsilon: defaults::epsilon(),
            n: defaults::quadrature(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    #[serde(default)]
    pub axes: Vec<String>,
    /// Orders for the `tau`, `m` and `n` axes.
    #[serde(default)]
    pub range: Vec<usize>,
    pub tau0: Option<usize>,
    /// Fixed order of the part not swept; absent keeps it exact.
    pub other: Option<usize>,
    /// Cutoffs for the `lambda` axis, in units of the shortest moire vector.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    pub lambda_ref: Option<f64>,
    /// Energy window of `Err(Lambda, Sigma)`; defaults to half the model's
    /// energy scale.
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveSection {
    #[serde(default = "defaults::orders")]
    pub orders: [usize; 3],
}

impl Default for DeriveSection {
    fn default() -> Self {
        Self { orders: defaults::orders() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Energy window of the band rendering; defaults to the six central bands.
    pub render_window: Option<[f64; 2]>,
}

mod defaults {
    pub fn a() -> f64 {
        2.46
    }
    pub fn families() -> Vec<String> {
        vec!["exact".into()]
    }
    pub fn valleys() -> Vec<String> {
        vec!["K".into()]
    }
    pub fn lambda() -> f64 {
        4.0
    }
    pub fn labels() -> Vec<String> {
        moire_core::spectral::DEFAULT_PATH.iter().map(|s| s.to_string()).collect()
    }
    pub fn samples() -> usize {
        16
    }
    pub fn e_min() -> f64 {
        -0.2
    }
    pub fn e_max() -> f64 {
        0.2
    }
    pub fn points() -> usize {
        801
    }
    pub fn epsilon() -> f64 {
        0.002
    }
    pub fn quadrature() -> usize {
        12
    }
    pub fn orders() -> [usize; 3] {
        [1, 0, 1]
    }
}

/// A config after validation, ready to run.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: TBModel,
    pub moire: MoireGeometry,
    pub families: Vec<Family>,
    pub valleys: Vec<Valley>,
    /// Absolute basis radius.
    pub lambda: f64,
    pub axes: Vec<Axis>,
    pub orders: ExpansionOrders,
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {reason}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and loads the model; `base` resolves relative
    /// model paths.
    pub fn resolve(self, base: &Path) -> Result<Resolved, CliError> {
        let g = &self.geometry;
        let geom = LayerGeometry::new(g.a, g.theta_deg.to_radians()).map_err(|e| bad("geometry", e))?;
        let moire = MoireGeometry::new(&geom).map_err(|e| bad("geometry.theta_deg", e))?;

        let m = &self.model;
        let simplified_keys = [("t", m.t), ("alpha", m.alpha), ("beta", m.beta), ("z", m.z), ("scale", m.scale)];
        let model = match m.source {
            ModelSource::Simplified => {
                if m.file.is_some() {
                    return Err(bad("model.file", "only valid with source = \"wannier\""));
                }
                let d = SimplifiedParams::default();
                let p = SimplifiedParams {
                    a: g.a,
                    theta: geom.theta,
                    t: m.t.unwrap_or(d.t),
                    alpha: m.alpha.unwrap_or(d.alpha),
                    beta: m.beta.unwrap_or(d.beta),
                    z: m.z.unwrap_or(d.z),
                    scale: m.scale.unwrap_or(d.scale),
                };
                simplified_model(&p).map_err(|e| bad("model", e))?
            }
            ModelSource::Wannier => {
                if let Some((k, _)) = simplified_keys.iter().find(|(_, v)| v.is_some()) {
                    return Err(bad(&format!("model.{k}"), "only valid with source = \"simplified\""));
                }
                let file = m.file.as_ref().ok_or_else(|| bad("model.file", "required for source = \"wannier\""))?;
                load_wannier_model(&base.join(file), &geom).map_err(|e| bad("model.file", e))?
            }
        };

        let r = &self.run;
        if r.families.is_empty() {
            return Err(bad("run.families", "at least one family is required"));
        }
        let families = r
            .families
            .iter()
            .map(|s| parse_family(s).map_err(|e| bad("run.families", e)))
            .collect::<Result<Vec<_>, _>>()?;
        if r.valleys.is_empty() {
            return Err(bad("run.valleys", "at least one valley is required"));
        }
        let mut valleys = Vec::new();
        for s in &r.valleys {
            let v = parse_valley(s).map_err(|e| bad("run.valleys", e))?;
            if valleys.contains(&v) {
                return Err(bad("run.valleys", format!("valley `{s}` listed twice")));
            }
            valleys.push(v);
        }
        if !(r.lambda.is_finite() && r.lambda > 0.0) {
            return Err(bad("run.lambda", format!("must be positive, got {}", r.lambda)));
        }

        let p = &self.path;
        if p.labels.len() < 2 {
            return Err(bad("path.labels", "needs at least two points"));
        }
        for l in &p.labels {
            l.parse::<SymmetryPoint>().map_err(|e| bad("path.labels", e))?;
        }
        if p.samples_per_segment == 0 {
            return Err(bad("path.samples_per_segment", "must be positive"));
        }

        let d = &self.dos;
        if !(d.e_min.is_finite() && d.e_max.is_finite() && d.e_min < d.e_max) {
            return Err(bad("dos.e_min", "the energy window must satisfy e_min < e_max"));
        }
        if d.points < 2 {
            return Err(bad("dos.points", "need at least two energies"));
        }
        if !(d.epsilon.is_finite() && d.epsilon > 0.0) {
            return Err(bad("dos.epsilon", "must be positive"));
        }
        if d.n < 4 {
            return Err(bad("dos.n", "quadrature needs n >= 4"));
        }

        let c = &self.converge;
        let axes = c
            .axes
            .iter()
            .map(|a| a.parse::<Axis>().map_err(|e| bad("converge.axes", e)))
            .collect::<Result<Vec<_>, _>>()?;
        if axes.iter().any(|a| *a != Axis::Lambda) {
            if c.range.is_empty() || c.range.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("converge.range", "must be nonempty and strictly ascending"));
            }
            if axes.contains(&Axis::Tau) && c.range[0] == 0 {
                return Err(bad("converge.range", "tau starts at 1"));
            }
            if c.tau0 == Some(0) {
                return Err(bad("converge.tau0", "must be at least 1"));
            }
        }
        if axes.contains(&Axis::Lambda) {
            let lr = c.lambda_ref.ok_or_else(|| bad("converge.lambda_ref", "required for the lambda axis"))?;
            if c.lambdas.is_empty() {
                return Err(bad("converge.lambdas", "required for the lambda axis"));
            }
            if let Some(l) = c.lambdas.iter().find(|&&l| !(l > 0.0 && l < lr)) {
                return Err(bad("converge.lambdas", format!("{l} is not in (0, lambda_ref)")));
            }
            if let Some(s) = c.sigma {
                if !(s.is_finite() && s > 0.0) {
                    return Err(bad("converge.sigma", "must be positive"));
                }
            }
        }

        let o = self.derive.orders;
        let orders = ExpansionOrders::new(o[0], o[1], o[2]).map_err(|e| bad("derive.orders", e))?;

        if let Some([lo, hi]) = self.output.render_window {
            if !(lo < hi) {
                return Err(bad("output.render_window", "needs lo < hi"));
            }
        }

        let lambda = r.lambda * moire.shortest_length();
        Ok(Resolved { config: self, model, moire, families, valleys, lambda, axes, orders })
    }
}

/// `K` or `Kp` (also `K'`).
pub fn parse_valley(s: &str) -> Result<Valley, String> {
    match s {
        "K" => Ok(Valley::K),
        "Kp" | "K'" => Ok(Valley::KPrime),
        _ => Err(format!("unknown valley `{s}`, expected K or Kp")),
    }
}

/// `exact`, `exact(tau)`, `expanded(m,n,tau)` or `continuum(m,n,tau)`;
/// `m` and `n` of `expanded` may be `inf` to keep that part exact.
pub fn parse_family(s: &str) -> Result<Family, String> {
    let s = s.trim();
    if s == "exact" {
        return Ok(Family::Exact(Truncation::All));
    }
    let (name, rest) = s.split_once('(').ok_or_else(|| format!("unknown family `{s}`"))?;
    let args: Vec<&str> = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("missing `)` in `{s}`"))?
        .split(',')
        .map(str::trim)
        .collect();
    let order = |x: &str| -> Result<Option<usize>, String> {
        match x {
            "inf" => Ok(None),
            _ => x.parse().map(Some).map_err(|_| format!("bad order `{x}` in `{s}`")),
        }
    };
    let finite = |x: &str| order(x)?.ok_or_else(|| format!("`inf` is not allowed here in `{s}`"));
    match (name.trim(), args.as_slice()) {
        ("exact", [tau]) => {
            let tau = finite(tau)?;
            if tau == 0 {
                return Err(format!("tau must be at least 1 in `{s}`"));
            }
            Ok(Family::Exact(Truncation::Shells(tau)))
        }
        ("expanded", [m, n, tau]) => {
            let tau = finite(tau)?;
            ExpansionOrders::new(0, 0, tau).map_err(|e| e.to_string())?;
            Ok(Family::Expanded { m: order(m)?, n: order(n)?, tau })
        }
        ("continuum", [m, n, tau]) => {
            let o = ExpansionOrders::new(finite(m)?, finite(n)?, finite(tau)?).map_err(|e| e.to_string())?;
            Ok(Family::Continuum(o))
        }
        _ => Err(format!("unknown family `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\ntheta_deg = 1.1\n[model]\nsource = \"simplified\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.geometry.a, 2.46);
        assert_eq!(c.run.families, vec!["exact"]);
        let r = c.resolve(Path::new(".")).unwrap();
        assert!((r.model.geom.theta - 1.1f64.to_radians()).abs() < 1e-15);
        assert_eq!(r.valleys, vec![Valley::K]);
    }

    #[test]
    fn families_parse() {
        assert_eq!(parse_family("exact").unwrap(), Family::Exact(Truncation::All));
        assert_eq!(parse_family("exact(3)").unwrap(), Family::Exact(Truncation::Shells(3)));
        assert_eq!(parse_family("expanded(inf, 2, 4)").unwrap(), Family::Expanded { m: None, n: Some(2), tau: 4 });
        assert_eq!(
            parse_family("continuum(1,0,1)").unwrap(),
            Family::Continuum(ExpansionOrders::bm())
        );
        for s in ["exact(0)", "continuum(inf,0,1)", "expanded(1,0)", "bm", "expanded(1,0,1"] {
            assert!(parse_family(s).is_err(), "{s}");
        }
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("[run]\nvalleys = [\"Q\"]\n", "run.valleys"),
            ("[run]\nlambda = -1.0\n", "run.lambda"),
            ("[path]\nlabels = [\"K_M\", \"X\"]\n", "path.labels"),
            ("[dos]\nepsilon = 0.0\n", "dos.epsilon"),
            ("[converge]\naxes = [\"lambda\"]\nlambdas = [3.0]\n", "converge.lambda_ref"),
            ("[derive]\norders = [1, 0, 0]\n", "derive.orders"),
        ];
        for (extra, key) in cases {
            let c = RunConfig::from_toml(&format!("{MINIMAL}{extra}")).unwrap();
            let e = c.resolve(Path::new(".")).unwrap_err();
            assert!(matches!(&e, CliError::Config(m) if m.starts_with(key)), "{key}: {e}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[run]\nfamily = \"exact\"\n")).is_err());
    }

    #[test]
    fn wannier_needs_a_file() {
        let text = "[geometry]\ntheta_deg = 1.1\n[model]\nsource = \"wannier\"\n";
        let e = RunConfig::from_toml(text).unwrap().resolve(Path::new(".")).unwrap_err();
        assert!(matches!(&e, CliError::Config(m) if m.starts_with("model.file")));
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
