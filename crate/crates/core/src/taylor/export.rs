//! Text export of continuum models.
//!
//! ```text
//! valley = K
//! m = 1
//! n = 0
//! tau = 1
//! a = ...
//! theta = ...          # radians
//! theta_deg = ...
//! dk = ...
//! v = ... / w = ... / phi = ...   # only for (1, 0, 1)
//!
//! [intralayer.1]
//! point kx ky
//! b1 b2 sigma sigma' re im
//! [intralayer.2]
//! ...
//! [interlayer.1]
//! GM n1 n2
//! shift sx sy
//! point x y
//! phase sigma sigma' re im
//! b1 b2 sigma sigma' re im
//! ```
//!
//! Every real number is printed with 17 significant digits, which round-trips
//! `f64` exactly. The polynomials are raw Taylor polynomials; no momentum
//! cutoff is applied to them.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::{multi_indices, ContinuumModel, ExpansionOrders, InterlayerTerm, PolynomialMatrix, BM_PHASE_STEP};
use crate::geometry::{MoireGeometry, Orbital, Valley};
use crate::linalg::{C2, Vec2};
use crate::{Error, Result};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_poly(s: &mut String, p: &PolynomialMatrix) {
    let _ = writeln!(s, "point {} {}", num(p.point.x), num(p.point.y));
    for (b, c) in p.terms() {
        for (i, si) in Orbital::BOTH.iter().enumerate() {
            for (j, sj) in Orbital::BOTH.iter().enumerate() {
                let z = c[(i, j)];
                let _ = writeln!(s, "{} {} {si} {sj} {} {}", b[0], b[1], num(z.re), num(z.im));
            }
        }
    }
}

pub fn write_continuum_model(cm: &ContinuumModel) -> String {
    let mut s = String::new();
    let o = cm.orders;
    let _ = writeln!(s, "# ({}, {}, {}) continuum model; raw Taylor polynomials, no momentum cutoff", o.m, o.n, o.tau);
    let _ = writeln!(s, "valley = {}", cm.valley.label());
    let _ = writeln!(s, "m = {}", o.m);
    let _ = writeln!(s, "n = {}", o.n);
    let _ = writeln!(s, "tau = {}", o.tau);
    let _ = writeln!(s, "a = {}", num(cm.a));
    let _ = writeln!(s, "theta = {}", num(cm.theta));
    let _ = writeln!(s, "theta_deg = {}", num(cm.theta.to_degrees()));
    let _ = writeln!(s, "dk = {}", num(cm.dk));
    if o == ExpansionOrders::bm() {
        if let (Some(v), Some(w)) = (cm.fermi_velocity(), cm.coupling_constant()) {
            let _ = writeln!(s, "v = {}", num(v));
            let _ = writeln!(s, "w = {}", num(w));
            let _ = writeln!(s, "phi = {}", num(BM_PHASE_STEP));
        }
    }
    for (j, p) in cm.intralayer.iter().enumerate() {
        let _ = writeln!(s, "\n[intralayer.{}]", j + 1);
        write_poly(&mut s, p);
    }
    for (k, t) in cm.interlayer.iter().enumerate() {
        let _ = writeln!(s, "\n[interlayer.{}]", k + 1);
        let _ = writeln!(s, "GM {} {}", t.b[0], t.b[1]);
        let _ = writeln!(s, "shift {} {}", num(t.shift.x), num(t.shift.y));
        let _ = writeln!(s, "point {} {}", num(t.poly.point.x), num(t.poly.point.y));
        for (i, si) in Orbital::BOTH.iter().enumerate() {
            for (j, sj) in Orbital::BOTH.iter().enumerate() {
                let z = t.phase[(i, j)];
                let _ = writeln!(s, "phase {si} {sj} {} {}", num(z.re), num(z.im));
            }
        }
        for (b, c) in t.poly.terms() {
            for (i, si) in Orbital::BOTH.iter().enumerate() {
                for (j, sj) in Orbital::BOTH.iter().enumerate() {
                    let z = c[(i, j)];
                    let _ = writeln!(s, "{} {} {si} {sj} {} {}", b[0], b[1], num(z.re), num(z.im));
                }
            }
        }
    }
    s
}

pub fn read_continuum_model(path: &Path) -> Result<ContinuumModel> {
    parse_continuum_model(&std::fs::read_to_string(path)?)
}

fn f(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::format(line, format!("expected a number, got `{tok}`")))
}

fn int<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| Error::format(line, format!("expected an integer, got `{tok}`")))
}

fn orb(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<Orbital>()
        .map(Orbital::index)
        .map_err(|_| Error::format(line, format!("unknown orbital `{tok}`")))
}

#[derive(Default)]
struct PolyAcc {
    point: Option<Vec2>,
    coeffs: Vec<([usize; 2], usize, usize, Complex64)>,
}

impl PolyAcc {
    fn finish(self, order: usize, line: usize) -> Result<PolynomialMatrix> {
        let point = self.point.ok_or_else(|| Error::format(line, "missing `point`"))?;
        let idx = multi_indices(order);
        let mut coeffs = vec![C2::zeros(); idx.len()];
        let mut seen = vec![[[false; 2]; 2]; idx.len()];
        for (b, i, j, z) in self.coeffs {
            let k = idx
                .iter()
                .position(|x| *x == b)
                .ok_or_else(|| Error::format(line, format!("multi-index {b:?} exceeds order {order}")))?;
            coeffs[k][(i, j)] = z;
            seen[k][i][j] = true;
        }
        if seen.iter().flatten().flatten().any(|s| !s) {
            return Err(Error::format(line, "incomplete coefficient table"));
        }
        PolynomialMatrix::from_coeffs(order, point, coeffs)
    }
}

struct TermAcc {
    b: [i64; 2],
    shift: Option<Vec2>,
    phase: C2,
    phase_seen: usize,
    poly: PolyAcc,
}

pub fn parse_continuum_model(text: &str) -> Result<ContinuumModel> {
    let mut valley = None;
    let (mut m, mut n, mut tau) = (None, None, None);
    let (mut a, mut theta) = (None, None);
    let mut intra: [Option<PolyAcc>; 2] = [None, None];
    let mut terms: Vec<TermAcc> = Vec::new();
    enum Sec {
        Head,
        Intra(usize),
        Inter,
    }
    let mut sec = Sec::Head;
    let mut last = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            sec = match name {
                "intralayer.1" => Sec::Intra(0),
                "intralayer.2" => Sec::Intra(1),
                _ if name.starts_with("interlayer.") => {
                    terms.push(TermAcc {
                        b: [0, 0],
                        shift: None,
                        phase: C2::zeros(),
                        phase_seen: 0,
                        poly: PolyAcc::default(),
                    });
                    Sec::Inter
                }
                _ => return Err(Error::format(line, format!("unknown section `[{name}]`"))),
            };
            if let Sec::Intra(j) = sec {
                intra[j] = Some(PolyAcc::default());
            }
            continue;
        }
        let tok: Vec<&str> = content.split_whitespace().collect();
        let poly = match &mut sec {
            Sec::Head => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| Error::format(line, "header lines are `key = value`"))?;
                let value = value.trim();
                match key.trim() {
                    "valley" => {
                        valley = Some(value.parse::<Valley>().map_err(|e| Error::format(line, e.to_string()))?)
                    }
                    "m" => m = Some(int::<usize>(value, line)?),
                    "n" => n = Some(int::<usize>(value, line)?),
                    "tau" => tau = Some(int::<usize>(value, line)?),
                    "a" => a = Some(f(value, line)?),
                    "theta" => theta = Some(f(value, line)?),
                    "theta_deg" | "dk" | "v" | "w" | "phi" => {
                        f(value, line)?;
                    }
                    other => return Err(Error::format(line, format!("unknown header key `{other}`"))),
                }
                continue;
            }
            Sec::Intra(j) => intra[*j].as_mut().expect("section opened"),
            Sec::Inter => {
                let t = terms.last_mut().expect("section opened");
                match tok.as_slice() {
                    ["GM", n1, n2] => {
                        t.b = [int(n1, line)?, int(n2, line)?];
                        continue;
                    }
                    ["shift", x, y] => {
                        t.shift = Some(Vec2::new(f(x, line)?, f(y, line)?));
                        continue;
                    }
                    ["phase", s1, s2, re, im] => {
                        t.phase[(orb(s1, line)?, orb(s2, line)?)] = Complex64::new(f(re, line)?, f(im, line)?);
                        t.phase_seen += 1;
                        continue;
                    }
                    _ => &mut t.poly,
                }
            }
        };
        match tok.as_slice() {
            ["point", x, y] => poly.point = Some(Vec2::new(f(x, line)?, f(y, line)?)),
            [b1, b2, s1, s2, re, im] => poly.coeffs.push((
                [int(b1, line)?, int(b2, line)?],
                orb(s1, line)?,
                orb(s2, line)?,
                Complex64::new(f(re, line)?, f(im, line)?),
            )),
            _ => return Err(Error::format(line, "expected `point x y` or `b1 b2 sigma sigma' re im`")),
        }
    }

    let missing = |what: &str| Error::format(last, format!("missing `{what}`"));
    let orders = ExpansionOrders::new(
        m.ok_or_else(|| missing("m"))?,
        n.ok_or_else(|| missing("n"))?,
        tau.ok_or_else(|| missing("tau"))?,
    )?;
    let valley = valley.ok_or_else(|| missing("valley"))?;
    let moire = MoireGeometry::from_params(a.ok_or_else(|| missing("a"))?, theta.ok_or_else(|| missing("theta"))?)?;
    let [i1, i2] = intra;
    let intralayer = [
        i1.ok_or_else(|| missing("[intralayer.1]"))?.finish(orders.m, last)?,
        i2.ok_or_else(|| missing("[intralayer.2]"))?.finish(orders.m, last)?,
    ];
    let interlayer = terms
        .into_iter()
        .map(|t| {
            if t.phase_seen != 4 {
                return Err(Error::format(last, format!("term {:?} needs four phase lines", t.b)));
            }
            Ok(InterlayerTerm {
                b: t.b,
                gm: moire.moire_vector(t.b),
                phase: t.phase,
                shift: t.shift.ok_or_else(|| missing("shift"))?,
                poly: t.poly.finish(orders.n, last)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContinuumModel {
        valley,
        orders,
        a: moire.layers.a,
        theta: moire.layers.theta,
        dk: moire.dk,
        intralayer,
        interlayer,
    })
}
