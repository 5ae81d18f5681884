//! Text format for tight-binding models.
//!
//! ```text
//! a = 2.46
//! theta = any            # or a twist in degrees the model is tied to
//! gamma1 = 1.5
//! gamma2 = 1.5
//! gamma12 = 2.0
//! n_max = 10
//!
//! [intralayer.1]
//! 0 0 A B -2.7 0.0       # n1 n2 sigma sigma' re im
//! [intralayer.2]
//! ...
//! [interlayer]
//! closed_form simplified 2.0 2.0 1.0     # beta z scale
//! ```
//!
//! or, for tabulated couplings, `table` followed by `rho theta_deg channel re im`
//! rows with channels `AA AB BA BB`. Intralayer amplitudes are Bloch-block
//! energies; table values exclude the `c_1^* c_2^*` normalization. Numbers are
//! written in shortest round-trip form, so writing a loaded canonical file
//! reproduces it byte for byte.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::{DecayRates, Hopping, InterlayerTable, Interlayer, RadialCoupling, TBModel, ThetaPolicy};
use crate::geometry::{Layer, LayerGeometry, Orbital};
use crate::{Error, Result};

const CHANNELS: [&str; 4] = ["AA", "AB", "BA", "BB"];

pub fn load_wannier_model(path: &Path, geom: &LayerGeometry) -> Result<TBModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, geom)
}

pub fn save_model(model: &TBModel, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(model))?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Intra(usize),
    Inter,
}

fn number(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::format(line, format!("{what}: expected a finite number, got `{tok}`")))
}

fn integer(tok: &str, line: usize, what: &str) -> Result<i64> {
    tok.parse::<i64>()
        .map_err(|_| Error::format(line, format!("{what}: expected an integer, got `{tok}`")))
}

fn orbital(tok: &str, line: usize) -> Result<Orbital> {
    tok.parse::<Orbital>()
        .map_err(|_| Error::format(line, format!("unknown orbital `{tok}`")))
}

#[derive(Default)]
struct Header {
    a: Option<f64>,
    theta: Option<ThetaPolicy>,
    gamma: [Option<f64>; 3],
    n_max: Option<usize>,
}

enum InterSpec {
    Radial(RadialCoupling),
    Table(Vec<(usize, f64, f64, usize, Complex64)>),
}

pub fn parse_model(text: &str, geom: &LayerGeometry) -> Result<TBModel> {
    let mut header = Header::default();
    let mut section = Section::Header;
    let mut seen = [false; 3];
    let mut intra: [Vec<(usize, Hopping)>; 2] = [Vec::new(), Vec::new()];
    let mut inter: Option<InterSpec> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "intralayer.1" => Section::Intra(0),
                "intralayer.2" => Section::Intra(1),
                "interlayer" => Section::Inter,
                other => return Err(Error::format(line, format!("unknown section `[{other}]`"))),
            };
            let slot = match section {
                Section::Intra(j) => j,
                _ => 2,
            };
            if seen[slot] {
                return Err(Error::format(line, format!("duplicate section `[{}]`", name.trim())));
            }
            seen[slot] = true;
            continue;
        }
        match section {
            Section::Header => parse_header_line(content, line, &mut header)?,
            Section::Intra(j) => {
                let tok: Vec<&str> = content.split_whitespace().collect();
                if tok.len() != 6 {
                    return Err(Error::format(line, "hopping rows are `n1 n2 sigma sigma' re im`"));
                }
                let hop = Hopping {
                    n: [integer(tok[0], line, "n1")?, integer(tok[1], line, "n2")?],
                    from: orbital(tok[2], line)?,
                    to: orbital(tok[3], line)?,
                    amplitude: Complex64::new(number(tok[4], line, "re")?, number(tok[5], line, "im")?),
                };
                intra[j].push((line, hop));
            }
            Section::Inter => {
                let tok: Vec<&str> = content.split_whitespace().collect();
                match (&mut inter, tok.as_slice()) {
                    (None, ["closed_form", "simplified", b, z, s]) => {
                        let rc = RadialCoupling {
                            beta: number(b, line, "beta")?,
                            z: number(z, line, "z")?,
                            scale: number(s, line, "scale")?,
                        };
                        if rc.beta <= 0.0 || rc.z <= 0.0 || rc.scale < 0.0 {
                            return Err(Error::format(
                                line,
                                "closed form needs beta > 0, z > 0 and scale >= 0",
                            ));
                        }
                        inter = Some(InterSpec::Radial(rc));
                    }
                    (None, ["table"]) => inter = Some(InterSpec::Table(Vec::new())),
                    (Some(InterSpec::Table(rows)), [r, t, ch, re, im]) => {
                        let c = CHANNELS
                            .iter()
                            .position(|n| n == ch)
                            .ok_or_else(|| Error::format(line, format!("unknown channel `{ch}`")))?;
                        let rho = number(r, line, "rho")?;
                        if rho < 0.0 {
                            return Err(Error::format(line, "rho must be non-negative"));
                        }
                        let z = Complex64::new(number(re, line, "re")?, number(im, line, "im")?);
                        rows.push((line, rho, number(t, line, "theta")?, c, z));
                    }
                    (None, _) => {
                        return Err(Error::format(
                            line,
                            "interlayer section must start with `closed_form simplified beta z scale` or `table`",
                        ))
                    }
                    _ => return Err(Error::format(line, "unexpected interlayer row")),
                }
            }
        }
    }

    let a = header.a.ok_or_else(|| Error::format(last_line, "missing `a`"))?;
    let theta = header.theta.ok_or_else(|| Error::format(last_line, "missing `theta`"))?;
    let names = ["gamma1", "gamma2", "gamma12"];
    let mut gamma = [0.0; 3];
    for k in 0..3 {
        gamma[k] = header.gamma[k].ok_or_else(|| Error::format(last_line, format!("missing `{}`", names[k])))?;
    }
    let n_max = header.n_max.ok_or_else(|| Error::format(last_line, "missing `n_max`"))?;
    for (j, s) in ["[intralayer.1]", "[intralayer.2]", "[interlayer]"].iter().enumerate() {
        if !seen[j] {
            return Err(Error::format(last_line, format!("missing section {s}")));
        }
    }

    if (a - geom.a).abs() > 1e-12 * geom.a {
        return Err(Error::param("a", format!("model file has a = {a}, geometry has {}", geom.a)));
    }
    if let ThetaPolicy::Fixed(deg) = theta {
        if (deg - geom.theta.to_degrees()).abs() > 1e-9 {
            return Err(Error::param(
                "theta",
                format!("model is tied to {deg} degrees, geometry uses {}", geom.theta.to_degrees()),
            ));
        }
    }

    for j in 0..2 {
        check_hermitian(&intra[j], j)?;
    }

    let interlayer = match inter.ok_or_else(|| Error::format(last_line, "empty [interlayer] section"))? {
        InterSpec::Radial(rc) => Interlayer::Radial(rc),
        InterSpec::Table(rows) => Interlayer::Table(assemble_table(rows, gamma[2], last_line)?),
    };

    Ok(TBModel {
        geom: geom.clone(),
        intralayer: intra.map(|v| v.into_iter().map(|(_, h)| h).collect()),
        interlayer,
        decay: DecayRates {
            intralayer: [gamma[0], gamma[1]],
            interlayer: gamma[2],
        },
        n_max,
        theta_policy: theta,
    })
}

fn parse_header_line(content: &str, line: usize, h: &mut Header) -> Result<()> {
    let (key, value) = content
        .split_once('=')
        .ok_or_else(|| Error::format(line, "header lines are `key = value`"))?;
    let (key, value) = (key.trim(), value.trim());
    match key {
        "a" => {
            let a = number(value, line, "a")?;
            if a <= 0.0 {
                return Err(Error::format(line, "a must be positive"));
            }
            h.a = Some(a);
        }
        "theta" => {
            h.theta = Some(if value == "any" {
                ThetaPolicy::FromGeometry
            } else {
                ThetaPolicy::Fixed(number(value, line, "theta")?)
            })
        }
        "gamma1" | "gamma2" | "gamma12" => {
            let g = number(value, line, key)?;
            if g <= 0.0 {
                return Err(Error::format(line, format!("{key} must be positive, got {g}")));
            }
            let k = match key {
                "gamma1" => 0,
                "gamma2" => 1,
                _ => 2,
            };
            h.gamma[k] = Some(g);
        }
        "n_max" => {
            h.n_max = Some(
                value
                    .parse::<usize>()
                    .map_err(|_| Error::format(line, format!("n_max: expected a count, got `{value}`")))?,
            )
        }
        other => return Err(Error::format(line, format!("unknown header key `{other}`"))),
    }
    Ok(())
}

fn check_hermitian(hops: &[(usize, Hopping)], layer: usize) -> Result<()> {
    for (line, h) in hops {
        let partner = hops.iter().find(|(_, p)| {
            p.n == [-h.n[0], -h.n[1]]
                && p.from == h.to
                && p.to == h.from
                && (p.amplitude - h.amplitude.conj()).norm() <= 1e-12 * h.amplitude.norm()
        });
        if partner.is_none() {
            return Err(Error::format(
                *line,
                format!(
                    "layer {}: hopping ({}, {}) {}{} has no Hermitian partner ({}, {}) {}{} with the conjugate amplitude",
                    layer + 1,
                    h.n[0],
                    h.n[1],
                    h.from,
                    h.to,
                    -h.n[0],
                    -h.n[1],
                    h.to,
                    h.from
                ),
            ));
        }
    }
    Ok(())
}

fn assemble_table(rows: Vec<(usize, f64, f64, usize, Complex64)>, tail: f64, last_line: usize) -> Result<InterlayerTable> {
    let mut radii: Vec<f64> = rows.iter().map(|r| r.1).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut angles: Vec<f64> = rows.iter().map(|r| r.2).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let pos_r: HashMap<u64, usize> = radii.iter().enumerate().map(|(i, r)| (r.to_bits(), i)).collect();
    let pos_t: HashMap<u64, usize> = angles.iter().enumerate().map(|(i, t)| (t.to_bits(), i)).collect();

    let nl = angles.len();
    let mut values = vec![[Complex64::default(); 4]; radii.len() * nl];
    let mut filled = vec![[0usize; 4]; radii.len() * nl];
    for (line, r, t, c, z) in rows {
        let cell = pos_r[&r.to_bits()] * nl + pos_t[&t.to_bits()];
        if filled[cell][c] != 0 {
            return Err(Error::format(
                line,
                format!("duplicate sample (rho {r}, theta {t}, {}) first given on line {}", CHANNELS[c], filled[cell][c]),
            ));
        }
        filled[cell][c] = line;
        values[cell][c] = z;
    }
    if let Some(cell) = filled.iter().position(|f| f.contains(&0)) {
        let c = filled[cell].iter().position(|&l| l == 0).expect("contains zero");
        return Err(Error::format(
            last_line,
            format!(
                "table is not a full grid: missing sample at rho {}, theta {}, {}",
                radii[cell / nl],
                angles[cell % nl],
                CHANNELS[c]
            ),
        ));
    }
    InterlayerTable::new(radii, angles, values, tail).map_err(|e| Error::format(last_line, e.to_string()))
}

pub fn write_model(m: &TBModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "a = {:?}", m.geom.a);
    match m.theta_policy {
        ThetaPolicy::FromGeometry => s.push_str("theta = any\n"),
        ThetaPolicy::Fixed(d) => {
            let _ = writeln!(s, "theta = {d:?}");
        }
    }
    let _ = writeln!(s, "gamma1 = {:?}", m.decay.intralayer[0]);
    let _ = writeln!(s, "gamma2 = {:?}", m.decay.intralayer[1]);
    let _ = writeln!(s, "gamma12 = {:?}", m.decay.interlayer);
    let _ = writeln!(s, "n_max = {}", m.n_max);
    for layer in Layer::BOTH {
        let _ = writeln!(s, "\n[intralayer.{}]", layer.number());
        for h in &m.intralayer[layer.index()] {
            let _ = writeln!(
                s,
                "{} {} {} {} {:?} {:?}",
                h.n[0], h.n[1], h.from, h.to, h.amplitude.re, h.amplitude.im
            );
        }
    }
    s.push_str("\n[interlayer]\n");
    match &m.interlayer {
        Interlayer::Radial(r) => {
            let _ = writeln!(s, "closed_form simplified {:?} {:?} {:?}", r.beta, r.z, r.scale);
        }
        Interlayer::Table(t) => {
            s.push_str("table\n");
            let nl = t.angles_deg().len();
            for (i, r) in t.radii().iter().enumerate() {
                for (l, ang) in t.angles_deg().iter().enumerate() {
                    let v = t.values()[i * nl + l];
                    for (c, name) in CHANNELS.iter().enumerate() {
                        let _ = writeln!(s, "{r:?} {ang:?} {name} {:?} {:?}", v[c].re, v[c].im);
                    }
                }
            }
        }
    }
    s
}
