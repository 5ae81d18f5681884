//! The four subcommands. Each returns its outputs in memory; nothing touches
//! the disk until all of them have succeeded.

use std::collections::BTreeMap;

use moire_core::convergence::{expansion_error_sweep, truncation_sweep, Axis, SweepResult};
use moire_core::spectral::{band_structure, bz_path, density_of_states, energy_grid, DosSpec};
use moire_core::taylor::{derive_continuum_model, write_continuum_model};
use moire_core::{Basis, BandPath, Execution, Valley};
use serde_json::json;

use crate::config::Resolved;
use crate::output::Artifact;
use crate::{render, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Bands,
    Dos,
    Converge,
    Derive,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Dos => "dos",
            Command::Converge => "converge",
            Command::Derive => "derive",
        }
    }
}

pub fn execute(command: Command, r: &Resolved, exec: Execution, render: bool) -> Result<Vec<Artifact>, CliError> {
    match command {
        Command::Bands => bands(r, exec, render),
        Command::Dos => dos(r, exec, render),
        Command::Converge => converge(r, exec),
        Command::Derive => derive(r),
    }
}

fn path_for(r: &Resolved, valley: Valley) -> Result<BandPath, CliError> {
    let p = &r.config.path;
    Ok(bz_path(&r.moire, &p.labels, p.samples_per_segment, valley)?)
}

/// Bases for every configured valley, built up front so a cutoff over the
/// resource cap fails before any eigensolve.
fn bases(r: &Resolved, lambda: f64) -> Result<Vec<(Valley, Basis)>, CliError> {
    r.valleys
        .iter()
        .map(|&v| Ok((v, Basis::build(&r.moire, lambda, v)?)))
        .collect()
}

/// One `bands_<family>_<valley>.csv` per family and valley.
pub fn bands(r: &Resolved, exec: Execution, render: bool) -> Result<Vec<Artifact>, CliError> {
    let bases = bases(r, r.lambda)?;
    let mut out = Vec::new();
    for &family in &r.families {
        for (valley, basis) in &bases {
            let data = band_structure(&r.model, family, basis, &path_for(r, *valley)?, exec)?;
            let stem = format!("bands_{family}_{valley}");
            out.push(Artifact::new(format!("{stem}.csv"), data.to_csv()));
            if render {
                out.push(Artifact::new(format!("{stem}.svg"), render::bands_svg(&data, r.config.output.render_window)));
            }
        }
    }
    Ok(out)
}

/// One `dos_<family>.csv` per family, summed over the configured valleys.
pub fn dos(r: &Resolved, exec: Execution, render: bool) -> Result<Vec<Artifact>, CliError> {
    bases(r, r.lambda)?;
    let d = &r.config.dos;
    let spec = DosSpec {
        energies: energy_grid(d.e_min, d.e_max, d.points)?,
        epsilon: d.epsilon,
        n: d.n,
        valleys: r.valleys.clone(),
    };
    let mut out = Vec::new();
    for &family in &r.families {
        let curve = density_of_states(&r.model, family, r.lambda, &spec, exec)?;
        out.push(Artifact::new(format!("dos_{family}.csv"), curve.to_csv()));
        if render {
            out.push(Artifact::new(format!("dos_{family}.svg"), render::dos_svg(&curve)));
        }
    }
    Ok(out)
}

fn sidecar(s: &SweepResult, extra: BTreeMap<&str, serde_json::Value>) -> String {
    let fit = s.log_linear_fit().map(|(slope, r2)| json!({ "slope": slope, "r_squared": r2 }));
    let mut v = json!({
        "axis": s.axis.to_string(),
        "units": s.units,
        "values": s.values,
        "errors": s.errors,
        "log_linear_fit": fit,
        "config": s.config,
    });
    for (k, x) in extra {
        v[k] = x;
    }
    serde_json::to_string_pretty(&v).expect("sidecar serializes") + "\n"
}

/// One `converge_<axis>.csv` (with a JSON sidecar) per configured axis, on
/// the first configured valley. The `lambda` axis uses the first family;
/// order axes compare against the exact Hamiltonian on the run basis.
pub fn converge(r: &Resolved, exec: Execution) -> Result<Vec<Artifact>, CliError> {
    if r.axes.is_empty() {
        return Err(CliError::Config("converge.axes: at least one axis is required".into()));
    }
    let c = &r.config.converge;
    let g = r.moire.shortest_length();
    let valley = r.valleys[0];
    let path = path_for(r, valley)?;
    let basis = Basis::build(&r.moire, r.lambda, valley)?;
    if let Some(lr) = c.lambda_ref.filter(|_| r.axes.contains(&Axis::Lambda)) {
        Basis::build(&r.moire, lr * g, valley)?;
    }
    let mut out = Vec::new();
    for &axis in &r.axes {
        let mut extra = BTreeMap::new();
        let sweep = match axis {
            Axis::Lambda => {
                let lambdas: Vec<f64> = c.lambdas.iter().map(|l| l * g).collect();
                let lambda_ref = c.lambda_ref.expect("validated") * g;
                let sigma = c.sigma.unwrap_or(0.5 * r.model.energy_scale());
                extra.insert("lambda_unit", json!(g));
                let mut s = truncation_sweep(&r.model, r.families[0], &lambdas, lambda_ref, sigma, &path, exec)?;
                s.values = c.lambdas.clone();
                s
            }
            _ => expansion_error_sweep(&r.model, &basis, &path, axis, &c.range, c.tau0.unwrap_or(2), c.other, exec)?,
        };
        out.push(Artifact::new(format!("converge_{axis}.csv"), sweep.to_csv()));
        out.push(Artifact::new(format!("converge_{axis}.json"), sidecar(&sweep, extra)));
    }
    Ok(out)
}

/// One continuum-model file per configured valley.
pub fn derive(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let o = r.orders;
    r.valleys
        .iter()
        .map(|&v| {
            let cm = derive_continuum_model(&r.model, v, o)?;
            Ok(Artifact::new(format!("continuum_{}-{}-{}_{v}.txt", o.m, o.n, o.tau), write_continuum_model(&cm)))
        })
        .collect()
}
