//! Sequential against rayon-parallel momentum sweeps.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use moire_core::model::simplified_model;
use moire_core::spectral::{band_structure, bz_path, density_of_states, energy_grid, DosSpec, DEFAULT_PATH};
use moire_core::{Basis, Execution, Family, MoireGeometry, SimplifiedParams, Truncation, Valley};

fn sweeps(c: &mut Criterion) {
    let model = simplified_model(&SimplifiedParams::default()).unwrap();
    let moire = MoireGeometry::new(&model.geom).unwrap();
    let family = Family::Exact(Truncation::All);
    let path = bz_path(&moire, &DEFAULT_PATH, 8, Valley::K).unwrap();

    let mut group = c.benchmark_group("band_structure");
    group.sample_size(10);
    for radius in [2.0, 3.0] {
        let basis = Basis::build(&moire, radius * moire.shortest_length(), Valley::K).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let id = BenchmarkId::new(format!("{exec:?}"), basis.dimension());
            group.bench_with_input(id, &basis, |b, basis| {
                b.iter(|| band_structure(&model, family, basis, &path, exec).unwrap())
            });
        }
    }
    group.finish();

    let spec = DosSpec {
        energies: energy_grid(-0.2, 0.2, 401).unwrap(),
        epsilon: 0.005,
        n: 6,
        valleys: Valley::BOTH.to_vec(),
    };
    let lambda = 2.0 * moire.shortest_length();
    let mut group = c.benchmark_group("density_of_states");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| density_of_states(&model, family, lambda, &spec, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
