use moire_core::model::{parse_model, simplified_model, write_model};
use moire_core::spectral::{band_structure, bz_path, central_relative_error, DEFAULT_PATH};
use moire_core::taylor::{derive_continuum_model, parse_continuum_model, write_continuum_model};
use moire_core::*;

fn setup() -> (TBModel, MoireGeometry, Basis, BandPath) {
    let m = simplified_model(&SimplifiedParams::default()).unwrap();
    let moire = MoireGeometry::new(&m.geom).unwrap();
    let basis = Basis::build(&moire, 3.0 * moire.shortest_length(), Valley::K).unwrap();
    let path = bz_path(&moire, &DEFAULT_PATH, 3, Valley::K).unwrap();
    (m, moire, basis, path)
}

#[test]
fn model_file_gives_identical_bands() {
    let (m, _, basis, path) = setup();
    let reloaded = parse_model(&write_model(&m), &m.geom).unwrap();
    for family in [Family::Exact(Truncation::All), Family::expanded(ExpansionOrders::new(2, 1, 2).unwrap())] {
        let a = band_structure(&m, family, &basis, &path, Execution::Sequential).unwrap();
        let b = band_structure(&reloaded, family, &basis, &path, Execution::Sequential).unwrap();
        assert_eq!(a.energies, b.energies);
    }
}

#[test]
fn exported_continuum_model_reproduces_expanded_bands() {
    let (m, _, basis, path) = setup();
    let orders = ExpansionOrders::new(2, 1, 3).unwrap();
    let cm = derive_continuum_model(&m, Valley::K, orders).unwrap();
    assert_eq!(parse_continuum_model(&write_continuum_model(&cm)).unwrap(), cm);
    let t = m.energy_scale();
    let a = band_structure(&m, Family::expanded(orders), &basis, &path, Execution::Parallel).unwrap();
    let b = band_structure(&m, Family::Continuum(orders), &basis, &path, Execution::Parallel).unwrap();
    for (ra, rb) in a.energies.iter().zip(&b.energies) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9 * t);
        }
    }
}

#[test]
fn higher_orders_track_the_exact_bands_better() {
    let (m, _, basis, path) = setup();
    let t = m.energy_scale();
    let exact = band_structure(&m, Family::Exact(Truncation::All), &basis, &path, Execution::Parallel).unwrap();
    let err = |o: ExpansionOrders| {
        let b = band_structure(&m, Family::expanded(o), &basis, &path, Execution::Parallel).unwrap();
        central_relative_error(&exact, &b, t).unwrap()
    };
    let low = err(ExpansionOrders::bm());
    let high = err(ExpansionOrders::new(3, 2, 6).unwrap());
    assert!(high < low / 10.0, "{high} vs {low}");
}
