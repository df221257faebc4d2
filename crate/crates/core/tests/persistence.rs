//! Everything written to disk reads back bit-for-bit.

mod common;

use fracwave::dnmap::io::{read_matrix, read_record, write_matrix, write_record};
use fracwave::dnmap::{measure, ExteriorInput, SyntheticOracle, DnOracle};
use fracwave::forward::io::{read_trajectory, write_trajectory};
use fracwave::forward::{solve_with_exterior, NonlinearitySpec, SolverConfig};
use fracwave::lattice::io::{read_field, read_mask, read_spacetime, write_field, write_mask, write_spacetime};
use fracwave::lattice::{ScalarField, SpaceTimeField};

use common::{bump, small};

#[test]
fn fields_and_masks_round_trip() {
    let (g, m) = small();
    let dir = tempfile::tempdir().unwrap();
    let f = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() / 7.0);
    write_field(&dir.path().join("f"), &g, &f, "test").unwrap();
    let (g2, f2) = read_field(&dir.path().join("f")).unwrap();
    assert_eq!(g2.params(), g.params());
    assert_eq!(f2, f);

    let st = SpaceTimeField::separable(&g, &f, |t| 1.0 / (1.0 + t));
    write_spacetime(&dir.path().join("st"), &g, &st, "test").unwrap();
    assert_eq!(read_spacetime(&dir.path().join("st")).unwrap().1, st);

    write_mask(&dir.path().join("nested/mask"), &g, &m).unwrap();
    let (_, m2) = read_mask(&dir.path().join("nested/mask")).unwrap();
    assert_eq!(m2.omega(), m.omega());
    assert_eq!(m2.w1(), m.w1());
    assert_eq!(m2.w2(), m.w2());
    assert_eq!(m2.hash(), m.hash());
}

#[test]
fn nonlinear_trajectory_round_trips_with_its_logs() {
    let (g, m) = small();
    let spec = NonlinearitySpec::power(&g, bump(&g, &m, 0.0, 0.4, 1.0), 1.0).unwrap();
    let zero = SpaceTimeField::zeros(&g);
    let traj = solve_with_exterior(
        &g,
        &m,
        &spec,
        &zero,
        &bump(&g, &m, 0.0, 0.4, 0.7),
        &ScalarField::zeros(&g),
        &zero,
        &SolverConfig::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_trajectory(dir.path(), &g, &traj).unwrap();
    let (_, back) = read_trajectory(dir.path()).unwrap();
    assert_eq!(back.u, traj.u);
    assert_eq!(back.ut, traj.ut);
    assert_eq!(back.energy_log.len(), traj.energy_log.len());
    assert_eq!(back.picard_log.len(), traj.picard_log.len());
    for (a, b) in back.energy_log.iter().zip(&traj.energy_log) {
        assert_eq!(a.total(), b.total());
    }
}

#[test]
fn dn_records_and_matrices_round_trip() {
    let (g, m) = small();
    let cfg = SolverConfig::default();
    let oracle = SyntheticOracle::new(
        g.clone(),
        m.clone(),
        NonlinearitySpec::zero(),
        bump(&g, &m, 0.0, 0.4, 1.0),
        ScalarField::zeros(&g),
        cfg.clone(),
    )
    .unwrap()
    .with_provenance("persistence-test");
    let shape = ScalarField::constant(&g, 1.0).restricted(m.w1());
    let raw = SpaceTimeField::separable(&g, &shape, |t| t * t);
    let inputs = [
        ExteriorInput::passive(&g, "passive"),
        ExteriorInput::smoothed(&g, &m, &raw, 0.5, "ramp").unwrap(),
    ];
    let records: Vec<_> = inputs.iter().map(|i| oracle.measure(i).unwrap()).collect();

    let dir = tempfile::tempdir().unwrap();
    write_record(&dir.path().join("one"), &g, &m, &records[1]).unwrap();
    let (_, back) = read_record(&dir.path().join("one"), &m).unwrap();
    assert_eq!(back.trace, records[1].trace);
    assert_eq!(back.input.phi(), records[1].input.phi());
    assert_eq!(back.input.label(), "ramp");
    assert_eq!(back.provenance, "persistence-test");

    write_matrix(&dir.path().join("matrix"), &g, &m, &records).unwrap();
    let (_, all) = read_matrix(&dir.path().join("matrix"), &m).unwrap();
    assert_eq!(all.len(), 2);
    for (a, b) in all.iter().zip(&records) {
        assert_eq!(a.trace, b.trace);
    }

    // the oracle is the forward map with the hidden data plugged in
    let direct = measure(&g, &m, &NonlinearitySpec::zero(), &bump(&g, &m, 0.0, 0.4, 1.0), &ScalarField::zeros(&g), &inputs[1], &cfg).unwrap();
    assert_eq!(direct.trace, records[1].trace);
}
