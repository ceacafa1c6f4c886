use nalgebra::DMatrix;
use rigidity_core::heff::assemble;
use rigidity_core::scattering::solve_scattering;
use rigidity_core::sweep::{Grid, Outputs, ParamAxis};
use rigidity_core::{
    build_heff, eig_complex_symmetric, run_sweep, solve_poles, transmission_direct,
    transmission_spectral, ModelSpec, OpenSystem, Side, SweepPlan, C64,
};

fn small_billiard(radius: f64) -> ModelSpec {
    let mut spec = ModelSpec::billiard(3, 1.0, radius);
    spec.nx = 10;
    spec.ny = 12;
    spec
}

fn dense_green(matrix: &DMatrix<C64>, energy: f64) -> DMatrix<C64> {
    let n = matrix.nrows();
    let a = DMatrix::<C64>::identity(n, n) * C64::from(energy) - matrix;
    a.try_inverse().expect("regular resolvent")
}

#[test]
fn billiard_matrix_matches_dense_inverse() {
    for (radius, energy) in [(0.0, 1.1), (2.5, 1.7), (3.5, 2.6)] {
        let system = OpenSystem::new(&small_billiard(radius)).unwrap();
        let heff = assemble(&system, energy).unwrap();
        let g = dense_green(&heff.matrix, energy);
        let left: Vec<_> = heff.couplings_on(Side::Left).collect();
        let right: Vec<_> = heff.couplings_on(Side::Right).collect();
        let sol = solve_scattering(&system, energy, Side::Left).unwrap();
        assert_eq!(sol.t_matrix.shape(), (right.len(), left.len()));
        for (n, wr) in right.iter().enumerate() {
            for (m, wl) in left.iter().enumerate() {
                let oracle = C64::new(0.0, -2.0 * std::f64::consts::PI) * (wr.vector.transpose() * &g * &wl.vector)[0];
                assert!((sol.t_matrix[(n, m)] - oracle).norm() < 1e-10, "r={radius} E={energy} ({n},{m})");
            }
        }
        let psi = &g * &left[0].vector;
        assert!((&sol.psi_interior - psi).norm() < 1e-10 * sol.psi_interior.norm().max(1.0));
    }
}

#[test]
fn routes_agree_for_every_model() {
    let specs = [
        ModelSpec::chain(6, 0.5),
        ModelSpec::chain(3, 0.9),
        ModelSpec::double_dot(2f64.sqrt() / 16.0, 0.3),
    ];
    for spec in &specs {
        for k in 0..40 {
            let energy = -1.85 + 3.7 * k as f64 / 39.0;
            let d = transmission_direct(spec, energy).unwrap();
            let s = transmission_spectral(spec, energy).unwrap();
            assert!((d - s).norm() < 1e-8 * d.norm().max(1.0), "{:?} E={energy}", spec.kind);
        }
    }
}

#[test]
fn poles_are_fixed_points_of_the_assembled_hamiltonian() {
    let spec = ModelSpec::chain(6, 0.5);
    let poles = solve_poles(&spec).unwrap();
    assert_eq!(poles.len(), 6);
    for p in poles.iter().filter(|p| p.converged) {
        let heff = build_heff(&spec, p.energy).unwrap();
        let sys = eig_complex_symmetric(&heff.matrix).unwrap();
        let nearest = sys
            .eigenvalues
            .iter()
            .map(|z| (z - p.z).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-9);
        assert!((p.energy - p.z.re).abs() < 1e-9);
        assert!(p.width > 0.0);
    }
}

#[test]
fn sweep_csv_reflects_the_scattering_solution() {
    let spec = ModelSpec::double_dot(2f64.sqrt() / 16.0, 0.5);
    let mut plan = SweepPlan::new(spec.clone(), Grid::new(-0.4, 0.4, 9));
    plan.axis = ParamAxis::CouplingV(Grid::new(0.2, 0.6, 3));
    plan.outputs = Outputs { t: true, rho: true, poles: false, r_lambda: false };
    let table = run_sweep(&plan).unwrap();
    assert_eq!(table.rows.len(), 27);
    let csv = table.to_csv_string();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let abs_t = headers.iter().position(|h| h == "abs_t").unwrap();
    for record in reader.records() {
        let record = record.unwrap();
        let v: f64 = record[0].parse().unwrap();
        let e: f64 = record[1].parse().unwrap();
        let t = transmission_direct(&spec.with_coupling(v), e).unwrap();
        let written: f64 = record[abs_t].parse().unwrap();
        assert!((written - t.norm()).abs() < 1e-14, "v={v} E={e}");
    }
}
