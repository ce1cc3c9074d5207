use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;
use shm_core::dataset::{DatasetSpec, DiameterGrid, Normalization};
use shm_core::fem::{
    assemble_cantilever, element_matrices, frequency_response, natural_frequencies, section_properties, BeamModel,
    Material, SweepConfig,
};
use shm_core::par::Execution;

const STEEL_EI_D01: f64 = 2.1e11 * std::f64::consts::PI * 1e-8 / 64.0;

fn steel_beam(d: f64) -> BeamModel {
    BeamModel::new(1.0, [d; 4], Material::default()).unwrap()
}

/// Analytic clamped-free Euler–Bernoulli frequencies from (βL)².
fn analytic_frequencies(d: f64, mat: &Material) -> [f64; 3] {
    let s = section_properties(d).unwrap();
    let c = (mat.youngs_modulus * s.second_moment / (mat.density * s.area)).sqrt();
    [3.5160, 22.034, 61.697].map(|b| b * c)
}

#[test]
fn section_of_ten_millimetre_bar() {
    let s = section_properties(0.01).unwrap();
    assert_relative_eq!(s.area, 7.853982e-5, max_relative = 1e-6);
    assert_relative_eq!(s.second_moment, 4.908739e-10, max_relative = 1e-6);
    assert!(section_properties(0.0).is_err());
    assert!(section_properties(f64::NAN).is_err());
}

#[test]
fn element_entries_and_total_mass() {
    let e = element_matrices(1.0, 1.0, 1.0).unwrap();
    assert_eq!(e.stiffness[0][0], 12.0);
    assert_eq!(e.stiffness[1][1], 4.0);
    assert_eq!(e.stiffness[0][2], -12.0);
    let t = [1.0, 0.0, 1.0, 0.0];
    let mass: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| t[a] * e.mass[a][b] * t[b]).sum();
    assert_relative_eq!(mass, 1.0, epsilon = 1e-14);
    assert!(element_matrices(0.0, 1.0, 1.0).is_err());
    assert!(element_matrices(1.0, -1.0, 1.0).is_err());
}

fn frobenius(m: &[[f64; 4]; 4]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn rigid_body_vectors_are_annihilated(ei in 1e-2..1e4_f64, rho_a in 1e-2..1e3_f64, l in 0.01..2.0_f64) {
        let e = element_matrices(ei, rho_a, l).unwrap();
        let norm = frobenius(&e.stiffness);
        for r in [[1.0, 0.0, 1.0, 0.0], [-l / 2.0, 1.0, l / 2.0, 1.0]] {
            let kr: f64 = (0..4).map(|a| (0..4).map(|b| e.stiffness[a][b] * r[b]).sum::<f64>().powi(2)).sum::<f64>().sqrt();
            prop_assert!(kr / norm <= 1e-10, "{kr} / {norm}");
        }
    }

    #[test]
    fn section_scaling_law(d in 1e-4..1.0_f64) {
        let a = section_properties(d).unwrap();
        let b = section_properties(2.0 * d).unwrap();
        prop_assert!((b.area / a.area - 4.0).abs() < 1e-12);
        prop_assert!((b.second_moment / a.second_moment - 16.0).abs() < 1e-12);
    }

    #[test]
    fn assembled_system_is_symmetric_positive_definite(d in prop::array::uniform4(0.005..0.015_f64)) {
        let sys = BeamModel::new(1.0, d, Material::default()).unwrap().assemble().unwrap();
        prop_assert_eq!(sys.num_dofs(), 8);
        prop_assert_eq!(&sys.stiffness, &sys.stiffness.transpose());
        prop_assert_eq!(&sys.mass, &sys.mass.transpose());
        prop_assert!(sys.stiffness.clone().cholesky().is_some());
        prop_assert!(sys.mass.clone().cholesky().is_some());
        let w = natural_frequencies(&sys).unwrap();
        prop_assert_eq!(w.len(), 8);
        prop_assert!(w[0] > 0.0);
        prop_assert!(w.windows(2).all(|p| p[1] > p[0]));
    }
}

/// Brute-force assembly over explicit global DOF lists, clamped rows and
/// columns dropped afterwards.
fn naive_assembly(d: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let model = steel_beam(d);
    let elems = model.elements().unwrap();
    let dofs = [[0, 1, 2, 3], [2, 3, 4, 5], [4, 5, 6, 7], [6, 7, 8, 9]];
    let mut k = DMatrix::zeros(10, 10);
    let mut m = DMatrix::zeros(10, 10);
    for (e, map) in elems.iter().zip(dofs) {
        for a in 0..4 {
            for b in 0..4 {
                k[(map[a], map[b])] += e.stiffness[a][b];
                m[(map[a], map[b])] += e.mass[a][b];
            }
        }
    }
    let keep: Vec<usize> = (2..10).collect();
    let pick = |x: &DMatrix<f64>| DMatrix::from_fn(8, 8, |i, j| x[(keep[i], keep[j])]);
    (pick(&k), pick(&m))
}

#[test]
fn assembly_matches_brute_force() {
    let sys = steel_beam(0.01).assemble().unwrap();
    let (k, m) = naive_assembly(0.01);
    assert_eq!(sys.stiffness, k);
    assert_eq!(sys.mass, m);
    let l = 0.25;
    assert_relative_eq!(sys.stiffness[(0, 0)], 24.0 * STEEL_EI_D01 / (l * l * l), max_relative = 1e-12);
    let nodes: Vec<usize> = sys.dof_map.iter().map(|d| d.node).collect();
    assert_eq!(nodes, vec![2, 3, 4, 5]);
}

#[test]
fn natural_frequencies_match_analytic_cantilever() {
    let mat = Material::default();
    let w = natural_frequencies(&steel_beam(0.01).assemble().unwrap()).unwrap();
    let exact = analytic_frequencies(0.01, &mat);
    assert_relative_eq!(exact[0], 45.5, max_relative = 0.01);
    for (i, tol) in [0.02, 0.02, 0.06].into_iter().enumerate() {
        let err = (w[i] - exact[i]).abs() / exact[i];
        assert!(err <= tol, "mode {} error {err}", i + 1);
    }
}

#[test]
fn stiffer_material_scales_frequencies_by_root() {
    let base = natural_frequencies(&steel_beam(0.01).assemble().unwrap()).unwrap();
    let mat = Material { youngs_modulus: 4.0 * 2.1e11, ..Material::default() };
    let stiff = natural_frequencies(&BeamModel::new(1.0, [0.01; 4], mat).unwrap().assemble().unwrap()).unwrap();
    for (a, b) in base.iter().zip(&stiff) {
        assert_relative_eq!(b / a, 2.0, max_relative = 1e-10);
    }
}

#[test]
fn mesh_refinement_approaches_analytic() {
    let mat = Material::default();
    let s = section_properties(0.01).unwrap();
    let ei = mat.youngs_modulus * s.second_moment;
    let rho_a = mat.density * s.area;
    let exact = analytic_frequencies(0.01, &mat)[0];
    let mut errors = Vec::new();
    for n in [1, 2, 4, 8] {
        let e = element_matrices(ei, rho_a, 1.0 / n as f64).unwrap();
        let w = natural_frequencies(&assemble_cantilever(&vec![e; n])).unwrap();
        errors.push((w[0] - exact).abs());
    }
    assert!(errors.windows(2).all(|p| p[1] < p[0]), "{errors:?}");
}

/// |acceleration| from all eight mass-normalized modes with hysteretic
/// damping on the modal stiffness.
fn modal_response(d: f64, eta: f64, omega: f64, exc: usize, resp: usize) -> f64 {
    let sys = steel_beam(d).assemble().unwrap();
    let l = sys.mass.clone().cholesky().unwrap().l();
    let linv = l.clone().try_inverse().unwrap();
    let a = &linv * &sys.stiffness * linv.transpose();
    let eig = SymmetricEigen::new((&a + a.transpose()) * 0.5);
    let phi = linv.transpose() * eig.eigenvectors;
    let mut u = Complex64::new(0.0, 0.0);
    for r in 0..8 {
        let w2 = eig.eigenvalues[r];
        u += phi[(resp, r)] * phi[(exc, r)] / Complex64::new(w2 - omega * omega, eta * w2);
    }
    (u * omega * omega).norm()
}

#[test]
fn direct_response_matches_modal_superposition() {
    let model = steel_beam(0.01);
    let sys = model.assemble().unwrap();
    let poles = natural_frequencies(&sys).unwrap();
    let mut omegas = vec![0.5 * poles[0]];
    omegas.extend(poles.windows(2).filter(|p| p[1] < 1000.0).map(|p| 0.5 * (p[0] + p[1])));
    for &omega in &omegas {
        let sweep = SweepConfig { omega_min: omega, omega_max: omega + 1e-3, n_points: 2, ..SweepConfig::default() };
        let traces = frequency_response(&sys, &sweep, &model.material).unwrap();
        for (t, &node) in traces.iter().zip(&sweep.response_nodes) {
            let exc = sys.dofs_of(5).unwrap().translation;
            let dof = sys.dofs_of(node).unwrap().translation;
            let oracle = modal_response(0.01, model.material.loss_factor, omega, exc, dof);
            assert_relative_eq!(t[0], oracle, max_relative = 0.01);
        }
    }
}

#[test]
fn peaks_sit_next_to_natural_frequencies() {
    let model = steel_beam(0.01);
    let sys = model.assemble().unwrap();
    let sweep = SweepConfig::default();
    let grid = sweep.grid();
    let tip = &frequency_response(&sys, &sweep, &model.material).unwrap()[0];
    let step = grid[1] - grid[0];
    for w in natural_frequencies(&sys).unwrap().into_iter().filter(|&w| w < 1000.0) {
        let near = grid.iter().position(|&g| g >= w).unwrap();
        let found = (near.saturating_sub(2)..(near + 2).min(grid.len() - 1))
            .filter(|&i| i > 0)
            .any(|i| tip[i] >= tip[i - 1] && tip[i] >= tip[i + 1]);
        assert!(found, "no local maximum within {step} rad/s of {w}");
    }
}

#[test]
fn quasi_static_limit() {
    let model = steel_beam(0.01);
    let sys = model.assemble().unwrap();
    let sweep = SweepConfig { n_points: 2, ..SweepConfig::default() };
    let traces = frequency_response(&sys, &sweep, &model.material).unwrap();
    let mut f = nalgebra::DVector::zeros(8);
    f[sys.dofs_of(5).unwrap().translation] = 1.0;
    let static_u = sys.stiffness.clone().lu().solve(&f).unwrap();
    let w2 = sweep.omega_min * sweep.omega_min;
    let eta = model.material.loss_factor;
    for (t, &node) in traces.iter().zip(&sweep.response_nodes) {
        let expect = w2 * static_u[sys.dofs_of(node).unwrap().translation].abs() / (1.0 + eta * eta).sqrt();
        assert_relative_eq!(t[0], expect, max_relative = 1e-4);
    }
}

fn small_spec() -> DatasetSpec {
    DatasetSpec {
        sweep: SweepConfig { n_points: 50, ..SweepConfig::default() },
        grid: DiameterGrid::uniform(0.005, 0.015, 3).unwrap(),
        ..DatasetSpec::desk()
    }
}

#[test]
fn node_order_permutes_blocks() {
    let mut spec = small_spec();
    spec.normalization = Normalization::None;
    let a = spec.sample(17).unwrap().features;
    spec.sweep.response_nodes = vec![2, 3, 4, 5];
    let b = spec.sample(17).unwrap().features;
    let n = spec.sweep.n_points;
    for (i, j) in [(0, 3), (1, 2), (2, 1), (3, 0)] {
        assert_eq!(a[i * n..(i + 1) * n], b[j * n..(j + 1) * n]);
    }
}

#[test]
fn presets_have_the_documented_sizes() {
    let full = DatasetSpec::full_paper();
    assert_eq!(full.num_samples(), 14_641);
    assert_eq!(full.feature_length(), 40_000);
    assert_eq!(full.sweep.response_nodes, vec![5, 4, 3, 2]);
    let desk = DatasetSpec::desk();
    assert_eq!(desk.num_samples(), 625);
    assert_eq!(desk.feature_length(), 2_000);
}

#[test]
fn regeneration_is_byte_identical() {
    let spec = small_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    spec.write_to(a.path(), Execution::Parallel).unwrap();
    spec.write_to(b.path(), Execution::Sequential).unwrap();
    for f in ["features.f32", "targets.f64", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
