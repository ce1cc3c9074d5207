//! Euler–Bernoulli cantilever model: element matrices, direct-stiffness
//! assembly, natural frequencies and harmonic (hysteretically damped)
//! frequency response.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::FemError;

/// Number of elements in the cantilever model.
pub const NUM_ELEMENTS: usize = 4;
/// Degrees of freedom per node: transverse deflection and slope.
pub const DOF_PER_NODE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Mass density, kg/m³.
    pub density: f64,
    /// Hysteretic loss factor η; stiffness becomes K(1 + iη).
    pub loss_factor: f64,
}

impl Default for Material {
    /// Structural steel with η = 0.01.
    fn default() -> Self {
        Self {
            youngs_modulus: 2.1e11,
            density: 7850.0,
            loss_factor: 0.01,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<(), FemError> {
        let ok = self.youngs_modulus.is_finite()
            && self.youngs_modulus > 0.0
            && self.density.is_finite()
            && self.density > 0.0
            && self.loss_factor.is_finite()
            && self.loss_factor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(FemError::InvalidParameter(format!("{self:?}")))
        }
    }
}

/// Cross-section of a solid circular bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionProperties {
    pub area: f64,
    pub second_moment: f64,
}

pub fn section_properties(diameter: f64) -> Result<SectionProperties, FemError> {
    if !diameter.is_finite() || diameter <= 0.0 {
        return Err(FemError::InvalidGeometry(format!("diameter {diameter}")));
    }
    Ok(SectionProperties {
        area: PI * diameter * diameter / 4.0,
        second_moment: PI * diameter.powi(4) / 64.0,
    })
}

/// 4×4 element matrices in the (v₁, θ₁, v₂, θ₂) ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    pub stiffness: [[f64; 4]; 4],
    pub mass: [[f64; 4]; 4],
    pub element_length: f64,
}

/// Consistent-mass Euler–Bernoulli element.
pub fn element_matrices(ei: f64, rho_a: f64, l: f64) -> Result<ElementMatrices, FemError> {
    for (name, v) in [("EI", ei), ("rhoA", rho_a), ("l", l)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(FemError::InvalidParameter(format!("{name} = {v}")));
        }
    }
    let k = ei / (l * l * l);
    let l2 = l * l;
    let stiffness = [
        [12.0 * k, 6.0 * l * k, -12.0 * k, 6.0 * l * k],
        [6.0 * l * k, 4.0 * l2 * k, -6.0 * l * k, 2.0 * l2 * k],
        [-12.0 * k, -6.0 * l * k, 12.0 * k, -6.0 * l * k],
        [6.0 * l * k, 2.0 * l2 * k, -6.0 * l * k, 4.0 * l2 * k],
    ];
    let m = rho_a * l / 420.0;
    let mass = [
        [156.0 * m, 22.0 * l * m, 54.0 * m, -13.0 * l * m],
        [22.0 * l * m, 4.0 * l2 * m, 13.0 * l * m, -3.0 * l2 * m],
        [54.0 * m, 13.0 * l * m, 156.0 * m, -22.0 * l * m],
        [-13.0 * l * m, -3.0 * l2 * m, -22.0 * l * m, 4.0 * l2 * m],
    ];
    Ok(ElementMatrices {
        stiffness,
        mass,
        element_length: l,
    })
}

/// Four-element circular cantilever, clamped at node 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamModel {
    pub length_total: f64,
    pub diameters: [f64; NUM_ELEMENTS],
    pub material: Material,
}

impl Default for BeamModel {
    fn default() -> Self {
        Self {
            length_total: 1.0,
            diameters: [0.01; NUM_ELEMENTS],
            material: Material::default(),
        }
    }
}

impl BeamModel {
    pub fn new(length_total: f64, diameters: [f64; NUM_ELEMENTS], material: Material) -> Result<Self, FemError> {
        let model = Self {
            length_total,
            diameters,
            material,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !self.length_total.is_finite() || self.length_total <= 0.0 {
            return Err(FemError::InvalidGeometry(format!("length {}", self.length_total)));
        }
        for d in self.diameters {
            section_properties(d)?;
        }
        self.material.validate()
    }

    pub fn element_length(&self) -> f64 {
        self.length_total / NUM_ELEMENTS as f64
    }

    pub fn elements(&self) -> Result<Vec<ElementMatrices>, FemError> {
        self.validate()?;
        let l = self.element_length();
        self.diameters
            .iter()
            .map(|&d| {
                let s = section_properties(d)?;
                element_matrices(
                    self.material.youngs_modulus * s.second_moment,
                    self.material.density * s.area,
                    l,
                )
            })
            .collect()
    }

    pub fn assemble(&self) -> Result<AssembledSystem, FemError> {
        Ok(assemble_cantilever(&self.elements()?))
    }
}

/// Global DOF indices of one free node in the constrained system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeDofs {
    /// 1-based node number (node 1 is the clamped root).
    pub node: usize,
    pub translation: usize,
    pub rotation: usize,
}

/// Constrained global matrices; node 1's DOFs are removed.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub dof_map: Vec<NodeDofs>,
}

impl AssembledSystem {
    /// Builds a system from already-constrained matrices. Free nodes are
    /// numbered 2, 3, … in DOF order.
    pub fn from_matrices(stiffness: DMatrix<f64>, mass: DMatrix<f64>) -> Result<Self, FemError> {
        let n = stiffness.nrows();
        if n == 0
            || n % DOF_PER_NODE != 0
            || !stiffness.is_square()
            || mass.shape() != stiffness.shape()
        {
            return Err(FemError::InvalidParameter(format!(
                "system shapes {:?} / {:?}",
                stiffness.shape(),
                mass.shape()
            )));
        }
        let dof_map = (0..n / DOF_PER_NODE)
            .map(|i| NodeDofs {
                node: i + 2,
                translation: DOF_PER_NODE * i,
                rotation: DOF_PER_NODE * i + 1,
            })
            .collect();
        Ok(Self {
            stiffness,
            mass,
            dof_map,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn dofs_of(&self, node: usize) -> Result<NodeDofs, FemError> {
        self.dof_map
            .iter()
            .copied()
            .find(|d| d.node == node)
            .ok_or(FemError::UnknownNode(node))
    }
}

/// Direct-stiffness assembly of a chain of elements with node 1 clamped.
pub fn assemble_cantilever(elements: &[ElementMatrices]) -> AssembledSystem {
    let full = DOF_PER_NODE * (elements.len() + 1);
    let mut k = DMatrix::<f64>::zeros(full, full);
    let mut m = DMatrix::<f64>::zeros(full, full);
    for (e, em) in elements.iter().enumerate() {
        let base = DOF_PER_NODE * e;
        for a in 0..4 {
            for b in 0..4 {
                k[(base + a, base + b)] += em.stiffness[a][b];
                m[(base + a, base + b)] += em.mass[a][b];
            }
        }
    }
    let free = full - DOF_PER_NODE;
    let k = k.view((DOF_PER_NODE, DOF_PER_NODE), (free, free)).into_owned();
    let m = m.view((DOF_PER_NODE, DOF_PER_NODE), (free, free)).into_owned();
    AssembledSystem::from_matrices(k, m).expect("assembled shapes are consistent")
}

/// Natural frequencies (rad/s, ascending) of K φ = ω² M φ.
pub fn natural_frequencies(system: &AssembledSystem) -> Result<Vec<f64>, FemError> {
    let chol = system
        .mass
        .clone()
        .cholesky()
        .ok_or(FemError::Factorization("mass matrix is not positive-definite"))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(FemError::Factorization("mass Cholesky factor is singular"))?;
    let mut a = &l_inv * &system.stiffness * l_inv.transpose();
    // Symmetrize round-off before the symmetric solver.
    a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambdas.sort_by(|x, y| x.total_cmp(y));
    if lambdas.iter().any(|&x| !(x > 0.0)) {
        return Err(FemError::Factorization("stiffness is not positive-definite"));
    }
    Ok(lambdas.into_iter().map(f64::sqrt).collect())
}

/// Frequency sweep and measurement layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
    pub excitation_node: usize,
    pub excitation_amplitude: f64,
    pub response_nodes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            omega_min: 0.1,
            omega_max: 1000.0,
            n_points: 10_000,
            excitation_node: 5,
            excitation_amplitude: 1.0,
            response_nodes: vec![5, 4, 3, 2],
        }
    }
}

impl SweepConfig {
    pub fn with_points(n_points: usize) -> Self {
        Self {
            n_points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.omega_min.is_finite() && self.omega_max.is_finite())
            || self.omega_min <= 0.0
            || self.omega_min >= self.omega_max
        {
            return Err(FemError::InvalidSweep(format!(
                "omega range [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        if self.n_points < 2 {
            return Err(FemError::InvalidSweep(format!("n_points = {}", self.n_points)));
        }
        if self.response_nodes.is_empty() {
            return Err(FemError::InvalidSweep("no response nodes".into()));
        }
        if !self.excitation_amplitude.is_finite() {
            return Err(FemError::InvalidSweep("excitation amplitude".into()));
        }
        Ok(())
    }

    /// Linear grid, both endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.omega_max - self.omega_min) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    self.omega_max
                } else {
                    self.omega_min + step * i as f64
                }
            })
            .collect()
    }

    pub fn feature_length(&self) -> usize {
        self.n_points * self.response_nodes.len()
    }
}

/// Dense complex Gaussian elimination with partial pivoting, reusing its
/// buffers across frequencies.
struct ComplexSolver {
    n: usize,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl ComplexSolver {
    fn new(n: usize) -> Self {
        Self {
            n,
            a: vec![Complex64::new(0.0, 0.0); n * n],
            b: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Solves in place; returns `false` when a pivot is numerically zero.
    fn solve(&mut self, tol: f64) -> bool {
        let n = self.n;
        let a = &mut self.a;
        let b = &mut self.b;
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].norm();
            for r in col + 1..n {
                let v = a[r * n + col].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > tol) {
                return false;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                b.swap(col, piv);
            }
            let inv = a[col * n + col].inv();
            for r in col + 1..n {
                let f = a[r * n + col] * inv;
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                for c in col..n {
                    let t = a[col * n + c];
                    a[r * n + c] -= f * t;
                }
                let t = b[col];
                b[r] -= f * t;
            }
        }
        for r in (0..n).rev() {
            let mut s = b[r];
            for c in r + 1..n {
                s -= a[r * n + c] * b[c];
            }
            b[r] = s / a[r * n + r];
        }
        true
    }
}

/// |acceleration| per unit force at each response node, in the sweep's node
/// order. Each inner vector has `sweep.n_points` entries.
pub fn frequency_response(
    system: &AssembledSystem,
    sweep: &SweepConfig,
    material: &Material,
) -> Result<Vec<Vec<f64>>, FemError> {
    sweep.validate()?;
    material.validate()?;
    let n = system.num_dofs();
    let exc = system.dofs_of(sweep.excitation_node)?.translation;
    let resp: Vec<usize> = sweep
        .response_nodes
        .iter()
        .map(|&node| system.dofs_of(node).map(|d| d.translation))
        .collect::<Result<_, _>>()?;

    let damping = Complex64::new(1.0, material.loss_factor);
    let kc: Vec<Complex64> = system.stiffness.transpose().iter().map(|&k| damping * k).collect();
    let m: Vec<f64> = system.mass.transpose().iter().copied().collect();
    let scale = system.stiffness.amax().max(system.mass.amax());

    let mut solver = ComplexSolver::new(n);
    let mut out = vec![Vec::with_capacity(sweep.n_points); resp.len()];
    for omega in sweep.grid() {
        let w2 = omega * omega;
        for (dst, (&k, &mm)) in solver.a.iter_mut().zip(kc.iter().zip(&m)) {
            *dst = k - w2 * mm;
        }
        solver.b.fill(Complex64::new(0.0, 0.0));
        solver.b[exc] = Complex64::new(sweep.excitation_amplitude, 0.0);
        let tol = 8.0 * f64::EPSILON * scale.max(w2 * system.mass.amax());
        if !solver.solve(tol) {
            return Err(FemError::Singular { omega });
        }
        for (trace, &dof) in out.iter_mut().zip(&resp) {
            let accel = solver.b[dof] * (-w2);
            if !accel.re.is_finite() || !accel.im.is_finite() {
                return Err(FemError::Singular { omega });
            }
            trace.push(accel.norm());
        }
    }
    Ok(out)
}
