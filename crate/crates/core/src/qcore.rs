//! Finite-dimensional state representation.
//!
//! All operators live in the product pointer basis of a [`SystemLayout`]:
//! factor order is the roster order and basis indices run row-major over the
//! lexicographic product of the pointer bases (the last factor varies
//! fastest).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const TAU_HERM: f64 = 1e-10;
pub const TAU_TRACE: f64 = 1e-10;
pub const TAU_UNITARY: f64 = 1e-10;
pub const TAU_PSD: f64 = 1e-10;
pub const TAU_EIG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Spin,
    Position,
    Apparatus,
    Ancilla,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSpec {
    pub label: String,
    pub role: Role,
    pub pointer_basis: Vec<String>,
}

impl SubsystemSpec {
    pub fn new(label: &str, role: Role, pointer_basis: &[&str]) -> Result<Self> {
        let spec = SubsystemSpec {
            label: label.to_string(),
            role,
            pointer_basis: pointer_basis.iter().map(|s| s.to_string()).collect(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn dimension(&self) -> usize {
        self.pointer_basis.len()
    }

    pub fn pointer_index(&self, name: &str) -> Result<usize> {
        self.pointer_basis
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| {
                Error::Validation(format!("`{}` has no pointer state `{name}`", self.label))
            })
    }

    fn check(&self) -> Result<()> {
        let min_dim = if self.role == Role::Ancilla { 1 } else { 2 };
        if self.dimension() < min_dim {
            return Err(Error::LayoutConflict(format!(
                "subsystem `{}` needs dimension >= {min_dim}",
                self.label
            )));
        }
        for (i, a) in self.pointer_basis.iter().enumerate() {
            if self.pointer_basis[..i].contains(a) {
                return Err(Error::LayoutConflict(format!(
                    "subsystem `{}` repeats pointer state `{a}`",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Ordered roster of subsystems; fixes the tensor factor order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SubsystemSpec>", into = "Vec<SubsystemSpec>")]
pub struct SystemLayout {
    subsystems: Vec<SubsystemSpec>,
}

impl TryFrom<Vec<SubsystemSpec>> for SystemLayout {
    type Error = Error;
    fn try_from(v: Vec<SubsystemSpec>) -> Result<Self> {
        SystemLayout::new(v)
    }
}

impl From<SystemLayout> for Vec<SubsystemSpec> {
    fn from(l: SystemLayout) -> Self {
        l.subsystems
    }
}

impl SystemLayout {
    pub fn new(subsystems: Vec<SubsystemSpec>) -> Result<Self> {
        for (i, s) in subsystems.iter().enumerate() {
            s.check()?;
            if subsystems[..i].iter().any(|o| o.label == s.label) {
                return Err(Error::LayoutConflict(format!(
                    "duplicate label `{}`",
                    s.label
                )));
            }
        }
        Ok(SystemLayout { subsystems })
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn labels(&self) -> Vec<String> {
        self.subsystems.iter().map(|s| s.label.clone()).collect()
    }

    pub fn total_dimension(&self) -> usize {
        self.subsystems.iter().map(|s| s.dimension()).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dimension()).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownSubsystem(label.to_string()))
    }

    pub fn get(&self, label: &str) -> Result<&SubsystemSpec> {
        Ok(&self.subsystems[self.position(label)?])
    }

    pub fn contains(&self, label: &str) -> bool {
        self.subsystems.iter().any(|s| s.label == label)
    }

    /// First subsystem with the given role.
    pub fn find_role(&self, role: Role) -> Option<&SubsystemSpec> {
        self.subsystems.iter().find(|s| s.role == role)
    }

    pub fn concat(&self, other: &SystemLayout) -> Result<SystemLayout> {
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        SystemLayout::new(subsystems)
    }

    /// Sub-layout on the given labels, kept in roster order.
    pub fn restrict(&self, keep: &[&str]) -> Result<SystemLayout> {
        for k in keep {
            self.position(k)?;
        }
        let subsystems = self
            .subsystems
            .iter()
            .filter(|s| keep.contains(&s.label.as_str()))
            .cloned()
            .collect();
        SystemLayout::new(subsystems)
    }

    /// Mixed-radix digits of a product-basis index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut out = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = index % dims[k];
            index /= dims[k];
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(self.dims())
            .fold(0, |acc, (d, n)| acc * n + d)
    }

    /// Name of a product basis state, e.g. `+z,L,ready`.
    pub fn basis_name(&self, index: usize) -> String {
        self.digits(index)
            .iter()
            .zip(&self.subsystems)
            .map(|(d, s)| s.pointer_basis[*d].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn hermitian_eigen(m: &CMatrix) -> Result<SymmetricEigen<C64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(hermitian_part(m), 1e-15, 100_000)
        .ok_or_else(|| Error::NumericalFailure("Hermitian eigensolver did not converge".into()))
}

/// Eigenvalues of the Hermitian part of `m`, descending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let eig = hermitian_eigen(m)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Eigenpairs of the Hermitian part of `m`, eigenvalues descending.
pub fn hermitian_eigenpairs(m: &CMatrix) -> Result<Vec<(f64, CVector)>> {
    let eig = hermitian_eigen(m)?;
    let mut pairs: Vec<(f64, CVector)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, v)| (*v, eig.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Operator `op` acting on factor `label`, identity elsewhere.
pub fn embed(layout: &SystemLayout, label: &str, op: &CMatrix) -> Result<CMatrix> {
    let pos = layout.position(label)?;
    let dims = layout.dims();
    if op.nrows() != dims[pos] || op.ncols() != dims[pos] {
        return Err(Error::LayoutConflict(format!(
            "operator of size {} on `{label}` of dimension {}",
            op.nrows(),
            dims[pos]
        )));
    }
    let before: usize = dims[..pos].iter().product();
    let after: usize = dims[pos + 1..].iter().product();
    let left = CMatrix::identity(before, before).kronecker(op);
    Ok(left.kronecker(&CMatrix::identity(after, after)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub trace_defect: f64,
    pub passed: bool,
}

/// Density operator on a labelled tensor-product space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    layout: SystemLayout,
    matrix: CMatrix,
}

impl DensityState {
    /// Builds a state and rejects it unless it validates.
    pub fn new(layout: SystemLayout, matrix: CMatrix) -> Result<Self> {
        let state = Self::new_unchecked(layout, matrix)?;
        let report = state.validate();
        if !report.passed {
            return Err(Error::InvalidState(format!(
                "hermiticity defect {:.3e}, min eigenvalue {:.3e}, trace defect {:.3e}",
                report.hermiticity_defect, report.min_eigenvalue, report.trace_defect
            )));
        }
        Ok(state)
    }

    /// Only checks the matrix size; use [`DensityState::validate`] to inspect.
    pub fn new_unchecked(layout: SystemLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dimension();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LayoutConflict(format!(
                "matrix is {}x{} but layout dimension is {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DensityState { layout, matrix })
    }

    /// Normalised pure state from amplitudes in the product basis.
    pub fn pure(layout: SystemLayout, amplitudes: &CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = amplitudes / C64::new(norm, 0.0);
        Self::new(layout, &v * v.adjoint())
    }

    /// Product pointer state, one pointer index per factor.
    pub fn basis_state(layout: SystemLayout, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.subsystems().len()
            || digits.iter().zip(layout.dims()).any(|(d, n)| *d >= n)
        {
            return Err(Error::LayoutConflict(
                "pointer digits do not fit layout".into(),
            ));
        }
        let n = layout.total_dimension();
        let mut m = CMatrix::zeros(n, n);
        let idx = layout.index_of(digits);
        m[(idx, idx)] = C64::new(1.0, 0.0);
        Self::new(layout, m)
    }

    /// Product of one local operator per factor, in roster order.
    pub fn product(layout: SystemLayout, locals: &[CMatrix]) -> Result<Self> {
        if locals.len() != layout.subsystems().len() {
            return Err(Error::LayoutConflict(
                "one local state per factor required".into(),
            ));
        }
        let mut m = CMatrix::identity(1, 1);
        for local in locals {
            m = m.kronecker(local);
        }
        Self::new(layout, m)
    }

    /// `I / d` on the layout.
    pub fn maximally_mixed(layout: SystemLayout) -> Result<Self> {
        let n = layout.total_dimension();
        Self::new(layout, CMatrix::identity(n, n) / C64::new(n as f64, 0.0))
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn validate(&self) -> ValidationReport {
        let hermiticity_defect = max_abs(&(&self.matrix - self.matrix.adjoint()));
        let trace_defect = (self.matrix.trace() - C64::new(1.0, 0.0)).norm();
        let min_eigenvalue = hermitian_eigenvalues(&self.matrix)
            .ok()
            .and_then(|v| v.last().copied())
            .unwrap_or(f64::NAN);
        let passed = hermiticity_defect <= TAU_HERM
            && trace_defect <= TAU_TRACE
            && min_eigenvalue >= -TAU_PSD;
        ValidationReport {
            hermiticity_defect,
            min_eigenvalue,
            trace_defect,
            passed,
        }
    }

    /// Descending eigenvalues, clamped into [0, 1].
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let values = hermitian_eigenvalues(&self.matrix)?;
        Ok(values.into_iter().map(|w| w.clamp(0.0, 1.0)).collect())
    }

    pub fn tensor(&self, other: &DensityState) -> Result<DensityState> {
        let layout = self.layout.concat(&other.layout)?;
        Self::new_unchecked(layout, self.matrix.kronecker(&other.matrix))
    }

    /// Reduced state on `keep`, factors in roster order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityState> {
        if keep.is_empty() {
            return Err(Error::LayoutConflict(
                "partial trace must keep a subsystem".into(),
            ));
        }
        let kept_layout = self.layout.restrict(keep)?;
        let kept_mask: Vec<bool> = self
            .layout
            .subsystems()
            .iter()
            .map(|s| keep.contains(&s.label.as_str()))
            .collect();
        let dims = self.layout.dims();
        let mut strides = vec![1usize; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        // Full-space offsets contributed by the kept and the traced digits.
        let offsets = |keep_side: bool| -> Vec<usize> {
            let mut out = vec![0usize];
            for (k, &d) in dims.iter().enumerate() {
                if kept_mask[k] != keep_side {
                    continue;
                }
                let stride = strides[k];
                out = out
                    .iter()
                    .flat_map(|&o| (0..d).map(move |i| o + i * stride))
                    .collect();
            }
            out
        };
        let kept_offsets = offsets(true);
        let traced_offsets = offsets(false);
        let n_keep = kept_layout.total_dimension();

        let mut out = CMatrix::zeros(n_keep, n_keep);
        for (a, &oa) in kept_offsets.iter().enumerate() {
            for (b, &ob) in kept_offsets.iter().enumerate() {
                out[(a, b)] = traced_offsets
                    .iter()
                    .map(|&t| self.matrix[(oa + t, ob + t)])
                    .sum();
            }
        }
        Self::new_unchecked(kept_layout, out)
    }

    /// Reorders the factors to `order` (a permutation of the layout labels).
    pub fn reorder(&self, order: &[&str]) -> Result<DensityState> {
        if order.len() != self.layout.subsystems().len() {
            return Err(Error::LayoutConflict(
                "reorder needs every label once".into(),
            ));
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|l| self.layout.position(l))
            .collect::<Result<_>>()?;
        let new_layout = SystemLayout::new(
            perm.iter()
                .map(|&p| self.layout.subsystems()[p].clone())
                .collect(),
        )?;
        let n = self.dimension();
        let map: Vec<usize> = (0..n)
            .map(|i| {
                let new_digits = new_layout.digits(i);
                let mut old = vec![0; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    old[p] = new_digits[k];
                }
                self.layout.index_of(&old)
            })
            .collect();
        let m = CMatrix::from_fn(n, n, |i, j| self.matrix[(map[i], map[j])]);
        Self::new_unchecked(new_layout, m)
    }

    /// Replaces the factors in `local`'s layout by `local`, discarding any
    /// correlations they had with the rest.
    pub fn replace_factors(&self, local: &DensityState) -> Result<DensityState> {
        let replaced: Vec<String> = local.layout.labels();
        let rest: Vec<&str> = self
            .layout
            .subsystems()
            .iter()
            .map(|s| s.label.as_str())
            .filter(|l| !replaced.iter().any(|r| r == l))
            .collect();
        let joined = if rest.is_empty() {
            local.clone()
        } else {
            self.partial_trace(&rest)?.tensor(local)?
        };
        let order: Vec<&str> = self
            .layout
            .subsystems()
            .iter()
            .map(|s| s.label.as_str())
            .collect();
        joined.reorder(&order)
    }

    pub fn apply_unitary(&self, u: &UnitaryOp) -> Result<DensityState> {
        if u.layout != self.layout {
            return Err(Error::LayoutConflict(
                "unitary and state layouts differ".into(),
            ));
        }
        Self::new_unchecked(
            self.layout.clone(),
            &u.matrix * &self.matrix * u.matrix.adjoint(),
        )
    }

    /// Conjugation by an arbitrary operator, no normalisation.
    pub fn conjugate_by(&self, op: &CMatrix) -> CMatrix {
        op * &self.matrix * op.adjoint()
    }

    pub fn trace_distance(&self, other: &DensityState) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::LayoutConflict(
                "trace distance needs equal layouts".into(),
            ));
        }
        let diff = &self.matrix - &other.matrix;
        let values = hermitian_eigenvalues(&diff)?;
        Ok(0.5 * values.iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Probability-weighted mixture of states on a common layout.
    pub fn mixture(parts: &[(f64, &DensityState)]) -> Result<DensityState> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidState("empty mixture".into()))?;
        let n = first.1.dimension();
        let mut m = CMatrix::zeros(n, n);
        for (p, s) in parts {
            if s.layout != first.1.layout {
                return Err(Error::LayoutConflict("mixture of different layouts".into()));
            }
            m += s.matrix() * C64::new(*p, 0.0);
        }
        Self::new_unchecked(first.1.layout.clone(), m)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|i| self.matrix[(i, i)].re)
            .collect()
    }
}

/// Unitary operator on a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOp {
    layout: SystemLayout,
    matrix: CMatrix,
}

impl UnitaryOp {
    pub fn new(layout: SystemLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dimension();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LayoutConflict(
                "unitary size does not match layout".into(),
            ));
        }
        let defect = max_abs(&(&matrix * matrix.adjoint() - CMatrix::identity(n, n)));
        if defect > TAU_UNITARY {
            return Err(Error::NotUnitary(defect));
        }
        Ok(UnitaryOp { layout, matrix })
    }

    pub fn identity(layout: SystemLayout) -> Self {
        let n = layout.total_dimension();
        UnitaryOp {
            layout,
            matrix: CMatrix::identity(n, n),
        }
    }

    /// Local unitary `op` on factor `label`.
    pub fn local(layout: &SystemLayout, label: &str, op: &CMatrix) -> Result<Self> {
        let m = embed(layout, label, op)?;
        Self::new(layout.clone(), m)
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn then(&self, next: &UnitaryOp) -> Result<UnitaryOp> {
        if self.layout != next.layout {
            return Err(Error::LayoutConflict(
                "composing unitaries on different layouts".into(),
            ));
        }
        Ok(UnitaryOp {
            layout: self.layout.clone(),
            matrix: &next.matrix * &self.matrix,
        })
    }
}

/// Projective measurement on one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveMeasurement {
    target: String,
    projectors: Vec<(String, CMatrix)>,
}

impl ProjectiveMeasurement {
    pub fn new(target: &str, projectors: Vec<(String, CMatrix)>) -> Result<Self> {
        let dim = projectors
            .first()
            .map(|p| p.1.nrows())
            .ok_or_else(|| Error::InvalidMeasurement("no projectors".into()))?;
        let mut sum = CMatrix::zeros(dim, dim);
        for (i, (label, p)) in projectors.iter().enumerate() {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(Error::InvalidMeasurement(format!(
                    "projector `{label}` has wrong size"
                )));
            }
            if max_abs(&(p - p.adjoint())) > TAU_HERM {
                return Err(Error::InvalidMeasurement(format!(
                    "projector `{label}` is not Hermitian"
                )));
            }
            if max_abs(&(p * p - p)) > TAU_EIG {
                return Err(Error::InvalidMeasurement(format!(
                    "projector `{label}` is not idempotent"
                )));
            }
            for (other_label, q) in &projectors[..i] {
                if max_abs(&(p * q)) > TAU_EIG {
                    return Err(Error::InvalidMeasurement(format!(
                        "projectors `{other_label}` and `{label}` overlap"
                    )));
                }
            }
            sum += p;
        }
        if max_abs(&(sum - CMatrix::identity(dim, dim))) > TAU_EIG {
            return Err(Error::InvalidMeasurement(
                "projectors do not sum to identity".into(),
            ));
        }
        Ok(ProjectiveMeasurement {
            target: target.to_string(),
            projectors,
        })
    }

    /// Rank-one projectors onto the pointer basis of `label`.
    pub fn pointer(layout: &SystemLayout, label: &str) -> Result<Self> {
        let spec = layout.get(label)?;
        let d = spec.dimension();
        let projectors = spec
            .pointer_basis
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut p = CMatrix::zeros(d, d);
                p[(i, i)] = C64::new(1.0, 0.0);
                (name.clone(), p)
            })
            .collect();
        Self::new(label, projectors)
    }

    /// Rank-one projectors onto the columns of `basis`.
    pub fn in_basis(label: &str, names: &[&str], basis: &CMatrix) -> Result<Self> {
        if names.len() != basis.ncols() {
            return Err(Error::InvalidMeasurement(
                "one name per basis vector".into(),
            ));
        }
        let projectors = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let v = basis.column(i);
                (n.to_string(), v * v.adjoint())
            })
            .collect();
        Self::new(label, projectors)
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn projectors(&self) -> &[(String, CMatrix)] {
        &self.projectors
    }
}

/// Common single-qubit matrices.
pub mod gates {
    use super::{CMatrix, C64};

    pub fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    pub fn hadamard() -> CMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)])
    }

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
    }

    /// Real rotation with `ry(theta)|0> = cos(theta/2)|0> + sin(theta/2)|1>`.
    pub fn ry(theta: f64) -> CMatrix {
        let (s, co) = (theta / 2.0).sin_cos();
        CMatrix::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)])
    }

    /// Permutation matrix exchanging basis states `a` and `b`.
    pub fn transposition(dim: usize, a: usize, b: usize) -> CMatrix {
        let mut m = CMatrix::identity(dim, dim);
        if a != b {
            m[(a, a)] = c(0.0);
            m[(b, b)] = c(0.0);
            m[(a, b)] = c(1.0);
            m[(b, a)] = c(1.0);
        }
        m
    }

    /// Projector onto basis state `i`.
    pub fn ket_bra(dim: usize, i: usize) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        m[(i, i)] = c(1.0);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::gates::*;
    use super::*;

    fn qubit(label: &str) -> SystemLayout {
        SystemLayout::new(vec![
            SubsystemSpec::new(label, Role::Spin, &["+z", "-z"]).unwrap()
        ])
        .unwrap()
    }

    fn pos(label: &str) -> SystemLayout {
        SystemLayout::new(vec![
            SubsystemSpec::new(label, Role::Position, &["L", "R"]).unwrap()
        ])
        .unwrap()
    }

    #[test]
    fn subsystem_invariants() {
        assert!(SubsystemSpec::new("a", Role::Spin, &["x"]).is_err());
        assert!(SubsystemSpec::new("a", Role::Ancilla, &["x"]).is_ok());
        assert!(SubsystemSpec::new("a", Role::Spin, &["x", "x"]).is_err());
        let a = SubsystemSpec::new("a", Role::Spin, &["0", "1"]).unwrap();
        assert!(matches!(
            SystemLayout::new(vec![a.clone(), a]),
            Err(Error::LayoutConflict(_))
        ));
    }

    #[test]
    fn tensor_of_pure_qubits() {
        let a = DensityState::basis_state(qubit("a"), &[0]).unwrap();
        let b = DensityState::basis_state(qubit("b"), &[0]).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.layout().total_dimension(), 4);
        assert_eq!(ab.diagonal(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(a.tensor(&a), Err(Error::LayoutConflict(_))));
    }

    #[test]
    fn tensor_mixed_spin_with_left() {
        let spin = DensityState::maximally_mixed(qubit("spin")).unwrap();
        let left = DensityState::basis_state(pos("pos"), &[0]).unwrap();
        let s = spin.tensor(&left).unwrap();
        assert_eq!(s.diagonal(), vec![0.5, 0.0, 0.5, 0.0]);
        assert_eq!(s.layout().basis_name(2), "-z,L");
    }

    #[test]
    fn partial_trace_recovers_factor_and_rejects_unknown() {
        let spin =
            DensityState::pure(qubit("spin"), &CVector::from_vec(vec![c(0.6), c(0.8)])).unwrap();
        let left = DensityState::maximally_mixed(pos("pos")).unwrap();
        let joint = spin.tensor(&left).unwrap();
        let back = joint.partial_trace(&["spin"]).unwrap();
        assert!(max_abs(&(back.matrix() - spin.matrix())) < TAU_EIG);
        let back = joint.partial_trace(&["pos"]).unwrap();
        assert!(max_abs(&(back.matrix() - left.matrix())) < TAU_EIG);
        assert!(matches!(
            joint.partial_trace(&["nope"]),
            Err(Error::UnknownSubsystem(_))
        ));
        assert!(joint.partial_trace(&[]).is_err());
    }

    #[test]
    fn unitary_checks() {
        let l = qubit("s");
        assert!(UnitaryOp::new(l.clone(), hadamard()).is_ok());
        assert!(matches!(
            UnitaryOp::new(l.clone(), hadamard() * c(2.0)),
            Err(Error::NotUnitary(_))
        ));
        let mixed = DensityState::maximally_mixed(l.clone()).unwrap();
        let h = UnitaryOp::new(l.clone(), hadamard()).unwrap();
        let out = mixed.apply_unitary(&h).unwrap();
        assert!(max_abs(&(out.matrix() - mixed.matrix())) < TAU_EIG);
        let id = UnitaryOp::identity(l.clone());
        assert_eq!(mixed.apply_unitary(&id).unwrap(), mixed);
        let other = UnitaryOp::identity(pos("p"));
        assert!(matches!(
            mixed.apply_unitary(&other),
            Err(Error::LayoutConflict(_))
        ));
    }

    #[test]
    fn rotation_maps_plus_branch_to_zero_state() {
        // |0> = w1|+> + w2|->; ry(theta) sends |+> to |0>.
        let (w1, w2) = (0.8_f64, 0.6_f64);
        let theta = 2.0 * w2.atan2(w1);
        let l = qubit("s");
        let plus = DensityState::basis_state(l.clone(), &[0]).unwrap();
        let u = UnitaryOp::new(l.clone(), ry(theta)).unwrap();
        let out = plus.apply_unitary(&u).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.64), c(0.48), c(0.48), c(0.36)]);
        assert!(max_abs(&(out.matrix() - expected)) < TAU_EIG);
    }

    #[test]
    fn validation_reports() {
        let l = qubit("s");
        assert!(
            DensityState::basis_state(l.clone(), &[0])
                .unwrap()
                .validate()
                .passed
        );
        let short = DensityState::new_unchecked(
            l.clone(),
            CMatrix::from_row_slice(2, 2, &[c(0.9), c(0.0), c(0.0), c(0.0)]),
        )
        .unwrap();
        let r = short.validate();
        assert!(!r.passed);
        assert!((r.trace_defect - 0.1).abs() < 1e-12);
        let coh = DensityState::new_unchecked(
            l,
            CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.5), c(0.5), c(0.0)]),
        )
        .unwrap();
        let r = coh.validate();
        assert!(!r.passed);
        assert!((r.min_eigenvalue + 0.5).abs() < 1e-12);
        assert!((r.trace_defect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_examples() {
        let l = qubit("s");
        let up = DensityState::basis_state(l.clone(), &[0]).unwrap();
        let down = DensityState::basis_state(l.clone(), &[1]).unwrap();
        let mixed = DensityState::maximally_mixed(l).unwrap();
        assert!(up.trace_distance(&up).unwrap().abs() < 1e-12);
        assert!((up.trace_distance(&down).unwrap() - 1.0).abs() < 1e-12);
        assert!((up.trace_distance(&mixed).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let l = qubit("s");
        assert_eq!(
            DensityState::basis_state(l.clone(), &[1])
                .unwrap()
                .spectrum()
                .unwrap()[0],
            1.0
        );
        let m = DensityState::maximally_mixed(l.clone())
            .unwrap()
            .spectrum()
            .unwrap();
        assert!((m[0] - 0.5).abs() < 1e-12 && (m[1] - 0.5).abs() < 1e-12);
        let biased = DensityState::new(
            l.clone(),
            CMatrix::from_row_slice(2, 2, &[c(0.75), c(0.0), c(0.0), c(0.25)]),
        )
        .unwrap();
        let h = UnitaryOp::new(l, hadamard()).unwrap();
        let spec = biased.apply_unitary(&h).unwrap().spectrum().unwrap();
        assert!((spec[0] - 0.75).abs() < TAU_EIG && (spec[1] - 0.25).abs() < TAU_EIG);
    }

    #[test]
    fn reorder_and_replace() {
        let a = DensityState::basis_state(qubit("a"), &[1]).unwrap();
        let b = DensityState::basis_state(pos("b"), &[0]).unwrap();
        let ab = a.tensor(&b).unwrap();
        let ba = ab.reorder(&["b", "a"]).unwrap();
        assert_eq!(ba, b.tensor(&a).unwrap());
        let fresh = DensityState::basis_state(qubit("a"), &[0]).unwrap();
        let replaced = ab.replace_factors(&fresh).unwrap();
        assert_eq!(replaced, fresh.tensor(&b).unwrap());
    }
}
