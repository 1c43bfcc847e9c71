//! Measurements, apparatus coupling, the membrane separation and the
//! unitary-reset feasibility test.

use serde::Serialize;

use crate::entropy::pointer_distribution;
use crate::error::{Error, Result};
use crate::qcore::{
    embed, gates, max_abs, CMatrix, CVector, DensityState, ProjectiveMeasurement, SystemLayout,
    UnitaryOp, C64, TAU_EIG, TAU_TRACE,
};

/// Minimum pointer mass on the ready state for an apparatus to count as ready.
pub const READY_TOLERANCE: f64 = 1e-8;

/// One alternative of a selective measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub label: String,
    pub probability: f64,
    pub post_state: DensityState,
}

fn full_projectors(
    rho: &DensityState,
    m: &ProjectiveMeasurement,
) -> Result<Vec<(String, CMatrix)>> {
    let layout = rho.layout();
    let dim = layout.get(m.target())?.dimension();
    m.projectors()
        .iter()
        .map(|(label, p)| {
            if p.nrows() != dim {
                return Err(Error::InvalidMeasurement(format!(
                    "projector `{label}` does not act on `{}`",
                    m.target()
                )));
            }
            Ok((label.clone(), embed(layout, m.target(), p)?))
        })
        .collect()
}

/// `rho -> sum_i P_i rho P_i`.
pub fn nonselective_measure(rho: &DensityState, m: &ProjectiveMeasurement) -> Result<DensityState> {
    let n = rho.dimension();
    let mut out = CMatrix::zeros(n, n);
    for (_, p) in full_projectors(rho, m)? {
        out += rho.conjugate_by(&p);
    }
    DensityState::new_unchecked(rho.layout().clone(), out)
}

/// Lüders conditioning on every outcome with non-negligible probability.
pub fn selective_measure(rho: &DensityState, m: &ProjectiveMeasurement) -> Result<Vec<Outcome>> {
    let mut outcomes = Vec::new();
    for (label, p) in full_projectors(rho, m)? {
        let unnormalised = rho.conjugate_by(&p);
        let probability = unnormalised.trace().re;
        if probability < TAU_TRACE {
            continue;
        }
        let post = DensityState::new_unchecked(
            rho.layout().clone(),
            unnormalised / C64::new(probability, 0.0),
        )?;
        outcomes.push(Outcome {
            label,
            probability,
            post_state: post,
        });
    }
    let total: f64 = outcomes.iter().map(|o| o.probability).sum();
    for o in &mut outcomes {
        o.probability /= total;
    }
    Ok(outcomes)
}

/// Pointer index of the record written for source pointer state `source_index`.
///
/// Index 0 of the apparatus is its ready state. An apparatus with one more
/// state than the source writes record `i` to index `i + 1`; an apparatus of
/// the same dimension reuses index `i`, so its ready state doubles as the
/// record of source state 0.
pub fn record_index(source_dim: usize, apparatus_dim: usize, source_index: usize) -> Result<usize> {
    if apparatus_dim > source_dim {
        Ok(source_index + 1)
    } else if apparatus_dim == source_dim {
        Ok(source_index)
    } else {
        Err(Error::LayoutConflict(format!(
            "apparatus of dimension {apparatus_dim} cannot record a source of dimension {source_dim}"
        )))
    }
}

/// Controlled permutation `|s_i>|ready> -> |s_i>|r_i>`; it is its own inverse.
pub fn coupling_unitary(layout: &SystemLayout, source: &str, apparatus: &str) -> Result<UnitaryOp> {
    if source == apparatus {
        return Err(Error::LayoutConflict(
            "source and apparatus must differ".into(),
        ));
    }
    let ds = layout.get(source)?.dimension();
    let da = layout.get(apparatus)?.dimension();
    let n = layout.total_dimension();
    let mut u = CMatrix::zeros(n, n);
    for i in 0..ds {
        let swap = gates::transposition(da, 0, record_index(ds, da, i)?);
        let term =
            embed(layout, source, &gates::ket_bra(ds, i))? * embed(layout, apparatus, &swap)?;
        u += term;
    }
    UnitaryOp::new(layout.clone(), u)
}

pub fn apparatus_ready(rho: &DensityState, apparatus: &str) -> Result<bool> {
    let q = pointer_distribution(rho, &[apparatus])?;
    Ok(q.probabilities()[0] >= 1.0 - READY_TOLERANCE)
}

/// Premeasurement of `source` by `apparatus` (which must be ready).
pub fn couple_apparatus(rho: &DensityState, source: &str, apparatus: &str) -> Result<DensityState> {
    if !apparatus_ready(rho, apparatus)? {
        return Err(Error::ApparatusNotReady(apparatus.to_string()));
    }
    rho.apply_unitary(&coupling_unitary(rho.layout(), source, apparatus)?)
}

/// Membrane separation: identity on the first spin state, `L <-> R` on the second.
pub fn separation_unitary(layout: &SystemLayout, spin: &str, position: &str) -> Result<UnitaryOp> {
    let ds = layout.get(spin)?.dimension();
    let dp = layout.get(position)?.dimension();
    if ds != 2 || dp != 2 || spin == position {
        return Err(Error::LayoutConflict(
            "separation needs two distinct two-dimensional factors".into(),
        ));
    }
    let up = embed(layout, spin, &gates::ket_bra(2, 0))?;
    let down =
        embed(layout, spin, &gates::ket_bra(2, 1))? * embed(layout, position, &gates::pauli_x())?;
    UnitaryOp::new(layout.clone(), up + down)
}

/// Pure source and target families; a unitary `U` with `U s_i = t_i` for all
/// `i` exists iff the two Gram matrices coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetProblem {
    sources: Vec<CVector>,
    targets: Vec<CVector>,
}

impl ResetProblem {
    pub fn new(sources: Vec<CVector>, targets: Vec<CVector>) -> Result<Self> {
        if sources.len() != targets.len() || sources.is_empty() {
            return Err(Error::Validation(
                "reset needs equally many sources and targets".into(),
            ));
        }
        let dim = sources[0].len();
        if sources.iter().chain(&targets).any(|v| v.len() != dim) {
            return Err(Error::LayoutConflict(
                "reset states live on different spaces".into(),
            ));
        }
        let normalise = |v: &CVector| v / C64::new(v.norm(), 0.0);
        Ok(ResetProblem {
            sources: sources.iter().map(normalise).collect(),
            targets: targets.iter().map(normalise).collect(),
        })
    }

    pub fn sources(&self) -> &[CVector] {
        &self.sources
    }

    pub fn targets(&self) -> &[CVector] {
        &self.targets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResetVerdict {
    pub feasible: bool,
    /// Largest entry-wise Gram difference.
    pub max_gram_discrepancy: f64,
}

pub fn gram(vectors: &[CVector]) -> CMatrix {
    let n = vectors.len();
    CMatrix::from_fn(n, n, |i, j| vectors[i].dotc(&vectors[j]))
}

pub fn unitary_reset_feasible(p: &ResetProblem) -> ResetVerdict {
    let d = max_abs(&(gram(&p.sources) - gram(&p.targets)));
    ResetVerdict {
        feasible: d <= TAU_EIG,
        max_gram_discrepancy: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::von_neumann_entropy;
    use crate::qcore::{gates::c, Role, SubsystemSpec};
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

    fn hs_layout() -> SystemLayout {
        SystemLayout::new(vec![
            SubsystemSpec::new("spin", Role::Spin, &["+z", "-z"]).unwrap(),
            SubsystemSpec::new("pos", Role::Position, &["L", "R"]).unwrap(),
            SubsystemSpec::new("M", Role::Apparatus, &["ready", "+", "-"]).unwrap(),
        ])
        .unwrap()
    }

    fn ket(layout: &SystemLayout, terms: &[(f64, &[usize])]) -> CVector {
        let mut v = CVector::zeros(layout.total_dimension());
        for (a, d) in terms {
            v[layout.index_of(d)] += c(*a);
        }
        v
    }

    fn split_spin(layout: &SystemLayout) -> DensityState {
        let s = FRAC_1_SQRT_2;
        DensityState::pure(
            layout.clone(),
            &ket(layout, &[(s, &[0, 0, 0]), (s, &[1, 0, 0])]),
        )
        .unwrap()
    }

    fn close(a: &DensityState, b: &DensityState) -> bool {
        max_abs(&(a.matrix() - b.matrix())) < TAU_EIG
    }

    #[test]
    fn z_measurement_of_plus_x() {
        let l = SystemLayout::new(vec![
            SubsystemSpec::new("spin", Role::Spin, &["+z", "-z"]).unwrap()
        ])
        .unwrap();
        let plus_x =
            DensityState::pure(l.clone(), &CVector::from_vec(vec![c(1.0), c(1.0)])).unwrap();
        let z = ProjectiveMeasurement::pointer(&l, "spin").unwrap();
        let out = nonselective_measure(&plus_x, &z).unwrap();
        assert!(close(
            &out,
            &DensityState::maximally_mixed(l.clone()).unwrap()
        ));
        assert!(von_neumann_entropy(&plus_x).unwrap().abs() < TAU_EIG);
        assert!((von_neumann_entropy(&out).unwrap() - LN_2).abs() < TAU_EIG);
        let up = DensityState::basis_state(l, &[0]).unwrap();
        assert!(close(&nonselective_measure(&up, &z).unwrap(), &up));
    }

    #[test]
    fn measurement_without_apparatus_leaves_product_mixture() {
        let l = hs_layout();
        let z = ProjectiveMeasurement::pointer(&l, "spin").unwrap();
        let out = nonselective_measure(&split_spin(&l), &z).unwrap();
        let mut expected = CMatrix::zeros(12, 12);
        expected[(l.index_of(&[0, 0, 0]), l.index_of(&[0, 0, 0]))] = c(0.5);
        expected[(l.index_of(&[1, 0, 0]), l.index_of(&[1, 0, 0]))] = c(0.5);
        assert!(max_abs(&(out.matrix() - expected)) < TAU_EIG);
    }

    #[test]
    fn selective_outcomes() {
        let l = SystemLayout::new(vec![
            SubsystemSpec::new("spin", Role::Spin, &["+z", "-z"]).unwrap()
        ])
        .unwrap();
        let z = ProjectiveMeasurement::pointer(&l, "spin").unwrap();
        let mixed = DensityState::maximally_mixed(l.clone()).unwrap();
        let outs = selective_measure(&mixed, &z).unwrap();
        assert_eq!(outs.len(), 2);
        for o in &outs {
            assert!((o.probability - 0.5).abs() < 1e-15);
            assert!(von_neumann_entropy(&o.post_state).unwrap().abs() < TAU_EIG);
        }
        let up = DensityState::basis_state(l, &[0]).unwrap();
        let outs = selective_measure(&up, &z).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].label, "+z");
        assert_eq!(outs[0].probability, 1.0);
    }

    #[test]
    fn coupling_then_separation_correlates_records() {
        let l = hs_layout();
        let coupled = couple_apparatus(&split_spin(&l), "spin", "M").unwrap();
        let s = FRAC_1_SQRT_2;
        let coupled_expected =
            DensityState::pure(l.clone(), &ket(&l, &[(s, &[0, 0, 1]), (s, &[1, 0, 2])])).unwrap();
        assert!(close(&coupled, &coupled_expected));
        let sep = separation_unitary(&l, "spin", "pos").unwrap();
        let separated =
            DensityState::pure(l.clone(), &ket(&l, &[(s, &[0, 0, 1]), (s, &[1, 1, 2])])).unwrap();
        assert!(close(&coupled.apply_unitary(&sep).unwrap(), &separated));
        let reduced = separated.partial_trace(&["spin", "pos"]).unwrap();
        for (got, want) in reduced.diagonal().iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((got - want).abs() < TAU_EIG);
        }
        assert!(reduced.matrix()[(0, 3)].norm() < TAU_EIG);
        assert!(matches!(
            couple_apparatus(&separated, "spin", "M"),
            Err(Error::ApparatusNotReady(_))
        ));
    }

    #[test]
    fn coupling_definite_source_is_product() {
        let l = hs_layout();
        let up = DensityState::basis_state(l.clone(), &[0, 0, 0]).unwrap();
        let out = couple_apparatus(&up, "spin", "M").unwrap();
        assert!(close(
            &out,
            &DensityState::basis_state(l, &[0, 0, 1]).unwrap()
        ));
    }

    #[test]
    fn separation_action_on_basis() {
        let l = hs_layout();
        let sep = separation_unitary(&l, "spin", "pos").unwrap();
        let a = DensityState::basis_state(l.clone(), &[0, 0, 0]).unwrap();
        assert!(close(&a.apply_unitary(&sep).unwrap(), &a));
        let b = DensityState::basis_state(l.clone(), &[1, 0, 0]).unwrap();
        let b_sep = DensityState::basis_state(l.clone(), &[1, 1, 0]).unwrap();
        assert!(close(&b.apply_unitary(&sep).unwrap(), &b_sep));
        assert!(matches!(
            separation_unitary(&l, "spin", "M"),
            Err(Error::LayoutConflict(_))
        ));
    }

    #[test]
    fn reset_feasibility_examples() {
        let e = |v: &[f64]| CVector::from_vec(v.iter().map(|x| c(*x)).collect());
        let s = FRAC_1_SQRT_2;
        // {|+>, |->} -> |ready> on a three-state memory
        let p = ResetProblem::new(
            vec![e(&[0.0, 1.0, 0.0]), e(&[0.0, 0.0, 1.0])],
            vec![e(&[1.0, 0.0, 0.0]), e(&[1.0, 0.0, 0.0])],
        )
        .unwrap();
        let v = unitary_reset_feasible(&p);
        assert!(!v.feasible);
        assert!((v.max_gram_discrepancy - 1.0).abs() < 1e-15);
        let p = ResetProblem::new(vec![e(&[1.0, 0.0])], vec![e(&[0.0, 1.0])]).unwrap();
        assert!(unitary_reset_feasible(&p).feasible);
        let p = ResetProblem::new(
            vec![e(&[1.0, 0.0]), e(&[0.0, 1.0])],
            vec![e(&[s, s]), e(&[s, -s])],
        )
        .unwrap();
        assert!(unitary_reset_feasible(&p).feasible);
        assert!(ResetProblem::new(vec![e(&[1.0])], vec![]).is_err());
    }

    #[test]
    fn malformed_measurement_rejected() {
        let half = CMatrix::identity(2, 2) * c(0.5);
        assert!(matches!(
            ProjectiveMeasurement::new("spin", vec![("a".into(), half)]),
            Err(Error::InvalidMeasurement(_))
        ));
    }
}
