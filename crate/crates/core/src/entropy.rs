//! Entropy measures over density states and pointer-basis distributions.
//!
//! Everything is in natural-log units (k_B = 1); callers rescale by a run's
//! Boltzmann constant where needed.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcore::{DensityState, TAU_EIG, TAU_PSD, TAU_TRACE};

fn xlnx_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    -values
        .into_iter()
        .filter(|w| *w > 0.0)
        .map(|w| w * w.ln())
        .sum::<f64>()
}

/// `-Tr rho ln rho` over the clamped spectrum.
pub fn von_neumann_entropy(rho: &DensityState) -> Result<f64> {
    let report = rho.validate();
    if !report.passed {
        return Err(Error::InvalidState(format!(
            "hermiticity defect {:.3e}, min eigenvalue {:.3e}, trace defect {:.3e}",
            report.hermiticity_defect, report.min_eigenvalue, report.trace_defect
        )));
    }
    Ok(xlnx_sum(rho.spectrum()?).max(0.0))
}

/// Joint pointer-basis probabilities over an ordered list of axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointerDistribution {
    axes: Vec<String>,
    shape: Vec<usize>,
    probabilities: Vec<f64>,
}

impl PointerDistribution {
    pub fn new(axes: Vec<String>, shape: Vec<usize>, probabilities: Vec<f64>) -> Result<Self> {
        if axes.len() != shape.len() {
            return Err(Error::InvalidDistribution("one extent per axis".into()));
        }
        if shape.iter().product::<usize>() != probabilities.len() {
            return Err(Error::InvalidDistribution(
                "table size does not match shape".into(),
            ));
        }
        if let Some(p) = probabilities
            .iter()
            .find(|p| **p < -TAU_PSD || !p.is_finite())
        {
            return Err(Error::InvalidDistribution(format!("entry {p} is negative")));
        }
        let probabilities: Vec<f64> = probabilities
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect();
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > TAU_TRACE.max(1e-9) {
            return Err(Error::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(PointerDistribution {
            axes,
            shape,
            probabilities,
        })
    }

    /// Single-axis distribution.
    pub fn from_probabilities(axis: &str, probabilities: Vec<f64>) -> Result<Self> {
        let n = probabilities.len();
        Self::new(vec![axis.to_string()], vec![n], probabilities)
    }

    pub fn axes(&self) -> &[String] {
        &self.axes
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for k in (0..self.shape.len()).rev() {
            out[k] = index % self.shape[k];
            index /= self.shape[k];
        }
        out
    }

    fn axis_positions(&self, axes: &[&str]) -> Result<Vec<usize>> {
        axes.iter()
            .map(|a| {
                self.axes
                    .iter()
                    .position(|x| x == a)
                    .ok_or_else(|| Error::UnknownSubsystem(a.to_string()))
            })
            .collect()
    }

    /// Marginal over `axes`, in the given order.
    pub fn marginal(&self, axes: &[&str]) -> Result<PointerDistribution> {
        let pos = self.axis_positions(axes)?;
        let shape: Vec<usize> = pos.iter().map(|&p| self.shape[p]).collect();
        let mut table = vec![0.0; shape.iter().product()];
        for (i, p) in self.probabilities.iter().enumerate() {
            let d = self.digits(i);
            let idx = pos
                .iter()
                .zip(&shape)
                .fold(0, |acc, (&k, n)| acc * n + d[k]);
            table[idx] += p;
        }
        Self::new(axes.iter().map(|s| s.to_string()).collect(), shape, table)
    }

    /// Probability of one cell, addressed by per-axis indices.
    pub fn get(&self, digits: &[usize]) -> f64 {
        let idx = digits
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (d, n)| acc * n + d);
        self.probabilities[idx]
    }
}

pub fn shannon_entropy(p: &PointerDistribution) -> f64 {
    xlnx_sum(p.probabilities.iter().copied())
}

/// Diagonal of the reduced state on `axes`, in the requested axis order.
pub fn pointer_distribution(rho: &DensityState, axes: &[&str]) -> Result<PointerDistribution> {
    let layout = rho.layout();
    let pos: Vec<usize> = axes
        .iter()
        .map(|a| layout.position(a))
        .collect::<Result<_>>()?;
    let dims = layout.dims();
    let shape: Vec<usize> = pos.iter().map(|&p| dims[p]).collect();
    let mut table = vec![0.0; shape.iter().product()];
    for (i, w) in rho.diagonal().into_iter().enumerate() {
        let d = layout.digits(i);
        let idx = pos
            .iter()
            .zip(&shape)
            .fold(0, |acc, (&k, n)| acc * n + d[k]);
        table[idx] += w;
    }
    PointerDistribution::new(axes.iter().map(|s| s.to_string()).collect(), shape, table)
}

fn check_disjoint(s: &[&str], m: &[&str]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::LayoutConflict("empty system label set".into()));
    }
    if let Some(x) = s.iter().find(|x| m.contains(x)) {
        return Err(Error::LayoutConflict(format!(
            "`{x}` is on both sides of the split"
        )));
    }
    Ok(())
}

fn union<'a>(s: &[&'a str], m: &[&'a str]) -> Vec<&'a str> {
    s.iter().chain(m.iter()).copied().collect()
}

/// `S(rho_SM) - S(rho_M)`; may be negative on entangled inputs.
pub fn quantum_conditional_entropy(
    rho: &DensityState,
    s_labels: &[&str],
    m_labels: &[&str],
) -> Result<f64> {
    check_disjoint(s_labels, m_labels)?;
    let joint = von_neumann_entropy(&rho.partial_trace(&union(s_labels, m_labels))?)?;
    let m = if m_labels.is_empty() {
        0.0
    } else {
        von_neumann_entropy(&rho.partial_trace(m_labels)?)?
    };
    Ok(joint - m)
}

/// `-sum p(s,m) ln p(s|m)`; slices with `p(m) = 0` contribute nothing.
pub fn classical_conditional_entropy(
    joint: &PointerDistribution,
    s_axes: &[&str],
    m_axes: &[&str],
) -> Result<f64> {
    check_disjoint(s_axes, m_axes)?;
    let all = union(s_axes, m_axes);
    if all.len() != joint.axes.len() || joint.axis_positions(&all).is_err() {
        return Err(Error::InvalidDistribution(
            "system and apparatus axes must partition the joint axes".into(),
        ));
    }
    let sm = joint.marginal(&all)?;
    if m_axes.is_empty() {
        return Ok(shannon_entropy(&sm));
    }
    let m = joint.marginal(m_axes)?;
    let s_size: usize = sm.shape[..s_axes.len()].iter().product();
    let m_size = m.probabilities.len();
    let mut h = 0.0;
    for si in 0..s_size {
        for mi in 0..m_size {
            let p_sm = sm.probabilities[si * m_size + mi];
            let p_m = m.probabilities[mi];
            if p_sm > 0.0 && p_m > 0.0 {
                h -= p_sm * (p_sm / p_m).ln();
            }
        }
    }
    Ok(h.max(0.0))
}

/// Entropy bookkeeping for a system/apparatus split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySnapshot {
    pub joint: f64,
    /// Single-factor entropies for every label on either side.
    pub marginals: BTreeMap<String, f64>,
    pub system: f64,
    pub apparatus: f64,
    pub conditional_s_given_m: f64,
    pub conditional_m_given_s: f64,
    pub mutual_information: f64,
}

pub fn snapshot(
    rho: &DensityState,
    s_labels: &[&str],
    m_labels: &[&str],
) -> Result<EntropySnapshot> {
    check_disjoint(s_labels, m_labels)?;
    let entropy_of = |labels: &[&str]| -> Result<f64> {
        if labels.is_empty() {
            Ok(0.0)
        } else {
            von_neumann_entropy(&rho.partial_trace(labels)?)
        }
    };
    let joint = entropy_of(&union(s_labels, m_labels))?;
    let system = entropy_of(s_labels)?;
    let apparatus = entropy_of(m_labels)?;
    let mut marginals = BTreeMap::new();
    for l in s_labels.iter().chain(m_labels) {
        marginals.insert(l.to_string(), entropy_of(&[l])?);
    }
    Ok(EntropySnapshot {
        joint,
        marginals,
        system,
        apparatus,
        conditional_s_given_m: joint - apparatus,
        conditional_m_given_s: joint - system,
        mutual_information: system + apparatus - joint,
    })
}

/// True when every entry of `p` equals the product of its two marginals.
pub fn factorizes(joint: &PointerDistribution, s_axes: &[&str], m_axes: &[&str]) -> Result<bool> {
    let s = joint.marginal(s_axes)?;
    let m = joint.marginal(m_axes)?;
    let sm = joint.marginal(&union(s_axes, m_axes))?;
    let ms = m.probabilities.len();
    Ok(sm
        .probabilities
        .iter()
        .enumerate()
        .all(|(i, p)| (p - s.probabilities[i / ms] * m.probabilities[i % ms]).abs() <= TAU_EIG))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{gates::c, CMatrix, CVector, Role, SubsystemSpec, SystemLayout};
    use std::f64::consts::LN_2;

    fn layout(specs: &[(&str, Role, &[&str])]) -> SystemLayout {
        SystemLayout::new(
            specs
                .iter()
                .map(|(l, r, b)| SubsystemSpec::new(l, *r, b).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn spin() -> SystemLayout {
        layout(&[("spin", Role::Spin, &["+z", "-z"])])
    }

    #[test]
    fn von_neumann_examples() {
        let pure = DensityState::pure(spin(), &CVector::from_vec(vec![c(0.6), c(0.8)])).unwrap();
        assert!(von_neumann_entropy(&pure).unwrap().abs() < TAU_EIG);
        let mixed = DensityState::maximally_mixed(spin()).unwrap();
        assert!((von_neumann_entropy(&mixed).unwrap() - LN_2).abs() < 1e-12);
        let biased = DensityState::new(
            spin(),
            CMatrix::from_row_slice(2, 2, &[c(0.75), c(0.0), c(0.0), c(0.25)]),
        )
        .unwrap();
        // mpmath, 30 digits
        assert!((von_neumann_entropy(&biased).unwrap() - 0.562335144618808).abs() < 1e-12);
        let bad = DensityState::new_unchecked(spin(), CMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            von_neumann_entropy(&bad),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn shannon_examples() {
        let h = |v: Vec<f64>| {
            shannon_entropy(&PointerDistribution::from_probabilities("x", v).unwrap())
        };
        assert_eq!(h(vec![1.0, 0.0]), 0.0);
        assert!((h(vec![0.5, 0.5]) - LN_2).abs() < 1e-15);
        assert!((h(vec![0.64, 0.36]) - 0.653418194793702).abs() < 1e-12);
        assert!(matches!(
            PointerDistribution::from_probabilities("x", vec![0.5, 0.4]),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn pointer_distribution_reads_diagonal() {
        let l = layout(&[
            ("pos", Role::Position, &["L", "R"]),
            ("M", Role::Apparatus, &["L_m", "R_m"]),
        ]);
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = c(0.5);
        m[(3, 3)] = c(0.5);
        let rho = DensityState::new(l.clone(), m).unwrap();
        let p = pointer_distribution(&rho, &["pos", "M"]).unwrap();
        assert_eq!(p.probabilities(), &[0.5, 0.0, 0.0, 0.5]);
        let rev = pointer_distribution(&rho, &["M"]).unwrap();
        assert_eq!(rev.probabilities(), &[0.5, 0.5]);
        let uniform = DensityState::maximally_mixed(l).unwrap();
        assert!(pointer_distribution(&uniform, &["pos", "M"])
            .unwrap()
            .probabilities()
            .iter()
            .all(|p| (p - 0.25).abs() < 1e-15));
        assert!(matches!(
            pointer_distribution(&rho, &["Q"]),
            Err(Error::UnknownSubsystem(_))
        ));
    }

    #[test]
    fn classical_conditional_examples() {
        let axes = vec!["s".to_string(), "m".to_string()];
        let corr =
            PointerDistribution::new(axes.clone(), vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(
            classical_conditional_entropy(&corr, &["s"], &["m"])
                .unwrap()
                .abs()
                < 1e-15
        );
        let unc = PointerDistribution::new(axes.clone(), vec![2, 2], vec![0.25; 4]).unwrap();
        assert!(
            (classical_conditional_entropy(&unc, &["s"], &["m"]).unwrap() - LN_2).abs() < 1e-15
        );
        // (L,L_m)=0.4, (R,L_m)=0.1, (R,R_m)=0.5; mpmath oracle
        let skew = PointerDistribution::new(axes, vec![2, 2], vec![0.4, 0.0, 0.1, 0.5]).unwrap();
        let h = classical_conditional_entropy(&skew, &["s"], &["m"]).unwrap();
        assert!((h - 0.250201211769094).abs() < 1e-12);
        assert!(classical_conditional_entropy(&skew, &["s"], &["s"]).is_err());
    }

    #[test]
    fn quantum_conditional_examples() {
        let l = layout(&[
            ("spin", Role::Spin, &["+z", "-z"]),
            ("M", Role::Apparatus, &["ready", "+", "-"]),
        ]);
        // maximally mixed spin, apparatus ready
        let mut m = CMatrix::zeros(6, 6);
        m[(0, 0)] = c(0.5);
        m[(3, 3)] = c(0.5);
        let rho = DensityState::new(l.clone(), m).unwrap();
        assert!(
            (quantum_conditional_entropy(&rho, &["spin"], &["M"]).unwrap() - LN_2).abs() < TAU_EIG
        );
        // Bell-like correlation (|+z,+> + |-z,->)/sqrt2 is pure: S(S|M) = -ln 2
        let mut v = CVector::zeros(6);
        v[1] = c(1.0);
        v[5] = c(1.0);
        let bell = DensityState::pure(l, &v).unwrap();
        let h = quantum_conditional_entropy(&bell, &["spin"], &["M"]).unwrap();
        assert!((h + LN_2).abs() < TAU_EIG);
        assert!(matches!(
            quantum_conditional_entropy(&bell, &["spin"], &["spin"]),
            Err(Error::LayoutConflict(_))
        ));
    }

    #[test]
    fn snapshot_of_product_of_mixed_qubits() {
        let l = layout(&[
            ("a", Role::Spin, &["0", "1"]),
            ("b", Role::Spin, &["0", "1"]),
        ]);
        let rho = DensityState::maximally_mixed(l).unwrap();
        let s = snapshot(&rho, &["a"], &["b"]).unwrap();
        assert!((s.joint - 2.0 * LN_2).abs() < TAU_EIG);
        assert!((s.marginals["a"] - LN_2).abs() < TAU_EIG);
        assert!((s.conditional_s_given_m - LN_2).abs() < TAU_EIG);
        assert!((s.conditional_m_given_s - LN_2).abs() < TAU_EIG);
        assert!(s.mutual_information.abs() < TAU_EIG);
    }
}
