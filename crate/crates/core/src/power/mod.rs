//! DL power control: CD-FPT, max-min fairness, AP selection, and the
//! closed-form DL SINR they are all scored with.

mod maxmin;
mod selection;

use serde::{Deserialize, Serialize};

use crate::channel::{EstimateQuality, LargeScaleMatrix};
use crate::error::{Error, Result};
use crate::num::{Matrix, Real};
use crate::pilots::PilotAssignment;

pub use maxmin::{maxmin, maxmin_with_subsets, MaxMinOptions};
pub use selection::{power_subset_95, select_cqb, select_rpb, shortest_prefix, SelectionReport};

/// DL power-control coefficients ρ_lk with the serving AP subsets A_k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation<T> {
    pub rho: Matrix<T>,
    /// Serving APs of each UE, ascending.
    pub subsets: Vec<Vec<usize>>,
    /// Achieved max-min SINR (linear) when produced by the max-min solver.
    pub sinr_target: Option<T>,
    /// UL coefficients ρ_k; stored at full power, unused by DL evaluation.
    pub ul_rho: Vec<T>,
}

impl<T: Real> PowerAllocation<T> {
    pub fn num_aps(&self) -> usize {
        self.rho.rows()
    }

    pub fn num_ues(&self) -> usize {
        self.rho.cols()
    }

    /// Largest per-AP load Σ_k ρ_lk γ_lk.
    pub fn max_ap_load(&self, gamma: &EstimateQuality<T>) -> T {
        (0..self.num_aps())
            .map(|l| (0..self.num_ues()).map(|k| self.rho[(l, k)] * gamma.get(l, k)).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Checks ρ ≥ 0, the per-AP constraint (with `slack`), and the support.
    pub fn check(&self, gamma: &EstimateQuality<T>, slack: T) -> Result<()> {
        if self.rho.as_slice().iter().any(|r| *r < T::zero() || !r.is_finite()) {
            return Err(Error::InvalidConfig("negative or non-finite power coefficient".into()));
        }
        let load = self.max_ap_load(gamma);
        if load > T::one() + slack {
            return Err(Error::InvalidConfig(format!("per-AP constraint violated: {load:?}")));
        }
        for (k, subset) in self.subsets.iter().enumerate() {
            for l in 0..self.num_aps() {
                if subset.binary_search(&l).is_err() && self.rho[(l, k)] != T::zero() {
                    return Err(Error::InvalidConfig(format!("AP {l} powers UE {k} outside A_k")));
                }
            }
        }
        Ok(())
    }

    /// Zeroes every coefficient outside the given subsets.
    pub fn restricted_to(&self, subsets: &[Vec<usize>]) -> Self {
        let mut rho = self.rho.clone();
        for (k, subset) in subsets.iter().enumerate() {
            for l in 0..self.num_aps() {
                if subset.binary_search(&l).is_err() {
                    rho[(l, k)] = T::zero();
                }
            }
        }
        Self { rho, subsets: subsets.to_vec(), sinr_target: None, ul_rho: self.ul_rho.clone() }
    }
}

pub(crate) fn all_aps(l: usize, k: usize) -> Vec<Vec<usize>> {
    vec![(0..l).collect(); k]
}

/// Channel-dependent full power transmission: ρ_lk = 1 / Σ_k' γ_lk'.
pub fn cdfpt<T: Real>(gamma: &EstimateQuality<T>) -> PowerAllocation<T> {
    let (l_n, k_n) = (gamma.num_aps(), gamma.num_ues());
    let mut rho = Matrix::filled(l_n, k_n, T::zero());
    for l in 0..l_n {
        let total: T = gamma.gamma.row(l).iter().copied().sum();
        let r = total.recip();
        rho.row_mut(l).iter_mut().for_each(|v| *v = r);
    }
    PowerAllocation { rho, subsets: all_aps(l_n, k_n), sinr_target: None, ul_rho: vec![T::one(); k_n] }
}

/// Closed-form DL SINR of MR precoding with average-gain decoding:
///
/// SINR_k = ρ_d (Σ_l √ρ_lk γ_lk)² / ( ρ_d Σ_{k'≠k} c(k,k') (Σ_l √ρ_lk' γ_lk' β_lk/β_lk')²
///          + ρ_d Σ_k' Σ_l ρ_lk' γ_lk' β_lk + 1 )
pub fn dl_sinr<T: Real>(
    rho: &Matrix<T>,
    gamma: &EstimateQuality<T>,
    beta: &LargeScaleMatrix<T>,
    pilots: &PilotAssignment,
    rho_d: T,
) -> Vec<T> {
    let (l_n, k_n) = (beta.num_aps(), beta.num_ues());
    (0..k_n)
        .map(|k| {
            let mut signal = T::zero();
            let mut interference = T::zero();
            for l in 0..l_n {
                signal = signal + rho[(l, k)].sqrt() * gamma.get(l, k);
                let b = beta.get(l, k);
                for j in 0..k_n {
                    interference = interference + rho[(l, j)] * gamma.get(l, j) * b;
                }
            }
            let mut contamination = T::zero();
            for j in (0..k_n).filter(|&j| j != k && pilots.shares_pilot(k, j)) {
                let mut c = T::zero();
                for l in 0..l_n {
                    c = c + rho[(l, j)].sqrt() * gamma.get(l, j) * beta.get(l, k) / beta.get(l, j);
                }
                contamination = contamination + c * c;
            }
            rho_d * signal * signal / (rho_d * (contamination + interference) + T::one())
        })
        .collect()
}

/// DL power-control policy names accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "cdfpt")]
    Cdfpt,
    #[serde(rename = "mmf")]
    Mmf,
    #[serde(rename = "mmf-rpb")]
    MmfRpb,
    #[serde(rename = "mmf-cqb")]
    MmfCqb,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Cdfpt, Policy::Mmf, Policy::MmfRpb, Policy::MmfCqb];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cdfpt => "cdfpt",
            Self::Mmf => "mmf",
            Self::MmfRpb => "mmf-rpb",
            Self::MmfCqb => "mmf-cqb",
        }
    }

    pub fn uses_maxmin(self) -> bool {
        !matches!(self, Self::Cdfpt)
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownName { kind: "power-control policy", name: s.into() })
    }
}
