//! User-centric AP selection (RPB, CQB) and the 95%-subset measurement.

use serde::{Deserialize, Serialize};

use super::PowerAllocation;
use crate::channel::{EstimateQuality, LargeScaleMatrix};
use crate::num::{Matrix, Real};

/// Relative slack when comparing a cumulative sum with its threshold.
const PREFIX_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub alpha_pct: f64,
    /// Mean over UEs of |A_k| / L.
    pub avg_subset_fraction: f64,
    pub per_ue_sizes: Vec<usize>,
}

impl SelectionReport {
    pub fn from_subsets(alpha_pct: f64, subsets: &[Vec<usize>], num_aps: usize) -> Self {
        let per_ue_sizes: Vec<usize> = subsets.iter().map(Vec::len).collect();
        let avg_subset_fraction = if subsets.is_empty() {
            0.0
        } else {
            per_ue_sizes.iter().map(|&s| s as f64 / num_aps as f64).sum::<f64>() / subsets.len() as f64
        };
        Self { alpha_pct, avg_subset_fraction, per_ue_sizes }
    }
}

/// Indices of the shortest descending-order prefix of `values` whose sum
/// reaches `alpha_pct` percent of the total, returned in ascending index order.
/// With `alpha_pct >= 100` every strictly positive entry is kept. The result
/// always holds at least one index.
pub fn shortest_prefix<T: Real>(values: &[T], alpha_pct: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let total: T = order.iter().map(|&i| values[i]).sum();
    let mut chosen = Vec::new();
    if total <= T::zero() {
        chosen.extend(order.first().copied());
        return chosen;
    }
    let threshold = T::lit(alpha_pct / 100.0) * total * T::lit(1.0 - PREFIX_SLACK);
    let mut cum = T::zero();
    for &i in &order {
        if alpha_pct >= 100.0 {
            if values[i] <= T::zero() {
                break;
            }
        } else if !chosen.is_empty() && cum >= threshold {
            break;
        }
        cum = cum + values[i];
        chosen.push(i);
    }
    chosen.sort_unstable();
    chosen
}

fn per_ue_prefix<T: Real>(m: &Matrix<T>, alpha_pct: f64) -> Vec<Vec<usize>> {
    (0..m.cols()).map(|k| shortest_prefix(&m.column(k).collect::<Vec<_>>(), alpha_pct)).collect()
}

/// Received-power-based selection: A_k is the shortest prefix of the
/// descending √ρ_lk γ_lk that reaches α% of Σ_j √ρ_jk γ_jk. The returned
/// allocation is `alloc` with coefficients outside A_k zeroed.
pub fn select_rpb<T: Real>(
    alloc: &PowerAllocation<T>,
    gamma: &EstimateQuality<T>,
    alpha_pct: f64,
) -> (PowerAllocation<T>, SelectionReport) {
    let weight = Matrix::from_fn(alloc.num_aps(), alloc.num_ues(), |l, k| {
        alloc.rho[(l, k)].sqrt() * gamma.get(l, k)
    });
    let subsets = per_ue_prefix(&weight, alpha_pct);
    let report = SelectionReport::from_subsets(alpha_pct, &subsets, alloc.num_aps());
    (alloc.restricted_to(&subsets), report)
}

/// Channel-quality-based selection on the descending β_lk of each UE.
pub fn select_cqb<T: Real>(beta: &LargeScaleMatrix<T>, alpha_pct: f64) -> Vec<Vec<usize>> {
    per_ue_prefix(&beta.beta, alpha_pct)
}

/// Single-UE full-power setting: the APs delivering 95% of the received
/// power β_lk·P_max for each UE.
pub fn power_subset_95<T: Real>(beta: &LargeScaleMatrix<T>, max_ap_power_w: T) -> SelectionReport {
    let received = beta.beta.map(|b| b * max_ap_power_w);
    let subsets = per_ue_prefix(&received, 95.0);
    SelectionReport::from_subsets(95.0, &subsets, beta.num_aps())
}
