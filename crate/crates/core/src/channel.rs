//! Large-scale fading, i.i.d. Rayleigh small-scale fading, and MMSE
//! channel-estimate statistics under pilot contamination.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cn01, db_to_linear, rng_for, Cx, Matrix, Real};
use crate::pilots::PilotAssignment;
use crate::scenario::{FrameConfig, Layout, ScenarioConfig};

pub(crate) const SHADOW_STREAM: u64 = 2;
pub(crate) const FADING_STREAM: u64 = 3;

/// Distances are clamped below at this value before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PathLossParams {
    /// `PL(d) = PL(d0) + 10 n log10(d/d0) + X`, X ~ N(0, σ²).
    OneSlope { d0_m: f64, pl_d0_db: f64, exponent_n: f64, shadow_sigma_db: f64 },
    /// Slopes 0/20/35 dB per decade split at `d0_m` and `d1_m`. `l_const_db`
    /// is referenced to distances in kilometres; shadowing applies beyond `d1_m`.
    ThreeSlope { d0_m: f64, d1_m: f64, l_const_db: f64, shadow_sigma_db: f64 },
}

impl PathLossParams {
    /// Industrial indoor one-slope fit at 5.2 GHz.
    pub fn indoor_industrial() -> Self {
        Self::OneSlope { d0_m: 15.0, pl_d0_db: 70.28, exponent_n: 2.59, shadow_sigma_db: 6.09 }
    }

    /// Three-slope model with a Hata-COST231 constant for the given carrier.
    pub fn three_slope_hata(carrier_hz: f64, ap_height_m: f64, ue_height_m: f64) -> Self {
        Self::ThreeSlope {
            d0_m: 10.0,
            d1_m: 50.0,
            l_const_db: hata_cost231_constant(carrier_hz / 1e6, ap_height_m, ue_height_m),
            shadow_sigma_db: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::OneSlope { d0_m, exponent_n, shadow_sigma_db, .. } => {
                d0_m > 0.0 && exponent_n > 0.0 && shadow_sigma_db >= 0.0
            }
            Self::ThreeSlope { d0_m, d1_m, shadow_sigma_db, .. } => {
                d0_m > 0.0 && d0_m < d1_m && shadow_sigma_db >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid path-loss parameters {self:?}")))
        }
    }

    pub fn shadow_sigma_db(&self) -> f64 {
        match *self {
            Self::OneSlope { shadow_sigma_db, .. } | Self::ThreeSlope { shadow_sigma_db, .. } => {
                shadow_sigma_db
            }
        }
    }

    /// Whether a shadowing term is added at this distance.
    pub fn shadowed_at(&self, d_m: f64) -> bool {
        match *self {
            Self::OneSlope { .. } => true,
            Self::ThreeSlope { d1_m, .. } => d_m.max(MIN_DISTANCE_M) > d1_m,
        }
    }

    /// Deterministic path loss in dB (no shadowing).
    pub fn loss_db<T: Real>(&self, d_m: T) -> T {
        let d = d_m.max(T::lit(MIN_DISTANCE_M));
        let ten = T::lit(10.0);
        match *self {
            Self::OneSlope { d0_m, pl_d0_db, exponent_n, .. } => {
                T::lit(pl_d0_db) + ten * T::lit(exponent_n) * (d / T::lit(d0_m)).log10()
            }
            Self::ThreeSlope { d0_m, d1_m, l_const_db, .. } => {
                let km = T::lit(1e-3);
                let (d, d0, d1) = (d * km, T::lit(d0_m) * km, T::lit(d1_m) * km);
                let l = T::lit(l_const_db);
                if d > d1 {
                    l + T::lit(35.0) * d.log10()
                } else if d > d0 {
                    l + T::lit(15.0) * d1.log10() + T::lit(20.0) * d.log10()
                } else {
                    l + T::lit(15.0) * d1.log10() + T::lit(20.0) * d0.log10()
                }
            }
        }
    }
}

/// Hata-COST231 constant term (f in MHz, heights in metres), distances in km.
pub fn hata_cost231_constant(f_mhz: f64, ap_height_m: f64, ue_height_m: f64) -> f64 {
    let lf = f_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * ap_height_m.log10() - (1.1 * lf - 0.7) * ue_height_m
        + (1.56 * lf - 0.8)
}

/// Large-scale fading coefficients β_lk (rows = APs, columns = UEs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleMatrix<T> {
    pub beta: Matrix<T>,
}

impl<T: Real> LargeScaleMatrix<T> {
    pub fn new(beta: Matrix<T>) -> Result<Self> {
        if beta.as_slice().iter().any(|b| !(*b > T::zero()) || !b.is_finite()) {
            return Err(Error::InvalidConfig("large-scale fading must be positive and finite".into()));
        }
        Ok(Self { beta })
    }

    pub fn num_aps(&self) -> usize {
        self.beta.rows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.cols()
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> T {
        self.beta[(l, k)]
    }
}

/// One realization of the complex channel gains g_lk.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    pub g: Matrix<Cx<T>>,
}

impl<T: Real> ChannelRealization<T> {
    /// Channel vector h ∈ C^L of UE `k`.
    pub fn ue_vector(&self, k: usize) -> Vec<Cx<T>> {
        self.g.column(k).collect()
    }
}

/// Variance γ_lk of the MMSE channel estimate ĝ_lk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateQuality<T> {
    pub gamma: Matrix<T>,
}

impl<T: Real> EstimateQuality<T> {
    #[inline]
    pub fn get(&self, l: usize, k: usize) -> T {
        self.gamma[(l, k)]
    }

    pub fn num_aps(&self) -> usize {
        self.gamma.rows()
    }

    pub fn num_ues(&self) -> usize {
        self.gamma.cols()
    }

    /// Perfect-CSI statistics: γ = β.
    pub fn perfect(beta: &LargeScaleMatrix<T>) -> Self {
        Self { gamma: beta.beta.clone() }
    }
}

/// Path loss plus i.i.d. log-normal shadowing for every AP/UE pair.
pub fn large_scale<T: Real>(
    layout: &Layout<T>,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<LargeScaleMatrix<T>> {
    let area = config.area::<T>();
    let pl = &config.pathloss;
    let sigma = pl.shadow_sigma_db();
    let mut rng = rng_for(seed, SHADOW_STREAM);
    let (l_n, k_n) = (layout.num_aps(), layout.num_ues());
    let mut beta = Matrix::filled(l_n, k_n, T::zero());
    for l in 0..l_n {
        for k in 0..k_n {
            let d = area.distance(&layout.ap_positions[l], &layout.ue_positions[k]);
            // one draw per pair keeps the stream aligned whatever the distance
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let mut loss = pl.loss_db(d);
            if pl.shadowed_at(d.as_f64()) {
                loss = loss + T::lit(sigma * z);
            }
            beta[(l, k)] = db_to_linear(-loss);
        }
    }
    LargeScaleMatrix::new(beta)
}

/// g_lk = √β_lk · z_lk with z_lk ~ CN(0, 1) i.i.d.
pub fn small_scale<T: Real>(beta: &LargeScaleMatrix<T>, seed: u64) -> ChannelRealization<T> {
    let mut rng = rng_for(seed, FADING_STREAM);
    small_scale_with(beta, &mut rng)
}

pub fn small_scale_with<T: Real, R: Rng + ?Sized>(
    beta: &LargeScaleMatrix<T>,
    rng: &mut R,
) -> ChannelRealization<T> {
    let g = Matrix::from_fn(beta.num_aps(), beta.num_ues(), |l, k| {
        cn01::<T, _>(rng) * beta.get(l, k).sqrt()
    });
    ChannelRealization { g }
}

/// γ_lk = τ_up ρ_p β_lk² / (τ_up ρ_p Σ_{k' co-pilot} β_lk' + 1).
pub fn estimate_quality<T: Real>(
    beta: &LargeScaleMatrix<T>,
    pilots: &PilotAssignment,
    frame: &FrameConfig,
    pilot_snr: T,
) -> EstimateQuality<T> {
    let tp = T::lit(frame.tau_up as f64) * pilot_snr;
    let groups = pilots.copilot_groups();
    let mut gamma = Matrix::filled(beta.num_aps(), beta.num_ues(), T::zero());
    for l in 0..beta.num_aps() {
        for k in 0..beta.num_ues() {
            let load: T = groups[pilots.pilot_of[k]].iter().map(|&j| beta.get(l, j)).sum();
            let b = beta.get(l, k);
            gamma[(l, k)] = tp * b * b / (tp * load + T::one());
        }
    }
    EstimateQuality { gamma }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn gamma_bounded_and_monotone(
            b in proptest::collection::vec(1e-12..1e-3f64, 4),
            snr in 1e3..1e12f64,
            seed in 0u64..1000,
        ) {
            let beta = LargeScaleMatrix::new(Matrix::from_vec(1, 4, b).unwrap()).unwrap();
            let frame = FrameConfig::dl_only(200, 3);
            let pilots = crate::pilots::assign_random(4, 3, seed);
            let g = estimate_quality(&beta, &pilots, &frame, snr);
            let g_hi = estimate_quality(&beta, &pilots, &frame, snr * 10.0);
            let orth = PilotAssignment::new(vec![0, 1, 2, 3], 4).unwrap();
            let g_orth = estimate_quality(&beta, &orth, &frame, snr);
            for k in 0..4 {
                prop_assert!(g.get(0, k) > 0.0 && g.get(0, k) <= beta.get(0, k));
                prop_assert!(g_hi.get(0, k) >= g.get(0, k));
                prop_assert!(g_orth.get(0, k) >= g.get(0, k) * (1.0 - 1e-12));
            }
        }
    }
}
