//! Spectral efficiency, empirical CDFs and the macro-diversity metrics.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{EstimateQuality, LargeScaleMatrix, PathLossParams, FADING_STREAM};
use crate::error::{Error, Result};
use crate::num::{cn01, db_to_linear, linear_to_db, rng_for, Cx, Matrix, Real};
use crate::pilots::PilotAssignment;
use crate::power::{dl_sinr, PowerAllocation};
use crate::scenario::{Area, FrameConfig, Point3};

/// Per-user DL spectral efficiency of one drop under one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SEResult<T> {
    pub per_user_se: Vec<T>,
    pub policy: String,
    pub drop: usize,
}

/// `prelog · log2(1 + SINR)`.
pub fn se_from_sinr<T: Real>(sinr: &[T], frame: &FrameConfig) -> Vec<T> {
    let prelog: T = frame.prelog();
    sinr.iter().map(|&s| prelog * (T::one() + s).log2()).collect()
}

/// Closed-form lower bound on the DL SE of every user.
pub fn se_closed_form<T: Real>(
    alloc: &PowerAllocation<T>,
    gamma: &EstimateQuality<T>,
    beta: &LargeScaleMatrix<T>,
    pilots: &PilotAssignment,
    rho_d: T,
    frame: &FrameConfig,
) -> Vec<T> {
    se_from_sinr(&dl_sinr(&alloc.rho, gamma, beta, pilots, rho_d), frame)
}

/// Inputs of the Monte-Carlo DL simulation.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarloSetup<'a, T> {
    pub beta: &'a LargeScaleMatrix<T>,
    pub pilots: &'a PilotAssignment,
    pub frame: &'a FrameConfig,
    pub pilot_snr: T,
    pub rho_d: T,
    /// Precode with the true channel instead of the MMSE estimate.
    pub perfect_csi: bool,
}

/// Simulates UL pilot reception, MMSE estimation and MR precoding over
/// `draws` fading realizations, and evaluates the use-and-forget bound
///
/// ```text
/// SINR_k = ρ_d |E a_kk|² / (ρ_d Σ_k' E|a_kk'|² − ρ_d |E a_kk|² + 1),
/// a_kk' = Σ_l √ρ_lk' g_lk ĝ*_lk'
/// ```
///
/// with every expectation replaced by its sample mean, i.e. each UE decodes
/// with the average effective gain.
pub fn se_monte_carlo<T: Real>(
    alloc: &PowerAllocation<T>,
    setup: &MonteCarloSetup<'_, T>,
    draws: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if draws == 0 {
        return Err(Error::EmptySamples);
    }
    let beta = setup.beta;
    let (l_n, k_n) = (beta.num_aps(), beta.num_ues());
    let tp = T::lit(setup.frame.tau_up as f64) * setup.pilot_snr;
    let groups = setup.pilots.copilot_groups();
    let coef = Matrix::from_fn(l_n, k_n, |l, k| {
        let load: T = groups[setup.pilots.pilot_of[k]].iter().map(|&j| beta.get(l, j)).sum();
        tp.sqrt() * beta.get(l, k) / (tp * load + T::one())
    });
    let sqrt_rho = alloc.rho.map(|r| r.sqrt());

    let mut rng = rng_for(seed, FADING_STREAM);
    let mut mean_gain = vec![Cx::<T>::new(T::zero(), T::zero()); k_n];
    let mut power = Matrix::filled(k_n, k_n, T::zero());
    let mut g = Matrix::filled(l_n, k_n, Cx::new(T::zero(), T::zero()));
    let mut g_hat = g.clone();
    let mut y = vec![Cx::new(T::zero(), T::zero()); setup.pilots.tau_up];
    for _ in 0..draws {
        for l in 0..l_n {
            for k in 0..k_n {
                g[(l, k)] = cn01::<T, _>(&mut rng) * beta.get(l, k).sqrt();
            }
            if setup.perfect_csi {
                for k in 0..k_n {
                    g_hat[(l, k)] = g[(l, k)];
                }
            } else {
                for (p, yp) in y.iter_mut().enumerate() {
                    let rx: Cx<T> = groups[p].iter().map(|&j| g[(l, j)]).fold(Cx::new(T::zero(), T::zero()), |a, b| a + b);
                    *yp = rx * tp.sqrt() + cn01::<T, _>(&mut rng);
                }
                for k in 0..k_n {
                    g_hat[(l, k)] = y[setup.pilots.pilot_of[k]] * coef[(l, k)];
                }
            }
        }
        for k in 0..k_n {
            for j in 0..k_n {
                let mut a = Cx::new(T::zero(), T::zero());
                for l in 0..l_n {
                    a = a + g[(l, k)] * g_hat[(l, j)].conj() * sqrt_rho[(l, j)];
                }
                if j == k {
                    mean_gain[k] = mean_gain[k] + a;
                }
                power[(k, j)] = power[(k, j)] + a.norm_sqr();
            }
        }
    }
    let n = T::lit(draws as f64);
    let sinr: Vec<T> = (0..k_n)
        .map(|k| {
            let signal = (mean_gain[k] / n).norm_sqr();
            let total: T = (0..k_n).map(|j| power[(k, j)] / n).sum();
            let rd = setup.rho_d;
            rd * signal / (rd * (total - signal) + T::one())
        })
        .collect();
    Ok(se_from_sinr(&sinr, setup.frame))
}

/// Sorted samples with percentile lookups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary<T> {
    sorted: Vec<T>,
}

/// Sample count below which the 5th percentile is not reported.
pub const MIN_LIKELY95_SAMPLES: usize = 20;

impl<T: Real> CdfSummary<T> {
    pub fn new(mut samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidConfig("NaN sample".into()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[T] {
        &self.sorted
    }

    /// Lower-interpolated percentile: element ⌊p/100 · (n − 1)⌋.
    pub fn percentile(&self, p: f64) -> T {
        let p = p.clamp(0.0, 100.0);
        let idx = ((p / 100.0) * (self.sorted.len() - 1) as f64 + 1e-9).floor() as usize;
        self.sorted[idx.min(self.sorted.len() - 1)]
    }

    /// SE exceeded by 95% of the samples.
    pub fn likely95(&self) -> Result<T> {
        if self.sorted.len() < MIN_LIKELY95_SAMPLES {
            return Err(Error::InsufficientSamples { needed: MIN_LIKELY95_SAMPLES, got: self.sorted.len() });
        }
        Ok(self.percentile(5.0))
    }

    pub fn mean(&self) -> T {
        self.sorted.iter().copied().sum::<T>() / T::lit(self.sorted.len() as f64)
    }

    /// `(value, i/n)` for the i-th smallest sample.
    pub fn cdf_points(&self) -> impl Iterator<Item = (T, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(move |(i, &v)| (v, (i + 1) as f64 / n))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["value", "cumulative_probability"])?;
        for (v, p) in self.cdf_points() {
            w.write_record([format!("{:?}", v.as_f64()), format!("{p:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn cdf_summary<T: Real>(samples: Vec<T>) -> Result<CdfSummary<T>> {
    CdfSummary::new(samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// ‖h‖², all APs serve the UE.
    Cellfree,
    /// max_l |h_l|², the strongest AP serves the UE.
    Cellular,
}

pub fn channel_gain<T: Real>(h: &[Cx<T>], mode: GainMode) -> T {
    match mode {
        GainMode::Cellfree => h.iter().map(|c| c.norm_sqr()).sum(),
        GainMode::Cellular => h.iter().map(|c| c.norm_sqr()).fold(T::zero(), T::max),
    }
}

/// Channel gains of every realization in dB.
pub fn channel_gain_stats<T: Real>(realizations: &[Vec<Cx<T>>], mode: GainMode) -> Result<CdfSummary<T>> {
    CdfSummary::new(realizations.iter().map(|h| linear_to_db(channel_gain(h, mode))).collect())
}

/// `|h1ᴴ h2|² / (‖h1‖² ‖h2‖²)`.
pub fn orthogonality<T: Real>(h1: &[Cx<T>], h2: &[Cx<T>]) -> Result<T> {
    if h1.len() != h2.len() {
        return Err(Error::InvalidConfig(format!("vector lengths {} and {} differ", h1.len(), h2.len())));
    }
    let n1: T = h1.iter().map(|c| c.norm_sqr()).sum();
    let n2: T = h2.iter().map(|c| c.norm_sqr()).sum();
    if n1 == T::zero() || n2 == T::zero() {
        return Err(Error::ZeroVector);
    }
    let ip = h1.iter().zip(h2).fold(Cx::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
    Ok((ip.norm_sqr() / (n1 * n2)).min(T::one()))
}

/// Macro-diversity experiment on a square AP lattice: two UEs per draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroDiversitySetup {
    pub side_aps: usize,
    pub isd_m: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub wrap_around: bool,
    pub pathloss: PathLossParams,
}

impl MacroDiversitySetup {
    /// 50 × 50 APs, three-slope path loss with wrap-around.
    pub fn lattice(isd_m: f64) -> Self {
        Self {
            side_aps: 50,
            isd_m,
            ap_height_m: 15.0,
            ue_height_m: 1.65,
            wrap_around: true,
            pathloss: PathLossParams::three_slope_hata(1.9e9, 15.0, 1.65),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroDiversityReport {
    /// Channel gain samples in dB, two per draw.
    pub cellfree_db: CdfSummary<f64>,
    pub cellular_db: CdfSummary<f64>,
    pub orthogonality: CdfSummary<f64>,
}

impl MacroDiversityReport {
    /// Cell-free minus cellular gain at the given percentile, in dB.
    pub fn gap_db(&self, p: f64) -> f64 {
        self.cellfree_db.percentile(p) - self.cellular_db.percentile(p)
    }
}

/// Runs `draws` independent two-UE placements with shadowing and Rayleigh fading.
pub fn macro_diversity(setup: &MacroDiversitySetup, draws: usize, seed: u64) -> Result<MacroDiversityReport> {
    if setup.side_aps == 0 || !(setup.isd_m > 0.0) {
        return Err(Error::InvalidConfig("lattice needs at least one AP and a positive spacing".into()));
    }
    setup.pathloss.validate()?;
    let side = setup.side_aps as f64 * setup.isd_m;
    let area = Area { width: side, height: side, wrap_around: setup.wrap_around };
    let aps: Vec<Point3<f64>> = (0..setup.side_aps * setup.side_aps)
        .map(|i| {
            let (r, c) = (i / setup.side_aps, i % setup.side_aps);
            Point3::new((c as f64 + 0.5) * setup.isd_m, (r as f64 + 0.5) * setup.isd_m, setup.ap_height_m)
        })
        .collect();
    let sigma = setup.pathloss.shadow_sigma_db();
    let mut rng = rng_for(seed, FADING_STREAM);
    let (mut cf, mut cl, mut orth) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..draws {
        let mut pair: Vec<Vec<Cx<f64>>> = Vec::with_capacity(2);
        for _ in 0..2 {
            let ue = Point3::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side), setup.ue_height_m);
            let h: Vec<Cx<f64>> = aps
                .iter()
                .map(|ap| {
                    let d = area.distance(ap, &ue);
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    let mut loss = setup.pathloss.loss_db(d);
                    if setup.pathloss.shadowed_at(d) {
                        loss += sigma * z;
                    }
                    cn01::<f64, _>(&mut rng) * db_to_linear(-loss).sqrt()
                })
                .collect();
            cf.push(linear_to_db(channel_gain(&h, GainMode::Cellfree)));
            cl.push(linear_to_db(channel_gain(&h, GainMode::Cellular)));
            pair.push(h);
        }
        orth.push(orthogonality(&pair[0], &pair[1])?);
    }
    Ok(MacroDiversityReport {
        cellfree_db: CdfSummary::new(cf)?,
        cellular_db: CdfSummary::new(cl)?,
        orthogonality: CdfSummary::new(orth)?,
    })
}

/// Writes per-user SE rows `(drop, ue_id, se_bits_per_hz, policy)`.
pub fn write_se_csv<T: Real, W: Write>(out: W, results: &[SEResult<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["drop", "ue_id", "se_bits_per_hz", "policy"])?;
    for r in results {
        for (k, se) in r.per_user_se.iter().enumerate() {
            w.write_record([r.drop.to_string(), k.to_string(), format!("{:?}", se.as_f64()), r.policy.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}
