//! Monte-Carlo campaigns over UE drops and the files they produce.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{estimate_quality, large_scale, EstimateQuality, LargeScaleMatrix};
use crate::error::{Error, Result};
use crate::num::{derive_seed, linear_to_db, Matrix};
use crate::performance::{
    macro_diversity, se_closed_form, write_se_csv, CdfSummary, MacroDiversitySetup, SEResult,
    MIN_LIKELY95_SAMPLES,
};
use crate::pilots::{assign, PilotContext, PilotStrategy};
use crate::power::{
    cdfpt, maxmin, maxmin_with_subsets, select_cqb, select_rpb, MaxMinOptions, Policy, PowerAllocation,
    SelectionReport,
};
use crate::scenario::{Layout, ScenarioConfig};

/// Everything needed to reproduce a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Preset name or config path, echoed in the report.
    pub scenario_name: String,
    pub scenario: ScenarioConfig,
    pub policies: Vec<Policy>,
    pub pilots: PilotStrategy,
    pub alpha_pct: f64,
    pub drops: usize,
    pub seed: u64,
    /// Re-solve max-min on the selected subsets instead of only zeroing.
    #[serde(default = "default_true")]
    pub reoptimize: bool,
    #[serde(default = "default_tol")]
    pub maxmin_tol: f64,
}

fn default_true() -> bool {
    true
}

fn default_tol() -> f64 {
    MaxMinOptions::default().tol
}

impl CampaignSpec {
    pub fn new(scenario_name: &str, scenario: ScenarioConfig, policies: Vec<Policy>) -> Self {
        Self {
            scenario_name: scenario_name.into(),
            scenario,
            policies,
            pilots: PilotStrategy::Orthogonal,
            alpha_pct: 95.0,
            drops: 1,
            seed: 0,
            reoptimize: true,
            maxmin_tol: default_tol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.drops == 0 {
            return Err(Error::InvalidConfig("drops must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("at least one policy is required".into()));
        }
        if !(self.alpha_pct > 0.0 && self.alpha_pct <= 100.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 100], got {}", self.alpha_pct)));
        }
        Ok(())
    }

    fn maxmin_options(&self) -> MaxMinOptions {
        MaxMinOptions { tol: self.maxmin_tol, ..MaxMinOptions::default() }
    }
}

/// Allocation of one policy in one drop.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub se: SEResult<f64>,
    pub allocation: PowerAllocation<f64>,
    pub selection: Option<SelectionReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropOutcome {
    pub drop: usize,
    pub outcomes: Vec<PolicyOutcome>,
    /// Weakest UE's strongest large-scale coefficient, in dB.
    pub min_best_beta_db: f64,
}

/// One realization: UE placement, large-scale fading, pilots, estimation
/// and every requested policy.
pub fn run_drop(spec: &CampaignSpec, drop: usize, seed: u64) -> Result<DropOutcome> {
    let cfg = &spec.scenario;
    let layout = Layout::<f64>::generate(cfg, seed)?;
    let beta = large_scale(&layout, cfg, seed)?;
    let (rho_d, pilot_snr) = (cfg.rho_d(), cfg.pilot_snr());
    let ctx = PilotContext { beta: &beta, frame: &cfg.frame, pilot_snr, rho_d };
    let pilots = assign(spec.pilots, &ctx, &layout, cfg, seed)?;
    let gamma = estimate_quality(&beta, &pilots, &cfg.frame, pilot_snr);
    let opts = spec.maxmin_options();

    let mut mmf: Option<PowerAllocation<f64>> = None;
    let mut full_mmf = |gamma: &EstimateQuality<f64>, beta: &LargeScaleMatrix<f64>| -> Result<PowerAllocation<f64>> {
        if mmf.is_none() {
            mmf = Some(maxmin(gamma, beta, &pilots, rho_d, &opts)?);
        }
        Ok(mmf.clone().expect("just computed"))
    };

    let mut outcomes = Vec::with_capacity(spec.policies.len());
    for &policy in &spec.policies {
        let (allocation, selection) = match policy {
            Policy::Cdfpt => (cdfpt(&gamma), None),
            Policy::Mmf => (full_mmf(&gamma, &beta)?, None),
            Policy::MmfRpb => {
                let base = full_mmf(&gamma, &beta)?;
                let (zeroed, report) = select_rpb(&base, &gamma, spec.alpha_pct);
                let alloc = if spec.reoptimize {
                    maxmin_with_subsets(&gamma, &beta, &pilots, rho_d, Some(&zeroed.subsets), &opts)?
                } else {
                    zeroed
                };
                (alloc, Some(report))
            }
            Policy::MmfCqb => {
                let subsets = select_cqb(&beta, spec.alpha_pct);
                let report = SelectionReport::from_subsets(spec.alpha_pct, &subsets, beta.num_aps());
                let alloc = if spec.reoptimize {
                    maxmin_with_subsets(&gamma, &beta, &pilots, rho_d, Some(&subsets), &opts)?
                } else {
                    full_mmf(&gamma, &beta)?.restricted_to(&subsets)
                };
                (alloc, Some(report))
            }
        };
        let per_user_se = se_closed_form(&allocation, &gamma, &beta, &pilots, rho_d, &cfg.frame);
        outcomes.push(PolicyOutcome {
            policy,
            se: SEResult { per_user_se, policy: policy.name().into(), drop },
            allocation,
            selection,
        });
    }
    let min_best_beta_db = (0..beta.num_ues())
        .map(|k| linear_to_db(beta.beta.column(k).fold(0.0, f64::max)))
        .fold(f64::INFINITY, f64::min);
    Ok(DropOutcome { drop, outcomes, min_best_beta_db })
}

/// Per-policy aggregate over all drops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub samples: usize,
    /// 5th percentile; absent with fewer than 20 samples.
    pub likely95: Option<f64>,
    pub median: f64,
    pub mean: f64,
    pub avg_subset_fraction: Option<f64>,
    #[serde(skip)]
    pub cdf: Option<CdfSummary<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub spec: CampaignSpec,
    pub policies: Vec<PolicySummary>,
    /// Smallest per-drop value of the weakest UE's best β, in dB.
    pub min_best_beta_db: f64,
    #[serde(skip)]
    pub results: Vec<SEResult<f64>>,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl CampaignReport {
    pub fn policy(&self, p: Policy) -> Option<&PolicySummary> {
        self.policies.iter().find(|s| s.policy == p)
    }
}

/// Runtime metadata kept apart from the reproducible summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub runtime_s: f64,
    pub threads: usize,
}

/// Seed of drop `i`.
pub fn drop_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Executes every drop (in parallel when `threads` allows) and aggregates
/// in drop order. Files are written only after all drops succeed.
pub fn run_campaign(spec: &CampaignSpec, out_dir: Option<&Path>, threads: Option<usize>) -> Result<CampaignReport> {
    spec.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let workers = pool.current_num_threads();
    let drops: Vec<DropOutcome> = pool.install(|| {
        (0..spec.drops)
            .into_par_iter()
            .map(|i| run_drop(spec, i, drop_seed(spec.seed, i)))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut policies = Vec::with_capacity(spec.policies.len());
    for (j, &policy) in spec.policies.iter().enumerate() {
        let samples: Vec<f64> =
            drops.iter().flat_map(|d| d.outcomes[j].se.per_user_se.iter().copied()).collect();
        let cdf = CdfSummary::new(samples)?;
        let fractions: Vec<f64> =
            drops.iter().filter_map(|d| d.outcomes[j].selection.as_ref().map(|s| s.avg_subset_fraction)).collect();
        policies.push(PolicySummary {
            policy,
            samples: cdf.len(),
            likely95: (cdf.len() >= MIN_LIKELY95_SAMPLES).then(|| cdf.percentile(5.0)),
            median: cdf.percentile(50.0),
            mean: cdf.mean(),
            avg_subset_fraction: (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
            cdf: Some(cdf),
        });
    }
    let results: Vec<SEResult<f64>> =
        drops.iter().flat_map(|d| d.outcomes.iter().map(|o| o.se.clone())).collect();
    let min_best_beta_db = drops.iter().map(|d| d.min_best_beta_db).fold(f64::INFINITY, f64::min);
    let report = CampaignReport {
        spec: spec.clone(),
        policies,
        min_best_beta_db,
        results,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        write_report(&report, dir, workers)?;
        if let Some(first) = drops.first() {
            for o in &first.outcomes {
                write_allocation_csv(&dir.join(format!("alloc_{}.csv", o.policy)), &o.allocation.rho)?;
            }
        }
    }
    Ok(report)
}

fn write_report(report: &CampaignReport, dir: &Path, threads: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    for p in &report.policies {
        if let Some(cdf) = &p.cdf {
            cdf.write_csv(&dir.join(format!("cdf_{}.csv", p.policy)))?;
        }
    }
    write_se_csv(fs::File::create(dir.join("se.csv"))?, &report.results)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)? + "\n")?;
    let runtime = RuntimeInfo { runtime_s: report.runtime_s, threads };
    fs::write(dir.join("runtime.json"), serde_json::to_string_pretty(&runtime)? + "\n")?;
    Ok(())
}

/// `(ap_id, ue_id, rho)` rows.
pub fn write_allocation_csv(path: &Path, rho: &Matrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ap_id", "ue_id", "rho"])?;
    for l in 0..rho.rows() {
        for k in 0..rho.cols() {
            w.write_record([l.to_string(), k.to_string(), format!("{:?}", rho[(l, k)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary of the macro-diversity experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroDiversitySummary {
    pub setup: MacroDiversitySetup,
    pub draws: usize,
    pub seed: u64,
    /// (percentile, cell-free dB, cellular dB, gap dB).
    pub gains: Vec<(f64, f64, f64, f64)>,
    pub median_orthogonality: f64,
}

/// Runs the two-UE macro-diversity experiment and writes its CDFs.
pub fn run_macro_diversity(isd_m: f64, draws: usize, seed: u64, out_dir: Option<&Path>) -> Result<MacroDiversitySummary> {
    let setup = MacroDiversitySetup::lattice(isd_m);
    let r = macro_diversity(&setup, draws, seed)?;
    let gains = [5.0, 50.0, 95.0]
        .iter()
        .map(|&p| (p, r.cellfree_db.percentile(p), r.cellular_db.percentile(p), r.gap_db(p)))
        .collect();
    let summary = MacroDiversitySummary { setup, draws, seed, gains, median_orthogonality: r.orthogonality.percentile(50.0) };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        r.cellfree_db.write_csv(&dir.join("cdf_gain_cellfree.csv"))?;
        r.cellular_db.write_csv(&dir.join("cdf_gain_cellular.csv"))?;
        r.orthogonality.write_csv(&dir.join("cdf_orthogonality.csv"))?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PathLossParams;
    use crate::scenario::{Deployment, FrameConfig};

    fn small(k: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::preset("indoor").unwrap();
        cfg.num_aps = 36;
        cfg.num_ues = k;
        cfg.area_width_m = 60.0;
        cfg.area_height_m = 60.0;
        cfg.frame = FrameConfig::dl_only(200, k.max(1) as u32);
        cfg
    }

    #[test]
    fn single_user_cdfpt_matches_hand_formula() {
        let cfg = small(1);
        let spec = CampaignSpec::new("test", cfg.clone(), vec![Policy::Cdfpt]);
        let out = run_drop(&spec, 0, 42).unwrap();
        let layout = Layout::<f64>::generate(&cfg, 42).unwrap();
        let beta = large_scale(&layout, &cfg, 42).unwrap();
        let tp = cfg.frame.tau_up as f64 * cfg.pilot_snr();
        let rho_d = cfg.rho_d();
        // ρ_l = 1/γ_l: signal ρ_d (Σ √γ_l)², interference ρ_d Σ β_l
        let gammas: Vec<f64> = beta.beta.column(0).map(|b| tp * b * b / (tp * b + 1.0)).collect();
        let signal: f64 = gammas.iter().map(|g| g.sqrt()).sum();
        let interf: f64 = beta.beta.column(0).sum();
        let sinr = rho_d * signal * signal / (rho_d * interf + 1.0);
        let expect = cfg.frame.prelog::<f64>() * (1.0 + sinr).log2();
        let got = out.outcomes[0].se.per_user_se[0];
        assert!((got - expect).abs() < 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn mmf_min_never_below_cdfpt() {
        let mut cfg = small(4);
        cfg.pathloss = PathLossParams::three_slope_hata(2e9, 9.0, 1.65);
        cfg.deployment = Deployment::Perimeter;
        cfg.num_aps = 40;
        cfg.wrap_around = false;
        let spec = CampaignSpec::new("test", cfg, vec![Policy::Cdfpt, Policy::Mmf, Policy::MmfRpb, Policy::MmfCqb]);
        for d in 0..4 {
            let out = run_drop(&spec, d, drop_seed(7, d)).unwrap();
            let min = |j: usize| out.outcomes[j].se.per_user_se.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min(1) >= min(0) * (1.0 - 1e-12), "drop {d}");
            for o in &out.outcomes {
                o.allocation.check(&estimate_for(&spec, d), 1e-9).unwrap();
            }
        }
    }

    fn estimate_for(spec: &CampaignSpec, d: usize) -> EstimateQuality<f64> {
        let cfg = &spec.scenario;
        let seed = drop_seed(7, d);
        let layout = Layout::<f64>::generate(cfg, seed).unwrap();
        let beta = large_scale(&layout, cfg, seed).unwrap();
        let pilots = crate::pilots::PilotAssignment::orthogonal(cfg.num_ues, cfg.frame.tau_up as usize).unwrap();
        estimate_quality(&beta, &pilots, &cfg.frame, cfg.pilot_snr())
    }

    #[test]
    fn one_drop_campaign_equals_run_drop() {
        let mut spec = CampaignSpec::new("test", small(3), vec![Policy::Cdfpt, Policy::Mmf]);
        spec.seed = 11;
        let report = run_campaign(&spec, None, Some(1)).unwrap();
        let single = run_drop(&spec, 0, drop_seed(11, 0)).unwrap();
        assert_eq!(report.results, single.outcomes.iter().map(|o| o.se.clone()).collect::<Vec<_>>());
        assert_eq!(report.policies[0].likely95, None);
        assert_eq!(report.policies[0].samples, 3);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = CampaignSpec::new("test", small(2), vec![Policy::Cdfpt]);
        spec.drops = 0;
        assert!(run_campaign(&spec, None, Some(1)).is_err());
        spec.drops = 1;
        spec.alpha_pct = 0.0;
        assert!(run_campaign(&spec, None, Some(1)).is_err());
        spec.alpha_pct = 95.0;
        spec.policies.clear();
        assert!(run_campaign(&spec, None, Some(1)).is_err());
    }

    #[test]
    fn failed_campaign_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut spec = CampaignSpec::new("test", small(3), vec![Policy::Cdfpt]);
        // more UEs than orthogonal pilots
        spec.scenario.frame = FrameConfig::dl_only(200, 2);
        spec.drops = 3;
        assert!(run_campaign(&spec, Some(&out), Some(1)).is_err());
        assert!(!out.exists());
    }
}
