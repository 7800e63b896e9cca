//! UL pilot assignment over a codebook of `tau_up` mutually orthogonal
//! sequences. Sequences are never materialized: orthonormality means the
//! closed-form quantities only ever need the index map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{estimate_quality, LargeScaleMatrix};
use crate::error::{Error, Result};
use crate::num::{rng_for, Real};
use crate::power::{cdfpt, dl_sinr};
use crate::scenario::{FrameConfig, Layout, ScenarioConfig};

pub(crate) const PILOT_STREAM: u64 = 4;

/// Largest pilot search space the brute-force strategy accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotAssignment {
    pub pilot_of: Vec<usize>,
    pub tau_up: usize,
}

impl PilotAssignment {
    pub fn new(pilot_of: Vec<usize>, tau_up: usize) -> Result<Self> {
        if let Some(p) = pilot_of.iter().find(|&&p| p >= tau_up) {
            return Err(Error::InvalidConfig(format!("pilot index {p} outside codebook of {tau_up}")));
        }
        Ok(Self { pilot_of, tau_up })
    }

    /// Identity map; needs `tau_up >= k`.
    pub fn orthogonal(k: usize, tau_up: usize) -> Result<Self> {
        if tau_up < k {
            return Err(Error::InvalidConfig(format!(
                "{k} UEs cannot have orthogonal pilots from a codebook of {tau_up}"
            )));
        }
        Self::new((0..k).collect(), tau_up)
    }

    pub fn num_ues(&self) -> usize {
        self.pilot_of.len()
    }

    /// c(k, k'): whether the two UEs share a pilot (reflexive).
    #[inline]
    pub fn shares_pilot(&self, k: usize, j: usize) -> bool {
        self.pilot_of[k] == self.pilot_of[j]
    }

    /// UEs on each pilot index, in UE order.
    pub fn copilot_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.tau_up];
        for (k, &p) in self.pilot_of.iter().enumerate() {
            groups[p].push(k);
        }
        groups
    }

    /// For each UE, the other UEs that share its pilot.
    pub fn copilots(&self) -> Vec<Vec<usize>> {
        let groups = self.copilot_groups();
        (0..self.num_ues())
            .map(|k| groups[self.pilot_of[k]].iter().copied().filter(|&j| j != k).collect())
            .collect()
    }

    pub fn is_injective(&self) -> bool {
        self.copilot_groups().iter().all(|g| g.len() <= 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotStrategy {
    Orthogonal,
    Random,
    Greedy,
    Bruteforce,
    Structured,
}

impl std::str::FromStr for PilotStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "orthogonal" => Self::Orthogonal,
            "random" => Self::Random,
            "greedy" => Self::Greedy,
            "bruteforce" => Self::Bruteforce,
            "structured" => Self::Structured,
            other => return Err(Error::UnknownName { kind: "pilot strategy", name: other.into() }),
        })
    }
}

impl std::fmt::Display for PilotStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Orthogonal => "orthogonal",
            Self::Random => "random",
            Self::Greedy => "greedy",
            Self::Bruteforce => "bruteforce",
            Self::Structured => "structured",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    MaxMin,
    Sum,
}

/// Inputs needed to score an assignment with the closed-form DL SE under CD-FPT.
#[derive(Clone, Copy, Debug)]
pub struct PilotContext<'a, T> {
    pub beta: &'a LargeScaleMatrix<T>,
    pub frame: &'a FrameConfig,
    pub pilot_snr: T,
    pub rho_d: T,
}

impl<T: Real> PilotContext<'_, T> {
    /// Per-UE closed-form SE under CD-FPT for `pilots`.
    pub fn cdfpt_se(&self, pilots: &PilotAssignment) -> Vec<T> {
        let gamma = estimate_quality(self.beta, pilots, self.frame, self.pilot_snr);
        let alloc = cdfpt(&gamma);
        let prelog: T = self.frame.prelog();
        dl_sinr(&alloc.rho, &gamma, self.beta, pilots, self.rho_d)
            .into_iter()
            .map(|s| prelog * (T::one() + s).log2())
            .collect()
    }

    fn utility(&self, pilots: &PilotAssignment, utility: Utility) -> T {
        let se = self.cdfpt_se(pilots);
        match utility {
            Utility::MaxMin => min_of(&se),
            Utility::Sum => se.into_iter().sum(),
        }
    }
}

fn min_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::infinity(), T::min)
}

/// Each UE independently draws one of the `tau_up` pilots.
pub fn assign_random(k: usize, tau_up: usize, seed: u64) -> PilotAssignment {
    let tau_up = tau_up.max(1);
    let mut rng = rng_for(seed, PILOT_STREAM);
    PilotAssignment { pilot_of: (0..k).map(|_| rng.gen_range(0..tau_up)).collect(), tau_up }
}

/// Random start, then repeated single-UE reassignments.
///
/// Each iteration visits UEs from the lowest CD-FPT SE upwards and moves the
/// first UE whose least-loaded pilot (smallest Σ_l β_lk' over the UEs already
/// on it) is strictly less loaded than its current one, provided the minimum
/// SE does not drop. The search stops after `iters` moves or when no UE has
/// such a move.
pub fn assign_greedy<T: Real>(
    ctx: &PilotContext<'_, T>,
    tau_up: usize,
    iters: usize,
    seed: u64,
) -> PilotAssignment {
    let k_n = ctx.beta.num_ues();
    let mut current = assign_random(k_n, tau_up, seed);
    let strength: Vec<T> = (0..k_n).map(|k| ctx.beta.beta.column(k).sum()).collect();
    for _ in 0..iters {
        let se = ctx.cdfpt_se(&current);
        let floor = min_of(&se);
        let mut order: Vec<usize> = (0..k_n).collect();
        order.sort_by(|&a, &b| se[a].partial_cmp(&se[b]).unwrap().then(a.cmp(&b)));

        let mut moved = false;
        for &k in &order {
            let mut load = vec![T::zero(); current.tau_up];
            for (j, &p) in current.pilot_of.iter().enumerate() {
                if j != k {
                    load[p] = load[p] + strength[j];
                }
            }
            let best = (0..current.tau_up)
                .fold(0, |best, p| if load[p] < load[best] { p } else { best });
            if !(load[best] < load[current.pilot_of[k]]) {
                continue;
            }
            let mut trial = current.clone();
            trial.pilot_of[k] = best;
            if min_of(&ctx.cdfpt_se(&trial)) >= floor {
                current = trial;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    current
}

/// Exhaustive search; assignments are enumerated lexicographically (UE 0
/// most significant) and the first maximizer wins.
pub fn assign_bruteforce<T: Real>(
    ctx: &PilotContext<'_, T>,
    tau_up: usize,
    utility: Utility,
) -> Result<PilotAssignment> {
    let k_n = ctx.beta.num_ues();
    let tau_up = tau_up.max(1);
    let space = (tau_up as f64).powi(k_n as i32);
    if space > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::InstanceTooLarge { assignments: space, limit: BRUTE_FORCE_LIMIT });
    }
    let mut trial = PilotAssignment { pilot_of: vec![0; k_n], tau_up };
    let mut best = (ctx.utility(&trial, utility), trial.clone());
    loop {
        // odometer increment, last UE fastest
        let mut pos = k_n;
        loop {
            if pos == 0 {
                return Ok(best.1);
            }
            pos -= 1;
            trial.pilot_of[pos] += 1;
            if trial.pilot_of[pos] < tau_up {
                break;
            }
            trial.pilot_of[pos] = 0;
        }
        let u = ctx.utility(&trial, utility);
        if u > best.0 {
            best = (u, trial.clone());
        }
    }
}

/// Greedy spatial colouring: UEs in index order take the pilot whose current
/// users are farthest away (minimum distance), lowest index on ties.
pub fn assign_structured<T: Real>(
    layout: &Layout<T>,
    config: &ScenarioConfig,
    tau_up: usize,
) -> PilotAssignment {
    let tau_up = tau_up.max(1);
    let area = config.area::<T>();
    let ues = &layout.ue_positions;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); tau_up];
    let mut pilot_of = Vec::with_capacity(ues.len());
    for k in 0..ues.len() {
        let sep = |g: &Vec<usize>| {
            g.iter().map(|&j| area.distance(&ues[k], &ues[j])).fold(T::infinity(), T::min)
        };
        let mut best = 0;
        let mut best_sep = sep(&groups[0]);
        for (p, g) in groups.iter().enumerate().skip(1) {
            let s = sep(g);
            if s > best_sep {
                best = p;
                best_sep = s;
            }
        }
        groups[best].push(k);
        pilot_of.push(best);
    }
    PilotAssignment { pilot_of, tau_up }
}

/// Dispatches to one of the strategies. Greedy runs at most `4 K` moves.
pub fn assign<T: Real>(
    strategy: PilotStrategy,
    ctx: &PilotContext<'_, T>,
    layout: &Layout<T>,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<PilotAssignment> {
    let k_n = ctx.beta.num_ues();
    let tau_up = config.frame.tau_up as usize;
    Ok(match strategy {
        PilotStrategy::Orthogonal => PilotAssignment::orthogonal(k_n, tau_up)?,
        PilotStrategy::Random => assign_random(k_n, tau_up, seed),
        PilotStrategy::Greedy => assign_greedy(ctx, tau_up, 4 * k_n, seed),
        PilotStrategy::Bruteforce => assign_bruteforce(ctx, tau_up, Utility::MaxMin)?,
        PilotStrategy::Structured => assign_structured(layout, config, tau_up),
    })
}
