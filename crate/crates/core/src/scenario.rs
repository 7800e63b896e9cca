//! Deployment geometry, UE drops, TDD frame bookkeeping and the shipped
//! scenario presets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::PathLossParams;
use crate::error::{Error, Result};
use crate::num::{rng_for, Real};

const INDOOR_JSON: &str = include_str!("../presets/indoor.json");
const PIAZZA_JSON: &str = include_str!("../presets/piazza.json");

/// RNG sub-stream used for UE placement.
pub(crate) const UE_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deployment {
    /// √L × √L lattice covering the area.
    Grid,
    /// L/4 equally spaced APs along each side of the area.
    Perimeter,
}

/// TDD frame partition in samples per coherence interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub tau: u32,
    /// UL pilot samples.
    pub tau_up: u32,
    /// UL data samples.
    pub tau_ud: u32,
    /// DL pilot samples.
    pub tau_dp: u32,
    /// DL data samples.
    pub tau_dd: u32,
}

impl FrameConfig {
    /// Frame with only UL pilots and DL data, the layout used by every preset.
    pub fn dl_only(tau: u32, tau_up: u32) -> Self {
        Self { tau, tau_up, tau_ud: 0, tau_dp: 0, tau_dd: tau.saturating_sub(tau_up) }
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.tau_up as u64 + self.tau_ud as u64 + self.tau_dp as u64 + self.tau_dd as u64;
        if sum != self.tau as u64 {
            return Err(Error::InvalidConfig(format!(
                "frame partition sums to {sum}, expected tau = {}",
                self.tau
            )));
        }
        if self.tau_up < 1 {
            return Err(Error::InvalidConfig("tau_up must be at least 1".into()));
        }
        Ok(())
    }

    /// Fraction of the frame not spent on UL pilots.
    pub fn prelog<T: Real>(&self) -> T {
        if self.tau == 0 {
            return T::zero();
        }
        T::one() - T::lit(self.tau_up as f64) / T::lit(self.tau as f64)
    }
}

/// Complete description of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub deployment: Deployment,
    pub num_aps: usize,
    pub num_ues: usize,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub wrap_around: bool,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub max_ap_power_w: f64,
    pub pilot_power_w: f64,
    #[serde(default = "default_noise_figure")]
    pub noise_figure_db: f64,
    pub pathloss: PathLossParams,
    pub frame: FrameConfig,
    /// Bits per complex sample on the stripe bus.
    #[serde(default = "default_bits_per_sample")]
    pub bits_per_sample: u32,
}

fn default_noise_figure() -> f64 {
    9.0
}

fn default_bits_per_sample() -> u32 {
    32
}

impl ScenarioConfig {
    /// Looks up a shipped preset by name (`indoor` or `piazza`).
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "indoor" => INDOOR_JSON,
            "piazza" => PIAZZA_JSON,
            other => return Err(Error::UnknownName { kind: "scenario preset", name: other.into() }),
        };
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.num_aps < 1 {
            return bad("num_aps must be at least 1");
        }
        if self.num_ues < 1 {
            return bad("num_ues must be at least 1");
        }
        if !(self.max_ap_power_w > 0.0 && self.pilot_power_w > 0.0) {
            return bad("powers must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.area_width_m >= 0.0 && self.area_height_m >= 0.0) {
            return bad("area dimensions must be non-negative");
        }
        match self.deployment {
            Deployment::Grid => {
                if grid_side(self.num_aps).is_none() {
                    return Err(Error::NonSquareGrid(self.num_aps));
                }
            }
            Deployment::Perimeter => {
                if self.num_aps % 4 != 0 {
                    return Err(Error::PerimeterNotDivisible(self.num_aps));
                }
            }
        }
        self.pathloss.validate()?;
        self.frame.validate()
    }

    pub fn area<T: Real>(&self) -> Area<T> {
        Area {
            width: T::lit(self.area_width_m),
            height: T::lit(self.area_height_m),
            wrap_around: self.wrap_around,
        }
    }

    /// Thermal noise power in watts: −174 dBm/Hz over the bandwidth plus the noise figure.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }

    /// Normalized DL SNR ρ_d = P_max / noise.
    pub fn rho_d(&self) -> f64 {
        self.max_ap_power_w / self.noise_power_w()
    }

    /// Normalized UL pilot SNR ρ_p = pilot power / noise.
    pub fn pilot_snr(&self) -> f64 {
        self.pilot_power_w / self.noise_power_w()
    }
}

fn grid_side(l: usize) -> Option<usize> {
    let s = (l as f64).sqrt().round() as usize;
    (s * s == l).then_some(s)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }
}

/// Rectangular simulation area, optionally wrapped into a torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Area<T> {
    pub width: T,
    pub height: T,
    pub wrap_around: bool,
}

impl<T: Real> Area<T> {
    /// 3D distance; with wrap-around the horizontal part is the minimum over
    /// the nine shifted copies of the area.
    pub fn distance(&self, a: &Point3<T>, b: &Point3<T>) -> T {
        let (mut dx, mut dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
        if self.wrap_around {
            let mut best = dx * dx + dy * dy;
            for sx in [-T::one(), T::zero(), T::one()] {
                for sy in [-T::one(), T::zero(), T::one()] {
                    let ex = a.x - b.x + sx * self.width;
                    let ey = a.y - b.y + sy * self.height;
                    let d2 = ex * ex + ey * ey;
                    if d2 < best {
                        best = d2;
                        dx = ex.abs();
                        dy = ey.abs();
                    }
                }
            }
        }
        let dz = a.z - b.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn contains(&self, p: &Point3<T>) -> bool {
        p.x >= T::zero() && p.y >= T::zero() && p.x <= self.width && p.y <= self.height
    }
}

pub fn distance<T: Real>(p1: &Point3<T>, p2: &Point3<T>, config: &ScenarioConfig) -> T {
    config.area::<T>().distance(p1, p2)
}

/// AP and UE positions of one drop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout<T> {
    pub ap_positions: Vec<Point3<T>>,
    pub ue_positions: Vec<Point3<T>>,
}

impl<T: Real> Layout<T> {
    pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        Ok(Self { ap_positions: place_aps(config)?, ue_positions: place_ues(config, seed) })
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }
}

pub fn place_aps<T: Real>(config: &ScenarioConfig) -> Result<Vec<Point3<T>>> {
    let l = config.num_aps;
    let (w, h, z) = (config.area_width_m, config.area_height_m, config.ap_height_m);
    let pts = match config.deployment {
        Deployment::Grid => {
            let side = grid_side(l).ok_or(Error::NonSquareGrid(l))?;
            let (sx, sy) = (w / side as f64, h / side as f64);
            let mut pts = Vec::with_capacity(l);
            for j in 0..side {
                for i in 0..side {
                    pts.push((sx * (i as f64 + 0.5), sy * (j as f64 + 0.5)));
                }
            }
            pts
        }
        Deployment::Perimeter => {
            if l % 4 != 0 {
                return Err(Error::PerimeterNotDivisible(l));
            }
            let n = l / 4;
            let (sx, sy) = (w / n as f64, h / n as f64);
            let mut pts = Vec::with_capacity(l);
            // counter-clockwise from the origin corner, each side starting at its own corner
            pts.extend((0..n).map(|j| (sx * j as f64, 0.0)));
            pts.extend((0..n).map(|j| (w, sy * j as f64)));
            pts.extend((0..n).map(|j| (w - sx * j as f64, h)));
            pts.extend((0..n).map(|j| (0.0, h - sy * j as f64)));
            pts
        }
    };
    Ok(pts.into_iter().map(|(x, y)| Point3::new(T::lit(x), T::lit(y), T::lit(z))).collect())
}

/// K i.i.d. uniform UE positions; deterministic in `seed`.
pub fn place_ues<T: Real>(config: &ScenarioConfig, seed: u64) -> Vec<Point3<T>> {
    let mut rng = rng_for(seed, UE_STREAM);
    (0..config.num_ues)
        .map(|_| {
            let x = rng.gen::<f64>() * config.area_width_m;
            let y = rng.gen::<f64>() * config.area_height_m;
            Point3::new(T::lit(x), T::lit(y), T::lit(config.ue_height_m))
        })
        .collect()
}

pub fn prelog<T: Real>(frame: &FrameConfig) -> T {
    frame.prelog()
}


#[cfg(test)]
pub(crate) use tests::config as test_config;
