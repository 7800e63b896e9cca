//! Over-the-air clock-bias calibration for AP triplets and chains of
//! triplets along a stripe.
//!
//! AP i transmits with clock bias t_i and receives with r_i. A pulse sent by
//! AP i at its local time zero is timestamped by AP j as δ_ij = t_i − r_j.
//! Only differences are observable: adding the same constant to every t and
//! r leaves all δ unchanged.

use num_traits::Num;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transmit and receive clock bias of one AP, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockBias<T> {
    pub t: T,
    pub r: T,
}

impl<T> ClockBias<T> {
    pub fn new(t: T, r: T) -> Self {
        Self { t, r }
    }
}

/// Arrival times δ_ij of a three-AP round; diagonal entries are unused.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestampMatrix<T> {
    pub delta: [[T; 3]; 3],
}

impl<T: Num + Copy> TimestampMatrix<T> {
    /// δ_ij with APs numbered 1..=3.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.delta[i - 1][j - 1]
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let mut delta = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    delta[i][j] = f(self.delta[i][j], other.delta[i][j]);
                }
            }
        }
        Self { delta }
    }
}

/// Recovered reciprocity errors t_i − r_i and pairwise sync errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult<T> {
    pub reciprocity: [T; 3],
    /// t1 − t2, t1 − t3, t2 − t3.
    pub sync: [T; 3],
}

impl<T: Num + Copy> CalibrationResult<T> {
    /// Ground truth for a given set of biases.
    pub fn from_biases(b: &[ClockBias<T>; 3]) -> Self {
        Self {
            reciprocity: [b[0].t - b[0].r, b[1].t - b[1].r, b[2].t - b[2].r],
            sync: [b[0].t - b[1].t, b[0].t - b[2].t, b[1].t - b[2].t],
        }
    }

    pub fn t1_minus_t2(&self) -> T {
        self.sync[0]
    }

    pub fn t1_minus_t3(&self) -> T {
        self.sync[1]
    }

    pub fn t2_minus_t3(&self) -> T {
        self.sync[2]
    }
}

/// Noise-free round with zero propagation delay.
pub fn measure_round<T: Num + Copy>(biases: &[ClockBias<T>; 3]) -> TimestampMatrix<T> {
    let mut delta = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                delta[i][j] = biases[i].t - biases[j].r;
            }
        }
    }
    TimestampMatrix { delta }
}

/// Round with known propagation delays `delay_s[i][j]` added to every
/// arrival and i.i.d. Gaussian timestamp noise of `sigma_s` seconds.
pub fn measure_round_with<R: Rng + ?Sized>(
    biases: &[ClockBias<f64>; 3],
    delay_s: &[[f64; 3]; 3],
    sigma_s: f64,
    rng: &mut R,
) -> Result<TimestampMatrix<f64>> {
    let noise = Normal::new(0.0, sigma_s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut m = measure_round(biases);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                m.delta[i][j] += delay_s[i][j] + noise.sample(rng);
            }
        }
    }
    Ok(m)
}

/// Removes known propagation delays before recovery.
pub fn compensate_delay(m: &TimestampMatrix<f64>, delay_s: &[[f64; 3]; 3]) -> TimestampMatrix<f64> {
    let mut out = *m;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                out.delta[i][j] -= delay_s[i][j];
            }
        }
    }
    out
}

/// Closed-form recovery from one round.
pub fn recover<T: Num + Copy>(m: &TimestampMatrix<T>) -> CalibrationResult<T> {
    let d = |i, j| m.get(i, j);
    CalibrationResult {
        reciprocity: [
            d(1, 2) + d(3, 1) - d(3, 2),
            d(2, 1) + d(3, 2) - d(3, 1),
            d(3, 1) + d(2, 3) - d(2, 1),
        ],
        sync: [d(1, 3) - d(2, 3), d(1, 2) - d(3, 2), d(2, 1) - d(3, 1)],
    }
}

/// Bias evolution between two rounds, up to a drift common to the group.
pub fn differential<T: Num + Copy>(first: &TimestampMatrix<T>, second: &TimestampMatrix<T>) -> CalibrationResult<T> {
    recover(&second.zip_with(first, |b, a| b - a))
}

/// A timestamp of a pulse from AP `tx` received by AP `rx` (0-based
/// positions within their groups).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub tx: usize,
    pub rx: usize,
    pub delta: T,
}

/// t_i^A − t_j^B = δ^{AB}_ik − δ^{BB}_jk for a common receiver k in group B.
pub fn intergroup_offset<T: Num + Copy>(ab: &Observation<T>, bb: &Observation<T>) -> Result<T> {
    if ab.rx != bb.rx {
        return Err(Error::MismatchedReceiver { first: ab.rx, second: bb.rx });
    }
    Ok(ab.delta - bb.delta)
}

/// Consecutive triplets covering `m` APs; the last one overlaps its
/// predecessor when `m` is not a multiple of three.
pub fn partition_triplets(m: usize) -> Result<Vec<[usize; 3]>> {
    if m < 3 {
        return Err(Error::InvalidConfig(format!("a calibration group needs 3 APs, got {m}")));
    }
    let mut groups: Vec<[usize; 3]> = (0..m / 3).map(|g| [3 * g, 3 * g + 1, 3 * g + 2]).collect();
    if m % 3 != 0 {
        groups.push([m - 3, m - 2, m - 1]);
    }
    Ok(groups)
}

/// Transmit-bias offsets of every AP in a chain of groups, relative to the
/// first AP of group 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCalibration<T> {
    /// Offset of AP 0 of group g relative to AP 0 of group 0.
    pub group_offsets: Vec<T>,
    /// Per group: t_i − t_0 within the group.
    pub within: Vec<[T; 3]>,
    pub reciprocity: Vec<[T; 3]>,
}

impl<T: Num + Copy> ChainCalibration<T> {
    /// t_i − t_0 of the first AP, for AP `i` of group `g`.
    pub fn offset(&self, g: usize, i: usize) -> T {
        self.group_offsets[g] + self.within[g][i]
    }
}

/// Calibrates each group with one round and links neighbors through a pulse
/// from AP 0 of group g − 1 heard by AP 1 of group g.
pub fn calibrate_chain<T: Num + Copy>(groups: &[[ClockBias<T>; 3]]) -> Result<ChainCalibration<T>> {
    if groups.is_empty() {
        return Err(Error::InvalidConfig("chain needs at least one group".into()));
    }
    let mut out = ChainCalibration { group_offsets: Vec::new(), within: Vec::new(), reciprocity: Vec::new() };
    for (g, biases) in groups.iter().enumerate() {
        let cal = recover(&measure_round(biases));
        let zero = T::zero();
        out.within.push([zero, zero - cal.t1_minus_t2(), zero - cal.t1_minus_t3()]);
        out.reciprocity.push(cal.reciprocity);
        if g == 0 {
            out.group_offsets.push(zero);
            continue;
        }
        let prev = &groups[g - 1];
        let k = 1;
        let ab = Observation { tx: 0, rx: k, delta: prev[0].t - biases[k].r };
        let bb = Observation { tx: 0, rx: k, delta: biases[0].t - biases[k].r };
        // t_0^{g−1} − t_0^{g}
        let step = intergroup_offset(&ab, &bb)?;
        let base = out.group_offsets[g - 1];
        out.group_offsets.push(base - step);
    }
    Ok(out)
}

/// Row of the chain demo table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncRow {
    pub group: usize,
    pub ap: usize,
    pub true_offset: f64,
    pub recovered_offset: f64,
    pub error: f64,
}

/// Random chain of `groups` triplets with noisy timestamps: recovered
/// offsets of every AP against the truth.
pub fn sync_demo(groups: usize, sigma_ns: f64, seed: u64) -> Result<Vec<SyncRow>> {
    if groups == 0 {
        return Err(Error::InvalidConfig("at least one group is required".into()));
    }
    let mut rng = crate::num::rng_for(seed, 5);
    let noise = Normal::new(0.0, sigma_ns * 1e-9).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let chain: Vec<[ClockBias<f64>; 3]> = (0..groups)
        .map(|_| {
            std::array::from_fn(|_| ClockBias::new(rng.gen_range(-1e-6..1e-6), rng.gen_range(-1e-6..1e-6)))
        })
        .collect();
    let mut rows = Vec::new();
    let mut base = 0.0;
    for (g, biases) in chain.iter().enumerate() {
        let mut m = measure_round(biases);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    m.delta[i][j] += noise.sample(&mut rng);
                }
            }
        }
        let cal = recover(&m);
        if g > 0 {
            let ab = Observation { tx: 0, rx: 1, delta: chain[g - 1][0].t - biases[1].r + noise.sample(&mut rng) };
            let bb = Observation { tx: 0, rx: 1, delta: m.delta[0][1] };
            base -= intergroup_offset(&ab, &bb)?;
        }
        let within = [0.0, -cal.t1_minus_t2(), -cal.t1_minus_t3()];
        for (i, w) in within.iter().enumerate() {
            let truth = biases[i].t - chain[0][0].t;
            let rec = base + w;
            rows.push(SyncRow { group: g, ap: i, true_offset: truth, recovered_offset: rec, error: rec - truth });
        }
    }
    Ok(rows)
}
