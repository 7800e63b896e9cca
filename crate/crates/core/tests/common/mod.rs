#![allow(dead_code)]

use cellfree::channel::{EstimateQuality, LargeScaleMatrix};
use cellfree::num::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SINR of every UE written out term by term from the closed-form bound,
/// for orthogonal (`pilot_of` all distinct) or shared pilots.
pub fn oracle_sinr(rho: &[Vec<f64>], gamma: &[Vec<f64>], beta: &[Vec<f64>], pilot_of: &[usize], rho_d: f64) -> Vec<f64> {
    let l_n = beta.len();
    let k_n = beta[0].len();
    let mut out = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let num: f64 = (0..l_n).map(|l| rho[l][k].sqrt() * gamma[l][k]).sum::<f64>().powi(2);
        let mut den = 1.0;
        for j in 0..k_n {
            if j != k && pilot_of[j] == pilot_of[k] {
                let c: f64 = (0..l_n).map(|l| rho[l][j].sqrt() * gamma[l][j] * beta[l][k] / beta[l][j]).sum();
                den += rho_d * c * c;
            }
            for l in 0..l_n {
                den += rho_d * rho[l][j] * gamma[l][j] * beta[l][k];
            }
        }
        out.push(rho_d * num / den);
    }
    out
}

/// Random two-AP, two-UE instance with orthogonal pilots.
pub struct Tiny {
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub rho_d: f64,
}

impl Tiny {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tp = 10.0;
        let beta: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| 10f64.powf(rng.gen_range(-2.0..0.0))).collect()).collect();
        let gamma = beta.iter().map(|row| row.iter().map(|b| tp * b * b / (tp * b + 1.0)).collect()).collect();
        Self { beta, gamma, rho_d: 10f64.powf(rng.gen_range(0.0..2.0)) }
    }

    pub fn beta_matrix(&self) -> LargeScaleMatrix<f64> {
        LargeScaleMatrix::new(Matrix::from_fn(2, 2, |l, k| self.beta[l][k])).unwrap()
    }

    pub fn gamma_matrix(&self) -> EstimateQuality<f64> {
        EstimateQuality { gamma: Matrix::from_fn(2, 2, |l, k| self.gamma[l][k]) }
    }

    fn min_sinr_polar(&self, p: &[f64; 4]) -> f64 {
        // AP l spends r_l² of its budget, split by angle θ_l
        let mut rho = vec![vec![0.0; 2]; 2];
        for l in 0..2 {
            let (r, th) = (p[2 * l], p[2 * l + 1]);
            rho[l][0] = (r * th.cos()).powi(2) / self.gamma[l][0];
            rho[l][1] = (r * th.sin()).powi(2) / self.gamma[l][1];
        }
        oracle_sinr(&rho, &self.gamma, &self.beta, &[0, 1], self.rho_d).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Max-min SINR by a 21⁴ grid over (r_1, θ_1, r_2, θ_2) followed by
    /// five zoomed-in regrids around the incumbent.
    pub fn grid_search(&self) -> f64 {
        let upper = [1.0, std::f64::consts::FRAC_PI_2, 1.0, std::f64::consts::FRAC_PI_2];
        let n = 21;
        let mut lo = [0.0; 4];
        let mut hi = upper;
        let mut best = (f64::NEG_INFINITY, [0.0; 4]);
        for _ in 0..6 {
            let step: Vec<f64> = (0..4).map(|i| (hi[i] - lo[i]) / (n - 1) as f64).collect();
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let p = [
                                lo[0] + a as f64 * step[0],
                                lo[1] + b as f64 * step[1],
                                lo[2] + c as f64 * step[2],
                                lo[3] + d as f64 * step[3],
                            ];
                            let v = self.min_sinr_polar(&p);
                            if v > best.0 {
                                best = (v, p);
                            }
                        }
                    }
                }
            }
            for i in 0..4 {
                lo[i] = (best.1[i] - 2.0 * step[i]).max(0.0);
                hi[i] = (best.1[i] + 2.0 * step[i]).min(upper[i]);
            }
        }
        best.0
    }
}
