//! Max-min fairness DL power control.
//!
//! With x_lk = √(ρ_lk γ_lk) the closed-form SINR of every UE is a ratio
//! `n_k(x) / ‖w_k(x)‖` with `n_k` linear and `w_k` affine, and the per-AP
//! constraints become unit balls ‖x_l‖ ≤ 1. For a target λ = √t the set
//! {x : n_k(x) ≥ λ‖w_k(x)‖ ∀k} is a second-order cone, so
//!
//! ```text
//! F(λ) = max { z : n_k(x) − z ≥ λ‖w_k(x)‖ ∀k, ‖x_l‖ ≤ 1 ∀l }
//! ```
//!
//! is a convex program with F(λ) ≥ 0 exactly when t = λ² is achievable.
//! The outer loop keeps a certified bracket [lo, hi] on the optimal λ:
//! feasible points raise `lo` to their achieved min ratio (a Dinkelbach
//! step), and a probe just above `lo` whose barrier upper bound on F is
//! negative lowers `hi`. It stops when hi ≤ lo·√(1 + tol).
//!
//! Each F(λ) is solved with a log-barrier method. Its Newton system is the
//! sum of a block-diagonal part (one block per AP, diagonal plus rank one)
//! and a low-rank part (two vectors per UE plus one per co-pilot pair),
//! which is inverted with the Woodbury identity.

use nalgebra::{DMatrix, DVector};

use super::{all_aps, dl_sinr, PowerAllocation};
use crate::channel::{EstimateQuality, LargeScaleMatrix};
use crate::error::{Error, Result};
use crate::num::Matrix;
use crate::pilots::PilotAssignment;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxMinOptions {
    /// Relative tolerance on the max-min SINR.
    pub tol: f64,
    /// Cap on bracket updates.
    pub max_rounds: usize,
    /// Cap on Newton steps in one barrier centering.
    pub max_newton: usize,
}

impl Default for MaxMinOptions {
    fn default() -> Self {
        Self { tol: 1e-3, max_rounds: 100, max_newton: 300 }
    }
}

/// Max-min fairness over all APs.
pub fn maxmin(
    gamma: &EstimateQuality<f64>,
    beta: &LargeScaleMatrix<f64>,
    pilots: &PilotAssignment,
    rho_d: f64,
    opts: &MaxMinOptions,
) -> Result<PowerAllocation<f64>> {
    maxmin_with_subsets(gamma, beta, pilots, rho_d, None, opts)
}

/// Max-min fairness with ρ_lk pinned to zero for every l ∉ A_k.
pub fn maxmin_with_subsets(
    gamma: &EstimateQuality<f64>,
    beta: &LargeScaleMatrix<f64>,
    pilots: &PilotAssignment,
    rho_d: f64,
    subsets: Option<&[Vec<usize>]>,
    opts: &MaxMinOptions,
) -> Result<PowerAllocation<f64>> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidConfig("max-min tolerance must be positive".into()));
    }
    let (l_n, k_n) = (beta.num_aps(), beta.num_ues());
    let subsets: Vec<Vec<usize>> = match subsets {
        Some(s) => {
            let mut s = s.to_vec();
            s.iter_mut().for_each(|a| {
                a.sort_unstable();
                a.dedup();
            });
            s
        }
        None => all_aps(l_n, k_n),
    };
    if subsets.len() != k_n || subsets.iter().any(|a| a.is_empty() || a.iter().any(|&l| l >= l_n)) {
        return Err(Error::InvalidConfig("every UE needs a non-empty subset of valid APs".into()));
    }

    let mut problem = Problem::build(gamma, beta, pilots, rho_d, &subsets);
    let x_full = problem.full_power_point();
    problem.rescale(&x_full);

    let to_rho = |p: &Problem, x: &[f64]| {
        let mut rho = Matrix::filled(l_n, k_n, 0.0);
        for (v, xv) in x.iter().enumerate() {
            rho[(p.var_ap[v], p.var_ue[v])] = xv * xv / p.var_gamma[v];
        }
        rho
    };

    let tol_lambda = (1.0 + opts.tol).sqrt() - 1.0;
    let mut best = x_full;
    let mut lo = problem.min_ratio(&best);
    let mut hi = problem.ratio_upper_bound(gamma, beta, rho_d).max(lo);
    let interior = problem.interior_point();

    let mut rounds = 0;
    while hi > lo * (1.0 + tol_lambda) {
        rounds += 1;
        if rounds > opts.max_rounds {
            return Err(Error::Solver {
                stage: "bracket",
                iterations: rounds,
                gap: hi / lo - 1.0,
                target: lo * lo,
                reason: format!("bracket [{lo:.6e}, {hi:.6e}] did not close"),
            });
        }
        // Dinkelbach step at the best achieved ratio
        let gap = 0.1 * tol_lambda * lo.max(f64::MIN_POSITIVE);
        let lifted = problem.barrier(lo, &interior, Goal::Maximize { gap }, opts)?;
        let r = problem.min_ratio(&lifted.x);
        if r > lo {
            best = lifted.x;
            let progressed = r > lo * (1.0 + 0.5 * tol_lambda);
            lo = r;
            if progressed {
                continue;
            }
        }
        if hi <= lo * (1.0 + tol_lambda) {
            break;
        }
        // F barely positive at lo: check just above it
        let probe = lo * (1.0 + tol_lambda);
        let out = problem.barrier(probe, &interior, Goal::Sign, opts)?;
        if out.z > 0.0 {
            let r = problem.min_ratio(&out.x);
            if r > lo {
                best = out.x;
                lo = r.max(probe);
            }
        } else {
            hi = probe;
        }
    }

    let rho = to_rho(&problem, &best);
    let achieved = dl_sinr(&rho, gamma, beta, pilots, rho_d).into_iter().fold(f64::INFINITY, f64::min);
    Ok(PowerAllocation { rho, subsets, sinr_target: Some(achieved), ul_rho: vec![1.0; k_n] })
}

/// Half squared Newton decrement at which a centering step stops.
const CENTERING_TOL: f64 = 1e-8;
/// Relative residual and iteration cap of the preconditioned Newton solve.
const KRYLOV_TOL: f64 = 1e-10;
const KRYLOV_MAX: usize = 60;
/// Smallest Schur complement used by the preconditioner, relative to H_zz.
const SCHUR_FLOOR: f64 = 1e-10;
/// Decrement accepted when the Newton budget runs out.
const NEAR_CENTERED: f64 = 1e-3;
const MU_GROWTH: f64 = 10.0;
const MU_GROWTH_MIN: f64 = 1.1;

#[derive(Clone, Copy, Debug)]
enum Goal {
    /// Solve F(λ) to within an absolute gap.
    Maximize { gap: f64 },
    /// Stop as soon as the sign of F(λ) is certain.
    Sign,
}

struct Outcome {
    x: Vec<f64>,
    z: f64,
}

/// Scaled SOCP data. Variables are the active (AP, UE) pairs.
struct Problem {
    var_ap: Vec<usize>,
    var_ue: Vec<usize>,
    var_gamma: Vec<f64>,
    /// Variables of each AP that serves anyone.
    ap_vars: Vec<Vec<usize>>,
    /// Variables carrying UE k's stream.
    ue_vars: Vec<Vec<usize>>,
    /// n_k coefficients aligned with `ue_vars[k]`.
    signal: Vec<Vec<f64>>,
    /// Per UE and AP: weight of that AP's total power in ‖w_k‖².
    interf: Vec<Vec<f64>>,
    /// Per UE: (co-pilot UE, coefficients aligned with its `ue_vars`).
    contam: Vec<Vec<(usize, Vec<f64>)>>,
    noise2: Vec<f64>,
    /// Shared pilots make the sign of x matter, so x > 0 is enforced.
    nonneg: bool,
    num_aps: usize,
}

impl Problem {
    fn build(
        gamma: &EstimateQuality<f64>,
        beta: &LargeScaleMatrix<f64>,
        pilots: &PilotAssignment,
        rho_d: f64,
        subsets: &[Vec<usize>],
    ) -> Self {
        let (l_n, k_n) = (beta.num_aps(), beta.num_ues());
        let mut var_ap = Vec::new();
        let mut var_ue = Vec::new();
        let mut var_gamma = Vec::new();
        let mut ue_vars = vec![Vec::new(); k_n];
        let mut by_ap = vec![Vec::new(); l_n];
        for (k, subset) in subsets.iter().enumerate() {
            for &l in subset {
                let v = var_ap.len();
                var_ap.push(l);
                var_ue.push(k);
                var_gamma.push(gamma.get(l, k));
                ue_vars[k].push(v);
                by_ap[l].push(v);
            }
        }
        let ap_vars: Vec<Vec<usize>> = by_ap.into_iter().filter(|v| !v.is_empty()).collect();
        let signal = (0..k_n)
            .map(|k| ue_vars[k].iter().map(|&v| var_gamma[v].sqrt()).collect())
            .collect();
        let interf = (0..k_n).map(|k| (0..l_n).map(|l| beta.get(l, k)).collect()).collect();
        let copilots = pilots.copilots();
        let contam: Vec<Vec<(usize, Vec<f64>)>> = (0..k_n)
            .map(|k| {
                copilots[k]
                    .iter()
                    .map(|&j| {
                        let c = ue_vars[j]
                            .iter()
                            .map(|&v| {
                                let l = var_ap[v];
                                var_gamma[v].sqrt() * beta.get(l, k) / beta.get(l, j)
                            })
                            .collect();
                        (j, c)
                    })
                    .collect()
            })
            .collect();
        let nonneg = contam.iter().any(|c| !c.is_empty());
        Self {
            var_ap,
            var_ue,
            var_gamma,
            ap_vars,
            ue_vars,
            signal,
            interf,
            contam,
            noise2: vec![1.0 / rho_d; k_n],
            nonneg,
            num_aps: l_n,
        }
    }

    fn n(&self) -> usize {
        self.var_ap.len()
    }

    fn num_ues(&self) -> usize {
        self.ue_vars.len()
    }

    /// Divides UE k's signal and interference vector by ‖w_k(x)‖, making
    /// the cone data O(1) whatever the absolute path loss.
    fn rescale(&mut self, x: &[f64]) {
        let power = self.ap_power(x);
        for k in 0..self.num_ues() {
            let s = self.w2(k, x, &power).sqrt();
            let s2 = s * s;
            self.signal[k].iter_mut().for_each(|c| *c /= s);
            self.interf[k].iter_mut().for_each(|c| *c /= s2);
            for (_, c) in &mut self.contam[k] {
                c.iter_mut().for_each(|c| *c /= s);
            }
            self.noise2[k] /= s2;
        }
    }

    /// CD-FPT restricted to the active pairs: every serving AP at full power.
    fn full_power_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        for vars in &self.ap_vars {
            let total: f64 = vars.iter().map(|&v| self.var_gamma[v]).sum();
            for &v in vars {
                x[v] = (self.var_gamma[v] / total).sqrt();
            }
        }
        x
    }

    /// Full-power point shrunk to ‖x_l‖² = 0.8.
    fn interior_point(&self) -> Vec<f64> {
        let s = 0.8f64.sqrt();
        self.full_power_point().into_iter().map(|v| v * s).collect()
    }

    fn ap_power(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.num_aps];
        for (v, xv) in x.iter().enumerate() {
            p[self.var_ap[v]] += xv * xv;
        }
        p
    }

    fn n_k(&self, k: usize, x: &[f64]) -> f64 {
        self.ue_vars[k].iter().zip(&self.signal[k]).map(|(&v, c)| c * x[v]).sum()
    }

    fn contam_dot(&self, j: usize, c: &[f64], x: &[f64]) -> f64 {
        self.ue_vars[j].iter().zip(c).map(|(&v, c)| c * x[v]).sum()
    }

    fn w2(&self, k: usize, x: &[f64], power: &[f64]) -> f64 {
        let mut w2 = self.noise2[k];
        w2 += self.interf[k].iter().zip(power).map(|(a, p)| a * p).sum::<f64>();
        for (j, c) in &self.contam[k] {
            let d = self.contam_dot(*j, c, x);
            w2 += d * d;
        }
        w2
    }

    /// min_k √SINR_k at x (sign of x ignored when pilots are orthogonal).
    fn min_ratio(&self, x: &[f64]) -> f64 {
        let xs: Vec<f64> = if self.nonneg { x.to_vec() } else { x.iter().map(|v| v.abs()).collect() };
        let power = self.ap_power(&xs);
        (0..self.num_ues())
            .map(|k| self.n_k(k, &xs) / self.w2(k, &xs, &power).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// √ of a provable SINR bound: by Cauchy–Schwarz SINR_k < Σ_{l∈A_k} γ_lk/β_lk,
    /// and with no interference SINR_k ≤ ρ_d (Σ_{l∈A_k} √γ_lk)².
    fn ratio_upper_bound(&self, gamma: &EstimateQuality<f64>, beta: &LargeScaleMatrix<f64>, rho_d: f64) -> f64 {
        (0..self.num_ues())
            .map(|k| {
                let (mut cs, mut sq) = (0.0, 0.0);
                for &v in &self.ue_vars[k] {
                    let l = self.var_ap[v];
                    cs += gamma.get(l, k) / beta.get(l, k);
                    sq += gamma.get(l, k).sqrt();
                }
                cs.min(rho_d * sq * sq)
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Barrier parameter ν: 2 per cone, 1 per AP ball and sign constraint.
    fn nu(&self) -> f64 {
        (2 * self.num_ues() + self.ap_vars.len() + if self.nonneg { self.n() } else { 0 }) as f64
    }

    /// Barrier value, or `None` outside the domain.
    fn potential(&self, lambda: f64, mu: f64, x: &[f64], z: f64) -> Option<f64> {
        let power = self.ap_power(x);
        let mut phi = -mu * z;
        for vars in &self.ap_vars {
            let h = 1.0 - power[self.var_ap[vars[0]]];
            if !(h > 0.0) {
                return None;
            }
            phi -= h.ln();
        }
        if self.nonneg {
            for &xv in x {
                if !(xv > 0.0) {
                    return None;
                }
                phi -= xv.ln();
            }
        }
        for k in 0..self.num_ues() {
            let s = self.n_k(k, x) - z;
            let f = s * s - lambda * lambda * self.w2(k, x, &power);
            if !(s > 0.0 && f > 0.0) {
                return None;
            }
            phi -= f.ln();
        }
        phi.is_finite().then_some(phi)
    }

    fn start_z(&self, lambda: f64, x: &[f64]) -> f64 {
        let power = self.ap_power(x);
        let slack = (0..self.num_ues())
            .map(|k| self.n_k(k, x) - lambda * self.w2(k, x, &power).sqrt())
            .fold(f64::INFINITY, f64::min);
        slack - 0.5 * (1.0 + slack.abs())
    }

    /// Log-barrier maximization of z for a fixed λ.
    fn barrier(&self, lambda: f64, x0: &[f64], goal: Goal, opts: &MaxMinOptions) -> Result<Outcome> {
        let nu = self.nu();
        let mut x = x0.to_vec();
        let mut z = self.start_z(lambda, &x);
        let mut mu = 1.0;
        let mut growth = MU_GROWTH;
        let mut center: Option<(Vec<f64>, f64, f64)> = None;
        let mut newton_total = 0;
        'outer: loop {
            let mut steps = 0;
            loop {
                let step = self.newton_step(lambda, mu, &x, z).ok_or_else(|| Error::Solver {
                    stage: "newton",
                    iterations: newton_total,
                    gap: nu / mu,
                    target: lambda * lambda,
                    reason: "singular or indefinite Newton system".into(),
                })?;
                if step.decrement2 / 2.0 <= CENTERING_TOL {
                    break;
                }
                let phi0 = self.potential(lambda, mu, &x, z).expect("iterate inside the domain");
                let slope = -step.decrement2;
                let mut t = 1.0;
                let mut moved = false;
                for _ in 0..80 {
                    let xt: Vec<f64> = x.iter().zip(&step.dx).map(|(a, d)| a + t * d).collect();
                    let zt = z + t * step.dz;
                    if let Some(phi) = self.potential(lambda, mu, &xt, zt) {
                        if phi <= phi0 + 0.01 * t * slope {
                            x = xt;
                            z = zt;
                            moved = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                steps += 1;
                newton_total += 1;
                if !moved {
                    // no further progress at machine precision
                    break;
                }
                if matches!(goal, Goal::Sign) && z > 0.0 {
                    return Ok(Outcome { x, z });
                }
                if steps >= opts.max_newton {
                    if step.decrement2 < NEAR_CENTERED {
                        break;
                    }
                    if let Some((cx, cz, cmu)) = center.as_ref().filter(|_| growth > MU_GROWTH_MIN) {
                        // overshot: restart from the last center with a gentler increase
                        growth = growth.sqrt();
                        x.clone_from(cx);
                        z = *cz;
                        mu = cmu * growth;
                        continue 'outer;
                    }
                    return Err(Error::Solver {
                        stage: "centering",
                        iterations: newton_total,
                        gap: nu / mu,
                        target: lambda * lambda,
                        reason: format!("Newton decrement {:.3e} after {steps} steps", step.decrement2),
                    });
                }
            }
            let gap = nu / mu;
            match goal {
                Goal::Maximize { gap: want } if gap <= want => return Ok(Outcome { x, z }),
                // the factor two absorbs inexact centering
                Goal::Sign if z > 0.0 || z + 2.0 * gap < 0.0 || gap < 1e-14 => {
                    return Ok(Outcome { x, z });
                }
                _ => {}
            }
            center = Some((x.clone(), z, mu));
            mu *= growth;
        }
    }

    fn newton_step(&self, lambda: f64, mu: f64, x: &[f64], z: f64) -> Option<Step> {
        let n = self.n();
        let k_n = self.num_ues();
        let l2 = lambda * lambda;
        let power = self.ap_power(x);

        let mut gx = vec![0.0; n];
        let mut gz = -mu;
        let mut diag = vec![0.0; n];
        let mut hxz = vec![0.0; n];
        let mut hzz = 0.0;

        // per-AP balls
        let mut ap_h = vec![0.0; self.ap_vars.len()];
        for (a, vars) in self.ap_vars.iter().enumerate() {
            let h = 1.0 - power[self.var_ap[vars[0]]];
            ap_h[a] = h;
            for &v in vars {
                gx[v] += 2.0 * x[v] / h;
                diag[v] += 2.0 / h;
            }
        }
        if self.nonneg {
            for v in 0..n {
                gx[v] -= 1.0 / x[v];
                diag[v] += 1.0 / (x[v] * x[v]);
            }
        }

        // low-rank columns and their weights
        let rank = 2 * k_n + self.contam.iter().map(Vec::len).sum::<usize>();
        let mut u = DMatrix::<f64>::zeros(n, rank);
        let mut weights = Vec::with_capacity(rank);
        let mut col = 0;
        for k in 0..k_n {
            let s = self.n_k(k, x) - z;
            let lw2 = l2 * self.w2(k, x, &power);
            let f = s * s - lw2;
            // ĝ = s a − q with q = λ² MᵀM x
            let mut g_hat = vec![0.0; n];
            for v in 0..n {
                let w = self.interf[k][self.var_ap[v]];
                g_hat[v] = -l2 * w * x[v];
                diag[v] += 2.0 * l2 / f * w;
            }
            for (&v, c) in self.ue_vars[k].iter().zip(&self.signal[k]) {
                g_hat[v] += s * c;
            }
            for (j, c) in &self.contam[k] {
                let d = self.contam_dot(*j, c, x);
                for (&v, cv) in self.ue_vars[*j].iter().zip(c) {
                    g_hat[v] -= l2 * cv * d;
                }
            }
            for v in 0..n {
                gx[v] -= 2.0 / f * g_hat[v];
                hxz[v] -= 4.0 * s / (f * f) * g_hat[v];
            }
            for (&v, c) in self.ue_vars[k].iter().zip(&self.signal[k]) {
                hxz[v] += 2.0 / f * c;
            }
            gz += 2.0 * s / f;
            hzz += 2.0 * (s * s + lw2) / (f * f);

            u.set_column(col, &DVector::from_vec(g_hat));
            weights.push(4.0 / (f * f));
            col += 1;
            for (&v, c) in self.ue_vars[k].iter().zip(&self.signal[k]) {
                u[(v, col)] = *c;
            }
            weights.push(-2.0 / f);
            col += 1;
            for (j, c) in &self.contam[k] {
                for (&v, cv) in self.ue_vars[*j].iter().zip(c) {
                    u[(v, col)] = *cv;
                }
                weights.push(2.0 * l2 / f);
                col += 1;
            }
        }

        let blocks = BlockDiag { problem: self, diag: &diag, x, ap_h: &ap_h };
        let mut z_mat = u.clone();
        for c in 0..rank {
            blocks.solve_in_place(z_mat.column_mut(c).as_mut_slice());
        }
        let mut cap = u.tr_mul(&z_mat);
        for (i, w) in weights.iter().enumerate() {
            cap[(i, i)] += 1.0 / w;
        }
        let lu = cap.lu();

        let solve = |rhs: &[f64]| -> Option<Vec<f64>> {
            let mut y = rhs.to_vec();
            blocks.solve_in_place(&mut y);
            if rank > 0 {
                let proj = u.tr_mul(&DVector::from_column_slice(&y));
                let corr = lu.solve(&proj)?;
                let back = &z_mat * corr;
                for (yi, bi) in y.iter_mut().zip(back.iter()) {
                    *yi -= bi;
                }
            }
            Some(y)
        };
        let neg_gx: Vec<f64> = gx.iter().map(|g| -g).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let v2 = solve(&hxz).unwrap_or_else(|| vec![0.0; n]);
        // cancellation can wreck the Schur complement; GMRES repairs a floored one
        let schur = (hzz - dot(&hxz, &v2)).max(SCHUR_FLOOR * hzz);
        let coupled = |rx: &[f64], rz: f64| -> Option<(Vec<f64>, f64)> {
            let v1 = solve(rx)?;
            let dz = (rz - dot(&hxz, &v1)) / schur;
            Some((v1.iter().zip(&v2).map(|(a, b)| a - b * dz).collect(), dz))
        };
        let apply = |dx: &[f64], dz: f64| -> (Vec<f64>, f64) {
            let mut hx = blocks.apply(dx);
            let proj = u.tr_mul(&DVector::from_column_slice(dx));
            let scaled = DVector::from_iterator(rank, proj.iter().zip(&weights).map(|(p, w)| p * w));
            let low = &u * scaled;
            for ((h, l), c) in hx.iter_mut().zip(low.iter()).zip(&hxz) {
                *h += l + c * dz;
            }
            (hx, dot(&hxz, dx) + hzz * dz)
        };
        if schur > 0.0 {
            let mut rhs = neg_gx.clone();
            rhs.push(-gz);
            let system = |v: &[f64]| {
                let (mut hx, hz) = apply(&v[..n], v[n]);
                hx.push(hz);
                hx
            };
            let precond = |v: &[f64]| {
                coupled(&v[..n], v[n]).map(|(mut dx, dz)| {
                    dx.push(dz);
                    dx
                })
            };
            if let Some(sol) = gmres(system, precond, &rhs, KRYLOV_TOL, KRYLOV_MAX) {
                let (dx, dz) = (sol[..n].to_vec(), sol[n]);
                let decrement2 = -(dot(&gx, &dx) + gz * dz);
                if decrement2.is_finite() && decrement2 > 0.0 {
                    return Some(Step { dx, dz, decrement2 });
                }
            }
        }
        // lost precision in the z coupling: split into an x step and a z step
        let v1 = solve(&neg_gx)?;
        let dec_x = dot(&neg_gx, &v1);
        if dec_x.is_finite() && dec_x > 0.0 {
            return Some(Step { dx: v1, dz: 0.0, decrement2: dec_x });
        }
        let dz = -gz / hzz;
        Some(Step { dx: vec![0.0; n], dz, decrement2: gz * gz / hzz })
    }
}

/// Right-preconditioned GMRES started from `precond(rhs)`.
fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Option<Vec<f64>>,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let target = tol * norm(rhs);
    let mut x = precond(rhs)?;
    let ax = apply(&x);
    let r0: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let beta = norm(&r0);
    if !beta.is_finite() {
        return None;
    }
    if beta <= target {
        return Some(x);
    }
    let mut basis = vec![r0.into_iter().map(|v| v / beta).collect::<Vec<f64>>()];
    let mut pre: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new();
    let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut g = vec![beta];
    for j in 0..max_iter {
        let zj = precond(&basis[j])?;
        let mut w = apply(&zj);
        pre.push(zj);
        let mut col = vec![0.0; j + 2];
        for (i, b) in basis.iter().enumerate() {
            let hij: f64 = w.iter().zip(b).map(|(a, c)| a * c).sum();
            col[i] = hij;
            w.iter_mut().zip(b).for_each(|(a, c)| *a -= hij * c);
        }
        let wn = norm(&w);
        col[j + 1] = wn;
        for i in 0..j {
            let (a, b) = (col[i], col[i + 1]);
            col[i] = cs[i] * a + sn[i] * b;
            col[i + 1] = -sn[i] * a + cs[i] * b;
        }
        let r = col[j].hypot(col[j + 1]);
        if !(r > 0.0) {
            break;
        }
        cs.push(col[j] / r);
        sn.push(col[j + 1] / r);
        col[j] = r;
        col[j + 1] = 0.0;
        g.push(-sn[j] * g[j]);
        g[j] *= cs[j];
        h.push(col);
        let done = g[j + 1].abs() <= target || !(wn > 0.0);
        if done || j + 1 == max_iter {
            break;
        }
        basis.push(w.into_iter().map(|v| v / wn).collect());
    }
    // back substitution on the triangular Hessenberg factor
    let m = h.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = g[i];
        for k in i + 1..m {
            acc -= h[k][i] * y[k];
        }
        y[i] = acc / h[i][i];
    }
    for (yi, zi) in y.iter().zip(&pre) {
        x.iter_mut().zip(zi).for_each(|(a, b)| *a += yi * b);
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct Step {
    dx: Vec<f64>,
    dz: f64,
    decrement2: f64,
}

/// Per-AP blocks `diag + (4/h²) x_l x_lᵀ`, inverted by Sherman–Morrison.
struct BlockDiag<'a> {
    problem: &'a Problem,
    diag: &'a [f64],
    x: &'a [f64],
    ap_h: &'a [f64],
}

impl BlockDiag<'_> {
    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = y.iter().zip(self.diag).map(|(a, d)| a * d).collect();
        for (a, vars) in self.problem.ap_vars.iter().enumerate() {
            let h = self.ap_h[a];
            let xy: f64 = vars.iter().map(|&v| self.x[v] * y[v]).sum();
            for &v in vars {
                out[v] += 4.0 / (h * h) * xy * self.x[v];
            }
        }
        out
    }

    fn solve_in_place(&self, y: &mut [f64]) {
        for (a, vars) in self.problem.ap_vars.iter().enumerate() {
            let h = self.ap_h[a];
            let coef = 4.0 / (h * h);
            let (mut uy, mut uu) = (0.0, 0.0);
            for &v in vars {
                y[v] /= self.diag[v];
                uy += self.x[v] * y[v];
                uu += self.x[v] * self.x[v] / self.diag[v];
            }
            let scale = coef * uy / (1.0 + coef * uu);
            for &v in vars {
                y[v] -= scale * self.x[v] / self.diag[v];
            }
        }
    }
}
