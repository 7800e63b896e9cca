//! Sequential compute-and-forward processing along a radio stripe.
//!
//! Every APU only sees its own channel estimates and power coefficients plus
//! the K stream samples on the shared bus.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cn01, rng_for, Cx, Real};

/// One complex sample per UE stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamFrame<T> {
    pub streams: Vec<Cx<T>>,
}

impl<T: Real> StreamFrame<T> {
    pub fn zeros(k: usize) -> Self {
        Self { streams: vec![Cx::new(T::zero(), T::zero()); k] }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

/// Local state of the m-th APU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApuState<T> {
    pub index: usize,
    pub g_hat: Vec<Cx<T>>,
    pub sqrt_rho: Vec<T>,
}

impl<T: Real> ApuState<T> {
    pub fn new(index: usize, g_hat: Vec<Cx<T>>, sqrt_rho: Vec<T>) -> Result<Self> {
        if g_hat.len() != sqrt_rho.len() {
            return Err(Error::InvalidConfig("estimate and coefficient counts differ".into()));
        }
        if sqrt_rho.iter().any(|r| !(*r >= T::zero())) {
            return Err(Error::InvalidConfig("power coefficients must be non-negative".into()));
        }
        Ok(Self { index, g_hat, sqrt_rho })
    }
}

/// Σ_k √ρ_mk ĝ*_mk q_k.
pub fn dl_transmit<T: Real>(apu: &ApuState<T>, frame: &StreamFrame<T>) -> Cx<T> {
    apu.g_hat
        .iter()
        .zip(&apu.sqrt_rho)
        .zip(&frame.streams)
        .fold(Cx::new(T::zero(), T::zero()), |acc, ((g, r), q)| acc + g.conj() * q * *r)
}

/// Adds this APU's combined sample ĝ*_mk y_m to each upstream stream.
pub fn ul_accumulate<T: Real>(apu: &ApuState<T>, received: Cx<T>, upstream: &StreamFrame<T>) -> StreamFrame<T> {
    StreamFrame {
        streams: upstream.streams.iter().zip(&apu.g_hat).map(|(u, g)| u + g.conj() * received).collect(),
    }
}

/// APUs in bus order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stripe<T> {
    apus: Vec<ApuState<T>>,
    num_streams: usize,
}

impl<T: Real> Stripe<T> {
    pub fn new(apus: Vec<ApuState<T>>) -> Result<Self> {
        let num_streams = apus.first().map_or(0, |a| a.g_hat.len());
        if apus.iter().any(|a| a.g_hat.len() != num_streams) {
            return Err(Error::InvalidConfig("every APU must carry the same number of streams".into()));
        }
        if apus.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(Error::InvalidConfig("APU indices must increase along the stripe".into()));
        }
        Ok(Self { apus, num_streams })
    }

    pub fn apus(&self) -> &[ApuState<T>] {
        &self.apus
    }

    pub fn len(&self) -> usize {
        self.apus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apus.is_empty()
    }

    /// Transmit sample of every APU.
    pub fn downlink(&self, frame: &StreamFrame<T>) -> Vec<Cx<T>> {
        self.apus.iter().map(|a| dl_transmit(a, frame)).collect()
    }

    /// Runs the UL bus from `upstream`; `received[m]` is APU m's antenna sample.
    pub fn uplink_from(&self, received: &[Cx<T>], upstream: StreamFrame<T>) -> Result<StreamFrame<T>> {
        if received.len() != self.apus.len() || upstream.len() != self.num_streams {
            return Err(Error::InvalidConfig("sample counts do not match the stripe".into()));
        }
        Ok(self.apus.iter().zip(received).fold(upstream, |bus, (a, y)| ul_accumulate(a, *y, &bus)))
    }

    pub fn uplink(&self, received: &[Cx<T>]) -> Result<StreamFrame<T>> {
        self.uplink_from(received, StreamFrame::zeros(self.num_streams))
    }
}

/// Bus capacity needed at maximum load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FronthaulRequirement {
    pub streams: usize,
    pub bits_per_second: f64,
}

pub fn fronthaul_requirement(active_streams_per_frame: &[usize], bandwidth_hz: f64, bits_per_sample: u32) -> FronthaulRequirement {
    let streams = active_streams_per_frame.iter().copied().max().unwrap_or(0);
    FronthaulRequirement { streams, bits_per_second: streams as f64 * bandwidth_hz * bits_per_sample as f64 }
}

/// Number of UEs with at least one serving AP in `segment`.
pub fn served_streams(subsets: &[Vec<usize>], segment: Range<usize>) -> usize {
    subsets.iter().filter(|a| a.iter().any(|l| segment.contains(l))).count()
}

/// Splits APs `0..num_aps` into consecutive stripes of `per_stripe` APs.
pub fn segments(num_aps: usize, per_stripe: usize) -> Vec<Range<usize>> {
    let per_stripe = per_stripe.max(1);
    (0..num_aps).step_by(per_stripe).map(|s| s..(s + per_stripe).min(num_aps)).collect()
}

/// Largest relative deviation between the stripe pipeline and centralized
/// processing over `frames` random frames: UL MR combining and the DL
/// signal received through a random channel.
pub fn verify_against_centralized(l: usize, k: usize, frames: usize, seed: u64) -> Result<f64> {
    if l == 0 || k == 0 {
        return Err(Error::InvalidConfig("stripe needs at least one APU and one stream".into()));
    }
    let mut rng = rng_for(seed, 6);
    let mut worst: f64 = 0.0;
    for _ in 0..frames {
        let g_hat = DMatrix::from_fn(l, k, |_, _| cn01::<f64, _>(&mut rng));
        let sqrt_rho = DMatrix::from_fn(l, k, |_, _| rand::Rng::gen_range(&mut rng, 0.0..1.0f64));
        let apus = (0..l)
            .map(|m| ApuState::new(m, g_hat.row(m).iter().copied().collect(), sqrt_rho.row(m).iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        let stripe = Stripe::new(apus)?;

        let y = DVector::from_fn(l, |_, _| cn01::<f64, _>(&mut rng));
        let bus = stripe.uplink(y.as_slice())?;
        let central = g_hat.adjoint() * &y;
        worst = worst.max(relative_gap(&bus.streams, central.as_slice()));

        let q = DVector::from_fn(k, |_, _| cn01::<f64, _>(&mut rng));
        let h = DVector::from_fn(l, |_, _| cn01::<f64, _>(&mut rng));
        let tx = stripe.downlink(&StreamFrame { streams: q.as_slice().to_vec() });
        let rx: Cx<f64> = tx.iter().zip(h.iter()).map(|(x, h)| h * x).sum();
        let precoder = g_hat.map(|g| g.conj()).component_mul(&sqrt_rho.map(|r| Cx::new(r, 0.0)));
        let central_rx = (h.transpose() * precoder * q)[(0, 0)];
        worst = worst.max(relative_gap(&[rx], &[central_rx]));
    }
    Ok(worst)
}

fn relative_gap(a: &[Cx<f64>], b: &[Cx<f64>]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
