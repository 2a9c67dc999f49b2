//! Broadcast medium and agent clocks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Channel impairments. Distances are in mm.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseModel {
    pub drop_prob: f64,
    pub dist_noise_sigma: f64,
    /// Added to every distance estimate.
    pub dist_noise_bias: f64,
    /// Each agent's clock rate is drawn from `1 ± clock_skew_frac`.
    pub clock_skew_frac: f64,
    /// Fraction of agents whose transmissions read as farther away than they are.
    pub biased_agent_frac: f64,
    pub biased_agent_mm: f64,
    /// Keep biased agents out of each other's lattice neighbourhood, so every
    /// overestimated link has an honest reverse direction.
    pub biased_apart: bool,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid noise setting {name} = {value}")]
pub struct NoiseError {
    pub name: &'static str,
    pub value: f64,
}

impl NoiseModel {
    /// Repair-stress profile: lossy channel, noisy ranging, slightly skewed clocks
    /// and a few weak emitters.
    pub fn stress() -> Self {
        NoiseModel {
            drop_prob: 0.10,
            dist_noise_sigma: 3.0,
            dist_noise_bias: 0.0,
            clock_skew_frac: 0.01,
            biased_agent_frac: 0.02,
            biased_agent_mm: 15.0,
            biased_apart: true,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let checks = [
            // 1.0 is allowed: a dead channel must end in a timeout, not a config error
            ("drop_prob", self.drop_prob, (0.0..=1.0).contains(&self.drop_prob)),
            ("sigma_mm", self.dist_noise_sigma, self.dist_noise_sigma >= 0.0 && self.dist_noise_sigma.is_finite()),
            ("bias_mm", self.dist_noise_bias, self.dist_noise_bias.is_finite()),
            ("skew", self.clock_skew_frac, (0.0..0.5).contains(&self.clock_skew_frac)),
            ("bias_frac", self.biased_agent_frac, (0.0..=1.0).contains(&self.biased_agent_frac)),
            ("bias_agent_mm", self.biased_agent_mm, self.biased_agent_mm.is_finite()),
        ];
        match checks.iter().find(|c| !c.2) {
            Some(&(name, value, _)) => Err(NoiseError { name, value }),
            None => Ok(()),
        }
    }
}

/// Who hears whom, and how far away they seem.
#[derive(Debug)]
pub struct Medium {
    /// Agents within communication range of each sender, ascending.
    pub audience: Vec<Vec<usize>>,
    /// True sender-receiver distance, parallel to `audience`.
    distances: Vec<Vec<f64>>,
    sender_bias: Vec<f64>,
    drop_prob: f64,
    bias: f64,
    normal: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Medium {
    pub fn new(
        positions: &[(f64, f64)],
        range_mm: f64,
        noise: &NoiseModel,
        sender_bias: Vec<f64>,
        rng: ChaCha8Rng,
    ) -> Self {
        let audience = crate::lattice::within(positions, range_mm);
        let distances = audience
            .iter()
            .enumerate()
            .map(|(s, list)| {
                let (sx, sy) = positions[s];
                list.iter().map(|&r| (positions[r].0 - sx).hypot(positions[r].1 - sy)).collect()
            })
            .collect();
        let normal = (noise.dist_noise_sigma > 0.0).then(|| Normal::new(0.0, noise.dist_noise_sigma).expect("sigma validated"));
        Medium { audience, distances, sender_bias, drop_prob: noise.drop_prob, bias: noise.dist_noise_bias, normal, rng }
    }

    /// Broadcasts one message from `sender`, returning each surviving
    /// `(recipient, distance estimate)` in recipient order, plus the number dropped.
    ///
    /// Draw order is fixed: for each recipient, the loss draw, then (if kept) the noise draw.
    pub fn deliver(&mut self, sender: usize, out: &mut Vec<(usize, f64)>) -> u64 {
        out.clear();
        let mut dropped = 0;
        for (&r, &d) in self.audience[sender].iter().zip(&self.distances[sender]) {
            if self.drop_prob > 0.0 && self.rng.gen::<f64>() < self.drop_prob {
                dropped += 1;
                continue;
            }
            let noise = self.normal.map_or(0.0, |n| n.sample(&mut self.rng));
            out.push((r, (d + self.bias + self.sender_bias[sender] + noise).max(0.0)));
        }
        dropped
    }
}

/// Maps global ticks to an agent's local ticks at rate `1 + skew`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentClock {
    rate: f64,
    acc: f64,
}

impl AgentClock {
    pub fn new(skew: f64, phase: f64) -> Self {
        AgentClock { rate: 1.0 + skew, acc: phase.clamp(0.0, 0.999_999) }
    }

    /// Local ticks that fire during the next global tick (0, 1, or occasionally 2).
    pub fn advance(&mut self) -> u32 {
        self.acc += self.rate;
        let fires = self.acc.floor();
        self.acc -= fires;
        fires as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn unskewed_clock_fires_every_tick() {
        let mut c = AgentClock::new(0.0, 0.37);
        assert!((0..10_000).all(|_| c.advance() == 1));
    }

    #[test]
    fn skewed_clock_rate() {
        let mut fast = AgentClock::new(0.01, 0.0);
        let mut slow = AgentClock::new(-0.01, 0.0);
        let f: u32 = (0..10_000).map(|_| fast.advance()).sum();
        let s: u32 = (0..10_000).map(|_| slow.advance()).sum();
        // accumulated rounding may shift the count by one
        assert!(f.abs_diff(10_100) <= 1 && s.abs_diff(9_900) <= 1, "{f} {s}");
    }

    fn medium(noise: &NoiseModel) -> Medium {
        let pts = [(0.0, 0.0), (35.0, 0.0), (70.0, 0.0), (500.0, 0.0)];
        Medium::new(&pts, 100.0, noise, vec![0.0, 5.0, 0.0, 0.0], ChaCha8Rng::seed_from_u64(9))
    }

    #[test]
    fn noiseless_delivery_is_exact_and_in_range_only() {
        let mut m = medium(&NoiseModel::default());
        let mut out = Vec::new();
        assert_eq!(m.deliver(0, &mut out), 0);
        assert_eq!(out, vec![(1, 35.0), (2, 70.0)]);
        m.deliver(1, &mut out);
        assert_eq!(out, vec![(0, 40.0), (2, 40.0)], "sender bias applies to every receiver");
        m.deliver(3, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn drop_rate_matches_probability() {
        let mut m = medium(&NoiseModel { drop_prob: 0.25, ..Default::default() });
        let mut out = Vec::new();
        let dropped: u64 = (0..20_000).map(|_| m.deliver(0, &mut out)).sum();
        let rate = dropped as f64 / 40_000.0;
        assert!((rate - 0.25).abs() < 0.01, "{rate}");
    }

    #[test]
    fn noise_is_clamped_at_zero() {
        let pts = [(0.0, 0.0), (1.0, 0.0)];
        let noise = NoiseModel { dist_noise_sigma: 50.0, ..Default::default() };
        let mut m = Medium::new(&pts, 100.0, &noise, vec![0.0; 2], ChaCha8Rng::seed_from_u64(1));
        let mut out = Vec::new();
        for _ in 0..1000 {
            m.deliver(0, &mut out);
            assert!(out[0].1 >= 0.0);
        }
    }

    #[test]
    fn validation() {
        assert!(NoiseModel::stress().validate().is_ok());
        assert!(NoiseModel { drop_prob: 1.0, ..Default::default() }.validate().is_ok());
        assert!(NoiseModel { drop_prob: 1.5, ..Default::default() }.validate().is_err());
        assert_eq!(
            NoiseModel { dist_noise_sigma: -1.0, ..Default::default() }.validate(),
            Err(NoiseError { name: "sigma_mm", value: -1.0 })
        );
    }
}
