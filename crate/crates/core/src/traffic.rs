//! Per-flow Poisson packet arrivals.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::TrafficConfig;
use crate::domain::{FlowLabel, UeId};

/// Classes handed out to every UE; mobile UEs add a V2X flow on top.
pub const FIXED_CLASSES: [FlowLabel; 3] = [FlowLabel::Voice, FlowLabel::Video, FlowLabel::Ims];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub flow: FlowLabel,
    pub packet_size: u32,
    /// Mean packets per 1 ms TTI.
    pub arrival_rate: f64,
}

impl FlowSpec {
    /// Flow whose offered load is `load_bps` bits/s.
    pub fn from_load(flow: FlowLabel, packet_size: u32, load_bps: f64) -> Self {
        Self { flow, packet_size, arrival_rate: load_bps / f64::from(packet_size) / 1000.0 }
    }

    /// Offered load in bits/s.
    pub fn load_bps(&self) -> f64 {
        self.arrival_rate * f64::from(self.packet_size) * 1000.0
    }
}

/// Hands each UE one of Voice, Video or IMS uniformly at random; mobile UEs
/// additionally carry a V2X flow. The per-UE load is split evenly over its
/// flows. Output is ordered by UE id.
pub fn assign_flows<R: Rng + ?Sized>(
    fixed: &[UeId],
    mobile: &[UeId],
    load_per_ue_bps: f64,
    traffic: &TrafficConfig,
    rng: &mut R,
) -> Vec<(UeId, Vec<FlowSpec>)> {
    let mut ids: Vec<(UeId, bool)> =
        fixed.iter().map(|&id| (id, false)).chain(mobile.iter().map(|&id| (id, true))).collect();
    ids.sort_unstable();

    ids.into_iter()
        .map(|(id, is_mobile)| {
            let base = FIXED_CLASSES[rng.random_range(0..FIXED_CLASSES.len())];
            let mut flows = vec![base];
            if is_mobile {
                flows.push(FlowLabel::V2x);
            }
            let share = load_per_ue_bps / flows.len() as f64;
            let specs = flows
                .into_iter()
                .map(|f| FlowSpec::from_load(f, traffic.packet_bits(f), share))
                .collect();
            (id, specs)
        })
        .collect()
}

/// Number of packets arriving on `spec` during one TTI.
pub fn sample_arrivals<R: Rng + ?Sized>(spec: &FlowSpec, rng: &mut R) -> u32 {
    if spec.arrival_rate <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(spec.arrival_rate).expect("arrival rate is positive and finite");
    poisson.sample(rng) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traffic() -> TrafficConfig {
        TrafficConfig::default()
    }

    #[test]
    fn fixed_ues_get_one_fixed_class() {
        let ids: Vec<UeId> = (0..30).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = assign_flows(&ids, &[], 256_000.0, &traffic(), &mut rng);
        assert_eq!(out.len(), 30);
        for (i, (id, flows)) in out.iter().enumerate() {
            assert_eq!(*id, i as UeId);
            assert_eq!(flows.len(), 1);
            assert!(FIXED_CLASSES.contains(&flows[0].flow));
        }
    }

    #[test]
    fn ten_percent_mobile_carry_v2x() {
        let fixed: Vec<UeId> = (0..81).collect();
        let mobile: Vec<UeId> = (81..90).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = assign_flows(&fixed, &mobile, 256_000.0, &traffic(), &mut rng);
        let with_v2x: Vec<UeId> = out
            .iter()
            .filter(|(_, f)| f.iter().any(|s| s.flow == FlowLabel::V2x))
            .map(|(id, _)| *id)
            .collect();
        assert_eq!(with_v2x, mobile);
        for (_, flows) in &out {
            let total: f64 = flows.iter().map(FlowSpec::load_bps).sum();
            assert!((total - 256_000.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(assign_flows(&[], &[], 256_000.0, &traffic(), &mut rng).is_empty());
    }

    #[test]
    fn assignment_is_reproducible() {
        let ids: Vec<UeId> = (0..50).collect();
        let a = assign_flows(&ids, &[], 1.0, &traffic(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = assign_flows(&ids, &[], 1.0, &traffic(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn class_frequencies_are_uniform() {
        let ids: Vec<UeId> = (0..100).collect();
        let mut counts = [0u32; 3];
        let seeds = 300;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (_, flows) in assign_flows(&ids, &[], 1.0, &traffic(), &mut rng) {
                let k = FIXED_CLASSES.iter().position(|&c| c == flows[0].flow).unwrap();
                counts[k] += 1;
            }
        }
        let n = f64::from(counts.iter().sum::<u32>());
        let p = 1.0 / 3.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((f64::from(c) - n * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn voice_rate_at_full_load() {
        let spec = FlowSpec::from_load(FlowLabel::Voice, 800, 256_000.0);
        assert!((spec.arrival_rate - 0.32).abs() < 1e-12);
        assert!(spec.load_bps() <= 256_000.0 + 1e-9);
    }

    #[test]
    fn zero_rate_never_arrives() {
        let spec = FlowSpec { flow: FlowLabel::Voice, packet_size: 800, arrival_rate: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_arrivals(&spec, &mut rng) == 0));
    }

    /// Knuth's product-of-uniforms sampler, used only as a reference.
    fn knuth_poisson(rate: f64, rng: &mut ChaCha8Rng) -> u32 {
        let limit = (-rate).exp();
        let mut k = 0;
        let mut p: f64 = rng.random();
        while p > limit {
            k += 1;
            p *= rng.random::<f64>();
        }
        k
    }

    #[test]
    fn poisson_moments_match_reference() {
        let n = 100_000;
        for rate in [0.5, 0.32, 2.0] {
            let spec = FlowSpec { flow: FlowLabel::Voice, packet_size: 800, arrival_rate: rate };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let xs: Vec<f64> = (0..n).map(|_| f64::from(sample_arrivals(&spec, &mut rng))).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;

            let mut rrng = ChaCha8Rng::seed_from_u64(12);
            let reference = (0..n).map(|_| f64::from(knuth_poisson(rate, &mut rrng))).sum::<f64>() / n as f64;

            assert!((mean - rate).abs() / rate < 0.02, "rate {rate}: mean {mean}");
            assert!((var - rate).abs() / rate < 0.02, "rate {rate}: var {var}");
            assert!((mean - reference).abs() / rate < 0.03, "rate {rate}: {mean} vs reference {reference}");
            if rate == 0.5 {
                assert!((0.49..=0.51).contains(&mean));
            }
        }
    }
}
