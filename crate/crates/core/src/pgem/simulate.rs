use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::PgemSpec;
use crate::streams::{Dataset, Epoch, EventStream};

/// Event-driven exact simulation on `[0, horizon]`.
///
/// Between structural change points every rate is constant, so one
/// exponential candidate per node is drawn at the current rates; the earliest
/// is emitted if it precedes the next window expiry, otherwise time advances
/// to the expiry and candidates are redrawn (exact by memorylessness).
pub fn simulate(spec: &PgemSpec, horizon: f64, seed: u64) -> EventStream {
    simulate_with_id(spec, horizon, seed, "s0")
}

fn simulate_with_id(spec: &PgemSpec, horizon: f64, seed: u64, id: &str) -> EventStream {
    let m = spec.label_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last: Vec<Option<f64>> = vec![None; m];
    let mut epochs = Vec::new();
    let mut t = 0.0;
    let horizon = horizon.max(0.0);

    while t < horizon {
        let mut next_change = horizon;
        let mut best: Option<(f64, usize)> = None;
        for (k, node) in spec.nodes().iter().enumerate() {
            let mut mask = 0usize;
            for (i, (&p, &w)) in node.parents.iter().zip(&node.windows).enumerate() {
                if let Some(tp) = last[p] {
                    let expiry = tp + w;
                    if expiry > t {
                        mask |= 1 << i;
                        next_change = next_change.min(expiry);
                    }
                }
            }
            let rate = node.rates[mask];
            if rate > 0.0 {
                let candidate = t + Exp::new(rate).expect("positive rate").sample(&mut rng);
                if best.is_none_or(|(bt, _)| candidate < bt) {
                    best = Some((candidate, k));
                }
            }
        }
        match best {
            Some((tc, k)) if tc < next_change => {
                if tc <= t {
                    // candidate collapsed onto the current time in floating point
                    t = next_f64(t);
                    continue;
                }
                epochs.push(Epoch::new(tc, k));
                last[k] = Some(tc);
                t = tc;
            }
            _ => t = next_change,
        }
    }
    EventStream::new(id, epochs, horizon, m).expect("simulated stream satisfies invariants")
}

fn next_f64(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// Derives the seed of stream `index` from a dataset seed.
pub(crate) fn stream_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` independent streams named `s0`, `s1`, ….
pub fn simulate_dataset(spec: &PgemSpec, count: usize, horizon: f64, seed: u64, name: &str) -> Dataset {
    let streams = (0..count)
        .map(|i| simulate_with_id(spec, horizon, stream_seed(seed, i), &format!("s{i}")))
        .collect();
    Dataset::new(name, streams).expect("at least one stream")
}
