//! Click-stream generator.
//!
//! Trials are processed in fixed-size chunks; chunk `c` draws from its own
//! ChaCha stream (`seed`, stream id `c`), so output does not depend on thread
//! count. Within a chunk, trials with at least one detected source photon are
//! reached by geometric skipping and noise clicks are Poisson processes laid
//! out on the concatenated gate time, which keeps long low-rate runs cheap.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;

use super::{ClickRecord, ClickStream, ExperimentTiming, PhotonError, SourceModel};

/// Trials per RNG substream.
pub const CHUNK_TRIALS: u64 = 1 << 20;

/// Detection outcome probabilities for one trial's source photons.
#[derive(Debug, Clone, Copy)]
struct SignalOdds {
    single: f64,
    first_only: f64,
    second_only: f64,
    both: f64,
}

impl SignalOdds {
    fn new(m: &SourceModel) -> Self {
        let single = (m.p_emit - m.p_double) * m.eta;
        let first_only = m.p_double * m.eta * (1.0 - m.eta);
        let both = m.p_double * m.eta * m.eta;
        SignalOdds { single, first_only, second_only: first_only, both }
    }

    fn any(&self) -> f64 {
        self.single + self.first_only + self.second_only + self.both
    }
}

struct ChunkSim<'a> {
    model: &'a SourceModel,
    timing: &'a ExperimentTiming,
    odds: SignalOdds,
    emission: Option<Exp<f64>>,
}

impl ChunkSim<'_> {
    fn push_photon(&self, rng: &mut ChaCha8Rng, out: &mut Vec<ClickRecord>, trial: u64, delay_ps: f64) {
        let rel = delay_ps.round();
        let gate_start = self.timing.gate_offset_ps as f64;
        if rel < gate_start || rel >= gate_start + self.timing.gate_width_ps as f64 {
            return;
        }
        let channel = rng.random_bool(0.5) as u8;
        out.push(ClickRecord { time_ps: trial * self.timing.rep_period_ps + rel as u64, channel });
    }

    /// Poisson process of the given rate (Hz) over the gates of trials
    /// [first, first + n). `channel = None` splits clicks 50/50.
    fn poisson_clicks(&self, rng: &mut ChaCha8Rng, out: &mut Vec<ClickRecord>, first: u64, n: u64, rate_hz: f64, channel: Option<u8>) {
        if rate_hz <= 0.0 {
            return;
        }
        let gate = self.timing.gate_width_ps;
        let span = (n * gate) as f64;
        let gap = Exp::new(rate_hz * 1e-12).expect("positive rate");
        let mut pos = 0.0;
        loop {
            pos += gap.sample(rng);
            if pos >= span {
                break;
            }
            let p = pos.floor() as u64;
            let trial = first + p / gate;
            let time_ps = trial * self.timing.rep_period_ps + self.timing.gate_offset_ps + p % gate;
            let channel = channel.unwrap_or_else(|| rng.random_bool(0.5) as u8);
            out.push(ClickRecord { time_ps, channel });
        }
    }

    fn run(&self, seed: u64, chunk: u64, n_trials: u64) -> Vec<ClickRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let first = chunk * CHUNK_TRIALS;
        let n = CHUNK_TRIALS.min(n_trials - first);
        let mut out = Vec::new();

        let p_any = self.odds.any();
        if let (true, Some(delay)) = (p_any > 0.0, self.emission) {
            let skip = Geometric::new(p_any.min(1.0)).expect("probability in (0, 1]");
            let mut k = 0u64;
            loop {
                k = k.saturating_add(skip.sample(&mut rng));
                if k >= n {
                    break;
                }
                let trial = first + k;
                let t1 = delay.sample(&mut rng);
                let t2 = t1 + delay.sample(&mut rng);
                let u = rng.random::<f64>() * p_any;
                let o = &self.odds;
                if u < o.single + o.first_only {
                    self.push_photon(&mut rng, &mut out, trial, t1);
                } else if u < o.single + o.first_only + o.second_only {
                    self.push_photon(&mut rng, &mut out, trial, t2);
                } else {
                    self.push_photon(&mut rng, &mut out, trial, t1);
                    self.push_photon(&mut rng, &mut out, trial, t2);
                }
                k += 1;
            }
        }

        let m = self.model;
        self.poisson_clicks(&mut rng, &mut out, first, n, m.dark_rate_hz, Some(0));
        self.poisson_clicks(&mut rng, &mut out, first, n, m.dark_rate_hz, Some(1));
        self.poisson_clicks(&mut rng, &mut out, first, n, m.leakage_rate_hz, None);
        out.sort_unstable();

        if m.dead_time_ps > 0 || m.afterpulse_prob > 0.0 {
            out = self.detector_response(&mut rng, out);
        }
        out
    }

    /// Afterpulses (inside the parent's gate) then per-channel dead time.
    fn detector_response(&self, rng: &mut ChaCha8Rng, clicks: Vec<ClickRecord>) -> Vec<ClickRecord> {
        let m = self.model;
        let mut all = clicks.clone();
        if m.afterpulse_prob > 0.0 {
            for c in &clicks {
                if rng.random_bool(m.afterpulse_prob) {
                    let t = c.time_ps + m.afterpulse_delay_ps;
                    let same_gate = match (self.timing.locate(c.time_ps), self.timing.locate(t)) {
                        (Some((g0, _)), Some((g1, _))) => g0 == g1,
                        _ => false,
                    };
                    if same_gate {
                        all.push(ClickRecord { time_ps: t, channel: c.channel });
                    }
                }
            }
            all.sort_unstable();
        }
        if m.dead_time_ps == 0 {
            return all;
        }
        let mut last: [Option<u64>; 2] = [None, None];
        all.retain(|c| {
            let slot = &mut last[c.channel as usize];
            match *slot {
                Some(t) if c.time_ps < t + m.dead_time_ps => false,
                _ => {
                    *slot = Some(c.time_ps);
                    true
                }
            }
        });
        all
    }
}

/// Simulate `n_trials` gated trials. Identical arguments give an identical
/// stream.
pub fn simulate_stream(model: &SourceModel, timing: &ExperimentTiming, n_trials: u64, seed: u64) -> Result<ClickStream, PhotonError> {
    timing.validate()?;
    model.validate(timing)?;
    if n_trials == 0 {
        return Err(PhotonError::InvalidParameter { name: "n_trials", value: 0.0 });
    }
    let sim = ChunkSim {
        model,
        timing,
        odds: SignalOdds::new(model),
        emission: Exp::new(1.0 / model.tau_e_ps).ok(),
    };
    let n_chunks = n_trials.div_ceil(CHUNK_TRIALS);
    let chunks: Vec<Vec<ClickRecord>> = (0..n_chunks).into_par_iter().map(|c| sim.run(seed, c, n_trials)).collect();
    let mut records = Vec::with_capacity(chunks.iter().map(Vec::len).sum());
    for c in chunks {
        records.extend(c);
    }
    Ok(ClickStream::from_sorted_unchecked(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_and_silent_source_gives_nothing() {
        let m = SourceModel { eta: 0.0, ..SourceModel::default() };
        let s = simulate_stream(&m, &ExperimentTiming::default(), 10_000, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn deterministic_single_photons() {
        let t = ExperimentTiming::default();
        let s = simulate_stream(&SourceModel::default(), &t, 5000, 3).unwrap();
        assert_eq!(s.len(), 5000);
        for (k, r) in s.records().iter().enumerate() {
            let (gate, _) = t.locate(r.time_ps).expect("gated");
            assert_eq!(gate, k as u64);
        }
    }

    #[test]
    fn chunk_boundaries_do_not_shift_trials() {
        let t = ExperimentTiming::default();
        let n = CHUNK_TRIALS + 17;
        let s = simulate_stream(&SourceModel::default(), &t, n, 9).unwrap();
        assert_eq!(s.len() as u64, n);
        let last = s.records().last().unwrap();
        assert_eq!(t.locate(last.time_ps).unwrap().0, n - 1);
    }

    #[test]
    fn dead_time_suppresses_close_clicks() {
        let t = ExperimentTiming::default();
        let m = SourceModel { p_double: 1.0, dead_time_ps: 300_000, ..SourceModel::default() };
        let s = simulate_stream(&m, &t, 2000, 5).unwrap();
        for w in s.records().windows(2) {
            if w[0].channel == w[1].channel {
                assert!(w[1].time_ps - w[0].time_ps >= 300_000);
            }
        }
    }

    #[test]
    fn afterpulses_stay_in_gate() {
        let t = ExperimentTiming::default();
        let m = SourceModel { afterpulse_prob: 1.0, afterpulse_delay_ps: 50_000, ..SourceModel::default() };
        let s = simulate_stream(&m, &t, 2000, 5).unwrap();
        assert!(s.len() > 3900 && s.len() <= 4000, "{}", s.len());
        assert!(s.records().iter().all(|r| t.locate(r.time_ps).is_some()));
    }

    #[test]
    fn rejects_zero_trials() {
        assert!(simulate_stream(&SourceModel::default(), &ExperimentTiming::default(), 0, 0).is_err());
    }
}
