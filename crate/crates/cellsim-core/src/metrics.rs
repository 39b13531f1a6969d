//! Waveform containers and the similarity metric used to score one
//! simulation against another.
//!
//! The score of a (reference, test) pair is the time-averaged absolute
//! voltage difference normalized by the supply:
//!
//! ```text
//! e_sim = 1 / (T * v_dd) * integral over [0, T] of |v_ref(t) - v_test(t)| dt
//! ```
//!
//! integrated by the trapezoid rule on the shared sample grid. The result is
//! a dimensionless ratio: 0 for identical waveforms, 0.05 for a constant
//! offset of five percent of the supply, and so on. Multi-net sets are scored
//! net by net and summarized by the maximum and the mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled waveform: `values[i]` volts at `times[i]` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Waveform {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let w = Waveform { times, values };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Contract(format!(
                "waveform has {} times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.len() < 2 {
            return Err(Error::Contract(
                "waveform needs at least two samples to span a horizon".into(),
            ));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Contract(format!(
                    "times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.times.iter().chain(&self.values).any(|x| !x.is_finite()) {
            return Err(Error::Contract("waveform contains a non-finite sample".into()));
        }
        Ok(())
    }

    /// Horizon covered by the waveform, seconds.
    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Value at time `t` by linear interpolation between samples. `t` must
    /// lie inside the span.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(Error::Contract(format!(
                "time {t} outside the waveform span [{lo}, {hi}]"
            )));
        }
        // Index of the last sample at or before t.
        let i = self.times.partition_point(|&x| x <= t);
        if i == 0 {
            return Ok(self.values[0]);
        }
        if i == self.times.len() {
            return Ok(*self.values.last().unwrap());
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        let frac = (t - t0) / (t1 - t0);
        Ok(v0 + frac * (v1 - v0))
    }
}

/// Linear resampling of `w` onto `times` (all inside the span of `w`).
pub fn resample(w: &Waveform, times: &[f64]) -> Result<Waveform> {
    let values = times.iter().map(|&t| w.value_at(t)).collect::<Result<Vec<_>>>()?;
    Waveform::new(times.to_vec(), values)
}

/// Time-averaged absolute difference between two waveforms on the same
/// sample grid, normalized by the horizon and the supply voltage.
pub fn e_sim(reference: &Waveform, test: &Waveform, v_dd: f64) -> Result<f64> {
    reference.validate()?;
    test.validate()?;
    if !(v_dd.is_finite() && v_dd > 0.0) {
        return Err(Error::Contract(format!("v_dd must be positive, got {v_dd}")));
    }
    if reference.times != test.times {
        return Err(Error::Contract(
            "waveforms are sampled on different time grids; resample first".into(),
        ));
    }
    let times = &reference.times;
    let horizon = *times.last().unwrap() - times[0];
    let mut area = 0.0;
    for i in 1..times.len() {
        let d0 = (reference.values[i - 1] - test.values[i - 1]).abs();
        let d1 = (reference.values[i] - test.values[i]).abs();
        area += 0.5 * (d0 + d1) * (times[i] - times[i - 1]);
    }
    Ok(area / (horizon * v_dd))
}

/// A group of waveforms on one shared time grid, keyed by net name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSet {
    pub times: Vec<f64>,
    /// Net name to sampled voltages, one entry per traced net.
    pub nets: BTreeMap<String, Vec<f64>>,
}

impl WaveformSet {
    pub fn waveform(&self, net: &str) -> Result<Waveform> {
        let values = self.nets.get(net).ok_or_else(|| {
            Error::Contract(format!("net {net:?} is not present in the waveform set"))
        })?;
        Waveform::new(self.times.clone(), values.clone())
    }
}

/// Per-net scores plus their maximum and mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsimSummary {
    pub per_net: BTreeMap<String, f64>,
    pub max: f64,
    pub mean: f64,
}

/// Score every net of `test` against the same-named net of `reference`.
/// Both sets must carry exactly the same net names.
pub fn e_sim_multi(
    reference: &WaveformSet,
    test: &WaveformSet,
    v_dd: f64,
) -> Result<EsimSummary> {
    let ref_names: Vec<&String> = reference.nets.keys().collect();
    let test_names: Vec<&String> = test.nets.keys().collect();
    if ref_names != test_names {
        return Err(Error::Contract(format!(
            "waveform sets trace different nets: {ref_names:?} vs {test_names:?}"
        )));
    }
    if reference.nets.is_empty() {
        return Err(Error::Contract("waveform sets trace no nets".into()));
    }
    let mut per_net = BTreeMap::new();
    for name in reference.nets.keys() {
        let score = e_sim(&reference.waveform(name)?, &test.waveform(name)?, v_dd)?;
        per_net.insert(name.clone(), score);
    }
    let max = per_net.values().cloned().fold(f64::MIN, f64::max);
    let mean = per_net.values().sum::<f64>() / per_net.len() as f64;
    Ok(EsimSummary { per_net, max, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const V_DD: f64 = 0.7;

    fn grid(n: usize, horizon: f64) -> Vec<f64> {
        (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn identical_waveforms_score_zero() {
        let t = grid(101, 10e-12);
        let v: Vec<f64> = t.iter().map(|&x| 0.3 + 0.2 * (x * 1e12).sin()).collect();
        let a = Waveform::new(t.clone(), v.clone()).unwrap();
        let b = Waveform::new(t, v).unwrap();
        assert_eq!(e_sim(&a, &b, V_DD).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_scores_the_offset_fraction() {
        let t = grid(101, 10e-12);
        let v: Vec<f64> = t.iter().map(|&x| 0.1 + 0.5 * (x * 3e11).cos()).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 0.05 * V_DD).collect();
        let a = Waveform::new(t.clone(), v).unwrap();
        let b = Waveform::new(t, shifted).unwrap();
        assert_abs_diff_eq!(e_sim(&a, &b, V_DD).unwrap(), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn sawtooth_difference_scores_half() {
        // |diff| grows linearly from 0 to v_dd: the average is v_dd / 2 and the
        // trapezoid rule integrates a piecewise-linear integrand exactly.
        let t = grid(101, 4e-12);
        let zeros = vec![0.0; t.len()];
        let ramp: Vec<f64> = t.iter().map(|&x| V_DD * x / 4e-12).collect();
        let a = Waveform::new(t.clone(), zeros).unwrap();
        let b = Waveform::new(t, ramp).unwrap();
        assert_abs_diff_eq!(e_sim(&a, &b, V_DD).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = Waveform::new(grid(11, 1e-12), vec![0.0; 11]).unwrap();
        let b = Waveform::new(grid(12, 1e-12), vec![0.0; 12]).unwrap();
        assert!(matches!(e_sim(&a, &b, V_DD), Err(Error::Contract(_))));
    }

    #[test]
    fn degenerate_waveforms_are_rejected() {
        assert!(Waveform::new(vec![0.0], vec![1.0]).is_err());
        assert!(Waveform::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Waveform::new(vec![0.0, -1.0], vec![1.0, 1.0]).is_err());
        assert!(Waveform::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn resample_hits_nodes_exactly_and_blends_between() {
        let w = Waveform::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, -1.0]).unwrap();
        let r = resample(&w, &[0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
        assert_eq!(r.values, vec![1.0, 2.0, 3.0, 1.0, -1.0]);
        assert!(resample(&w, &[-0.1, 1.0]).is_err());
        assert!(resample(&w, &[1.0, 2.5]).is_err());
    }

    #[test]
    fn multi_net_summary_reports_max_and_mean() {
        let t = grid(11, 1e-12);
        let mk = |offset: f64| -> Vec<f64> { vec![0.2 + offset; t.len()] };
        let reference = WaveformSet {
            times: t.clone(),
            nets: BTreeMap::from([("a".into(), mk(0.0)), ("b".into(), mk(0.0))]),
        };
        let test = WaveformSet {
            times: t.clone(),
            nets: BTreeMap::from([
                ("a".into(), mk(0.01 * V_DD)),
                ("b".into(), mk(0.03 * V_DD)),
            ]),
        };
        let s = e_sim_multi(&reference, &test, V_DD).unwrap();
        assert_abs_diff_eq!(s.per_net["a"], 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(s.per_net["b"], 0.03, epsilon = 1e-12);
        assert_abs_diff_eq!(s.max, 0.03, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean, 0.02, epsilon = 1e-12);
    }

    #[test]
    fn multi_net_requires_matching_net_names() {
        let t = grid(11, 1e-12);
        let a = WaveformSet {
            times: t.clone(),
            nets: BTreeMap::from([("x".into(), vec![0.0; 11])]),
        };
        let b = WaveformSet {
            times: t,
            nets: BTreeMap::from([("y".into(), vec![0.0; 11])]),
        };
        assert!(matches!(e_sim_multi(&a, &b, V_DD), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn score_is_nonnegative_and_symmetric(
            seed in 0u64..1000,
            n in 2usize..40,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = grid(n, 1e-12);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.8)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.8)).collect();
            let wa = Waveform::new(t.clone(), a).unwrap();
            let wb = Waveform::new(t, b).unwrap();
            let ab = e_sim(&wa, &wb, V_DD).unwrap();
            let ba = e_sim(&wb, &wa, V_DD).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn common_mode_shifts_cancel(
            shift in -0.5f64..0.5,
            n in 2usize..30,
        ) {
            let t = grid(n, 1e-12);
            let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() * 0.3).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).cos() * 0.3).collect();
            let base = e_sim(
                &Waveform::new(t.clone(), a.clone()).unwrap(),
                &Waveform::new(t.clone(), b.clone()).unwrap(),
                V_DD,
            ).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
            let shifted = e_sim(
                &Waveform::new(t.clone(), sa).unwrap(),
                &Waveform::new(t, sb).unwrap(),
                V_DD,
            ).unwrap();
            prop_assert!((base - shifted).abs() < 1e-12);
        }
    }
}
