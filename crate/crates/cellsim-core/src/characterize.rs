//! Cell characterization: sampling training data from the analytic model,
//! target transforms, train/validation splits, and dense-grid table building.
//!
//! Output currents span many decades and cross zero, so regression targets
//! are stored under a signed logarithmic compression by default. Sampling is
//! fully deterministic given a seed.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::celllib::{CellKind, TechnologyParams};
use crate::error::{Error, Result};
use crate::lut::Lut;

/// Invertible compression applied to currents before regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `sign(i) * log10(1 + |i| / i_ref)`: odd, zero at zero, compresses
    /// magnitudes onto a decade scale while keeping the sign.
    SignedLog { i_ref: f64 },
    /// Pass-through, for regressing raw values directly.
    Identity,
}

/// Identity: regressing raw currents (z-scored downstream) beats signed-log
/// compression at every reference current tried under matched budgets — the
/// compression that protects picoampere leakage distorts gradients along the
/// high-current switching paths where waveform error actually accrues.
impl Default for Transform {
    fn default() -> Self {
        Transform::Identity
    }
}

impl Transform {
    pub fn validate(&self) -> Result<()> {
        match self {
            Transform::SignedLog { i_ref } => {
                if !(i_ref.is_finite() && *i_ref > 0.0) {
                    return Err(Error::Config(format!(
                        "signed-log reference current must be positive, got {i_ref}"
                    )));
                }
            }
            Transform::Identity => {}
        }
        Ok(())
    }

    /// Forward transform: raw amperes to regression target. Uses `ln_1p`
    /// so ratios far below one keep full precision.
    pub fn apply(&self, i: f64) -> f64 {
        match self {
            Transform::SignedLog { i_ref } => {
                i.signum() * (i.abs() / i_ref).ln_1p() / std::f64::consts::LN_10
            }
            Transform::Identity => i,
        }
    }

    /// Inverse transform: regression target back to amperes. Uses `exp_m1`
    /// as the stable counterpart of the forward `ln_1p`.
    pub fn invert(&self, y: f64) -> f64 {
        match self {
            Transform::SignedLog { i_ref } => {
                y.signum() * i_ref * (y.abs() * std::f64::consts::LN_10).exp_m1()
            }
            Transform::Identity => y,
        }
    }
}

/// Sampled training corpus for one cell kind. Targets are stored in the
/// transformed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: CellKind,
    pub transform: Transform,
    pub seed: u64,
    /// One voltage vector per sample, each of length `kind.eval_dim()`.
    pub inputs: Vec<Vec<f64>>,
    /// One transformed current per sample.
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        if self.inputs.len() != self.targets.len() {
            return Err(Error::Validation(format!(
                "{} input rows but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let dim = self.kind.eval_dim();
        for (i, row) in self.inputs.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Validation(format!(
                    "sample {i} has {} voltages but {} evaluates {dim}",
                    row.len(),
                    self.kind
                )));
            }
        }
        if self
            .inputs
            .iter()
            .flatten()
            .chain(&self.targets)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Validation("dataset contains a non-finite entry".into()));
        }
        Ok(())
    }

    /// Write the corpus as CSV: a metadata comment line, a header, then one
    /// row per sample with the raw voltages and the transformed target.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut out = String::new();
        let transform = match self.transform {
            Transform::SignedLog { i_ref } => format!("signed_log i_ref={i_ref}"),
            Transform::Identity => "identity".to_string(),
        };
        out.push_str(&format!(
            "# dataset kind={} transform={} seed={}\n",
            self.kind, transform, self.seed
        ));
        let dim = self.kind.eval_dim();
        for d in 0..dim {
            out.push_str(&format!("v{d},"));
        }
        out.push_str("target\n");
        for (row, target) in self.inputs.iter().zip(&self.targets) {
            for v in row {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{target}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let mut lines = text.lines().enumerate();

        let (_, meta) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty dataset file".into(),
        })?;
        let meta = meta.strip_prefix("# dataset ").ok_or(Error::Parse {
            line: 1,
            message: "missing dataset metadata line".into(),
        })?;
        let mut kind = None;
        let mut transform = None;
        let mut i_ref = None;
        let mut seed = None;
        for token in meta.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or(Error::Parse {
                line: 1,
                message: format!("bad metadata token {token:?}"),
            })?;
            match key {
                "kind" => kind = Some(value.to_string()),
                "transform" => transform = Some(value.to_string()),
                "i_ref" => {
                    i_ref = Some(value.parse::<f64>().map_err(|e| Error::Parse {
                        line: 1,
                        message: format!("bad i_ref: {e}"),
                    })?)
                }
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|e| Error::Parse {
                        line: 1,
                        message: format!("bad seed: {e}"),
                    })?)
                }
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("unknown metadata key {key:?}"),
                    })
                }
            }
        }
        let kind = match kind.as_deref() {
            Some("INV") => CellKind::Inv,
            Some("NAND2") => CellKind::Nand2,
            Some("NOR2") => CellKind::Nor2,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown cell kind {other:?}"),
                })
            }
        };
        let transform = match transform.as_deref() {
            Some("signed_log") => Transform::SignedLog {
                i_ref: i_ref.ok_or(Error::Parse {
                    line: 1,
                    message: "signed_log transform needs i_ref".into(),
                })?,
            },
            Some("identity") => Transform::Identity,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown transform {other:?}"),
                })
            }
        };
        let seed = seed.ok_or(Error::Parse { line: 1, message: "missing seed".into() })?;

        // Header line.
        lines.next().ok_or(Error::Parse { line: 2, message: "missing CSV header".into() })?;

        let dim = kind.eval_dim();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} fields, got {}", dim + 1, fields.len()),
                });
            }
            let mut row = Vec::with_capacity(dim);
            for f in &fields[..dim] {
                row.push(f.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad voltage {f:?}: {e}"),
                })?);
            }
            targets.push(fields[dim].parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("bad target {:?}: {e}", fields[dim]),
            })?);
            inputs.push(row);
        }
        let ds = Dataset { kind, transform, seed, inputs, targets };
        ds.validate()?;
        Ok(ds)
    }
}

/// A row counts as high-drive when the cell sources at least this fraction
/// of its peak current magnitude.
const HIGH_DRIVE_FRACTION: f64 = 0.25;
/// Half-width of the rail band for operating-corner rows, as a fraction of
/// the supply: covers the stimulus noise amplitude with margin.
const RAIL_BAND_FRACTION: f64 = 0.06;

/// Peak output-current magnitude over the admissible box, probed on a coarse
/// lattice. Anchors the high-drive acceptance threshold in [`sample_dataset`].
fn peak_current(kind: CellKind, tech: &TechnologyParams) -> Result<f64> {
    let grid = GridSpec { points_per_axis: 9, lo: tech.admissible_lo(), hi: tech.admissible_hi() };
    let axis = grid.axis();
    let dim = kind.eval_dim();
    let mut idx = vec![0usize; dim];
    let mut peak = 0.0f64;
    loop {
        let v: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
        peak = peak.max(tech.output_current(kind, &v)?.abs());
        let mut d = 0;
        while d < dim {
            idx[d] += 1;
            if idx[d] < axis.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dim {
            break;
        }
    }
    Ok(peak)
}

/// Draw `n` voltage vectors over the admissible voltage box and record the
/// transformed output current for each.
///
/// The box deliberately extends past the supply rails by the allowed
/// overshoot margin: transient nodes visit that margin, so a surrogate
/// trained only on `[0, v_dd]` would be extrapolating exactly where the
/// restoring currents matter most.
///
/// The corpus mixes three strata, interleaved by row index so any prefix
/// keeps the same proportions:
///
/// * 40% uniform over the box — a broad floor so the fit never extrapolates;
/// * 30% high-drive rows, accepted only where the cell sources at least a
///   quarter of its peak current. Waveform error accrues almost entirely
///   along those switching paths — the output node has no restoring feedback
///   mid-swing, so integrated current error there maps directly into delay
///   error — and a plain uniform corpus spends most rows where accuracy
///   barely matters;
/// * 30% operating-corner rows: every input sits in a narrow band around one
///   of the rails (where noisy-but-settled inputs actually live) with the
///   output swept over the whole box. Near-zero equilibrium currents at
///   those corners set the DC level a driven node settles to, and small
///   absolute current bias there turns into a standing voltage offset.
pub fn sample_dataset(
    kind: CellKind,
    tech: &TechnologyParams,
    transform: Transform,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    tech.validate()?;
    transform.validate()?;
    if n < 10 {
        return Err(Error::Config(format!(
            "at least 10 samples are needed to characterize a cell, got {n}"
        )));
    }
    let dim = kind.eval_dim();
    let threshold = HIGH_DRIVE_FRACTION * peak_current(kind, tech)?;
    let band = RAIL_BAND_FRACTION * tech.v_dd;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| rng.random_range(tech.admissible_lo()..=tech.admissible_hi()))
            .collect()
    };
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for k in 0..n {
        let (v, i) = match k % 10 {
            0..=3 => {
                let v = draw(&mut rng);
                let i = tech.output_current(kind, &v)?;
                (v, i)
            }
            4..=6 => {
                // Rejection loop; the high-drive region covers a few percent
                // of the box, so acceptance takes tens of draws. The cap
                // only guards degenerate parameter sets.
                let mut v = draw(&mut rng);
                let mut i = tech.output_current(kind, &v)?;
                for _ in 0..10_000 {
                    if i.abs() >= threshold {
                        break;
                    }
                    v = draw(&mut rng);
                    i = tech.output_current(kind, &v)?;
                }
                (v, i)
            }
            _ => {
                let mut v: Vec<f64> = (0..dim - 1)
                    .map(|_| {
                        let rail = if rng.random::<bool>() { tech.v_dd } else { 0.0 };
                        tech.clamp_admissible(rail + rng.random_range(-band..=band))
                    })
                    .collect();
                v.push(rng.random_range(tech.admissible_lo()..=tech.admissible_hi()));
                let i = tech.output_current(kind, &v)?;
                (v, i)
            }
        };
        targets.push(transform.apply(i));
        inputs.push(v);
    }
    Ok(Dataset { kind, transform, seed, inputs, targets })
}

/// Split into train and validation parts: `ceil(n * train_fraction)` samples
/// train, the rest validate, assigned by a seeded shuffle.
pub fn split_dataset(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    dataset.validate()?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let pick = |indices: &[usize]| Dataset {
        kind: dataset.kind,
        transform: dataset.transform,
        seed: dataset.seed,
        inputs: indices.iter().map(|&i| dataset.inputs[i].clone()).collect(),
        targets: indices.iter().map(|&i| dataset.targets[i]).collect(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Uniform grid specification shared by every axis of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points_per_axis: usize,
    /// Lower grid edge, volts.
    pub lo: f64,
    /// Upper grid edge, volts.
    pub hi: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points_per_axis: 33, lo: 0.0, hi: 0.7 }
    }
}

impl GridSpec {
    /// Default point count with edges matching the supply of `tech`.
    pub fn for_tech(tech: &TechnologyParams) -> Self {
        GridSpec { points_per_axis: 33, lo: 0.0, hi: tech.v_dd }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 2 {
            return Err(Error::Config(format!(
                "a grid needs at least 2 points per axis, got {}",
                self.points_per_axis
            )));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::Config(format!(
                "grid edges must satisfy lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec<f64> {
        let n = self.points_per_axis;
        (0..n)
            .map(|i| {
                // Interpolating `lo + span * 1.0` can land an ulp past `hi`;
                // the edges must be exact so covering checks and downstream
                // range guards see the intended interval.
                if i == n - 1 {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Evaluate the analytic model on a dense grid and pack the raw currents
/// into an interpolation table. The grid must cover the supply range so a
/// simulation never extrapolates.
pub fn build_lut(kind: CellKind, tech: &TechnologyParams, grid: &GridSpec) -> Result<Lut> {
    tech.validate()?;
    grid.validate()?;
    if grid.lo > 0.0 || grid.hi < tech.v_dd {
        return Err(Error::Config(format!(
            "grid [{}, {}] does not cover the supply range [0, {}]",
            grid.lo, grid.hi, tech.v_dd
        )));
    }
    let dim = kind.eval_dim();
    let axis = grid.axis();
    let axes = vec![axis.clone(); dim];
    let mut values = Vec::with_capacity(axis.len().pow(dim as u32));
    let mut idx = vec![0usize; dim];
    let mut point = vec![0f64; dim];
    'outer: loop {
        for d in 0..dim {
            point[d] = axes[d][idx[d]];
        }
        values.push(tech.output_current(kind, &point)?);
        // Row-major odometer: last axis varies fastest.
        let mut d = dim;
        loop {
            if d == 0 {
                break 'outer;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Lut::new(kind, axes, values)
}
