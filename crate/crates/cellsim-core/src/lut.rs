//! Lookup-table backend: dense voltage grids of precomputed output currents
//! queried by multilinear interpolation.
//!
//! A table stores one axis per input dimension of the cell (all inputs plus
//! the output node) and a flat row-major array of currents at every grid
//! node. A query clamps the point into the grid box, locates the containing
//! cell, and blends the 2^D corner values with multilinear weights. Each
//! query therefore touches `2^D` memory locations, which is the default cost
//! accounting for this backend; the count can be overridden when modeling a
//! memory system that coalesces the corner reads.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::celllib::CellKind;
use crate::error::{Error, Result};

/// Dense interpolation table for one cell kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut {
    pub kind: CellKind,
    /// Number of axes; equals the evaluation dimension of `kind`.
    pub dims: usize,
    /// Grid coordinates per axis, strictly ascending, at least two per axis.
    pub axes: Vec<Vec<f64>>,
    /// Currents at grid nodes, row-major: the last axis varies fastest.
    pub values: Vec<f64>,
    /// Optional override of the memory-traffic estimate per evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries_override: Option<usize>,
}

impl Lut {
    pub fn new(kind: CellKind, axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let lut = Lut { kind, dims: axes.len(), axes, values, queries_override: None };
        lut.validate()?;
        Ok(lut)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims != self.axes.len() {
            return Err(Error::Validation(format!(
                "table header says {} dims but {} axes are stored",
                self.dims,
                self.axes.len()
            )));
        }
        if self.dims != self.kind.eval_dim() {
            return Err(Error::Validation(format!(
                "{} evaluates {} voltages but the table has {} axes",
                self.kind,
                self.kind.eval_dim(),
                self.dims
            )));
        }
        for (d, axis) in self.axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::Validation(format!(
                    "axis {d} has {} points; interpolation needs at least 2",
                    axis.len()
                )));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("axis {d} contains a non-finite point")));
            }
            for w in axis.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::Validation(format!(
                        "axis {d} is not strictly ascending ({} then {})",
                        w[0], w[1]
                    )));
                }
            }
        }
        let expected: usize = self.axes.iter().map(Vec::len).product();
        if self.values.len() != expected {
            return Err(Error::Validation(format!(
                "grid shape implies {expected} values but {} are stored",
                self.values.len()
            )));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("table contains a non-finite current".into()));
        }
        if self.queries_override == Some(0) {
            return Err(Error::Validation("queries override must be at least 1".into()));
        }
        Ok(())
    }

    /// Memory touches charged per evaluation: the 2^D interpolation corners
    /// unless an override models coalesced reads.
    pub fn queries_per_eval(&self) -> usize {
        self.queries_override.unwrap_or(1usize << self.dims)
    }

    /// Interpolated output current at `point` (volts per axis), amperes.
    /// Components outside the grid box are clamped to the box face.
    pub fn query(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dims {
            return Err(Error::Contract(format!(
                "query has {} coordinates but the table has {} axes",
                point.len(),
                self.dims
            )));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("query point contains a non-finite voltage".into()));
        }

        // Per-axis cell index and blend fraction after clamping to the box.
        let mut cell = [0usize; 8];
        let mut frac = [0f64; 8];
        debug_assert!(self.dims <= 8);
        for d in 0..self.dims {
            let axis = &self.axes[d];
            let x = point[d].clamp(axis[0], *axis.last().unwrap());
            // Last interval index i such that axis[i] <= x, capped so that
            // i + 1 stays in range even when x sits on the top face.
            let i = axis.partition_point(|&a| a <= x).saturating_sub(1).min(axis.len() - 2);
            cell[d] = i;
            frac[d] = (x - axis[i]) / (axis[i + 1] - axis[i]);
        }

        // Row-major strides: the last axis varies fastest.
        let mut strides = [0usize; 8];
        let mut s = 1;
        for d in (0..self.dims).rev() {
            strides[d] = s;
            s *= self.axes[d].len();
        }

        let mut acc = 0.0;
        for corner in 0..(1usize << self.dims) {
            let mut weight = 1.0;
            let mut index = 0usize;
            for d in 0..self.dims {
                let high = (corner >> d) & 1 == 1;
                weight *= if high { frac[d] } else { 1.0 - frac[d] };
                index += (cell[d] + high as usize) * strides[d];
            }
            acc += weight * self.values[index];
        }
        Ok(acc)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("cannot encode table: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let lut: Lut = serde_json::from_str(&text).map_err(|e| {
            Error::Parse { line: e.line(), message: format!("bad table file: {e}") }
        })?;
        lut.validate()?;
        Ok(lut)
    }
}
