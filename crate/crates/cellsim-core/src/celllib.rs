//! Standard-cell library: cell kinds, technology parameters, and the
//! closed-form current-source model.
//!
//! Every cell is reduced to a single voltage-controlled output current source
//! plus three fixed capacitors (input, input-output coupling, output). The
//! current surface is a smooth analytic surrogate built from two primitives:
//!
//! * drive strength `f(v) = softplus(k_sharp * (v - v_th))^2`, a smooth
//!   square-law turn-on of a transistor driven by gate voltage `v`, and
//! * saturation `g(v) = tanh(alpha_sat * v)`, the fraction of full drive
//!   available at `v` volts across the conducting stack.
//!
//! An INV sources `f(v_dd - v_i) * g(v_dd - v_o)` (pull-up) against
//! `f(v_i) * g(v_o)` (pull-down). Two-input cells combine device strengths
//! the way their stacks are wired: parallel strengths add, series strengths
//! compose harmonically (`f_a * f_b / (f_a + f_b)`, doubled so that two equal
//! devices in series match one device of half strength). NAND2 has parallel
//! pull-up and series pull-down; NOR2 is its dual.
//!
//! The model is evaluated on `D` node voltages per cell: input(s) plus the
//! output. Internal stack nodes are eliminated quasi-statically, so `D = 2`
//! for INV and `D = 3` for NAND2/NOR2. `D` is always carried as data (the
//! `eval_dim` of a kind) rather than assumed, so wider variants stay possible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard against a zero denominator when both series devices are fully off.
const SERIES_EPS: f64 = 1e-18;

/// How far outside `[0, v_dd]` a node voltage may legitimately sit
/// (overshoot from capacitive coupling), as a fraction of `v_dd`.
pub const OVERSHOOT_FRACTION: f64 = 0.2;

/// The three cell kinds every circuit is mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Inv,
    Nand2,
    Nor2,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Inv, CellKind::Nand2, CellKind::Nor2];

    /// Number of logic inputs.
    pub fn input_count(self) -> usize {
        match self {
            CellKind::Inv => 1,
            CellKind::Nand2 | CellKind::Nor2 => 2,
        }
    }

    /// Number of node voltages the current model depends on: the inputs plus
    /// the output node.
    pub fn eval_dim(self) -> usize {
        self.input_count() + 1
    }

    /// Dense index used by per-kind tables.
    pub fn index(self) -> usize {
        match self {
            CellKind::Inv => 0,
            CellKind::Nand2 => 1,
            CellKind::Nor2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Inv => "INV",
            CellKind::Nand2 => "NAND2",
            CellKind::Nor2 => "NOR2",
        }
    }

    /// Boolean function of the cell, used for DC initialization and for the
    /// logic-equivalence check after technology mapping.
    pub fn logic_eval(self, inputs: &[bool]) -> bool {
        match self {
            CellKind::Inv => !inputs[0],
            CellKind::Nand2 => !(inputs[0] && inputs[1]),
            CellKind::Nor2 => !(inputs[0] || inputs[1]),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed capacitors of one cell, in farads.
///
/// `c_in` loads each input net, `c_m` couples the (first) input to the output
/// (the charge injected by a fast input edge), `c_out` is the intrinsic
/// output capacitance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCaps {
    pub c_in: f64,
    pub c_m: f64,
    pub c_out: f64,
}

impl CellCaps {
    fn validate(&self, kind: CellKind) -> Result<()> {
        for (name, v) in [("c_in", self.c_in), ("c_m", self.c_m), ("c_out", self.c_out)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{kind} {name} must be a positive finite capacitance, got {v:e}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for CellCaps {
    fn default() -> Self {
        CellCaps { c_in: 0.1e-15, c_m: 0.02e-15, c_out: 0.1e-15 }
    }
}

/// Technology parameters: supply, device constants of the analytic surrogate,
/// and per-kind capacitances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TechnologyParams {
    pub name: String,
    /// Supply voltage, volts.
    pub v_dd: f64,
    /// Device threshold voltage, volts.
    pub v_th: f64,
    /// Turn-on sharpness of the drive strength, 1/volt.
    pub k_sharp: f64,
    /// Saturation sharpness across a conducting stack, 1/volt.
    pub alpha_sat: f64,
    /// Current scale: the output current is `g_scale` times a dimensionless
    /// strength, amperes.
    pub g_scale: f64,
    pub inv: CellCaps,
    pub nand2: CellCaps,
    pub nor2: CellCaps,
}

impl Default for TechnologyParams {
    fn default() -> Self {
        TechnologyParams {
            name: "generic-0v7".to_string(),
            v_dd: 0.7,
            v_th: 0.2,
            k_sharp: 20.0,
            alpha_sat: 10.0,
            g_scale: 10e-6,
            inv: CellCaps::default(),
            nand2: CellCaps::default(),
            nor2: CellCaps::default(),
        }
    }
}

impl TechnologyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_dd.is_finite() && self.v_dd > 0.0) {
            return Err(Error::Config(format!("v_dd must be positive, got {}", self.v_dd)));
        }
        if !(self.v_th.is_finite() && self.v_th > 0.0 && self.v_th < self.v_dd) {
            return Err(Error::Config(format!(
                "v_th must lie strictly inside (0, v_dd), got {} with v_dd {}",
                self.v_th, self.v_dd
            )));
        }
        for (name, v) in [
            ("k_sharp", self.k_sharp),
            ("alpha_sat", self.alpha_sat),
            ("g_scale", self.g_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for kind in CellKind::ALL {
            self.caps(kind).validate(kind)?;
        }
        Ok(())
    }

    pub fn caps(&self, kind: CellKind) -> CellCaps {
        match kind {
            CellKind::Inv => self.inv,
            CellKind::Nand2 => self.nand2,
            CellKind::Nor2 => self.nor2,
        }
    }

    /// Lowest voltage a node may reach (bounded undershoot below ground).
    pub fn admissible_lo(&self) -> f64 {
        -OVERSHOOT_FRACTION * self.v_dd
    }

    /// Highest voltage a node may reach (bounded overshoot above supply).
    pub fn admissible_hi(&self) -> f64 {
        (1.0 + OVERSHOOT_FRACTION) * self.v_dd
    }

    pub fn clamp_admissible(&self, v: f64) -> f64 {
        v.clamp(self.admissible_lo(), self.admissible_hi())
    }

    /// Drive strength of a device whose gate sits `v` volts above its source.
    pub fn drive(&self, v: f64) -> f64 {
        let s = softplus(self.k_sharp * (v - self.v_th));
        s * s
    }

    /// Fraction of full drive available across a stack with `v` volts on it.
    /// Odd in `v`: a reversed stack conducts backwards.
    pub fn saturation(&self, v: f64) -> f64 {
        (self.alpha_sat * v).tanh()
    }

    /// Output current of `kind` at node voltages `v` (inputs then output),
    /// in amperes, positive charging the output node.
    pub fn output_current(&self, kind: CellKind, v: &[f64]) -> Result<f64> {
        let d = kind.eval_dim();
        if v.len() != d {
            return Err(Error::Contract(format!(
                "{kind} takes {d} node voltages, got {}",
                v.len()
            )));
        }
        let lo = self.admissible_lo();
        let hi = self.admissible_hi();
        for &x in v {
            if !x.is_finite() {
                return Err(Error::Contract(format!("non-finite node voltage {x}")));
            }
            if x < lo || x > hi {
                return Err(Error::Contract(format!(
                    "node voltage {x} outside the admissible box [{lo}, {hi}]"
                )));
            }
        }
        Ok(self.output_current_unchecked(kind, v))
    }

    pub(crate) fn output_current_unchecked(&self, kind: CellKind, v: &[f64]) -> f64 {
        let vdd = self.v_dd;
        match kind {
            CellKind::Inv => {
                let (vi, vo) = (v[0], v[1]);
                self.g_scale
                    * (self.drive(vdd - vi) * self.saturation(vdd - vo)
                        - self.drive(vi) * self.saturation(vo))
            }
            CellKind::Nand2 => {
                let (va, vb, vo) = (v[0], v[1], v[2]);
                let up = self.drive(vdd - va) + self.drive(vdd - vb);
                let (fa, fb) = (self.drive(va), self.drive(vb));
                let down = fa * fb / (fa + fb + SERIES_EPS);
                self.g_scale
                    * (up * self.saturation(vdd - vo) - 2.0 * down * self.saturation(vo))
            }
            CellKind::Nor2 => {
                let (va, vb, vo) = (v[0], v[1], v[2]);
                let (fa, fb) = (self.drive(vdd - va), self.drive(vdd - vb));
                let up = fa * fb / (fa + fb + SERIES_EPS);
                let down = self.drive(va) + self.drive(vb);
                self.g_scale
                    * (2.0 * up * self.saturation(vdd - vo) - down * self.saturation(vo))
            }
        }
    }

    /// Full current-source-model evaluation: output current at `v` plus the
    /// cell's fixed capacitances.
    pub fn eval_csm(&self, kind: CellKind, v: &[f64]) -> Result<CsmComponents> {
        let i_out = self.output_current(kind, v)?;
        let caps = self.caps(kind);
        Ok(CsmComponents { i_out, c_in: caps.c_in, c_m: caps.c_m, c_out: caps.c_out })
    }
}

/// One evaluation of the current-source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsmComponents {
    /// Output current, amperes, positive charging the output node.
    pub i_out: f64,
    pub c_in: f64,
    pub c_m: f64,
    pub c_out: f64,
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tech() -> TechnologyParams {
        TechnologyParams::default()
    }

    #[test]
    fn softplus_matches_naive_form_and_is_stable() {
        for x in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            assert_relative_eq!(softplus(x), (1.0 + x.exp()).ln(), max_relative = 1e-14);
        }
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2, max_relative = 1e-15);
        assert_relative_eq!(softplus(800.0), 800.0, max_relative = 1e-15);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }

    #[test]
    fn defaults_are_consistent() {
        let t = tech();
        t.validate().unwrap();
        assert!(t.v_th > 0.0 && t.v_th < t.v_dd);
        assert_eq!(t.caps(CellKind::Nand2).c_m, 0.02e-15);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut t = tech();
        t.v_th = t.v_dd;
        assert!(matches!(t.validate(), Err(Error::Config(_))));

        let mut t = tech();
        t.inv.c_out = 0.0;
        assert!(matches!(t.validate(), Err(Error::Config(_))));

        let mut t = tech();
        t.g_scale = -1.0;
        assert!(matches!(t.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn eval_dims_and_logic() {
        assert_eq!(CellKind::Inv.eval_dim(), 2);
        assert_eq!(CellKind::Nand2.eval_dim(), 3);
        assert_eq!(CellKind::Nor2.eval_dim(), 3);
        assert!(CellKind::Inv.logic_eval(&[false]));
        assert!(CellKind::Nand2.logic_eval(&[true, false]));
        assert!(!CellKind::Nand2.logic_eval(&[true, true]));
        assert!(!CellKind::Nor2.logic_eval(&[true, false]));
        assert!(CellKind::Nor2.logic_eval(&[false, false]));
    }

    #[test]
    fn inv_balanced_midpoint_carries_no_current() {
        let t = tech();
        let mid = t.v_dd / 2.0;
        let i = t.output_current(CellKind::Inv, &[mid, mid]).unwrap();
        assert_eq!(i, 0.0);
    }

    #[test]
    fn inv_settled_corner_current_is_small() {
        let t = tech();
        // Input low, output charged to the supply: only the weak off-device
        // leaks, softplus(-4)^2 ~ 3.3e-4 in units of g_scale.
        let i = t.output_current(CellKind::Inv, &[0.0, t.v_dd]).unwrap();
        assert!(i < 0.0, "off leakage discharges the output, got {i:e}");
        assert!(i.abs() < 1e-3 * t.g_scale, "leak too large: {i:e}");
        assert_relative_eq!(i.abs(), 3.294e-4 * t.g_scale, max_relative = 1e-3);
    }

    #[test]
    fn inv_is_antisymmetric_about_the_midpoint() {
        let t = tech();
        for (vi, vo) in [(0.1, 0.6), (0.25, 0.3), (0.0, 0.0), (0.7, 0.12), (0.33, 0.71)] {
            let a = t.output_current(CellKind::Inv, &[vi, vo]).unwrap();
            let b = t
                .output_current(CellKind::Inv, &[t.v_dd - vi, t.v_dd - vo])
                .unwrap();
            assert_relative_eq!(a, -b, max_relative = 1e-12, epsilon = 1e-30);
        }
    }

    #[test]
    fn nand2_is_symmetric_in_its_inputs() {
        let t = tech();
        for (va, vb, vo) in [(0.1, 0.6, 0.3), (0.0, 0.7, 0.7), (0.42, 0.13, 0.05)] {
            let ab = t.output_current(CellKind::Nand2, &[va, vb, vo]).unwrap();
            let ba = t.output_current(CellKind::Nand2, &[vb, va, vo]).unwrap();
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn nor2_is_the_dual_of_nand2() {
        let t = tech();
        for (va, vb, vo) in [(0.1, 0.6, 0.3), (0.05, 0.2, 0.65), (0.7, 0.7, 0.0)] {
            let nor = t.output_current(CellKind::Nor2, &[va, vb, vo]).unwrap();
            let nand = t
                .output_current(CellKind::Nand2, &[t.v_dd - va, t.v_dd - vb, t.v_dd - vo])
                .unwrap();
            assert_relative_eq!(nor, -nand, max_relative = 1e-12, epsilon = 1e-30);
        }
    }

    #[test]
    fn nand2_series_stack_matches_one_device_at_equal_inputs() {
        let t = tech();
        // With both inputs at x the series composition 2*f^2/(2f) collapses
        // to f(x): the stack pulls like a single device.
        for x in [0.2, 0.35, 0.5, 0.7] {
            let i = t.output_current(CellKind::Nand2, &[x, x, 0.3]).unwrap();
            let up = 2.0 * t.drive(t.v_dd - x) * t.saturation(t.v_dd - 0.3);
            let down = t.drive(x) * t.saturation(0.3);
            assert_relative_eq!(i, t.g_scale * (up - down), max_relative = 1e-12);
        }
    }

    #[test]
    fn nand2_pull_up_dominates_when_either_input_is_low() {
        let t = tech();
        // One input low: output charges toward the supply.
        let i = t.output_current(CellKind::Nand2, &[0.0, 0.7, 0.2]).unwrap();
        assert!(i > 0.0);
        // Both inputs high: series stack discharges the output.
        let i = t.output_current(CellKind::Nand2, &[0.7, 0.7, 0.5]).unwrap();
        assert!(i < 0.0);
    }

    #[test]
    fn wrong_dimension_is_a_contract_violation() {
        let t = tech();
        let e = t.output_current(CellKind::Inv, &[0.1, 0.2, 0.3]).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
        let e = t.output_current(CellKind::Nand2, &[0.1, 0.2]).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
    }

    #[test]
    fn non_finite_and_out_of_box_inputs_are_rejected() {
        let t = tech();
        assert!(t.output_current(CellKind::Inv, &[f64::NAN, 0.0]).is_err());
        assert!(t.output_current(CellKind::Inv, &[0.0, f64::INFINITY]).is_err());
        assert!(t.output_current(CellKind::Inv, &[2.0 * t.v_dd, 0.0]).is_err());
        // Bounded overshoot is legal.
        assert!(t.output_current(CellKind::Inv, &[t.admissible_hi(), 0.0]).is_ok());
        assert!(t.output_current(CellKind::Inv, &[t.admissible_lo(), 0.0]).is_ok());
    }

    #[test]
    fn eval_csm_bundles_the_kind_capacitances() {
        let t = tech();
        let c = t.eval_csm(CellKind::Nor2, &[0.0, 0.0, 0.1]).unwrap();
        assert_eq!(c.c_in, t.nor2.c_in);
        assert_eq!(c.c_m, t.nor2.c_m);
        assert_eq!(c.c_out, t.nor2.c_out);
        assert!(c.i_out > 0.0);
    }

    #[test]
    fn csm_components_serialize_round_trip() {
        let t = tech();
        let c = t.eval_csm(CellKind::Inv, &[0.3, 0.4]).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: CsmComponents = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }

    proptest! {
        /// |i_out| <= 4 * g_scale * f(v_dd) everywhere on [0, v_dd]^D:
        /// at most two full-strength parallel devices against a saturation
        /// factor of at most one, with the series path bounded by f/2 each.
        #[test]
        fn current_is_bounded_on_the_supply_box(
            kind_idx in 0usize..3,
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
            c in 0.0f64..=1.0,
        ) {
            let t = tech();
            let kind = CellKind::ALL[kind_idx];
            let v: Vec<f64> = [a, b, c][..kind.eval_dim()]
                .iter()
                .map(|x| x * t.v_dd)
                .collect();
            let i = t.output_current(kind, &v).unwrap();
            let bound = 4.0 * t.g_scale * t.drive(t.v_dd);
            prop_assert!(i.abs() <= bound, "|{i:e}| > {bound:e} at {v:?}");
        }

        /// The INV current decreases as the input rises (stronger pull-down)
        /// and decreases as the output rises (less headroom), both at fixed
        /// other node.
        #[test]
        fn inv_current_is_monotone_in_each_node(
            v0 in 0.0f64..=0.7,
            dv in 1e-4f64..=0.2,
            other in 0.0f64..=0.7,
        ) {
            let t = tech();
            let hi = (v0 + dv).min(t.v_dd);
            let i_in_lo = t.output_current(CellKind::Inv, &[v0, other]).unwrap();
            let i_in_hi = t.output_current(CellKind::Inv, &[hi, other]).unwrap();
            prop_assert!(i_in_hi <= i_in_lo + 1e-18);
            let i_out_lo = t.output_current(CellKind::Inv, &[other, v0]).unwrap();
            let i_out_hi = t.output_current(CellKind::Inv, &[other, hi]).unwrap();
            prop_assert!(i_out_hi <= i_out_lo + 1e-18);
        }
    }
}
