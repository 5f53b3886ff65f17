//! Scalar force-extension laws.
//!
//! A [`MaterialLaw`] maps bond extension `e = |y| - |b|` to a signed force
//! magnitude. In tension the curve is trilinear: linear elastic up to the
//! yield extension, linear hardening up to the fracture extension, zero
//! beyond it. Compression either mirrors that curve or stays linear.
//! A positive smoothing radius replaces the yield kinks with quadratic
//! blends so the law becomes C¹ below fracture.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("invalid material law: {0}")]
    InvalidParameter(String),
    #[error("extension is not finite")]
    NonFiniteExtension,
    /// Evaluated exactly on an unsmoothed regime boundary. Carries the
    /// left-limit slope, which is the convention used for Jacobians.
    #[error("extension lies on a regime boundary; left-limit slope is {left_slope}")]
    KinkAmbiguity { left_slope: f64 },
    #[error("smoothing radius is zero")]
    SmoothingDisabled,
    #[error("bond collapsed to zero length while still carrying force")]
    DegenerateBond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    /// `f(-e) = -f(e)`: yield and fracture in compression too.
    #[default]
    Symmetric,
    /// `f(e) = k·e` for all `e < 0`.
    LinearOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BondState {
    #[default]
    Intact,
    Broken,
}

impl BondState {
    pub fn is_broken(self) -> bool {
        matches!(self, BondState::Broken)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialLaw {
    stiffness: f64,
    yield_extension: f64,
    hardening_ratio: f64,
    fracture_extension: f64,
    compression: CompressionMode,
    smoothing_radius: f64,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, LawError> {
    Err(LawError::InvalidParameter(msg.into()))
}

impl MaterialLaw {
    /// Infinite `yield_extension` / `fracture_extension` switch the
    /// corresponding regime off.
    pub fn new(
        stiffness: f64,
        yield_extension: f64,
        hardening_ratio: f64,
        fracture_extension: f64,
        compression: CompressionMode,
        smoothing_radius: f64,
    ) -> Result<Self, LawError> {
        if !(stiffness.is_finite() && stiffness > 0.0) {
            return invalid(format!(
                "stiffness must be positive and finite, got {stiffness}"
            ));
        }
        if yield_extension.is_nan() || yield_extension <= 0.0 {
            return invalid(format!(
                "yield extension must be positive, got {yield_extension}"
            ));
        }
        if !(0.0..1.0).contains(&hardening_ratio) {
            return invalid(format!(
                "hardening ratio must lie in [0, 1), got {hardening_ratio}"
            ));
        }
        let both_off = yield_extension.is_infinite() && fracture_extension.is_infinite();
        if fracture_extension.is_nan() || !(fracture_extension > yield_extension || both_off) {
            return invalid(format!(
                "fracture extension ({fracture_extension}) must exceed yield extension ({yield_extension})"
            ));
        }
        if !(smoothing_radius.is_finite() && smoothing_radius >= 0.0) {
            return invalid(format!(
                "smoothing radius must be finite and >= 0, got {smoothing_radius}"
            ));
        }
        if yield_extension.is_finite() && smoothing_radius >= 0.5 * yield_extension {
            return invalid("smoothing radius must be below half the yield extension");
        }
        if fracture_extension.is_finite()
            && smoothing_radius >= 0.5 * (fracture_extension - yield_extension)
        {
            return invalid("smoothing radius must be below half the hardening span");
        }
        Ok(MaterialLaw {
            stiffness,
            yield_extension,
            hardening_ratio,
            fracture_extension,
            compression,
            smoothing_radius,
        })
    }

    /// Purely linear elastic, never yields or breaks.
    pub fn linear(stiffness: f64) -> Result<Self, LawError> {
        Self::new(
            stiffness,
            f64::INFINITY,
            0.0,
            f64::INFINITY,
            CompressionMode::Symmetric,
            0.0,
        )
    }

    pub fn trilinear(
        stiffness: f64,
        yield_extension: f64,
        hardening_ratio: f64,
        fracture_extension: f64,
    ) -> Result<Self, LawError> {
        Self::new(
            stiffness,
            yield_extension,
            hardening_ratio,
            fracture_extension,
            CompressionMode::Symmetric,
            0.0,
        )
    }

    pub fn with_compression(mut self, mode: CompressionMode) -> Self {
        self.compression = mode;
        self
    }

    pub fn with_smoothing(self, radius: f64) -> Result<Self, LawError> {
        Self::new(
            self.stiffness,
            self.yield_extension,
            self.hardening_ratio,
            self.fracture_extension,
            self.compression,
            radius,
        )
    }

    /// Same curve with the fracture drop removed: hardening continues
    /// past the fracture extension.
    pub fn intact(&self) -> Self {
        MaterialLaw {
            fracture_extension: f64::INFINITY,
            ..*self
        }
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }
    pub fn yield_extension(&self) -> f64 {
        self.yield_extension
    }
    pub fn hardening_ratio(&self) -> f64 {
        self.hardening_ratio
    }
    pub fn fracture_extension(&self) -> f64 {
        self.fracture_extension
    }
    pub fn compression(&self) -> CompressionMode {
        self.compression
    }
    pub fn smoothing_radius(&self) -> f64 {
        self.smoothing_radius
    }

    /// True when a bond at extension `e` sits on the zero-force fracture branch.
    pub fn fractures_at(&self, e: f64) -> bool {
        match self.compression {
            CompressionMode::Symmetric => e.abs() > self.fracture_extension,
            CompressionMode::LinearOnly => e > self.fracture_extension,
        }
    }

    /// Signed force magnitude `f(e)`; negative in compression.
    pub fn force_magnitude(&self, e: f64, state: BondState) -> Result<f64, LawError> {
        if !e.is_finite() {
            return Err(LawError::NonFiniteExtension);
        }
        if state.is_broken() {
            return Ok(0.0);
        }
        Ok(self.eval(e))
    }

    /// Exact derivative `f'(e)` of [`force_magnitude`](Self::force_magnitude).
    pub fn tangent_modulus(&self, e: f64, state: BondState) -> Result<f64, LawError> {
        if !e.is_finite() {
            return Err(LawError::NonFiniteExtension);
        }
        if state.is_broken() {
            return Ok(0.0);
        }
        let (left, right) = self.slopes(e);
        if left == right {
            Ok(left)
        } else {
            Err(LawError::KinkAmbiguity { left_slope: left })
        }
    }

    /// Tangent with the left-limit convention applied at kinks.
    pub fn tangent_left(&self, e: f64, state: BondState) -> Result<f64, LawError> {
        match self.tangent_modulus(e, state) {
            Err(LawError::KinkAmbiguity { left_slope }) => Ok(left_slope),
            other => other,
        }
    }

    /// The smoothed curve. Identical to `force_magnitude` on an intact bond
    /// whenever the smoothing radius is positive.
    pub fn smooth_evaluate(&self, e: f64) -> Result<f64, LawError> {
        if self.smoothing_radius == 0.0 {
            return Err(LawError::SmoothingDisabled);
        }
        self.force_magnitude(e, BondState::Intact)
    }

    /// Diagonal entry `f(|y| - |b|) / |y|` of the secant stiffness `K(y)`.
    ///
    /// Below `degenerate_length` the ratio is only defined when the law
    /// carries no force at total collapse.
    pub fn secant_coefficient(
        &self,
        y_norm: f64,
        rest_length: f64,
        degenerate_length: f64,
        state: BondState,
    ) -> Result<f64, LawError> {
        if state.is_broken() {
            return Ok(0.0);
        }
        let f = self.force_magnitude(y_norm - rest_length, state)?;
        if y_norm < degenerate_length {
            return if f == 0.0 {
                Ok(0.0)
            } else {
                Err(LawError::DegenerateBond)
            };
        }
        Ok(f / y_norm)
    }

    fn eval(&self, e: f64) -> f64 {
        if e >= 0.0 {
            self.tension(e)
        } else {
            match self.compression {
                CompressionMode::Symmetric => -self.tension(-e),
                CompressionMode::LinearOnly => self.stiffness * e,
            }
        }
    }

    /// One-sided slopes `(f'(e⁻), f'(e⁺))`.
    fn slopes(&self, e: f64) -> (f64, f64) {
        if e >= 0.0 {
            self.tension_slopes(e)
        } else {
            match self.compression {
                // f(e) = -g(-e), so f'(e) = g'(-e) and the sides swap
                CompressionMode::Symmetric => {
                    let (l, r) = self.tension_slopes(-e);
                    (r, l)
                }
                CompressionMode::LinearOnly => (self.stiffness, self.stiffness),
            }
        }
    }

    fn in_blend(&self, t: f64) -> bool {
        let r = self.smoothing_radius;
        r > 0.0 && (t - self.yield_extension).abs() < r
    }

    /// Tension branch `g(t)` for `t >= 0`.
    fn tension(&self, t: f64) -> f64 {
        let (k, ey, h) = (self.stiffness, self.yield_extension, self.hardening_ratio);
        if t > self.fracture_extension {
            0.0
        } else if self.in_blend(t) {
            let r = self.smoothing_radius;
            let s = t - ey + r;
            k * t - (1.0 - h) * k * s * s / (4.0 * r)
        } else if t <= ey {
            k * t
        } else {
            k * ey + h * k * (t - ey)
        }
    }

    fn tension_slopes(&self, t: f64) -> (f64, f64) {
        let (k, ey, h) = (self.stiffness, self.yield_extension, self.hardening_ratio);
        let ef = self.fracture_extension;
        if t > ef {
            return (0.0, 0.0);
        }
        if self.in_blend(t) {
            let r = self.smoothing_radius;
            let s = t - ey + r;
            let d = k - (1.0 - h) * k * s / (2.0 * r);
            return (d, d);
        }
        let left = if t <= ey { k } else { h * k };
        let right = if t == ef {
            0.0
        } else if t < ey {
            k
        } else {
            h * k
        };
        (left, right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Straight-line evaluation of the unsmoothed trilinear curve, written
    /// independently of `MaterialLaw::eval`.
    fn brute_trilinear(k: f64, ey: f64, h: f64, ef: f64, e: f64) -> f64 {
        let t = e.abs();
        let mag = if t > ef {
            0.0
        } else if t <= ey {
            k * t
        } else {
            k * ey + h * k * (t - ey)
        };
        mag.copysign(e)
    }

    fn central(law: &MaterialLaw, e: f64, h: f64) -> f64 {
        let st = BondState::Intact;
        (law.force_magnitude(e + h, st).unwrap() - law.force_magnitude(e - h, st).unwrap())
            / (2.0 * h)
    }

    #[test]
    fn documented_values() {
        let st = BondState::Intact;
        assert_eq!(
            MaterialLaw::linear(1.0)
                .unwrap()
                .force_magnitude(0.0, st)
                .unwrap(),
            0.0
        );
        let law = MaterialLaw::trilinear(2.0, 0.5, 0.1, 1.0).unwrap();
        assert!((law.force_magnitude(0.3, st).unwrap() - 0.6).abs() < 1e-15);
        let expected = brute_trilinear(2.0, 0.5, 0.1, 1.0, 0.8);
        assert!((expected - 1.06).abs() < 1e-14);
        assert!((law.force_magnitude(0.8, st).unwrap() - expected).abs() < 1e-15);
        assert_eq!(law.force_magnitude(2.0, st).unwrap(), 0.0);
        assert!(law.fractures_at(2.0));
        assert_eq!(law.force_magnitude(0.3, BondState::Broken).unwrap(), 0.0);
    }

    #[test]
    fn compression_modes() {
        let st = BondState::Intact;
        let sym = MaterialLaw::trilinear(2.0, 0.5, 0.1, 1.0).unwrap();
        assert!((sym.force_magnitude(-0.8, st).unwrap() + 1.06).abs() < 1e-14);
        assert_eq!(sym.force_magnitude(-1.5, st).unwrap(), 0.0);
        let lin = sym.with_compression(CompressionMode::LinearOnly);
        assert_eq!(lin.force_magnitude(-1.5, st).unwrap(), -3.0);
        assert!(!lin.fractures_at(-1.5));
    }

    #[test]
    fn tangents() {
        let st = BondState::Intact;
        let law = MaterialLaw::trilinear(3.0, 0.5, 0.1, 1.0).unwrap();
        assert_eq!(law.tangent_modulus(0.2, st).unwrap(), 3.0);
        let law = MaterialLaw::trilinear(2.0, 0.5, 0.1, 1.0).unwrap();
        assert!((law.tangent_modulus(0.7, st).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(law.tangent_modulus(1.5, st).unwrap(), 0.0);
        assert_eq!(law.tangent_modulus(0.2, BondState::Broken).unwrap(), 0.0);
        assert_eq!(
            law.tangent_modulus(0.5, st),
            Err(LawError::KinkAmbiguity { left_slope: 2.0 })
        );
        // compression kink: left of -e_y is the hardening side
        assert_eq!(
            law.tangent_left(-0.5, st).unwrap(),
            law.tangent_modulus(-0.6, st).unwrap()
        );
        assert_eq!(
            law.tangent_modulus(f64::NAN, st),
            Err(LawError::NonFiniteExtension)
        );
    }

    #[test]
    fn smoothed_tangent_at_yield_matches_differences() {
        let law = MaterialLaw::trilinear(2.0, 0.5, 0.1, 1.0)
            .unwrap()
            .with_smoothing(0.05)
            .unwrap();
        let t = law.tangent_modulus(0.5, BondState::Intact).unwrap();
        assert!((t - 2.0 * 1.1 / 2.0).abs() < 1e-14);
        let fd = central(&law, 0.5, 1e-6);
        assert!((fd - t).abs() <= 1e-6 * t.abs());
    }

    #[test]
    fn smoothing_is_local_and_c1() {
        let raw = MaterialLaw::trilinear(2.0, 0.5, 0.1, 1.0).unwrap();
        let r = 0.05;
        let law = raw.with_smoothing(r).unwrap();
        let st = BondState::Intact;
        for e in [
            0.5 + 2.0 * r,
            0.5 - 2.0 * r,
            0.5 + r,
            0.5 - r,
            0.9,
            0.1,
            -0.3,
            -0.7,
        ] {
            assert!(
                (law.smooth_evaluate(e).unwrap() - raw.force_magnitude(e, st).unwrap()).abs()
                    < 1e-15,
                "e = {e}"
            );
        }
        // one-sided second-order differences are exact on each quadratic or
        // linear piece, so left and right slopes must agree at every joint
        let h = 1e-4;
        let f = |e: f64| law.smooth_evaluate(e).unwrap();
        for joint in [0.5 - r, 0.5, 0.5 + r, -0.5 - r, -0.5, -0.5 + r] {
            let left = (3.0 * f(joint) - 4.0 * f(joint - h) + f(joint - 2.0 * h)) / (2.0 * h);
            let right = (-3.0 * f(joint) + 4.0 * f(joint + h) - f(joint + 2.0 * h)) / (2.0 * h);
            assert!(
                (left - right).abs() < 1e-8,
                "joint {joint}: {left} vs {right}"
            );
        }
        assert_eq!(raw.smooth_evaluate(0.3), Err(LawError::SmoothingDisabled));
    }

    #[test]
    fn shrinking_radius_converges_to_kinked_law() {
        let raw = MaterialLaw::trilinear(2.0, 0.5, 0.1, 1.0).unwrap();
        let exact = raw.force_magnitude(0.5, BondState::Intact).unwrap();
        let mut prev = f64::INFINITY;
        for r in [0.1, 0.01, 0.001, 1e-4] {
            let gap = (raw.with_smoothing(r).unwrap().smooth_evaluate(0.5).unwrap() - exact).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn secant_coefficients() {
        let law = MaterialLaw::linear(1.0).unwrap();
        let st = BondState::Intact;
        assert_eq!(law.secant_coefficient(1.3, 1.3, 1e-12, st).unwrap(), 0.0);
        assert_eq!(law.secant_coefficient(2.0, 1.0, 1e-12, st).unwrap(), 0.5);
        assert_eq!(
            law.secant_coefficient(2.0, 1.0, 1e-12, BondState::Broken)
                .unwrap(),
            0.0
        );
        assert_eq!(
            law.secant_coefficient(0.0, 1.0, 1e-12, st),
            Err(LawError::DegenerateBond)
        );
        // crushed past the compressive fracture extension: no force, finite limit
        let brittle = MaterialLaw::trilinear(1.0, 0.1, 0.0, 0.3).unwrap();
        assert_eq!(
            brittle.secant_coefficient(0.0, 1.0, 1e-12, st).unwrap(),
            0.0
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MaterialLaw::trilinear(0.0, 0.5, 0.1, 1.0).is_err());
        assert!(MaterialLaw::trilinear(1.0, 0.5, 1.0, 1.0).is_err());
        assert!(MaterialLaw::trilinear(1.0, 0.5, 0.1, 0.5).is_err());
        assert!(MaterialLaw::trilinear(1.0, 0.5, 0.1, 1.0)
            .unwrap()
            .with_smoothing(0.25)
            .is_err());
        assert!(MaterialLaw::trilinear(1.0, 0.5, 0.1, 0.7)
            .unwrap()
            .with_smoothing(0.1)
            .is_err());
        assert!(MaterialLaw::trilinear(1.0, 0.5, 0.1, 0.7)
            .unwrap()
            .with_smoothing(0.09)
            .is_ok());
    }

    fn arb_law() -> impl Strategy<Value = MaterialLaw> {
        (
            0.1f64..10.0,
            0.05f64..1.0,
            0.0f64..0.9,
            0.05f64..2.0,
            0.0f64..0.45,
            any::<bool>(),
        )
            .prop_map(|(k, ey, h, span, rfrac, sym)| {
                let ef = ey + span;
                let r = rfrac * (ey / 2.0).min(span / 2.0);
                let mode = if sym {
                    CompressionMode::Symmetric
                } else {
                    CompressionMode::LinearOnly
                };
                MaterialLaw::new(k, ey, h, ef, mode, r).unwrap()
            })
    }

    fn near_kink(law: &MaterialLaw, e: f64, margin: f64) -> bool {
        let r = law.smoothing_radius();
        let (ey, ef) = (law.yield_extension(), law.fracture_extension());
        let mut kinks = vec![ef, -ef];
        if r == 0.0 {
            kinks.extend([ey, -ey]);
        } else {
            // blend edges are C¹ but not C², which costs FD accuracy
            kinks.extend([ey - r, ey + r, -ey - r, -ey + r]);
        }
        kinks.iter().any(|k| (e - k).abs() < margin)
    }

    proptest! {
        #[test]
        fn sign_property(law in arb_law(), e in -4.0f64..4.0) {
            let f = law.force_magnitude(e, BondState::Intact).unwrap();
            if e > 0.0 { prop_assert!(f >= 0.0); }
            if e < 0.0 { prop_assert!(f <= 0.0); }
            prop_assert_eq!(law.force_magnitude(0.0, BondState::Intact).unwrap(), 0.0);
        }

        #[test]
        fn unsmoothed_matches_brute_force(k in 0.1f64..10.0, ey in 0.05f64..1.0, h in 0.0f64..0.9,
                                          span in 0.05f64..2.0, e in -4.0f64..4.0) {
            let law = MaterialLaw::trilinear(k, ey, h, ey + span).unwrap();
            let f = law.force_magnitude(e, BondState::Intact).unwrap();
            prop_assert!((f - brute_trilinear(k, ey, h, ey + span, e)).abs() <= 1e-13 * (1.0 + f.abs()));
        }

        #[test]
        fn tangent_matches_central_differences(law in arb_law(), e in -3.0f64..3.0) {
            let step = 1e-6;
            prop_assume!(!near_kink(&law, e, 1e-4));
            let t = law.tangent_modulus(e, BondState::Intact).unwrap();
            let fd = central(&law, e, step);
            prop_assert!((fd - t).abs() <= 1e-6 * t.abs().max(1e-3 * law.stiffness()),
                "e={} t={} fd={}", e, t, fd);
        }

        #[test]
        fn monotone_below_fracture(law in arb_law(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let law = law.with_compression(CompressionMode::Symmetric);
            let ef = law.fracture_extension();
            let (lo, hi) = (a.min(b) * ef, a.max(b) * ef);
            let st = BondState::Intact;
            prop_assert!(law.force_magnitude(lo, st).unwrap() <= law.force_magnitude(hi, st).unwrap());
        }

        #[test]
        fn secant_zero_at_rest(law in arb_law(), rest in 0.01f64..10.0) {
            prop_assert_eq!(law.secant_coefficient(rest, rest, 1e-12, BondState::Intact).unwrap(), 0.0);
        }
    }
}
