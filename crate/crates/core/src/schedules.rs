//! Momentum sequences `a_0, a_1, a_2, …` for the accelerated methods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "constant_one")]
    ConstantOne,
    #[serde(rename = "apgd_sublinear")]
    ApgdSublinear,
    #[serde(rename = "apgd_capped")]
    ApgdCapped,
    #[serde(rename = "regS")]
    RegS,
    #[serde(rename = "regS_capped")]
    RegSCapped,
    #[serde(rename = "regB")]
    RegB,
    #[serde(rename = "regB_capped")]
    RegBCapped,
    #[serde(rename = "regC")]
    RegC,
    #[serde(rename = "regC_capped")]
    RegCCapped,
    /// Replays a materialized list of values.
    #[serde(rename = "explicit")]
    Explicit,
}

impl Regime {
    pub fn is_capped(self) -> bool {
        matches!(self, Regime::ApgdCapped | Regime::RegSCapped | Regime::RegBCapped | Regime::RegCCapped)
    }

    pub fn is_apgd(self) -> bool {
        matches!(self, Regime::ApgdSublinear | Regime::ApgdCapped)
    }

    /// Regimes B and C share the schedule and the Lyapunov shape.
    pub fn is_bc(self) -> bool {
        matches!(self, Regime::RegB | Regime::RegBCapped | Regime::RegC | Regime::RegCCapped)
    }

    pub fn is_s(self) -> bool {
        matches!(self, Regime::RegS | Regime::RegSCapped)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::ConstantOne => "constant_one",
            Regime::ApgdSublinear => "apgd_sublinear",
            Regime::ApgdCapped => "apgd_capped",
            Regime::RegS => "regS",
            Regime::RegSCapped => "regS_capped",
            Regime::RegB => "regB",
            Regime::RegBCapped => "regB_capped",
            Regime::RegC => "regC",
            Regime::RegCCapped => "regC_capped",
            Regime::Explicit => "explicit",
        }
    }
}

/// Growth form of the APGD sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApgdForm {
    /// `a_t = (t+1)/2`.
    Linear,
    /// `a_{t+1} = (1 + √(1 + 4a_t²))/2`.
    #[default]
    Recursive,
}

/// Constants the schedule rules depend on. Unused fields may stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gamma: f64,
    pub tau: f64,
    pub mu_g: f64,
    pub mu_hconj: f64,
    pub lipschitz: f64,
    /// `λ_min(KK*)` for regime B, `λ⁺_min(KK*)` for regime C.
    pub lam: f64,
    pub k_norm_sq: f64,
    pub nu: f64,
    #[serde(default)]
    pub form: ApgdForm,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            tau: 0.0,
            mu_g: 0.0,
            mu_hconj: 0.0,
            lipschitz: 0.0,
            lam: 0.0,
            k_norm_sq: 0.0,
            nu: 1.0,
            form: ApgdForm::Recursive,
        }
    }
}

/// `(1 + √(1 + 4a²))/2`, the largest value with `a⁺² − a⁺ ≤ a²`.
pub fn nesterov_bound(a: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * a * a).sqrt())
}

/// Stateful iterator over `a_t`; the first item is `a_0`.
#[derive(Debug, Clone)]
pub struct MomentumSchedule {
    regime: Regime,
    params: ScheduleParams,
    a_sharp: Option<f64>,
    values: Vec<f64>,
    t: usize,
    current: f64,
    /// `a_0` not yet yielded by the iterator.
    fresh: bool,
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config(format!("schedule parameter {name} must be positive and finite, got {v}")))
    }
}

impl MomentumSchedule {
    pub fn new(regime: Regime, params: ScheduleParams) -> Result<Self> {
        let p = &params;
        match regime {
            Regime::ConstantOne | Regime::ApgdSublinear => {}
            Regime::Explicit => return Err(config("explicit schedules are built with from_values")),
            Regime::ApgdCapped => {
                require_positive("mu_g", p.mu_g)?;
                require_positive("lipschitz", p.lipschitz)?;
            }
            Regime::RegS | Regime::RegSCapped => {
                require_positive("tau", p.tau)?;
                require_positive("mu_hconj", p.mu_hconj)?;
                if regime.is_capped() {
                    require_positive("mu_g", p.mu_g)?;
                    require_positive("lipschitz", p.lipschitz)?;
                }
            }
            _ => {
                require_positive("gamma", p.gamma)?;
                require_positive("lipschitz", p.lipschitz)?;
                require_positive("lam", p.lam)?;
                require_positive("k_norm_sq", p.k_norm_sq)?;
                if !(p.nu > 0.0 && p.nu <= 1.0) {
                    return Err(config(format!("nu must lie in (0, 1], got {}", p.nu)));
                }
                if p.gamma * p.lipschitz > 0.5 * (1.0 + 1e-12) {
                    return Err(config(format!(
                        "{} requires gamma <= 1/(2 L_f): gamma = {}, 1/(2 L_f) = {}",
                        regime.name(),
                        p.gamma,
                        0.5 / p.lipschitz
                    )));
                }
                if regime.is_capped() {
                    require_positive("mu_g", p.mu_g)?;
                }
            }
        }
        let a_sharp = match regime {
            Regime::ApgdCapped | Regime::RegSCapped => Some((p.lipschitz / p.mu_g).sqrt().max(1.0)),
            Regime::RegBCapped | Regime::RegCCapped => {
                let raw = (p.lam / (2.0 * p.mu_g * p.lipschitz * p.k_norm_sq)).sqrt() / p.gamma;
                Some(raw.max(1.0))
            }
            _ => None,
        };
        let mut s = Self {
            regime,
            params,
            a_sharp,
            values: Vec::new(),
            t: 0,
            current: 0.0,
            fresh: true,
        };
        s.current = s.initial();
        Ok(s)
    }

    /// Replays the given values; fails with [`Error::ScheduleExhausted`] past
    /// the end when driven through [`MomentumSchedule::advance`].
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(config("explicit schedule needs at least one value"));
        }
        if values.iter().skip(1).any(|&a| !(a >= 1.0)) || !(values[0] >= 0.0) {
            return Err(config("explicit schedule needs a_0 >= 0 and a_t >= 1 for t >= 1"));
        }
        Ok(Self {
            regime: Regime::Explicit,
            params: ScheduleParams::default(),
            a_sharp: None,
            current: values[0],
            values,
            t: 0,
            fresh: true,
        })
    }

    fn initial(&self) -> f64 {
        match self.regime {
            Regime::ApgdSublinear | Regime::ApgdCapped => 0.0,
            Regime::RegS | Regime::RegSCapped => {
                let s = self.params.tau * self.params.mu_hconj;
                ((s * s + 4.0).sqrt() - s) / 2.0
            }
            Regime::Explicit => self.values[0],
            _ => 1.0,
        }
    }

    fn rule(&self, t: usize, a: f64) -> f64 {
        let p = &self.params;
        let next = match self.regime {
            Regime::ConstantOne | Regime::Explicit => 1.0,
            Regime::ApgdSublinear | Regime::ApgdCapped => match p.form {
                ApgdForm::Linear => (t as f64 + 2.0) / 2.0,
                ApgdForm::Recursive => nesterov_bound(a),
            },
            Regime::RegS | Regime::RegSCapped => {
                (a * a + a * p.tau * p.mu_hconj).sqrt().min(nesterov_bound(a))
            }
            _ => {
                let ratio = p.nu * p.lam / (4.0 * p.k_norm_sq);
                let first = a * (1.0 + ratio).sqrt();
                let second = (a * a + a * ratio / (p.gamma * p.lipschitz)).sqrt();
                first.min(second).min(nesterov_bound(a))
            }
        };
        match self.a_sharp {
            Some(cap) => next.min(cap),
            None => next,
        }
    }

    /// Advances and returns `a_{t+1}`, or `ScheduleExhausted` for a replayed
    /// list that has run out.
    pub fn advance(&mut self) -> Result<f64> {
        let next = if self.regime == Regime::Explicit {
            *self.values.get(self.t + 1).ok_or(Error::ScheduleExhausted(self.t + 1))?
        } else if self.t == 0 {
            1.0
        } else {
            self.rule(self.t, self.current)
        };
        self.t += 1;
        self.fresh = false;
        self.current = next;
        Ok(next)
    }

    /// The value `a_t` at the current index.
    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn index(&self) -> usize {
        self.t
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn a_sharp(&self) -> Option<f64> {
        self.a_sharp
    }

    /// A fresh copy rewound to `a_0`.
    pub fn restarted(&self) -> Self {
        let mut s = self.clone();
        s.t = 0;
        s.fresh = true;
        s.current = s.initial();
        s
    }

    /// The first `n` values `a_0, …, a_{n−1}` without disturbing `self`.
    pub fn materialize(&self, n: usize) -> Vec<f64> {
        self.restarted().take(n).collect()
    }
}

impl Iterator for MomentumSchedule {
    type Item = f64;

    /// Yields `a_0` on the first call, then `a_1`, `a_2`, ….
    fn next(&mut self) -> Option<f64> {
        if self.fresh {
            self.fresh = false;
            return Some(self.current);
        }
        self.advance().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(regime: Regime, params: ScheduleParams) -> MomentumSchedule {
        MomentumSchedule::new(regime, params).unwrap()
    }

    #[test]
    fn apgd_recursive_opening() {
        let a = sched(Regime::ApgdSublinear, ScheduleParams::default()).materialize(4);
        // a_{t+1} = (1 + √(1 + 4a_t²))/2 from a_0 = 0, evaluated by hand
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 1.0);
        assert!((a[2] - 1.618_033_988_749_895).abs() < 1e-12);
        assert!((a[3] - 2.193_527_085_331_054).abs() < 1e-12);
    }

    #[test]
    fn apgd_linear_form() {
        let p = ScheduleParams { form: ApgdForm::Linear, ..Default::default() };
        let a = sched(Regime::ApgdSublinear, p).materialize(6);
        assert_eq!(a, vec![0.0, 1.0, 1.5, 2.0, 2.5, 3.0]);
        for t in 1..5 {
            assert!(a[t + 1] * a[t + 1] - a[t + 1] <= a[t] * a[t]);
        }
    }

    #[test]
    fn regs_opening() {
        let p = ScheduleParams { tau: 1.0, mu_hconj: 1.0, ..Default::default() };
        let a = sched(Regime::RegS, p).materialize(3);
        assert!((a[0] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(a[1], 1.0);
        assert!((a[2] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_one() {
        let a = sched(Regime::ConstantOne, ScheduleParams::default()).materialize(5);
        assert_eq!(a, vec![1.0; 5]);
    }

    #[test]
    fn regb_rejects_large_gamma() {
        let p = ScheduleParams { gamma: 0.6, lipschitz: 1.0, lam: 1.0, k_norm_sq: 1.0, ..Default::default() };
        assert!(matches!(MomentumSchedule::new(Regime::RegB, p), Err(Error::Config(_))));
    }

    #[test]
    fn apgd_cap_clamps_to_one() {
        let p = ScheduleParams { mu_g: 4.0, lipschitz: 1.0, ..Default::default() };
        let s = sched(Regime::ApgdCapped, p);
        assert_eq!(s.a_sharp(), Some(1.0));
        assert_eq!(s.materialize(4), vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn explicit_replay_exhausts() {
        let mut s = MomentumSchedule::from_values(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.current(), 0.0);
        assert_eq!(s.advance().unwrap(), 1.0);
        assert_eq!(s.advance().unwrap(), 2.0);
        assert!(matches!(s.advance(), Err(Error::ScheduleExhausted(3))));
        let all: Vec<f64> = MomentumSchedule::from_values(vec![0.0, 1.0, 2.0]).unwrap().collect();
        assert_eq!(all, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn regs_growth_lower_bound() {
        for s in [0.01, 1.0, 100.0] {
            let p = ScheduleParams { tau: 1.0, mu_hconj: s, ..Default::default() };
            let a = sched(Regime::RegS, p).materialize(10_001);
            for (t, &at) in a.iter().enumerate().skip(2) {
                assert!(at >= 0.5 * t as f64 * s.min(1.0) / 2.0, "t={t} s={s} a={at}");
            }
        }
    }

    #[test]
    fn capped_regimes_reach_cap() {
        let cases = [
            (Regime::ApgdCapped, ScheduleParams { mu_g: 0.01, lipschitz: 1.0, ..Default::default() }),
            (
                Regime::RegSCapped,
                ScheduleParams { tau: 0.5, mu_hconj: 1.0, mu_g: 0.01, lipschitz: 1.0, ..Default::default() },
            ),
            (
                Regime::RegBCapped,
                ScheduleParams {
                    gamma: 0.5,
                    lipschitz: 1.0,
                    lam: 0.3,
                    k_norm_sq: 2.0,
                    mu_g: 1e-3,
                    ..Default::default()
                },
            ),
            (
                Regime::RegCCapped,
                ScheduleParams {
                    gamma: 0.25,
                    lipschitz: 2.0,
                    lam: 0.05,
                    k_norm_sq: 4.0,
                    mu_g: 1e-2,
                    ..Default::default()
                },
            ),
        ];
        for (regime, p) in cases {
            let mut s = sched(regime, p);
            let cap = s.a_sharp().unwrap();
            let hit = (0..1_000_000).map(|_| s.next().unwrap()).position(|a| a == cap);
            let t = hit.unwrap_or_else(|| panic!("{regime:?} never reached {cap}"));
            assert!(s.by_ref().take(100).all(|a| a == cap), "{regime:?} left the cap after t={t}");
        }
    }

    fn check_shape(values: &[f64], regime: Regime, p: &ScheduleParams) {
        for t in 0..values.len() - 1 {
            let (a, b) = (values[t], values[t + 1]);
            assert!(b >= a, "not monotone at {t}: {a} -> {b}");
            assert!(b <= a + 1.0 + 1e-12, "jump at {t}");
            if t >= 1 {
                assert!(b * b - b <= a * a * (1.0 + 1e-14) + 1e-14, "growth bound at {t}");
            }
            if regime.is_bc() && t >= 1 {
                let ratio = p.nu * p.lam / (4.0 * p.k_norm_sq);
                assert!(b * b <= a * a * (1.0 + ratio) * (1.0 + 1e-14));
                assert!(b * b <= (a * a + a * ratio / (p.gamma * p.lipschitz)) * (1.0 + 1e-14));
            }
        }
    }

    proptest! {
        #[test]
        fn schedule_shape(
            kind in 0usize..8,
            tau in 0.01f64..10.0,
            mu_h in 0.01f64..10.0,
            l in 0.1f64..10.0,
            gamma_frac in 0.1f64..1.0,
            lam_frac in 0.01f64..1.0,
            knorm in 0.1f64..10.0,
            nu in 0.05f64..1.0,
            mu_g in 1e-4f64..1.0,
        ) {
            let regime = [
                Regime::ApgdSublinear, Regime::ApgdCapped, Regime::RegS, Regime::RegSCapped,
                Regime::RegB, Regime::RegBCapped, Regime::RegC, Regime::RegCCapped,
            ][kind];
            let p = ScheduleParams {
                gamma: gamma_frac / (2.0 * l),
                tau,
                mu_g,
                mu_hconj: mu_h,
                lipschitz: l,
                lam: lam_frac * knorm,
                k_norm_sq: knorm,
                nu,
                form: ApgdForm::Recursive,
            };
            let s = MomentumSchedule::new(regime, p).unwrap();
            let values = s.materialize(300);
            prop_assert!(values.iter().skip(1).all(|&a| a >= 1.0));
            check_shape(&values, regime, &p);
        }
    }
}
