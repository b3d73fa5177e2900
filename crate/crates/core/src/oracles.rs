//! Closed-form values of the unnormalized attention entries `u` and the
//! entrywise bounds on `f` and `c` that the separation lemmas rely on.
//!
//! All oracles are pure functions of the case and the parameters; they never
//! evaluate the pipeline. Bounds are returned as a closed interval
//! `[lower, upper]`, where a lower bound of `0` means "no lower bound claimed".

use crate::attention::AttentionInstance;
use crate::error::{Error, Result};
use crate::{Kind, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OracleRegime {
    /// Self-attention with `X = 1_{d x d}`.
    SelfAllOnes,
    /// Self-attention with `X = I_d`.
    SelfIdentity,
    /// Cross-attention with `X = I_d`, `V = I_d`.
    Cross,
}

impl OracleRegime {
    pub fn name(self) -> &'static str {
        match self {
            OracleRegime::SelfAllOnes => "self_allones",
            OracleRegime::SelfIdentity => "self_identity",
            OracleRegime::Cross => "cross",
        }
    }

    fn block_column(self, d: usize, j: usize) -> usize {
        match self {
            OracleRegime::Cross => 1 + j % (d - 1),
            _ => 1 + j % (d - 2),
        }
    }
}

/// Dataset parameters the oracles depend on. `a` is the planted scale of the
/// dataset in question (`a0` for D0, `a1` for D1). `b` and `c` are unused for
/// cross-attention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleParams {
    pub n: usize,
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl OracleParams {
    fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    fn pow(&self, e: f64) -> f64 {
        (self.n as f64).powf(e)
    }

    fn inv_n(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// One entry `(j0, j1)` of the score matrix, up to the symmetry the closed
/// forms depend on. "Special" means `j0 = j3` (self) or `j0 = j2` (cross) for
/// the row, and `j1 = j3` for the column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EntryCase {
    pub regime: OracleRegime,
    pub label: Label,
    pub kind: Kind,
    pub j0_special: bool,
    pub j1_special: bool,
    /// Whether `j0` and `j1` share an identity block. Present iff the regime
    /// is `SelfIdentity` and the entry is not the doubly special one.
    pub overlap: Option<bool>,
}

impl EntryCase {
    pub fn new(
        regime: OracleRegime,
        label: Label,
        kind: Kind,
        j0_special: bool,
        j1_special: bool,
        overlap: Option<bool>,
    ) -> Result<Self> {
        let needs_overlap = regime == OracleRegime::SelfIdentity && !(j0_special && j1_special);
        if needs_overlap != overlap.is_some() {
            return Err(Error::InvalidConfig(format!(
                "overlap flag must be {} for {} with j0_special={j0_special}, j1_special={j1_special}",
                if needs_overlap { "present" } else { "absent" },
                regime.name()
            )));
        }
        Ok(Self {
            regime,
            label,
            kind,
            j0_special,
            j1_special,
            overlap,
        })
    }

    /// Classifies entry `(j0, j1)` of a concrete instance.
    pub fn for_entry(
        regime: OracleRegime,
        kind: Kind,
        inst: &AttentionInstance,
        j0: usize,
        j1: usize,
    ) -> Result<Self> {
        let row_special = match regime {
            OracleRegime::Cross => Some(j0) == inst.j2,
            _ => j0 == inst.j3,
        };
        let col_special = j1 == inst.j3;
        let overlap = (regime == OracleRegime::SelfIdentity && !(row_special && col_special))
            .then(|| regime.block_column(inst.d(), j0) == regime.block_column(inst.d(), j1));
        Self::new(regime, inst.label, kind, row_special, col_special, overlap)
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "{}/{}/{} j0{} j1{}",
            self.regime.name(),
            self.label,
            self.kind,
            if self.j0_special { "=sp" } else { "!=sp" },
            if self.j1_special { "=sp" } else { "!=sp" },
        );
        if let Some(o) = self.overlap {
            s.push_str(if o { " overlap" } else { " disjoint" });
        }
        s
    }
}

/// Column classes of `C = F A3 V`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnClass {
    /// Column 0, which carries the planted scale.
    First,
    /// The identity-block column that row `j3` sits on.
    MiddleSpecial,
    /// Any other identity-block column.
    MiddleRest,
    /// The constant `c` column (self-attention only).
    Last,
}

impl ColumnClass {
    pub fn of(regime: OracleRegime, inst: &AttentionInstance, k: usize) -> Self {
        let d = inst.d();
        if k == 0 {
            ColumnClass::First
        } else if regime != OracleRegime::Cross && k == d - 1 {
            ColumnClass::Last
        } else if k == regime.block_column(d, inst.j3) {
            ColumnClass::MiddleSpecial
        } else {
            ColumnClass::MiddleRest
        }
    }

    fn name(self) -> &'static str {
        match self {
            ColumnClass::First => "first",
            ColumnClass::MiddleSpecial => "mid-special",
            ColumnClass::MiddleRest => "mid-rest",
            ColumnClass::Last => "last",
        }
    }
}

/// One entry `(j0, k)` of `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ColumnCase {
    pub regime: OracleRegime,
    pub label: Label,
    pub kind: Kind,
    pub j0_special: bool,
    pub column: ColumnClass,
}

impl ColumnCase {
    pub fn for_entry(
        regime: OracleRegime,
        kind: Kind,
        inst: &AttentionInstance,
        j0: usize,
        k: usize,
    ) -> Self {
        let j0_special = match regime {
            OracleRegime::Cross => Some(j0) == inst.j2,
            _ => j0 == inst.j3,
        };
        Self {
            regime,
            label: inst.label,
            kind,
            j0_special,
            column: ColumnClass::of(regime, inst, k),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{}/{}/{} j0{} col={}",
            self.regime.name(),
            self.label,
            self.kind,
            if self.j0_special { "=sp" } else { "!=sp" },
            self.column.name()
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    fn upper(upper: f64) -> Self {
        Self { lower: 0.0, upper }
    }

    fn exact(v: f64) -> Self {
        Self { lower: v, upper: v }
    }

    /// `lower - slack <= x <= upper + slack`, with the slack scaled by the
    /// magnitude of the bound once it exceeds 1.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack * self.lower.abs().max(1.0)
            && x <= self.upper + slack * self.upper.abs().max(1.0)
    }
}

const CONSTRAINT_TOL: f64 = 1e-12;

fn check_allones(p: &OracleParams) -> Result<()> {
    if (p.b + p.c - 1.0).abs() > CONSTRAINT_TOL {
        return Err(Error::OutOfRegime(format!(
            "all-ones closed forms need b + c = 1; got b={}, c={}",
            p.b, p.c
        )));
    }
    Ok(())
}

fn check_params(p: &OracleParams) -> Result<()> {
    if p.n < 2 || p.t == 0 {
        return Err(Error::InvalidConfig(format!(
            "oracle needs n >= 2 and t >= 1; n={}, t={}",
            p.n, p.t
        )));
    }
    for (name, v) in [("a", p.a), ("b", p.b), ("c", p.c)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok(())
}

/// Score `S[j0, j1]` in units of `ln n`.
fn score_exponent(case: &EntryCase, p: &OracleParams) -> Result<f64> {
    let a = p.a;
    Ok(match case.regime {
        OracleRegime::SelfAllOnes => {
            check_allones(p)?;
            let r0 = if case.j0_special { 1.0 + a } else { 1.0 };
            let r1 = if case.j1_special { 1.0 + a } else { 1.0 };
            r0 * r1
        }
        OracleRegime::SelfIdentity => {
            let both = case.j0_special && case.j1_special;
            let planted = if both { a * a } else { 0.0 };
            let shared = both || case.overlap == Some(true);
            planted + if shared { p.b * p.b } else { 0.0 } + p.c * p.c
        }
        OracleRegime::Cross => {
            if case.j0_special && case.j1_special {
                1.0 + a
            } else {
                1.0
            }
        }
    })
}

/// Unnormalized entry: `exp(S[j0, j1])` for `Exp`, `S[j0, j1]` for `Lin`.
pub fn u_oracle(case: &EntryCase, p: &OracleParams) -> Result<f64> {
    check_params(p)?;
    let e = score_exponent(case, p)?;
    Ok(match case.kind {
        Kind::Exp => p.pow(e),
        Kind::Lin => e * p.ln_n(),
    })
}

/// Interval containing the normalized entry `f[j0, j1]`.
pub fn f_bound_oracle(case: &EntryCase, p: &OracleParams) -> Result<Bounds> {
    check_params(p)?;
    let a = p.a;
    let inv_n = p.inv_n();
    let both = case.j0_special && case.j1_special;
    let b2 = p.b * p.b;
    let c2 = p.c * p.c;
    Ok(match (case.regime, case.kind) {
        (OracleRegime::SelfAllOnes, Kind::Exp) => {
            check_allones(p)?;
            match (case.j0_special, case.j1_special, case.label) {
                (true, true, Label::D1) => Bounds {
                    lower: if a * a + a >= 1.0 { 0.5 } else { 0.0 },
                    upper: 1.0,
                },
                (true, true, Label::D0) => Bounds::upper(p.pow(2.0 * a - 1.0)),
                (false, true, _) => Bounds::upper(p.pow(a - 1.0)),
                _ => Bounds::upper(inv_n),
            }
        }
        (OracleRegime::SelfAllOnes, Kind::Lin) => {
            check_allones(p)?;
            if case.j1_special {
                Bounds::upper((1.0 + a) * inv_n)
            } else {
                Bounds::upper(inv_n)
            }
        }
        (OracleRegime::SelfIdentity, Kind::Exp) => {
            if both {
                match case.label {
                    Label::D1 => Bounds {
                        lower: if a >= 1.0 { 0.5 } else { 0.0 },
                        upper: 1.0,
                    },
                    Label::D0 => Bounds::upper(p.pow(a * a + b2 - 1.0)),
                }
            } else if case.overlap == Some(true) {
                Bounds::upper(p.pow(b2 - 1.0))
            } else {
                Bounds::upper(inv_n)
            }
        }
        (OracleRegime::SelfIdentity, Kind::Lin) => {
            if c2 == 0.0 {
                return Err(Error::OutOfRegime(
                    "identity linear bounds need c > 0".into(),
                ));
            }
            if both {
                Bounds::upper((a * a + b2 + c2) / c2 * inv_n)
            } else if case.overlap == Some(true) {
                Bounds::upper((b2 + c2) / c2 * inv_n)
            } else {
                Bounds::upper(inv_n)
            }
        }
        (OracleRegime::Cross, kind) => {
            if !case.j0_special {
                Bounds::exact(inv_n)
            } else if !case.j1_special {
                Bounds::upper(inv_n)
            } else {
                match (kind, case.label) {
                    (Kind::Exp, Label::D1) => Bounds {
                        lower: if a >= 1.0 { 0.5 } else { 0.0 },
                        upper: 1.0,
                    },
                    (Kind::Exp, Label::D0) => Bounds::upper(p.pow(a - 1.0)),
                    (Kind::Lin, _) => Bounds::upper((1.0 + a) * inv_n),
                }
            }
        }
    })
}

/// Interval containing the entry `C[j0, k]` of `C = F A3 V` with `V = I_d`.
pub fn c_bound_oracle(case: &ColumnCase, p: &OracleParams) -> Result<Bounds> {
    check_params(p)?;
    let a = p.a;
    let t = p.t as f64;
    let inv_n = p.inv_n();
    let root = p.ln_n().sqrt();
    let (al, bl, cl) = (a * root, p.b * root, p.c * root);
    let b2 = p.b * p.b;
    let c2 = p.c * p.c;
    let rest = Bounds::upper(t * inv_n * bl);
    use ColumnClass::*;

    if case.regime == OracleRegime::Cross {
        return Ok(match (case.j0_special, case.column) {
            (_, Last) => {
                return Err(Error::OutOfRegime(
                    "cross-attention has no constant column".into(),
                ));
            }
            (false, First) => Bounds::exact(inv_n),
            (false, _) => Bounds::exact(t * inv_n),
            (true, MiddleRest) => Bounds::upper(t * inv_n),
            (true, col) => {
                let extra = if col == MiddleSpecial { t - 1.0 } else { 0.0 };
                match (case.kind, case.label) {
                    (Kind::Exp, Label::D1) => Bounds {
                        lower: if a >= 1.0 { 0.5 } else { 0.0 },
                        upper: 1.0,
                    },
                    (Kind::Exp, Label::D0) => Bounds::upper(p.pow(a - 1.0) + extra * inv_n),
                    (Kind::Lin, _) => Bounds::upper((1.0 + a + extra) * inv_n),
                }
            }
        });
    }

    if case.column == Last {
        return Ok(Bounds::exact(cl));
    }
    if case.column == MiddleRest && (case.j0_special || case.regime == OracleRegime::SelfAllOnes) {
        return Ok(rest);
    }

    // Upper bound on f[j0, j3], plus a lower bound when one is claimed.
    let (f_lo, f_hi, own_block_rest) = match (case.regime, case.kind) {
        (OracleRegime::SelfAllOnes, kind) => {
            check_allones(p)?;
            let (lo, hi) = match (kind, case.j0_special, case.label) {
                (Kind::Exp, true, Label::D1) => (if a * a + a >= 1.0 { 0.5 } else { 0.0 }, 1.0),
                (Kind::Exp, true, Label::D0) => (0.0, p.pow(2.0 * a - 1.0)),
                (Kind::Exp, false, _) => (0.0, p.pow(a - 1.0)),
                (Kind::Lin, _, _) => (0.0, (1.0 + a) * inv_n),
            };
            (lo, hi, inv_n)
        }
        (OracleRegime::SelfIdentity, Kind::Exp) => {
            if !case.j0_special {
                // Every entry of a non-planted row sits below n^{b^2 - 1}.
                let cap = p.pow(b2 - 1.0);
                return Ok(match case.column {
                    First => Bounds::upper(cap * al),
                    _ => Bounds::upper(t * cap * bl),
                });
            }
            let (lo, hi) = match case.label {
                Label::D1 => (if a >= 1.0 { 0.5 } else { 0.0 }, 1.0),
                Label::D0 => (0.0, p.pow(a * a + b2 - 1.0)),
            };
            (lo, hi, p.pow(b2 - 1.0))
        }
        (OracleRegime::SelfIdentity, Kind::Lin) => {
            if c2 == 0.0 {
                return Err(Error::OutOfRegime(
                    "identity linear bounds need c > 0".into(),
                ));
            }
            let overlap_cap = (b2 + c2) / c2 * inv_n;
            if !case.j0_special {
                return Ok(match case.column {
                    First => Bounds::upper(overlap_cap * al),
                    _ => Bounds::upper(t * overlap_cap * bl),
                });
            }
            (0.0, (a * a + b2 + c2) / c2 * inv_n, overlap_cap)
        }
        (OracleRegime::Cross, _) => unreachable!(),
    };

    Ok(match case.column {
        First => Bounds {
            lower: f_lo * al,
            upper: f_hi * al,
        },
        MiddleSpecial => Bounds {
            lower: f_lo * bl,
            upper: (f_hi + (t - 1.0) * own_block_rest) * bl,
        },
        MiddleRest => rest,
        Last => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, t: usize, a: f64, b: f64, c: f64) -> OracleParams {
        OracleParams { n, t, a, b, c }
    }

    fn case(
        regime: OracleRegime,
        label: Label,
        kind: Kind,
        s0: bool,
        s1: bool,
        ov: Option<bool>,
    ) -> EntryCase {
        EntryCase::new(regime, label, kind, s0, s1, ov).unwrap()
    }

    #[test]
    fn allones_u_small_example() {
        let p = params(4, 2, 1.2, 0.2, 0.8);
        let c = case(
            OracleRegime::SelfAllOnes,
            Label::D1,
            Kind::Exp,
            true,
            true,
            None,
        );
        let expect = 4f64.powf(2.2 * 2.2);
        assert!((u_oracle(&c, &p).unwrap() / expect - 1.0).abs() < 1e-12);
        let c = case(
            OracleRegime::SelfAllOnes,
            Label::D1,
            Kind::Lin,
            true,
            false,
            None,
        );
        assert!((u_oracle(&c, &p).unwrap() - 2.2 * 4f64.ln()).abs() < 1e-12);
        let c = case(
            OracleRegime::SelfAllOnes,
            Label::D1,
            Kind::Exp,
            false,
            false,
            None,
        );
        assert!((u_oracle(&c, &p).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_cross_u() {
        let p = params(9, 3, 1.2, 0.6, 0.8);
        let both = case(
            OracleRegime::SelfIdentity,
            Label::D1,
            Kind::Exp,
            true,
            true,
            None,
        );
        assert!((u_oracle(&both, &p).unwrap() / 9f64.powf(1.44 + 1.0) - 1.0).abs() < 1e-12);
        let ov = case(
            OracleRegime::SelfIdentity,
            Label::D1,
            Kind::Exp,
            false,
            true,
            Some(true),
        );
        assert!((u_oracle(&ov, &p).unwrap() / 9.0 - 1.0).abs() < 1e-12);
        let dis = case(
            OracleRegime::SelfIdentity,
            Label::D1,
            Kind::Exp,
            true,
            false,
            Some(false),
        );
        assert!((u_oracle(&dis, &p).unwrap() / 9f64.powf(0.64) - 1.0).abs() < 1e-12);
        let cross = case(OracleRegime::Cross, Label::D0, Kind::Exp, true, true, None);
        assert!(
            (u_oracle(&cross, &params(9, 3, 0.05, 0.0, 0.0)).unwrap() / 9f64.powf(1.05) - 1.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn overlap_flag_is_validated() {
        assert!(EntryCase::new(
            OracleRegime::SelfIdentity,
            Label::D1,
            Kind::Exp,
            true,
            false,
            None
        )
        .is_err());
        assert!(EntryCase::new(
            OracleRegime::SelfIdentity,
            Label::D1,
            Kind::Exp,
            true,
            true,
            Some(true)
        )
        .is_err());
        assert!(EntryCase::new(
            OracleRegime::Cross,
            Label::D1,
            Kind::Exp,
            true,
            false,
            Some(true)
        )
        .is_err());
    }

    #[test]
    fn allones_rejects_off_constraint() {
        let p = params(4, 2, 1.2, 0.3, 0.8);
        let c = case(
            OracleRegime::SelfAllOnes,
            Label::D1,
            Kind::Exp,
            true,
            true,
            None,
        );
        assert!(matches!(u_oracle(&c, &p), Err(Error::OutOfRegime(_))));
        assert!(matches!(f_bound_oracle(&c, &p), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn cross_has_no_last_column() {
        let c = ColumnCase {
            regime: OracleRegime::Cross,
            label: Label::D1,
            kind: Kind::Exp,
            j0_special: true,
            column: ColumnClass::Last,
        };
        assert!(c_bound_oracle(&c, &params(6, 2, 3.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn bounds_contain_with_slack() {
        let b = Bounds {
            lower: 0.5,
            upper: 1.0,
        };
        assert!(b.contains(0.5 - 1e-13, 1e-12));
        assert!(!b.contains(0.49, 1e-12));
        assert!(b.contains(1.0 + 1e-13, 1e-12));
    }
}
