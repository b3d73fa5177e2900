//! Self-attention and cross-attention dataset constructions.
//!
//! Self-attention rows (`n = (d-2) t`):
//!   column 0        `e_{j3} * scale * sqrt(ln n)`
//!   columns 1..d-1  `t` stacked copies of `I_{d-2}`, times `b * sqrt(ln n)`
//!   column d-1      `c * sqrt(ln n)` everywhere
//!
//! Cross-attention (`n = (d-1) t`): `A1` carries `scale * ln n` at row `j2` of
//! column 0 and `ln n` in every other column; `A2 = A3` has `e_{j3}` in column 0
//! and `t` stacked copies of `I_{d-1}` in columns 1..d.

use crate::attention::AttentionInstance;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SeededRng};
use crate::Label;

/// Which `QK^T` the lemma family assumes for a self-attention dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `QK^T = 1_{d x d}`, with `b + c = 1` and `a1 >= 0.7`.
    AllOnes,
    /// `QK^T = I_d`, with `b^2 + c^2 = 1` and `a1 >= 1`.
    Identity,
}

const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfAttnConfig {
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub a0: f64,
    pub a1: f64,
    pub b: f64,
    pub c: f64,
    pub regime: Regime,
}

impl SelfAttnConfig {
    /// Builds a config from `(d, t)`; `n = (d - 2) t`.
    pub fn new(
        d: usize,
        t: usize,
        a0: f64,
        a1: f64,
        b: f64,
        c: f64,
        regime: Regime,
    ) -> Result<Self> {
        let n = d.saturating_sub(2) * t;
        Self::with_n(n, d, a0, a1, b, c, regime)
    }

    /// Builds a config from `(n, d)`, rejecting `n` that is not a multiple of `d - 2`.
    pub fn with_n(
        n: usize,
        d: usize,
        a0: f64,
        a1: f64,
        b: f64,
        c: f64,
        regime: Regime,
    ) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidConfig(format!(
                "self-attention needs d >= 3, got d={d}"
            )));
        }
        let block = d - 2;
        if n < 2 || !n.is_multiple_of(block) {
            return Err(Error::InvalidConfig(format!(
                "self-attention needs n = (d-2) t with n >= 2; n={n}, d={d}"
            )));
        }
        let cfg = Self {
            n,
            d,
            t: n / block,
            a0,
            a1,
            b,
            c,
            regime,
        };
        for (name, v) in [("a0", a0), ("a1", a1), ("b", b), ("c", c)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(cfg)
    }

    /// Checks the parameter ranges the lemma family assumes. Construction only
    /// enforces shape, so sweeps may leave these ranges on purpose.
    pub fn validate_regime(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.a0 < 0.1) {
            return Err(Error::OutOfRegime(format!(
                "a0 must lie in (0, 0.1), got {}",
                self.a0
            )));
        }
        match self.regime {
            Regime::AllOnes => {
                if self.a1 < 0.7 {
                    return Err(Error::OutOfRegime(format!(
                        "all-ones regime needs a1 >= 0.7, got {}",
                        self.a1
                    )));
                }
                if (self.b + self.c - 1.0).abs() > CONSTRAINT_TOL || self.b < 0.1 || self.c < 0.1 {
                    return Err(Error::OutOfRegime(format!(
                        "all-ones regime needs b + c = 1 with b, c >= 0.1; got b={}, c={}",
                        self.b, self.c
                    )));
                }
            }
            Regime::Identity => {
                if self.a1 < 1.0 {
                    return Err(Error::OutOfRegime(format!(
                        "identity regime needs a1 >= 1, got {}",
                        self.a1
                    )));
                }
                if (self.b * self.b + self.c * self.c - 1.0).abs() > CONSTRAINT_TOL {
                    return Err(Error::OutOfRegime(format!(
                        "identity regime needs b^2 + c^2 = 1; got b={}, c={}",
                        self.b, self.c
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn scale(&self, label: Label) -> f64 {
        match label {
            Label::D0 => self.a0,
            Label::D1 => self.a1,
        }
    }

    /// Column (0-based) of the identity block that row `j` sits on.
    pub fn block_column(&self, j: usize) -> usize {
        1 + j % (self.d - 2)
    }
}

/// The shared `n x d` matrix `A` of a self-attention instance.
pub fn build_self_matrix(cfg: &SelfAttnConfig, scale_a: f64, j3: usize) -> Result<Matrix> {
    if j3 >= cfg.n {
        return Err(Error::InvalidConfig(format!(
            "j3={j3} out of range for n={}",
            cfg.n
        )));
    }
    let root = (cfg.n as f64).ln().sqrt();
    let mut a = Matrix::zeros(cfg.n, cfg.d);
    for j in 0..cfg.n {
        a.set(j, cfg.block_column(j), cfg.b * root);
        a.set(j, cfg.d - 1, cfg.c * root);
    }
    a.set(j3, 0, scale_a * root);
    Ok(a)
}

/// Draws `j3` uniformly and returns `A1 = A2 = A3`.
pub fn sample_self(
    cfg: &SelfAttnConfig,
    label: Label,
    rng: &mut SeededRng,
) -> Result<AttentionInstance> {
    let j3 = rng.index(cfg.n);
    self_instance(cfg, label, j3)
}

pub fn self_instance(cfg: &SelfAttnConfig, label: Label, j3: usize) -> Result<AttentionInstance> {
    let a = build_self_matrix(cfg, cfg.scale(label), j3)?;
    Ok(AttentionInstance {
        a1: a.clone(),
        a2: a.clone(),
        a3: a,
        j3,
        j2: None,
        label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossAttnConfig {
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub a0: f64,
    pub a1: f64,
}

impl CrossAttnConfig {
    /// Builds a config from `(d, t)`; `n = (d - 1) t`.
    pub fn new(d: usize, t: usize, a0: f64, a1: f64) -> Result<Self> {
        Self::with_n(d.saturating_sub(1) * t, d, a0, a1)
    }

    /// Builds a config from `(n, d)`, rejecting `n` that is not a multiple of `d - 1`.
    pub fn with_n(n: usize, d: usize, a0: f64, a1: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidConfig(format!(
                "cross-attention needs d >= 2, got d={d}"
            )));
        }
        let block = d - 1;
        if n < 2 || !n.is_multiple_of(block) {
            return Err(Error::InvalidConfig(format!(
                "cross-attention needs n = (d-1) t with n >= 2; n={n}, d={d}"
            )));
        }
        for (name, v) in [("a0", a0), ("a1", a1)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self {
            n,
            d,
            t: n / block,
            a0,
            a1,
        })
    }

    pub fn validate_regime(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.a0 < 0.1) {
            return Err(Error::OutOfRegime(format!(
                "a0 must lie in (0, 0.1), got {}",
                self.a0
            )));
        }
        if self.a1 <= 1.0 {
            return Err(Error::OutOfRegime(format!(
                "cross-attention needs a1 > 1, got {}",
                self.a1
            )));
        }
        Ok(())
    }

    pub fn scale(&self, label: Label) -> f64 {
        match label {
            Label::D0 => self.a0,
            Label::D1 => self.a1,
        }
    }

    pub fn block_column(&self, j: usize) -> usize {
        1 + j % (self.d - 1)
    }
}

/// `(A1, A2)` for a cross-attention instance.
pub fn build_cross_pair(
    cfg: &CrossAttnConfig,
    scale_a: f64,
    j2: usize,
    j3: usize,
) -> Result<(Matrix, Matrix)> {
    if j2 >= cfg.n || j3 >= cfg.n {
        return Err(Error::InvalidConfig(format!(
            "special indices (j2={j2}, j3={j3}) out of range for n={}",
            cfg.n
        )));
    }
    let ln_n = (cfg.n as f64).ln();
    let mut a1 = Matrix::filled(cfg.n, cfg.d, ln_n);
    for j in 0..cfg.n {
        a1.set(j, 0, 0.0);
    }
    a1.set(j2, 0, scale_a * ln_n);

    let mut a2 = Matrix::zeros(cfg.n, cfg.d);
    for j in 0..cfg.n {
        a2.set(j, cfg.block_column(j), 1.0);
    }
    a2.set(j3, 0, 1.0);
    Ok((a1, a2))
}

/// Draws `j2` and `j3` independently; `A3 = A2`.
pub fn sample_cross(
    cfg: &CrossAttnConfig,
    label: Label,
    rng: &mut SeededRng,
) -> Result<AttentionInstance> {
    let j2 = rng.index(cfg.n);
    let j3 = rng.index(cfg.n);
    cross_instance(cfg, label, j2, j3)
}

pub fn cross_instance(
    cfg: &CrossAttnConfig,
    label: Label,
    j2: usize,
    j3: usize,
) -> Result<AttentionInstance> {
    let (a1, a2) = build_cross_pair(cfg, cfg.scale(label), j2, j3)?;
    Ok(AttentionInstance {
        a1,
        a2: a2.clone(),
        a3: a2,
        j3,
        j2: Some(j2),
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn allones(d: usize, t: usize) -> SelfAttnConfig {
        SelfAttnConfig::new(d, t, 0.01, 1.2, 0.2, 0.8, Regime::AllOnes).unwrap()
    }

    #[test]
    fn self_matrix_small_example() {
        let cfg = allones(4, 2);
        assert_eq!(cfg.n, 4);
        let a = build_self_matrix(&cfg, 1.2, 0).unwrap();
        let r = 4f64.ln().sqrt();
        let expect0 = [1.2 * r, 0.2 * r, 0.0, 0.8 * r];
        let expect1 = [0.0, 0.0, 0.2 * r, 0.8 * r];
        for k in 0..4 {
            assert!((a.get(0, k) - expect0[k]).abs() < 1e-15);
            assert!((a.get(1, k) - expect1[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn self_matrix_sparsity_and_row_sums() {
        let cfg = allones(6, 3);
        let j3 = 5;
        let a = build_self_matrix(&cfg, 1.2, j3).unwrap();
        let r = (cfg.n as f64).ln().sqrt();
        for j in 0..cfg.n {
            let nnz = a.row(j).iter().filter(|&&x| x != 0.0).count();
            let sum: f64 = a.row(j).iter().sum();
            if j == j3 {
                assert_eq!(nnz, 3);
                assert!((sum - (1.2 + 0.2 + 0.8) * r).abs() < 1e-12);
            } else {
                assert_eq!(nnz, 2);
                assert!((sum - r).abs() < 1e-12);
            }
        }
        for col in 1..cfg.d - 1 {
            let nnz = (0..cfg.n).filter(|&j| a.get(j, col) != 0.0).count();
            assert_eq!(nnz, cfg.t);
        }
        assert!((0..cfg.n).all(|j| a.get(j, cfg.d - 1) == 0.8 * r));
        assert!(a.as_slice().iter().all(|&x| x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn self_sample_uses_label_scale() {
        let cfg = allones(5, 2);
        let mut rng = SeededRng::new(1, 0);
        let r = (cfg.n as f64).ln().sqrt();
        let d0 = sample_self(&cfg, Label::D0, &mut rng).unwrap();
        assert_eq!(d0.a1.get(d0.j3, 0), 0.01 * r);
        let d1 = sample_self(&cfg, Label::D1, &mut rng).unwrap();
        assert_eq!(d1.a1.get(d1.j3, 0), 1.2 * r);
        assert!(d1.a1 == d1.a2 && d1.a2 == d1.a3);
        assert!(d1.j2.is_none());
    }

    #[test]
    fn shape_validation() {
        assert!(SelfAttnConfig::with_n(10, 5, 0.01, 1.2, 0.2, 0.8, Regime::AllOnes).is_err());
        assert!(SelfAttnConfig::with_n(9, 5, 0.01, 1.2, 0.2, 0.8, Regime::AllOnes).is_ok());
        assert!(SelfAttnConfig::with_n(4, 2, 0.01, 1.2, 0.2, 0.8, Regime::AllOnes).is_err());
        assert!(CrossAttnConfig::with_n(201, 11, 0.01, 3.0).is_err());
        assert!(CrossAttnConfig::with_n(200, 11, 0.01, 3.0).is_ok());
        assert!(CrossAttnConfig::with_n(200, 12, 0.01, 3.0).is_err());
    }

    #[test]
    fn regime_validation() {
        assert!(allones(4, 2).validate_regime().is_ok());
        let bad = SelfAttnConfig::new(4, 2, 0.01, 1.2, 0.3, 0.8, Regime::AllOnes).unwrap();
        assert!(matches!(bad.validate_regime(), Err(Error::OutOfRegime(_))));
        let c = (1.0f64 - 0.04).sqrt();
        let id = SelfAttnConfig::new(4, 2, 0.01, 1.2, 0.2, c, Regime::Identity).unwrap();
        assert!(id.validate_regime().is_ok());
        let low = SelfAttnConfig::new(4, 2, 0.01, 0.9, 0.2, c, Regime::Identity).unwrap();
        assert!(low.validate_regime().is_err());
        assert!(CrossAttnConfig::new(4, 2, 0.01, 1.0)
            .unwrap()
            .validate_regime()
            .is_err());
    }

    #[test]
    fn cross_pair_inner_products() {
        let cfg = CrossAttnConfig::new(4, 2, 0.01, 3.0).unwrap();
        let (j2, j3) = (1, 4);
        let (a1, a2) = build_cross_pair(&cfg, cfg.a1, j2, j3).unwrap();
        let ln_n = (cfg.n as f64).ln();
        for i in 0..cfg.n {
            for j in 0..cfg.n {
                let ip = dot(a1.row(i), a2.row(j));
                let expected = if (i, j) == (j2, j3) { 4.0 * ln_n } else { ln_n };
                assert!((ip - expected).abs() < 1e-12, "({i},{j})");
            }
        }
        for j in 0..cfg.n {
            let sum: f64 = a2.row(j).iter().sum();
            assert_eq!(sum, if j == j3 { 2.0 } else { 1.0 });
            assert_eq!(a2.row(j)[1..].iter().filter(|&&x| x == 1.0).count(), 1);
        }
    }

    #[test]
    fn cross_sample_structure() {
        let cfg = CrossAttnConfig::new(3, 3, 0.01, 3.0).unwrap();
        let mut rng = SeededRng::new(7, 0);
        let inst = sample_cross(&cfg, Label::D1, &mut rng).unwrap();
        assert_eq!(inst.a2, inst.a3);
        assert_ne!(inst.a1, inst.a2);
        let (j2, j3) = (inst.j2.unwrap(), inst.j3);
        let s = inst.a1.matmul_transposed(&inst.a2).unwrap();
        let peak = 4.0 * (cfg.n as f64).ln();
        let mut hits = Vec::new();
        for i in 0..cfg.n {
            for j in 0..cfg.n {
                if (s.get(i, j) - peak).abs() < 1e-12 {
                    hits.push((i, j));
                }
            }
        }
        assert_eq!(hits, vec![(j2, j3)]);
    }
}
