//! Softmax-regression toy model on pre-activations `v = Ax`.
//!
//! `A` and `x` are never materialized: every quantity depends on `v` only, so
//! samples are drawn directly in pre-activation space.

use crate::error::{shape_err, Error, Result};
use crate::linalg::{
    dot, normalize_exp, normalize_lin, rademacher_matrix, relu, relu_shift, Matrix, SeededRng,
    Vector,
};
use crate::{Kind, Label};

/// Spike height in units of `ln n`.
pub const SPIKE_SCALE: f64 = 4.0;
/// Upper end of the background interval `[ln n, 1.4 ln n]`, in units of `ln n`.
pub const BACKGROUND_HI: f64 = 1.4;
/// Default detection threshold for the toy network.
pub const DEFAULT_TAU: f64 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub v: Vector,
    pub label: Label,
    /// Index of the planted spike; present iff `label == D1`.
    pub spike_index: Option<usize>,
}

/// Draws one toy sample of length `n`.
///
/// Background entries are i.i.d. uniform on `[ln n, 1.4 ln n]`; a D1 sample
/// additionally gets one uniformly placed entry equal to `4 ln n`.
pub fn gen_toy(n: usize, label: Label, rng: &mut SeededRng) -> Result<ToySample> {
    if n < 4 {
        return Err(Error::InvalidConfig(format!(
            "toy model needs n >= 4, got {n}"
        )));
    }
    let ln_n = (n as f64).ln();
    let spike_index = match label {
        Label::D0 => None,
        Label::D1 => Some(rng.index(n)),
    };
    let v = (0..n)
        .map(|i| {
            if Some(i) == spike_index {
                SPIKE_SCALE * ln_n
            } else {
                rng.uniform(ln_n, BACKGROUND_HI * ln_n)
            }
        })
        .collect::<Vec<_>>();
    Ok(ToySample {
        v: Vector(v),
        label,
        spike_index,
    })
}

/// Normalized map `f_exp` or `f_lin` applied to the pre-activation vector.
pub fn f_toy(v: &[f64], kind: Kind) -> Result<Vector> {
    match kind {
        Kind::Exp => Ok(normalize_exp(v)),
        Kind::Lin => normalize_lin(v),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyNetwork {
    /// `n x m` read-out with ±1 entries; column `l` is `y_l`.
    pub y: Matrix,
    pub tau: f64,
}

impl ToyNetwork {
    pub fn new(y: Matrix, tau: f64) -> Result<Self> {
        if y.cols() == 0 {
            return Err(Error::InvalidConfig(
                "toy network width m must be >= 1".into(),
            ));
        }
        if y.as_slice().iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidConfig(
                "read-out entries must be +1 or -1".into(),
            ));
        }
        Ok(Self { y, tau })
    }

    /// Fresh Rademacher read-out of shape `n x m`.
    pub fn random(n: usize, m: usize, tau: f64, rng: &mut SeededRng) -> Result<Self> {
        Self::new(rademacher_matrix(n, m, rng), tau)
    }

    pub fn width(&self) -> usize {
        self.y.cols()
    }
}

/// `relu( sum_l relu_tau(<f, y_l>) )` over the columns of `y`.
///
/// Returns exactly `0.0` when no unit clears the threshold. A `y` with zero
/// columns gives the empty sum.
pub fn readout(f: &[f64], y: &Matrix, tau: f64) -> Result<f64> {
    if y.rows() != f.len() {
        return Err(shape_err(
            "readout",
            format!("read-out with {} rows", f.len()),
            format!("{} rows", y.rows()),
        ));
    }
    let mut total = 0.0;
    for l in 0..y.cols() {
        let z: f64 = f.iter().enumerate().map(|(i, fi)| fi * y.get(i, l)).sum();
        total += relu_shift(z, tau);
    }
    Ok(relu(total))
}

/// Toy network output `F_exp` / `F_lin` on one sample.
pub fn toy_output(sample: &ToySample, net: &ToyNetwork, kind: Kind) -> Result<f64> {
    let f = f_toy(&sample.v, kind)?;
    readout(&f, &net.y, net.tau)
}

/// `<f, sigma>` for a sign vector; used by the concentration checks.
pub fn signed_mass(f: &[f64], sigma: &[f64]) -> f64 {
    dot(f, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_small_n() {
        assert!(gen_toy(3, Label::D0, &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn d0_entries_in_interval() {
        let mut rng = SeededRng::new(1, 0);
        let s = gen_toy(4, Label::D0, &mut rng).unwrap();
        let (lo, hi) = (4f64.ln(), 1.4 * 4f64.ln());
        assert!(s.spike_index.is_none());
        assert!(s.v.iter().all(|&x| x >= lo && x <= hi));
        assert!((lo - 1.386).abs() < 1e-3 && (hi - 1.941).abs() < 1e-3);
    }

    #[test]
    fn d1_has_single_spike() {
        let mut rng = SeededRng::new(2, 0);
        let s = gen_toy(100, Label::D1, &mut rng).unwrap();
        let spike = 4.0 * 100f64.ln();
        assert!((spike - 18.42).abs() < 0.01);
        let hits: Vec<usize> = (0..100).filter(|&i| s.v[i] == spike).collect();
        assert_eq!(hits, vec![s.spike_index.unwrap()]);
        assert!(s
            .v
            .iter()
            .enumerate()
            .all(|(i, &x)| i == hits[0] || x <= 1.4 * 100f64.ln()));
    }

    #[test]
    fn background_mean_matches_uniform() {
        let n = 50;
        let mut rng = SeededRng::new(3, 0);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..10_000 {
            let s = gen_toy(n, Label::D1, &mut rng).unwrap();
            for (i, &x) in s.v.iter().enumerate() {
                if Some(i) != s.spike_index {
                    sum += x;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let expected = 1.2 * (n as f64).ln();
        assert!(
            (mean - expected).abs() < 0.01 * expected,
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn constant_input_gives_uniform() {
        for kind in [Kind::Exp, Kind::Lin] {
            let f = f_toy(&[3.0; 8], kind).unwrap();
            assert!(f.iter().all(|&x| (x - 0.125).abs() < 1e-15));
        }
    }

    #[test]
    fn d1_spike_mass_and_linear_flatness() {
        let mut rng = SeededRng::new(4, 0);
        for n in [4, 10, 100, 1000] {
            for _ in 0..50 {
                let s = gen_toy(n, Label::D1, &mut rng).unwrap();
                let fe = f_toy(&s.v, Kind::Exp).unwrap();
                assert!(fe[s.spike_index.unwrap()] >= 0.5);
                let fl = f_toy(&s.v, Kind::Lin).unwrap();
                assert!(fl.iter().all(|&x| x <= 4.0 / n as f64));
            }
        }
    }

    #[test]
    fn threshold_above_one_silences_network() {
        let mut rng = SeededRng::new(5, 0);
        let s = gen_toy(20, Label::D1, &mut rng).unwrap();
        let net = ToyNetwork::random(20, 6, 1.0 + 1e-9, &mut rng).unwrap();
        assert_eq!(toy_output(&s, &net, Kind::Exp).unwrap(), 0.0);
        assert_eq!(toy_output(&s, &net, Kind::Lin).unwrap(), 0.0);
    }

    #[test]
    fn aligned_readout_fires_on_spike() {
        let mut rng = SeededRng::new(6, 0);
        let s = gen_toy(30, Label::D1, &mut rng).unwrap();
        let j = s.spike_index.unwrap();
        let mut y = rademacher_matrix(30, 3, &mut rng);
        for l in 0..3 {
            y.set(j, l, 1.0);
        }
        let net = ToyNetwork::new(y, 0.4).unwrap();
        assert!(toy_output(&s, &net, Kind::Exp).unwrap() > 0.0);
    }

    #[test]
    fn empty_readout_is_zero() {
        assert_eq!(
            readout(&[0.5, 0.5], &Matrix::zeros(2, 0), 0.0).unwrap(),
            0.0
        );
        assert!(readout(&[0.5, 0.5], &Matrix::zeros(3, 1), 0.0).is_err());
        assert!(ToyNetwork::new(Matrix::zeros(3, 0), 0.4).is_err());
        assert!(ToyNetwork::new(Matrix::zeros(3, 1), 0.4).is_err());
    }

    #[test]
    fn d0_exp_coordinates_bounded() {
        let mut rng = SeededRng::new(7, 0);
        for n in [4, 16, 200, 1000] {
            for _ in 0..50 {
                let s = gen_toy(n, Label::D0, &mut rng).unwrap();
                let f = f_toy(&s.v, Kind::Exp).unwrap();
                let cap = (n as f64).powf(-0.6);
                assert!(f.iter().all(|&x| x <= cap), "n={n}");
                let fl = f_toy(&s.v, Kind::Lin).unwrap();
                assert!(fl.iter().all(|&x| x <= 4.0 / n as f64));
            }
        }
    }

    #[test]
    fn sign_of_spike_mass_is_balanced() {
        let n = 64;
        let mut rng = SeededRng::new(8, 0);
        let s = gen_toy(n, Label::D1, &mut rng).unwrap();
        let f = f_toy(&s.v, Kind::Exp).unwrap();
        let draws = 10_000;
        let positive = (0..draws)
            .filter(|_| {
                let sigma: Vec<f64> = (0..n).map(|_| rng.sign()).collect();
                signed_mass(&f, &sigma) > 0.0
            })
            .count();
        let freq = positive as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.05, "{freq}");
    }

    #[test]
    fn noise_concentration_at_c2_delta_001() {
        // |<f, sigma>| stays below C sqrt(log(n/delta)) * scale for the D0 exp and
        // both lin noise terms, at empirical rate <= delta; the Hoeffding tail at the
        // same deviation is also <= delta.
        let (c, delta) = (2.0, 0.01);
        let mut rng = SeededRng::new(9, 0);
        for n in [100usize, 400] {
            let nf = n as f64;
            let log_term = (nf / delta).ln().sqrt();
            let cases: [(Label, Kind, f64); 3] = [
                (Label::D0, Kind::Exp, c * log_term / nf.powf(0.1)),
                (Label::D0, Kind::Lin, c * log_term / nf.sqrt()),
                (Label::D1, Kind::Lin, c * log_term / nf.sqrt()),
            ];
            for (label, kind, bound) in cases {
                let s = gen_toy(n, label, &mut rng).unwrap();
                let f = f_toy(&s.v, kind).unwrap();
                let widths: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
                assert!(crate::linalg::hoeffding_tail(&widths, bound) <= delta);
                let trials = 2000;
                let violations = (0..trials)
                    .filter(|_| {
                        let sigma: Vec<f64> = (0..n).map(|_| rng.sign()).collect();
                        signed_mass(&f, &sigma).abs() > bound
                    })
                    .count();
                assert!(violations as f64 / trials as f64 <= delta);
            }
        }
    }

    proptest! {
        #[test]
        fn output_invariant_to_column_permutation(seed in any::<u64>(), shift in 0usize..5) {
            let mut rng = SeededRng::new(seed, 0);
            let s = gen_toy(12, Label::D1, &mut rng).unwrap();
            let net = ToyNetwork::random(12, 5, 0.1, &mut rng).unwrap();
            let permuted = Matrix::from_fn(12, 5, |i, l| net.y.get(i, (l + shift) % 5));
            let net2 = ToyNetwork::new(permuted, 0.1).unwrap();
            for kind in [Kind::Exp, Kind::Lin] {
                let a = toy_output(&s, &net, kind).unwrap();
                let b = toy_output(&s, &net2, kind).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!(a >= 0.0);
            }
        }
    }
}
