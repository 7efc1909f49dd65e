//! Truncated Taylor polynomials ("jets") and their arithmetic.
//!
//! A [`Jet`] of degree `p` stores the normalized coefficients
//! `c_k = u^(k) / k!` for `k = 0..=p`. Every operation uses the classical
//! power-series recurrence for that function, so the cost of each operation
//! is quadratic in the degree.
//!
//! Jets are the numerical reference for the symbolic compiler in
//! [`crate::compile`]: the naive re-evaluation strategy is built directly on
//! top of this module.

use std::cell::Cell;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("division by a jet whose constant term is zero")]
    ZeroConstantTerm,
    #[error("{func} is not defined for constant term {value}")]
    Domain { func: &'static str, value: f64 },
}

thread_local! {
    static OPS: Cell<u64> = const { Cell::new(0) };
}

fn charge(ops: u64) {
    OPS.with(|c| c.set(c.get() + ops));
}

/// Number of scalar arithmetic operations executed by jet operations on the
/// current thread since the last [`reset_op_count`].
pub fn op_count() -> u64 {
    OPS.with(Cell::get)
}

pub fn reset_op_count() {
    OPS.with(|c| c.set(0));
}

/// A truncated Taylor polynomial with normalized coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    /// Builds a jet from its normalized coefficients; the degree is
    /// `coeffs.len() - 1`.
    ///
    /// Panics if `coeffs` is empty.
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least a constant term");
        Jet { coeffs }
    }

    pub fn zero(degree: usize) -> Self {
        Jet {
            coeffs: vec![0.0; degree + 1],
        }
    }

    pub fn constant(value: f64, degree: usize) -> Self {
        let mut jet = Jet::zero(degree);
        jet.coeffs[0] = value;
        jet
    }

    /// The jet of `value + s`, i.e. the independent variable expanded
    /// around `value`.
    pub fn variable(value: f64, degree: usize) -> Self {
        let mut jet = Jet::constant(value, degree);
        if degree > 0 {
            jet.coeffs[1] = 1.0;
        }
        jet
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Evaluates the polynomial at offset `s` with Horner's scheme.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// The `k`-th derivative at the expansion point, `k! * c_k`.
    pub fn derivative(&self, k: usize) -> f64 {
        let factorial: f64 = (1..=k).map(|i| i as f64).product();
        self.coeffs[k] * factorial
    }

    fn check_degree(&self, other: &Jet) -> Result<(), JetError> {
        if self.degree() == other.degree() {
            Ok(())
        } else {
            Err(JetError::DegreeMismatch {
                left: self.degree(),
                right: other.degree(),
            })
        }
    }

    fn zip_with(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Result<Jet, JetError> {
        self.check_degree(other)?;
        charge(self.coeffs.len() as u64);
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn checked_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Jet {
        charge(self.coeffs.len() as u64);
        Jet {
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    /// Adds a scalar to the constant term.
    pub fn add_scalar(&self, s: f64) -> Jet {
        charge(1);
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Cauchy product truncated at the common degree.
    pub fn checked_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_degree(other)?;
        let (a, b) = (&self.coeffs, &other.coeffs);
        let n = a.len();
        let mut out = vec![0.0; n];
        let mut ops = 0u64;
        for k in 0..n {
            let mut acc = a[0] * b[k];
            for j in 1..=k {
                acc += a[j] * b[k - j];
            }
            out[k] = acc;
            ops += 2 * k as u64 + 1;
        }
        charge(ops);
        Ok(Jet { coeffs: out })
    }

    /// Quotient `q` with `q * other == self` to the common degree.
    pub fn checked_div(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_degree(other)?;
        let (a, b) = (&self.coeffs, &other.coeffs);
        if b[0] == 0.0 {
            return Err(JetError::ZeroConstantTerm);
        }
        let n = a.len();
        let mut q = vec![0.0; n];
        let mut ops = 0u64;
        for k in 0..n {
            let mut acc = a[k];
            for j in 0..k {
                acc -= q[j] * b[k - j];
            }
            q[k] = acc / b[0];
            ops += 2 * k as u64 + 1;
        }
        charge(ops);
        Ok(Jet { coeffs: q })
    }

    /// Exponential: `g_k = (1/k) * sum_{j=1..k} (j a_j) g_{k-j}`.
    pub fn exp(&self) -> Jet {
        let a = &self.coeffs;
        let n = a.len();
        let ja = weighted(a);
        let mut g = vec![0.0; n];
        g[0] = a[0].exp();
        let mut ops = n as u64;
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += ja[j] * g[k - j];
            }
            g[k] = acc / k as f64;
            ops += 2 * k as u64 + 1;
        }
        charge(ops);
        Jet { coeffs: g }
    }

    /// Natural logarithm; requires a positive constant term.
    pub fn ln(&self) -> Result<Jet, JetError> {
        let a = &self.coeffs;
        if !(a[0] > 0.0) {
            return Err(JetError::Domain {
                func: "log",
                value: a[0],
            });
        }
        let n = a.len();
        let mut g = vec![0.0; n];
        let mut jg = vec![0.0; n];
        g[0] = a[0].ln();
        let mut ops = 1u64;
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..k {
                acc += jg[j] * a[k - j];
            }
            g[k] = (a[k] - acc / k as f64) / a[0];
            jg[k] = k as f64 * g[k];
            ops += 2 * k as u64 + 3;
        }
        charge(ops);
        Ok(Jet { coeffs: g })
    }

    /// Square root; requires a positive constant term.
    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a = &self.coeffs;
        if !(a[0] > 0.0) {
            return Err(JetError::Domain {
                func: "sqrt",
                value: a[0],
            });
        }
        let n = a.len();
        let mut g = vec![0.0; n];
        g[0] = a[0].sqrt();
        let two_g0 = 2.0 * g[0];
        let mut ops = 2u64;
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..k {
                acc += g[j] * g[k - j];
            }
            g[k] = (a[k] - acc) / two_g0;
            ops += 2 * k as u64;
        }
        charge(ops);
        Ok(Jet { coeffs: g })
    }

    /// Real power `a^r`.
    ///
    /// Integer exponents with `|r| <= 4` use repeated squaring; everything
    /// else goes through the general recurrence
    /// `g_k = 1/(k a_0) * sum_{j=1..k} (r j - (k - j)) a_j g_{k-j}`.
    pub fn powf(&self, r: f64) -> Result<Jet, JetError> {
        let a0 = self.coeffs[0];
        let is_int = r.fract() == 0.0 && r.is_finite();
        if is_int && r.abs() <= 4.0 {
            return self.powi_small(r as i32);
        }
        if is_int {
            if a0 == 0.0 {
                if r > 0.0 {
                    return Ok(self.powi_binary(r as u64));
                }
                return Err(JetError::Domain {
                    func: "pow",
                    value: a0,
                });
            }
        } else if !(a0 > 0.0) {
            return Err(JetError::Domain {
                func: "pow",
                value: a0,
            });
        }
        Ok(self.pow_recurrence(r))
    }

    fn pow_recurrence(&self, r: f64) -> Jet {
        let a = &self.coeffs;
        let n = a.len();
        let mut g = vec![0.0; n];
        g[0] = a[0].powf(r);
        let mut ops = 1u64;
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                let w = r * j as f64 - (k - j) as f64;
                acc += w * (a[j] * g[k - j]);
            }
            g[k] = acc / k as f64 / a[0];
            ops += 5 * k as u64 + 2;
        }
        charge(ops);
        Jet { coeffs: g }
    }

    fn powi_small(&self, n: i32) -> Result<Jet, JetError> {
        let positive = match n.unsigned_abs() {
            0 => return Ok(Jet::constant(1.0, self.degree())),
            1 => self.clone(),
            2 => self.checked_mul(self)?,
            3 => self.checked_mul(self)?.checked_mul(self)?,
            _ => {
                let sq = self.checked_mul(self)?;
                sq.checked_mul(&sq)?
            }
        };
        if n < 0 {
            Jet::constant(1.0, self.degree()).checked_div(&positive)
        } else {
            Ok(positive)
        }
    }

    fn powi_binary(&self, mut n: u64) -> Jet {
        let mut result = Jet::constant(1.0, self.degree());
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = result.checked_mul(&base).expect("equal degrees");
            }
            n >>= 1;
            if n > 0 {
                base = base.checked_mul(&base).expect("equal degrees");
            }
        }
        result
    }

    /// Sine and cosine through their coupled recurrence.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let (s, c) = self.coupled(|x| x.sin(), |x| x.cos(), -1.0);
        (s, c)
    }

    /// Hyperbolic sine and cosine through their coupled recurrence.
    pub fn sinh_cosh(&self) -> (Jet, Jet) {
        self.coupled(|x| x.sinh(), |x| x.cosh(), 1.0)
    }

    // s' = c a', c' = sign * s a'
    fn coupled(&self, f: fn(f64) -> f64, g: fn(f64) -> f64, sign: f64) -> (Jet, Jet) {
        let a = &self.coeffs;
        let n = a.len();
        let ja = weighted(a);
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = f(a[0]);
        c[0] = g(a[0]);
        let mut ops = 2 * n as u64;
        for k in 1..n {
            let mut acc_s = 0.0;
            let mut acc_c = 0.0;
            for j in 1..=k {
                acc_s += ja[j] * c[k - j];
                acc_c += ja[j] * s[k - j];
            }
            s[k] = acc_s / k as f64;
            c[k] = sign * acc_c / k as f64;
            ops += 4 * k as u64 + 3;
        }
        charge(ops);
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos().1
    }

    pub fn sinh(&self) -> Jet {
        self.sinh_cosh().0
    }

    pub fn cosh(&self) -> Jet {
        self.sinh_cosh().1
    }

    /// Hyperbolic tangent via `t' = (1 - t^2) a'`.
    pub fn tanh(&self) -> Jet {
        let a = &self.coeffs;
        let n = a.len();
        let ja = weighted(a);
        let mut t = vec![0.0; n];
        // s = 1 - t^2
        let mut s = vec![0.0; n];
        t[0] = a[0].tanh();
        s[0] = 1.0 - t[0] * t[0];
        let mut ops = n as u64 + 2;
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += ja[j] * s[k - j];
            }
            t[k] = acc / k as f64;
            let mut sq = 0.0;
            for i in 0..=k {
                sq += t[i] * t[k - i];
            }
            s[k] = -sq;
            ops += 4 * k as u64 + 3;
        }
        charge(ops);
        Jet { coeffs: t }
    }
}

impl std::ops::Neg for &Jet {
    type Output = Jet;

    fn neg(self) -> Jet {
        charge(self.coeffs.len() as u64);
        Jet {
            coeffs: self.coeffs.iter().map(|&c| -c).collect(),
        }
    }
}

impl std::ops::Neg for Jet {
    type Output = Jet;

    fn neg(self) -> Jet {
        -&self
    }
}

/// `[0, 1 a_1, 2 a_2, ...]`, the coefficients of `s * a'(s)`.
fn weighted(a: &[f64]) -> Vec<f64> {
    charge(a.len() as u64);
    a.iter().enumerate().map(|(j, &x)| j as f64 * x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_coeffs(jet: &Jet, expected: &[f64]) {
        assert_eq!(jet.degree() + 1, expected.len());
        for (k, (&got, &want)) in jet.coeffs().iter().zip(expected).enumerate() {
            assert!(
                (got - want).abs() <= 1e-14 * want.abs().max(1.0),
                "coefficient {k}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn linear_operations() {
        let a = Jet::new(vec![1.0, 2.0]);
        let b = Jet::new(vec![3.0, 4.0]);
        assert_coeffs(&a.checked_add(&b).unwrap(), &[4.0, 6.0]);
        assert_coeffs(&a.checked_sub(&b).unwrap(), &[-2.0, -2.0]);
        assert_coeffs(&-Jet::zero(2), &[0.0, 0.0, 0.0]);
        assert_coeffs(&Jet::new(vec![1.0, 1.0, 0.5]).scale(2.0), &[2.0, 2.0, 1.0]);
    }

    #[test]
    fn degree_mismatch_is_rejected() {
        let a = Jet::zero(2);
        let b = Jet::zero(3);
        assert_eq!(
            a.checked_add(&b),
            Err(JetError::DegreeMismatch { left: 2, right: 3 })
        );
        assert!(a.checked_mul(&b).is_err());
        assert!(a.checked_div(&b).is_err());
    }

    #[test]
    fn products_of_small_polynomials() {
        let a = Jet::new(vec![1.0, 1.0, 0.0]);
        assert_coeffs(&a.checked_mul(&a).unwrap(), &[1.0, 2.0, 1.0]);
        let b = Jet::new(vec![1.0, -1.0, 0.0]);
        assert_coeffs(&a.checked_mul(&b).unwrap(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn geometric_series() {
        let one = Jet::constant(1.0, 2);
        let q = one.checked_div(&Jet::new(vec![1.0, 1.0, 0.0])).unwrap();
        assert_coeffs(&q, &[1.0, -1.0, 1.0]);
    }

    #[test]
    fn division_by_zero_constant_term() {
        let a = Jet::constant(1.0, 3);
        let b = Jet::new(vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(a.checked_div(&b), Err(JetError::ZeroConstantTerm));
    }

    #[test]
    fn self_division_is_one() {
        let a = Jet::new(vec![0.3, -1.2, 4.0, 0.25, 7.0]);
        assert_coeffs(&a.checked_div(&a).unwrap(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn elementary_series_at_zero() {
        let t = Jet::variable(0.0, 3);
        assert_coeffs(&t.exp(), &[1.0, 1.0, 0.5, 1.0 / 6.0]);
        let (s, c) = t.sin_cos();
        assert_coeffs(&s, &[0.0, 1.0, 0.0, -1.0 / 6.0]);
        assert_coeffs(&c, &[1.0, 0.0, -0.5, 0.0]);
        let (sh, ch) = t.sinh_cosh();
        assert_coeffs(&sh, &[0.0, 1.0, 0.0, 1.0 / 6.0]);
        assert_coeffs(&ch, &[1.0, 0.0, 0.5, 0.0]);
        assert_coeffs(&t.tanh(), &[0.0, 1.0, 0.0, -1.0 / 3.0]);
        let one_plus_t = t.add_scalar(1.0);
        assert_coeffs(&one_plus_t.ln().unwrap(), &[0.0, 1.0, -0.5, 1.0 / 3.0]);
        assert_coeffs(&one_plus_t.sqrt().unwrap(), &[1.0, 0.5, -0.125, 0.0625]);
    }

    #[test]
    fn pow_of_perfect_square() {
        let a = Jet::new(vec![1.0, 2.0, 1.0, 0.0]);
        assert_coeffs(&a.powf(0.5).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn pow_dispatch_paths_agree() {
        let a = Jet::new(vec![1.3, -0.4, 0.9, 0.1, -0.2, 0.05]);
        for r in [-4.0, -3.0, -1.0, 2.0, 3.0, 4.0, 5.0, 7.0, -6.0] {
            let fast = a.powf(r).unwrap();
            let general = a.pow_recurrence(r);
            for (x, y) in fast.coeffs().iter().zip(general.coeffs()) {
                assert_relative_eq!(*x, *y, max_relative = 1e-12, epsilon = 1e-13);
            }
        }
        assert_eq!(a.powf(0.0).unwrap(), Jet::constant(1.0, 5));
    }

    #[test]
    fn pow_domain_errors() {
        let neg = Jet::new(vec![-1.0, 1.0]);
        assert!(matches!(
            neg.powf(1.5),
            Err(JetError::Domain { func: "pow", .. })
        ));
        let zero = Jet::new(vec![0.0, 1.0, 0.0]);
        assert!(zero.powf(-5.0).is_err());
        assert!(zero.powf(-2.0).is_err());
        // a positive integer power of a jet through zero is still defined
        let cube = zero.powf(6.0).unwrap();
        assert_eq!(cube.coeffs(), &[0.0, 0.0, 0.0]);
        assert_eq!(neg.powf(3.0).unwrap().coeffs(), &[-1.0, 3.0]);
    }

    #[test]
    fn log_and_sqrt_domain_errors() {
        let z = Jet::new(vec![0.0, 1.0]);
        assert_eq!(
            z.ln(),
            Err(JetError::Domain {
                func: "log",
                value: 0.0
            })
        );
        assert!(Jet::constant(-2.0, 1).sqrt().is_err());
        assert!(Jet::constant(f64::NAN, 1).ln().is_err());
    }

    #[test]
    fn degree_zero_is_scalar_arithmetic() {
        let x = Jet::constant(0.7, 0);
        let y = Jet::constant(-1.9, 0);
        assert_eq!(x.checked_mul(&y).unwrap().value(), 0.7 * -1.9);
        assert_eq!(x.checked_div(&y).unwrap().value(), 0.7 / -1.9);
        assert_eq!(x.exp().value(), 0.7f64.exp());
        assert_eq!(x.ln().unwrap().value(), 0.7f64.ln());
        assert_eq!(x.sqrt().unwrap().value(), 0.7f64.sqrt());
        assert_eq!(x.powf(1.5).unwrap().value(), 0.7f64.powf(1.5));
        assert_eq!(x.tanh().value(), 0.7f64.tanh());
        assert_eq!(y.sin().value(), (-1.9f64).sin());
        assert_eq!(y.cosh().value(), (-1.9f64).cosh());
    }

    #[test]
    fn horner_and_derivatives() {
        let a = Jet::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(a.eval(0.0), 1.0);
        assert_eq!(a.eval(2.0), 1.0 + 4.0 + 12.0);
        assert_eq!(a.derivative(2), 6.0);
    }

    #[test]
    fn op_counter_accumulates() {
        reset_op_count();
        let a = Jet::variable(0.5, 4);
        let _ = a.checked_mul(&a).unwrap();
        assert_eq!(op_count(), 25);
        reset_op_count();
        assert_eq!(op_count(), 0);
    }
}
