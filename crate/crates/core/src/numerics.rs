//! Real roots of low-degree polynomials.
//!
//! Event detection reduces every boundary crossing to a polynomial in the
//! flight time of degree at most four: lines give quadratics, circles give
//! quartics (quadratics once the force vanishes). The solver here works on
//! coefficients pre-scaled to unit max-norm, tries the closed forms first
//! (quadratic formula, trigonometric/Cardano cubic, Ferrari quartic via the
//! resolvent cubic), and falls back to a bracketing solver built on the
//! critical points of the derivative whenever the closed form is suspected of
//! having lost precision. Every root is Newton-polished against the scaled
//! polynomial before it is returned.

use arrayvec::ArrayVec;
use thiserror::Error;

/// Relative threshold below which a leading coefficient is dropped.
const DEGREE_EPS: f64 = 1e-30;
/// Residual (relative to the polynomial scale) above which a root is rejected.
const ILL_CONDITIONED: f64 = 1e-6;
/// Residual above which the closed form is abandoned for bracketing.
const CLOSED_FORM_RESIDUAL: f64 = 1e-12;
/// Relative size of a cancelled discriminant that counts as "lost 6 digits".
const DIGITS_LOST: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("polynomial has degree 0 after normalization")]
    DegreeZero,
    #[error("polynomial degree {0} exceeds 4")]
    DegreeTooHigh(usize),
    #[error("non-finite coefficient in {0:?}")]
    NonFinite(Vec<f64>),
    #[error("ill-conditioned root {root} (residual {residual:e}, scale {scale:e}) for {coeffs:?}")]
    IllConditioned {
        root: f64,
        residual: f64,
        scale: f64,
        coeffs: Vec<f64>,
    },
}

/// Polynomial with real coefficients in ascending order, degree at most 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: ArrayVec<f64, 5>,
}

/// A real root and its multiplicity (1 or 2; higher multiplicities are
/// reported as 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: f64,
    pub multiplicity: u8,
}

pub type Roots = ArrayVec<Root, 4>;

impl Polynomial {
    /// Builds a polynomial from ascending coefficients, trimming leading
    /// coefficients that are negligible relative to the largest one.
    pub fn new(coeffs: &[f64]) -> Result<Self, NumericsError> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(NumericsError::NonFinite(coeffs.to_vec()));
        }
        let max = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let mut len = coeffs.len();
        while len > 0 && coeffs[len - 1].abs() <= DEGREE_EPS * max {
            len -= 1;
        }
        if len > 5 {
            return Err(NumericsError::DegreeTooHigh(len - 1));
        }
        let mut out = ArrayVec::new();
        out.extend(coeffs[..len].iter().copied());
        Ok(Self { coeffs: out })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree after normalization; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        horner(&self.coeffs, t)
    }

    /// Scale used for residual checks: max|c_i| * max(1,|t|)^deg.
    pub fn residual_scale(&self, t: f64) -> f64 {
        let max = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        max * t.abs().max(1.0).powi(self.degree() as i32)
    }

    fn scaled(&self) -> ArrayVec<f64, 5> {
        let max = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        self.coeffs.iter().map(|c| c / max).collect()
    }
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

fn derivative(c: &[f64]) -> ArrayVec<f64, 5> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| ci * i as f64)
        .collect()
}

/// Value and derivative in one Horner pass.
fn horner_d(c: &[f64], t: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &ci in c.iter().rev() {
        dp = dp * t + p;
        p = p * t + ci;
    }
    (p, dp)
}

/// Sum of |c_i t^i|, the natural rounding scale of a Horner evaluation.
fn abs_scale(c: &[f64], t: f64) -> f64 {
    let at = t.abs();
    c.iter().rev().fold(0.0, |acc, &ci| acc * at + ci.abs())
}

fn polish(c: &[f64], mut t: f64) -> f64 {
    let (mut p, _) = horner_d(c, t);
    for _ in 0..8 {
        let (_, dp) = horner_d(c, t);
        if dp == 0.0 || p == 0.0 {
            break;
        }
        let next = t - p / dp;
        let (pn, _) = horner_d(c, next);
        if !next.is_finite() || pn.abs() >= p.abs() {
            break;
        }
        t = next;
        p = pn;
    }
    t
}

/// All real roots of `p`, sorted ascending, with multiplicity tags.
pub fn real_roots(p: &Polynomial) -> Result<Roots, NumericsError> {
    if p.degree() == 0 {
        return Err(NumericsError::DegreeZero);
    }
    let c = p.scaled();
    let mut roots = match closed_form(&c) {
        Some(r) => r,
        None => bracketed(&c),
    };
    roots.sort_by(|a, b| a.value.total_cmp(&b.value));
    for r in &roots {
        let residual = horner(&c, r.value).abs();
        let scale = abs_scale(&c, r.value).max(r.value.abs().max(1.0).powi(c.len() as i32 - 1));
        if residual > ILL_CONDITIONED * scale {
            return Err(NumericsError::IllConditioned {
                root: r.value,
                residual,
                scale,
                coeffs: p.coeffs.to_vec(),
            });
        }
    }
    Ok(roots)
}

/// Smallest root strictly greater than `t_min`, if any.
pub fn smallest_root_above(p: &Polynomial, t_min: f64) -> Result<Option<f64>, NumericsError> {
    Ok(real_roots(p)?.iter().map(|r| r.value).find(|&v| v > t_min))
}

/// Closed-form path. Returns `None` when the result cannot be trusted.
fn closed_form(c: &[f64]) -> Option<Roots> {
    let raw: ArrayVec<f64, 4> = match c.len() - 1 {
        1 => [-c[0] / c[1]].into_iter().collect(),
        2 => quadratic(c[0], c[1], c[2])?,
        3 => cubic(c[2] / c[3], c[1] / c[3], c[0] / c[3])?,
        4 => quartic(c[0] / c[4], c[1] / c[4], c[2] / c[4], c[3] / c[4])?,
        _ => return None,
    };
    let polished: ArrayVec<f64, 4> = raw.iter().map(|&t| polish(c, t)).collect();
    for &t in &polished {
        if !t.is_finite() {
            return None;
        }
        let scale = abs_scale(c, t);
        if horner(c, t).abs() > CLOSED_FORM_RESIDUAL * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
    }
    Some(merge_close(c, polished))
}

/// Merges numerically coincident roots into double roots.
fn merge_close(c: &[f64], mut ts: ArrayVec<f64, 4>) -> Roots {
    ts.sort_by(|a, b| a.total_cmp(b));
    let dc = derivative(c);
    let mut out = Roots::new();
    let mut i = 0;
    while i < ts.len() {
        if i + 1 < ts.len() {
            let (a, b) = (ts[i], ts[i + 1]);
            let tol = 1e-7 * a.abs().max(b.abs()).max(1.0);
            if (b - a).abs() <= tol {
                let mid = polish(&dc, 0.5 * (a + b));
                if horner(c, mid).abs() <= CLOSED_FORM_RESIDUAL * abs_scale(c, mid) {
                    out.push(Root {
                        value: mid,
                        multiplicity: 2,
                    });
                    i += 2;
                    continue;
                }
            }
        }
        out.push(Root {
            value: ts[i],
            multiplicity: 1,
        });
        i += 1;
    }
    out
}

/// Real roots of c0 + c1 t + c2 t^2 (c2 != 0). `None` on cancellation.
fn quadratic(c0: f64, c1: f64, c2: f64) -> Option<ArrayVec<f64, 4>> {
    let b = c1 / c2;
    let c = c0 / c2;
    let disc = b * b - 4.0 * c;
    let mag = (b * b).abs() + (4.0 * c).abs();
    let mut out = ArrayVec::new();
    if disc < 0.0 {
        if -disc < DIGITS_LOST * mag {
            return None;
        }
        return Some(out);
    }
    if disc == 0.0 {
        out.push(-0.5 * b);
        out.push(-0.5 * b);
        return Some(out);
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        // b == 0 and c == 0
        out.push(0.0);
        out.push(0.0);
        return Some(out);
    }
    let r1 = q;
    let r2 = c / q;
    out.push(r1.min(r2));
    out.push(r1.max(r2));
    Some(out)
}

/// Real roots of the monic cubic t^3 + a t^2 + b t + c.
fn cubic(a: f64, b: f64, c: f64) -> Option<ArrayVec<f64, 4>> {
    let mut out = ArrayVec::new();
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let q3 = q * q * q;
    let r2 = r * r;
    let mag = q3.abs() + r2;
    let disc = q3 - r2;
    if disc.abs() < DIGITS_LOST * mag && mag > 0.0 {
        return None;
    }
    if r2 < q3 {
        let theta = (r / q3.sqrt()).clamp(-1.0, 1.0).acos();
        let s = -2.0 * q.sqrt();
        let shift = a / 3.0;
        out.push(s * (theta / 3.0).cos() - shift);
        out.push(s * ((theta + 2.0 * std::f64::consts::PI) / 3.0).cos() - shift);
        out.push(s * ((theta - 2.0 * std::f64::consts::PI) / 3.0).cos() - shift);
    } else {
        let big_a = -r.signum() * (r.abs() + (r2 - q3).sqrt()).cbrt();
        let big_b = if big_a == 0.0 { 0.0 } else { q / big_a };
        out.push(big_a + big_b - a / 3.0);
    }
    Some(out)
}

/// Largest real root of the monic cubic, polished; used for the resolvent.
fn cubic_largest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let coeffs = [c, b, a, 1.0];
    let roots = match cubic(a, b, c) {
        Some(r) => r,
        None => bracketed(&coeffs).iter().map(|r| r.value).collect(),
    };
    roots
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
        .map(|r| polish(&coeffs, r))
}

/// Ferrari's method for the monic quartic t^4 + a t^3 + b t^2 + c t + d.
fn quartic(d: f64, c: f64, b: f64, a: f64) -> Option<ArrayVec<f64, 4>> {
    let a2 = a * a;
    let p = b - 3.0 * a2 / 8.0;
    let q = c - a * b / 2.0 + a2 * a / 8.0;
    let r = d - a * c / 4.0 + a2 * b / 16.0 - 3.0 * a2 * a2 / 256.0;
    let shift = -a / 4.0;
    let mut out = ArrayVec::new();
    let q_mag = c.abs() + (a * b / 2.0).abs() + (a2 * a / 8.0).abs();
    if q.abs() <= 1e-14 * q_mag.max(1e-300) {
        // biquadratic in y^2
        let ys = quadratic(r, p, 1.0)?;
        for &z in &ys {
            if z > 0.0 {
                let s = z.sqrt();
                out.push(-s + shift);
                out.push(s + shift);
            } else if z == 0.0 {
                out.push(shift);
                out.push(shift);
            } else if -z < DIGITS_LOST * (p.abs() + r.abs().sqrt()) {
                return None;
            }
        }
        return Some(out);
    }
    // Resolvent: m^3 + p m^2 + (p^2/4 - r) m - q^2/8 = 0 has a positive root.
    let m = cubic_largest_root(p, p * p / 4.0 - r, -q * q / 8.0)?;
    if m <= 0.0 || !m.is_finite() {
        return None;
    }
    let s = (2.0 * m).sqrt();
    let k = q / (2.0 * s);
    for (lin, cst) in [(-s, p / 2.0 + m + k), (s, p / 2.0 + m - k)] {
        let ys = quadratic(cst, lin, 1.0)?;
        out.extend(ys.iter().map(|y| y + shift));
    }
    Some(out)
}

/// Root isolation through the critical points of the derivative.
fn bracketed(c: &[f64]) -> Roots {
    let deg = c.len() - 1;
    let mut out = Roots::new();
    if deg == 1 {
        out.push(Root {
            value: -c[0] / c[1],
            multiplicity: 1,
        });
        return out;
    }
    let lead = c[deg];
    let bound = 1.0
        + c[..deg]
            .iter()
            .fold(0.0_f64, |m, ci| m.max((ci / lead).abs()));
    let dc = derivative(c);
    let crit: ArrayVec<f64, 4> = bracketed(&dc)
        .iter()
        .map(|r| r.value)
        .filter(|v| v.abs() < bound)
        .collect();
    let zero_tol = |t: f64| 1e-13 * abs_scale(c, t);
    let mut knots: ArrayVec<f64, 6> = ArrayVec::new();
    knots.push(-bound);
    knots.extend(crit.iter().copied());
    knots.push(bound);
    let mut touching = [false; 6];
    for (i, &k) in knots.iter().enumerate() {
        if i > 0 && i + 1 < knots.len() && horner(c, k).abs() <= zero_tol(k) {
            touching[i] = true;
            if out
                .last()
                .is_none_or(|r| (r.value - k).abs() > 1e-9 * k.abs().max(1.0))
            {
                out.push(Root {
                    value: k,
                    multiplicity: 2,
                });
            }
        }
    }
    for w in 0..knots.len() - 1 {
        let (lo, hi) = (knots[w], knots[w + 1]);
        if touching[w] || touching[w + 1] {
            continue;
        }
        let (flo, fhi) = (horner(c, lo), horner(c, hi));
        if flo == 0.0 {
            out.push(Root {
                value: lo,
                multiplicity: 1,
            });
            continue;
        }
        if flo.signum() != fhi.signum() && fhi != 0.0 {
            out.push(Root {
                value: bisect(c, lo, hi, flo),
                multiplicity: 1,
            });
        }
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    out
}

/// Safeguarded Newton-bisection on a bracket with a sign change.
fn bisect(c: &[f64], mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let neg_lo = flo < 0.0;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p, dp) = horner_d(c, t);
        if p == 0.0 {
            return t;
        }
        if (p < 0.0) == neg_lo {
            lo = t;
        } else {
            hi = t;
        }
        let newton = if dp != 0.0 { t - p / dp } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) || hi - lo <= 0.0
        {
            return next;
        }
        t = next;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn values(p: &[f64]) -> Vec<f64> {
        real_roots(&Polynomial::new(p).unwrap())
            .unwrap()
            .iter()
            .map(|r| r.value)
            .collect()
    }

    #[test]
    fn unit_quadratic() {
        let r = values(&[-1.0, 0.0, 1.0]);
        assert_eq!(r.len(), 2);
        assert_relative_eq!(r[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(r[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn double_root_is_tagged() {
        // (t-1)^2 (t-2) (t-3) = t^4 - 7t^3 + 17t^2 - 17t + 6
        let p = Polynomial::new(&[6.0, -17.0, 17.0, -7.0, 1.0]).unwrap();
        let roots = real_roots(&p).unwrap();
        assert_eq!(roots.len(), 3);
        assert_eq!(roots[0].multiplicity, 2);
        assert_relative_eq!(roots[0].value, 1.0, epsilon = 1e-12);
        assert_relative_eq!(roots[1].value, 2.0, epsilon = 1e-12);
        assert_relative_eq!(roots[2].value, 3.0, epsilon = 1e-12);
        assert_eq!(roots[1].multiplicity, 1);
    }

    #[test]
    fn degree_zero_rejected() {
        assert_eq!(
            real_roots(&Polynomial::new(&[3.0]).unwrap()),
            Err(NumericsError::DegreeZero)
        );
        assert_eq!(
            real_roots(&Polynomial::new(&[3.0, 0.0, 1e-40]).unwrap()),
            Err(NumericsError::DegreeZero)
        );
    }

    #[test]
    fn smallest_root_queries() {
        let p = Polynomial::new(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(smallest_root_above(&p, 0.0).unwrap(), Some(1.0));
        assert_eq!(smallest_root_above(&p, 1.5).unwrap(), None);
        let q = Polynomial::new(&[1.0, 0.0, 1.0]).unwrap();
        for t_min in [-10.0, 0.0, 3.0] {
            assert_eq!(smallest_root_above(&q, t_min).unwrap(), None);
        }
    }

    #[test]
    fn mixed_scale_quartic_keeps_small_roots() {
        // tiny leading term: two huge roots plus roots near 1 and 2
        let eps = 1e-12;
        // eps*t^4 + (t-1)(t-2) approx
        let r = values(&[2.0, -3.0, 1.0, 0.0, eps]);
        let small: Vec<f64> = r.iter().copied().filter(|v| v.abs() < 10.0).collect();
        assert_eq!(small.len(), 2);
        assert_relative_eq!(small[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(small[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn cubic_and_linear() {
        let r = values(&[-6.0, 11.0, -6.0, 1.0]);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(values(&[4.0, -2.0]), vec![2.0]);
    }

    #[test]
    fn bracketing_matches_closed_form() {
        let c = [0.3, -1.7, -2.2, 0.9, 1.0];
        let closed: Vec<f64> = closed_form(&c).unwrap().iter().map(|r| r.value).collect();
        let brk: Vec<f64> = bracketed(&c).iter().map(|r| r.value).collect();
        assert_eq!(closed.len(), brk.len());
        for (a, b) in closed.iter().zip(&brk) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }
}
