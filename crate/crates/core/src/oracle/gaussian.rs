//! Expectation of a maximum of affine functions of a Gaussian scalar.

use statrs::function::erf::erfc;

/// One line `intercept + slope·t` of an upper envelope, active on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePiece {
    pub intercept: f64,
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Pieces of `t ↦ max_j (v_j + s_j t)` ordered left to right.
pub fn upper_envelope(v: &[f64], s: &[f64]) -> Vec<EnvelopePiece> {
    assert!(!v.is_empty() && v.len() == s.len(), "envelope needs matching non-empty data");
    let mut lines: Vec<(f64, f64)> = s.iter().cloned().zip(v.iter().cloned()).collect();
    // increasing slope; among equal slopes the largest intercept first
    lines.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    lines.dedup_by(|later, earlier| later.0 == earlier.0);

    let cross = |p: (f64, f64), q: (f64, f64)| (p.1 - q.1) / (q.0 - p.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
    for line in lines {
        while hull.len() >= 2 {
            let top = hull[hull.len() - 1];
            let prev = hull[hull.len() - 2];
            if cross(prev, line) <= cross(prev, top) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(line);
    }
    let mut pieces = Vec::with_capacity(hull.len());
    let mut lo = f64::NEG_INFINITY;
    for (i, &(slope, intercept)) in hull.iter().enumerate() {
        let hi = if i + 1 < hull.len() {
            cross((slope, intercept), hull[i + 1])
        } else {
            f64::INFINITY
        };
        pieces.push(EnvelopePiece { intercept, slope, lo, hi });
        lo = hi;
    }
    pieces
}

/// `E φ(m + sd·Z)` and its partial derivatives in `m` and `sd`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedMax {
    pub value: f64,
    pub d_mean: f64,
    pub d_sd: f64,
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// `P(a <= Z <= b)` computed on whichever tail keeps precision.
fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * erfc(-a / SQRT_2) - 0.5 * erfc(b / SQRT_2)
    }
}

/// Expectation of the envelope at `t ~ N(m, sd²)`.
pub fn expected_max_of_affine(pieces: &[EnvelopePiece], m: f64, sd: f64) -> ExpectedMax {
    if sd <= 0.0 {
        let p = pieces
            .iter()
            .find(|p| m < p.hi)
            .unwrap_or_else(|| pieces.last().expect("non-empty envelope"));
        return ExpectedMax {
            value: p.intercept + p.slope * m,
            d_mean: p.slope,
            d_sd: 0.0,
        };
    }
    let mut out = ExpectedMax {
        value: 0.0,
        d_mean: 0.0,
        d_sd: 0.0,
    };
    for p in pieces {
        let a = (p.lo - m) / sd;
        let b = (p.hi - m) / sd;
        let w = mass(a, b);
        let dens = pdf(a) - pdf(b);
        out.value += p.intercept * w + p.slope * (m * w + sd * dens);
        out.d_mean += p.slope * w;
        out.d_sd += p.slope * dens;
    }
    out
}
