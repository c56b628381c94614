//! Adaptive Gauss–Kronrod quadrature and the few special functions the
//! estimators need.

use std::collections::BinaryHeap;
use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error}")]
    NotConverged { estimate: f64, error: f64 },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { at: c });
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let (f1, f2) = (f(c - dx), f(c + dx));
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadError::NonFinite { at: c - dx });
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrate `f` over `[a, b]` to relative tolerance `rel_tol`
/// (or absolute tolerance `abs_tol`, whichever is looser).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64, QuadError> {
    let (v, e) = gk15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let (mut total, mut err) = (v, e);
    for _ in 0..5000 {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let seg = heap.pop().expect("non-empty");
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = gk15(&f, seg.a, mid)?;
        let (v2, e2) = gk15(&f, mid, seg.b)?;
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    // Recompute from the pieces to shed accumulated rounding.
    let total: f64 = heap.iter().map(|s| s.value).sum();
    let err: f64 = heap.iter().map(|s| s.error).sum();
    if err <= abs_tol.max(rel_tol * total.abs()) {
        Ok(total)
    } else {
        Err(QuadError::NotConverged { estimate: total, error: err })
    }
}

/// Integrate over `[a, ∞)` through the map `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64, abs_tol: f64) -> Result<f64, QuadError> {
    integrate(
        |t| {
            let s = 1.0 - t;
            let x = a + t / s;
            let v = f(x) / (s * s);
            if v.is_finite() { v } else if x.is_infinite() { 0.0 } else { v }
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// First positive zero of the Bessel function `J_0`.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Principal Dirichlet eigenvalue of `-½Δ` in the unit ball of `R^d`.
pub fn unit_ball_dirichlet_eigenvalue(d: usize) -> f64 {
    match d {
        1 => PI * PI / 8.0,
        2 => BESSEL_J0_FIRST_ZERO * BESSEL_J0_FIRST_ZERO / 2.0,
        3 => PI * PI / 2.0,
        _ => panic!("dimension {d} not supported"),
    }
}

fn bessel_i0_small(x: f64) -> f64 {
    let t = (x / 3.75).powi(2);
    1.0 + t * (3.515_622_9 + t * (3.089_942_4 + t * (1.206_749_2 + t * (0.265_973_2 + t * (0.036_076_8 + t * 0.004_581_3)))))
}

/// `ln K_0(x)` for `x > 0` (polynomial approximations, relative error ~1e-7).
pub fn ln_bessel_k0(x: f64) -> f64 {
    assert!(x > 0.0);
    if x <= 2.0 {
        let y = x * x / 4.0;
        let k0 = -(x / 2.0).ln() * bessel_i0_small(x)
            + (-0.577_215_66
                + y * (0.422_784_20 + y * (0.230_697_56 + y * (0.034_885_90 + y * (0.002_626_98 + y * (0.000_107_50 + y * 0.000_007_4))))));
        k0.ln()
    } else {
        let y = 2.0 / x;
        let p = 1.253_314_14
            + y * (-0.078_323_58 + y * (0.021_895_68 + y * (-0.010_624_46 + y * (0.005_878_72 + y * (-0.002_515_40 + y * 0.000_532_08)))));
        p.ln() - 0.5 * x.ln() - x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomials_and_tails() {
        let v = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
        let tail = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-10, 0.0).unwrap();
        assert!((tail - 1.0).abs() < 1e-9);
        let power = integrate_to_infinity(|x| x.powf(-3.5), 1.0, 1e-10, 0.0).unwrap();
        assert!((power - 1.0 / 2.5).abs() < 1e-9);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bessel_k0_reference_values() {
        // Tabulated K_0 values.
        for (x, k0) in [(0.5, 0.924_419_071_2), (1.0, 0.421_024_438_2), (2.0, 0.113_893_872_7), (5.0, 0.003_691_098_334)] {
            assert!((ln_bessel_k0(x).exp() / k0 - 1.0).abs() < 2e-6, "x={x}");
        }
    }
}
