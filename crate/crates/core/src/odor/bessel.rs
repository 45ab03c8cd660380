//! Modified Bessel function of the second kind, order zero.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `K0(x)` for `x > 0`.
///
/// Ascending series up to `x = 2`, Steed's continued fraction beyond.
pub fn bessel_k0(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::InvalidParameter(format!("K0 requires x > 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x <= 2.0 { k0_series(x) } else { k0_continued_fraction(x) })
}

/// `K0(x) = -(ln(x/2) + gamma) I0(x) + sum_k H_k (x^2/4)^k / (k!)^2`.
fn k0_series(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = 1.0;
    let mut i0 = 1.0;
    let mut harmonic = 0.0;
    let mut tail = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= y / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        tail += harmonic * term;
        if term < 1e-18 * i0 {
            break;
        }
    }
    -((0.5 * x).ln() + EULER_GAMMA) * i0 + tail
}

/// Steed's method for `K_0` (continued fraction CF2), accurate for `x >~ 2`.
fn k0_continued_fraction(x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 30-digit arithmetic.
    const REFERENCE: [(f64, f64); 11] = [
        (1e-6, 13.931_442_073_626_419),
        (1e-3, 7.023_688_800_562_381),
        (0.1, 2.427_069_024_702_016_6),
        (0.5, 0.924_419_071_227_665_9),
        (1.0, 0.421_024_438_240_708_3),
        (2.0, 0.113_893_872_749_533_44),
        (2.5, 0.062_347_553_200_366_19),
        (5.0, 3.691_098_334_042_594_3e-3),
        (10.0, 1.778_006_231_616_765_2e-5),
        (20.0, 5.741_237_815_336_524e-10),
        (50.0, 3.410_167_749_789_495_5e-23),
    ];

    #[test]
    fn matches_reference_values() {
        for (x, want) in REFERENCE {
            let got = bessel_k0(x).unwrap();
            assert!(
                ((got - want) / want).abs() < 1e-13,
                "K0({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn seven_digit_table_points() {
        assert!((bessel_k0(0.5).unwrap() - 0.924_419_1).abs() < 1e-7);
        assert!((bessel_k0(1.0).unwrap() - 0.421_024_4).abs() < 1e-7);
        assert!((bessel_k0(2.0).unwrap() - 0.113_893_9).abs() < 1e-7);
    }

    #[test]
    fn branches_agree_at_the_seam() {
        let lo = k0_series(2.0);
        let hi = k0_continued_fraction(2.0);
        assert!(((lo - hi) / lo).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(bessel_k0(0.0).is_err());
        assert!(bessel_k0(-1.0).is_err());
        assert!(bessel_k0(f64::NAN).is_err());
    }
}
