//! Univariate and bivariate standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::quadrature;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Absolute tolerance of the bivariate CDF quadrature.
pub const BIVARIATE_TOLERANCE: f64 = 1e-10;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// `Phi(x)` through the complementary error function, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

// Rational approximation of the normal quantile (relative error ~1.2e-9),
// polished below by a Halley step.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn rational_quantile(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Inverse standard normal CDF for `p` in `(0, 1)`.
///
/// Returns `-inf`/`+inf` at 0 and 1 and NaN outside `[0, 1]`. Upper-half
/// arguments are mapped through symmetry so the refinement always works on
/// the accurate lower tail of `erfc`.
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_quantile(1.0 - p);
    }
    let x = rational_quantile(p);
    // one Halley step against the erfc-based CDF
    let e = norm_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// `P(X < a, Y < b)` for standard normals with correlation `rho`.
///
/// Uses `Phi2 = Phi(a) Phi(b) + 1/(2 pi) * int_0^{asin rho} exp(-(a^2 - 2ab sin t + b^2) / (2 cos^2 t)) dt`,
/// whose integrand stays bounded up to `|rho| = 1`. The endpoints themselves
/// use the closed forms `min(Phi(a), Phi(b))` and `max(Phi(a) + Phi(b) - 1, 0)`.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> Result<f64> {
    bivariate_normal_cdf_tol(a, b, rho, BIVARIATE_TOLERANCE)
}

pub fn bivariate_normal_cdf_tol(a: f64, b: f64, rho: f64, tol: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || rho.is_nan() {
        return Err(Error::Numerical("NaN argument to bivariate normal CDF".into()));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "bivariate normal correlation {rho} outside [-1, 1]"
        )));
    }
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if a == f64::INFINITY {
        return Ok(pb);
    }
    if b == f64::INFINITY {
        return Ok(pa);
    }
    if rho == 1.0 {
        return Ok(pa.min(pb));
    }
    if rho == -1.0 {
        return Ok((pa + pb - 1.0).max(0.0));
    }
    let upper = rho.asin();
    let s = a * a + b * b;
    let integral = quadrature::integrate(
        |t| {
            let (sin, cos) = t.sin_cos();
            let c2 = cos * cos;
            if c2 == 0.0 {
                return 0.0;
            }
            (-(s - 2.0 * a * b * sin) / (2.0 * c2)).exp()
        },
        0.0,
        upper,
        tol * 2.0 * PI,
    )
    .map_err(|e| {
        Error::Numerical(format!(
            "bivariate normal CDF at (a={a}, b={b}, rho={rho}) failed: {e}"
        ))
    })?;
    Ok((pa * pb + integral / (2.0 * PI)).clamp(0.0, pa.min(pb)))
}
