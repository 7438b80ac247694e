//! Gauss–Legendre quadrature with adaptive interval bisection.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Points per panel.
const ORDER: usize = 10;
/// Deepest bisection level before giving up.
const MAX_DEPTH: u32 = 48;
/// Panel budget per integral.
const MAX_PANELS: usize = 200_000;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

fn panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(w)
        .map(|(&xi, &wi)| wi * f(mid + half * xi))
        .sum::<f64>()
        * half
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let whole = panel(&mut f, a, b);
    let mut budget = MAX_PANELS;
    refine(&mut f, a, b, whole, tol, 0, &mut budget)
}

fn refine(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = panel(f, a, mid);
    let right = panel(f, mid, b);
    let split = left + right;
    if !split.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    if (split - whole).abs() <= tol {
        return Ok(split);
    }
    *budget = budget.saturating_sub(2);
    if depth >= MAX_DEPTH || *budget == 0 {
        return Err(Error::Numerical(format!(
            "quadrature did not converge on [{a}, {b}]: panel error {:e} > {tol:e}",
            (split - whole).abs()
        )));
    }
    let l = refine(f, a, mid, left, 0.5 * tol, depth + 1, budget)?;
    Ok(l + refine(f, mid, b, right, 0.5 * tol, depth + 1, budget)?)
}

/// Vector-valued version: `f(x, out)` writes the integrand into `out`.
/// The error test uses the largest componentwise discrepancy.
pub fn integrate_vec(
    mut f: impl FnMut(f64, &mut [f64]),
    dim: usize,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut scratch = vec![0.0; dim];
    let whole = panel_vec(&mut f, &mut scratch, dim, a, b);
    let mut acc = vec![0.0; dim];
    let mut budget = MAX_PANELS;
    let mut state = VecState {
        scratch: &mut scratch,
        acc: &mut acc,
        budget: &mut budget,
    };
    refine_vec(&mut f, &mut state, a, b, whole, tol, 0)?;
    Ok(acc)
}

fn panel_vec(f: &mut impl FnMut(f64, &mut [f64]), scratch: &mut [f64], dim: usize, a: f64, b: f64) -> Vec<f64> {
    let (x, w) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out = vec![0.0; dim];
    for (&xi, &wi) in x.iter().zip(w) {
        f(mid + half * xi, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += wi * half * s;
        }
    }
    out
}

struct VecState<'a> {
    scratch: &'a mut [f64],
    acc: &'a mut [f64],
    budget: &'a mut usize,
}

fn refine_vec(
    f: &mut impl FnMut(f64, &mut [f64]),
    st: &mut VecState<'_>,
    a: f64,
    b: f64,
    whole: Vec<f64>,
    tol: f64,
    depth: u32,
) -> Result<()> {
    let dim = whole.len();
    let mid = 0.5 * (a + b);
    let left = panel_vec(f, st.scratch, dim, a, mid);
    let right = panel_vec(f, st.scratch, dim, mid, b);
    let mut err: f64 = 0.0;
    for (w, (l, r)) in whole.iter().zip(left.iter().zip(&right)) {
        let d = (l + r - w).abs();
        if !d.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        err = err.max(d);
    }
    if err <= tol {
        for (o, (l, r)) in st.acc.iter_mut().zip(left.iter().zip(&right)) {
            *o += l + r;
        }
        return Ok(());
    }
    *st.budget = st.budget.saturating_sub(2);
    if depth >= MAX_DEPTH || *st.budget == 0 {
        return Err(Error::Numerical(format!(
            "vector quadrature did not converge on [{a}, {b}]: panel error {err:e} > {tol:e}"
        )));
    }
    refine_vec(f, st, a, mid, left, 0.5 * tol, depth + 1)?;
    refine_vec(f, st, mid, b, right, 0.5 * tol, depth + 1)
}
