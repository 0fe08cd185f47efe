//! Special functions for the closed-form reference solutions.
//!
//! Everything here uses the *parameter* convention `m = k²`; callers holding
//! a modulus `k` pass `k * k`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

fn check_parameter(m: f64) -> Result<()> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain(format!("elliptic parameter m = {m} outside [0, 1)")));
    }
    Ok(())
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= f64::EPSILON * an {
            return an;
        }
        a = an;
        b = bn;
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind, `K(m) = π / (2 AGM(1, √(1−m)))`.
pub fn elliptic_k(m: f64) -> Result<f64> {
    check_parameter(m)?;
    Ok(FRAC_PI_2 / agm(1.0, (1.0 - m).sqrt()))
}

/// Jacobi elliptic functions `(sn, cn, dn)(u | m)` by the descending
/// Landen (AGM) scheme.
pub fn jacobi_elliptic(u: f64, m: f64) -> Result<(f64, f64, f64)> {
    check_parameter(m)?;
    if m == 0.0 {
        return Ok((u.sin(), u.cos(), 1.0));
    }
    let mut a = vec![1.0];
    let mut c = vec![m.sqrt()];
    let mut b = (1.0 - m).sqrt();
    while c.last().unwrap().abs() > f64::EPSILON * a.last().unwrap() && a.len() < 32 {
        let an = *a.last().unwrap();
        a.push(0.5 * (an + b));
        c.push(0.5 * (an - b));
        b = (an * b).sqrt();
    }
    let n = a.len() - 1;
    let mut phi = 2f64.powi(n as i32) * a[n] * u;
    for k in (1..=n).rev() {
        phi = 0.5 * (phi + (c[k] / a[k] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = (1.0 - m * sn * sn).sqrt();
    Ok((sn, cn, dn))
}

/// Eccentric anomaly `E` solving `E − e sin E = mean` by Newton iteration.
pub fn solve_kepler_equation(mean: f64, e: f64, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::Domain(format!("eccentricity {e} outside [0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    // Solve in the principal branch and shift back: E − e sin E is 2π-equivariant.
    let turns = (mean / (2.0 * PI)).round();
    let m = mean - 2.0 * PI * turns;
    let mut ecc = m;
    let mut residual = f64::INFINITY;
    for _ in 0..64 {
        residual = ecc - e * ecc.sin() - m;
        if residual.abs() <= tol {
            return Ok(ecc + 2.0 * PI * turns);
        }
        ecc -= residual / (1.0 - e * ecc.cos());
    }
    Err(Error::NoConvergence {
        iterations: 64,
        displacement: residual.abs(),
    })
}
