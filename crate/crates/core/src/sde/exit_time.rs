//! Exit time of standard 3-d Brownian motion from the unit ball, started at
//! the centre. Exit position and exit time are independent for this start,
//! which is what lets a sphere jump keep an exact clock.

use std::f64::consts::PI;

/// Below this the theta-transformed (small-time) series is used.
const SERIES_SWITCH: f64 = 0.4;
const TERMS: usize = 8;

/// `P(tau <= t)`.
pub fn cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t < SERIES_SWITCH {
        let pre = 2.0 * (2.0 / (PI * t)).sqrt();
        let s: f64 = (0..TERMS)
            .map(|k| {
                let m = (2 * k + 1) as f64;
                (-m * m / (2.0 * t)).exp()
            })
            .sum();
        (pre * s).min(1.0)
    } else {
        1.0 - survival_series(t)
    }
}

/// `P(tau > t)` from the eigenfunction expansion (accurate for moderate and large t).
fn survival_series(t: f64) -> f64 {
    let mut s = 0.0;
    for n in 1..=TERMS {
        let nf = n as f64;
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * 2.0 * (-nf * nf * PI * PI * t / 2.0).exp();
    }
    s
}

pub fn pdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t < SERIES_SWITCH {
        let c = 2.0 * (2.0 / PI).sqrt();
        (0..TERMS)
            .map(|k| {
                let m = (2 * k + 1) as f64;
                let a = m * m / 2.0;
                c * (-a / t).exp() * (a * t.powf(-2.5) - 0.5 * t.powf(-1.5))
            })
            .sum()
    } else {
        let mut s = 0.0;
        for n in 1..=TERMS {
            let nf = n as f64;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let lam = nf * nf * PI * PI;
            s += sign * lam * (-lam * t / 2.0).exp();
        }
        s
    }
}

/// Inverse CDF by safeguarded Newton iteration; `u` in (0, 1).
pub fn quantile(u: f64) -> f64 {
    let u = u.clamp(1e-300, 1.0 - 1e-16);
    let (mut lo, mut hi) = (1e-3, 60.0);
    if cdf(lo) >= u {
        // far left tail, e^{-1/(2t)} dominated; bisection in log t
        lo = 1e-6;
        hi = 1e-3;
    }
    let mut t = if u > 0.5 {
        (2.0 / (PI * PI)) * (2.0 / (1.0 - u)).ln()
    } else {
        0.5 * (lo + hi).min(0.2)
    };
    t = t.clamp(lo, hi);
    for _ in 0..100 {
        let g = cdf(t) - u;
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let d = pdf(t);
        let mut next = if d > 0.0 { t - g / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = (lo * hi).sqrt();
        }
        if (next - t).abs() <= 1e-14 * t || hi - lo <= 1e-15 * hi {
            return next;
        }
        t = next;
    }
    t
}
