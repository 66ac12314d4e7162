//! Adaptive Gauss–Kronrod quadrature.
//!
//! Used for moment integrals of the noise laws, normalising constants and
//! truncated-moment series. Integrals over the half line are carried out in
//! the variable `u = ln(1 + x)` so that polynomially and log-polynomially
//! decaying tails become tractable on a finite (but long) interval.

// 15-point Kronrod nodes on [0, 1] (symmetric), with 7-point Gauss weights.
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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Integrate `f` over `[a, b]` adaptively, splitting at the supplied
/// interior breakpoints first.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut segments: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = kronrod(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..4000 {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let (idx, _) = segments
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc });
        let (a, b, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let (v1, e1) = kronrod(&f, a, mid);
        let (v2, e2) = kronrod(&f, mid, b);
        segments.push((a, mid, v1, e1));
        segments.push((mid, b, v2, e2));
    }
    segments.iter().map(|s| s.2).sum()
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    integrate_with_breaks(f, &[a, b], rel_tol)
}

/// Upper end of the `u = ln(1 + x)` range integrated numerically.
pub const U_MAX: f64 = 1.0e6;

/// `∫_{u_lo}^{U_MAX} h(u) du` where `h` is already expressed in the log
/// variable (caller includes the Jacobian `e^u`). Breakpoints double from
/// `u_lo` so that both the bulk and the far tail are resolved.
pub fn integrate_log_variable<F: Fn(f64) -> f64>(h: F, u_lo: f64, rel_tol: f64) -> f64 {
    let mut breaks = vec![u_lo];
    let mut step = 0.25;
    let mut u = u_lo;
    while u < U_MAX {
        u = (u + step).min(U_MAX);
        breaks.push(u);
        step *= 2.0;
    }
    integrate_with_breaks(h, &breaks, rel_tol)
}

/// `ln x` for `x = e^u - 1`, stable for all `u > 0`.
pub fn ln_x_from_u(u: f64) -> f64 {
    if u > 30.0 {
        u + (-(-u).exp()).ln_1p()
    } else {
        u.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let v = integrate(|x| x.powi(6), -1.0, 1.0, 1e-12);
        assert!((v - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn half_line_gaussian_mass() {
        // ∫_0^∞ φ(x) dx = 1/2 in the log variable: x = e^u - 1, dx = e^u du.
        let h = |u: f64| {
            let x = u.exp_m1();
            (u - 0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let v = integrate_log_variable(h, 0.0, 1e-10);
        assert!((v - 0.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn half_line_cauchy_mass() {
        let h = |u: f64| {
            let lx = ln_x_from_u(u);
            // 1/(π(1+x²)) · (1+x), written in logs to avoid overflow.
            let ln_1px2 = if lx > 20.0 { 2.0 * lx + (-2.0 * lx).exp().ln_1p() } else { (2.0 * lx).exp().ln_1p() };
            (u - ln_1px2).exp() / std::f64::consts::PI
        };
        let v = integrate_log_variable(h, 0.0, 1e-10);
        assert!((v - 0.5).abs() < 1e-8, "{v}");
    }
}
