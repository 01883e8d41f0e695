//! Real spherical harmonics orthonormal with respect to the normalized
//! surface measure `dsigma / (4 pi)`.

/// Legendre polynomials `P_0(x), ..., P_n(x)`.
pub fn legendre_p(n: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(x);
    }
    for l in 2..=n {
        let lf = l as f64;
        let next = ((2.0 * lf - 1.0) * x * p[l - 1] - (lf - 1.0) * p[l - 2]) / lf;
        p.push(next);
    }
    p
}

/// Fully normalized associated Legendre functions
/// `sqrt((2l+1)(l-m)!/(l+m)!) P_l^m(cos theta)` for `0 <= m <= l <= lmax`,
/// stored row-major by `l` with `m` running `0..=l`.
pub(crate) fn normalized_legendre(lmax: usize, colat: f64) -> Vec<f64> {
    let x = colat.cos();
    let s = colat.sin();
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut out = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
    out[0] = 1.0;
    let mut pmm = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
            out[idx(m, m)] = pmm;
        }
        if m < lmax {
            out[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
        }
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            out[idx(l, m)] = a * (x * out[idx(l - 1, m)] - b * out[idx(l - 2, m)]);
        }
    }
    out
}

/// All real harmonics of degree `<= lmax` at `(colat, lon)`, ordered by
/// degree, then `m = 0, (1, cos), (1, sin), (2, cos), ...`.
pub(crate) fn real_harmonics(lmax: usize, colat: f64, lon: f64, out: &mut Vec<f64>) {
    out.clear();
    let p = normalized_legendre(lmax, colat);
    let trig: Vec<(f64, f64)> = (0..=lmax).map(|m| ((m as f64 * lon).cos(), (m as f64 * lon).sin())).collect();
    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..=lmax {
        let base = l * (l + 1) / 2;
        out.push(p[base]);
        for (m, &(c, s)) in trig.iter().enumerate().take(l + 1).skip(1) {
            let v = sqrt2 * p[base + m];
            out.push(v * c);
            out.push(v * s);
        }
    }
}
