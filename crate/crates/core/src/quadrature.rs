//! Fixed quadrature rules on reference simplices.
//!
//! Points are given in barycentric coordinates; weights are normalised to sum
//! to one, so an integral over a physical simplex is `measure * Σ w f(x)`.

/// 14-point symmetric rule on the tetrahedron, exact for polynomials of degree 5.
pub fn tet_degree5() -> &'static [([f64; 4], f64)] {
    static RULE: std::sync::OnceLock<Vec<([f64; 4], f64)>> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        // Weights below are for the unit reference tet (volume 1/6).
        const A1: f64 = 0.092_735_250_310_891_237_478;
        const W1: f64 = 0.012_248_840_519_393_661_448;
        const A2: f64 = 0.310_885_919_263_300_613_55;
        const W2: f64 = 0.018_781_320_953_002_648_723;
        const B: f64 = 0.454_496_295_874_350_399_12;
        const W3: f64 = 0.007_091_003_462_846_904_330_3;
        let mut pts = Vec::with_capacity(14);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let c = 1.0 - 3.0 * a;
            for k in 0..4 {
                let mut p = [a; 4];
                p[k] = c;
                pts.push((p, 6.0 * w));
            }
        }
        let c = 0.5 - B;
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            let mut p = [c; 4];
            p[i] = B;
            p[j] = B;
            pts.push((p, 6.0 * W3));
        }
        pts
    })
}

/// 6-point symmetric rule on the triangle, exact for polynomials of degree 4.
pub fn tri_degree4() -> &'static [([f64; 3], f64)] {
    static RULE: std::sync::OnceLock<Vec<([f64; 3], f64)>> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        // Weights for the unit reference triangle (area 1/2).
        const A1: f64 = 0.445_948_490_915_964_886_32;
        const W1: f64 = 0.111_690_794_839_005_732_85;
        const A2: f64 = 0.091_576_213_509_770_743_46;
        const W2: f64 = 0.054_975_871_827_660_933_819;
        let mut pts = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let c = 1.0 - 2.0 * a;
            for k in 0..3 {
                let mut p = [a; 3];
                p[k] = c;
                pts.push((p, 2.0 * w));
            }
        }
        pts
    })
}

/// Two-point Gauss-Legendre rule on `[0, 1]`, exact for cubics.
pub fn line_gauss2() -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points.
///
/// Computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
