//! Shared numerics: normal distribution functions, small symmetric-matrix
//! routines, Kolmogorov-Smirnov statistics, and a bounded 1-D minimizer.

/// 1/sqrt(pi)
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

// Rational coefficients for the complementary error function, double
// precision (Cody, "Rational Chebyshev approximation for the error
// function", 1969; the classic CALERF layout). Literals keep the
// published digits.
#[allow(clippy::excessive_precision)]
const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
#[allow(clippy::excessive_precision)]
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];
#[allow(clippy::excessive_precision)]
const ERF_C: [f64; 9] = [
    5.641_884_969_886_700_89e-1,
    8.883_149_794_388_375_94e0,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
#[allow(clippy::excessive_precision)]
const ERF_D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];
#[allow(clippy::excessive_precision)]
const ERF_P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
#[allow(clippy::excessive_precision)]
const ERF_Q: [f64; 5] = [
    2.568_520_192_289_822_42e0,
    1.872_952_849_923_460_47e0,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];

fn erfc_positive(y: f64) -> f64 {
    debug_assert!(y > 0.46875);
    let (xnum, xden, ysq_arg) = if y <= 4.0 {
        let mut xnum = ERF_C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + ERF_C[i]) * y;
            xden = (xden + ERF_D[i]) * y;
        }
        ((xnum + ERF_C[7]), (xden + ERF_D[7]), y)
    } else {
        if y >= 26.6 {
            return 0.0;
        }
        let z = 1.0 / (y * y);
        let mut xnum = ERF_P[5] * z;
        let mut xden = z;
        for i in 0..4 {
            xnum = (xnum + ERF_P[i]) * z;
            xden = (xden + ERF_Q[i]) * z;
        }
        let r = z * (xnum + ERF_P[4]) / (xden + ERF_Q[4]);
        ((FRAC_1_SQRT_PI - r), y, y)
    };
    // Split the exponential to preserve accuracy for large arguments.
    let ysq = (ysq_arg * 16.0).trunc() / 16.0;
    let del = (ysq_arg - ysq) * (ysq_arg + ysq);
    (-ysq * ysq).exp() * (-del).exp() * xnum / xden
}

/// Complementary error function, accurate to ~1e-16 relative over the
/// non-underflowing range.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        let z = if y > 1e-300 { y * y } else { 0.0 };
        let mut xnum = ERF_A[4] * z;
        let mut xden = z;
        for i in 0..3 {
            xnum = (xnum + ERF_A[i]) * z;
            xden = (xden + ERF_B[i]) * z;
        }
        1.0 - x * (xnum + ERF_A[3]) / (xden + ERF_B[3])
    } else if x > 0.0 {
        erfc_positive(y)
    } else {
        2.0 - erfc_positive(y)
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i as f64 + 1.0) / n - f;
        d = d.max(lo).max(hi);
    }
    d
}

/// Asymptotic KS critical value at significance `alpha` for sample size `n`:
/// sqrt(-ln(alpha/2)/2) / sqrt(n).
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
pub fn sym_eigenvalues(mat: &[Vec<f64>]) -> Vec<f64> {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    if n == 0 {
        return Vec::new();
    }
    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Lower-triangular factor L with L L^T = `mat` for a positive semidefinite
/// matrix. Pivots below `tol * scale` are treated as exactly zero (rank
/// deficiency); a pivot more negative than that is an error.
#[allow(clippy::needless_range_loop)]
pub fn psd_cholesky(mat: &[Vec<f64>], tol: f64) -> Result<Vec<Vec<f64>>, f64> {
    let n = mat.len();
    let scale = mat
        .iter()
        .enumerate()
        .map(|(i, r)| r[i].abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let cutoff = tol * scale;
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = mat[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d < -cutoff {
            return Err(d);
        }
        if d <= cutoff {
            // rank-deficient direction
            continue;
        }
        let root = d.sqrt();
        l[j][j] = root;
        for i in (j + 1)..n {
            let mut v = mat[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            l[i][j] = v / root;
        }
    }
    Ok(l)
}

/// Ordinary least-squares line fit. Returns (slope, intercept, rss).
pub fn line_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    Some((slope, intercept, rss))
}

/// Golden-section minimization of `f` on [a, b].
pub fn golden_minimize<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        // mpmath, 30 digits
        let cases = [
            (0.0, 1.0),
            (0.1, 0.887537083981715107000774779459),
            (0.5, 0.479500122186953462317253346108),
            (1.0, 0.157299207050285130658779364917),
            (2.0, 0.00467773498104726583793074363275),
            (5.0, 1.53745979442803485018834348538e-12),
            (-1.0, 1.84270079294971486934122063508),
            (-3.0, 1.99997790950300141455862722387),
        ];
        for (x, want) in cases {
            let got = erfc(x);
            assert!(
                (got - want).abs() <= 1e-15 * want.abs().max(1.0),
                "erfc({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn norm_cdf_symmetry_is_exact() {
        for &x in &[0.0, 0.3, 0.77, 1.5, 2.9, 4.2, 7.0] {
            let sum = norm_cdf(x) + norm_cdf(-x);
            assert!((sum - 1.0).abs() < 1e-15, "x={x} sum={sum}");
        }
    }

    #[test]
    fn ks_critical_one_percent() {
        // sqrt(-ln 0.005 / 2) = 1.62762...
        let c = ks_critical(0.01, 10_000);
        assert!((c - 0.016276).abs() < 1e-5);
    }

    #[test]
    fn jacobi_eigenvalues_2x2() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let mut ev = sym_eigenvalues(&m);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_roundtrip_and_rank_deficiency() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 2.0]];
        let l = psd_cholesky(&m, 1e-12).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - m[i][j]).abs() < 1e-12);
            }
        }
        // zero matrix factors to zero
        let z = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let lz = psd_cholesky(&z, 1e-12).unwrap();
        assert!(lz.iter().flatten().all(|&v| v == 0.0));
        // indefinite matrix rejected
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(psd_cholesky(&bad, 1e-12).is_err());
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        // x-resolution of a value-only minimizer is ~sqrt(eps) at the min
        let x = golden_minimize(|x| (x - 1.25) * (x - 1.25) + 3.0, -10.0, 10.0, 200);
        assert!((x - 1.25).abs() < 1e-6);
    }
}
