//! Log-domain modified Bessel functions of the first kind and the von
//! Mises-Fisher normalizing constant on the unit sphere in `R^D`.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Orders at or above this use the uniform large-order expansion.
const DEBYE_MIN_ORDER: f64 = 30.0;
/// Small orders switch from the power series to the large-argument expansion
/// beyond this argument.
const HANKEL_MIN_ARG: f64 = 1e4;

// Coefficients of the Debye polynomials u_k(t), lowest power first.
const DEBYE: [&[f64]; 9] = [
    &[1.0],
    &[0.0, 0.125, 0.0, -0.208_333_333_333_333_34],
    &[
        0.0,
        0.0,
        0.070_312_5,
        0.0,
        -0.401_041_666_666_666_7,
        0.0,
        0.334_201_388_888_888_9,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.073_242_187_5,
        0.0,
        -0.891_210_937_5,
        0.0,
        1.846_462_673_611_111_2,
        0.0,
        -1.025_812_596_450_617_3,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.0,
        0.112_152_099_609_375,
        0.0,
        -2.364_086_914_062_5,
        0.0,
        8.789_123_535_156_25,
        0.0,
        -11.207_002_616_222_994,
        0.0,
        4.669_584_423_426_247,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.227_108_001_708_984_38,
        0.0,
        -7.368_794_359_479_632,
        0.0,
        42.534_998_745_388_46,
        0.0,
        -91.818_241_543_240_02,
        0.0,
        84.636_217_674_600_73,
        0.0,
        -28.212_072_558_200_244,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.572_501_420_974_731_4,
        0.0,
        -26.491_430_486_951_554,
        0.0,
        218.190_511_744_211_6,
        0.0,
        -699.579_627_376_132_5,
        0.0,
        1_059.990_452_528,
        0.0,
        -765.252_468_141_181_7,
        0.0,
        212.570_130_039_217_13,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        1.727_727_502_584_457_4,
        0.0,
        -108.090_919_788_394_66,
        0.0,
        1_200.902_913_216_352_5,
        0.0,
        -5_305.646_978_613_403,
        0.0,
        11_655.393_336_864_534,
        0.0,
        -13_586.550_006_434_138,
        0.0,
        8_061.722_181_737_309,
        0.0,
        -1_919.457_662_318_407,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        6.074_042_001_273_483,
        0.0,
        -493.915_304_773_088,
        0.0,
        7_109.514_302_489_364,
        0.0,
        -41_192.654_968_897_55,
        0.0,
        122_200.464_983_017_46,
        0.0,
        -203_400.177_280_415_55,
        0.0,
        192_547.001_232_531_53,
        0.0,
        -96_980.598_388_637_52,
        0.0,
        20_204.291_330_966_15,
    ],
];

/// `ln I_nu(x)` for `nu >= 0`, `x >= 0`.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    assert!(
        nu >= 0.0 && x >= 0.0,
        "log_bessel_i({nu}, {x}) out of domain"
    );
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if nu >= DEBYE_MIN_ORDER {
        log_bessel_i_debye(nu, x)
    } else if x > HANKEL_MIN_ARG.max(nu * nu) {
        log_bessel_i_hankel(nu, x)
    } else {
        log_bessel_i_series(nu, x)
    }
}

/// Power series `sum_k (x^2/4)^k / (k! Gamma(nu + k + 1))`, accumulated with
/// a running rescale so large arguments cannot overflow.
pub(crate) fn log_bessel_i_series(nu: f64, x: f64) -> f64 {
    const RESCALE: f64 = 1e200;
    let q = 0.25 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut log_scale = 0.0_f64;
    let mut k = 0.0_f64;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += RESCALE.ln();
        }
        // Terms decrease monotonically once k(k + nu) > q.
        if k * (k + nu) > q && term < sum * 1e-17 {
            break;
        }
    }
    nu * (0.5 * x).ln() - ln_gamma(nu + 1.0) + sum.ln() + log_scale
}

/// Uniform asymptotic expansion in the order: with `z = x / nu`,
/// `I_nu(nu z) ~ exp(nu eta) / sqrt(2 pi nu) / (1 + z^2)^(1/4) * sum u_k(t) / nu^k`.
pub(crate) fn log_bessel_i_debye(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = (1.0 + z * z).sqrt();
    let t = 1.0 / root;
    // eta = sqrt(1 + z^2) + ln(z / (1 + sqrt(1 + z^2)))
    let eta = root + (z / (1.0 + root)).ln();
    let mut series = 0.0;
    let mut inv_pow = 1.0;
    for coeffs in DEBYE {
        series += polyval(coeffs, t) * inv_pow;
        inv_pow /= nu;
    }
    nu * eta - 0.5 * (2.0 * PI * nu).ln() - 0.5 * root.ln() + series.ln()
}

/// Large-argument expansion `e^x / sqrt(2 pi x) * sum (-1)^k a_k(nu) / x^k`.
pub(crate) fn log_bessel_i_hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
}

fn polyval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// `ln` of the surface area of the unit sphere in `R^dim`:
/// `2 pi^(dim/2) / Gamma(dim/2)`.
pub fn log_sphere_area(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    std::f64::consts::LN_2 + half * PI.ln() - ln_gamma(half)
}

/// `ln C_D(kappa)`, the log normalizer of the vMF density on the unit sphere
/// in `R^dim`. At `kappa = 0` the density is uniform.
pub fn log_vmf_normalizer(dim: usize, kappa: f64) -> f64 {
    assert!(dim >= 2, "vMF needs dimension >= 2");
    assert!(kappa >= 0.0 && kappa.is_finite(), "invalid kappa {kappa}");
    if kappa == 0.0 {
        return -log_sphere_area(dim);
    }
    let nu = dim as f64 / 2.0 - 1.0;
    nu * kappa.ln() - (dim as f64 / 2.0) * (2.0 * PI).ln() - log_bessel_i(nu, kappa)
}

/// Mean resultant length of a vMF: `A_D(kappa) = I_{D/2}(kappa) / I_{D/2-1}(kappa)`.
pub fn mean_resultant_length(dim: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let nu = dim as f64 / 2.0 - 1.0;
    (log_bessel_i(nu + 1.0, kappa) - log_bessel_i(nu, kappa)).exp()
}

/// Closed-form concentration estimate from a mean resultant length:
/// `R (D - R^2) / (1 - R^2)`. `r_bar` is clamped to `[0, 1 - 1e-9]`.
pub fn banerjee_kappa(r_bar: f64, dim: usize) -> f64 {
    let r = r_bar.clamp(0.0, 1.0 - 1e-9);
    let r2 = r * r;
    r * (dim as f64 - r2) / (1.0 - r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    // ln I_nu(x) from a 40-digit arbitrary-precision evaluation.
    const REFERENCE: &[(f64, f64, f64)] = &[
        (0.0, 1.0, 0.235_914_358_507_178_65),
        (0.0, 1e-3, 2.499_999_843_750_017_5e-7),
        (0.5, 2.0, 0.716_002_429_689_468_04),
        (3.0, 0.5, -5.935_041_882_246_392_6),
        (3.0, 40.0, 37.125_897_792_467_998),
        (7.0, 10.0, 5.472_378_166_951_772_6),
        (7.0, 200.0, 196.309_734_122_602_59),
        (7.0, 5000.0, 4_994.817_589_384_282),
        (29.5, 10.0, -24.665_702_209_641_825),
        (30.0, 10.0, -25.578_492_270_935_312),
        (30.0, 80.0, 71.296_618_638_607_6),
        (100.0, 1.0, -433.051_618_394_065_9),
        (100.0, 150.0, 114.247_201_744_792_14),
        (255.0, 1e-8, -6_035.738_221_869_04),
        (255.0, 1.0, -1_338.463_655_600_542),
        (255.0, 100.0, -154.557_397_027_119_72),
        (255.0, 1000.0, 963.271_879_799_704_8),
        (255.0, 5000.0, 4_988.320_748_645_708),
        (0.0, 2e5, 199_992.978_025_769_03),
        (7.0, 3e5, 299_992.775_211_339_84),
        (1.5, 1e4, 9_994.475_791_275_807),
    ];

    #[test]
    fn log_bessel_matches_reference() {
        for &(nu, x, expected) in REFERENCE {
            let got = log_bessel_i(nu, x);
            let tol = 1e-12 * expected.abs().max(1.0);
            assert!(
                (got - expected).abs() <= tol,
                "ln I_{nu}({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn series_and_debye_agree_at_crossover() {
        for &x in &[0.1, 5.0, 30.0, 80.0, 300.0] {
            for &nu in &[30.0, 45.0, 60.0] {
                let a = log_bessel_i_series(nu, x);
                let b = log_bessel_i_debye(nu, x);
                assert!(
                    (a - b).abs() < 1e-11 * a.abs().max(1.0),
                    "nu={nu} x={x}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn series_and_hankel_agree() {
        for &(nu, x) in &[(0.0, 2e4), (3.0, 1.5e4), (7.0, 5e4)] {
            let a = log_bessel_i_series(nu, x);
            let b = log_bessel_i_hankel(nu, x);
            assert!((a - b).abs() < 1e-9, "nu={nu} x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn i0_at_one_by_series_oracle() {
        // I_0(1) = sum_k 1 / (4^k (k!)^2)
        let mut s = 0.0;
        let mut term = 1.0;
        for k in 0..30 {
            if k > 0 {
                term /= 4.0 * (k * k) as f64;
            }
            s += term;
        }
        assert!((s - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((log_bessel_i(0.0, 1.0) - s.ln()).abs() < 1e-14);
    }

    #[test]
    fn vmf_normalizer_reference() {
        let cases = [
            (2, 0.0, -1.837_877_066_409_345_5),
            (2, 1.0, -2.073_791_424_916_524),
            (3, 0.0, -2.531_024_246_969_290_8),
            (3, 10.0, -9.535_291_971_354_146),
            (8, 0.0, -3.480_307_254_729_491),
            (16, 50.0, -33.952_267_191_623_82),
            (512, 0.0, 867.968_103_160_394_3),
            (512, 341.166_666_666_666_7, 770.999_164_066_171_4),
            (512, 5000.0, -3_286.933_013_835_360_5),
        ];
        for (dim, kappa, expected) in cases {
            let got = log_vmf_normalizer(dim, kappa);
            assert!(
                (got - expected).abs() < 1e-9,
                "D={dim} kappa={kappa}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn normalizer_continuous_at_zero() {
        for dim in [2, 8, 512] {
            let a = log_vmf_normalizer(dim, 1e-8);
            let b = log_vmf_normalizer(dim, 0.0);
            assert!((a - b).abs() < 1e-4, "D={dim}: {a} vs {b}");
        }
    }

    #[test]
    fn normalizer_finite_on_kappa_grid() {
        let mut kappa = 1e-6;
        while kappa <= 5000.0 {
            let c = log_vmf_normalizer(512, kappa);
            assert!(c.is_finite(), "kappa={kappa}");
            assert!((c + kappa).is_finite());
            kappa *= 1.37;
        }
        assert!(log_vmf_normalizer(512, 5000.0).is_finite());
    }

    #[test]
    fn mean_resultant_reference() {
        let cases = [
            (16, 10.0, 0.487_621_667_979_391_4),
            (16, 50.0, 0.859_900_015_661_756_7),
            (16, 200.0, 0.963_112_255_627_176_3),
            (8, 0.5, 0.062_305_698_884_170_29),
            (3, 1.0, 0.313_035_285_499_331_3),
        ];
        for (dim, kappa, expected) in cases {
            assert!((mean_resultant_length(dim, kappa) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn banerjee_examples() {
        assert_eq!(banerjee_kappa(0.0, 512), 0.0);
        let k = banerjee_kappa(0.5, 512);
        assert!((k - 0.5 * (512.0 - 0.25) / 0.75).abs() < 1e-12);
        assert!((k - 341.166_666_666_666_7).abs() < 1e-9);
        assert!(banerjee_kappa(1.0, 16).is_finite());
    }
}
