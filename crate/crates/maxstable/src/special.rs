//! Scalar special functions used by the closed-form tail dependence formulas.

/// Standard normal cumulative distribution function.
///
/// Double-precision rational approximation (Graeme West's `cnorm`), absolute
/// error below 1e-15 over the whole real line. Unit tests pin values computed
/// independently with scipy.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    let z = x.abs();
    let p = if z > 37.6 {
        0.0
    } else {
        let e = (-z * z / 2.0).exp();
        if z < 7.071_067_811_865_475 {
            let b = ((((((3.526_249_659_989_109e-2 * z + 0.700_383_064_443_688) * z
                + 6.373_962_203_531_65)
                * z
                + 33.912_866_078_383)
                * z
                + 112.079_291_497_871)
                * z
                + 221.213_596_169_931)
                * z
                + 220.206_867_912_376)
                * e;
            let c = (((((((8.838_834_764_831_84e-2 * z + 1.755_667_163_182_64) * z
                + 16.064_177_579_207)
                * z
                + 86.780_732_202_946_1)
                * z
                + 296.564_248_779_674)
                * z
                + 637.333_633_378_831)
                * z
                + 793.826_512_519_948)
                * z)
                + 440.413_735_824_752;
            b / c
        } else {
            e / (2.506_628_274_631_000_5
                * (z + 1.0 / (z + 2.0 / (z + 3.0 / (z + 4.0 / (z + 0.65))))))
        }
    };
    if x > 0.0 {
        1.0 - p
    } else {
        p
    }
}
