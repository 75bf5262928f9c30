//! Adaptive 7/15-point Gauss–Kronrod integration.

use crate::error::{Error, NumericContext, Result};

/// Subdivision cap before a quadrature gives up.
pub const MAX_SUBINTERVALS: usize = 10_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[points[0], points[last]]`, using the interior points
/// as initial breakpoints. Stops when the summed error estimate is at most
/// `max(rel_tol·|I|, abs_tol)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    if points.len() < 2 || points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain(
            "quadrature needs at least two strictly increasing points",
        ));
    }
    let mut segments: Vec<Segment> = points
        .windows(2)
        .map(|w| kronrod(&f, w[0], w[1]))
        .collect();

    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::numeric(
                NumericContext::new("numerics"),
                "quadrature produced a non-finite value",
            ));
        }
        if error <= (rel_tol * total.abs()).max(abs_tol) {
            return Ok(total);
        }
        if segments.len() >= MAX_SUBINTERVALS {
            return Err(Error::numeric(
                NumericContext::new("numerics"),
                format!("quadrature hit {MAX_SUBINTERVALS} subintervals, error {error:e}"),
            ));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.hi - s.lo > 8.0 * f64::EPSILON * s.lo.abs().max(s.hi.abs()))
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .ok_or_else(|| {
                Error::numeric(
                    NumericContext::new("numerics"),
                    "quadrature cannot subdivide further",
                )
            })?;
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.lo + s.hi);
        segments.push(kronrod(&f, s.lo, mid));
        segments.push(kronrod(&f, mid, s.hi));
    }
}
