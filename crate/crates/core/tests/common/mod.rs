//! Test oracles that do not depend on the library's own formulas:
//! adaptive Gauss-Kronrod quadrature, the four densities written out
//! directly, and the 1D benchmark builder.

#![allow(dead_code, clippy::excessive_precision)]

use vi_ident::discretization::{build_mesh, Bounds, Form, MeshSpec, Problem, Source};
use vi_ident::KernelSpec;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// `∫_a^b f` by globally adaptive Gauss-Kronrod 7/15 quadrature.
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `tol` or below roundoff of the result.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (v, err) = gk15(f, a, b);
    let mut panels = vec![(a, b, v, err)];
    for _ in 0..5000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= tol.max(1e-15 * total.abs()) {
            break;
        }
        let (i, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    panels.iter().map(|p| p.2).sum()
}

/// `∫_a^∞ f`, through `s = 1/u` on `[max(a, 1), ∞)`.
pub fn integrate_to_inf(f: &dyn Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    let head = if a < 1.0 { integrate(f, a, 1.0, tol) } else { 0.0 };
    let start = a.max(1.0);
    let g = |u: f64| if u == 0.0 { 0.0 } else { f(1.0 / u) / (u * u) };
    head + integrate(&g, 0.0, 1.0 / start, tol)
}

/// `∫_{-∞}^b f` by reflection.
pub fn integrate_from_neg_inf(f: &dyn Fn(f64) -> f64, b: f64, tol: f64) -> f64 {
    integrate_to_inf(&|s| f(2.0 * b - s), b, tol)
}

/// The density of each kernel, written independently of the library.
pub fn density(kernel: KernelSpec, s: f64) -> f64 {
    match kernel {
        KernelSpec::Sigmoid => {
            let e = (-s.abs()).exp();
            e / ((1.0 + e) * (1.0 + e))
        }
        KernelSpec::Sqrt => 2.0 / (s * s + 4.0).powf(1.5),
        KernelSpec::UniformCentered => f64::from(u8::from((-0.5..=0.5).contains(&s))),
        KernelSpec::UniformShifted => f64::from(u8::from((0.0..=1.0).contains(&s))),
    }
}

/// Support of the density (possibly infinite).
pub fn support(kernel: KernelSpec) -> (f64, f64) {
    match kernel {
        KernelSpec::Sigmoid | KernelSpec::Sqrt => (f64::NEG_INFINITY, f64::INFINITY),
        KernelSpec::UniformCentered => (-0.5, 0.5),
        KernelSpec::UniformShifted => (0.0, 1.0),
    }
}

/// `∫_a^b f ρ` restricted to the support, with infinite ends handled.
fn integrate_weighted(kernel: KernelSpec, f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (lo, hi) = support(kernel);
    let (a, b) = (a.max(lo), b.min(hi));
    if a >= b {
        return 0.0;
    }
    let g = |s: f64| f(s) * density(kernel, s);
    // finite pieces between the points 0, ±4^j keep the bulk of the density
    // away from the mapped tails
    let mut cuts: Vec<f64> = (0..6).flat_map(|j| [4f64.powi(j), -(4f64.powi(j))]).collect();
    cuts.push(0.0);
    cuts.retain(|c| *c > a && *c < b);
    cuts.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut left = a;
    for c in cuts {
        if left.is_finite() {
            sum += integrate(&g, left, c, tol);
        } else {
            sum += integrate_from_neg_inf(&g, c, tol);
        }
        left = c;
    }
    match (left.is_finite(), b.is_finite()) {
        (true, true) => sum + integrate(&g, left, b, tol),
        (true, false) => sum + integrate_to_inf(&g, left, tol),
        (false, true) => sum + integrate_from_neg_inf(&g, b, tol),
        (false, false) => unreachable!("0 is always a cut of the real line"),
    }
}

/// `k = ∫ |s| ρ(s) ds` by quadrature.
pub fn absolute_mean_quadrature(kernel: KernelSpec) -> f64 {
    integrate_weighted(kernel, &|s: f64| -s, f64::NEG_INFINITY, 0.0, 1e-14)
        + integrate_weighted(kernel, &|s: f64| s, 0.0, f64::INFINITY, 1e-14)
}

/// `∫ ρ` by quadrature (should be 1).
pub fn total_mass(kernel: KernelSpec) -> f64 {
    integrate_weighted(kernel, &|_| 1.0, f64::NEG_INFINITY, 0.0, 1e-14)
        + integrate_weighted(kernel, &|_| 1.0, 0.0, f64::INFINITY, 1e-14)
}

/// `P(ε, t) = ∫_{-∞}^{t/ε} (t - ε s) ρ(s) ds` by quadrature.
pub fn plus_convolution(kernel: KernelSpec, eps: f64, t: f64) -> f64 {
    integrate_weighted(kernel, &|s: f64| t - eps * s, f64::NEG_INFINITY, t / eps, 1e-13)
}

/// The closed forms exactly as written in the literature, evaluated naively
/// (only valid where the naive formula does not overflow).
pub fn literal_plus(kernel: KernelSpec, eps: f64, t: f64) -> f64 {
    match kernel {
        KernelSpec::Sigmoid => eps * (1.0 + (t / eps).exp()).ln(),
        KernelSpec::Sqrt => ((t * t + 4.0 * eps * eps).sqrt() + t) / 2.0,
        KernelSpec::UniformCentered => {
            if t < -eps / 2.0 {
                0.0
            } else if t <= eps / 2.0 {
                (t + eps / 2.0).powi(2) / (2.0 * eps)
            } else {
                t
            }
        }
        KernelSpec::UniformShifted => {
            if t < 0.0 {
                0.0
            } else if t <= eps {
                t * t / (2.0 * eps)
            } else {
                t - eps / 2.0
            }
        }
    }
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// `-u'' = 1` on (0, 1) with `u(0) = 0` and point friction at `x = 1`.
pub fn benchmark_1d(n: usize) -> Problem {
    let mesh = build_mesh(&MeshSpec::Interval {
        left: 0.0,
        right: 1.0,
        elements: n,
    })
    .unwrap();
    Problem::new(
        mesh,
        Form::GradGrad,
        Source::default(),
        Bounds::new(0.5, 2.0).unwrap(),
        Bounds::new(0.0, 2.0).unwrap(),
    )
    .unwrap()
}

pub fn square_2d(n: usize) -> Problem {
    let mesh = build_mesh(&MeshSpec::UnitSquare { n }).unwrap();
    Problem::new(
        mesh,
        Form::GradGradPlusMass,
        Source::Affine {
            c0: 4.0,
            cx: 2.0,
            cy: -1.0,
        },
        Bounds::new(0.5, 2.0).unwrap(),
        Bounds::new(0.0, 1.0).unwrap(),
    )
    .unwrap()
}

/// Last node of the 1D benchmark.
pub fn tip(problem: &Problem, u: &nalgebra::DVector<f64>) -> f64 {
    u[problem.mesh().num_nodes() - 1]
}
