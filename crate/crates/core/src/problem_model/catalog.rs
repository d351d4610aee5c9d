use super::ProblemSpec;
use crate::energy_pde::{build_allen_cahn, AllenCahnConfig};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};

const T_RANGE: (f64, f64) = (-10.0, 10.0);

fn scalar(v: f64) -> Vector {
    Vector::from_element(1, v)
}

fn fold1d() -> ProblemSpec {
    ProblemSpec::new("fold1d", 1, T_RANGE, |x, t| scalar(x[0] * x[0] - t))
        .expect("valid")
        .with_descriptor("fold1d: x^2 - t")
        .with_jacobian(|x, _| Matrix::from_element(1, 1, 2.0 * x[0]))
        .with_dt(|_, _| scalar(-1.0))
        .with_d2x_dir(|_, _, v| scalar(2.0 * v[0] * v[0]))
        .with_dt_dx_dir(|_, _, _| scalar(0.0))
        .with_scan_box(vec![(-3.0, 3.0)])
        .with_exact_section(|t| {
            if t > 0.0 {
                vec![scalar(-t.sqrt()), scalar(t.sqrt())]
            } else if t == 0.0 {
                vec![scalar(0.0)]
            } else {
                vec![]
            }
        })
}

fn pitchfork1d() -> ProblemSpec {
    ProblemSpec::new("pitchfork1d", 1, T_RANGE, |x, t| scalar(x[0].powi(3) - t * x[0]))
        .expect("valid")
        .with_descriptor("pitchfork1d: x^3 - t x")
        .with_smoothness_order(3)
        .expect("valid")
        .with_jacobian(|x, t| Matrix::from_element(1, 1, 3.0 * x[0] * x[0] - t))
        .with_dt(|x, _| scalar(-x[0]))
        .with_d2x_dir(|x, _, v| scalar(6.0 * x[0] * v[0] * v[0]))
        .with_dt_dx_dir(|_, _, v| scalar(-v[0]))
        .with_scan_box(vec![(-3.0, 3.0)])
        .with_exact_section(|t| {
            if t > 0.0 {
                vec![scalar(-t.sqrt()), scalar(0.0), scalar(t.sqrt())]
            } else {
                vec![scalar(0.0)]
            }
        })
}

fn cubicload() -> ProblemSpec {
    ProblemSpec::new("cubicload", 1, T_RANGE, |x, t| scalar(x[0].powi(3) - x[0] - t))
        .expect("valid")
        .with_descriptor("cubicload: x^3 - x - l(t), l(t) = t")
        .with_smoothness_order(3)
        .expect("valid")
        .with_jacobian(|x, _| Matrix::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0))
        .with_dt(|_, _| scalar(-1.0))
        .with_d2x_dir(|x, _, v| scalar(6.0 * x[0] * v[0] * v[0]))
        .with_dt_dx_dir(|_, _, _| scalar(0.0))
        .with_scan_box(vec![(-3.0, 3.0)])
        .with_exact_section(|t| cubic_real_roots(-1.0, -t).into_iter().map(scalar).collect())
}

/// `(x_1^2 - t, x_2, 2 x_3, ...)`: the fold times a stable linear block.
pub fn fold_product(n: usize) -> ProblemSpec {
    assert!(n >= 2, "product problem needs n >= 2");
    let name = format!("foldprod{n}d");
    ProblemSpec::new(name.clone(), n, T_RANGE, move |x, t| {
        Vector::from_fn(n, |i, _| if i == 0 { x[0] * x[0] - t } else { i as f64 * x[i] })
    })
    .expect("valid")
    .with_descriptor(format!("{name}: (x1^2 - t, k x_k)"))
    .with_jacobian(move |x, _| {
        Matrix::from_fn(n, n, |i, j| match (i, j) {
            (0, 0) => 2.0 * x[0],
            _ if i == j => i as f64,
            _ => 0.0,
        })
    })
    .with_dt(move |_, _| Vector::from_fn(n, |i, _| if i == 0 { -1.0 } else { 0.0 }))
    .with_d2x_dir(move |_, _, v| Vector::from_fn(n, |i, _| if i == 0 { 2.0 * v[0] * v[0] } else { 0.0 }))
    .with_dt_dx_dir(move |_, _, _| Vector::zeros(n))
    .with_scan_box((0..n).map(|i| if i == 0 { (-3.0, 3.0) } else { (-1.0, 1.0) }).collect())
    .with_exact_section(move |t| {
        let mk = |s: f64| Vector::from_fn(n, |i, _| if i == 0 { s } else { 0.0 });
        if t > 0.0 {
            vec![mk(-t.sqrt()), mk(t.sqrt())]
        } else if t == 0.0 {
            vec![mk(0.0)]
        } else {
            vec![]
        }
    })
}

fn linear(n: usize) -> ProblemSpec {
    let name = format!("linear{n}d");
    ProblemSpec::new(name.clone(), n, T_RANGE, |x, t| x.map(|v| v - t))
        .expect("valid")
        .with_descriptor(format!("{name}: x - t 1"))
        .with_jacobian(move |_, _| Matrix::identity(n, n))
        .with_dt(move |_, _| Vector::from_element(n, -1.0))
        .with_d2x_dir(move |_, _, _| Vector::zeros(n))
        .with_dt_dx_dir(move |_, _, _| Vector::zeros(n))
        .with_scan_box(vec![(-3.0, 3.0); n])
        .with_exact_section(move |t| vec![Vector::from_element(n, t)])
}

// No analytic t-derivative on purpose: exercises the difference fallback.
fn sin1d() -> ProblemSpec {
    ProblemSpec::new("sin1d", 1, T_RANGE, |x, t| scalar(x[0] - t.sin()))
        .expect("valid")
        .with_descriptor("sin1d: x - sin(t)")
        .with_jacobian(|_, _| Matrix::from_element(1, 1, 1.0))
        .with_scan_box(vec![(-2.0, 2.0)])
        .with_exact_section(|t| vec![scalar(t.sin())])
}

/// All named problems. The Allen–Cahn entry uses `m = 32` interior nodes on
/// a domain of length 6 (see [`AllenCahnConfig::sweep_default`]).
pub fn builtin_catalog() -> Vec<ProblemSpec> {
    vec![
        fold1d(),
        pitchfork1d(),
        cubicload(),
        fold_product(2),
        fold_product(4),
        linear(1),
        linear(3),
        sin1d(),
        lookup("allencahn").expect("catalog entry"),
    ]
}

/// Looks a problem up by name. `allencahn<m>` selects the Allen–Cahn
/// discretization with `m` interior nodes.
pub fn lookup(name: &str) -> Result<ProblemSpec> {
    match name {
        "fold1d" => return Ok(fold1d()),
        "pitchfork1d" => return Ok(pitchfork1d()),
        "cubicload" => return Ok(cubicload()),
        "linear1d" => return Ok(linear(1)),
        "linear3d" => return Ok(linear(3)),
        "sin1d" => return Ok(sin1d()),
        _ => {}
    }
    if let Some(n) = name
        .strip_prefix("foldprod")
        .and_then(|r| r.strip_suffix('d'))
        .and_then(|d| d.parse::<usize>().ok())
    {
        if n >= 2 {
            return Ok(fold_product(n));
        }
    }
    if let Some(rest) = name.strip_prefix("allencahn") {
        let m = if rest.is_empty() { 32 } else { rest.parse::<usize>().map_err(|_| Error::NotFound(name.into()))? };
        let ep = build_allen_cahn(&AllenCahnConfig::sweep_default(m))?;
        return Ok(ep.problem().clone());
    }
    Err(Error::NotFound(name.to_string()))
}

/// Real roots of `x^3 + p x + q = 0`, ascending, polished by Newton.
pub fn cubic_real_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let mut roots = if disc > 0.0 {
        // three distinct real roots, trigonometric form
        let r = 2.0 * (-p / 3.0).sqrt();
        let phi = ((3.0 * q) / (p * r)).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3)
            .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect::<Vec<_>>()
    } else if disc == 0.0 && p != 0.0 {
        vec![3.0 * q / p, -3.0 * q / (2.0 * p)]
    } else {
        let s = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    };
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = 3.0 * *r * *r + p;
            if d != 0.0 {
                *r -= (*r * *r * *r + p * *r + q) / d;
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}
