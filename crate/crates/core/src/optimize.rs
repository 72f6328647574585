//! Derivative-free minimization for low-dimensional smooth objectives.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    /// Stop when the spread of simplex values is below `f_tol * (1 + |f_best|)`.
    pub f_tol: f64,
    /// ...and every vertex lies within `x_tol * (1 + |x_best|)` of the best one.
    pub x_tol: f64,
    pub max_iterations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            initial_step: 0.25,
            f_tol: 1e-12,
            x_tol: 1e-9,
            max_iterations: 5000,
        }
    }
}

pub fn nelder_mead(f: &mut impl FnMut(&[f64]) -> f64, start: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i].abs() > 1e-12 {
            opts.initial_step * v[i].abs().max(0.05)
        } else {
            opts.initial_step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evaluations)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();

        let best = values[0];
        let spread = values[n] - best;
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let scale = 1.0 + simplex[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if spread <= opts.f_tol * (1.0 + best.abs()) && size <= opts.x_tol * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = eval(&reflected, &mut evaluations);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = eval(&expanded, &mut evaluations);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(-0.5);
            let fc = eval(&c, &mut evaluations);
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = eval(&c, &mut evaluations);
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for k in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[k])
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            values[k] = eval(&shrunk, &mut evaluations);
            simplex[k] = shrunk;
        }
    }
    let k = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Minimum {
        x: simplex[k].clone(),
        value: values[k],
        iterations,
        evaluations,
        converged,
    }
}

/// Newton refinement with central-difference derivatives. Steps are accepted
/// when the objective does not rise beyond rounding level.
pub fn newton_polish(f: &mut impl FnMut(&[f64]) -> f64, start: Minimum, max_steps: usize) -> Minimum {
    let n = start.x.len();
    let mut x = start.x.clone();
    let mut fx = start.value;
    let mut evaluations = start.evaluations;
    for _ in 0..max_steps {
        let h: Vec<f64> = x.iter().map(|v| 1e-5 * v.abs().max(1e-2)).collect();
        let mut probe = |dx: &[(usize, f64)], evaluations: &mut usize| {
            let mut y = x.clone();
            for &(i, d) in dx {
                y[i] += d;
            }
            *evaluations += 1;
            f(&y)
        };
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            let fp = probe(&[(i, h[i])], &mut evaluations);
            let fm = probe(&[(i, -h[i])], &mut evaluations);
            grad[i] = (fp - fm) / (2.0 * h[i]);
            hess[i * n + i] = (fp - 2.0 * fx + fm) / (h[i] * h[i]);
            for j in 0..i {
                let fpp = probe(&[(i, h[i]), (j, h[j])], &mut evaluations);
                let fpm = probe(&[(i, h[i]), (j, -h[j])], &mut evaluations);
                let fmp = probe(&[(i, -h[i]), (j, h[j])], &mut evaluations);
                let fmm = probe(&[(i, -h[i]), (j, -h[j])], &mut evaluations);
                let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
                hess[i * n + j] = v;
                hess[j * n + i] = v;
            }
        }
        let Some(step) = solve_spd(&hess, &grad, n) else {
            break;
        };
        let slack = 1e-12 * fx.abs().max(1.0);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            evaluations += 1;
            let fc = f(&cand);
            if fc <= fx + slack {
                let moved = cand
                    .iter()
                    .zip(&x)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                x = cand;
                fx = fc;
                improved = moved > 1e-10 * scale;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations: start.iterations,
        evaluations,
        converged: start.converged,
    }
}

/// Solves `A s = g` for symmetric positive-definite `A` (row-major), or `None`.
fn solve_spd(a: &[f64], g: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = libm::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Golden-section search for a minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(&mut f, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!(m.converged);
        let m = newton_polish(&mut f, m, 10);
        assert!((m.x[0] - 1.0).abs() < 1e-7 && (m.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, _) = golden_section(&mut |x| (x - 0.3) * (x - 0.3), -2.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
