//! Nelder–Mead simplex minimization.
//!
//! Used for eigenvalue-gap minimization, where the objective behaves like
//! `sqrt(|x - x_c|)` at the minimum and gradients are useless.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop once the simplex diameter falls below this.
    pub x_tol: f64,
    /// Number of fresh restarts from the best vertex after convergence.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            x_tol: 1e-15,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Minimizes `f` starting from `start` with initial edge lengths `step`.
///
/// Infinite values are accepted as "outside the feasible region".
pub fn minimize<F>(f: F, start: &[f64], step: &[f64], options: SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best = (start.to_vec(), eval(start));
    let mut iterations = 0;
    let mut scale: Vec<f64> = step.to_vec();

    for round in 0..=options.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![best.clone()];
        for k in 0..dim {
            let mut x = best.0.clone();
            x[k] += scale[k];
            let v = eval(&x);
            simplex.push((x, v));
        }

        while iterations < options.max_iterations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if diameter(&simplex) < options.x_tol {
                break;
            }
            iterations += 1;

            let worst = simplex[dim].clone();
            let centroid: Vec<f64> = (0..dim)
                .map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let reflected = along(1.0);
            let fr = eval(&reflected);
            if fr < simplex[0].1 {
                let expanded = along(2.0);
                let fe = eval(&expanded);
                simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (reflected, fr);
                continue;
            }
            let (contracted, fc) = if fr < worst.1 {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (contracted, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = vertex
                    .0
                    .iter()
                    .zip(&anchor)
                    .map(|(v, a)| a + 0.5 * (v - a))
                    .collect();
                let v = eval(&x);
                *vertex = (x, v);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best.1;
        if improved || round == 0 {
            best = simplex[0].clone();
        }
        // restart with a simplex a few times the converged size
        let d = diameter(&simplex).max(options.x_tol);
        scale = step.iter().map(|s| (10.0 * d).min(s.abs()).copysign(*s)).collect();
        if iterations >= options.max_iterations {
            break;
        }
    }

    SimplexResult {
        x: best.0,
        value: best.1,
        iterations,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let r = minimize(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            SimplexOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-7);
        assert!((r.x[1] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn square_root_cusp() {
        // the shape of an eigenvalue gap near an exceptional point
        let r = minimize(
            |x| (x[0] - 0.5).abs().sqrt() + (x[1] - 0.1).abs(),
            &[0.3, 0.0],
            &[0.05, 0.05],
            SimplexOptions::default(),
        );
        assert!((r.x[0] - 0.5).abs() < 1e-10, "{:?}", r.x);
        assert!((r.x[1] - 0.1).abs() < 1e-8, "{:?}", r.x);
    }

    #[test]
    fn infinite_region_is_avoided() {
        let r = minimize(
            |x| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 0.2).powi(2) },
            &[0.05],
            &[-0.04],
            SimplexOptions::default(),
        );
        assert!((r.x[0] - 0.2).abs() < 1e-7);
    }
}
