//! Nelder-Mead downhill simplex minimizer over an unconstrained space.
//! Used by the calibration module, which maps the search space onto valid
//! rate parameters through a total transform.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub max_iters: usize,
    /// Converged when the simplex diameter (max coordinate spread) drops
    /// below this.
    pub diameter_tol: f64,
    /// Early stop once the best value is at or below this floor.
    pub fx_floor: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_iters: 2000,
            diameter_tol: 1e-9,
            fx_floor: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iters: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` starting from `x0`, with an initial simplex of `x0` plus
/// one vertex per coordinate offset by `step`.
pub(crate) fn minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: f64,
    opts: &Options,
) -> Outcome {
    let dim = x0.len();
    assert!(dim > 0, "cannot minimize over zero dimensions");

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        iters += 1;

        // Order vertices best-first.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        if values[best] <= opts.fx_floor || diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; dim];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(v.iter()) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let reflected = blend(&centroid, &simplex[worst], -REFLECT);
        let f_reflected = f(&reflected);

        if f_reflected < values[best] {
            let expanded = blend(&centroid, &simplex[worst], -EXPAND);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let (candidate, f_candidate) = if f_reflected < values[worst] {
                let outside = blend(&centroid, &simplex[worst], -CONTRACT);
                let fx = f(&outside);
                (outside, fx)
            } else {
                let inside = blend(&centroid, &simplex[worst], CONTRACT);
                let fx = f(&inside);
                (inside, fx)
            };
            if f_candidate < values[worst].min(f_reflected) {
                simplex[worst] = candidate;
                values[worst] = f_candidate;
            } else {
                // Shrink everything toward the best vertex.
                let best_point = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx == best {
                        continue;
                    }
                    for (x, bx) in v.iter_mut().zip(best_point.iter()) {
                        *x = bx + SHRINK * (*x - bx);
                    }
                    values[idx] = f(v);
                }
            }
        }
    }

    let best = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    Outcome {
        x: simplex[best].clone(),
        fx: values[best],
        iters,
        converged,
    }
}

/// centroid + coeff * (worst - centroid); negative coeff reflects through
/// the centroid.
fn blend(centroid: &[f64], worst: &[f64], coeff: f64) -> Vec<f64> {
    centroid
        .iter()
        .zip(worst.iter())
        .map(|(c, w)| c + coeff * (w - c))
        .collect()
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let first = &simplex[0];
    let mut max = 0.0f64;
    for v in &simplex[1..] {
        for (a, b) in v.iter().zip(first.iter()) {
            max = max.max((a - b).abs());
        }
    }
    max
}
