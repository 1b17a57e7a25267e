//! Bounded derivative-free maximization for the per-distance parameter tuning.
//!
//! The objective (a key rate) has post-selection plateaus and a hard clamp at
//! zero, so gradient methods are out; a Nelder–Mead simplex runs in an
//! unconstrained space obtained by a sigmoid reparameterization of each
//! variable (linear or logarithmic in the original units), which keeps every
//! evaluated point strictly inside its bounds. Multistart initial points come
//! from a Halton sequence with a seeded random shift; starts run independently
//! (possibly in parallel) and the reduction to the winner is order-independent
//! — strict value comparison, ties broken toward lexicographically smaller
//! parameters — so results are identical across thread counts.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// Geometric parameterization; requires positive bounds. Suited to pump
    /// intensities spanning decades.
    Log,
}

#[derive(Debug, Clone)]
pub struct VariableSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl VariableSpec {
    pub fn linear(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            scale: Scale::Linear,
        }
    }

    pub fn log(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            scale: Scale::Log,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo < self.hi
            && (self.scale == Scale::Linear || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "variable {}: bounds [{}, {}] invalid for its scale",
                self.name, self.lo, self.hi
            )))
        }
    }

    /// Unit-interval coordinate → bounded parameter value.
    fn value_at(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.lo + (self.hi - self.lo) * u,
            Scale::Log => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * u).exp(),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

#[derive(Debug, Clone)]
pub struct OptimizationSpec {
    pub variables: Vec<VariableSpec>,
    pub multistarts: usize,
    /// Stop when the simplex's objective spread falls below this…
    pub tol_objective: f64,
    /// …and its coordinate diameter (transformed space) below this.
    pub tol_simplex: f64,
    /// Evaluation budget per start.
    pub max_evals: usize,
    pub seed: u64,
}

impl OptimizationSpec {
    pub fn new(variables: Vec<VariableSpec>, seed: u64) -> Self {
        Self {
            variables,
            multistarts: 8,
            tol_objective: 1e-12,
            tol_simplex: 1e-6,
            max_evals: 4000,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for v in &self.variables {
            v.validate()?;
        }
        if self.multistarts == 0 {
            return Err(Error::InvalidConfig("multistarts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub evaluations: u64,
}

/// `a` wins over `b` on strictly larger value, or on equal value with
/// lexicographically smaller parameters. Associative and commutative, so the
/// multistart reduction does not depend on completion order.
fn better(a: OptimizationResult, b: OptimizationResult) -> OptimizationResult {
    if a.value > b.value {
        let evaluations = a.evaluations + b.evaluations;
        OptimizationResult { evaluations, ..a }
    } else if b.value > a.value {
        let evaluations = a.evaluations + b.evaluations;
        OptimizationResult { evaluations, ..b }
    } else {
        let a_wins = a
            .params
            .iter()
            .zip(b.params.iter())
            .find_map(|(x, y)| {
                if x < y {
                    Some(true)
                } else if x > y {
                    Some(false)
                } else {
                    None
                }
            })
            .unwrap_or(true);
        let evaluations = a.evaluations + b.evaluations;
        if a_wins {
            OptimizationResult { evaluations, ..a }
        } else {
            OptimizationResult { evaluations, ..b }
        }
    }
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut digit_weight = 1.0 / base as f64;
    while index > 0 {
        inv += (index % base) as f64 * digit_weight;
        index /= base;
        digit_weight /= base as f64;
    }
    inv
}

const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Low-discrepancy unit-cube start points with a seeded Cranley–Patterson
/// shift.
pub(crate) fn start_points(spec: &OptimizationSpec) -> Vec<Vec<f64>> {
    let dim = spec.variables.len();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..spec.multistarts)
        .map(|s| {
            (0..dim)
                .map(|d| {
                    let h = radical_inverse(s as u64 + 1, HALTON_BASES[d % HALTON_BASES.len()]);
                    let u = (h + shift[d]).fract();
                    u.clamp(1e-4, 1.0 - 1e-4)
                })
                .collect()
        })
        .collect()
}

struct SingleStart<'a, F> {
    spec: &'a OptimizationSpec,
    objective: &'a F,
    evaluations: u64,
}

impl<'a, F> SingleStart<'a, F>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    fn params(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.spec.variables.iter())
            .map(|(&zi, v)| v.value_at(sigmoid(zi)))
            .collect()
    }

    fn eval(&mut self, z: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        (self.objective)(&self.params(z))
    }

    /// Nelder–Mead ascent from one start point (unit-cube coordinates).
    fn run(&mut self, start: &[f64]) -> Result<(Vec<f64>, f64)> {
        let dim = start.len();
        let z0: Vec<f64> = start.iter().map(|&u| logit(u)).collect();

        // Simplex of (value, point), kept sorted best-first.
        let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
        let f0 = self.eval(&z0)?;
        simplex.push((f0, z0.clone()));
        for d in 0..dim {
            let mut z = z0.clone();
            z[d] += 0.5;
            let f = self.eval(&z)?;
            simplex.push((f, z));
        }
        let sort = |s: &mut Vec<(f64, Vec<f64>)>| {
            s.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite objective"));
        };
        sort(&mut simplex);

        while self.evaluations < self.spec.max_evals as u64 {
            let spread = simplex[0].0 - simplex[dim].0;
            // Diameter measured as a fraction of the parameter box, so
            // coordinates saturating against a bound terminate cleanly.
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(_, z)| {
                    z.iter()
                        .zip(simplex[0].1.iter())
                        .map(|(a, b)| (sigmoid(*a) - sigmoid(*b)).abs())
                })
                .fold(0.0f64, f64::max);
            if spread <= self.spec.tol_objective && diameter <= self.spec.tol_simplex {
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; dim];
            for (_, z) in &simplex[..dim] {
                for (c, zi) in centroid.iter_mut().zip(z.iter()) {
                    *c += zi / dim as f64;
                }
            }
            let worst = simplex[dim].clone();
            let shifted = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(worst.1.iter())
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };

            let reflected = shifted(1.0);
            let f_reflected = self.eval(&reflected)?;
            if f_reflected > simplex[0].0 {
                let expanded = shifted(2.0);
                let f_expanded = self.eval(&expanded)?;
                simplex[dim] = if f_expanded > f_reflected {
                    (f_expanded, expanded)
                } else {
                    (f_reflected, reflected)
                };
            } else if f_reflected > simplex[dim - 1].0 {
                simplex[dim] = (f_reflected, reflected);
            } else {
                let contracted = if f_reflected > worst.0 {
                    shifted(0.5)
                } else {
                    shifted(-0.5)
                };
                let f_contracted = self.eval(&contracted)?;
                if f_contracted > worst.0.max(f_reflected) {
                    simplex[dim] = (f_contracted, contracted);
                } else {
                    // Shrink toward the best vertex.
                    let best = simplex[0].1.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        let z: Vec<f64> = entry
                            .1
                            .iter()
                            .zip(best.iter())
                            .map(|(zi, bi)| bi + 0.5 * (zi - bi))
                            .collect();
                        *entry = (self.eval(&z)?, z);
                    }
                }
            }
            sort(&mut simplex);
        }

        Ok((self.params(&simplex[0].1), simplex[0].0))
    }
}

/// Maximizes the objective inside the variables' bounds box, returning the
/// best point over all multistarts. Deterministic for a fixed problem and
/// seed.
pub fn maximize<F>(spec: &OptimizationSpec, objective: F) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    spec.validate()?;
    if spec.variables.is_empty() {
        let value = objective(&[])?;
        return Ok(OptimizationResult {
            params: Vec::new(),
            value,
            evaluations: 1,
        });
    }
    let starts = start_points(spec);
    let runs: Vec<Result<OptimizationResult>> = par::map_indexed(&starts, |start| {
        let mut state = SingleStart {
            spec,
            objective: &objective,
            evaluations: 0,
        };
        let (params, value) = state.run(start)?;
        Ok(OptimizationResult {
            params,
            value,
            evaluations: state.evaluations,
        })
    });
    let mut best: Option<OptimizationResult> = None;
    for run in runs {
        let run = run?;
        best = Some(match best {
            None => run,
            Some(current) => better(current, run),
        });
    }
    Ok(best.expect("at least one start"))
}

pub const GRID_MAX_VARIABLES: usize = 3;

/// Exhaustive evaluation on a per-variable grid (endpoints included, spaced by
/// each variable's scale); the independent check for [`maximize`]. Limited to
/// three variables.
pub fn grid_oracle<F>(
    spec: &OptimizationSpec,
    resolution: usize,
    objective: F,
) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    spec.validate()?;
    let dim = spec.variables.len();
    if dim > GRID_MAX_VARIABLES {
        return Err(Error::GridTooLarge {
            got: dim,
            max: GRID_MAX_VARIABLES,
        });
    }
    if dim == 0 {
        let value = objective(&[])?;
        return Ok(OptimizationResult {
            params: Vec::new(),
            value,
            evaluations: 1,
        });
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be ≥ 2".into()));
    }
    let total = resolution.pow(dim as u32);
    let runs: Vec<Result<OptimizationResult>> = par::map_range(total, |flat| {
        let mut rem = flat;
        let params: Vec<f64> = spec
            .variables
            .iter()
            .map(|v| {
                let step = rem % resolution;
                rem /= resolution;
                v.value_at(step as f64 / (resolution - 1) as f64)
            })
            .collect();
        let value = objective(&params)?;
        Ok(OptimizationResult {
            params,
            value,
            evaluations: 1,
        })
    });
    let mut best: Option<OptimizationResult> = None;
    for run in runs {
        let run = run?;
        best = Some(match best {
            None => run,
            Some(current) => better(current, run),
        });
    }
    Ok(best.expect("non-empty grid"))
}
