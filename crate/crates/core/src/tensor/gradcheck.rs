use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub epsilon: f64,
    /// Coordinates sampled per parameter; smaller parameters are checked
    /// exhaustively.
    pub samples_per_param: usize,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            samples_per_param: 200,
            floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
    /// Maximum relative error per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError<E> {
    #[error("loss evaluation failed: {0}")]
    Loss(E),
    #[error("closure is nondeterministic: {first} then {second}")]
    Nondeterministic { first: f64, second: f64 },
    #[error("analytic gradients cover {got} parameters, store has {expected}")]
    GradientCount { expected: usize, got: usize },
    #[error("non-finite loss at {name}[{index}]")]
    NonFinite { name: String, index: usize },
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` gradients against central differences of `loss` on a
/// random sample of coordinates of every parameter. Parameters are perturbed
/// in place and restored before returning.
pub fn finite_difference_check<E>(
    params: &mut ParamStore<f64>,
    analytic: &[Vec<f64>],
    config: &GradCheckConfig,
    mut loss: impl FnMut(&ParamStore<f64>) -> Result<f64, E>,
) -> Result<GradCheckReport, GradCheckError<E>> {
    if analytic.len() != params.len() {
        return Err(GradCheckError::GradientCount {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let first = loss(params).map_err(GradCheckError::Loss)?;
    let second = loss(params).map_err(GradCheckError::Loss)?;
    if first.to_bits() != second.to_bits() {
        return Err(GradCheckError::Nondeterministic { first, second });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
        per_param: Vec::with_capacity(params.len()),
    };
    let eps = config.epsilon;
    for (pi, grad) in analytic.iter().enumerate() {
        let id = super::ParamId(pi);
        let len = params.get(id).values.len();
        let name = params.get(id).name.clone();
        let mut coords: Vec<usize> = if len <= config.samples_per_param {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, config.samples_per_param).into_vec()
        };
        coords.sort_unstable();
        let mut worst_here = 0.0f64;
        for index in coords {
            let base = params.get(id).values[index];
            params.get_mut(id).values[index] = base + eps;
            let plus = loss(params);
            params.get_mut(id).values[index] = base - eps;
            let minus = loss(params);
            params.get_mut(id).values[index] = base;
            let (plus, minus) = (
                plus.map_err(GradCheckError::Loss)?,
                minus.map_err(GradCheckError::Loss)?,
            );
            if !plus.is_finite() || !minus.is_finite() {
                return Err(GradCheckError::NonFinite { name, index });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grad[index], numeric, config.floor);
            report.coordinates += 1;
            worst_here = worst_here.max(err);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), index));
            }
        }
        report.per_param.push((name, worst_here));
    }
    Ok(report)
}
