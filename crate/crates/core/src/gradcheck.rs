//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Loss value at a parameter point, optionally with its analytic gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub grads: Option<ParamStore>,
    /// Hash of the on/off pattern of every non-smooth activation.
    pub signature: u64,
    /// Distance of the closest non-smooth activation input from its kink.
    pub kink_margin: f64,
}

impl Evaluation {
    /// A smooth objective: no kinks anywhere.
    pub fn smooth(loss: f64, grads: Option<ParamStore>) -> Self {
        Self {
            loss,
            grads,
            signature: 0,
            kink_margin: f64::INFINITY,
        }
    }
}

pub trait Objective {
    fn evaluate(&self, params: &ParamStore, with_grad: bool) -> Result<Evaluation>;
}

impl<F> Objective for F
where
    F: Fn(&ParamStore, bool) -> Result<Evaluation>,
{
    fn evaluate(&self, params: &ParamStore, with_grad: bool) -> Result<Evaluation> {
        self(params, with_grad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step `h`.
    pub step: f64,
    /// Denominator floor for relative error so that two near-zero values
    /// compare by absolute difference.
    pub abs_floor: f64,
    /// Base points with an activation closer than this to a kink are rejected.
    pub kink_tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            abs_floor: 1e-8,
            kink_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Entries whose ±h perturbation flipped an activation.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub base_kink_margin: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped).sum()
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of `objective` at `params` with
/// `(loss(p+h) − loss(p−h)) / 2h` for every parameter entry.
///
/// Entries where either perturbation changes the activation pattern are
/// counted as skipped. A base point that itself sits within
/// `kink_tolerance` of a kink is rejected with [`Error::Config`]; use
/// [`grad_check_resampled`] to draw a fresh point instead.
pub fn grad_check(
    objective: &impl Objective,
    params: &ParamStore,
    config: GradCheckConfig,
) -> Result<GradCheckReport> {
    if config.step <= 0.0 {
        return Err(Error::Config(format!("step must be > 0, got {}", config.step)));
    }
    let base = objective.evaluate(params, true)?;
    if !base.loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {} at base point", base.loss)));
    }
    if base.kink_margin < config.kink_tolerance {
        return Err(Error::Config(format!(
            "base point within {:e} of an activation kink",
            base.kink_margin
        )));
    }
    let analytic = base
        .grads
        .ok_or_else(|| Error::Config("objective returned no gradient".into()))?;
    params.check_compatible(&analytic)?;

    let mut probe = params.clone();
    let mut reports = Vec::with_capacity(params.len());
    for (name, value) in params.iter() {
        let mut report = ParamCheck {
            name: name.to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        let grad = analytic.expect(name)?;
        for idx in 0..value.len() {
            let original = value.data()[idx];
            let eval_at = |probe: &mut ParamStore, x: f64| -> Result<Evaluation> {
                probe.get_mut(name).expect("probe mirrors params").data_mut()[idx] = x;
                objective.evaluate(probe, false)
            };
            let plus = eval_at(&mut probe, original + config.step)?;
            let minus = eval_at(&mut probe, original - config.step)?;
            probe.get_mut(name).expect("probe mirrors params").data_mut()[idx] = original;
            if !plus.loss.is_finite() || !minus.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing `{name}`[{idx}]")));
            }
            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * config.step);
            let a = grad.data()[idx];
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            report.max_rel_error = report
                .max_rel_error
                .max(relative_error(a, numeric, config.abs_floor));
            report.checked += 1;
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        params: reports,
        base_kink_margin: base.kink_margin,
    })
}

/// Draws parameter points from `sample(seed)` for successive seeds until one
/// lies at least `kink_tolerance` away from every kink, then checks it.
pub fn grad_check_resampled(
    objective: &impl Objective,
    sample: impl Fn(u64) -> Result<ParamStore>,
    first_seed: u64,
    max_attempts: usize,
    config: GradCheckConfig,
) -> Result<(u64, GradCheckReport)> {
    for seed in first_seed..first_seed + max_attempts as u64 {
        let params = sample(seed)?;
        let base = objective.evaluate(&params, false)?;
        if base.kink_margin < config.kink_tolerance {
            continue;
        }
        return grad_check(objective, &params, config).map(|r| (seed, r));
    }
    Err(Error::Config(format!(
        "no kink-free point found in {max_attempts} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::tape::Tape;

    fn two_by_two() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::from_rows(&[[0.3, -1.2], [2.5, 0.7]])).unwrap();
        p
    }

    #[test]
    fn quadratic_matches_to_rounding() {
        let objective = |p: &ParamStore, with_grad: bool| -> Result<Evaluation> {
            let mut t = Tape::new();
            let w = t.param("w", p.expect("w")?.clone());
            let l = t.sum_squares(w);
            let grads = if with_grad {
                Some(t.param_grads(&t.backward(l)?, p)?)
            } else {
                None
            };
            Ok(Evaluation::smooth(t.scalar(l), grads))
        };
        let report = grad_check(&objective, &two_by_two(), GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error() < 1e-8, "{report:?}");
        assert_eq!(report.checked(), 4);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let objective = |p: &ParamStore, with_grad: bool| -> Result<Evaluation> {
            Ok(Evaluation::smooth(3.5, with_grad.then(|| p.zeros_like())))
        };
        let report = grad_check(&objective, &two_by_two(), GradCheckConfig::default()).unwrap();
        assert!(report.params[0].max_abs_error < 1e-9);
    }

    #[test]
    fn detects_wrong_gradient() {
        let objective = |p: &ParamStore, with_grad: bool| -> Result<Evaluation> {
            let w = p.expect("w")?;
            Ok(Evaluation::smooth(
                w.sum_squares(),
                with_grad.then(|| {
                    let mut g = p.zeros_like();
                    g.set("w", w.clone()).unwrap(); // missing the factor 2
                    g
                }),
            ))
        };
        let report = grad_check(&objective, &two_by_two(), GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error() > 0.4);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let objective = |p: &ParamStore, with_grad: bool| -> Result<Evaluation> {
            Ok(Evaluation::smooth(f64::NAN, with_grad.then(|| p.zeros_like())))
        };
        assert!(matches!(
            grad_check(&objective, &two_by_two(), GradCheckConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn relu_kinks_are_skipped_or_resampled() {
        let objective = |p: &ParamStore, with_grad: bool| -> Result<Evaluation> {
            let mut t = Tape::new();
            let w = t.param("w", p.expect("w")?.clone());
            let r = t.relu(w);
            let l = t.sum_squares(r);
            let grads = if with_grad {
                Some(t.param_grads(&t.backward(l)?, p)?)
            } else {
                None
            };
            Ok(Evaluation {
                loss: t.scalar(l),
                grads,
                signature: t.activation_signature(),
                kink_margin: t.kink_margin(),
            })
        };
        let mut near = ParamStore::new();
        near.insert("w", Matrix::from_rows(&[[1.0, 5e-5]])).unwrap();
        let report = grad_check(&objective, &near, GradCheckConfig::default()).unwrap();
        assert_eq!(report.skipped(), 1);
        assert_eq!(report.checked(), 1);

        let mut on = ParamStore::new();
        on.insert("w", Matrix::from_rows(&[[1.0, 1e-9]])).unwrap();
        assert!(grad_check(&objective, &on, GradCheckConfig::default()).is_err());

        let (seed, report) = grad_check_resampled(
            &objective,
            |seed| {
                let mut p = ParamStore::new();
                let v = if seed == 0 { 0.0 } else { 0.5 };
                p.insert("w", Matrix::from_rows(&[[1.0, v]]))?;
                Ok(p)
            },
            0,
            5,
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(seed, 1);
        assert!(report.max_rel_error() < 1e-8);
    }
}
