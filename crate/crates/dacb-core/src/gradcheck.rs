//! Finite-difference verification of backward rules.
//!
//! A layer's analytic gradient is compared against central differences of a
//! scalar probe loss L(x) = <w, f(x)> with fixed random probe weights w.
//! Probes are taken at randomly chosen coordinates of the inputs and the
//! parameters. The reported figure is the maximum relative error
//! |a - n| / max(|a|, |n|, floor) over all probes.
//!
//! Networks with ReLU and max-pool are only piecewise smooth; a probe whose
//! +-h interval straddles a kink measures a secant, not a derivative. Each
//! probe therefore computes secants at h and h/2: on a smooth stretch they
//! agree to O(h^2), at a kink they differ grossly, and such probes are
//! skipped (counted in the report). A wrong backward rule is never masked
//! by this, because its secants agree with each other while disagreeing
//! with the analytic value.

use crate::error::{Error, Result};
use crate::layer::LayerNode;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum acceptable relative error.
    pub tolerance: f64,
    /// Number of probed coordinates per tensor.
    pub probes: usize,
    /// Scale floor in the relative-error denominator, guarding
    /// near-zero gradients.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            probes: 24,
            floor: 1e-6,
            seed: 0x6772_6164,
        }
    }
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Probes measured on smooth stretches.
    pub probes: usize,
    /// Probes discarded because the FD interval straddled a kink.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Secants at h and h/2 disagreeing by more than this (relative) mark a
/// non-smooth coordinate. On smooth stretches the two secants agree to
/// roughly 1e-9 relative (truncation plus roundoff), so this threshold
/// separates kink contamination from measurement noise by four orders of
/// magnitude while staying below the tolerances being certified.
const KINK_REL: f64 = 1e-5;

fn is_kink(n_h: f64, n_h2: f64, floor: f64) -> bool {
    (n_h - n_h2).abs() / n_h.abs().max(n_h2.abs()).max(floor) > KINK_REL
}

/// Check one layer's backward rule against central differences, probing
/// both input coordinates and parameter coordinates.
pub fn grad_check(
    layer: &mut (dyn LayerNode + '_),
    inputs: &[&Tensor],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if cfg.step <= 0.0 || cfg.tolerance <= 0.0 {
        return Err(Error::Config("grad check: step and tolerance must be positive".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let out = layer.forward(inputs)?;
    out.check_finite("grad check forward")?;
    let probe = Tensor::from_fn(out.dims(), |_| rng.uniform(-1.0, 1.0));

    let grads = layer.backward(inputs, &probe)?;
    for t in grads.inputs.iter().chain(grads.params.iter()) {
        t.check_finite("grad check backward")?;
    }

    let mut max_err: f64 = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    let mut owned: Vec<Tensor> = inputs.iter().map(|t| (*t).clone()).collect();

    // Input coordinates.
    for which in 0..owned.len() {
        for _ in 0..cfg.probes {
            let at = rng.below(owned[which].len());
            let orig = owned[which].data()[at];
            let mut eval = |v: f64, owned: &mut Vec<Tensor>| -> Result<f64> {
                owned[which].data_mut()[at] = v;
                let refs: Vec<&Tensor> = owned.iter().collect();
                layer.forward(&refs)?.dot(&probe)
            };
            let up = eval(orig + cfg.step, &mut owned)?;
            let down = eval(orig - cfg.step, &mut owned)?;
            let up2 = eval(orig + cfg.step / 2.0, &mut owned)?;
            let down2 = eval(orig - cfg.step / 2.0, &mut owned)?;
            owned[which].data_mut()[at] = orig;
            let n_h = (up - down) / (2.0 * cfg.step);
            let n_h2 = (up2 - down2) / cfg.step;
            if is_kink(n_h, n_h2, cfg.floor) {
                skipped += 1;
                continue;
            }
            used += 1;
            let analytic = grads.inputs[which].data()[at];
            max_err = max_err.max(rel_err(analytic, n_h, cfg.floor));
        }
    }

    // Parameter coordinates.
    let n_params = layer.params().len();
    for which in 0..n_params {
        let len = layer.params()[which].len();
        for _ in 0..cfg.probes {
            let at = rng.below(len);
            let orig = layer.params()[which].data()[at];
            let mut eval = |v: f64| -> Result<f64> {
                layer.params_mut()[which].data_mut()[at] = v;
                let refs: Vec<&Tensor> = owned.iter().collect();
                layer.forward(&refs)?.dot(&probe)
            };
            let up = eval(orig + cfg.step)?;
            let down = eval(orig - cfg.step)?;
            let up2 = eval(orig + cfg.step / 2.0)?;
            let down2 = eval(orig - cfg.step / 2.0)?;
            layer.params_mut()[which].data_mut()[at] = orig;
            let n_h = (up - down) / (2.0 * cfg.step);
            let n_h2 = (up2 - down2) / cfg.step;
            if is_kink(n_h, n_h2, cfg.floor) {
                skipped += 1;
                continue;
            }
            used += 1;
            let analytic = grads.params[which].data()[at];
            max_err = max_err.max(rel_err(analytic, n_h, cfg.floor));
        }
    }

    Ok(GradCheckReport {
        max_rel_err: max_err,
        probes: used,
        skipped,
        tolerance: cfg.tolerance,
    })
}

/// Gradient-check an arbitrary scalar-valued function pair: `f` evaluates
/// the objective, `g` returns the analytic gradient of the same objective
/// w.r.t. the probed tensor. Used for losses and whole models.
pub fn grad_check_fn(
    x: &Tensor,
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    g: &mut dyn FnMut(&Tensor) -> Result<Tensor>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = Rng::new(cfg.seed);
    let analytic = g(x)?;
    let mut probe_x = x.clone();
    let mut max_err: f64 = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for _ in 0..cfg.probes {
        let at = rng.below(x.len());
        let orig = probe_x.data()[at];
        let mut eval = |v: f64, t: &mut Tensor| -> Result<f64> {
            t.data_mut()[at] = v;
            f(t)
        };
        let up = eval(orig + cfg.step, &mut probe_x)?;
        let down = eval(orig - cfg.step, &mut probe_x)?;
        let up2 = eval(orig + cfg.step / 2.0, &mut probe_x)?;
        let down2 = eval(orig - cfg.step / 2.0, &mut probe_x)?;
        probe_x.data_mut()[at] = orig;
        let n_h = (up - down) / (2.0 * cfg.step);
        let n_h2 = (up2 - down2) / cfg.step;
        if is_kink(n_h, n_h2, cfg.floor) {
            skipped += 1;
            continue;
        }
        used += 1;
        max_err = max_err.max(rel_err(analytic.data()[at], n_h, cfg.floor));
    }
    Ok(GradCheckReport {
        max_rel_err: max_err,
        probes: used,
        skipped,
        tolerance: cfg.tolerance,
    })
}
