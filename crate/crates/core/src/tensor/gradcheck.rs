//! Central finite-difference verification of tape gradients.

use super::error::TensorError;
use super::params::ParamStore;
use super::tape::{Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Gradients smaller than this are compared on an absolute scale:
    /// `rel = |a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Skip coordinates whose ±step perturbation changes a ReLU or L1 branch,
    /// where the loss is not differentiable.
    pub skip_kinks: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-3,
            skip_kinks: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradcheckReport {
    /// Max relative error per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub worst: Option<GradcheckEntry>,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub error: Option<String>,
    pub passed: bool,
}

fn evaluate<F>(program: &F, store: &ParamStore<f64>) -> Result<(f64, Tape<f64>, Var), TensorError>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let out = program(&mut tape, store)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(TensorError::NonScalarLoss(tape.shape(out).to_vec()));
    }
    Ok((v[0], tape, out))
}

/// Compares analytic gradients of `program` with respect to every tensor in
/// `inputs` against central differences. Failures are reported, never
/// raised.
pub fn gradcheck<F>(inputs: &ParamStore<f64>, program: F, opts: GradcheckOptions) -> GradcheckReport
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var, TensorError>,
{
    let mut report = GradcheckReport::default();
    let fail = |mut r: GradcheckReport, e: TensorError| {
        r.error = Some(e.to_string());
        r.passed = false;
        r
    };

    let mut analytic = inputs.clone();
    analytic.zero_grad();
    let base_sig = match evaluate(&program, inputs) {
        Ok((_, tape, out)) => {
            if let Err(e) = tape.backward_into(out, &mut analytic) {
                return fail(report, e);
            }
            tape.kink_signature()
        }
        Err(e) => return fail(report, e),
    };

    let mut probe = inputs.clone();
    let names: Vec<String> = inputs.names().map(str::to_string).collect();
    for name in names {
        let n = inputs.get(&name).map_or(0, |t| t.numel());
        let zeros = vec![0.0; n];
        let grad = analytic
            .get(&name)
            .and_then(|t| t.grad().map(<[f64]>::to_vec))
            .unwrap_or(zeros);
        let mut param_max = 0.0f64;
        for i in 0..n {
            let orig = inputs.get(&name).unwrap().data()[i];
            let mut eval_at = |v: f64| {
                probe.get_mut(&name).unwrap().data_mut()[i] = v;
                let r = evaluate(&program, &probe).map(|(l, t, _)| (l, t.kink_signature()));
                probe.get_mut(&name).unwrap().data_mut()[i] = orig;
                r
            };
            let (plus, sig_p) = match eval_at(orig + opts.step) {
                Ok(r) => r,
                Err(e) => return fail(report, e),
            };
            let (minus, sig_m) = match eval_at(orig - opts.step) {
                Ok(r) => r,
                Err(e) => return fail(report, e),
            };
            if opts.skip_kinks && (sig_p != base_sig || sig_m != base_sig) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            param_max = param_max.max(rel);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(GradcheckEntry {
                    param: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        report.per_param.push((name, param_max));
    }
    report.passed = report.error.is_none() && report.max_rel_error <= opts.tolerance;
    report
}
