use super::tensor::ParameterSet;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Denominator floor in the relative error, so coordinates whose true
/// gradient is ~0 are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `loss` with step `h`
/// over every coordinate of every parameter. `loss` must be deterministic.
pub fn grad_check<F>(params: &ParameterSet, analytic: &ParameterSet, h: f64, loss: F) -> GradCheckReport
where
    F: FnMut(&ParameterSet) -> f64,
{
    grad_check_filtered(params, analytic, h, loss, |_, _| true)
}

/// As [`grad_check`], restricted to coordinates for which `include(name, index)` holds.
pub fn grad_check_filtered<F, I>(
    params: &ParameterSet,
    analytic: &ParameterSet,
    h: f64,
    mut loss: F,
    mut include: I,
) -> GradCheckReport
where
    F: FnMut(&ParameterSet) -> f64,
    I: FnMut(&str, usize) -> bool,
{
    assert!(params.same_layout(analytic), "gradient layout differs from parameters");
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for t in 0..params.len() {
        let name = params.names()[t].clone();
        for i in 0..params.tensors()[t].len() {
            if !include(&name, i) {
                continue;
            }
            let original = params.tensors()[t].data()[i];
            work.tensors_mut()[t].data_mut()[i] = original + h;
            let plus = loss(&work);
            work.tensors_mut()[t].data_mut()[i] = original - h;
            let minus = loss(&work);
            work.tensors_mut()[t].data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.tensors()[t].data()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}
