use super::{taylor_step_into, SolveError, StepRecord};

/// Evaluates the step polynomial of `record` at `t` in `[t, t_next]`.
///
/// At `t == t_next` the offset is the step size itself, so the result is
/// bitwise the accepted state.
pub fn dense_eval(record: &StepRecord, t: f64) -> Result<Vec<f64>, SolveError> {
    if !(record.t..=record.t_next).contains(&t) {
        return Err(SolveError::OutOfRange {
            t,
            start: record.t,
            end: record.t_next,
        });
    }
    let theta = if t == record.t_next {
        record.h
    } else {
        t - record.t
    };
    let mut out = vec![0.0; record.coeffs.dim()];
    taylor_step_into(&record.coeffs, record.degree, theta, &mut out);
    Ok(out)
}
