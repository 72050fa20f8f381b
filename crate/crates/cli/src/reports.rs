//! JSON reports for `verify`, `saddle-report` and `adversarial`.

use serde::Serialize;
use ssmlab::analysis::find_saddle;
use ssmlab::data::{adversarial_zero_loss, chebyshev_nodes, vandermonde_condition, DEFAULT_NODE_RADIUS};
use ssmlab::ssm::generalization_error;
use ssmlab::verify::{run_suite, vandermonde_teacher, Suite, SuiteReport};
use ssmlab::Saddle;

use crate::error::CliError;

/// Runs a suite; a report with failed checks is still returned so it can be
/// printed before exiting with code 3.
pub fn verify(suite: Suite, seed: u64) -> Result<SuiteReport, CliError> {
    Ok(run_suite(suite, seed)?)
}

pub fn saddle_report(d: usize, l: usize) -> Result<Saddle, CliError> {
    Ok(find_saddle(d, l)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialReport {
    pub kappa: usize,
    pub d: usize,
    pub eps: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub condition_estimate: f64,
    /// `max_{k < kappa}` deviation from the teacher's impulse response.
    pub prefix_error: f64,
    /// `max_{k < kappa+1}` deviation; equals `eps` up to roundoff.
    pub gen_error_kappa_plus_1: f64,
}

/// Zero-loss, non-generalizing student on Chebyshev nodes against the
/// teacher `(1, 1, 1)`.
pub fn adversarial(kappa: usize, d: usize, eps: f64) -> Result<AdversarialReport, CliError> {
    let teacher = vandermonde_teacher();
    let nodes = chebyshev_nodes(d, DEFAULT_NODE_RADIUS);
    let student = adversarial_zero_loss(&teacher, kappa, d, eps, &nodes)?;
    Ok(AdversarialReport {
        kappa,
        d,
        eps,
        a: student.a().to_vec(),
        b: student.b().to_vec(),
        c: student.c().to_vec(),
        condition_estimate: vandermonde_condition(&nodes)?,
        prefix_error: generalization_error(&student, &teacher, kappa),
        gen_error_kappa_plus_1: generalization_error(&student, &teacher, kappa + 1),
    })
}
