use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    /// Pooled-variance Student's t.
    #[default]
    StudentT,
    /// Unequal-variance t with Welch-Satterthwaite degrees of freedom.
    WelchT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-sided p-value of `t` under Student's t with `df` degrees of freedom:
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Independent two-sample Student's t-test with pooled variance.
pub fn two_sample_ttest(a: &[f64], b: &[f64]) -> Result<TestResult, EvalError> {
    two_sample_ttest_with(a, b, TestMethod::StudentT)
}

pub fn two_sample_ttest_with(
    a: &[f64],
    b: &[f64],
    method: TestMethod,
) -> Result<TestResult, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (se2, df) = match method {
        TestMethod::StudentT => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (pooled * (1.0 / na + 1.0 / nb), df)
        }
        TestMethod::WelchT => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (se2, df)
        }
    };
    if se2 <= 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let t = (ma - mb) / se2.sqrt();
    Ok(TestResult {
        statistic: t,
        degrees_of_freedom: df,
        p_value: two_sided_p(t, df),
        method,
    })
}
