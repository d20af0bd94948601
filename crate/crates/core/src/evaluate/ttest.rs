use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::EvaluateError;

/// Two-tailed critical values of Student's t, df 1..=120, rounded to three
/// decimals.
const TABLE: &str = include_str!("../../data/t_critical.csv");

fn table() -> &'static [(f64, f64)] {
    static PARSED: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    PARSED.get_or_init(|| {
        TABLE
            .lines()
            .skip(1)
            .enumerate()
            .map(|(i, line)| {
                let cols: Vec<&str> = line.split(',').collect();
                assert_eq!(cols[0].parse::<usize>().ok(), Some(i + 1), "t table row {i}");
                (cols[1].parse().expect("t table"), cols[2].parse().expect("t table"))
            })
            .collect()
    })
}

/// Two-tailed critical value for `df` degrees of freedom. Above 120 the
/// df = 120 row is used, which is slightly conservative.
pub fn critical_value(df: usize, alpha: f64) -> Result<f64, EvaluateError> {
    let t = table();
    let row = t[df.clamp(1, t.len()) - 1];
    if alpha == 0.05 {
        Ok(row.0)
    } else if alpha == 0.01 {
        Ok(row.1)
    } else {
        Err(EvaluateError::UnsupportedAlpha(alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub n: usize,
    pub sample_mean: f64,
    pub sample_stddev: f64,
    pub mu0: f64,
    /// May be infinite when the sample has zero variance.
    #[serde(with = "extended_f64")]
    pub t_statistic: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub reject_null: bool,
}

/// JSON has no infinities; they are written as strings.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            Repr::Num(*x)
        } else {
            Repr::Text(x.to_string())
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `t = (mean − mu0) / (s/√n)`, sample standard deviation with `n − 1`.
/// With zero variance, t is 0 when the mean equals `mu0` and ±∞ otherwise.
pub fn one_sample_ttest(values: &[f64], mu0: f64, alpha: f64) -> Result<TTestResult, EvaluateError> {
    let n = values.len();
    if n < 2 {
        return Err(EvaluateError::TooFewValues(n));
    }
    let critical = critical_value(n - 1, alpha)?;
    let mean = values.iter().sum::<f64>() / n as f64;
    // Constant samples get exactly zero spread; the mean can round away from
    // the common value.
    let s = if values.iter().all(|&x| x == values[0]) {
        0.0
    } else {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let diff = if s == 0.0 { values[0] - mu0 } else { mean - mu0 };
    let t = if s > 0.0 {
        diff / (s / (n as f64).sqrt())
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(TTestResult {
        n,
        sample_mean: mean,
        sample_stddev: s,
        mu0,
        t_statistic: t,
        alpha,
        critical_value: critical,
        reject_null: t.abs() > critical,
    })
}
