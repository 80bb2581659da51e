//! Run reports: the JSON schema and the human-readable summary.

use serde::{Serialize, Serializer};
use sgcheck::{Value, Values};

/// A probability, reward or pair of them. Infinite rewards serialize as
/// the string `"inf"`, which JSON numbers cannot express.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number(pub f64);

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReportValue {
    Scalar(Number),
    Pair([Number; 2]),
}

impl From<Value> for ReportValue {
    fn from(v: Value) -> Self {
        match v {
            Value::Scalar(x) => ReportValue::Scalar(Number(x)),
            Value::Pair(a, b) => ReportValue::Pair([Number(a), Number(b)]),
        }
    }
}

pub fn per_state(values: &Values) -> Vec<ReportValue> {
    match values {
        Values::Scalar(v) => v.iter().map(|&x| ReportValue::Scalar(Number(x))).collect(),
        Values::Pair(v) => v
            .iter()
            .map(|&(a, b)| ReportValue::Pair([Number(a), Number(b)]))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub gaps: [Number; 2],
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub value: Option<ReportValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfied: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_state: Option<Vec<ReportValue>>,
    pub iterations: usize,
    pub residual: Option<Number>,
    pub converged: bool,
    pub time_ms: f64,
    pub strategy_files: Vec<String>,
    pub certificate: Option<CertificateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    pub fn failed(query: String, error: String, time_ms: f64) -> Self {
        RunReport {
            query,
            mode: None,
            value: None,
            satisfied: None,
            per_state: None,
            iterations: 0,
            residual: None,
            converged: false,
            time_ms,
            strategy_files: Vec::new(),
            certificate: None,
            error: Some(error),
        }
    }
}

fn fmt_number(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.6}")
    }
}

fn fmt_value(v: &ReportValue) -> String {
    match v {
        ReportValue::Scalar(x) => fmt_number(x.0),
        ReportValue::Pair([a, b]) => format!("({}, {})", fmt_number(a.0), fmt_number(b.0)),
    }
}

/// Human summary of one run, values to six decimals.
pub fn human(r: &RunReport) -> String {
    let mut out = format!("{}\n", r.query);
    if let Some(e) = &r.error {
        out.push_str(&format!("  error: {e}\n"));
        return out;
    }
    if let Some(v) = &r.value {
        let mode = r.mode.as_deref().unwrap_or("");
        out.push_str(&format!("  value: {} ({mode})\n", fmt_value(v)));
    }
    if let Some(ok) = r.satisfied {
        out.push_str(&format!(
            "  result: {}\n",
            if ok { "satisfied" } else { "not satisfied" }
        ));
    }
    out.push_str(&format!(
        "  iterations: {}, residual: {:.1e}, time: {:.1} ms\n",
        r.iterations,
        r.residual.map_or(0.0, |x| x.0),
        r.time_ms
    ));
    if let Some(c) = &r.certificate {
        out.push_str(&format!(
            "  certificate: {} (gaps {:.1e}, {:.1e})\n",
            if c.pass { "pass" } else { "FAIL" },
            c.gaps[0].0,
            c.gaps[1].0
        ));
    }
    if let Some(states) = &r.per_state {
        for (s, v) in states.iter().enumerate() {
            out.push_str(&format!("  state {s}: {}\n", fmt_value(v)));
        }
    }
    for f in &r.strategy_files {
        out.push_str(&format!("  strategy: {f}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_is_a_string() {
        let v = serde_json::to_string(&ReportValue::from(Value::Scalar(f64::INFINITY))).unwrap();
        assert_eq!(v, "\"inf\"");
        let p = serde_json::to_string(&ReportValue::from(Value::Pair(0.25, 1.0))).unwrap();
        assert_eq!(p, "[0.25,1.0]");
    }

    #[test]
    fn human_uses_six_decimals() {
        let mut r = RunReport::failed("q".into(), String::new(), 0.0);
        r.error = None;
        r.value = Some(ReportValue::from(Value::Scalar(1.0 / 3.0)));
        assert!(human(&r).contains("value: 0.333333 "));
    }
}
