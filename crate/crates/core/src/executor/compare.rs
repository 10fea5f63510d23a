use serde::{Deserialize, Serialize};

/// Output-equality policy for stdin/stdout judging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparePolicy {
    /// Trim whitespace at the end of every line and drop trailing blank
    /// lines.
    pub trim_trailing_whitespace: bool,
    pub collapse_internal_runs_of_blank_lines: bool,
    /// Absolute tolerance for tokens that parse as numbers on both sides.
    pub float_tolerance: Option<f64>,
}

impl Default for ComparePolicy {
    fn default() -> Self {
        ComparePolicy {
            trim_trailing_whitespace: true,
            collapse_internal_runs_of_blank_lines: false,
            float_tolerance: None,
        }
    }
}

impl ComparePolicy {
    pub fn exact() -> Self {
        ComparePolicy {
            trim_trailing_whitespace: false,
            collapse_internal_runs_of_blank_lines: false,
            float_tolerance: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.float_tolerance.is_none_or(|t| t >= 0.0)
    }
}

fn normalize<'a>(text: &'a str, policy: &ComparePolicy) -> Vec<&'a str> {
    let mut lines: Vec<&str> = if policy.trim_trailing_whitespace {
        let mut v: Vec<&str> = text.split('\n').map(str::trim_end).collect();
        while v.last().is_some_and(|l| l.is_empty()) {
            v.pop();
        }
        v
    } else {
        text.split('\n').collect()
    };
    if policy.collapse_internal_runs_of_blank_lines {
        let blank = |l: &str| l.trim().is_empty();
        lines.dedup_by(|a, b| blank(a) && blank(b));
    }
    lines
}

fn tokens_match(a: &str, b: &str, tol: f64) -> bool {
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Compares program output against the expected output after applying the
/// policy's normalization.
pub fn compare_output(expected: &str, actual: &str, policy: &ComparePolicy) -> bool {
    let e = normalize(expected, policy);
    let a = normalize(actual, policy);
    match policy.float_tolerance {
        None => e == a,
        Some(tol) => {
            e.len() == a.len()
                && e.iter().zip(&a).all(|(le, la)| {
                    let te: Vec<&str> = le.split_whitespace().collect();
                    let ta: Vec<&str> = la.split_whitespace().collect();
                    te.len() == ta.len() && te.iter().zip(&ta).all(|(x, y)| tokens_match(x, y, tol))
                })
        }
    }
}
