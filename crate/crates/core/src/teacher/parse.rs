use std::sync::OnceLock;

use regex::Regex;

use super::{Result, TeacherError};

/// Floor applied to confidences before taking logs.
pub const CONFIDENCE_EPS: f64 = 1e-6;

fn pair_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?is)"?answer"?\s*[:=]\s*(?:"([^"]*)"|'([^']*)'|([^,\n}"]+?))\s*[,;]?\s*"?confidence"?\s*[:=]\s*"?\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(%)?"#,
        )
        .expect("valid pattern")
    })
}

/// Lowercase, alphanumerics only.
pub fn fold_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Extracts `"answer": ..., "confidence": ...` pairs and maps them onto the
/// class list. Unmatched answers are dropped, repeated classes keep their
/// largest confidence, classes never mentioned get 0, and the vector is
/// renormalized to sum 1. The answer is the argmax (lowest index on ties).
pub fn parse_confidences(raw: &str, class_names: &[String]) -> Result<(usize, Vec<f64>)> {
    let folded: Vec<String> = class_names.iter().map(|c| fold_name(c)).collect();
    let mut conf = vec![0.0; class_names.len()];
    let mut matched = false;
    for cap in pair_pattern().captures_iter(raw) {
        let answer = cap
            .get(1)
            .or_else(|| cap.get(2))
            .or_else(|| cap.get(3))
            .map_or("", |m| m.as_str());
        let Some(class) = folded.iter().position(|c| *c == fold_name(answer)) else {
            continue;
        };
        let Ok(mut value) = cap[4].parse::<f64>() else {
            continue;
        };
        if cap.get(5).is_some() {
            value /= 100.0;
        }
        if !value.is_finite() {
            continue;
        }
        matched = true;
        conf[class] = f64::max(conf[class], value);
    }
    let total: f64 = conf.iter().sum();
    if !matched || total <= 0.0 {
        return Err(TeacherError::ResponseInvalid(format!(
            "no usable answer/confidence pair in {:?}",
            truncate(raw, 200)
        )));
    }
    conf.iter_mut().for_each(|c| *c /= total);
    let answer = argmax(&conf);
    Ok((answer, conf))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `l_j = ln(max(c_j, 1e-6))`, the teacher logits fed to the temperature
/// softmax.
pub fn confidences_to_logits(confidences: &[f64]) -> Vec<f64> {
    confidences
        .iter()
        .map(|c| c.max(CONFIDENCE_EPS).ln())
        .collect()
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
